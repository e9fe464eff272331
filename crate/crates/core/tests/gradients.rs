//! Finite-difference checks of every analytic gradient.

use hicu::hyperbolic::edge_loss;
use hicu::loss::{asl, bce, AslConfig, Loss};
use hicu::network::{backward, forward, model_tensors_mut, Correction, CorrectionMode, DecoderParams, EncoderParams, Model};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = scale(analytic).max(scale(numeric));
    if denom < 1e-10 {
        diff
    } else {
        diff / denom
    }
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn uniform_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-bound..bound))
}

fn ball_rows(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = uniform_matrix(r, rows, cols, 1.0);
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        let target = r.gen_range(0.05..0.85);
        row *= target / norm.max(1e-12);
    }
    m
}

struct Instance {
    model: Model,
    tokens: Vec<usize>,
    e_h: Option<Array2<f64>>,
    upstream: Vec<f64>,
}

fn instance(seed: u64, mode: CorrectionMode) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let vocab = r.gen_range(3..7);
    let d_e = r.gen_range(1..4);
    let d_f = r.gen_range(1..5);
    let l = r.gen_range(1..4);
    let n = r.gen_range(1..7);
    let d_h = r.gen_range(1..4);
    let width = [1, 3, 5][r.gen_range(0..3)];
    let embedding = uniform_matrix(&mut r, vocab, d_e, 1.0);
    let mut encoder = EncoderParams::new(embedding, width, d_f, true, &mut r).unwrap();
    encoder.bias = Array1::from_shape_simple_fn(d_f, || r.gen_range(-0.5..0.5));
    let correction = match mode {
        CorrectionMode::None => Correction::none(),
        m => {
            let mut c = Correction::xavier(m, d_f, d_h, &mut r);
            c.bias = Array1::from_shape_simple_fn(d_f, || r.gen_range(-0.5..0.5));
            c
        }
    };
    let decoder = DecoderParams {
        q: uniform_matrix(&mut r, d_f, l, 1.5),
        w: uniform_matrix(&mut r, d_f, l, 1.0),
        b: Array1::from_shape_simple_fn(l, || r.gen_range(-0.5..0.5)),
        correction,
    };
    let tokens = (0..n).map(|_| r.gen_range(0..vocab)).collect();
    let e_h = (mode != CorrectionMode::None).then(|| ball_rows(&mut r, l, d_h));
    let upstream = (0..l).map(|_| r.gen_range(-1.0..1.0)).collect();
    Instance {
        model: Model { encoder, decoder },
        tokens,
        e_h,
        upstream,
    }
}

/// Σ upstream · logits, whose gradient in the logits is `upstream`.
fn probe(inst: &Instance, model: &Model) -> f64 {
    let (_, trace) = forward(&inst.tokens, model, inst.e_h.as_ref()).unwrap();
    trace.logits.iter().zip(&inst.upstream).map(|(z, g)| z * g).sum()
}

fn numeric_grad(inst: &Instance, name: &str) -> Vec<f64> {
    let mut model = inst.model.clone();
    let len = model_tensors_mut(&mut model).into_iter().find(|(n, _)| *n == name).unwrap().1.len();
    (0..len)
        .map(|j| {
            central(
                |x| {
                    let mut m = inst.model.clone();
                    for (n, t) in model_tensors_mut(&mut m) {
                        if n == name {
                            t[j] = x;
                        }
                    }
                    probe(inst, &m)
                },
                {
                    let mut m = inst.model.clone();
                    let v = model_tensors_mut(&mut m).into_iter().find(|(n, _)| *n == name).unwrap().1[j];
                    v
                },
            )
        })
        .collect()
}

fn check_tensors(mode: CorrectionMode, names: &[&str]) {
    for seed in 0..INSTANCES {
        let inst = instance(seed * 31 + mode as u64, mode);
        let (_, trace) = forward(&inst.tokens, &inst.model, inst.e_h.as_ref()).unwrap();
        let grads = backward(&trace, &inst.model, &inst.upstream).unwrap();
        let analytic: Vec<(&str, Vec<f64>)> = grads.tensors().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
        for name in names {
            let a = &analytic.iter().find(|(n, _)| n == name).unwrap().1;
            let num = numeric_grad(&inst, name);
            let e = rel_err(a, &num);
            assert!(e < TOL, "{name} (mode {mode:?}, instance {seed}): relative error {e:e}");
        }
    }
}

#[test]
fn encoder_gradients() {
    check_tensors(CorrectionMode::None, &["encoder.embedding", "encoder.kernel", "encoder.bias"]);
}

#[test]
fn decoder_gradients() {
    check_tensors(CorrectionMode::None, &["decoder.q", "decoder.w", "decoder.b"]);
}

#[test]
fn add_correction_gradients() {
    check_tensors(
        CorrectionMode::Add,
        &["decoder.q", "decoder.fc.weight", "decoder.fc.bias", "encoder.kernel"],
    );
}

#[test]
fn concat_correction_gradients() {
    check_tensors(
        CorrectionMode::Concat,
        &["decoder.q", "decoder.fc.weight", "decoder.fc.bias", "encoder.embedding"],
    );
}

#[test]
fn end_to_end_through_loss() {
    for seed in 0..INSTANCES {
        let inst = instance(1000 + seed, CorrectionMode::Add);
        let l = inst.model.decoder.labels();
        let targets: Vec<f64> = (0..l).map(|i| ((seed as usize + i) % 2) as f64).collect();
        let loss = Loss::Asl(AslConfig::default());
        let objective = |m: &Model| {
            let (_, t) = forward(&inst.tokens, m, inst.e_h.as_ref()).unwrap();
            loss.evaluate(t.logits.as_slice().unwrap(), &targets).unwrap().0
        };
        let (_, trace) = forward(&inst.tokens, &inst.model, inst.e_h.as_ref()).unwrap();
        let (_, dlogits) = loss.evaluate(trace.logits.as_slice().unwrap(), &targets).unwrap();
        let grads = backward(&trace, &inst.model, &dlogits).unwrap();
        for (name, a) in grads.tensors() {
            let mut base = inst.model.clone();
            let values = model_tensors_mut(&mut base).into_iter().find(|(n, _)| *n == name).unwrap().1.to_vec();
            let num: Vec<f64> = values
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    central(
                        |x| {
                            let mut m = inst.model.clone();
                            for (n, t) in model_tensors_mut(&mut m) {
                                if n == name {
                                    t[j] = x;
                                }
                            }
                            objective(&m)
                        },
                        v,
                    )
                })
                .collect();
            let e = rel_err(a, &num);
            assert!(e < TOL, "{name} instance {seed}: relative error {e:e}");
        }
    }
}

fn loss_fd(f: impl Fn(&[f64]) -> (f64, Vec<f64>), z: &[f64]) -> f64 {
    let (_, g) = f(z);
    let num: Vec<f64> = (0..z.len())
        .map(|i| {
            central(
                |x| {
                    let mut zz = z.to_vec();
                    zz[i] = x;
                    f(&zz).0
                },
                z[i],
            )
        })
        .collect();
    rel_err(&g, &num)
}

#[test]
fn bce_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for i in 0..INSTANCES {
        let n = r.gen_range(1..6);
        let z: Vec<f64> = (0..n).map(|_| r.gen_range(-8.0..8.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(0..2) as f64).collect();
        let e = loss_fd(|zz| bce(zz, &y).unwrap(), &z);
        assert!(e < TOL, "instance {i}: {e:e}");
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn asl_gradient_both_sides_of_the_margin() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for i in 0..INSTANCES {
        let cfg = AslConfig {
            gamma_pos: r.gen_range(0.0..3.0),
            gamma_neg: r.gen_range(0.0..4.0),
            margin: r.gen_range(0.01..0.2),
            ..AslConfig::default()
        };
        for above in [true, false] {
            let n = r.gen_range(1..6);
            let y: Vec<f64> = (0..n).map(|j| if j == 0 { 0.0 } else { r.gen_range(0..2) as f64 }).collect();
            let z: Vec<f64> = (0..n)
                .map(|j| {
                    if y[j] == 0.0 {
                        // negatives sit at least 1e-4 away from p = m, on the chosen side
                        let gap = r.gen_range(1e-4..0.3);
                        let p = if above {
                            (cfg.margin + gap).min(0.999)
                        } else {
                            (cfg.margin - gap * cfg.margin).max(1e-4)
                        };
                        logit(p)
                    } else {
                        r.gen_range(-6.0..6.0)
                    }
                })
                .collect();
            let e = loss_fd(|zz| asl(zz, &y, &cfg).unwrap(), &z);
            assert!(e < TOL, "instance {i} above={above}: {e:e}");
        }
    }
}

#[test]
fn poincare_edge_loss_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for i in 0..INSTANCES {
        let d = r.gen_range(2..5);
        let k = r.gen_range(1..5);
        let pts = ball_rows(&mut r, k + 2, d);
        let center = pts.row(0).to_vec();
        let targets: Vec<Vec<f64>> = (1..k + 2).map(|j| pts.row(j).to_vec()).collect();
        // the last negative doubles as the self-negative fallback in odd instances
        let mut is_self = vec![false; targets.len()];
        if i % 2 == 1 {
            *is_self.last_mut().unwrap() = true;
        }
        let eval = |c: &[f64], t: &[Vec<f64>]| {
            let refs: Vec<&[f64]> = t.iter().map(Vec::as_slice).collect();
            edge_loss(c, &refs, &is_self)
        };
        let (_, g_c, g_t) = eval(&center, &targets);
        let num_c: Vec<f64> = (0..d)
            .map(|a| {
                central(
                    |x| {
                        let mut c = center.clone();
                        c[a] = x;
                        eval(&c, &targets).0
                    },
                    center[a],
                )
            })
            .collect();
        assert!(rel_err(&g_c, &num_c) < TOL, "centre, instance {i}");
        for j in 0..targets.len() {
            let num_t: Vec<f64> = (0..d)
                .map(|a| {
                    central(
                        |x| {
                            let mut t = targets.clone();
                            t[j][a] = x;
                            eval(&center, &t).0
                        },
                        targets[j][a],
                    )
                })
                .collect();
            assert!(rel_err(&g_t[j], &num_t) < TOL, "target {j}, instance {i}");
        }
    }
}
