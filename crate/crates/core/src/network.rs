//! Convolutional encoder and per-label attention decoder with hand-written
//! backward passes.
//!
//! Shapes, for a document of `N` tokens and a level with `L` labels:
//!
//! ```text
//! X  = embed(x)                N × d_e
//! U  = windows(X)              N × (s·d_e)      same padding, zero rows outside
//! H  = tanh(U K + c)           N × d_f
//! Q̂  = correct(Q, E_h)         d_f × L
//! A  = softmax_tokens(H Q̂)     N × L            every column sums to one
//! V  = Aᵀ H                    L × d_f
//! ỹ  = sum_pool(V W) + b       L                = V (W·1) + b
//! ŷ  = σ(ỹ)
//! ```

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::sigmoid;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionMode {
    None,
    Add,
    Concat,
}

impl CorrectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrectionMode::None => "none",
            CorrectionMode::Add => "add",
            CorrectionMode::Concat => "concat",
        }
    }
}

impl std::str::FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CorrectionMode::None),
            "add" => Ok(CorrectionMode::Add),
            "concat" => Ok(CorrectionMode::Concat),
            other => Err(Error::Config(format!("unknown correction mode {other:?}"))),
        }
    }
}

/// Affine map `fc` used to fold hyperbolic label embeddings into the queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub mode: CorrectionMode,
    /// `d_f × d_h` (add) or `d_f × (d_f + d_h)` (concat); empty for none.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Correction {
    pub fn none() -> Self {
        Correction {
            mode: CorrectionMode::None,
            weight: Array2::zeros((0, 0)),
            bias: Array1::zeros(0),
        }
    }

    pub fn xavier<R: Rng>(mode: CorrectionMode, d_f: usize, d_h: usize, rng: &mut R) -> Self {
        let fan_in = match mode {
            CorrectionMode::None => return Self::none(),
            CorrectionMode::Add => d_h,
            CorrectionMode::Concat => d_f + d_h,
        };
        Correction {
            mode,
            weight: xavier(d_f, fan_in, rng),
            bias: Array1::zeros(d_f),
        }
    }

    pub fn zeros(mode: CorrectionMode, d_f: usize, d_h: usize) -> Self {
        let fan_in = match mode {
            CorrectionMode::None => return Self::none(),
            CorrectionMode::Add => d_h,
            CorrectionMode::Concat => d_f + d_h,
        };
        Correction {
            mode,
            weight: Array2::zeros((d_f, fan_in)),
            bias: Array1::zeros(d_f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `|vocab| × d_e`
    pub embedding: Array2<f64>,
    /// Flattened `(s·d_e) × d_f` kernel; row block `o` belongs to window offset `o`.
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
    pub width: usize,
    pub finetune_embeddings: bool,
}

impl EncoderParams {
    pub fn new(embedding: Array2<f64>, width: usize, d_f: usize, finetune_embeddings: bool, rng: &mut impl Rng) -> Result<Self> {
        if width % 2 == 0 {
            return Err(Error::Config(format!("kernel width {width} must be odd")));
        }
        if d_f == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let d_e = embedding.ncols();
        Ok(EncoderParams {
            kernel: xavier(width * d_e, d_f, rng),
            bias: Array1::zeros(d_f),
            embedding,
            width,
            finetune_embeddings,
        })
    }

    pub fn d_e(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn d_f(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `d_f × L`, column `c` is the query of label `c`.
    pub q: Array2<f64>,
    /// `d_f × L`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub correction: Correction,
}

impl DecoderParams {
    pub fn labels(&self) -> usize {
        self.q.ncols()
    }

    pub fn d_f(&self) -> usize {
        self.q.nrows()
    }

    fn check(&self) -> Result<()> {
        let l = self.q.ncols();
        if self.w.ncols() != l || self.b.len() != l || self.w.nrows() != self.q.nrows() {
            return Err(Error::Shape(format!(
                "decoder Q {:?}, W {:?}, b {}",
                self.q.dim(),
                self.w.dim(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

/// Xavier-uniform `rows × cols` matrix with fan-in `rows`, fan-out `cols`.
pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng::uniform(rng, bound))
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub tokens: Vec<usize>,
    /// `N × (s·d_e)` im2col windows.
    pub windows: Array2<f64>,
    pub h: Array2<f64>,
    pub q_hat: Array2<f64>,
    /// Level embedding rows used for the correction (`L × d_h`).
    pub e_h: Option<Array2<f64>>,
    pub attention: Array2<f64>,
    pub v: Array2<f64>,
    pub w_sum: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

fn windows(tokens: &[usize], enc: &EncoderParams) -> Result<Array2<f64>> {
    if tokens.is_empty() {
        return Err(Error::Shape("empty token sequence".into()));
    }
    let vocab = enc.vocab_size();
    if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(Error::Shape(format!("token index {t} outside vocabulary of {vocab}")));
    }
    let d_e = enc.d_e();
    let s = enc.width;
    let r = (s / 2) as isize;
    let n = tokens.len();
    let mut u = Array2::zeros((n, s * d_e));
    for i in 0..n {
        for o in 0..s {
            let pos = i as isize + o as isize - r;
            if pos < 0 || pos >= n as isize {
                continue;
            }
            u.slice_mut(s![i, o * d_e..(o + 1) * d_e])
                .assign(&enc.embedding.row(tokens[pos as usize]));
        }
    }
    Ok(u)
}

fn encode_windows(u: &Array2<f64>, enc: &EncoderParams) -> Array2<f64> {
    let mut h = u.dot(&enc.kernel);
    h += &enc.bias;
    h.mapv_inplace(f64::tanh);
    h
}

/// `H = tanh(conv1d_same(embed(x)))`.
pub fn encode(tokens: &[usize], enc: &EncoderParams) -> Result<Array2<f64>> {
    Ok(encode_windows(&windows(tokens, enc)?, enc))
}

/// Queries after hyperbolic correction.
pub fn corrected_queries(q: &Array2<f64>, e_h: Option<&Array2<f64>>, corr: &Correction) -> Result<Array2<f64>> {
    let d_f = q.nrows();
    let l = q.ncols();
    if corr.mode == CorrectionMode::None {
        return Ok(q.clone());
    }
    let e_h = e_h.ok_or_else(|| Error::Shape("correction requires hyperbolic rows".into()))?;
    if e_h.nrows() != l {
        return Err(Error::Shape(format!("{} hyperbolic rows for {l} labels", e_h.nrows())));
    }
    let d_h = e_h.ncols();
    let expected_in = match corr.mode {
        CorrectionMode::Add => d_h,
        CorrectionMode::Concat => d_f + d_h,
        CorrectionMode::None => unreachable!(),
    };
    if corr.weight.dim() != (d_f, expected_in) || corr.bias.len() != d_f {
        return Err(Error::Shape(format!(
            "correction weight {:?} (bias {}), expected ({d_f}, {expected_in})",
            corr.weight.dim(),
            corr.bias.len()
        )));
    }
    let bias = corr.bias.view().insert_axis(Axis(1));
    Ok(match corr.mode {
        CorrectionMode::Add => q + &corr.weight.dot(&e_h.t()) + &bias,
        CorrectionMode::Concat => {
            let stacked = concat_input(q, e_h);
            corr.weight.dot(&stacked) + &bias
        }
        CorrectionMode::None => unreachable!(),
    })
}

/// `[Q; E_hᵀ]`, the `(d_f + d_h) × L` input of the concat transform.
fn concat_input(q: &Array2<f64>, e_h: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(0), &[q.view(), e_h.t()]).expect("matching label count")
}

/// Column-wise softmax over the token axis.
fn softmax_columns(scores: &mut Array2<f64>) {
    for mut col in scores.columns_mut() {
        let max = col.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        col.mapv_inplace(|x| (x - max).exp());
        let z = col.sum();
        col /= z;
    }
}

/// Attention, label probabilities and the partial trace for `H`.
pub fn decode(h: &Array2<f64>, dec: &DecoderParams, e_h: Option<&Array2<f64>>) -> Result<(Array2<f64>, Array1<f64>, ForwardTrace)> {
    dec.check()?;
    if h.ncols() != dec.d_f() {
        return Err(Error::Shape(format!("H has {} features, decoder expects {}", h.ncols(), dec.d_f())));
    }
    let q_hat = corrected_queries(&dec.q, e_h, &dec.correction)?;
    let mut attention = h.dot(&q_hat);
    softmax_columns(&mut attention);
    let v = attention.t().dot(h);
    let w_sum = dec.w.sum_axis(Axis(1));
    let logits = v.dot(&w_sum) + &dec.b;
    let probs = logits.mapv(sigmoid);
    let trace = ForwardTrace {
        tokens: Vec::new(),
        windows: Array2::zeros((0, 0)),
        h: h.clone(),
        q_hat,
        e_h: e_h.filter(|_| dec.correction.mode != CorrectionMode::None).cloned(),
        attention: attention.clone(),
        v,
        w_sum,
        logits,
        probs: probs.clone(),
    };
    Ok((attention, probs, trace))
}

/// Full model pass: encode, correct queries, decode.
pub fn forward(tokens: &[usize], model: &Model, e_h: Option<&Array2<f64>>) -> Result<(Array1<f64>, ForwardTrace)> {
    let u = windows(tokens, &model.encoder)?;
    let h = encode_windows(&u, &model.encoder);
    let (_, probs, mut trace) = decode(&h, &model.decoder, e_h)?;
    trace.tokens = tokens.to_vec();
    trace.windows = u;
    Ok((probs, trace))
}

/// Gradients of a scalar loss with respect to every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Dense `|vocab| × d_e`; `None` when embeddings are frozen.
    pub embedding: Option<Array2<f64>>,
    pub kernel: Array2<f64>,
    pub conv_bias: Array1<f64>,
    pub q: Array2<f64>,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let enc = &model.encoder;
        let dec = &model.decoder;
        Gradients {
            embedding: enc.finetune_embeddings.then(|| Array2::zeros(enc.embedding.dim())),
            kernel: Array2::zeros(enc.kernel.dim()),
            conv_bias: Array1::zeros(enc.bias.len()),
            q: Array2::zeros(dec.q.dim()),
            w: Array2::zeros(dec.w.dim()),
            b: Array1::zeros(dec.b.len()),
            fc_weight: Array2::zeros(dec.correction.weight.dim()),
            fc_bias: Array1::zeros(dec.correction.bias.len()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        if let (Some(a), Some(b)) = (&mut self.embedding, &other.embedding) {
            *a += b;
        }
        self.kernel += &other.kernel;
        self.conv_bias += &other.conv_bias;
        self.q += &other.q;
        self.w += &other.w;
        self.b += &other.b;
        self.fc_weight += &other.fc_weight;
        self.fc_bias += &other.fc_bias;
    }

    pub fn scale(&mut self, f: f64) {
        if let Some(e) = &mut self.embedding {
            *e *= f;
        }
        self.kernel *= f;
        self.conv_bias *= f;
        self.q *= f;
        self.w *= f;
        self.b *= f;
        self.fc_weight *= f;
        self.fc_bias *= f;
    }

    /// Named flat views, in the order [`model_tensors_mut`] yields parameters.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = Vec::with_capacity(8);
        if let Some(e) = &self.embedding {
            out.push(("encoder.embedding", e.as_slice().expect("standard layout")));
        }
        out.push(("encoder.kernel", self.kernel.as_slice().expect("standard layout")));
        out.push(("encoder.bias", self.conv_bias.as_slice().expect("contiguous")));
        out.push(("decoder.q", self.q.as_slice().expect("standard layout")));
        out.push(("decoder.w", self.w.as_slice().expect("standard layout")));
        out.push(("decoder.b", self.b.as_slice().expect("contiguous")));
        out.push(("decoder.fc.weight", self.fc_weight.as_slice().expect("standard layout")));
        out.push(("decoder.fc.bias", self.fc_bias.as_slice().expect("contiguous")));
        out
    }
}

/// Trainable parameters as named flat slices; frozen embeddings are skipped.
pub fn model_tensors_mut(model: &mut Model) -> Vec<(&'static str, &mut [f64])> {
    let enc = &mut model.encoder;
    let dec = &mut model.decoder;
    let mut out: Vec<(&'static str, &mut [f64])> = Vec::with_capacity(8);
    if enc.finetune_embeddings {
        out.push(("encoder.embedding", enc.embedding.as_slice_mut().expect("standard layout")));
    }
    out.push(("encoder.kernel", enc.kernel.as_slice_mut().expect("standard layout")));
    out.push(("encoder.bias", enc.bias.as_slice_mut().expect("contiguous")));
    out.push(("decoder.q", dec.q.as_slice_mut().expect("standard layout")));
    out.push(("decoder.w", dec.w.as_slice_mut().expect("standard layout")));
    out.push(("decoder.b", dec.b.as_slice_mut().expect("contiguous")));
    out.push(("decoder.fc.weight", dec.correction.weight.as_slice_mut().expect("standard layout")));
    out.push(("decoder.fc.bias", dec.correction.bias.as_slice_mut().expect("contiguous")));
    out
}

/// Backpropagates `dL/dỹ` through the decoder and encoder.
pub fn backward(trace: &ForwardTrace, model: &Model, dlogits: &[f64]) -> Result<Gradients> {
    let enc = &model.encoder;
    let dec = &model.decoder;
    let l = dec.labels();
    let n = trace.h.nrows();
    if dlogits.len() != l
        || trace.attention.dim() != (n, l)
        || trace.q_hat.dim() != dec.q.dim()
        || trace.h.ncols() != enc.d_f()
        || trace.windows.dim() != (n, enc.width * enc.d_e())
        || trace.tokens.len() != n
    {
        return Err(Error::Shape("trace does not match the model it is differentiated against".into()));
    }
    let g = Array1::from(dlogits.to_vec());
    let h = &trace.h;
    let a = &trace.attention;

    // ỹ = V w̄ + b, w̄ = W·1
    let db = g.clone();
    let dv = outer(&g, &trace.w_sum); // L × d_f
    let dw_sum = trace.v.t().dot(&g); // d_f
    let mut dw = Array2::zeros(dec.w.dim());
    for mut col in dw.columns_mut() {
        col.assign(&dw_sum);
    }

    // V = Aᵀ H
    let da = h.dot(&dv.t()); // N × L
    let mut dh = a.dot(&dv); // N × d_f

    // column softmax
    let mut ds = Array2::zeros((n, l));
    for c in 0..l {
        let a_c = a.column(c);
        let da_c = da.column(c);
        let inner = a_c.dot(&da_c);
        ds.column_mut(c).assign(&(&a_c * &(&da_c - inner)));
    }

    // S = H Q̂
    let dq_hat = h.t().dot(&ds); // d_f × L
    dh += &ds.dot(&trace.q_hat.t());

    let (dq, fc_weight, fc_bias) = correction_backward(&dq_hat, dec, trace.e_h.as_ref())?;

    // H = tanh(U K + c)
    let dpre = &dh * &h.mapv(|x| 1.0 - x * x);
    let kernel = trace.windows.t().dot(&dpre);
    let conv_bias = dpre.sum_axis(Axis(0));
    let embedding = if enc.finetune_embeddings {
        let du = dpre.dot(&enc.kernel.t()); // N × (s·d_e)
        let d_e = enc.d_e();
        let r = (enc.width / 2) as isize;
        let mut de = Array2::zeros(enc.embedding.dim());
        for i in 0..n {
            for o in 0..enc.width {
                let pos = i as isize + o as isize - r;
                if pos < 0 || pos >= n as isize {
                    continue;
                }
                let mut row = de.row_mut(trace.tokens[pos as usize]);
                row += &du.slice(s![i, o * d_e..(o + 1) * d_e]);
            }
        }
        Some(de)
    } else {
        None
    };

    // `dot` on transposed views may return column-major results; the
    // optimizer walks gradients as flat row-major slices.
    let std = |m: Array2<f64>| if m.is_standard_layout() { m } else { m.as_standard_layout().into_owned() };
    Ok(Gradients {
        embedding: embedding.map(std),
        kernel: std(kernel),
        conv_bias,
        q: std(dq),
        w: std(dw),
        b: db,
        fc_weight: std(fc_weight),
        fc_bias,
    })
}

fn correction_backward(
    dq_hat: &Array2<f64>,
    dec: &DecoderParams,
    e_h: Option<&Array2<f64>>,
) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>)> {
    let corr = &dec.correction;
    match corr.mode {
        CorrectionMode::None => Ok((dq_hat.clone(), Array2::zeros((0, 0)), Array1::zeros(0))),
        CorrectionMode::Add => {
            let e_h = e_h.ok_or_else(|| Error::Shape("trace lacks hyperbolic rows".into()))?;
            Ok((dq_hat.clone(), dq_hat.dot(e_h), dq_hat.sum_axis(Axis(1))))
        }
        CorrectionMode::Concat => {
            let e_h = e_h.ok_or_else(|| Error::Shape("trace lacks hyperbolic rows".into()))?;
            let input = concat_input(&dec.q, e_h);
            let d_f = dec.d_f();
            let dq = corr.weight.slice(s![.., ..d_f]).t().dot(dq_hat);
            Ok((dq, dq_hat.dot(&input.t()), dq_hat.sum_axis(Axis(1))))
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let av: ArrayView2<f64> = a.view().insert_axis(Axis(1));
    let bv: ArrayView2<f64> = b.view().insert_axis(Axis(0));
    av.dot(&bv)
}

/// Adam with bias correction. Moments are keyed by tensor name.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Forgets the moments of tensors whose names match `pred`.
    pub fn reset_where(&mut self, pred: impl Fn(&str) -> bool) {
        self.moments.retain(|k, _| !pred(k));
    }

    pub fn step_model(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        let grads = grads.tensors();
        let mut params = model_tensors_mut(model);
        if grads.len() != params.len() {
            return Err(Error::Shape("gradient set does not match trainable parameters".into()));
        }
        let pairs: Vec<(&'static str, &mut [f64], &[f64])> = params
            .iter_mut()
            .zip(&grads)
            .map(|((name, p), (gname, g))| {
                debug_assert_eq!(name, gname);
                (*name, &mut **p, *g)
            })
            .collect();
        self.step(pairs)
    }

    /// One update over named `(parameter, gradient)` slices. Non-finite
    /// gradients abort before anything is modified.
    pub fn step(&mut self, tensors: Vec<(&str, &mut [f64], &[f64])>) -> Result<()> {
        for (name, p, g) in &tensors {
            if p.len() != g.len() {
                return Err(Error::Shape(format!("{name}: {} parameters, {} gradients", p.len(), g.len())));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {name}[{i}] = {}", g[i])));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p, g) in tensors {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            if m.len() != g.len() {
                *m = vec![0.0; g.len()];
                *v = vec![0.0; g.len()];
            }
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
