//! Binary cross-entropy and the asymmetric loss, both taking logits.
//!
//! Probabilities never appear inside a logarithm directly: `log σ(z)` and
//! `log(1 - σ(z))` are evaluated as `-softplus(-z)` and `-softplus(z)`.
//! Clamping to `[eps, 1 - eps]` is applied to the argument of each log from
//! below, which is where it matters; inside the clamped region the term is
//! flat and contributes no gradient through the log.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AslConfig {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub margin: f64,
    pub clamp_eps: f64,
}

impl Default for AslConfig {
    fn default() -> Self {
        AslConfig {
            gamma_pos: 0.0,
            gamma_neg: 1.0,
            margin: 0.05,
            clamp_eps: 1e-12,
        }
    }
}

impl AslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pos >= 0.0 && self.gamma_neg >= 0.0) {
            return Err(Error::Config("ASL focusing exponents must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::Config("ASL margin must lie in [0, 1)".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 1e-3) {
            return Err(Error::Config("clamp_eps must lie in (0, 1e-3]".into()));
        }
        if self.gamma_pos > self.gamma_neg {
            log::warn!(
                "gamma_pos ({}) exceeds gamma_neg ({}); positives are usually focused less",
                self.gamma_pos,
                self.gamma_neg
            );
        }
        Ok(())
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_inputs(logits: &[f64], targets: &[f64]) -> Result<()> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("logit {i} is {}", logits[i])));
    }
    Ok(())
}

/// Summed binary cross-entropy and its gradient `σ(z) - y`.
pub fn bce(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_inputs(logits, targets)?;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            loss += y * softplus(-z) + (1.0 - y) * softplus(z);
            sigmoid(z) - y
        })
        .collect();
    Ok((loss, grad))
}

/// Summed asymmetric loss with focusing `γ±` and probability margin `m`.
pub fn asl(logits: &[f64], targets: &[f64], cfg: &AslConfig) -> Result<(f64, Vec<f64>)> {
    check_inputs(logits, targets)?;
    cfg.validate()?;
    let log_eps = cfg.clamp_eps.ln();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let p = sigmoid(z);
        let q = sigmoid(-z); // 1 - p without cancellation
        let dp_dz = p * q;
        let mut g = 0.0;
        if y > 0.0 {
            let raw_log = -softplus(-z);
            let clamped = raw_log < log_eps;
            let log_p = raw_log.max(log_eps);
            let gp = cfg.gamma_pos;
            let focus = if gp == 0.0 { 1.0 } else { q.powf(gp) };
            loss -= y * focus * log_p;
            // d/dz of -(1-p)^γ log p
            let mut d = if gp == 0.0 { 0.0 } else { gp * p * focus * log_p };
            if !clamped {
                d -= focus * q;
            }
            g += y * d;
        }
        if y < 1.0 {
            let w = 1.0 - y;
            let shifted = p - cfg.margin;
            if shifted > 0.0 {
                let one_minus = if cfg.margin == 0.0 { q } else { q + cfg.margin };
                let raw_log = if cfg.margin == 0.0 { -softplus(z) } else { one_minus.ln() };
                let clamped = raw_log < log_eps;
                let log_q = raw_log.max(log_eps);
                let gn = cfg.gamma_neg;
                let focus = if gn == 0.0 { 1.0 } else { shifted.powf(gn) };
                loss -= w * focus * log_q;
                // d/dp_m of -p_m^γ log(1 - p_m)
                let mut d = if gn == 0.0 { 0.0 } else { -gn * focus / shifted * log_q };
                if !clamped {
                    d += focus / one_minus;
                }
                g += w * d * dp_dz;
            }
        }
        grad.push(g);
    }
    Ok((loss, grad))
}

/// Loss selected at run time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    Bce,
    Asl(AslConfig),
}

impl Loss {
    pub fn evaluate(&self, logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Loss::Bce => bce(logits, targets),
            Loss::Asl(cfg) => asl(logits, targets, cfg),
        }
    }
}

/// Mean over documents of their per-document losses. The values are summed in
/// sorted order so the result does not depend on batch order.
pub fn batch_reduce(per_document: &[f64]) -> Result<f64> {
    if per_document.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut sorted = per_document.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_shift() -> AslConfig {
        AslConfig {
            gamma_pos: 0.0,
            gamma_neg: 0.0,
            margin: 0.0,
            clamp_eps: 1e-12,
        }
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn bce_examples() {
        let (l, g) = bce(&[0.0], &[1.0]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!((g[0] + 0.5).abs() < 1e-15);
        let (l, _) = bce(&[40.0], &[1.0]).unwrap();
        assert!(l < 1e-15);
        let (l, _) = bce(&[0.2, -0.3], &[1.0, 0.0]).unwrap();
        let expected = (1.0 + (-0.2f64).exp()).ln() + (1.0 + (-0.3f64).exp()).ln();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - (0.5981 + 0.5544)).abs() < 1e-4);
    }

    #[test]
    fn bce_rejects_bad_input() {
        assert!(matches!(bce(&[f64::NAN], &[1.0]), Err(Error::NonFinite(_))));
        assert!(matches!(bce(&[0.0, 1.0], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn asl_examples() {
        let (l, g) = asl(&[0.3, -1.2], &[1.0, 0.0], &no_shift()).unwrap();
        let (lb, gb) = bce(&[0.3, -1.2], &[1.0, 0.0]).unwrap();
        assert!((l - lb).abs() < 1e-12);
        assert!((g[0] - gb[0]).abs() < 1e-12 && (g[1] - gb[1]).abs() < 1e-12);

        let cfg = AslConfig {
            gamma_pos: 0.0,
            gamma_neg: 1.0,
            margin: 0.05,
            clamp_eps: 1e-12,
        };
        let (l, g) = asl(&[logit(0.04)], &[0.0], &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[0], 0.0);

        let (l, _) = asl(&[logit(0.55)], &[0.0], &cfg).unwrap();
        assert!((l - (-0.5 * 0.5f64.ln())).abs() < 1e-12, "{l}");
        assert!((l - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn asl_config_validation() {
        let base = AslConfig::default();
        assert!(base.validate().is_ok());
        assert!(AslConfig { margin: 1.0, ..base }.validate().is_err());
        assert!(AslConfig { gamma_neg: -1.0, ..base }.validate().is_err());
        assert!(AslConfig { clamp_eps: 0.1, ..base }.validate().is_err());
        assert!(asl(&[0.0], &[0.0], &AslConfig { margin: -0.1, ..base }).is_err());
    }

    #[test]
    fn batch_reduce_examples() {
        assert_eq!(batch_reduce(&[1.7]).unwrap(), 1.7);
        assert_eq!(batch_reduce(&[1.0, 3.0]).unwrap(), 2.0);
        let a = [0.1, 1e10, 0.7, -3.3, 1e-9];
        let b = [1e-9, 0.7, 0.1, 1e10, -3.3];
        assert_eq!(batch_reduce(&a).unwrap().to_bits(), batch_reduce(&b).unwrap().to_bits());
        assert!(batch_reduce(&[]).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let cfg = AslConfig::default();
        let (l, g) = asl(&[-800.0, 800.0], &[1.0, 0.0], &cfg).unwrap();
        assert!(l.is_finite() && g.iter().all(|x| x.is_finite()));
        // positive term clamped at -ln(1e-12); negative term -0.95 ln(0.05)
        let expected = 27.631021115928547 - 0.95 * 0.05f64.ln();
        assert!((l - expected).abs() < 1e-9, "{l}");
    }

    proptest! {
        #[test]
        fn asl_reduces_to_bce(z in proptest::collection::vec(-12.0f64..12.0, 1..8), seed in 0u64..u64::MAX) {
            let y: Vec<f64> = (0..z.len()).map(|i| ((seed >> (i % 64)) & 1) as f64).collect();
            let (la, ga) = asl(&z, &y, &no_shift()).unwrap();
            let (lb, gb) = bce(&z, &y).unwrap();
            prop_assert!((la - lb).abs() < 1e-12);
            for (a, b) in ga.iter().zip(&gb) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn losses_nonnegative(z in -30.0f64..30.0, y in 0u8..2, gp in 0.0f64..3.0, gn in 0.0f64..4.0, m in 0.0f64..0.3) {
            let cfg = AslConfig { gamma_pos: gp, gamma_neg: gn, margin: m, clamp_eps: 1e-12 };
            prop_assert!(asl(&[z], &[y as f64], &cfg).unwrap().0 >= 0.0);
            prop_assert!(bce(&[z], &[y as f64]).unwrap().0 >= 0.0);
        }

        #[test]
        fn negative_loss_monotone(z1 in -10.0f64..10.0, z2 in -10.0f64..10.0, gn in 0.0f64..4.0, m in 0.0f64..0.3) {
            let cfg = AslConfig { gamma_pos: 0.0, gamma_neg: gn, margin: m, clamp_eps: 1e-12 };
            let (lo, hi) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
            let l_lo = asl(&[lo], &[0.0], &cfg).unwrap().0;
            let l_hi = asl(&[hi], &[0.0], &cfg).unwrap().0;
            prop_assert!(l_lo <= l_hi + 1e-15);
        }

        #[test]
        fn downweighting_in_gamma_neg(p in 0.06f64..0.999, g1 in 0.0f64..4.0, g2 in 0.0f64..4.0) {
            let m = 0.05;
            let (a, b) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let z = logit(p);
            let mk = |g| AslConfig { gamma_pos: 0.0, gamma_neg: g, margin: m, clamp_eps: 1e-12 };
            let la = asl(&[z], &[0.0], &mk(a)).unwrap().0;
            let lb = asl(&[z], &[0.0], &mk(b)).unwrap().0;
            prop_assert!(lb <= la + 1e-15);
        }
    }
}
