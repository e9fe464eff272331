//! Multi-label evaluation: AUC, F1 and precision at K.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_F1_THRESHOLD: f64 = 0.5;
pub const DEFAULT_P_AT: [usize; 3] = [5, 8, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// `None` when no label has both classes.
    pub macro_auc: Option<f64>,
    pub micro_auc: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Only K not exceeding the label count are reported.
    pub p_at_k: BTreeMap<usize, f64>,
    pub skipped_labels: usize,
}

fn check_shapes(scores: &Array2<f64>, labels: &Array2<bool>) -> Result<()> {
    if scores.dim() != labels.dim() {
        return Err(Error::Shape(format!("scores {:?} vs labels {:?}", scores.dim(), labels.dim())));
    }
    if let Some(x) = scores.iter().find(|x| x.is_nan()) {
        return Err(Error::NonFinite(format!("score {x}")));
    }
    Ok(())
}

/// Mann–Whitney AUC with ties credited one half, via mid-ranks.
pub fn auc_binary<'a>(scores: impl IntoIterator<Item = &'a f64>, labels: impl IntoIterator<Item = &'a bool>) -> Result<f64> {
    let mut pairs: Vec<(f64, bool)> = scores.into_iter().copied().zip(labels.into_iter().copied()).collect();
    if pairs.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let pos = pairs.iter().filter(|(_, y)| *y).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(format!("AUC with {pos} positives and {neg} negatives")));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of 2·rank over positives keeps mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        // ranks i+1..=j, mid-rank (i+1+j)/2
        let twice_mid = (i + 1 + j) as u128;
        let group_pos = pairs[i..j].iter().filter(|(_, y)| *y).count() as u128;
        twice_rank_sum += twice_mid * group_pos;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Macro AUC over labels with both classes, micro AUC over all cells, and the
/// number of labels skipped by the macro average.
pub fn macro_micro_auc(scores: &Array2<f64>, labels: &Array2<bool>) -> Result<(f64, f64, usize)> {
    check_shapes(scores, labels)?;
    let mut per_label = Vec::new();
    let mut skipped = 0;
    for (s, y) in scores.columns().into_iter().zip(labels.columns()) {
        match auc_binary(s.iter(), y.iter()) {
            Ok(a) => per_label.push(a),
            Err(Error::Undefined(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if per_label.is_empty() {
        return Err(Error::Undefined("macro AUC: no label has both classes".into()));
    }
    let macro_auc = per_label.iter().sum::<f64>() / per_label.len() as f64;
    let micro_auc = auc_binary(scores.iter(), labels.iter())?;
    Ok((macro_auc, micro_auc, skipped))
}

/// Per-label AUC; `None` for labels lacking a class.
pub fn per_label_auc(scores: &Array2<f64>, labels: &Array2<bool>) -> Result<Vec<Option<f64>>> {
    check_shapes(scores, labels)?;
    scores
        .columns()
        .into_iter()
        .zip(labels.columns())
        .map(|(s, y)| match auc_binary(s.iter(), y.iter()) {
            Ok(a) => Ok(Some(a)),
            Err(Error::Undefined(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Macro and micro F1 with predictions `score ≥ threshold`.
pub fn macro_micro_f1(scores: &Array2<f64>, labels: &Array2<bool>, threshold: f64) -> Result<(f64, f64)> {
    check_shapes(scores, labels)?;
    let l = scores.ncols();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    let mut f1_sum = 0.0;
    for (s, y) in scores.columns().into_iter().zip(labels.columns()) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&p, &t) in s.iter().zip(&y) {
            match (p >= threshold, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        f1_sum += f1(tp, fp, fn_);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
    }
    let macro_f1 = if l == 0 { 0.0 } else { f1_sum / l as f64 };
    Ok((macro_f1, f1(tp_all, fp_all, fn_all)))
}

/// Indices of the `k` highest scores, ties to the lower index.
pub fn top_k(scores: ArrayView1<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn precision_at_k(scores: &Array2<f64>, labels: &Array2<bool>, k: usize) -> Result<f64> {
    check_shapes(scores, labels)?;
    if k == 0 || k > scores.ncols() {
        return Err(Error::Config(format!("K = {k} outside 1..={}", scores.ncols())));
    }
    let d = scores.nrows();
    if d == 0 {
        return Ok(0.0);
    }
    let total: f64 = scores
        .rows()
        .into_iter()
        .zip(labels.rows())
        .map(|(s, y)| top_k(s, k).into_iter().filter(|&j| y[j]).count() as f64 / k as f64)
        .sum();
    Ok(total / d as f64)
}

/// All metrics at once. Undefined AUCs become `None` instead of errors.
pub fn evaluate(scores: &Array2<f64>, labels: &Array2<bool>, ks: &[usize], threshold: f64) -> Result<EvalResult> {
    check_shapes(scores, labels)?;
    let (macro_auc, micro_auc, skipped_labels) = match macro_micro_auc(scores, labels) {
        Ok((a, b, s)) => (Some(a), Some(b), s),
        Err(Error::Undefined(_)) => {
            let micro = auc_binary(scores.iter(), labels.iter()).ok();
            (None, micro, scores.ncols())
        }
        Err(e) => return Err(e),
    };
    let (macro_f1, micro_f1) = macro_micro_f1(scores, labels, threshold)?;
    let mut p_at_k = BTreeMap::new();
    for &k in ks {
        if k >= 1 && k <= scores.ncols() {
            p_at_k.insert(k, precision_at_k(scores, labels, k)?);
        }
    }
    Ok(EvalResult {
        macro_auc,
        micro_auc,
        macro_f1,
        micro_f1,
        p_at_k,
        skipped_labels,
    })
}
