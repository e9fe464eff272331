//! Poincaré-ball embeddings of label-tree nodes.
//!
//! Training follows the usual recipe for hierarchy embeddings: for every edge
//! `(u, v)` the centre `u` should be closer to `v` than to a handful of sampled
//! non-neighbours, scored with a softmax over negative hyperbolic distances.
//! Updates are Riemannian SGD: the Euclidean gradient is rescaled by the
//! inverse metric `(1 - |θ|²)² / 4` and the result is pulled back inside the
//! ball.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::io_util::{fmt_f64, write_atomic};
use crate::label_tree::{AugmentedLabelTree, LabelTree};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub burn_in_epochs: usize,
    pub burn_in_lr_scale: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub ball_eps: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 50,
            learning_rate: 0.3,
            epochs: 300,
            burn_in_epochs: 20,
            burn_in_lr_scale: 0.1,
            negatives_per_positive: 10,
            seed: 0,
            ball_eps: 1e-5,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim < 2 {
            return bad("embedding dimension must be at least 2");
        }
        if !(self.learning_rate > 0.0) || !(self.burn_in_lr_scale > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.burn_in_epochs > self.epochs {
            return bad("burn_in_epochs exceeds epochs");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if !(self.ball_eps > 0.0 && self.ball_eps < 1.0) {
            return bad("ball_eps must lie in (0, 1)");
        }
        Ok(())
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Hyperbolic distance `arcosh(1 + 2|u-v|² / ((1-|u|²)(1-|v|²)))`.
pub fn poincare_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    for w in [u, v] {
        let n = sq_norm(w);
        if n >= 1.0 {
            return Err(Error::Domain { norm: n.sqrt() });
        }
    }
    Ok(distance_unchecked(u, v))
}

fn distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let alpha = 1.0 - sq_norm(u);
    let beta = 1.0 - sq_norm(v);
    let gamma = 1.0 + 2.0 * sq_dist(u, v) / (alpha * beta);
    (gamma + (gamma * gamma - 1.0).max(0.0).sqrt()).ln()
}

/// Distance together with its Euclidean gradients in `u` and `v`.
///
/// At `u == v` the distance has a cusp; the gradient is reported as zero.
pub fn distance_with_grad(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let alpha = 1.0 - sq_norm(u);
    let beta = 1.0 - sq_norm(v);
    let delta = sq_dist(u, v);
    let gamma = 1.0 + 2.0 * delta / (alpha * beta);
    let root = (gamma * gamma - 1.0).max(0.0).sqrt();
    let d = (gamma + root).ln();
    if root < 1e-12 {
        return (d, vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    // dγ/du = 4(u - v)/(αβ) + 4δ u/(α²β), symmetric for v.
    let gu: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| (4.0 * (a - b) / (alpha * beta) + 4.0 * delta * a / (alpha * alpha * beta)) / root)
        .collect();
    let gv: Vec<f64> = v
        .iter()
        .zip(u)
        .map(|(&b, &a)| (4.0 * (b - a) / (alpha * beta) + 4.0 * delta * b / (alpha * beta * beta)) / root)
        .collect();
    (d, gu, gv)
}

/// Rescales a Euclidean gradient by the inverse Poincaré metric at `theta`.
pub fn riemannian_scale(euclid_grad: &[f64], theta: &[f64]) -> Vec<f64> {
    let f = (1.0 - sq_norm(theta)).powi(2) / 4.0;
    euclid_grad.iter().map(|g| g * f).collect()
}

/// Pulls `theta` back to norm `1 - ball_eps` if it reached or left that shell.
pub fn project_to_ball(theta: &mut [f64], ball_eps: f64) {
    let norm = sq_norm(theta).sqrt();
    let max = 1.0 - ball_eps;
    if norm >= max {
        let s = max / norm;
        theta.iter_mut().for_each(|x| *x *= s);
    }
}

/// Softmax edge loss `-log(exp(-d(u,v)) / Σ exp(-d(u,v')))` over
/// `targets = [v, negatives...]`.
///
/// Returns the loss, the gradient for the centre and one gradient per target.
/// A target identical to the centre slot (by index, see [`train_poincare`])
/// should be passed with `self_target = true` so its distance is the constant 0.
pub fn edge_loss(center: &[f64], targets: &[&[f64]], self_target: &[bool]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let dim = center.len();
    let mut dists = Vec::with_capacity(targets.len());
    let mut grads = Vec::with_capacity(targets.len());
    for (t, &is_self) in targets.iter().zip(self_target) {
        if is_self {
            dists.push(0.0);
            grads.push((vec![0.0; dim], vec![0.0; dim]));
        } else {
            let (d, gu, gv) = distance_with_grad(center, t);
            dists.push(d);
            grads.push((gu, gv));
        }
    }
    let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = dists.iter().map(|d| (-(d - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let loss = dists[0] - min + z.ln();

    let mut g_center = vec![0.0; dim];
    let mut g_targets = Vec::with_capacity(targets.len());
    for (j, (gu, gv)) in grads.into_iter().enumerate() {
        // dL/dd_j = [j == 0] - softmax(-d)_j
        let coef = if j == 0 { 1.0 } else { 0.0 } - weights[j] / z;
        for (gc, g) in g_center.iter_mut().zip(&gu) {
            *gc += coef * g;
        }
        g_targets.push(gv.into_iter().map(|g| coef * g).collect());
    }
    (loss, g_center, g_targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareEmbedding {
    /// Level-qualified node keys (`"3:682"`), one per row.
    labels: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Array2<f64>,
    pub ball_eps: f64,
}

/// Key of a tree node in embedding files.
pub fn node_key(level: usize, label: &str) -> String {
    format!("{level}:{label}")
}

impl PoincareEmbedding {
    pub fn new(labels: Vec<String>, vectors: Array2<f64>, ball_eps: f64) -> Result<Self> {
        if labels.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} labels for {} embedding rows",
                labels.len(),
                vectors.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Tree(format!("duplicate embedding label {l:?}")));
            }
        }
        Ok(PoincareEmbedding {
            labels,
            index,
            vectors,
            ball_eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, key: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(key).map(|&i| self.vectors.row(i))
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        distance_unchecked(
            self.vectors.row(a).as_slice().unwrap(),
            self.vectors.row(b).as_slice().unwrap(),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{} {}", self.vectors.nrows(), self.dim()).unwrap();
        for (label, row) in self.labels.iter().zip(self.vectors.rows()) {
            write!(out, "{label}").unwrap();
            for x in row {
                write!(out, " {}", fmt_f64(*x)).unwrap();
            }
            out.push(b'\n');
        }
        write_atomic(path, &out)
    }

    pub fn read(path: &Path, ball_eps: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, 1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format(path, 1, "bad header")))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::format(path, 1, "header must be `n_nodes d`"));
        }
        let (n, d) = (dims[0], dims[1]);
        let mut labels = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let label = parts.next().expect("nonempty line");
            let row: Vec<f64> = parts
                .map(|t| t.parse().map_err(|_| Error::format(path, i + 2, "bad float")))
                .collect::<Result<_>>()?;
            if row.len() != d {
                return Err(Error::format(path, i + 2, format!("expected {d} values, got {}", row.len())));
            }
            labels.push(label.to_string());
            data.extend(row);
        }
        if labels.len() != n {
            return Err(Error::format(path, 1, format!("header says {n} rows, found {}", labels.len())));
        }
        let vectors = Array2::from_shape_vec((n, d), data).expect("shape checked");
        Self::new(labels, vectors, ball_eps)
    }
}

/// Starting point of training: uniform in `[-0.001, 0.001]^d`.
pub fn init_embedding(tree: &LabelTree, cfg: &EmbedConfig) -> PoincareEmbedding {
    let labels: Vec<String> = tree.nodes().map(|n| node_key(n.level, &n.label)).collect();
    let mut r = rng::derive(cfg.seed, Stream::Embedding, 0, u64::MAX);
    let vectors = Array2::from_shape_simple_fn((labels.len(), cfg.dim), || rng::uniform(&mut r, 0.001));
    PoincareEmbedding::new(labels, vectors, cfg.ball_eps).expect("tree node keys are unique")
}

/// Trains one embedding per node of the (un-augmented) tree.
pub fn train_poincare(tree: &LabelTree, cfg: &EmbedConfig) -> Result<PoincareEmbedding> {
    Ok(train_poincare_with_history(tree, cfg)?.0)
}

/// As [`train_poincare`], also returning the mean edge loss of every epoch.
pub fn train_poincare_with_history(tree: &LabelTree, cfg: &EmbedConfig) -> Result<(PoincareEmbedding, Vec<f64>)> {
    train_poincare_from(tree, cfg, init_embedding(tree, cfg))
}

/// Trains starting from `emb`, whose rows follow the tree's node order.
/// Returns the embedding and the mean loss of every epoch.
pub fn train_poincare_from(tree: &LabelTree, cfg: &EmbedConfig, mut emb: PoincareEmbedding) -> Result<(PoincareEmbedding, Vec<f64>)> {
    cfg.validate()?;
    let n = tree.node_count();
    if n < 2 {
        return Err(Error::Tree("embedding needs at least two nodes".into()));
    }
    if emb.vectors.dim() != (n, cfg.dim) {
        return Err(Error::Shape(format!(
            "initial embedding {:?} for {n} nodes of dimension {}",
            emb.vectors.dim(),
            cfg.dim
        )));
    }
    let edges = tree.edges();
    // Nodes that may not serve as negatives for u: u itself and its neighbours, sorted.
    let mut excluded: Vec<Vec<usize>> = (0..n).map(|u| vec![u]).collect();
    for &(a, b) in &edges {
        excluded[a].push(b);
        excluded[b].push(a);
    }
    for e in &mut excluded {
        e.sort_unstable();
        e.dedup();
    }
    let mut pairs: Vec<(usize, usize)> = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut slots: Vec<usize> = Vec::with_capacity(cfg.negatives_per_positive + 1);
    for epoch in 0..cfg.epochs {
        let lr = if epoch < cfg.burn_in_epochs {
            cfg.learning_rate * cfg.burn_in_lr_scale
        } else {
            cfg.learning_rate
        };
        let mut r = rng::derive(cfg.seed, Stream::Embedding, 0, epoch as u64);
        pairs.shuffle(&mut r);
        let mut total = 0.0;
        for &(u, v) in &pairs {
            slots.clear();
            slots.push(v);
            let skip = &excluded[u];
            let pool = n - skip.len();
            for _ in 0..cfg.negatives_per_positive {
                slots.push(if pool == 0 { u } else { nth_allowed(r.gen_range(0..pool), skip) });
            }
            let rows: Vec<Vec<f64>> = slots.iter().map(|&s| emb.vectors.row(s).to_vec()).collect();
            let center = emb.vectors.row(u).to_vec();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let is_self: Vec<bool> = slots.iter().map(|&s| s == u).collect();
            let (loss, g_center, g_targets) = edge_loss(&center, &refs, &is_self);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("poincare loss at epoch {epoch}")));
            }
            total += loss;

            // Accumulate per node so repeated negatives get a single update.
            let mut acc: Vec<(usize, Vec<f64>)> = vec![(u, g_center)];
            for (&s, g) in slots.iter().zip(g_targets) {
                match acc.iter_mut().find(|(i, _)| *i == s) {
                    Some((_, a)) => a.iter_mut().zip(&g).for_each(|(x, y)| *x += y),
                    None => acc.push((s, g)),
                }
            }
            for (node, g) in acc {
                let mut row = emb.vectors.row_mut(node);
                let theta = row.as_slice_mut().expect("row-major");
                let step = riemannian_scale(&g, theta);
                for (t, s) in theta.iter_mut().zip(&step) {
                    *t -= lr * s;
                }
                project_to_ball(theta, cfg.ball_eps);
            }
        }
        history.push(total / pairs.len() as f64);
    }
    Ok((emb, history))
}

/// The `r`-th node (from 0) not listed in the sorted `skip`.
fn nth_allowed(r: usize, skip: &[usize]) -> usize {
    let mut node = r;
    for &e in skip {
        if e <= node {
            node += 1;
        } else {
            break;
        }
    }
    node
}

/// Rows of the embedding for the level-`k` labels of the augmented tree, in
/// label order. Padding copies reuse the row of the node they copy.
pub fn embedding_for_level(emb: &PoincareEmbedding, tree: &AugmentedLabelTree, k: usize) -> Result<Array2<f64>> {
    let labels = tree.level_labels(k)?;
    let mut out = Array2::zeros((labels.len(), emb.dim()));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        // padding copies carry their target's label, so only the level changes
        let (level, _) = tree.origin(k, i);
        let key = node_key(level, &labels[i]);
        let src = emb.row(&key).ok_or(Error::UnknownLabel(key))?;
        row.assign(&src);
    }
    Ok(out)
}

/// Mean distance over the tree's parent-child edges.
pub fn mean_edge_distance(emb: &PoincareEmbedding, tree: &LabelTree) -> f64 {
    let edges = tree.edges();
    edges.iter().map(|&(a, b)| emb.distance(a, b)).sum::<f64>() / edges.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_tree::augment_tree;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn nth_allowed_matches_filtered_list() {
        let n = 9;
        for skip in [vec![0], vec![4], vec![0, 1, 2], vec![2, 5, 8], vec![8]] {
            let allowed: Vec<usize> = (0..n).filter(|w| !skip.contains(w)).collect();
            for (r, &w) in allowed.iter().enumerate() {
                assert_eq!(nth_allowed(r, &skip), w);
            }
        }
    }

    #[test]
    fn distance_examples() {
        let u = [0.1, -0.2];
        assert_eq!(poincare_distance(&u, &u).unwrap(), 0.0);
        let d = poincare_distance(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert!((d - 3f64.ln()).abs() < 1e-12);
        assert!(poincare_distance(&[1.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(poincare_distance(&[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn riemannian_scale_examples() {
        assert_eq!(riemannian_scale(&[1.0, 2.0], &[0.0, 0.0]), vec![0.25, 0.5]);
        assert_eq!(riemannian_scale(&[0.0, 0.0], &[0.3, 0.1]), vec![0.0, 0.0]);
        let g = riemannian_scale(&[1.0, 0.0], &[0.9, 0.0]);
        assert!((g[0] - 0.009025).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn projection_examples() {
        let mut inside = [0.3, 0.4];
        project_to_ball(&mut inside, 1e-5);
        assert_eq!(inside, [0.3, 0.4]);
        let mut out = [2.0, 0.0];
        project_to_ball(&mut out, 1e-5);
        assert!((out[0] - 0.99999).abs() < 1e-15 && out[1] == 0.0);
        let mut zero = [0.0, 0.0];
        project_to_ball(&mut zero, 1e-5);
        assert_eq!(zero, [0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        let cfg = EmbedConfig {
            negatives_per_positive: 0,
            ..EmbedConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = EmbedConfig {
            burn_in_epochs: 500,
            ..EmbedConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = EmbedConfig {
            dim: 1,
            ..EmbedConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn two_node_tree_pulls_together() {
        let tree = LabelTree::from_paths(&[s(&["a"])]).unwrap();
        let cfg = EmbedConfig {
            dim: 2,
            epochs: 30,
            burn_in_epochs: 5,
            ..EmbedConfig::default()
        };
        let mut init = init_embedding(&tree, &cfg);
        init.vectors.row_mut(1).assign(&ndarray::arr1(&[0.5, 0.0]));
        let before = init.distance(0, 1);
        let after = train_poincare_from(&tree, &cfg, init).unwrap().0.distance(0, 1);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn training_is_reproducible_and_stays_in_ball() {
        let tree = LabelTree::from_paths(&[s(&["a", "b"]), s(&["a", "c"]), s(&["d", "e"])]).unwrap();
        let cfg = EmbedConfig {
            dim: 3,
            epochs: 40,
            learning_rate: 1.0,
            ..EmbedConfig::default()
        };
        let a = train_poincare(&tree, &cfg).unwrap();
        let b = train_poincare(&tree, &cfg).unwrap();
        assert_eq!(a.vectors, b.vectors);
        for row in a.vectors.rows() {
            assert!(sq_norm(row.as_slice().unwrap()).sqrt() <= 1.0 - cfg.ball_eps + 1e-15);
        }
    }

    #[test]
    fn level_rows_follow_label_order() {
        let tree = LabelTree::from_paths(&[s(&["A", "A2"]), s(&["A", "A1"]), s(&["B"])]).unwrap();
        let aug = augment_tree(&tree);
        let cfg = EmbedConfig {
            dim: 2,
            epochs: 1,
            burn_in_epochs: 0,
            ..EmbedConfig::default()
        };
        let emb = train_poincare(&tree, &cfg).unwrap();
        let rows = embedding_for_level(&emb, &aug, 2).unwrap();
        assert_eq!(aug.level_labels(2).unwrap(), &s(&["A1", "A2", "B"])[..]);
        assert_eq!(rows.row(0), emb.row("2:A1").unwrap());
        assert_eq!(rows.row(1), emb.row("2:A2").unwrap());
        // padded copy of the level-1 target B reuses its level-1 vector
        assert_eq!(rows.row(2), emb.row("1:B").unwrap());
        let lvl1 = embedding_for_level(&emb, &aug, 1).unwrap();
        assert_eq!(lvl1.row(1), emb.row("1:B").unwrap());
    }

    #[test]
    fn single_chain_level_one() {
        let tree = LabelTree::from_paths(&[s(&["x", "y"])]).unwrap();
        let aug = augment_tree(&tree);
        let emb = init_embedding(&tree, &EmbedConfig::default());
        let m = embedding_for_level(&emb, &aug, 1).unwrap();
        assert_eq!(m.dim(), (1, 50));
        assert_eq!(m.row(0), emb.row("1:x").unwrap());
    }

    #[test]
    fn unmapped_label_is_an_error() {
        let tree = LabelTree::from_paths(&[s(&["x", "y"])]).unwrap();
        let other = LabelTree::from_paths(&[s(&["x", "z"])]).unwrap();
        let emb = init_embedding(&other, &EmbedConfig::default());
        assert!(matches!(
            embedding_for_level(&emb, &augment_tree(&tree), 2),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn file_round_trip_is_lossless() {
        let tree = LabelTree::from_paths(&[s(&["a", "b"]), s(&["c"])]).unwrap();
        let emb = init_embedding(&tree, &EmbedConfig { dim: 4, ..EmbedConfig::default() });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        emb.write(&p).unwrap();
        let back = PoincareEmbedding::read(&p, emb.ball_eps).unwrap();
        assert_eq!(back, emb);
        let p2 = dir.path().join("emb2.txt");
        back.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn triangle_inequality_and_symmetry(
            a in proptest::collection::vec(-0.55f64..0.55, 3),
            b in proptest::collection::vec(-0.55f64..0.55, 3),
            c in proptest::collection::vec(-0.55f64..0.55, 3),
        ) {
            let ab = poincare_distance(&a, &b).unwrap();
            let ba = poincare_distance(&b, &a).unwrap();
            let bc = poincare_distance(&b, &c).unwrap();
            let ac = poincare_distance(&a, &c).unwrap();
            proptest::prop_assert!((ab - ba).abs() < 1e-12);
            proptest::prop_assert!(ab >= 0.0);
            proptest::prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
