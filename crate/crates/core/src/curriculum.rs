//! Level-by-level training over the augmented label tree, with knowledge
//! transfer of decoder queries between levels, and the flat baseline.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::hyperbolic::{embedding_for_level, PoincareEmbedding};
use crate::label_tree::AugmentedLabelTree;
use crate::loss::{batch_reduce, Loss};
use crate::metrics::{evaluate, EvalResult};
use crate::network::{
    backward, forward, xavier, AdamState, Correction, CorrectionMode, DecoderParams, EncoderParams, Gradients, Model,
};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hicu,
    Flat,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hicu" => Ok(Mode::Hicu),
            "flat" => Ok(Mode::Flat),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Validation metric watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    MicroF1,
    MacroF1,
    MicroAuc,
    MacroAuc,
    PAtK(usize),
}

impl StopMetric {
    pub fn read(&self, r: &EvalResult) -> Option<f64> {
        match self {
            StopMetric::MicroF1 => Some(r.micro_f1),
            StopMetric::MacroF1 => Some(r.macro_f1),
            StopMetric::MicroAuc => r.micro_auc,
            StopMetric::MacroAuc => r.macro_auc,
            StopMetric::PAtK(k) => r.p_at_k.get(k).copied(),
        }
    }
}

impl std::str::FromStr for StopMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro_f1" => Ok(StopMetric::MicroF1),
            "macro_f1" => Ok(StopMetric::MacroF1),
            "micro_auc" => Ok(StopMetric::MicroAuc),
            "macro_auc" => Ok(StopMetric::MacroAuc),
            _ => s
                .strip_prefix("p@")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(StopMetric::PAtK)
                .ok_or_else(|| Error::Config(format!("unknown early-stop metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub mode: Mode,
    /// One entry per level of the augmented tree.
    pub epochs_per_level: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub correction: CorrectionMode,
    pub loss: Loss,
    pub early_stop_metric: StopMetric,
    pub patience: usize,
    /// Copy Q from parents when moving down a level.
    pub knowledge_transfer: bool,
    /// Also copy W and b from parents.
    pub transfer_output_layer: bool,
    pub carry_adam: bool,
    pub reinit_fc: bool,
    pub d_f: usize,
    pub kernel_width: usize,
    pub finetune_embeddings: bool,
    pub threshold: f64,
    pub p_at: Vec<usize>,
    pub workers: usize,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            mode: Mode::Hicu,
            epochs_per_level: vec![2, 3, 5, 10, 50],
            batch_size: 16,
            learning_rate: 1e-3,
            correction: CorrectionMode::None,
            loss: Loss::Bce,
            early_stop_metric: StopMetric::MicroF1,
            patience: 10,
            knowledge_transfer: true,
            transfer_output_layer: false,
            carry_adam: false,
            reinit_fc: false,
            d_f: 32,
            kernel_width: 3,
            finetune_embeddings: true,
            threshold: crate::metrics::DEFAULT_F1_THRESHOLD,
            p_at: crate::metrics::DEFAULT_P_AT.to_vec(),
            workers: 1,
            seed: 0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.d_f == 0 {
            return bad("d_f must be positive");
        }
        if self.kernel_width % 2 == 0 {
            return bad("kernel width must be odd");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.epochs_per_level.is_empty() {
            return bad("epochs_per_level is empty");
        }
        if let Loss::Asl(a) = &self.loss {
            a.validate()?;
        }
        Ok(())
    }
}

/// Query columns of the children, each copied from its parent's column.
pub fn knowledge_transfer(q: &Array2<f64>, parent_map: &[usize]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((q.nrows(), parent_map.len()));
    for (i, &p) in parent_map.iter().enumerate() {
        if p >= q.ncols() {
            return Err(Error::Shape(format!("parent index {p} outside {} columns", q.ncols())));
        }
        out.column_mut(i).assign(&q.column(p));
    }
    Ok(out)
}

/// Decoder for level `k`. Without `prev` every tensor is drawn fresh; with
/// it, Q (and optionally W, b) follow the parent map and fc is carried over.
pub fn init_level_decoder(
    prev: Option<&DecoderParams>,
    tree: &AugmentedLabelTree,
    k: usize,
    cfg: &CurriculumConfig,
    d_h: usize,
) -> Result<DecoderParams> {
    let l = tree.level_labels(k)?.len();
    let d_f = cfg.d_f;
    let mut r = rng::derive(cfg.seed, Stream::Init, k as u64, 0);
    let fresh_w = xavier(d_f, l, &mut r);
    let transfer_from = match prev {
        Some(p) if k > 1 => {
            if p.labels() != tree.level_labels(k - 1)?.len() || p.d_f() != d_f {
                return Err(Error::Shape(format!(
                    "previous decoder has {} labels, level {} has {}",
                    p.labels(),
                    k - 1,
                    tree.level_labels(k - 1)?.len()
                )));
            }
            Some((p, tree.parent_index_map(k - 1)?))
        }
        _ => None,
    };
    let q = match &transfer_from {
        Some((p, map)) if cfg.knowledge_transfer => knowledge_transfer(&p.q, map)?,
        _ => xavier(d_f, l, &mut r),
    };
    let (w, b) = match &transfer_from {
        Some((p, map)) if cfg.transfer_output_layer => (
            knowledge_transfer(&p.w, map)?,
            Array1::from_iter(map.iter().map(|&i| p.b[i])),
        ),
        _ => (fresh_w, Array1::zeros(l)),
    };
    let correction = match prev {
        Some(p) if !cfg.reinit_fc => p.correction.clone(),
        _ => {
            let fc_level = if cfg.reinit_fc { k as u64 } else { 0 };
            Correction::xavier(cfg.correction, d_f, d_h, &mut rng::derive(cfg.seed, Stream::Init, fc_level, 1))
        }
    };
    Ok(DecoderParams { q, w, b, correction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub level: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Option<EvalResult>,
    /// Set at the final level when the watched metric improved.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EarlyStop {
    pub best_metric: Option<f64>,
    pub best_epoch: Option<usize>,
    pub bad_epochs: usize,
    pub best_model: Option<Model>,
    pub stopped: bool,
}

/// Everything needed to continue training at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    /// Level currently being trained.
    pub level: usize,
    /// Epochs completed at `level`.
    pub epoch: usize,
    pub adam: AdamState,
    pub early: EarlyStop,
    pub records: Vec<EpochRecord>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: Mode,
    pub seed: u64,
    pub final_level: usize,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub stopped_early: bool,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub config: CurriculumConfig,
    pub records: Vec<EpochRecord>,
    pub summary: TrainSummary,
}

impl TrainReport {
    /// Loss per epoch for each level, in level order.
    pub fn level_losses(&self) -> Vec<(usize, Vec<f64>)> {
        let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some((l, v)) if *l == r.level => v.push(r.train_loss),
                _ => out.push((r.level, vec![r.train_loss])),
            }
        }
        out
    }
}

/// Level-`k` binary targets of every document.
pub fn level_targets(ds: &Dataset, tree: &AugmentedLabelTree, k: usize) -> Result<Vec<Vec<f64>>> {
    let n_leaves = tree.level_labels(tree.max_level())?.len();
    ds.docs
        .iter()
        .map(|d| {
            let mut y = vec![false; n_leaves];
            for l in &d.labels {
                let i = tree.leaf_index(l).ok_or_else(|| Error::UnknownDocLabel {
                    doc: d.id.clone(),
                    code: l.clone(),
                })?;
                y[i] = true;
            }
            Ok(tree
                .ancestor_targets(&y, k)?
                .into_iter()
                .map(|b| if b { 1.0 } else { 0.0 })
                .collect())
        })
        .collect()
}

pub struct Trainer<'a> {
    pub cfg: &'a CurriculumConfig,
    pub tree: &'a AugmentedLabelTree,
    pub hyperbolic: Option<&'a PoincareEmbedding>,
    pub train: &'a Dataset,
    pub valid: &'a Dataset,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: &'a CurriculumConfig,
        tree: &'a AugmentedLabelTree,
        hyperbolic: Option<&'a PoincareEmbedding>,
        train: &'a Dataset,
        valid: &'a Dataset,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.epochs_per_level.len() != tree.max_level() {
            return Err(Error::Config(format!(
                "epochs_per_level has {} entries for a tree of depth {}",
                cfg.epochs_per_level.len(),
                tree.max_level()
            )));
        }
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if cfg.correction != CorrectionMode::None && hyperbolic.is_none() {
            return Err(Error::Config(format!(
                "correction {} needs hyperbolic label embeddings",
                cfg.correction.as_str()
            )));
        }
        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| Error::Config(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Trainer {
            cfg,
            tree,
            hyperbolic,
            train,
            valid,
            pool,
        })
    }

    fn levels(&self) -> Vec<usize> {
        let k_max = self.tree.max_level();
        match self.cfg.mode {
            Mode::Hicu => (1..=k_max).collect(),
            Mode::Flat => vec![k_max],
        }
    }

    fn d_h(&self) -> usize {
        self.hyperbolic.map_or(0, |e| e.dim())
    }

    /// Hyperbolic rows of the level-`k` labels when a correction is active.
    pub fn level_rows(&self, k: usize) -> Result<Option<Array2<f64>>> {
        match (self.cfg.correction, self.hyperbolic) {
            (CorrectionMode::None, _) => Ok(None),
            (_, Some(e)) => Ok(Some(embedding_for_level(e, self.tree, k)?)),
            (_, None) => Err(Error::Config("missing hyperbolic embeddings".into())),
        }
    }

    /// Fresh model at the first level of the schedule.
    pub fn init_state(&self, word_embeddings: Array2<f64>) -> Result<TrainState> {
        let first = self.levels()[0];
        let encoder = EncoderParams::new(
            word_embeddings,
            self.cfg.kernel_width,
            self.cfg.d_f,
            self.cfg.finetune_embeddings,
            &mut rng::derive(self.cfg.seed, Stream::Init, 0, 0),
        )?;
        let decoder = init_level_decoder(None, self.tree, first, self.cfg, self.d_h())?;
        Ok(TrainState {
            model: Model { encoder, decoder },
            level: first,
            epoch: 0,
            adam: AdamState::new(self.cfg.learning_rate),
            early: EarlyStop::default(),
            records: Vec::new(),
            finished: false,
        })
    }

    fn map_docs<T: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        match &self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }

    /// Sigmoid outputs for every document at the decoder's level.
    pub fn predict(&self, model: &Model, ds: &Dataset, e_h: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let l = model.decoder.labels();
        let rows = self.map_docs(ds.len(), |i| Ok(forward(&ds.docs[i].tokens, model, e_h)?.0))?;
        let mut out = Array2::zeros((ds.len(), l));
        for (mut row, p) in out.rows_mut().into_iter().zip(rows) {
            row.assign(&p);
        }
        Ok(out)
    }

    fn validate_level(&self, model: &Model, k: usize, e_h: Option<&Array2<f64>>) -> Result<Option<EvalResult>> {
        if self.valid.is_empty() {
            return Ok(None);
        }
        let scores = self.predict(model, self.valid, e_h)?;
        let targets = level_targets(self.valid, self.tree, k)?;
        let labels = Array2::from_shape_fn(scores.dim(), |(i, j)| targets[i][j] > 0.5);
        Ok(Some(evaluate(&scores, &labels, &self.cfg.p_at, self.cfg.threshold)?))
    }

    fn advance_level(&self, state: &mut TrainState) -> Result<()> {
        let levels = self.levels();
        let pos = levels.iter().position(|&l| l == state.level).expect("state level is scheduled");
        let next = levels[pos + 1];
        let decoder = init_level_decoder(Some(&state.model.decoder), self.tree, next, self.cfg, self.d_h())?;
        state.model.decoder = decoder;
        if self.cfg.carry_adam {
            let reinit_fc = self.cfg.reinit_fc;
            state
                .adam
                .reset_where(|n| n.starts_with("decoder.") && (reinit_fc || !n.starts_with("decoder.fc")));
        } else {
            state.adam = AdamState::new(self.cfg.learning_rate);
        }
        state.level = next;
        state.epoch = 0;
        Ok(())
    }

    /// Trains until the schedule ends or `max_epochs` epochs have run in this
    /// call. Stops only at epoch boundaries, so the state can be saved and
    /// resumed bit for bit.
    pub fn run(&self, state: &mut TrainState, max_epochs: Option<usize>) -> Result<()> {
        let k_max = self.tree.max_level();
        let mut budget = max_epochs.unwrap_or(usize::MAX);
        while !state.finished {
            let k = state.level;
            let planned = self.cfg.epochs_per_level[k - 1];
            let done_here = state.epoch >= planned || (k == k_max && state.early.stopped);
            if done_here {
                if k == k_max {
                    if let Some(best) = state.early.best_model.take() {
                        state.model = best;
                    }
                    state.finished = true;
                    break;
                }
                self.advance_level(state)?;
                continue;
            }
            if budget == 0 {
                break;
            }
            budget -= 1;
            let e_h = self.level_rows(k)?;
            let targets = level_targets(self.train, self.tree, k)?;
            let record = self.train_epoch(state, &targets, e_h.as_ref())?;
            state.records.push(record);
            state.epoch += 1;
        }
        Ok(())
    }

    fn train_epoch(&self, state: &mut TrainState, targets: &[Vec<f64>], e_h: Option<&Array2<f64>>) -> Result<EpochRecord> {
        let (k, epoch) = (state.level, state.epoch);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng::derive(self.cfg.seed, Stream::Shuffle, k as u64, epoch as u64));
        }
        let mut losses = Vec::with_capacity(order.len());
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let model = &state.model;
            let loss = &self.cfg.loss;
            let per_doc = self.map_docs(batch.len(), |j| {
                let d = batch[j];
                let (_, trace) = forward(&self.train.docs[d].tokens, model, e_h)?;
                let (l, dlogits) = loss.evaluate(trace.logits.as_slice().expect("contiguous"), &targets[d])?;
                Ok((l, backward(&trace, model, &dlogits)?))
            })?;
            let mut grads = Gradients::zeros_like(model);
            for (l, g) in &per_doc {
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("loss at level {k}, epoch {epoch}, batch {b}")));
                }
                losses.push(*l);
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            state
                .adam
                .step_model(&mut state.model, &grads)
                .map_err(|e| Error::NonFinite(format!("level {k}, epoch {epoch}, batch {b}: {e}")))?;
        }
        let train_loss = batch_reduce(&losses)?;
        let valid = self.validate_level(&state.model, k, e_h)?;

        let mut improved = false;
        if k == self.tree.max_level() {
            if let Some(m) = valid.as_ref().and_then(|v| self.cfg.early_stop_metric.read(v)) {
                let es = &mut state.early;
                if es.best_metric.map_or(true, |b| m > b) {
                    es.best_metric = Some(m);
                    es.best_epoch = Some(epoch);
                    es.bad_epochs = 0;
                    es.best_model = Some(state.model.clone());
                    improved = true;
                } else {
                    es.bad_epochs += 1;
                    if es.bad_epochs > self.cfg.patience {
                        es.stopped = true;
                    }
                }
            }
        }
        log::info!("level {k} epoch {epoch}: train loss {train_loss:.6}");
        Ok(EpochRecord {
            level: k,
            epoch,
            train_loss,
            valid,
            improved,
        })
    }

    pub fn report(&self, state: &TrainState) -> TrainReport {
        TrainReport {
            config: self.cfg.clone(),
            records: state.records.clone(),
            summary: TrainSummary {
                mode: self.cfg.mode,
                seed: self.cfg.seed,
                final_level: state.level,
                best_epoch: state.early.best_epoch,
                best_metric: state.early.best_metric,
                stopped_early: state.early.stopped,
                epochs_run: state.records.len(),
            },
        }
    }
}

fn run_mode(
    mode: Mode,
    train: &Dataset,
    valid: &Dataset,
    tree: &AugmentedLabelTree,
    emb: Option<&PoincareEmbedding>,
    word_embeddings: Array2<f64>,
    cfg: &CurriculumConfig,
) -> Result<(Model, TrainReport)> {
    let cfg = CurriculumConfig { mode, ..cfg.clone() };
    let trainer = Trainer::new(&cfg, tree, emb, train, valid)?;
    let mut state = trainer.init_state(word_embeddings)?;
    trainer.run(&mut state, None)?;
    let report = trainer.report(&state);
    Ok((state.model, report))
}

/// Full curriculum: every level in turn, best final-level state returned.
pub fn run_hicu(
    train: &Dataset,
    valid: &Dataset,
    tree: &AugmentedLabelTree,
    emb: Option<&PoincareEmbedding>,
    word_embeddings: Array2<f64>,
    cfg: &CurriculumConfig,
) -> Result<(Model, TrainReport)> {
    run_mode(Mode::Hicu, train, valid, tree, emb, word_embeddings, cfg)
}

/// Baseline: a single round at the deepest level from a fresh decoder.
pub fn run_flat(
    train: &Dataset,
    valid: &Dataset,
    tree: &AugmentedLabelTree,
    emb: Option<&PoincareEmbedding>,
    word_embeddings: Array2<f64>,
    cfg: &CurriculumConfig,
) -> Result<(Model, TrainReport)> {
    run_mode(Mode::Flat, train, valid, tree, emb, word_embeddings, cfg)
}

/// One attended token: position in the document, vocabulary index, weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttendedToken {
    pub position: usize,
    pub token: usize,
    pub weight: f64,
}

/// Highest attention weights of one final-level label over a document,
/// ties broken by position.
pub fn inspect_attention(
    model: &Model,
    tree: &AugmentedLabelTree,
    e_h: Option<&Array2<f64>>,
    tokens: &[usize],
    label: &str,
    top_n: usize,
) -> Result<Vec<AttendedToken>> {
    let k = tree.max_level();
    if model.decoder.labels() != tree.level_labels(k)?.len() {
        return Err(Error::Shape("model decoder is not at the final level".into()));
    }
    let c = tree
        .index_of(k, label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let (_, trace) = forward(tokens, model, e_h)?;
    let col = trace.attention.column(c);
    let mut out: Vec<AttendedToken> = tokens
        .iter()
        .enumerate()
        .map(|(position, &token)| AttendedToken {
            position,
            token,
            weight: col[position],
        })
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.position.cmp(&b.position)));
    out.truncate(top_n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_tree::{augment_tree, LabelTree};
    use ndarray::array;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn toy() -> AugmentedLabelTree {
        augment_tree(
            &LabelTree::from_paths(&[
                s(&["A", "A1", "A1x"]),
                s(&["A", "A1", "A1y"]),
                s(&["A", "A2", "A2x"]),
                s(&["B", "B1", "B1x"]),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn transfer_copies_parent_columns() {
        let q = array![[1.0, 2.0], [3.0, 4.0]];
        let t = knowledge_transfer(&q, &[0, 0, 1]).unwrap();
        assert_eq!(t, array![[1.0, 1.0, 2.0], [3.0, 3.0, 4.0]]);
        assert!(knowledge_transfer(&q, &[2]).is_err());
        let single = knowledge_transfer(&array![[0.5]], &[0]).unwrap();
        assert_eq!(single, array![[0.5]]);
    }

    #[test]
    fn level_decoder_init() {
        let tree = toy();
        let cfg = CurriculumConfig {
            d_f: 3,
            seed: 11,
            ..CurriculumConfig::default()
        };
        let d1 = init_level_decoder(None, &tree, 1, &cfg, 0).unwrap();
        assert_eq!(d1, init_level_decoder(None, &tree, 1, &cfg, 0).unwrap());
        let d2 = init_level_decoder(Some(&d1), &tree, 2, &cfg, 0).unwrap();
        // level 2: A1, A2, B1 with parents A, A, B
        assert_eq!(d2.q.column(0), d1.q.column(0));
        assert_eq!(d2.q.column(1), d1.q.column(0));
        assert_eq!(d2.q.column(2), d1.q.column(1));
        assert_ne!(d2.w.column(0), d1.w.column(0));

        let with_out = CurriculumConfig {
            transfer_output_layer: true,
            ..cfg.clone()
        };
        let mut d1b = d1.clone();
        d1b.b = array![0.25, -0.5];
        let d2b = init_level_decoder(Some(&d1b), &tree, 2, &with_out, 0).unwrap();
        assert_eq!(d2b.w.column(1), d1b.w.column(0));
        assert_eq!(d2b.w.column(2), d1b.w.column(1));
        assert_eq!(d2b.b, array![0.25, 0.25, -0.5]);
        assert!(init_level_decoder(Some(&d2), &tree, 2, &cfg, 0).is_err());
    }

    #[test]
    fn stop_metric_parsing() {
        assert_eq!("p@8".parse::<StopMetric>().unwrap(), StopMetric::PAtK(8));
        assert_eq!("micro_f1".parse::<StopMetric>().unwrap(), StopMetric::MicroF1);
        assert!("p@0".parse::<StopMetric>().is_err());
        assert!("accuracy".parse::<StopMetric>().is_err());
    }
}
