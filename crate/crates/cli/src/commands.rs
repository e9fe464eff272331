//! The six subcommands. Each returns a summary value whose `Display` form is
//! what the binary prints; files are written as a side effect.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use hicu::checkpoint::Checkpoint;
use hicu::curriculum::{inspect_attention, TrainReport, Trainer};
use hicu::data_io::{
    filter_top_k_labels, index_documents, load_embeddings, read_jsonl, restrict_labels, synth_generate, Dataset,
    RawDocument, Vocab,
};
use hicu::hyperbolic::{embedding_for_level, mean_edge_distance, train_poincare_with_history, PoincareEmbedding};
use hicu::io_util::{fmt_f64, write_atomic};
use hicu::label_tree::{augment_tree, build_label_tree, AugmentedLabelTree, IcdCode, LabelTree, RangeTable};
use hicu::metrics::{evaluate, per_label_auc, EvalResult};
use hicu::network::{forward, CorrectionMode, Model};
use hicu::{Error, Result};

use crate::config::RunConfig;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REPORT_FILE: &str = "report.jsonl";
pub const TIMING_FILE: &str = "timing.txt";
pub const RUN_CONF_FILE: &str = "run.conf";
pub const EVAL_FILE: &str = "eval.json";

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
}

struct Splits {
    train: Option<Vec<RawDocument>>,
    valid: Option<Vec<RawDocument>>,
    test: Option<Vec<RawDocument>>,
}

impl Splits {
    fn read(cfg: &RunConfig) -> Result<Self> {
        let read = |p: &Option<PathBuf>| p.as_deref().map(read_jsonl).transpose();
        let mut s = Splits {
            train: read(&cfg.train)?,
            valid: read(&cfg.valid)?,
            test: read(&cfg.test)?,
        };
        if cfg.top_k_labels > 0 {
            let train = s
                .train
                .as_ref()
                .ok_or_else(|| Error::Config("--top-k-labels needs --train".into()))?;
            let (kept_docs, codes) = filter_top_k_labels(train, cfg.top_k_labels)?;
            let kept: BTreeSet<String> = codes.into_iter().collect();
            s.train = Some(kept_docs);
            s.valid = s.valid.map(|d| restrict_labels(&d, &kept));
            s.test = s.test.map(|d| restrict_labels(&d, &kept));
        }
        Ok(s)
    }

    fn all(&self) -> impl Iterator<Item = &RawDocument> {
        [&self.train, &self.valid, &self.test]
            .into_iter()
            .flatten()
            .flat_map(|v| v.iter())
    }
}

/// The tree file when given, else the tree over every code in the splits.
fn load_tree(cfg: &RunConfig, splits: &Splits) -> Result<LabelTree> {
    if let Some(t) = &cfg.tree {
        return LabelTree::read_tree_file(t);
    }
    let ranges = RangeTable::load(required(&cfg.ranges, "ranges")?)?;
    let codes: BTreeSet<&str> = splits.all().flat_map(|d| d.labels.iter().map(String::as_str)).collect();
    let codes = codes.into_iter().map(IcdCode::parse_any).collect::<Result<Vec<_>>>()?;
    build_label_tree(&codes, &ranges)
}

fn keep_known_labels(docs: Vec<RawDocument>, tree: &LabelTree, cfg: &RunConfig) -> Vec<RawDocument> {
    if cfg.top_k_labels == 0 {
        return docs;
    }
    let kept: BTreeSet<String> = tree.target_labels().into_iter().map(String::from).collect();
    restrict_labels(&docs, &kept)
}

// ---------------------------------------------------------------- build-tree

#[derive(Debug, Clone, PartialEq)]
pub struct TreeSummary {
    /// Nodes per level 1.. of the tree as built.
    pub natural: Vec<usize>,
    /// Nodes per level 1..=K_max after padding.
    pub augmented: Vec<usize>,
    pub targets: usize,
    pub path: PathBuf,
}

impl fmt::Display for TreeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "wrote {} ({} target codes)", self.path.display(), self.targets)?;
        writeln!(f, "level  nodes  padded")?;
        for (k, padded) in self.augmented.iter().enumerate() {
            let nat = self.natural.get(k).copied().unwrap_or(0);
            writeln!(f, "{:>5}  {:>5}  {:>6}", k + 1, nat, padded)?;
        }
        Ok(())
    }
}

pub fn cmd_build_tree(cfg: &RunConfig) -> Result<TreeSummary> {
    let out = required(&cfg.out, "out")?;
    let splits = Splits::read(cfg)?;
    if splits.train.is_none() && splits.valid.is_none() && splits.test.is_none() {
        return Err(Error::Config("build-tree needs at least one of --train/--valid/--test".into()));
    }
    let tree = load_tree(cfg, &splits)?;
    tree.write_tree_file(out)?;
    let aug = augment_tree(&tree);
    Ok(TreeSummary {
        natural: tree.level_counts()[1..].to_vec(),
        augmented: aug.level_counts()[1..].to_vec(),
        targets: tree.targets().len(),
        path: out.to_path_buf(),
    })
}

// --------------------------------------------------------------------- embed

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedSummary {
    pub nodes: usize,
    pub dim: usize,
    pub final_loss: f64,
    pub mean_edge_distance: f64,
    /// Mean distance between siblings and between same-level non-siblings.
    pub sibling: Option<f64>,
    pub non_sibling: Option<f64>,
    pub path: PathBuf,
}

impl fmt::Display for EmbedSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "wrote {} ({} nodes, dimension {})", self.path.display(), self.nodes, self.dim)?;
        writeln!(f, "final loss           {:.6}", self.final_loss)?;
        writeln!(f, "mean edge distance   {:.4}", self.mean_edge_distance)?;
        writeln!(f, "sibling distance     {}", opt(self.sibling))?;
        writeln!(f, "non-sibling distance {}", opt(self.non_sibling))
    }
}

/// Mean embedded distance between same-level siblings and same-level
/// non-siblings, over levels below the root.
pub fn sibling_distances(emb: &PoincareEmbedding, tree: &LabelTree) -> (Option<f64>, Option<f64>) {
    let (mut sib, mut n_sib, mut non, mut n_non) = (0.0, 0usize, 0.0, 0usize);
    for k in 1..=tree.max_level() {
        let n = tree.level_counts()[k];
        for i in 0..n {
            for j in i + 1..n {
                let d = emb.distance(tree.flat_index(k, i), tree.flat_index(k, j));
                if tree.parent_of(k, i) == tree.parent_of(k, j) {
                    sib += d;
                    n_sib += 1;
                } else {
                    non += d;
                    n_non += 1;
                }
            }
        }
    }
    let mean = |s: f64, c: usize| (c > 0).then(|| s / c as f64);
    (mean(sib, n_sib), mean(non, n_non))
}

pub fn cmd_embed(cfg: &RunConfig) -> Result<EmbedSummary> {
    let out = required(&cfg.out, "out")?;
    let splits = if cfg.tree.is_some() {
        Splits {
            train: None,
            valid: None,
            test: None,
        }
    } else {
        Splits::read(cfg)?
    };
    let tree = load_tree(cfg, &splits)?;
    let (emb, history) = train_poincare_with_history(&tree, &cfg.embed_config())?;
    emb.write(out)?;
    let (sibling, non_sibling) = sibling_distances(&emb, &tree);
    Ok(EmbedSummary {
        nodes: tree.node_count(),
        dim: emb.dim(),
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        mean_edge_distance: mean_edge_distance(&emb, &tree),
        sibling,
        non_sibling,
        path: out.to_path_buf(),
    })
}

// --------------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub dir: PathBuf,
    pub docs: [usize; 3],
    pub leaves: usize,
    pub leaves_in_train: usize,
    pub level_counts: Vec<usize>,
    pub max_leaf_freq: usize,
    pub median_leaf_freq: usize,
    /// Share of training label occurrences taken by the top 10% of leaves.
    pub top_decile_share: f64,
}

impl fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "wrote {}", self.dir.display())?;
        writeln!(f, "documents train/valid/test {}/{}/{}", self.docs[0], self.docs[1], self.docs[2])?;
        writeln!(f, "nodes per level {:?}", self.level_counts)?;
        writeln!(f, "leaves {} ({} seen in train)", self.leaves, self.leaves_in_train)?;
        writeln!(
            f,
            "train leaf frequency: max {}, median {}, top 10% of leaves hold {:.1}% of labels",
            self.max_leaf_freq,
            self.median_leaf_freq,
            100.0 * self.top_decile_share
        )
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let dir = required(&cfg.out, "out")?;
    let corpus = synth_generate(&cfg.synth_config())?;
    corpus.write(dir)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &corpus.train {
        for l in &d.labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    let mut freqs: Vec<usize> = counts.values().copied().collect();
    freqs.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = freqs.iter().sum();
    let top = freqs.len().div_ceil(10);
    Ok(SynthSummary {
        dir: dir.to_path_buf(),
        docs: [corpus.train.len(), corpus.valid.len(), corpus.test.len()],
        leaves: corpus.tree.targets().len(),
        leaves_in_train: freqs.len(),
        level_counts: corpus.tree.level_counts()[1..].to_vec(),
        max_leaf_freq: freqs.first().copied().unwrap_or(0),
        median_leaf_freq: freqs.get(freqs.len() / 2).copied().unwrap_or(0),
        top_decile_share: if total == 0 {
            0.0
        } else {
            freqs[..top].iter().sum::<usize>() as f64 / total as f64
        },
    })
}

// --------------------------------------------------------------------- train

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs in this invocation.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub finished: bool,
    pub dir: PathBuf,
    pub seconds: f64,
}

impl fmt::Display for TrainOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.report.summary;
        writeln!(
            f,
            "{} after {} epochs at level {} ({:.1}s)",
            if self.finished { "finished" } else { "paused" },
            s.epochs_run,
            s.final_level,
            self.seconds
        )?;
        if let (Some(m), Some(e)) = (s.best_metric, s.best_epoch) {
            writeln!(f, "best validation metric {m:.4} at final-level epoch {e}")?;
        }
        if let Some(v) = self.report.records.last().and_then(|r| r.valid.as_ref()) {
            writeln!(f, "last validation micro-F1 {:.4}", v.micro_f1)?;
        }
        writeln!(f, "wrote {}", self.dir.display())
    }
}

/// Report lines: the config echo, one record per epoch, then the summary.
pub fn report_jsonl(echo: &serde_json::Value, report: &TrainReport, finished: bool) -> Vec<u8> {
    let mut lines = vec![serde_json::json!({"type": "config", "config": echo})];
    for r in &report.records {
        let mut v = serde_json::to_value(r).expect("record serializes");
        v["type"] = "epoch".into();
        lines.push(v);
    }
    let mut s = serde_json::to_value(&report.summary).expect("summary serializes");
    s["type"] = "summary".into();
    s["finished"] = finished.into();
    lines.push(s);
    let mut out = Vec::new();
    for l in lines {
        serde_json::to_writer(&mut out, &l).expect("json");
        out.push(b'\n');
    }
    out
}

fn final_rows(hyp: Option<&PoincareEmbedding>, corr: CorrectionMode, aug: &AugmentedLabelTree) -> Result<Option<Array2<f64>>> {
    match (corr, hyp) {
        (CorrectionMode::None, _) => Ok(None),
        (_, Some(h)) => Ok(Some(embedding_for_level(h, aug, aug.max_level())?)),
        (_, None) => Err(Error::Checkpoint("correction is set but no hyperbolic embedding is stored".into())),
    }
}

pub fn cmd_train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    let start = Instant::now();
    let dir = required(&cfg.out, "out")?.to_path_buf();
    required(&cfg.train, "train")?;
    let cur = cfg.curriculum();
    let echo = cfg.echo();
    let splits = Splits::read(cfg)?;

    let resumed = opts.resume.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(c) = &resumed {
        if c.run_config != echo {
            let theirs = c.run_config.as_object().cloned().unwrap_or_default();
            let diff: Vec<String> = echo
                .as_object()
                .expect("echo is an object")
                .iter()
                .filter(|(k, v)| theirs.get(*k) != Some(*v))
                .map(|(k, _)| k.clone())
                .collect();
            return Err(Error::Checkpoint(format!(
                "run config differs from the checkpoint's ({})",
                diff.join(", ")
            )));
        }
    }
    let (tree, vocab, hyperbolic) = match &resumed {
        Some(c) => (c.tree.clone(), c.vocab.clone(), c.hyperbolic.clone()),
        None => {
            let tree = load_tree(cfg, &splits)?;
            let train = splits.train.as_ref().expect("train checked");
            let vocab = Vocab::build(train.iter().map(|d| d.text.as_str()), cfg.min_count);
            let hyperbolic = match (cfg.correction, &cfg.hyp_emb) {
                (CorrectionMode::None, _) => None,
                (_, Some(p)) => Some(PoincareEmbedding::read(p, cfg.embed.ball_eps)?),
                (_, None) => Some(train_poincare_with_history(&tree, &cfg.embed_config())?.0),
            };
            (tree, vocab, hyperbolic)
        }
    };
    let aug = augment_tree(&tree);
    let index = |docs: &Option<Vec<RawDocument>>| -> Result<Dataset> {
        match docs {
            Some(d) => index_documents(&keep_known_labels(d.clone(), &tree, cfg), &vocab, &tree, cfg.max_len),
            None => Ok(Dataset::default()),
        }
    };
    let train = index(&splits.train)?;
    let valid = index(&splits.valid)?;

    let trainer = Trainer::new(&cur, &aug, hyperbolic.as_ref(), &train, &valid)?;
    let mut state = match resumed {
        Some(c) => c.state,
        None => {
            let (words, loaded) = load_embeddings(cfg.word_emb.as_deref(), &vocab, cfg.word_dim, cfg.seed)?;
            if cfg.word_emb.is_some() {
                log::info!("loaded {loaded} of {} word vectors", vocab.len());
            }
            trainer.init_state(words)?
        }
    };
    trainer.run(&mut state, opts.stop_after)?;
    let report = trainer.report(&state);
    let finished = state.finished;

    let ckpt = Checkpoint {
        run_config: echo.clone(),
        curriculum: cur.clone(),
        vocab,
        tree,
        hyperbolic,
        state,
    };
    ckpt.save(&dir.join(CHECKPOINT_FILE))?;
    write_atomic(&dir.join(REPORT_FILE), &report_jsonl(&echo, &report, finished))?;
    write_atomic(&dir.join(RUN_CONF_FILE), cfg.to_config_file().as_bytes())?;
    let seconds = start.elapsed().as_secs_f64();
    write_atomic(&dir.join(TIMING_FILE), format!("wall_seconds {seconds:.3}\n").as_bytes())?;
    eprintln!("train: {seconds:.1}s wall");
    Ok(TrainOutcome {
        report,
        finished,
        dir,
        seconds,
    })
}

// ---------------------------------------------------------------------- eval

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub checkpoint: Option<PathBuf>,
    /// Score matrix written by an earlier `--dump-scores`.
    pub scores: Option<PathBuf>,
    /// `eval.json` of the run to compare against.
    pub baseline: Option<PathBuf>,
    pub dump_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStat {
    pub label: String,
    /// Training frequency, or test positives when no training split is given.
    pub freq: usize,
    pub test_positives: usize,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub freq_min: usize,
    pub freq_max: usize,
    pub labels: usize,
    /// Labels with a defined AUC.
    pub scored: usize,
    pub mean_auc: Option<f64>,
    /// Over labels scored in both runs.
    pub baseline_auc: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub config: serde_json::Value,
    /// `train` or `test`, the split the bucket frequencies come from.
    pub frequency_source: String,
    pub metrics: EvalResult,
    pub labels: Vec<LabelStat>,
    pub buckets: Vec<Bucket>,
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        let opt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "macro-AUC {}  micro-AUC {}", opt(m.macro_auc), opt(m.micro_auc))?;
        writeln!(f, "macro-F1  {:.4}  micro-F1  {:.4}", m.macro_f1, m.micro_f1)?;
        let p: Vec<String> = m.p_at_k.iter().map(|(k, v)| format!("P@{k} {v:.4}")).collect();
        if !p.is_empty() {
            writeln!(f, "{}", p.join("  "))?;
        }
        writeln!(f, "labels without both classes in test: {}", m.skipped_labels)?;
        writeln!(f)?;
        writeln!(f, "AUC by {} frequency quartile", self.frequency_source)?;
        writeln!(
            f,
            "{:<12} {:>9} {:>6} {:>6} {:>8} {:>8} {:>8}",
            "bucket", "freq", "labels", "scored", "AUC", "baseline", "delta"
        )?;
        for b in &self.buckets {
            writeln!(
                f,
                "{:<12} {:>9} {:>6} {:>6} {:>8} {:>8} {:>8}",
                b.name,
                format!("{}-{}", b.freq_min, b.freq_max),
                b.labels,
                b.scored,
                opt(b.mean_auc),
                opt(b.baseline_auc),
                b.delta.map_or("n/a".to_string(), |d| format!("{d:+.4}")),
            )?;
        }
        Ok(())
    }
}

/// Labels sorted by `(freq, label)` and cut into four contiguous groups
/// (rarest first). Every label lands in exactly one group.
pub fn frequency_buckets(labels: &[LabelStat], baseline: Option<&BTreeMap<String, Option<f64>>>) -> Vec<Bucket> {
    let mut order: Vec<&LabelStat> = labels.iter().collect();
    order.sort_by(|a, b| a.freq.cmp(&b.freq).then_with(|| a.label.cmp(&b.label)));
    let n = order.len();
    let names = ["Q1 (rarest)", "Q2", "Q3", "Q4 (common)"];
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (0..4)
        .filter_map(|q| {
            let group = &order[q * n / 4..(q + 1) * n / 4];
            if group.is_empty() {
                return None;
            }
            let aucs: Vec<f64> = group.iter().filter_map(|l| l.auc).collect();
            let (mut ours, mut theirs) = (Vec::new(), Vec::new());
            if let Some(base) = baseline {
                for l in group {
                    if let (Some(a), Some(Some(b))) = (l.auc, base.get(&l.label)) {
                        ours.push(a);
                        theirs.push(*b);
                    }
                }
            }
            let (o, t) = (mean(&ours), mean(&theirs));
            Some(Bucket {
                name: names[q].to_string(),
                freq_min: group[0].freq,
                freq_max: group[group.len() - 1].freq,
                labels: group.len(),
                scored: aucs.len(),
                mean_auc: mean(&aucs),
                baseline_auc: t,
                delta: o.zip(t).map(|(a, b)| a - b),
            })
        })
        .collect()
}

/// Score matrix as TSV: a header `id<TAB>label...`, then one row per document.
pub fn write_scores(path: &Path, ids: &[String], labels: &[String], scores: &Array2<f64>) -> Result<()> {
    let mut s = String::from("id");
    for l in labels {
        s.push('\t');
        s.push_str(l);
    }
    s.push('\n');
    for (id, row) in ids.iter().zip(scores.rows()) {
        s.push_str(id);
        for x in row {
            s.push('\t');
            s.push_str(&fmt_f64(*x));
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_scores(path: &Path) -> Result<(Vec<String>, Vec<String>, Array2<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |line: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let labels: Vec<String> = header.split('\t').skip(1).map(String::from).collect();
    let (mut ids, mut data) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        ids.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<f64> = fields
            .map(|t| t.parse().map_err(|_| bad(i + 2, format!("bad score {t:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != labels.len() {
            return Err(bad(i + 2, format!("{} scores for {} labels", row.len(), labels.len())));
        }
        data.extend(row);
    }
    let m = Array2::from_shape_vec((ids.len(), labels.len()), data).expect("rows checked");
    Ok((ids, labels, m))
}

/// Final-level sigmoid outputs of a checkpoint on every indexed document.
fn checkpoint_scores(ckpt: &Checkpoint, ds: &Dataset) -> Result<Array2<f64>> {
    let aug = augment_tree(&ckpt.tree);
    let k = aug.max_level();
    let l = aug.level_labels(k)?.len();
    if ckpt.state.model.decoder.labels() != l {
        return Err(Error::Checkpoint("training has not reached the final level".into()));
    }
    let e_h = final_rows(ckpt.hyperbolic.as_ref(), ckpt.curriculum.correction, &aug)?;
    let mut out = Array2::zeros((ds.len(), l));
    for (mut row, d) in out.rows_mut().into_iter().zip(&ds.docs) {
        row.assign(&forward(&d.tokens, &ckpt.state.model, e_h.as_ref())?.0);
    }
    Ok(out)
}

pub fn cmd_eval(cfg: &RunConfig, opts: &EvalOptions) -> Result<EvalOutcome> {
    let test_path = required(&cfg.test, "test")?;
    let raw_test = read_jsonl(test_path)?;
    let (ids, labels, scores) = match (&opts.checkpoint, &opts.scores) {
        (Some(c), None) => {
            let ckpt = Checkpoint::load(c)?;
            let raw = keep_known_labels(raw_test.clone(), &ckpt.tree, cfg);
            let ds = index_documents(&raw, &ckpt.vocab, &ckpt.tree, cfg.max_len)?;
            let scores = checkpoint_scores(&ckpt, &ds)?;
            let aug = augment_tree(&ckpt.tree);
            let labels = aug.level_labels(aug.max_level())?.to_vec();
            (ds.docs.into_iter().map(|d| d.id).collect::<Vec<_>>(), labels, scores)
        }
        (None, Some(s)) => read_scores(s)?,
        _ => return Err(Error::Config("eval needs exactly one of --checkpoint and --scores".into())),
    };
    let truth_of: BTreeMap<&str, BTreeSet<&str>> = raw_test
        .iter()
        .map(|d| (d.id.as_str(), d.labels.iter().map(String::as_str).collect()))
        .collect();
    let mut truth = Array2::from_elem(scores.dim(), false);
    for (i, id) in ids.iter().enumerate() {
        let y = truth_of
            .get(id.as_str())
            .ok_or_else(|| Error::Config(format!("scored document {id:?} is not in the test split")))?;
        for (j, l) in labels.iter().enumerate() {
            truth[[i, j]] = y.contains(l.as_str());
        }
    }
    if let Some(p) = &opts.dump_scores {
        write_scores(p, &ids, &labels, &scores)?;
    }

    let metrics = evaluate(&scores, &truth, &cfg.p_at, cfg.threshold)?;
    let aucs = per_label_auc(&scores, &truth)?;
    let (freq_of, frequency_source) = match &cfg.train {
        Some(p) => {
            let mut c: BTreeMap<String, usize> = BTreeMap::new();
            for d in read_jsonl(p)? {
                for l in d.labels.into_iter().collect::<BTreeSet<_>>() {
                    *c.entry(l).or_default() += 1;
                }
            }
            (Some(c), "train")
        }
        None => (None, "test"),
    };
    let stats: Vec<LabelStat> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let positives = truth.column(j).iter().filter(|&&b| b).count();
            LabelStat {
                label: l.clone(),
                freq: freq_of.as_ref().map_or(positives, |c| c.get(l).copied().unwrap_or(0)),
                test_positives: positives,
                auc: aucs[j],
            }
        })
        .collect();
    let baseline = opts
        .baseline
        .as_deref()
        .map(|p| -> Result<BTreeMap<String, Option<f64>>> {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let base: EvalOutcome = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: p.to_path_buf(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            Ok(base.labels.into_iter().map(|l| (l.label, l.auc)).collect())
        })
        .transpose()?;
    let buckets = frequency_buckets(&stats, baseline.as_ref());
    let outcome = EvalOutcome {
        config: cfg.echo(),
        frequency_source: frequency_source.into(),
        metrics,
        labels: stats,
        buckets,
    };
    if let Some(dir) = &cfg.out {
        let mut bytes = serde_json::to_vec_pretty(&outcome).expect("outcome serializes");
        bytes.push(b'\n');
        write_atomic(&dir.join(EVAL_FILE), &bytes)?;
    }
    Ok(outcome)
}

// ------------------------------------------------------------------- inspect

#[derive(Debug, Clone)]
pub struct InspectOptions {
    pub checkpoint: PathBuf,
    pub doc_id: String,
    pub label: String,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectRow {
    pub position: usize,
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectOutcome {
    pub doc_id: String,
    pub label: String,
    pub probability: f64,
    pub rows: Vec<InspectRow>,
}

impl fmt::Display for InspectOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "document {} label {} p = {:.4}", self.doc_id, self.label, self.probability)?;
        writeln!(f, "{:>4} {:>8} {:<20} {:>10}", "rank", "position", "token", "weight")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(f, "{:>4} {:>8} {:<20} {:>10.6}", i + 1, r.position, r.token, r.weight)?;
        }
        Ok(())
    }
}

pub fn cmd_inspect(cfg: &RunConfig, opts: &InspectOptions) -> Result<InspectOutcome> {
    let ckpt = Checkpoint::load(&opts.checkpoint)?;
    let mut found = None;
    for p in [&cfg.test, &cfg.valid, &cfg.train].into_iter().flatten() {
        if let Some(d) = read_jsonl(p)?.into_iter().find(|d| d.id == opts.doc_id) {
            found = Some(d);
            break;
        }
    }
    let doc = found.ok_or_else(|| Error::Config(format!("document {:?} not found in the given splits", opts.doc_id)))?;
    let doc = RawDocument {
        labels: Vec::new(),
        ..doc
    };
    let ds = index_documents(&[doc], &ckpt.vocab, &ckpt.tree, cfg.max_len)?;
    let d = ds
        .docs
        .first()
        .ok_or_else(|| Error::Config(format!("document {:?} has no tokens", opts.doc_id)))?;
    let aug = augment_tree(&ckpt.tree);
    let e_h = final_rows(ckpt.hyperbolic.as_ref(), ckpt.curriculum.correction, &aug)?;
    let model: &Model = &ckpt.state.model;
    let top = inspect_attention(model, &aug, e_h.as_ref(), &d.tokens, &opts.label, opts.top_n)?;
    let c = aug.leaf_index(&opts.label).expect("inspect_attention checked the label");
    let probability = forward(&d.tokens, model, e_h.as_ref())?.0[c];
    Ok(InspectOutcome {
        doc_id: opts.doc_id.clone(),
        label: opts.label.clone(),
        probability,
        rows: top
            .into_iter()
            .map(|t| InspectRow {
                position: t.position,
                token: ckpt.vocab.token(t.token).to_string(),
                weight: t.weight,
            })
            .collect(),
    })
}
