//! Run configuration: built-in defaults, then `key = value` config files,
//! then command-line flags. Keys and flag names are the same strings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hicu::curriculum::{CurriculumConfig, Mode, StopMetric};
use hicu::data_io::SynthConfig;
use hicu::hyperbolic::EmbedConfig;
use hicu::loss::{AslConfig, Loss};
use hicu::network::CorrectionMode;
use hicu::{Error, Result};

/// Every configuration key with its flag help text.
pub const KEYS: &[(&str, &str)] = &[
    ("ranges", "range table TSV"),
    ("train", "training split (JSONL)"),
    ("valid", "validation split (JSONL)"),
    ("test", "test split (JSONL)"),
    ("tree", "label tree file"),
    ("hyp-emb", "hyperbolic label embedding file"),
    ("word-emb", "word embedding file"),
    ("out", "output file or directory"),
    ("seed", "base random seed [env: HICU_SEED]"),
    ("mode", "hicu | flat"),
    ("correction", "none | add | concat"),
    ("loss", "bce | asl"),
    ("gamma-pos", "ASL focusing exponent for positives"),
    ("gamma-neg", "ASL focusing exponent for negatives"),
    ("margin", "ASL probability margin"),
    ("epochs-per-level", "comma list, one entry per tree level"),
    ("batch-size", "documents per optimizer step"),
    ("lr", "Adam learning rate"),
    ("max-len", "tokens kept per document"),
    ("top-k-labels", "keep only the K most frequent codes (0 keeps all)"),
    ("p-at", "comma list of K for precision at K"),
    ("workers", "threads for per-document work"),
    ("transfer-output", "also copy output weights from parents (true|false)"),
    ("knowledge-transfer", "copy parent queries to children (true|false)"),
    ("carry-adam", "keep encoder Adam moments across levels (true|false)"),
    ("reinit-fc", "redraw the correction transform at each level (true|false)"),
    ("filters", "convolution filters d_f"),
    ("kernel-width", "convolution width (odd)"),
    ("word-dim", "word embedding dimension"),
    ("finetune-embeddings", "update word embeddings (true|false)"),
    ("patience", "early-stopping patience in epochs"),
    ("early-stop", "micro_f1 | macro_f1 | micro_auc | macro_auc | p@K"),
    ("threshold", "F1 decision threshold"),
    ("min-count", "minimum token count for the vocabulary"),
    ("hyp-dim", "hyperbolic embedding dimension"),
    ("hyp-epochs", "hyperbolic training epochs"),
    ("hyp-lr", "hyperbolic learning rate"),
    ("hyp-burn-in", "hyperbolic burn-in epochs"),
    ("hyp-negatives", "negatives per positive pair"),
    ("synth-branching", "comma list of five branching factors"),
    ("synth-zipf", "Zipf exponent of leaf frequencies"),
    ("synth-noise-rate", "noise tokens per nominal token"),
    ("synth-noise-vocab", "noise vocabulary size"),
    ("synth-doc-len", "nominal document length"),
    ("synth-signature-len", "signature tokens per tree node"),
    ("synth-max-labels", "maximum codes per document"),
    ("synth-train", "training documents"),
    ("synth-valid", "validation documents"),
    ("synth-test", "test documents"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ranges: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub hyp_emb: Option<PathBuf>,
    pub word_emb: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub mode: Mode,
    pub correction: CorrectionMode,
    pub loss: String,
    pub asl: AslConfig,
    pub epochs_per_level: Vec<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub max_len: usize,
    pub top_k_labels: usize,
    pub p_at: Vec<usize>,
    pub workers: usize,
    pub transfer_output: bool,
    pub knowledge_transfer: bool,
    pub carry_adam: bool,
    pub reinit_fc: bool,
    pub filters: usize,
    pub kernel_width: usize,
    pub word_dim: usize,
    pub finetune_embeddings: bool,
    pub patience: usize,
    pub early_stop: StopMetric,
    pub threshold: f64,
    pub min_count: usize,
    pub embed: EmbedConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cur = CurriculumConfig::default();
        RunConfig {
            ranges: None,
            train: None,
            valid: None,
            test: None,
            tree: None,
            hyp_emb: None,
            word_emb: None,
            out: None,
            seed: 0,
            mode: cur.mode,
            correction: cur.correction,
            loss: "bce".into(),
            asl: AslConfig::default(),
            epochs_per_level: cur.epochs_per_level,
            batch_size: cur.batch_size,
            lr: cur.learning_rate,
            max_len: 4096,
            top_k_labels: 0,
            p_at: cur.p_at,
            workers: cur.workers,
            transfer_output: cur.transfer_output_layer,
            knowledge_transfer: cur.knowledge_transfer,
            carry_adam: cur.carry_adam,
            reinit_fc: cur.reinit_fc,
            filters: cur.d_f,
            kernel_width: cur.kernel_width,
            word_dim: 32,
            finetune_embeddings: cur.finetune_embeddings,
            patience: cur.patience,
            early_stop: cur.early_stop_metric,
            threshold: cur.threshold,
            min_count: 1,
            embed: EmbedConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn stop_metric_name(m: StopMetric) -> String {
    match m {
        StopMetric::MicroF1 => "micro_f1".into(),
        StopMetric::MacroF1 => "macro_f1".into(),
        StopMetric::MicroAuc => "micro_auc".into(),
        StopMetric::MacroAuc => "macro_auc".into(),
        StopMetric::PAtK(k) => format!("p@{k}"),
    }
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "ranges" => self.ranges = path(v),
            "train" => self.train = path(v),
            "valid" => self.valid = path(v),
            "test" => self.test = path(v),
            "tree" => self.tree = path(v),
            "hyp-emb" => self.hyp_emb = path(v),
            "word-emb" => self.word_emb = path(v),
            "out" => self.out = path(v),
            "seed" => self.seed = parse(key, v)?,
            "mode" => self.mode = v.parse()?,
            "correction" => self.correction = v.parse()?,
            "loss" => {
                if v != "bce" && v != "asl" {
                    return Err(Error::Config(format!("unknown loss {v:?}")));
                }
                self.loss = v.into();
            }
            "gamma-pos" => self.asl.gamma_pos = parse(key, v)?,
            "gamma-neg" => self.asl.gamma_neg = parse(key, v)?,
            "margin" => self.asl.margin = parse(key, v)?,
            "epochs-per-level" => self.epochs_per_level = parse_list(key, v)?,
            "batch-size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "max-len" => self.max_len = parse(key, v)?,
            "top-k-labels" => self.top_k_labels = parse(key, v)?,
            "p-at" => self.p_at = parse_list(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "transfer-output" => self.transfer_output = parse_bool(key, v)?,
            "knowledge-transfer" => self.knowledge_transfer = parse_bool(key, v)?,
            "carry-adam" => self.carry_adam = parse_bool(key, v)?,
            "reinit-fc" => self.reinit_fc = parse_bool(key, v)?,
            "filters" => self.filters = parse(key, v)?,
            "kernel-width" => self.kernel_width = parse(key, v)?,
            "word-dim" => self.word_dim = parse(key, v)?,
            "finetune-embeddings" => self.finetune_embeddings = parse_bool(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "early-stop" => self.early_stop = v.parse()?,
            "threshold" => self.threshold = parse(key, v)?,
            "min-count" => self.min_count = parse(key, v)?,
            "hyp-dim" => self.embed.dim = parse(key, v)?,
            "hyp-epochs" => self.embed.epochs = parse(key, v)?,
            "hyp-lr" => self.embed.learning_rate = parse(key, v)?,
            "hyp-burn-in" => self.embed.burn_in_epochs = parse(key, v)?,
            "hyp-negatives" => self.embed.negatives_per_positive = parse(key, v)?,
            "synth-branching" => {
                let b = parse_list(key, v)?;
                self.synth.branching = b
                    .try_into()
                    .map_err(|_| Error::Config("synth-branching needs exactly five entries".into()))?;
            }
            "synth-zipf" => self.synth.zipf_exponent = parse(key, v)?,
            "synth-noise-rate" => self.synth.noise_rate = parse(key, v)?,
            "synth-noise-vocab" => self.synth.noise_vocab = parse(key, v)?,
            "synth-doc-len" => self.synth.doc_len = parse(key, v)?,
            "synth-signature-len" => self.synth.tokens_per_signature = parse(key, v)?,
            "synth-max-labels" => self.synth.max_labels_per_doc = parse(key, v)?,
            "synth-train" => self.synth.train_docs = parse(key, v)?,
            "synth-valid" => self.synth.valid_docs = parse(key, v)?,
            "synth-test" => self.synth.test_docs = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every key in text form; `set` on each entry rebuilds the config.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let f = hicu::io_util::fmt_f64;
        let b = &self.synth.branching;
        BTreeMap::from([
            ("ranges", p(&self.ranges)),
            ("train", p(&self.train)),
            ("valid", p(&self.valid)),
            ("test", p(&self.test)),
            ("tree", p(&self.tree)),
            ("hyp-emb", p(&self.hyp_emb)),
            ("word-emb", p(&self.word_emb)),
            ("out", p(&self.out)),
            ("seed", self.seed.to_string()),
            ("mode", format!("{:?}", self.mode).to_lowercase()),
            ("correction", self.correction.as_str().into()),
            ("loss", self.loss.clone()),
            ("gamma-pos", f(self.asl.gamma_pos)),
            ("gamma-neg", f(self.asl.gamma_neg)),
            ("margin", f(self.asl.margin)),
            ("epochs-per-level", list(&self.epochs_per_level)),
            ("batch-size", self.batch_size.to_string()),
            ("lr", f(self.lr)),
            ("max-len", self.max_len.to_string()),
            ("top-k-labels", self.top_k_labels.to_string()),
            ("p-at", list(&self.p_at)),
            ("workers", self.workers.to_string()),
            ("transfer-output", self.transfer_output.to_string()),
            ("knowledge-transfer", self.knowledge_transfer.to_string()),
            ("carry-adam", self.carry_adam.to_string()),
            ("reinit-fc", self.reinit_fc.to_string()),
            ("filters", self.filters.to_string()),
            ("kernel-width", self.kernel_width.to_string()),
            ("word-dim", self.word_dim.to_string()),
            ("finetune-embeddings", self.finetune_embeddings.to_string()),
            ("patience", self.patience.to_string()),
            ("early-stop", stop_metric_name(self.early_stop)),
            ("threshold", f(self.threshold)),
            ("min-count", self.min_count.to_string()),
            ("hyp-dim", self.embed.dim.to_string()),
            ("hyp-epochs", self.embed.epochs.to_string()),
            ("hyp-lr", f(self.embed.learning_rate)),
            ("hyp-burn-in", self.embed.burn_in_epochs.to_string()),
            ("hyp-negatives", self.embed.negatives_per_positive.to_string()),
            ("synth-branching", list(b)),
            ("synth-zipf", f(self.synth.zipf_exponent)),
            ("synth-noise-rate", f(self.synth.noise_rate)),
            ("synth-noise-vocab", self.synth.noise_vocab.to_string()),
            ("synth-doc-len", self.synth.doc_len.to_string()),
            ("synth-signature-len", self.synth.tokens_per_signature.to_string()),
            ("synth-max-labels", self.synth.max_labels_per_doc.to_string()),
            ("synth-train", self.synth.train_docs.to_string()),
            ("synth-valid", self.synth.valid_docs.to_string()),
            ("synth-test", self.synth.test_docs.to_string()),
        ])
    }

    /// Config echo stored in artifacts. `out` is left out so that runs
    /// differing only in their output location produce identical artifacts.
    pub fn echo(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "out")
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        serde_json::Value::Object(map)
    }

    /// The echo as a config file that `--config` accepts.
    pub fn to_config_file(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            if k != "out" {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    pub fn loss(&self) -> Loss {
        match self.loss.as_str() {
            "asl" => Loss::Asl(self.asl),
            _ => Loss::Bce,
        }
    }

    pub fn curriculum(&self) -> CurriculumConfig {
        CurriculumConfig {
            mode: self.mode,
            epochs_per_level: self.epochs_per_level.clone(),
            batch_size: self.batch_size,
            learning_rate: self.lr,
            correction: self.correction,
            loss: self.loss(),
            early_stop_metric: self.early_stop,
            patience: self.patience,
            knowledge_transfer: self.knowledge_transfer,
            transfer_output_layer: self.transfer_output,
            carry_adam: self.carry_adam,
            reinit_fc: self.reinit_fc,
            d_f: self.filters,
            kernel_width: self.kernel_width,
            finetune_embeddings: self.finetune_embeddings,
            threshold: self.threshold,
            p_at: self.p_at.clone(),
            workers: self.workers,
            seed: self.seed,
        }
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            seed: self.seed,
            ..self.embed.clone()
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Checks everything that can be checked without touching the inputs.
    pub fn validate(&self) -> Result<()> {
        self.curriculum().validate()?;
        self.embed_config().validate()?;
        self.synth_config().validate()?;
        if self.max_len == 0 {
            return Err(Error::Config("max-len must be positive".into()));
        }
        if self.word_dim == 0 {
            return Err(Error::Config("word-dim must be positive".into()));
        }
        if self.p_at.contains(&0) {
            return Err(Error::Config("p-at entries must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: origin.to_path_buf(),
            line: i + 1,
            reason: "expected `key = value`".into(),
        })?;
        let k = k.trim();
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                line: i + 1,
                reason: format!("unknown key {k:?}"),
            });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Defaults, then the config file, then flags. `HICU_SEED` supplies the seed
/// when neither the file nor the flags do.
pub fn resolve(
    file: Option<&Path>,
    flags: &[(String, String)],
    env_seed: Option<String>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut file_pairs = Vec::new();
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        file_pairs = parse_config_file(&text, p)?;
    }
    let seed_given = file_pairs.iter().chain(flags).any(|(k, _)| k == "seed");
    if !seed_given {
        if let Some(s) = env_seed {
            cfg.set("seed", &s)
                .map_err(|_| Error::Config(format!("HICU_SEED: cannot parse {s:?}")))?;
        }
    }
    for (k, v) in file_pairs.iter().chain(flags) {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
