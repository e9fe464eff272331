//! Datasets, tokenization, vocabulary, word vectors and the synthetic
//! hierarchical corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::label_tree::{build_label_tree, IcdCode, LabelTree, RangeTable};
use crate::rng::{self, Stream};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercased maximal runs of ASCII letters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub min_count: usize,
}

impl Vocab {
    /// Indexes tokens seen at least `min_count` times, most frequent first,
    /// ties in lexicographic order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for t in tokenize(text) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens, min_count).expect("fresh vocabulary is unique")
    }

    /// Rebuilds a vocabulary from its index order (reserved entries first).
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Config("vocabulary must start with the PAD and UNK entries".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// One JSONL record as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<usize>,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub docs: Vec<Document>,
    /// Documents dropped because no token survived tokenization.
    pub skipped_empty: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Documents per leaf label.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for d in &self.docs {
            for l in &d.labels {
                *counts.entry(l.clone()).or_default() += 1;
            }
        }
        counts
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut out = Vec::new();
    for d in docs {
        serde_json::to_writer(&mut out, d).expect("plain strings serialize");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Tokenizes, index-maps and truncates raw documents against a vocabulary and
/// the tree's target set.
pub fn index_documents(raw: &[RawDocument], vocab: &Vocab, tree: &LabelTree, max_len: usize) -> Result<Dataset> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be positive".into()));
    }
    let targets: BTreeSet<&str> = tree.target_labels().into_iter().collect();
    let mut ds = Dataset::default();
    for r in raw {
        for code in &r.labels {
            if !targets.contains(code.as_str()) {
                return Err(Error::UnknownDocLabel {
                    doc: r.id.clone(),
                    code: code.clone(),
                });
            }
        }
        let tokens: Vec<usize> = tokenize(&r.text).iter().take(max_len).map(|t| vocab.get(t)).collect();
        if tokens.is_empty() {
            ds.skipped_empty += 1;
            continue;
        }
        ds.docs.push(Document {
            id: r.id.clone(),
            tokens,
            labels: r.labels.iter().cloned().collect(),
        });
    }
    if ds.skipped_empty > 0 {
        log::warn!("skipped {} documents with no tokens", ds.skipped_empty);
    }
    Ok(ds)
}

pub fn load_dataset(path: &Path, vocab: &Vocab, tree: &LabelTree, max_len: usize) -> Result<Dataset> {
    index_documents(&read_jsonl(path)?, vocab, tree, max_len)
}

/// Keeps the `k` most frequent codes (ties lexicographic) and the documents
/// that still have a label. Returns the kept codes in sorted order.
pub fn filter_top_k_labels(docs: &[RawDocument], k: usize) -> Result<(Vec<RawDocument>, Vec<String>)> {
    if k == 0 {
        return Err(Error::Config("top-k label filter needs k ≥ 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for l in d.labels.iter().collect::<BTreeSet<_>>() {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let kept: BTreeSet<String> = ranked.iter().take(k).map(|(l, _)| l.to_string()).collect();
    Ok((restrict_labels(docs, &kept), kept.into_iter().collect()))
}

/// Drops labels outside `kept`, then documents left without labels.
pub fn restrict_labels(docs: &[RawDocument], kept: &BTreeSet<String>) -> Vec<RawDocument> {
    docs.iter()
        .filter_map(|d| {
            let labels: Vec<String> = d.labels.iter().filter(|l| kept.contains(*l)).cloned().collect();
            (!labels.is_empty()).then(|| RawDocument {
                labels,
                ..d.clone()
            })
        })
        .collect()
}

/// Word vectors in the `count dim` header text format. Rows for tokens absent
/// from the file are uniform in ±0.1 from the seeded stream; PAD stays zero.
/// Returns the matrix and how many rows were loaded from the file.
pub fn load_embeddings(path: Option<&Path>, vocab: &Vocab, d_e: usize, seed: u64) -> Result<(Array2<f64>, usize)> {
    if d_e == 0 {
        return Err(Error::Config("word embedding dimension must be positive".into()));
    }
    let mut r = rng::derive(seed, Stream::WordVectors, 0, 0);
    let mut m = Array2::from_shape_simple_fn((vocab.len(), d_e), || rng::uniform(&mut r, 0.1));
    m.row_mut(PAD).fill(0.0);
    let Some(path) = path else {
        return Ok((m, 0));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, 1, "missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(path, 1, "bad header")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(Error::format(path, 1, "header must be `count dim`"));
    }
    if dims[1] != d_e {
        return Err(Error::format(path, 1, format!("file dimension {} but model expects {d_e}", dims[1])));
    }
    let mut loaded = BTreeSet::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("nonempty line");
        let values: Vec<f64> = parts
            .map(|t| t.parse().map_err(|_| Error::format(path, i + 2, "bad float")))
            .collect::<Result<_>>()?;
        if values.len() != d_e {
            return Err(Error::format(path, i + 2, format!("expected {d_e} values, got {}", values.len())));
        }
        let idx = vocab.get(word);
        if (idx == UNK && word != UNK_TOKEN) || idx == PAD {
            continue;
        }
        m.row_mut(idx).assign(&ndarray::Array1::from(values));
        loaded.insert(idx);
    }
    if rows != dims[0] {
        return Err(Error::format(path, 1, format!("header says {} rows, found {rows}", dims[0])));
    }
    Ok((m, loaded.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Children per node at each of the five levels. Levels 4 and 5 are
    /// decimal digits, so they allow at most 10.
    pub branching: [usize; 5],
    pub zipf_exponent: f64,
    pub tokens_per_signature: usize,
    /// Nominal document length; the noise count is `noise_rate · doc_len`.
    pub doc_len: usize,
    pub noise_rate: f64,
    pub noise_vocab: usize,
    pub max_labels_per_doc: usize,
    pub train_docs: usize,
    pub valid_docs: usize,
    pub test_docs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            branching: [4, 2, 3, 3, 3],
            zipf_exponent: 1.0,
            tokens_per_signature: 2,
            doc_len: 40,
            noise_rate: 0.1,
            noise_vocab: 200,
            max_labels_per_doc: 5,
            train_docs: 2000,
            valid_docs: 300,
            test_docs: 300,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.branching.iter().any(|&b| b == 0) {
            return bad("branching factors must be positive".into());
        }
        if self.branching[3] > 10 || self.branching[4] > 10 {
            return bad("decimal levels allow at most 10 children".into());
        }
        if self.branching[0] * self.branching[1] * self.branching[2] > 900 {
            return bad("at most 900 three-digit integer codes".into());
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return bad(format!("Zipf exponent must be positive, got {}", self.zipf_exponent));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise rate must lie in [0, 1], got {}", self.noise_rate));
        }
        if self.tokens_per_signature == 0 || self.max_labels_per_doc == 0 || self.train_docs == 0 {
            return bad("signature size, labels per document and train size must be positive".into());
        }
        if self.noise_rate > 0.0 && self.noise_vocab == 0 {
            return bad("noise needs a nonempty noise vocabulary".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<RawDocument>,
    pub valid: Vec<RawDocument>,
    pub test: Vec<RawDocument>,
    pub tree: LabelTree,
    pub ranges: RangeTable,
    /// Signature words per `(level, label)` node.
    pub signatures: BTreeMap<(usize, String), Vec<String>>,
    /// Sampling weight per leaf code.
    pub leaf_weights: BTreeMap<String, f64>,
}

/// Lowercase base-26 spelling of `n` after `prefix`.
fn word(prefix: char, mut n: usize) -> String {
    let mut letters = Vec::new();
    loop {
        letters.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    letters.reverse();
    let mut s = String::from(prefix);
    s.push_str(std::str::from_utf8(&letters).expect("ascii"));
    s
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let [b1, b2, b3, b4, b5] = cfg.branching;

    // Integer codes 100, 101, ... laid out so every range is contiguous.
    let mut range_tsv = String::new();
    let mut codes = Vec::new();
    let mut next_int = 100;
    for _ in 0..b1 {
        let l1_start = next_int;
        let l1_end = next_int + b2 * b3 - 1;
        for _ in 0..b2 {
            let l2_start = next_int;
            for _ in 0..b3 {
                for d4 in 0..b4 {
                    for d5 in 0..b5 {
                        codes.push(format!("{next_int}.{d4}{d5}"));
                    }
                }
                next_int += 1;
            }
            range_tsv.push_str(&format!("D\t{l1_start}\t{l1_end}\t{l2_start}\t{}\n", next_int - 1));
        }
    }
    let ranges = RangeTable::parse_str(&range_tsv)?;
    let parsed: Vec<IcdCode> = codes.iter().map(|c| IcdCode::parse_any(c)).collect::<Result<_>>()?;
    let tree = build_label_tree(&parsed, &ranges)?;

    let mut signatures = BTreeMap::new();
    let mut counter = 0;
    for node in tree.nodes().filter(|n| n.level > 0) {
        let words: Vec<String> = (0..cfg.tokens_per_signature)
            .map(|_| {
                counter += 1;
                word('w', counter - 1)
            })
            .collect();
        signatures.insert((node.level, node.label), words);
    }

    let mut r = rng::derive(cfg.seed, Stream::Synth, 0, 0);
    let leaves: Vec<String> = tree.target_labels().into_iter().map(String::from).collect();
    let mut ranks: Vec<usize> = (1..=leaves.len()).collect();
    ranks.shuffle(&mut r);
    let weights: Vec<f64> = ranks.iter().map(|&k| (k as f64).powf(-cfg.zipf_exponent)).collect();
    let leaf_paths: Vec<Vec<(usize, String)>> = tree
        .target_paths()
        .into_iter()
        .map(|p| p.into_iter().enumerate().map(|(i, l)| (i + 1, l)).collect())
        .collect();
    let noise: Vec<String> = (0..cfg.noise_vocab).map(|i| word('n', i)).collect();

    let make_split = |name: &str, count: usize, allowed: &[bool], r: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<RawDocument>> {
        let w: Vec<f64> = weights.iter().zip(allowed).map(|(&w, &a)| if a { w } else { 0.0 }).collect();
        let available = allowed.iter().filter(|&&a| a).count();
        let dist = WeightedIndex::new(&w).map_err(|e| Error::Config(format!("leaf weights: {e}")))?;
        let mut docs = Vec::with_capacity(count);
        for i in 0..count {
            let n = r.gen_range(1..=cfg.max_labels_per_doc.min(available));
            let mut chosen = BTreeSet::new();
            while chosen.len() < n {
                chosen.insert(dist.sample(r));
            }
            let mut nodes = BTreeSet::new();
            for &leaf in &chosen {
                nodes.extend(leaf_paths[leaf].iter().cloned());
            }
            let mut tokens: Vec<&str> = nodes
                .iter()
                .flat_map(|n| signatures[n].iter().map(String::as_str))
                .collect();
            let n_noise = (cfg.noise_rate * cfg.doc_len as f64).round() as usize;
            for _ in 0..n_noise {
                tokens.push(&noise[r.gen_range(0..noise.len())]);
            }
            tokens.shuffle(r);
            docs.push(RawDocument {
                id: format!("{name}-{i:05}"),
                text: tokens.join(" "),
                labels: chosen.iter().map(|&j| leaves[j].clone()).collect(),
            });
        }
        Ok(docs)
    };

    let all = vec![true; leaves.len()];
    let train = make_split("train", cfg.train_docs, &all, &mut r)?;
    let seen: BTreeSet<&str> = train.iter().flat_map(|d| d.labels.iter().map(String::as_str)).collect();
    let allowed: Vec<bool> = leaves.iter().map(|l| seen.contains(l.as_str())).collect();
    let valid = make_split("valid", cfg.valid_docs, &allowed, &mut r)?;
    let test = make_split("test", cfg.test_docs, &allowed, &mut r)?;

    Ok(SynthCorpus {
        train,
        valid,
        test,
        tree,
        ranges,
        signatures,
        leaf_weights: leaves.into_iter().zip(weights).collect(),
    })
}

impl SynthCorpus {
    /// Writes `train.jsonl`, `valid.jsonl`, `test.jsonl`, `ranges.tsv` and
    /// `tree.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("valid.jsonl"), &self.valid)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        write_atomic(&dir.join("ranges.tsv"), self.ranges.to_tsv().as_bytes())?;
        self.tree.write_tree_file(&dir.join("tree.tsv"))
    }
}

/// Writes word vectors in the header text format.
pub fn write_embeddings(path: &Path, vocab: &Vocab, m: &Array2<f64>) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    for (i, row) in m.rows().into_iter().enumerate() {
        write!(out, "{}", vocab.token(i)).unwrap();
        for x in row {
            write!(out, " {}", crate::io_util::fmt_f64(*x)).unwrap();
        }
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Pt has HTN, DM2."), vec!["pt", "has", "htn", "dm"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("ABC abc"), vec!["abc", "abc"]);
        assert_eq!(tokenize("café_x"), vec!["caf", "x"]);
    }

    #[test]
    fn vocab_order_and_min_count() {
        let v = Vocab::build(["b a c b", "a d"], 1);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b", "c", "d"]);
        let v3 = Vocab::build(["x x y", "x y"], 3);
        assert_eq!(v3.get("x"), 2);
        assert_eq!(v3.get("y"), UNK);
        assert_eq!(v3.get("zzz"), UNK);
        assert_eq!(Vocab::build(["q p"], 1), Vocab::build(["q p"], 1));
    }

    #[test]
    fn word_spelling() {
        assert_eq!(word('w', 0), "wa");
        assert_eq!(word('w', 25), "wz");
        assert_eq!(word('w', 26), "wba");
        assert_eq!(word('n', 27), "nbb");
    }

    #[test]
    fn synth_default_shape() {
        let c = synth_generate(&SynthConfig {
            train_docs: 50,
            valid_docs: 10,
            test_docs: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(c.tree.level_counts(), vec![1, 4, 8, 24, 72, 216]);
        assert_eq!(c.ranges.rows().len(), 8);
        let all_words: Vec<&String> = c.signatures.values().flatten().collect();
        let unique: BTreeSet<&String> = all_words.iter().copied().collect();
        assert_eq!(unique.len(), all_words.len());
    }

    #[test]
    fn synth_rejects_bad_config() {
        let bad = SynthConfig {
            zipf_exponent: 0.0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&bad).is_err());
        let bad = SynthConfig {
            branching: [2, 2, 2, 11, 2],
            ..SynthConfig::default()
        };
        assert!(synth_generate(&bad).is_err());
    }
}
