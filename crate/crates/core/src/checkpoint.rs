//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes   "HICUCKPT"
//! version  u32 LE
//! hlen     u64 LE    length of the JSON header
//! header   hlen bytes UTF-8 JSON (configs, vocabulary, tree, cursors,
//!                    optimizer scalars, report so far, tensor directory)
//! data     f64 LE    tensors back to back, at the offsets in the directory
//! ```
//!
//! The header is written with sorted map keys and shortest round-trip float
//! formatting, so loading a checkpoint and saving it again reproduces the
//! file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumConfig, EarlyStop, EpochRecord, TrainState};
use crate::data_io::Vocab;
use crate::error::{Error, Result};
use crate::hyperbolic::PoincareEmbedding;
use crate::io_util::write_atomic;
use crate::label_tree::LabelTree;
use crate::network::{AdamState, Correction, DecoderParams, EncoderParams, Model};

pub const MAGIC: &[u8; 8] = b"HICUCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form echo of the command configuration.
    pub run_config: serde_json::Value,
    pub curriculum: CurriculumConfig,
    pub vocab: Vocab,
    /// Un-augmented label tree.
    pub tree: LabelTree,
    pub hyperbolic: Option<PoincareEmbedding>,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct TreeHeader {
    pad_depth: usize,
    paths: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct HyperbolicHeader {
    labels: Vec<String>,
    ball_eps: f64,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    moments: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EarlyHeader {
    best_metric: Option<f64>,
    best_epoch: Option<usize>,
    bad_epochs: usize,
    stopped: bool,
    has_best_model: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    run_config: serde_json::Value,
    curriculum: CurriculumConfig,
    vocab: Vec<String>,
    vocab_min_count: usize,
    tree: TreeHeader,
    hyperbolic: Option<HyperbolicHeader>,
    level: usize,
    epoch: usize,
    finished: bool,
    adam: AdamHeader,
    early: EarlyHeader,
    records: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

struct TensorWriter {
    entries: Vec<TensorEntry>,
    data: Vec<u8>,
    offset: usize,
}

impl TensorWriter {
    fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.entries.push(TensorEntry {
            name: name.into(),
            shape,
            offset: self.offset,
        });
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        self.offset += values.len();
    }

    fn push2(&mut self, name: impl Into<String>, a: &Array2<f64>) {
        let a = a.as_standard_layout();
        self.push(name, vec![a.nrows(), a.ncols()], a.as_slice().expect("standard layout"));
    }

    fn push1(&mut self, name: impl Into<String>, a: &Array1<f64>) {
        self.push(name, vec![a.len()], a.as_slice().expect("contiguous"));
    }

    fn push_model(&mut self, prefix: &str, m: &Model) {
        self.push2(format!("{prefix}encoder.embedding"), &m.encoder.embedding);
        self.push2(format!("{prefix}encoder.kernel"), &m.encoder.kernel);
        self.push1(format!("{prefix}encoder.bias"), &m.encoder.bias);
        self.push2(format!("{prefix}decoder.q"), &m.decoder.q);
        self.push2(format!("{prefix}decoder.w"), &m.decoder.w);
        self.push1(format!("{prefix}decoder.b"), &m.decoder.b);
        self.push2(format!("{prefix}decoder.fc.weight"), &m.decoder.correction.weight);
        self.push1(format!("{prefix}decoder.fc.bias"), &m.decoder.correction.bias);
    }
}

struct TensorReader<'a> {
    tensors: BTreeMap<&'a str, (&'a [usize], &'a [u8])>,
}

impl<'a> TensorReader<'a> {
    fn new(entries: &'a [TensorEntry], data: &'a [u8]) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        for e in entries {
            let len: usize = e.shape.iter().product();
            let start = e.offset * 8;
            let end = start + len * 8;
            if end > data.len() {
                return Err(Error::Checkpoint(format!("tensor {} runs past the end of the file", e.name)));
            }
            tensors.insert(e.name.as_str(), (e.shape.as_slice(), &data[start..end]));
        }
        Ok(TensorReader { tensors })
    }

    fn values(&self, name: &str) -> Result<(&'a [usize], Vec<f64>)> {
        let (shape, bytes) = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((shape, values))
    }

    fn get2(&self, name: &str) -> Result<Array2<f64>> {
        let (shape, v) = self.values(name)?;
        if shape.len() != 2 {
            return Err(Error::Checkpoint(format!("tensor {name} is not a matrix")));
        }
        Ok(Array2::from_shape_vec((shape[0], shape[1]), v).expect("length checked"))
    }

    fn get1(&self, name: &str) -> Result<Array1<f64>> {
        let (shape, v) = self.values(name)?;
        if shape.len() != 1 {
            return Err(Error::Checkpoint(format!("tensor {name} is not a vector")));
        }
        Ok(Array1::from(v))
    }

    fn model(&self, prefix: &str, cfg: &CurriculumConfig) -> Result<Model> {
        let encoder = EncoderParams {
            embedding: self.get2(&format!("{prefix}encoder.embedding"))?,
            kernel: self.get2(&format!("{prefix}encoder.kernel"))?,
            bias: self.get1(&format!("{prefix}encoder.bias"))?,
            width: cfg.kernel_width,
            finetune_embeddings: cfg.finetune_embeddings,
        };
        let decoder = DecoderParams {
            q: self.get2(&format!("{prefix}decoder.q"))?,
            w: self.get2(&format!("{prefix}decoder.w"))?,
            b: self.get1(&format!("{prefix}decoder.b"))?,
            correction: Correction {
                mode: cfg.correction,
                weight: self.get2(&format!("{prefix}decoder.fc.weight"))?,
                bias: self.get1(&format!("{prefix}decoder.fc.bias"))?,
            },
        };
        if encoder.kernel.nrows() != encoder.width * encoder.d_e() {
            return Err(Error::Checkpoint("kernel shape disagrees with the configured width".into()));
        }
        Ok(Model { encoder, decoder })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let st = &self.state;
        let mut w = TensorWriter {
            entries: Vec::new(),
            data: Vec::new(),
            offset: 0,
        };
        w.push_model("", &st.model);
        if let Some(best) = &st.early.best_model {
            w.push_model("best.", best);
        }
        for (name, (m, v)) in &st.adam.moments {
            w.push(format!("adam.m.{name}"), vec![m.len()], m);
            w.push(format!("adam.v.{name}"), vec![v.len()], v);
        }
        if let Some(h) = &self.hyperbolic {
            w.push2("hyperbolic", &h.vectors);
        }
        let header = Header {
            run_config: self.run_config.clone(),
            curriculum: self.curriculum.clone(),
            vocab: self.vocab.tokens().to_vec(),
            vocab_min_count: self.vocab.min_count,
            tree: TreeHeader {
                pad_depth: self.tree.pad_depth(),
                paths: self.tree.target_paths(),
            },
            hyperbolic: self.hyperbolic.as_ref().map(|h| HyperbolicHeader {
                labels: h.labels().to_vec(),
                ball_eps: h.ball_eps,
            }),
            level: st.level,
            epoch: st.epoch,
            finished: st.finished,
            adam: AdamHeader {
                learning_rate: st.adam.learning_rate,
                beta1: st.adam.beta1,
                beta2: st.adam.beta2,
                eps: st.adam.eps,
                step: st.adam.step,
                moments: st.adam.moments.keys().cloned().collect(),
            },
            early: EarlyHeader {
                best_metric: st.early.best_metric,
                best_epoch: st.early.best_epoch,
                bad_epochs: st.early.bad_epochs,
                stopped: st.early.stopped,
                has_best_model: st.early.best_model.is_some(),
            },
            records: st.records.clone(),
            tensors: w.entries,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + w.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&w.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let data_start = 20usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..data_start])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let data = &bytes[data_start..];
        if data.len() % 8 != 0 {
            return Err(bad("tensor data is not a whole number of f64 values"));
        }
        let reader = TensorReader::new(&header.tensors, data)?;
        let cfg = &header.curriculum;
        let model = reader.model("", cfg)?;
        let best_model = if header.early.has_best_model {
            Some(reader.model("best.", cfg)?)
        } else {
            None
        };
        let mut moments = BTreeMap::new();
        for name in &header.adam.moments {
            let m = reader.values(&format!("adam.m.{name}"))?.1;
            let v = reader.values(&format!("adam.v.{name}"))?.1;
            moments.insert(name.clone(), (m, v));
        }
        let hyperbolic = match &header.hyperbolic {
            Some(h) => Some(PoincareEmbedding::new(h.labels.clone(), reader.get2("hyperbolic")?, h.ball_eps)?),
            None => None,
        };
        let tree = LabelTree::from_paths(&header.tree.paths)?.with_pad_depth(header.tree.pad_depth);
        let vocab = Vocab::from_tokens(header.vocab, header.vocab_min_count)?;
        if model.encoder.vocab_size() != vocab.len() {
            return Err(bad("embedding rows disagree with the vocabulary"));
        }
        Ok(Checkpoint {
            run_config: header.run_config,
            curriculum: header.curriculum,
            vocab,
            tree,
            hyperbolic,
            state: TrainState {
                model,
                level: header.level,
                epoch: header.epoch,
                adam: AdamState {
                    learning_rate: header.adam.learning_rate,
                    beta1: header.adam.beta1,
                    beta2: header.adam.beta2,
                    eps: header.adam.eps,
                    step: header.adam.step,
                    moments,
                },
                early: EarlyStop {
                    best_metric: header.early.best_metric,
                    best_epoch: header.early.best_epoch,
                    bad_epochs: header.early.bad_epochs,
                    best_model,
                    stopped: header.early.stopped,
                },
                records: header.records,
                finished: header.finished,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
