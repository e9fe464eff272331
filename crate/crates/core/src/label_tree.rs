//! ICD-style code parsing, the five-level label tree and its depth-uniform
//! augmentation.
//!
//! A [`LabelTree`] is built from root-to-target label paths. Every level is kept
//! as a lexicographically sorted list of labels, so a node is addressed by
//! `(level, index)` and the index doubles as the column of that label in the
//! decoder parameters of the matching curriculum round.
//!
//! The augmented tree pads every target down to the deepest level by repeating
//! the target's own label, which keeps the parent map total and uniform.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path as FsPath;

use crate::error::{Error, Result};

/// Label of the level-0 sentinel.
pub const ROOT_LABEL: &str = "ROOT";

/// Depth of a fully specified ICD-9 path (two ranges, integer, two decimals).
pub const ICD_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

impl CodeKind {
    fn tag(self) -> &'static str {
        match self {
            CodeKind::Diagnosis => "D",
            CodeKind::Procedure => "P",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IcdCode {
    pub raw: String,
    pub kind: CodeKind,
    /// Three characters for diagnoses (`250`, `V30`), four for `E` codes, two
    /// for procedures.
    pub integer_part: String,
    pub decimals: String,
}

impl IcdCode {
    pub fn parse(raw: &str, kind: CodeKind) -> Result<Self> {
        let fail = |reason: &str| Error::CodeParse {
            raw: raw.to_string(),
            reason: reason.to_string(),
        };
        if raw.is_empty() {
            return Err(fail("empty code"));
        }
        let (int_part, decimals) = match raw.split_once('.') {
            Some((i, d)) => {
                if d.is_empty() {
                    return Err(fail("dangling decimal separator"));
                }
                (i, d)
            }
            None => (raw, ""),
        };
        if decimals.len() > 2 {
            return Err(fail("more than two decimal digits"));
        }
        if !decimals.bytes().all(|b| b.is_ascii_digit()) {
            return Err(fail("non-digit in decimal part"));
        }
        let int_ok = match kind {
            CodeKind::Procedure => int_part.len() == 2 && int_part.bytes().all(|b| b.is_ascii_digit()),
            CodeKind::Diagnosis => match int_part.as_bytes().first() {
                Some(b'V') => int_part.len() == 3 && int_part[1..].bytes().all(|b| b.is_ascii_digit()),
                Some(b'E') => int_part.len() == 4 && int_part[1..].bytes().all(|b| b.is_ascii_digit()),
                Some(_) => int_part.len() == 3 && int_part.bytes().all(|b| b.is_ascii_digit()),
                None => false,
            },
        };
        if !int_ok {
            return Err(fail(match kind {
                CodeKind::Procedure => "procedure codes need a two-digit integer part",
                CodeKind::Diagnosis => "diagnosis codes need a three-digit (V: V+2, E: E+3) integer part",
            }));
        }
        Ok(IcdCode {
            raw: raw.to_string(),
            kind,
            integer_part: int_part.to_string(),
            decimals: decimals.to_string(),
        })
    }

    /// Parses a code whose kind follows from its shape: a two-digit integer
    /// part is a procedure, anything else a diagnosis.
    pub fn parse_any(raw: &str) -> Result<Self> {
        let int_len = raw.split('.').next().map(str::len).unwrap_or(0);
        let kind = if int_len == 2 && !raw.starts_with(['V', 'E']) {
            CodeKind::Procedure
        } else {
            CodeKind::Diagnosis
        };
        Self::parse(raw, kind)
    }

    /// Natural depth of the code in the un-augmented tree.
    pub fn depth(&self) -> usize {
        3 + self.decimals.len()
    }

    fn range_key(&self) -> (CodeKind, Option<char>, u32) {
        let (prefix, digits) = split_prefix(&self.integer_part);
        (self.kind, prefix, digits.parse().expect("validated digits"))
    }
}

impl fmt::Display for IcdCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.decimals.is_empty() {
            write!(f, "{}", self.integer_part)
        } else {
            write!(f, "{}.{}", self.integer_part, self.decimals)
        }
    }
}

fn split_prefix(s: &str) -> (Option<char>, &str) {
    match s.chars().next() {
        Some(c @ ('V' | 'E')) => (Some(c), &s[1..]),
        _ => (None, s),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CodeRange {
    pub start: String,
    pub end: String,
    prefix: Option<char>,
    lo: u32,
    hi: u32,
}

impl CodeRange {
    fn parse(start: &str, end: &str) -> std::result::Result<Self, String> {
        let (ps, ds) = split_prefix(start);
        let (pe, de) = split_prefix(end);
        if ps != pe {
            return Err(format!("range {start}-{end} mixes prefixes"));
        }
        let parse = |d: &str| -> std::result::Result<u32, String> {
            if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("bad range bound in {start}-{end}"));
            }
            d.parse().map_err(|_| format!("bad range bound in {start}-{end}"))
        };
        let lo = parse(ds)?;
        let hi = parse(de)?;
        if lo > hi {
            return Err(format!("range {start}-{end} is reversed"));
        }
        Ok(CodeRange {
            start: start.to_string(),
            end: end.to_string(),
            prefix: ps,
            lo,
            hi,
        })
    }

    fn point(integer_part: &str) -> Self {
        let (prefix, d) = split_prefix(integer_part);
        let n = d.parse().expect("validated digits");
        CodeRange {
            start: integer_part.to_string(),
            end: integer_part.to_string(),
            prefix,
            lo: n,
            hi: n,
        }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.start, self.end)
    }

    fn contains(&self, prefix: Option<char>, n: u32) -> bool {
        self.prefix == prefix && self.lo <= n && n <= self.hi
    }

    fn overlaps(&self, other: &CodeRange) -> bool {
        self.prefix == other.prefix && self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeRow {
    pub kind: CodeKind,
    pub level1: CodeRange,
    /// `None` when the chapter has no native second-level ranges; paths then
    /// use a synthetic same-start-end range per integer code.
    pub level2: Option<CodeRange>,
}

/// Level-1/level-2 range rows loaded from `ranges.tsv`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeTable {
    rows: Vec<RangeRow>,
}

impl RangeTable {
    pub fn new(rows: Vec<RangeRow>) -> Result<Self> {
        let table = RangeTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn rows(&self) -> &[RangeRow] {
        &self.rows
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let err = |reason: String| Error::RangeTable { line: line_no, reason };
            if fields.len() != 5 {
                return Err(err(format!("expected 5 tab-separated fields, got {}", fields.len())));
            }
            let kind = match fields[0] {
                "D" => CodeKind::Diagnosis,
                "P" => CodeKind::Procedure,
                other => return Err(err(format!("kind must be D or P, got {other:?}"))),
            };
            let level1 = CodeRange::parse(fields[1], fields[2]).map_err(err)?;
            let level2 = match (fields[3], fields[4]) {
                ("-", "-") => None,
                (s, e) => Some(CodeRange::parse(s, e).map_err(err)?),
            };
            if let Some(l2) = &level2 {
                if l2.prefix != level1.prefix || l2.lo < level1.lo || l2.hi > level1.hi {
                    return Err(err(format!(
                        "level-2 range {} lies outside level-1 range {}",
                        l2.label(),
                        level1.label()
                    )));
                }
            }
            rows.push(RangeRow { kind, level1, level2 });
        }
        let table = RangeTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# kind\tl1_start\tl1_end\tl2_start\tl2_end\n");
        for row in &self.rows {
            let (s2, e2) = match &row.level2 {
                Some(r) => (r.start.as_str(), r.end.as_str()),
                None => ("-", "-"),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                row.kind.tag(),
                row.level1.start,
                row.level1.end,
                s2,
                e2
            ));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for (i, a) in self.rows.iter().enumerate() {
            for b in &self.rows[..i] {
                if a.kind != b.kind {
                    continue;
                }
                let reason = if a.level1 != b.level1 && a.level1.overlaps(&b.level1) {
                    Some(format!(
                        "level-1 ranges {} and {} overlap",
                        a.level1.label(),
                        b.level1.label()
                    ))
                } else if a.level1 == b.level1 {
                    match (&a.level2, &b.level2) {
                        (Some(x), Some(y)) if x.overlaps(y) => Some(format!(
                            "level-2 ranges {} and {} overlap within {}",
                            x.label(),
                            y.label(),
                            a.level1.label()
                        )),
                        (None, _) | (_, None) => Some(format!(
                            "level-1 range {} mixes synthetic and explicit level-2 rows",
                            a.level1.label()
                        )),
                        _ => None,
                    }
                } else {
                    None
                };
                if let Some(reason) = reason {
                    return Err(Error::RangeTable { line: i + 1, reason });
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, code: &IcdCode) -> Option<(&CodeRange, CodeRange)> {
        let (kind, prefix, n) = code.range_key();
        self.rows
            .iter()
            .filter(|r| r.kind == kind && r.level1.contains(prefix, n))
            .find_map(|r| match &r.level2 {
                Some(l2) if l2.contains(prefix, n) => Some((&r.level1, l2.clone())),
                Some(_) => None,
                None => Some((&r.level1, CodeRange::point(&code.integer_part))),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub level: usize,
    pub label: String,
}

impl NodeId {
    pub fn new(level: usize, label: impl Into<String>) -> Self {
        NodeId {
            level,
            label: label.into(),
        }
    }

    pub fn root() -> Self {
        NodeId::new(0, ROOT_LABEL)
    }
}

/// Root-excluded path from level 1 down to the padded depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    /// Natural depth `K_i`; nodes beyond it are padding copies of the target.
    pub depth: usize,
}

impl Path {
    pub fn target(&self) -> &str {
        &self.nodes[self.depth - 1].label
    }

    pub fn natural_labels(&self) -> Vec<String> {
        self.nodes[..self.depth].iter().map(|n| n.label.clone()).collect()
    }
}

/// Five-node path for an ICD code: two ranges, the integer code, then the one-
/// and two-decimal codes, copying the code itself where decimals run out.
pub fn build_path(code: &IcdCode, ranges: &RangeTable) -> Result<Path> {
    let (l1, l2) = ranges.lookup(code).ok_or_else(|| Error::Coverage {
        code: code.raw.clone(),
    })?;
    let mut labels = vec![l1.label(), l2.label(), code.integer_part.clone()];
    for n in 1..=2 {
        if code.decimals.len() >= n {
            labels.push(format!("{}.{}", code.integer_part, &code.decimals[..n]));
        } else {
            labels.push(code.raw.clone());
        }
    }
    Ok(Path {
        nodes: labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| NodeId::new(i + 1, l))
            .collect(),
        depth: code.depth(),
    })
}

/// Tree over labels with per-level lexicographic ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTree {
    /// `levels[0]` holds only the root sentinel.
    levels: Vec<Vec<String>>,
    /// `parents[k][i]` is the level-(k-1) index of node `i` at level `k`;
    /// `parents[0]` is empty.
    parents: Vec<Vec<usize>>,
    /// Prediction targets `(level, index)`, sorted by label.
    targets: Vec<(usize, usize)>,
    /// Depth the augmented tree is padded to; at least the natural depth.
    pad_depth: usize,
}

impl LabelTree {
    /// Builds the union of root-to-target paths. Each path lists labels from
    /// level 1 down to its target.
    pub fn from_paths<P: AsRef<[String]>>(paths: &[P]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        let depth = paths.iter().map(|p| p.as_ref().len()).max().unwrap_or(0);
        if depth == 0 {
            return Err(Error::Tree("empty path".into()));
        }
        // level -> label -> parent label
        let mut edges: Vec<BTreeMap<&str, &str>> = vec![BTreeMap::new(); depth + 1];
        let mut target_levels: BTreeMap<&str, usize> = BTreeMap::new();
        for p in paths {
            let p = p.as_ref();
            if p.is_empty() {
                return Err(Error::Tree("empty path".into()));
            }
            let mut parent = ROOT_LABEL;
            for (i, label) in p.iter().enumerate() {
                let level = i + 1;
                match edges[level].insert(label.as_str(), parent) {
                    Some(prev) if prev != parent => {
                        return Err(Error::Tree(format!(
                            "node {label:?} at level {level} has two parents ({prev:?}, {parent:?})"
                        )))
                    }
                    _ => {}
                }
                parent = label.as_str();
            }
            let target = p.last().expect("nonempty");
            match target_levels.insert(target.as_str(), p.len()) {
                Some(prev) if prev != p.len() => {
                    return Err(Error::Tree(format!(
                        "target {target:?} appears at levels {prev} and {}",
                        p.len()
                    )))
                }
                _ => {}
            }
        }

        let mut levels: Vec<Vec<String>> = vec![vec![ROOT_LABEL.to_string()]];
        let mut parents: Vec<Vec<usize>> = vec![Vec::new()];
        for level in 1..=depth {
            let labels: Vec<String> = edges[level].keys().map(|s| s.to_string()).collect();
            let above = &levels[level - 1];
            let parent_idx = edges[level]
                .values()
                .map(|p| above.binary_search_by(|x| x.as_str().cmp(p)).expect("parent exists"))
                .collect();
            levels.push(labels);
            parents.push(parent_idx);
        }
        let targets = target_levels
            .iter()
            .map(|(label, &level)| {
                let idx = levels[level]
                    .binary_search_by(|x| x.as_str().cmp(label))
                    .expect("target exists");
                (level, idx)
            })
            .collect();
        Ok(LabelTree {
            levels,
            parents,
            targets,
            pad_depth: depth,
        })
    }

    /// Pads augmented paths to at least `depth` levels.
    pub fn with_pad_depth(mut self, depth: usize) -> Self {
        self.pad_depth = depth.max(self.max_level());
        self
    }

    /// `K_max` of the augmented tree.
    pub fn pad_depth(&self) -> usize {
        self.pad_depth
    }

    /// Deepest level `K_max`.
    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.max_level() {
            return Err(Error::LevelOutOfRange {
                level: k,
                max: self.max_level(),
            });
        }
        Ok(())
    }

    /// Labels at level `k` in index order.
    pub fn level_labels(&self, k: usize) -> Result<&[String]> {
        self.check_level(k)?;
        Ok(&self.levels[k])
    }

    pub fn index_of(&self, level: usize, label: &str) -> Option<usize> {
        self.levels
            .get(level)?
            .binary_search_by(|x| x.as_str().cmp(label))
            .ok()
    }

    pub fn parent_of(&self, level: usize, index: usize) -> Option<usize> {
        if level == 0 {
            return None;
        }
        self.parents.get(level)?.get(index).copied()
    }

    /// Map from level-(k+1) index to its parent's level-k index.
    pub fn parent_index_map(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k >= self.max_level() {
            return Err(Error::LevelOutOfRange {
                level: k,
                max: self.max_level().saturating_sub(1),
            });
        }
        Ok(self.parents[k + 1].clone())
    }

    /// Target labels (the set C) in sorted order.
    pub fn target_labels(&self) -> Vec<&str> {
        self.targets
            .iter()
            .map(|&(l, i)| self.levels[l][i].as_str())
            .collect()
    }

    pub fn targets(&self) -> &[(usize, usize)] {
        &self.targets
    }

    /// All nodes in level-major order, including the root.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(level, labels)| labels.iter().map(move |l| NodeId::new(level, l.clone())))
    }

    /// Flat position of `(level, index)` in [`LabelTree::nodes`] order.
    pub fn flat_index(&self, level: usize, index: usize) -> usize {
        self.levels[..level].iter().map(Vec::len).sum::<usize>() + index
    }

    /// Parent→child edges as flat node indices.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for level in 1..self.levels.len() {
            for (i, &p) in self.parents[level].iter().enumerate() {
                out.push((self.flat_index(level - 1, p), self.flat_index(level, i)));
            }
        }
        out
    }

    /// Labels from level 1 down to the node `(level, index)`.
    pub fn path_to(&self, level: usize, index: usize) -> Vec<String> {
        let mut labels = Vec::with_capacity(level);
        let (mut l, mut i) = (level, index);
        while l > 0 {
            labels.push(self.levels[l][i].clone());
            i = self.parents[l][i];
            l -= 1;
        }
        labels.reverse();
        labels
    }

    /// Natural paths of all targets, in target order.
    pub fn target_paths(&self) -> Vec<Vec<String>> {
        self.targets.iter().map(|&(l, i)| self.path_to(l, i)).collect()
    }

    /// Writes one line per target: `target, depth, padded path labels`.
    pub fn write_tree_file(&self, path: &FsPath) -> Result<()> {
        let k_max = self.pad_depth;
        let mut out = Vec::new();
        writeln!(out, "# hicu label tree").unwrap();
        writeln!(out, "# target\tdepth\tpath (levels 1..={k_max}, padded)").unwrap();
        for p in self.target_paths() {
            let target = p.last().expect("nonempty").clone();
            let mut padded = p.clone();
            padded.resize(k_max, target.clone());
            writeln!(out, "{}\t{}\t{}", target, p.len(), padded.join("\t")).unwrap();
        }
        crate::io_util::write_atomic(path, &out)
    }

    pub fn read_tree_file(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut paths = Vec::new();
        let mut pad_depth = 0;
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |r: &str| Error::format(path, i + 1, r);
            if fields.len() < 3 {
                return Err(bad("expected target, depth and path labels"));
            }
            let depth: usize = fields[1].parse().map_err(|_| bad("bad depth"))?;
            if depth == 0 || depth > fields.len() - 2 {
                return Err(bad("depth exceeds path length"));
            }
            let natural: Vec<String> = fields[2..2 + depth].iter().map(|s| s.to_string()).collect();
            if natural.last().map(String::as_str) != Some(fields[0]) {
                return Err(bad("path does not end at its target"));
            }
            paths.push(natural);
            pad_depth = pad_depth.max(fields.len() - 2);
        }
        Ok(LabelTree::from_paths(&paths)?.with_pad_depth(pad_depth))
    }
}

/// ICD label tree: the union of the natural paths of all codes, padded to
/// the five ICD levels on augmentation.
pub fn build_label_tree(codes: &[IcdCode], ranges: &RangeTable) -> Result<LabelTree> {
    if codes.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let unique: BTreeSet<&IcdCode> = codes.iter().collect();
    let paths = unique
        .into_iter()
        .map(|c| build_path(c, ranges).map(|p| p.natural_labels()))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelTree::from_paths(&paths)?.with_pad_depth(ICD_LEVELS))
}

impl PartialOrd for IcdCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for IcdCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.raw, self.kind).cmp(&(&other.raw, other.kind))
    }
}

/// Label tree whose targets all sit at `K_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedLabelTree {
    tree: LabelTree,
    /// `origin[k][i]` is the `(level, index)` in the un-augmented tree that
    /// node `(k, i)` stands for; padding copies point at their target.
    origin: Vec<Vec<(usize, usize)>>,
}

impl std::ops::Deref for AugmentedLabelTree {
    type Target = LabelTree;

    fn deref(&self) -> &LabelTree {
        &self.tree
    }
}

pub fn augment_tree(tree: &LabelTree) -> AugmentedLabelTree {
    let k_max = tree.pad_depth;
    let paths: Vec<Vec<String>> = tree
        .target_paths()
        .into_iter()
        .map(|mut p| {
            let target = p.last().expect("nonempty").clone();
            p.resize(k_max, target);
            p
        })
        .collect();
    let augmented = LabelTree::from_paths(&paths).expect("padding preserves the tree property");
    let target_pos: BTreeMap<&str, (usize, usize)> = tree
        .targets
        .iter()
        .map(|&(l, i)| (tree.levels[l][i].as_str(), (l, i)))
        .collect();
    let origin = augmented
        .levels
        .iter()
        .enumerate()
        .map(|(level, labels)| {
            labels
                .iter()
                .map(|label| match tree.index_of(level, label) {
                    Some(i) => (level, i),
                    None => target_pos[label.as_str()],
                })
                .collect()
        })
        .collect();
    AugmentedLabelTree {
        tree: augmented,
        origin,
    }
}

impl AugmentedLabelTree {
    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    /// Node of the un-augmented tree that `(level, index)` stands for.
    pub fn origin(&self, level: usize, index: usize) -> (usize, usize) {
        self.origin[level][index]
    }

    /// Positive level-`k` nodes given positive targets over C.
    pub fn ancestor_targets(&self, y_leaf: &[bool], k: usize) -> Result<Vec<bool>> {
        let k_max = self.max_level();
        self.check_level(k)?;
        let n_leaf = self.tree.levels[k_max].len();
        if y_leaf.len() != n_leaf {
            return Err(Error::Shape(format!(
                "target vector has {} entries, tree has {n_leaf} leaves",
                y_leaf.len()
            )));
        }
        let mut current = y_leaf.to_vec();
        for level in (k + 1..=k_max).rev() {
            let mut up = vec![false; self.tree.levels[level - 1].len()];
            for (i, &pos) in current.iter().enumerate() {
                if pos {
                    up[self.tree.parents[level][i]] = true;
                }
            }
            current = up;
        }
        Ok(current)
    }

    /// Index of every leaf (level K_max) in the label set C.
    pub fn leaf_index(&self, label: &str) -> Option<usize> {
        self.index_of(self.max_level(), label)
    }
}
