//! Tokenization, vocabularies and windowed co-occurrence counting.
//!
//! Counting follows the skip-gram weighting
//! `P_ij ∝ Σ_ν Σ_{d≤L} f(d)·(δ[C_{ν+d}=j] + δ[C_{ν−d}=j])` restricted to tokens
//! `C_ν = i`, with windows truncated at document boundaries.
//!
//! Storage convention: `pair_mass(i, j)` for `i ≠ j` is the *unordered* mass,
//! i.e. the sum of the ordered contributions (i, j) and (j, i). A single pair of
//! tokens at distance `d` therefore adds `2·f(d)` whether or not the two tokens
//! are equal. `Z` is the sum of all stored masses, and the ordered probability is
//! `P_ij = pair_mass / (2Z)` off the diagonal and `pair_mass / Z` on it, so that
//! `Σ_ij P_ij = 1`.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default pattern for numerals written with separators ("1,000", "3.14").
/// Plain integers such as years are kept.
pub const DEFAULT_NUMERAL_PATTERN: &str = r"\d+(?:[.,]\d+)+";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DocSplit {
    /// One document per line.
    #[default]
    Line,
    /// Documents are separated by blank lines.
    BlankLine,
}

/// Normalization configuration for [`tokenize_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizeRules {
    pub lowercase: bool,
    pub strip_numerals: bool,
    pub numeral_pattern: String,
    /// Vocabulary cap V; `None` keeps every token.
    pub vocab_size: Option<usize>,
    /// Documents with fewer normalized tokens are dropped before the vocabulary is built.
    pub min_doc_len: usize,
    /// Words that must survive the vocabulary cap.
    pub probe_words: Vec<String>,
    pub doc_split: DocSplit,
}

impl Default for TokenizeRules {
    fn default() -> Self {
        TokenizeRules {
            lowercase: true,
            strip_numerals: true,
            numeral_pattern: DEFAULT_NUMERAL_PATTERN.to_string(),
            vocab_size: None,
            min_doc_len: 0,
            probe_words: Vec::new(),
            doc_split: DocSplit::Line,
        }
    }
}

/// Ordered vocabulary: ids are dense, sorted by descending count then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from (token, count) pairs in any order; duplicates are rejected.
    pub fn from_counts(pairs: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut pairs: Vec<(String, u64)> = pairs.into_iter().collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_ordered(pairs)
    }

    /// Build from pairs that are already in id order; the ordering invariant is checked.
    pub fn from_ordered(pairs: Vec<(String, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(pairs.len());
        for (i, (tok, _)) in pairs.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(|c| c.is_whitespace()) {
                return Err(Error::parse("vocabulary", format!("invalid token {tok:?}")));
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::parse("vocabulary", format!("duplicate token {tok:?}")));
            }
        }
        for w in pairs.windows(2) {
            let ordered = w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0);
            if !ordered {
                return Err(Error::parse(
                    "vocabulary",
                    format!("tokens {:?} and {:?} are out of order", w[0].0, w[1].0),
                ));
            }
        }
        let (tokens, counts) = pairs.into_iter().unzip();
        Ok(Vocabulary { tokens, counts, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Resolve a list of words, reporting every missing one at once.
    pub fn ids_of<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<u32>> {
        let missing: Vec<String> = words
            .iter()
            .filter(|w| self.id(w.as_ref()).is_none())
            .map(|w| w.as_ref().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingWords(missing));
        }
        Ok(words.iter().map(|w| self.id(w.as_ref()).unwrap()).collect())
    }
}

/// Token ids grouped by document.
pub type Documents = Vec<Vec<u32>>;

/// Normalizes documents according to [`TokenizeRules`].
pub struct Normalizer {
    lowercase: bool,
    numerals: Option<Regex>,
}

impl Normalizer {
    pub fn new(rules: &TokenizeRules) -> Result<Self> {
        let numerals = if rules.strip_numerals {
            Some(
                Regex::new(&rules.numeral_pattern)
                    .map_err(|e| Error::InvalidArgument(format!("numeral pattern: {e}")))?,
            )
        } else {
            None
        };
        Ok(Normalizer {
            lowercase: rules.lowercase,
            numerals,
        })
    }

    /// Lowercase, drop separated numerals, turn every non-alphanumeric character
    /// into whitespace and split.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lowered;
        let mut text = text;
        if self.lowercase {
            lowered = text.to_lowercase();
            text = &lowered;
        }
        let stripped;
        if let Some(re) = &self.numerals {
            stripped = re.replace_all(text, " ");
            text = &stripped;
        }
        let cleaned: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        cleaned.split_whitespace().map(str::to_string).collect()
    }
}

/// Split raw text into documents per `rules.doc_split`.
fn split_documents<R: BufRead>(reader: R, split: DocSplit) -> Result<Vec<String>> {
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in reader.split(b'\n') {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        let line = String::from_utf8_lossy(&line);
        match split {
            DocSplit::Line => docs.push(line.into_owned()),
            DocSplit::BlankLine => {
                if line.trim().is_empty() {
                    if !current.is_empty() {
                        docs.push(std::mem::take(&mut current));
                    }
                } else {
                    current.push_str(&line);
                    current.push('\n');
                }
            }
        }
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

/// Tokenize a corpus into per-document id streams plus the vocabulary.
///
/// Out-of-vocabulary tokens are discarded (the stream closes up around them);
/// documents shorter than `min_doc_len` normalized tokens are dropped first.
pub fn tokenize_corpus<R: BufRead>(reader: R, rules: &TokenizeRules) -> Result<(Documents, Vocabulary)> {
    let norm = Normalizer::new(rules)?;
    let raw_docs = split_documents(reader, rules.doc_split)?;

    let tokenized: Vec<Vec<String>> = raw_docs
        .par_iter()
        .map(|d| norm.tokens(d))
        .filter(|t| !t.is_empty() && t.len() >= rules.min_doc_len)
        .collect();
    if tokenized.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no document has at least {} tokens",
            rules.min_doc_len.max(1)
        )));
    }

    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in &tokenized {
        for t in doc {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut pairs: Vec<(String, u64)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(cap) = rules.vocab_size {
        pairs.truncate(cap);
    }
    let vocab = Vocabulary::from_ordered(pairs)?;
    if !rules.probe_words.is_empty() {
        vocab.ids_of(&rules.probe_words)?;
    }

    let docs: Documents = tokenized
        .par_iter()
        .map(|doc| doc.iter().filter_map(|t| vocab.id(t)).collect::<Vec<u32>>())
        .filter(|d| !d.is_empty())
        .collect();
    Ok((docs, vocab))
}

/// Distance weighting f(d) for 1 ≤ d ≤ L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// f(d) = L + 1 − d, the dynamic-window weighting.
    #[default]
    Linear,
    /// f(d) = 1.
    Uniform,
    /// f(d) = 1/d.
    Harmonic,
}

impl Weighting {
    pub fn weight(self, d: usize, window: usize) -> f64 {
        match self {
            Weighting::Linear => (window + 1 - d) as f64,
            Weighting::Uniform => 1.0,
            Weighting::Harmonic => 1.0 / d as f64,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Weighting::Linear => "linear",
            Weighting::Uniform => "uniform",
            Weighting::Harmonic => "harmonic",
        }
    }

    pub fn from_id(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Weighting::Linear),
            "uniform" => Ok(Weighting::Uniform),
            "harmonic" => Ok(Weighting::Harmonic),
            other => Err(Error::InvalidArgument(format!("unknown weighting '{other}'"))),
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Weighting::from_id(s)
    }
}

#[inline]
fn key(i: u32, j: u32) -> u64 {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    ((a as u64) << 32) | b as u64
}

#[inline]
fn unkey(k: u64) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}

/// Sparse symmetric co-occurrence mass over a vocabulary of size `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    v: usize,
    window: usize,
    weighting: Weighting,
    mass: BTreeMap<u64, f64>,
    z: f64,
}

impl CooccurrenceTable {
    pub fn empty(v: usize, window: usize, weighting: Weighting) -> Self {
        CooccurrenceTable {
            v,
            window,
            weighting,
            mass: BTreeMap::new(),
            z: 0.0,
        }
    }

    /// Rebuild from stored triplets (i ≤ j or not; symmetric storage is enforced).
    pub fn from_entries(
        v: usize,
        window: usize,
        weighting: Weighting,
        entries: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut t = Self::empty(v, window, weighting);
        for (i, j, m) in entries {
            if i as usize >= v || j as usize >= v {
                return Err(Error::parse(
                    "co-occurrence",
                    format!("index ({i}, {j}) out of range for V = {v}"),
                ));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::parse("co-occurrence", format!("invalid mass {m} at ({i}, {j})")));
            }
            if m > 0.0 {
                *t.mass.entry(key(i, j)).or_default() += m;
                t.z += m;
            }
        }
        Ok(t)
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Total stored mass Z.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// A table with no mass cannot be normalized.
    pub fn is_valid(&self) -> bool {
        self.z > 0.0
    }

    pub fn nnz(&self) -> usize {
        self.mass.len()
    }

    /// Unordered co-occurrence mass; symmetric in its arguments.
    pub fn pair_mass(&self, i: u32, j: u32) -> f64 {
        self.mass.get(&key(i, j)).copied().unwrap_or(0.0)
    }

    /// Ordered joint probability P_ij.
    pub fn p(&self, i: u32, j: u32) -> f64 {
        if self.z == 0.0 {
            return 0.0;
        }
        let m = self.pair_mass(i, j);
        if i == j {
            m / self.z
        } else {
            m / (2.0 * self.z)
        }
    }

    /// Unigram marginals P_i = Σ_j P_ij.
    pub fn marginals(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.v];
        if self.z == 0.0 {
            return p;
        }
        for (&k, &m) in &self.mass {
            let (i, j) = unkey(k);
            if i == j {
                p[i as usize] += m / self.z;
            } else {
                p[i as usize] += m / (2.0 * self.z);
                p[j as usize] += m / (2.0 * self.z);
            }
        }
        p
    }

    /// Stored triplets (i ≤ j) sorted by (i, j).
    pub fn entries(&self) -> Vec<(u32, u32, f64)> {
        let mut out: Vec<(u32, u32, f64)> = self
            .mass
            .iter()
            .map(|(&k, &m)| {
                let (i, j) = unkey(k);
                (i, j, m)
            })
            .collect();
        out.sort_by_key(|a| (a.0, a.1));
        out
    }

    /// Overwrite one unordered mass, keeping Z consistent.
    pub(crate) fn set_pair_mass(&mut self, i: u32, j: u32, m: f64) {
        let old = self.mass.remove(&key(i, j)).unwrap_or(0.0);
        self.z -= old;
        if m > 0.0 {
            self.mass.insert(key(i, j), m);
            self.z += m;
        }
    }

    /// Recompute Z as an ordered sum over sorted entries (removes drift from
    /// incremental updates and makes the value independent of hash order).
    pub(crate) fn recompute_z(&mut self) {
        self.z = self.entries().iter().map(|e| e.2).sum();
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.v != other.v || self.window != other.window || self.weighting != other.weighting {
            return Err(Error::Incompatible(format!(
                "(V={}, L={}, f={}) vs (V={}, L={}, f={})",
                self.v,
                self.window,
                self.weighting.id(),
                other.v,
                other.window,
                other.weighting.id()
            )));
        }
        Ok(())
    }

    /// Elementwise sum of masses and Z.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (&k, &m) in &other.mass {
            *out.mass.entry(k).or_default() += m;
        }
        out.z += other.z;
        Ok(out)
    }
}

/// Free-function form of [`CooccurrenceTable::merge`].
pub fn merge_tables(t1: &CooccurrenceTable, t2: &CooccurrenceTable) -> Result<CooccurrenceTable> {
    t1.merge(t2)
}

fn count_into(table: &mut CooccurrenceTable, doc: &[u32], weights: &[f64]) {
    let window = weights.len();
    for (nu, &a) in doc.iter().enumerate() {
        let end = (nu + window).min(doc.len() - 1);
        for (q, &b) in doc.iter().enumerate().take(end + 1).skip(nu + 1) {
            let w = 2.0 * weights[q - nu - 1];
            *table.mass.entry(key(a, b)).or_default() += w;
            table.z += w;
        }
    }
}

/// Count one shard of documents.
pub fn count_cooccurrences(
    docs: &[Vec<u32>],
    v: usize,
    window: usize,
    weighting: Weighting,
) -> Result<CooccurrenceTable> {
    if window == 0 {
        return Err(Error::InvalidArgument("window L must be at least 1".into()));
    }
    if let Some(bad) = docs.iter().flatten().find(|&&t| t as usize >= v) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of size {v}"
        )));
    }
    let weights: Vec<f64> = (1..=window).map(|d| weighting.weight(d, window)).collect();
    if let Some(d) = weights.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument(format!("f({}) must be positive", d + 1)));
    }
    let mut table = CooccurrenceTable::empty(v, window, weighting);
    for doc in docs {
        count_into(&mut table, doc, &weights);
    }
    Ok(table)
}

/// Parallel counting over fixed-size document shards, merged in shard order so
/// that the result does not depend on thread scheduling.
pub fn count_parallel(
    docs: &[Vec<u32>],
    v: usize,
    window: usize,
    weighting: Weighting,
    docs_per_shard: usize,
) -> Result<CooccurrenceTable> {
    let shard = docs_per_shard.max(1);
    let parts: Vec<CooccurrenceTable> = docs
        .par_chunks(shard)
        .map(|chunk| count_cooccurrences(chunk, v, window, weighting))
        .collect::<Result<_>>()?;
    let mut out = CooccurrenceTable::empty(v, window, weighting);
    for p in &parts {
        out = out.merge(p)?;
    }
    if parts.is_empty() {
        // still validate arguments
        count_cooccurrences(&[], v, window, weighting)?;
    }
    Ok(out)
}
