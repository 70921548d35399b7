//! Dense target matrices built from co-occurrence statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{CooccurrenceTable, Vocabulary};
use crate::linalg::{self, ModeOrder};
use crate::{Error, Result};

/// Which transform of the co-occurrence ratio a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatrixKind {
    #[serde(alias = "mstar")]
    Mstar,
    #[serde(alias = "pmi")]
    Pmi,
    #[serde(alias = "pmi-eps")]
    PmiEps,
    #[serde(alias = "abs-mstar")]
    AbsMstar,
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;

    /// Accepts both the file ids (`PMI_EPS`) and the command-line spelling (`pmi-eps`).
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mstar" => Ok(MatrixKind::Mstar),
            "pmi" => Ok(MatrixKind::Pmi),
            "pmi-eps" => Ok(MatrixKind::PmiEps),
            "abs-mstar" => Ok(MatrixKind::AbsMstar),
            _ => Err(Error::InvalidArgument(format!(
                "unknown matrix kind '{s}' (expected mstar, pmi, pmi-eps or abs-mstar)"
            ))),
        }
    }
}

impl MatrixKind {
    pub fn id(self) -> &'static str {
        match self {
            MatrixKind::Mstar => "MSTAR",
            MatrixKind::Pmi => "PMI",
            MatrixKind::PmiEps => "PMI_EPS",
            MatrixKind::AbsMstar => "ABS_MSTAR",
        }
    }
}

/// Where a matrix came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Provenance {
    /// Hash of the configuration (or a free-form description for models).
    pub source: String,
    /// Words whose mutual block was ablated before the matrix was built.
    pub ablated: Vec<String>,
    pub notes: Vec<String>,
}

/// An ordered word subset S with vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    pub ids: Vec<u32>,
    pub words: Vec<String>,
}

impl Subset {
    pub fn from_words<S: AsRef<str>>(vocab: &Vocabulary, words: &[S]) -> Result<Self> {
        let ids = vocab.ids_of(words)?;
        Ok(Subset {
            ids,
            words: words.iter().map(|w| w.as_ref().to_string()).collect(),
        })
    }

    /// The whole vocabulary in id order.
    pub fn all(vocab: &Vocabulary) -> Self {
        Subset {
            ids: (0..vocab.len() as u32).collect(),
            words: vocab.tokens().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Dense symmetric |S|×|S| target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub kind: MatrixKind,
    pub values: DMatrix<f64>,
    pub words: Vec<String>,
    pub provenance: Provenance,
}

impl TargetMatrix {
    /// Validate shape, finiteness and (for M*) the [−2, 2] bound; symmetrizes.
    pub fn new(kind: MatrixKind, values: DMatrix<f64>, words: Vec<String>, provenance: Provenance) -> Result<Self> {
        linalg::check_square(&values, "target matrix")?;
        if values.nrows() != words.len() {
            return Err(Error::Dimension(format!(
                "{} words for a {}x{} matrix",
                words.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        linalg::check_finite(&values, "target matrix")?;
        let scale = values.amax().max(1.0);
        let asym = linalg::asymmetry(&values);
        if asym > 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "target matrix is not symmetric (max |M - Mᵀ| = {asym:e})"
            )));
        }
        let values = linalg::symmetrize(&values);
        if kind == MatrixKind::Mstar {
            if let Some(v) = values.iter().find(|v| v.abs() > 2.0 + 1e-12) {
                return Err(Error::Numerical(format!("M* entry {v} outside [-2, 2]")));
            }
        }
        Ok(TargetMatrix {
            kind,
            values,
            words,
            provenance,
        })
    }

    /// A model matrix with placeholder words `w0, w1, …`.
    pub fn anonymous(kind: MatrixKind, values: DMatrix<f64>, source: &str) -> Result<Self> {
        let words = (0..values.nrows()).map(|i| format!("w{i}")).collect();
        Self::new(
            kind,
            values,
            words,
            Provenance {
                source: source.to_string(),
                ..Default::default()
            },
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    /// Indices of the given words, reporting all missing words at once.
    pub fn indices_of<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        let missing: Vec<String> = words
            .iter()
            .filter(|w| self.index_of(w.as_ref()).is_none())
            .map(|w| w.as_ref().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingWords(missing));
        }
        Ok(words.iter().map(|w| self.index_of(w.as_ref()).unwrap()).collect())
    }

    /// Principal submatrix on `idx` (in that order).
    pub fn restrict(&self, idx: &[usize]) -> Result<TargetMatrix> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Dimension(format!("index {bad} out of range")));
        }
        let values = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.values[(idx[a], idx[b])]);
        let words = idx.iter().map(|&i| self.words[i].clone()).collect();
        TargetMatrix::new(self.kind, values, words, self.provenance.clone())
    }

    /// Smallest eigenvalue ≥ −tol·‖M‖₂?
    pub fn is_psd(&self, rtol: f64) -> Result<bool> {
        let e = linalg::sym_eigen(&self.values, ModeOrder::Value)?;
        let top = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(e.values.last().is_none_or(|&v| v >= -rtol * top))
    }
}

/// f(y) = 2(y − 1)/(y + 1) written in terms of the joint and product probabilities.
#[inline]
pub fn mstar_entry(pij: f64, pipj: f64) -> f64 {
    let denom = 0.5 * (pij + pipj);
    if denom == 0.0 {
        0.0
    } else {
        (pij - pipj) / denom
    }
}

fn subset_marginals(t: &CooccurrenceTable, s: &Subset) -> Result<Vec<f64>> {
    if s.ids.len() != s.words.len() {
        return Err(Error::Dimension("subset ids and words differ in length".into()));
    }
    if !t.is_valid() {
        return Err(Error::EmptyCorpus("co-occurrence table has zero mass".into()));
    }
    let p = t.marginals();
    s.ids
        .iter()
        .zip(&s.words)
        .map(|(&i, w)| match p.get(i as usize) {
            Some(&v) if v > 0.0 => Ok(v),
            Some(_) => Err(Error::ZeroMarginal(w.clone())),
            None => Err(Error::Dimension(format!("id {i} outside the table"))),
        })
        .collect()
}

/// Normalized co-occurrence matrix M*_S.
///
/// `P_ij = 0` with positive marginals gives −2; only 0/0 maps to 0.
pub fn build_mstar(t: &CooccurrenceTable, s: &Subset) -> Result<TargetMatrix> {
    let p = subset_marginals(t, s)?;
    let n = s.len();
    let values = DMatrix::from_fn(n, n, |a, b| mstar_entry(t.p(s.ids[a], s.ids[b]), p[a] * p[b]));
    TargetMatrix::new(MatrixKind::Mstar, values, s.words.clone(), Provenance::default())
}

/// PMI (eps = 0) or regularized PMI_ε = log(P_ij/(P_iP_j) + ε).
pub fn build_pmi(t: &CooccurrenceTable, s: &Subset, eps: f64) -> Result<TargetMatrix> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be non-negative, got {eps}")));
    }
    let p = subset_marginals(t, s)?;
    let n = s.len();
    let mut values = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let ratio = t.p(s.ids[a], s.ids[b]) / (p[a] * p[b]);
            if ratio == 0.0 && eps == 0.0 {
                return Err(Error::LogOfZero(s.words[a].clone(), s.words[b].clone()));
            }
            values[(a, b)] = (ratio + eps).ln();
        }
    }
    let kind = if eps == 0.0 {
        MatrixKind::Pmi
    } else {
        MatrixKind::PmiEps
    };
    TargetMatrix::new(kind, values, s.words.clone(), Provenance::default())
}

/// Replace the S×S block by independence, P_ij = P_iP_j, with the marginals
/// recomputed self-consistently. Masses outside the block are untouched.
///
/// Let O be the ordered mass outside S×S and R the part of it on rows in S.
/// The new block marginals sum to s = R/(O − R) and the new total mass is
/// Z' = O/(1 − s²); each block entry becomes Z'·p_i·p_j with
/// p_i = r_i/(Z'(1 − s)).
pub fn ablate_block(t: &CooccurrenceTable, ids: &[u32]) -> Result<CooccurrenceTable> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("ablation subset is empty".into()));
    }
    let v = t.vocab_size();
    if let Some(bad) = ids.iter().find(|&&i| i as usize >= v) {
        return Err(Error::Dimension(format!("id {bad} outside vocabulary of size {v}")));
    }
    let mut in_s = vec![false; v];
    for &i in ids {
        in_s[i as usize] = true;
    }
    let mut members: Vec<u32> = ids.to_vec();
    members.sort_unstable();
    members.dedup();
    let pos = |i: u32| members.binary_search(&i).unwrap();

    let mut r = vec![0.0; members.len()];
    let mut block = 0.0;
    for (i, j, m) in t.entries() {
        match (in_s[i as usize], in_s[j as usize]) {
            (true, true) => block += m,
            (true, false) => r[pos(i)] += m / 2.0,
            (false, true) => r[pos(j)] += m / 2.0,
            (false, false) => {}
        }
    }
    let z = t.z();
    let outside = z - block;
    let big_r: f64 = r.iter().sum();

    let (z_new, p): (f64, Vec<f64>) = if outside - 2.0 * big_r > 1e-15 * z && big_r > 0.0 {
        let s = big_r / (outside - big_r);
        let z_new = outside / (1.0 - s * s);
        let p = r.iter().map(|ri| ri / (z_new * (1.0 - s))).collect();
        (z_new, p)
    } else {
        // No mass outside the block to anchor the marginals: keep the old ones.
        let old = t.marginals();
        (z, members.iter().map(|&i| old[i as usize]).collect())
    };

    let mut out = t.clone();
    for (a, &i) in members.iter().enumerate() {
        for (b, &j) in members.iter().enumerate().skip(a) {
            let ordered = z_new * p[a] * p[b];
            let stored = if i == j { ordered } else { 2.0 * ordered };
            out.set_pair_mass(i, j, stored);
        }
    }
    out.recompute_z();
    Ok(out)
}

/// Zero the block on `idx` of a dense matrix (the PMI/M* analogue of [`ablate_block`]).
pub fn zero_block(m: &TargetMatrix, idx: &[usize]) -> Result<TargetMatrix> {
    let mut values = m.values.clone();
    for &a in idx {
        for &b in idx {
            if a >= m.len() || b >= m.len() {
                return Err(Error::Dimension(format!("index {} out of range", a.max(b))));
            }
            values[(a, b)] = 0.0;
        }
    }
    let mut prov = m.provenance.clone();
    prov.ablated.extend(idx.iter().map(|&i| m.words[i].clone()));
    TargetMatrix::new(m.kind, values, m.words.clone(), prov)
}

/// M = M⁺ − M⁻ from the positive and negative eigenpairs; |M| = M⁺ + M⁻.
#[derive(Debug, Clone)]
pub struct PsdSplit {
    pub plus: TargetMatrix,
    pub minus: TargetMatrix,
}

impl PsdSplit {
    /// |M*| = M⁺ + M⁻, tagged ABS_MSTAR.
    pub fn absolute(&self) -> Result<TargetMatrix> {
        TargetMatrix::new(
            MatrixKind::AbsMstar,
            &self.plus.values + &self.minus.values,
            self.plus.words.clone(),
            self.plus.provenance.clone(),
        )
    }
}

pub fn psd_nsd_split(m: &TargetMatrix) -> Result<PsdSplit> {
    let e = linalg::sym_eigen(&m.values, ModeOrder::Value).map_err(|err| match err {
        Error::Numerical(msg) => Error::Numerical(format!(
            "{msg}; matrix {}x{}, ‖M‖_F = {:e}",
            m.len(),
            m.len(),
            m.values.norm()
        )),
        other => other,
    })?;
    let n = m.len();
    let mut plus = DMatrix::zeros(n, n);
    let mut minus = DMatrix::zeros(n, n);
    for (k, &lam) in e.values.iter().enumerate() {
        let v = e.vectors.column(k);
        let outer = v * v.transpose();
        if lam > 0.0 {
            plus += outer * lam;
        } else if lam < 0.0 {
            minus -= outer * lam;
        }
    }
    let mk = |values: DMatrix<f64>| {
        TargetMatrix::new(
            m.kind,
            linalg::symmetrize(&values),
            m.words.clone(),
            m.provenance.clone(),
        )
    };
    Ok(PsdSplit {
        plus: mk(plus)?,
        minus: mk(minus)?,
    })
}
