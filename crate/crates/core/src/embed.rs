//! Spectral factorization of target matrices and PCA projection of word subsets.
//!
//! `W = Φ_{:,:d} √|Λ_{:d}|`: eigenvectors scaled by the square roots of the
//! eigenvalue magnitudes, with the signs kept separately so the signed target
//! can be recomposed as `W·D·Wᵀ`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{self, ModeOrder, ThinSvd, DEGENERACY_RTOL};
use crate::matrix::TargetMatrix;
use crate::{Error, Result};

/// Rows of word vectors together with the spectral data that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub words: Vec<String>,
    /// |S|×d, rows are word vectors.
    pub w: DMatrix<f64>,
    /// Signed eigenvalues in selection order.
    pub eigvals: Vec<f64>,
    /// Orthonormal eigenvectors (columns) matching `eigvals`.
    pub modes: DMatrix<f64>,
    pub order: ModeOrder,
    /// True when the d-th and (d+1)-th eigenvalues are degenerate, so the
    /// truncation splits a group and the embedding is not unique.
    pub boundary_tie: bool,
}

impl EmbeddingSet {
    /// Build from a raw embedding matrix without spectral data (e.g. read from disk
    /// or produced by another model).
    pub fn from_rows(words: Vec<String>, w: DMatrix<f64>) -> Result<Self> {
        if words.len() != w.nrows() {
            return Err(Error::Dimension(format!(
                "{} words for {} embedding rows",
                words.len(),
                w.nrows()
            )));
        }
        linalg::check_finite(&w, "embedding")?;
        let d = w.ncols();
        Ok(EmbeddingSet {
            words,
            eigvals: vec![f64::NAN; d],
            modes: DMatrix::zeros(w.nrows(), d),
            w,
            order: ModeOrder::Magnitude,
            boundary_tie: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    /// D = sign(Λ) for the selected modes.
    pub fn signs(&self) -> Vec<f64> {
        self.eigvals.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect()
    }

    /// W·D·Wᵀ = Σ_{μ≤d} λ_μ Φ_μ Φ_μᵀ.
    pub fn signed_reconstruction(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.signs()));
        &self.w * d * self.w.transpose()
    }

    /// (Centered) Gram matrix of the rows.
    pub fn gram(&self, centered: bool) -> DMatrix<f64> {
        gram(&self.w, centered)
    }

    /// Rows for the given words, in that order.
    pub fn select(&self, words: &[String]) -> Result<EmbeddingSet> {
        let missing: Vec<String> = words.iter().filter(|w| !self.words.contains(w)).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingWords(missing));
        }
        let idx: Vec<usize> = words
            .iter()
            .map(|w| self.words.iter().position(|x| x == w).unwrap())
            .collect();
        Ok(EmbeddingSet {
            words: words.to_vec(),
            w: self.w.select_rows(&idx),
            eigvals: self.eigvals.clone(),
            modes: self.modes.select_rows(&idx),
            order: self.order,
            boundary_tie: self.boundary_tie,
        })
    }
}

/// Top-d modes of `m` (by |λ| or by λ), scaled into embeddings.
pub fn factorize(m: &TargetMatrix, d: usize, order: ModeOrder) -> Result<EmbeddingSet> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "embedding dimension d must be at least 1".into(),
        ));
    }
    let n = m.len();
    let d = d.min(n);
    // One extra mode lets us detect a tie at the truncation boundary.
    let want = (d + 1).min(n);
    let eig = linalg::top_k_eigen(&m.values, want, order)?;
    let boundary_tie = want > d && {
        let g = linalg::degenerate_groups(&eig.values, DEGENERACY_RTOL);
        g.iter().any(|r| r.start < d && r.end > d)
    };
    let values = eig.values[..d].to_vec();
    let modes = eig.vectors.columns(0, d).into_owned();
    let mut w = modes.clone();
    for (j, lam) in values.iter().enumerate() {
        w.column_mut(j).scale_mut(lam.abs().sqrt());
    }
    Ok(EmbeddingSet {
        words: m.words.clone(),
        w,
        eigvals: values,
        modes,
        order,
        boundary_tie,
    })
}

/// W·Wᵀ, or its doubly centered version P·W·Wᵀ·P.
pub fn gram(w: &DMatrix<f64>, centered: bool) -> DMatrix<f64> {
    if centered {
        let (c, _) = center_rows(w, &(0..w.nrows()).collect::<Vec<_>>());
        &c * c.transpose()
    } else {
        w * w.transpose()
    }
}

/// Subtract the mean of the rows in `basis_rows` from every row.
fn center_rows(w: &DMatrix<f64>, basis_rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let mut mean = DVector::zeros(w.ncols());
    for &i in basis_rows {
        mean += w.row(i).transpose();
    }
    mean /= basis_rows.len() as f64;
    let mut c = w.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

/// PCA-aligned coordinates of a word subset.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedGeometry {
    pub words: Vec<String>,
    /// |S|×r coordinates; column μ has norm `singular_values[μ]` over the basis rows.
    #[serde(skip)]
    pub wbar: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub centered: bool,
    pub excluded: Vec<String>,
    /// Column groups with singular values equal within the degeneracy tolerance.
    pub groups: Vec<Range<usize>>,
}

impl ProjectedGeometry {
    pub fn rank(&self) -> usize {
        self.wbar.ncols()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        &self.wbar * self.wbar.transpose()
    }

    /// First `r` columns.
    pub fn truncate(&self, r: usize) -> DMatrix<f64> {
        self.wbar.columns(0, r.min(self.rank())).into_owned()
    }

    /// Ranks that do not split a degenerate group.
    pub fn admissible_ranks(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.end).collect()
    }

    pub fn as_embedding(&self) -> EmbeddingSet {
        EmbeddingSet::from_rows(self.words.clone(), self.wbar.clone()).expect("consistent shapes")
    }
}

/// Relative singular-value cutoff for the PCA rank.
const RANK_RTOL: f64 = 1e-12;

/// Largest problem handed to the Jacobi SVD; beyond it the right singular
/// vectors come from the eigendecomposition of CᵀC.
const JACOBI_LIMIT: usize = 400;

/// Right singular vectors (columns, by descending singular value) and singular values.
fn right_singular_basis(c: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if c.nrows().min(c.ncols()) <= JACOBI_LIMIT {
        let svd = ThinSvd::new(c)?;
        return Ok((svd.v, svd.s));
    }
    // Large case: eigenvectors of the covariance, with the singular values
    // refined as ‖C·v‖ (directions with s below √ε·s_max are not meaningful
    // here and are removed by the cutoff below).
    let eig = linalg::sym_eigen(&(c.transpose() * c), ModeOrder::Value)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] > top * 1e-14).collect();
    let v = eig.vectors.select_columns(&keep);
    let s = (0..keep.len()).map(|j| (c * v.column(j)).norm()).collect();
    Ok((v, s))
}

/// Centered PCA of an embedding set; rows in `exclude` do not influence the
/// mean or the basis but are projected into it.
pub fn project_pca<S: AsRef<str>>(e: &EmbeddingSet, exclude: &[S]) -> Result<ProjectedGeometry> {
    project_rows(&e.words, &e.w, exclude, true)
}

pub fn project_rows<S: AsRef<str>>(
    words: &[String],
    w: &DMatrix<f64>,
    exclude: &[S],
    centered: bool,
) -> Result<ProjectedGeometry> {
    let excluded: Vec<String> = exclude.iter().map(|s| s.as_ref().to_string()).collect();
    let missing: Vec<String> = excluded.iter().filter(|x| !words.contains(x)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingWords(missing));
    }
    let basis_rows: Vec<usize> = (0..words.len()).filter(|&i| !excluded.contains(&words[i])).collect();
    if basis_rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 basis rows, got {}",
            basis_rows.len()
        )));
    }
    linalg::check_finite(w, "embedding")?;
    let shifted = if centered {
        center_rows(w, &basis_rows).0
    } else {
        w.clone()
    };
    let basis = shifted.select_rows(&basis_rows);
    let (basis_vectors, all_s) = right_singular_basis(&basis)?;
    let smax = all_s.first().copied().unwrap_or(0.0);
    let dims = basis_rows.len().max(w.ncols()) as f64;
    let cut = smax * RANK_RTOL * dims.sqrt();
    let r = all_s.iter().filter(|&&s| smax > 0.0 && s > cut).count();
    if r == 0 {
        return Err(Error::Numerical(
            "centered embedding matrix has rank 0 (all basis rows coincide)".into(),
        ));
    }
    let v = basis_vectors.columns(0, r).into_owned();
    let mut wbar = &shifted * v;
    // Sign convention decided on the basis rows only.
    for mut col in wbar.column_iter_mut() {
        let (mut best, mut best_abs) = (0usize, -1.0f64);
        for &i in &basis_rows {
            if col[i].abs() > best_abs * (1.0 + 1e-12) {
                best_abs = col[i].abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    let singular_values: Vec<f64> = all_s[..r].to_vec();
    let groups = linalg::degenerate_groups(&singular_values, DEGENERACY_RTOL);
    Ok(ProjectedGeometry {
        words: words.to_vec(),
        wbar,
        singular_values,
        centered,
        excluded,
        groups,
    })
}

/// Orthogonal alignment of two point sets.
#[derive(Debug, Clone)]
pub struct Procrustes {
    /// Orthogonal (rotation or reflection) map applied on the right of A.
    pub q: DMatrix<f64>,
    /// ‖A·Q − B‖_F / ‖B‖_F.
    pub residual: f64,
}

fn pad_cols(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols);
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

/// Q = argmin_{QᵀQ=I} ‖A·Q − B‖_F, narrower input padded with zero columns.
pub fn align_procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Procrustes> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "point sets have {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let cols = a.ncols().max(b.ncols());
    let (a, b) = (pad_cols(a, cols), pad_cols(b, cols));
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::Numerical("Procrustes input is identically zero".into()));
    }
    let svd = ThinSvd::new(&(a.transpose() * &b))?;
    let q = &svd.u * svd.v.transpose();
    let residual = (&a * &q - &b).norm() / b.norm();
    Ok(Procrustes { q, residual })
}
