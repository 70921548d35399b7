//! Dense symmetric linear algebra shared by the embedding, probe and model code.
//!
//! The heavy lifting is delegated to `nalgebra`; this module adds the
//! conventions the rest of the crate relies on: magnitude ordering, grouping of
//! degenerate eigenvalues, deterministic signs and subspace comparisons that
//! are insensitive to rotations inside degenerate groups.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default largest matrix order handed to the dense eigensolver.
pub const DENSE_GUARD: usize = 6000;

/// Relative tolerance below which eigenvalues are treated as one degenerate group.
pub const DEGENERACY_RTOL: f64 = 1e-8;

/// How eigenpairs are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeOrder {
    /// Descending |λ|: the asymmetric-factorization convention, negative modes compete.
    #[default]
    Magnitude,
    /// Descending λ: PSD-only workflows.
    Value,
}

impl std::str::FromStr for ModeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(ModeOrder::Magnitude),
            "value" => Ok(ModeOrder::Value),
            _ => Err(Error::InvalidArgument(format!("unknown mode order '{s}'"))),
        }
    }
}

/// Eigenvalues with matching orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::Numerical(format!("{what} has a non-finite entry at ({r}, {c})")));
    }
    Ok(())
}

/// Largest |m_ij - m_ji|.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn order_key(v: f64, order: ModeOrder) -> f64 {
    match order {
        ModeOrder::Magnitude => v.abs(),
        ModeOrder::Value => v,
    }
}

/// Flip each column so that its entry of largest magnitude is positive.
///
/// Ties go to the lowest row index, which keeps the convention reproducible.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            // A relative slack keeps sign choice stable against rounding noise
            // when two entries have the same magnitude.
            if v.abs() > best_abs * (1.0 + 1e-12) {
                best_abs = v.abs();
                best = i;
            }
        }
        if best_abs > 0.0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full symmetric eigendecomposition, sorted by `order`, with column signs fixed.
pub fn sym_eigen(m: &DMatrix<f64>, order: ModeOrder) -> Result<SymEigen> {
    check_square(m, "eigenproblem input")?;
    check_finite(m, "eigenproblem input")?;
    let n = m.nrows();
    if n > DENSE_GUARD {
        return Err(Error::SizeGuard {
            what: "dense eigendecomposition".into(),
            requested: n,
            limit: DENSE_GUARD,
        });
    }
    if n == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, 100_000).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolver did not converge (n = {n}, ‖M‖_F = {:e})",
            sym.norm()
        ))
    })?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        order_key(eig.eigenvalues[b], order)
            .total_cmp(&order_key(eig.eigenvalues[a], order))
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_column_signs(&mut vectors);
    Ok(SymEigen { values, vectors })
}

/// Top-`k` eigenpairs; dense for small problems, subspace iteration above the guard.
pub fn top_k_eigen(m: &DMatrix<f64>, k: usize, order: ModeOrder) -> Result<SymEigen> {
    check_square(m, "eigenproblem input")?;
    let n = m.nrows();
    let k = k.min(n);
    if n <= DENSE_GUARD {
        let full = sym_eigen(m, order)?;
        return Ok(SymEigen {
            values: full.values[..k].to_vec(),
            vectors: full.vectors.columns(0, k).into_owned(),
        });
    }
    if order == ModeOrder::Value {
        return Err(Error::InvalidArgument(
            "value ordering is only available for dense problems".into(),
        ));
    }
    subspace_iteration(m, k, 5000, 1e-10)
}

/// Block power iteration with Rayleigh–Ritz extraction for the `k` largest-|λ| pairs.
///
/// Converges at rate |λ_{p+1}/λ_k| where `p` is the block size (k plus an
/// oversampling margin). Deterministic: the starting block comes from a fixed seed.
pub fn subspace_iteration(m: &DMatrix<f64>, k: usize, max_iter: usize, tol: f64) -> Result<SymEigen> {
    check_square(m, "eigenproblem input")?;
    check_finite(m, "eigenproblem input")?;
    let n = m.nrows();
    let k = k.min(n);
    if k == 0 {
        return Ok(SymEigen {
            values: vec![],
            vectors: DMatrix::zeros(n, 0),
        });
    }
    let p = (k + k.max(8)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_e16e);
    let start = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let mut q = start.qr().q();
    let mut last_residual = f64::INFINITY;
    for _ in 0..max_iter {
        let z = m * &q;
        let t = symmetrize(&(q.transpose() * &z));
        let ritz = sym_eigen(&t, ModeOrder::Magnitude)?;
        let vecs = &q * &ritz.vectors;
        let mvecs = &z * &ritz.vectors;
        let scale = ritz.values[0].abs().max(f64::MIN_POSITIVE);
        last_residual = (0..k)
            .map(|j| (mvecs.column(j) - vecs.column(j) * ritz.values[j]).norm())
            .fold(0.0, f64::max)
            / scale;
        if last_residual < tol {
            let mut vectors = vecs.columns(0, k).into_owned();
            fix_column_signs(&mut vectors);
            return Ok(SymEigen {
                values: ritz.values[..k].to_vec(),
                vectors,
            });
        }
        q = z.qr().q();
    }
    Err(Error::Numerical(format!(
        "subspace iteration did not converge after {max_iter} sweeps (relative residual {last_residual:e})"
    )))
}

/// Consecutive runs of values equal within `rtol` (relative to the larger magnitude,
/// with an absolute floor tied to the largest value).
pub fn degenerate_groups(values: &[f64], rtol: f64) -> Vec<Range<usize>> {
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = scale * 1e-13;
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (a - b).abs() > rtol * a.abs().max(b.abs()) && (a - b).abs() > floor
        };
        if split {
            if start < i {
                groups.push(start..i);
            }
            start = i;
        }
    }
    groups
}

/// Columns `p < r` of a column-major matrix with `n` rows.
fn column_pair(data: &mut [f64], n: usize, p: usize, r: usize) -> (&mut [f64], &mut [f64]) {
    let (head, tail) = data.split_at_mut(r * n);
    (&mut head[p * n..(p + 1) * n], &mut tail[..n])
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (u, w) = (*a, *b);
        *a = c * u - s * w;
        *b = s * u + c * w;
    }
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ` with `s` descending.
///
/// Computed by Householder QR followed by one-sided (Hestenes) Jacobi on the
/// triangular factor. Jacobi is used instead of nalgebra's bidiagonal SVD,
/// which occasionally returns factors that do not reproduce rank-deficient
/// inputs; Jacobi also resolves small singular values to high relative accuracy.
/// Columns of `U` belonging to zero singular values are zero.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        check_finite(a, "SVD input")?;
        let (m, n) = a.shape();
        if m < n {
            let t = ThinSvd::new(&a.transpose())?;
            return Ok(ThinSvd { u: t.v, s: t.s, v: t.u });
        }
        if n == 0 {
            return Ok(ThinSvd {
                u: DMatrix::zeros(m, 0),
                s: vec![],
                v: DMatrix::zeros(0, 0),
            });
        }
        let qr = a.clone().qr();
        let q = qr.q();
        let mut g = qr.r();
        let mut v = DMatrix::<f64>::identity(n, n);
        // Columns at rounding level of the whole matrix carry no direction;
        // rotating against them only shuffles noise and would never settle.
        let negligible = (f64::EPSILON * g.norm()).powi(2);
        let mut converged = false;
        // Rotations continue down to ε, but rounding can keep a pair cycling just
        // above that level; a sweep whose largest correlation is below n·ε ends it.
        let settle = f64::EPSILON * n as f64;
        for _sweep in 0..80 {
            let mut rotated = false;
            let mut max_corr: f64 = 0.0;
            for p in 0..n {
                for r in (p + 1)..n {
                    let (gp, gr) = column_pair(g.as_mut_slice(), n, p, r);
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for (&x, &y) in gp.iter().zip(gr.iter()) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    if gamma == 0.0
                        || alpha.min(beta) <= negligible
                        || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                    {
                        continue;
                    }
                    rotated = true;
                    max_corr = max_corr.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(gp, gr, c, s);
                    let (vp, vr) = column_pair(v.as_mut_slice(), n, p, r);
                    rotate(vp, vr, c, s);
                }
            }
            if !rotated || max_corr <= settle {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Jacobi SVD did not converge for a {m}x{n} matrix"
            )));
        }
        let norms: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
        let mut ur = DMatrix::zeros(n, n);
        let mut vs = DMatrix::zeros(n, n);
        let mut s = Vec::with_capacity(n);
        for (dst, &src) in idx.iter().enumerate() {
            let sv = norms[src];
            if sv > 0.0 {
                ur.set_column(dst, &(g.column(src) / sv));
            }
            vs.set_column(dst, &v.column(src));
            s.push(sv);
        }
        Ok(ThinSvd { u: q * ur, s, v: vs })
    }

    /// Pseudo-inverse cutoff: max(m, n)·ε·s_max.
    pub fn cutoff(&self) -> f64 {
        let dim = self.u.nrows().max(self.v.nrows()) as f64;
        self.s.first().copied().unwrap_or(0.0) * f64::EPSILON * dim
    }

    pub fn rank(&self) -> usize {
        let cut = self.cutoff();
        self.s.iter().filter(|&&v| v > cut).count()
    }
}

/// Orthonormal basis of the column space of `a` (rank-revealing, via SVD).
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = match ThinSvd::new(a) {
        Ok(s) => s,
        Err(_) => return DMatrix::zeros(a.nrows(), 0),
    };
    let r = svd.rank();
    svd.u.columns(0, r).into_owned()
}

/// Principal angles (radians, ascending) between the column spaces of `a` and `b`.
///
/// Small angles come from sines and large ones from cosines, so angles near zero
/// are resolved to machine precision rather than to √ε.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "subspaces live in different spaces ({} vs {})",
            a.nrows(),
            b.nrows()
        )));
    }
    let mut qa = orthonormal_basis(a);
    let mut qb = orthonormal_basis(b);
    if qa.ncols() > qb.ncols() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let p = qa.ncols();
    if p == 0 {
        return Ok(vec![]);
    }
    let c = qa.transpose() * &qb;
    let mut cosines: Vec<f64> = ThinSvd::new(&c)?.s.iter().map(|v| v.min(1.0)).collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    let resid = &qa - &qb * (qb.transpose() * &qa);
    let mut sines: Vec<f64> = ThinSvd::new(&resid)?.s.iter().map(|v| v.min(1.0)).collect();
    sines.sort_by(|x, y| x.total_cmp(y));
    Ok((0..p)
        .map(|i| {
            if sines[i] * sines[i] <= 0.5 {
                sines[i].asin()
            } else {
                cosines[i].acos()
            }
        })
        .collect())
}

pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    Ok(principal_angles(a, b)?.into_iter().fold(0.0, f64::max))
}

/// Pearson correlation of two equally long samples (0 when either is constant).
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// ‖a − b‖_F / ‖b‖_F (or the absolute error when b = 0).
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let nb = b.norm();
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

/// P = I − 11ᵀ/n.
pub fn centering_projector(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// P·M·P without materialising P.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let row_means: DVector<f64> = DVector::from_fn(n, |i, _| m.row(i).sum() / n as f64);
    let col_means: DVector<f64> = DVector::from_fn(n, |j, _| m.column(j).sum() / n as f64);
    let grand = row_means.sum() / n as f64;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Thin SVD kept around so that many ridge strengths can reuse one factorisation.
#[derive(Debug, Clone)]
pub struct SvdSolver {
    svd: ThinSvd,
    cutoff: f64,
}

impl SvdSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::Dimension("empty design matrix".into()));
        }
        let svd = ThinSvd::new(a)?;
        let cutoff = svd.cutoff();
        Ok(SvdSolver { svd, cutoff })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.s
    }

    /// Number of singular values above the pseudo-inverse cutoff.
    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    /// argmin ‖A X − B‖² + ridge ‖X‖²; the minimum-norm solution when ridge = 0.
    pub fn solve(&self, b: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
        let mut scaled = self.svd.u.transpose() * b;
        for (i, &s) in self.svd.s.iter().enumerate() {
            let f = if ridge > 0.0 {
                s / (s * s + ridge)
            } else if s > self.cutoff {
                1.0 / s
            } else {
                0.0
            };
            scaled.row_mut(i).scale_mut(f);
        }
        &self.svd.v * scaled
    }
}

/// Moore–Penrose pseudo-inverse together with the 2-norm condition number of the
/// retained part.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, usize)> {
    let solver = SvdSolver::new(a)?;
    let rank = solver.rank();
    let s = solver.singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let pinv = solver.solve(&DMatrix::identity(a.nrows(), a.nrows()), 0.0);
    Ok((pinv, cond, rank))
}
