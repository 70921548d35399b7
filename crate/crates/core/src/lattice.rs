//! Latent semantic lattices and closed-form predictions of embedding geometry.
//!
//! Sites sit at `x = 2n/L` on `[−1, 1]^D`, with `n` running over the centered
//! index set (`−L/2..L/2−1` for even `L`, `−(L−1)/2..(L−1)/2` for odd `L`).
//! For periodic lattices a translation-invariant target is diagonalized by
//! plane waves `exp(i k·x)` with `k = πn`; the eigenvalue of each wave is the
//! discrete Fourier transform of the kernel samples. For open lattices with an
//! exponential kernel the eigenfunctions are sines and shifted cosines whose
//! wavenumbers solve a transcendental quantization condition.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, DEGENERACY_RTOL};
use crate::matrix::{MatrixKind, Provenance, TargetMatrix};
use crate::{Error, Result};

/// Largest number of lattice sites we are willing to enumerate.
pub const MAX_SITES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "open" => Ok(Boundary::Open),
            other => Err(Error::InvalidArgument(format!("unknown boundary condition '{other}'"))),
        }
    }
}

/// Centered index set along one axis.
pub fn centered_indices(l: usize) -> Vec<i64> {
    let l = l as i64;
    let lo = if l % 2 == 0 { -l / 2 } else { -(l - 1) / 2 };
    (lo..lo + l).collect()
}

/// Lattice of `L^D` sites with an optional word assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticLattice {
    pub dim: usize,
    pub sites_per_axis: usize,
    pub bc: Boundary,
    /// Integer index of every site, first axis varying slowest.
    pub index: Vec<Vec<i64>>,
    /// `L^D × D` coordinates, `x = 2n/L`.
    pub coords: DMatrix<f64>,
    /// Word at each site, if assigned.
    pub words: Option<Vec<String>>,
}

impl SemanticLattice {
    pub fn new(dim: usize, l: usize, bc: Boundary) -> Result<Self> {
        if dim == 0 || l == 0 {
            return Err(Error::InvalidArgument(format!(
                "lattice needs D ≥ 1 and L ≥ 1 (got D = {dim}, L = {l})"
            )));
        }
        let n_sites = (l as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if n_sites > MAX_SITES as u128 {
            return Err(Error::SizeGuard {
                what: "lattice sites".into(),
                requested: n_sites.min(usize::MAX as u128) as usize,
                limit: MAX_SITES,
            });
        }
        let n_sites = n_sites as usize;
        let axis = centered_indices(l);
        let mut index = Vec::with_capacity(n_sites);
        for flat in 0..n_sites {
            let mut rem = flat;
            let mut n = vec![0i64; dim];
            for a in (0..dim).rev() {
                n[a] = axis[rem % l];
                rem /= l;
            }
            index.push(n);
        }
        let coords = DMatrix::from_fn(n_sites, dim, |i, a| 2.0 * index[i][a] as f64 / l as f64);
        Ok(SemanticLattice {
            dim,
            sites_per_axis: l,
            bc,
            index,
            coords,
            words: None,
        })
    }

    /// Attach words in site order.
    pub fn with_words(mut self, words: Vec<String>) -> Result<Self> {
        if words.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} words for a lattice with {} sites",
                words.len(),
                self.len()
            )));
        }
        self.words = Some(words);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Site holding index `n = 0`.
    pub fn origin(&self) -> usize {
        self.index
            .iter()
            .position(|n| n.iter().all(|&v| v == 0))
            .expect("the centered index set always contains 0")
    }

    /// Euclidean distance, using the minimum image for periodic lattices
    /// (each axis has period 2 in x).
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            let mut d = self.coords[(i, a)] - self.coords[(j, a)];
            if self.bc == Boundary::Periodic {
                d -= 2.0 * (d / 2.0).round();
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Integer site distance along a 1-D lattice (min image if periodic).
    pub fn site_distance(&self, i: usize, j: usize) -> usize {
        let l = self.sites_per_axis as i64;
        let mut total = 0i64;
        for a in 0..self.dim {
            let mut d = (self.index[i][a] - self.index[j][a]).abs();
            if self.bc == Boundary::Periodic {
                d = d.min(l - d);
            }
            total += d;
        }
        total as usize
    }

    /// Lattice measure (2/L)^D attached to one site.
    pub fn measure(&self) -> f64 {
        (2.0 / self.sites_per_axis as f64).powi(self.dim as i32)
    }

    /// Samples m(x) = C(dist(x, 0)) in site order.
    pub fn kernel_samples(&self, c: impl Fn(f64) -> f64) -> Vec<f64> {
        let o = self.origin();
        (0..self.len()).map(|i| c(self.distance(i, o))).collect()
    }

    /// H_ij = scale · C(dist(x_i, x_j)).
    pub fn kernel_matrix(&self, c: impl Fn(f64) -> f64, scale: f64) -> DMatrix<f64> {
        let n = self.len();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = scale * c(self.distance(i, j));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }
}

/// Periodized negation: the element of the centered index set congruent to −n mod L.
pub fn periodized_negation(n: &[i64], l: usize) -> Vec<i64> {
    let l = l as i64;
    let lo = if l % 2 == 0 { -l / 2 } else { -(l - 1) / 2 };
    n.iter().map(|&v| (-v - lo).rem_euclid(l) + lo).collect()
}

/// Allowed wavevectors `k = πn` of a periodic lattice, partitioned into
/// conjugate pairs, nonzero self-conjugate modes and the zero mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WavevectorSet {
    pub sites_per_axis: usize,
    /// (n, ⊖n) with n ∈ K₊.
    pub pairs: Vec<(Vec<i64>, Vec<i64>)>,
    pub self_conjugate: Vec<Vec<i64>>,
    pub zero: Vec<i64>,
}

impl WavevectorSet {
    /// P = |K₊|.
    pub fn p(&self) -> usize {
        self.pairs.len()
    }

    /// S = |K_sc|.
    pub fn s(&self) -> usize {
        self.self_conjugate.len()
    }

    pub fn total(&self) -> usize {
        2 * self.p() + self.s() + 1
    }

    /// Integer indices in the canonical order: pairs (K₊ member first), then
    /// self-conjugate, then zero.
    pub fn ordered(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(self.total());
        for (a, b) in &self.pairs {
            out.push(a.clone());
            out.push(b.clone());
        }
        out.extend(self.self_conjugate.iter().cloned());
        out.push(self.zero.clone());
        out
    }

    pub fn k(n: &[i64]) -> Vec<f64> {
        n.iter().map(|&v| PI * v as f64).collect()
    }
}

pub fn enumerate_wavevectors(lat: &SemanticLattice) -> Result<WavevectorSet> {
    if lat.bc != Boundary::Periodic {
        return Err(Error::InvalidArgument(
            "wavevectors are only defined for periodic lattices".into(),
        ));
    }
    let l = lat.sites_per_axis;
    let zero = vec![0i64; lat.dim];
    let mut pairs = Vec::new();
    let mut self_conjugate = Vec::new();
    for n in &lat.index {
        if *n == zero {
            continue;
        }
        let neg = periodized_negation(n, l);
        if neg == *n {
            self_conjugate.push(n.clone());
        } else if n > &neg {
            // Lexicographic comparison picks one member of every conjugate
            // pair; it agrees with "first nonzero component positive" unless
            // n has a −L/2 component.
            pairs.push((n.clone(), neg));
        }
    }
    Ok(WavevectorSet {
        sites_per_axis: l,
        pairs,
        self_conjugate,
        zero,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    SinPair,
    CosPair,
    SelfConjugate,
    Constant,
    OpenOdd,
    OpenEven,
}

impl ModeKind {
    pub fn id(self) -> &'static str {
        match self {
            ModeKind::SinPair => "sin-pair",
            ModeKind::CosPair => "cos-pair",
            ModeKind::SelfConjugate => "self-conjugate",
            ModeKind::Constant => "constant",
            ModeKind::OpenOdd => "open-odd",
            ModeKind::OpenEven => "open-even",
        }
    }
}

/// One predicted mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModePrediction {
    /// 1-based position in the wavevector enumeration (or open-mode index).
    pub mu: usize,
    pub kind: ModeKind,
    pub k: Vec<f64>,
    /// Signed eigenvalue λ_μ.
    pub eigenvalue: f64,
    /// a_μ = √|λ_μ|.
    pub amplitude: f64,
    /// Normalization of the sampled mode: √(2/|S|), √(1/|S|) or the open-BC N_μ.
    pub normalization: f64,
    /// Mode shape at the lattice sites; unit norm for periodic lattices, and
    /// φ(x_i)/(N_μ√L) (unit norm as L → ∞) for open ones.
    pub samples: Vec<f64>,
}

impl ModePrediction {
    pub fn removed_by_centering(&self) -> bool {
        self.kind == ModeKind::Constant
    }
}

/// Analytic mode list sorted by |λ| descending (pairs kept adjacent).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralPrediction {
    pub sites: usize,
    pub modes: Vec<ModePrediction>,
}

impl SpectralPrediction {
    fn sorted(sites: usize, mut modes: Vec<ModePrediction>) -> Self {
        modes.sort_by(|a, b| b.eigenvalue.abs().total_cmp(&a.eigenvalue.abs()).then(a.mu.cmp(&b.mu)));
        SpectralPrediction { sites, modes }
    }

    /// Modes that survive centering, in order.
    pub fn centered_modes(&self) -> Vec<&ModePrediction> {
        self.modes.iter().filter(|m| !m.removed_by_centering()).collect()
    }

    /// Predicted PCA coordinates: columns a_μ·samples for the first `r`
    /// centered modes.
    pub fn geometry(&self, r: usize) -> DMatrix<f64> {
        let modes = self.centered_modes();
        let r = r.min(modes.len());
        DMatrix::from_fn(self.sites, r, |i, j| modes[j].amplitude * modes[j].samples[i])
    }

    /// Σ λ_μ φ_μ φ_μᵀ over the centered modes.
    pub fn centered_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.sites, self.sites);
        for m in self.centered_modes() {
            let v = nalgebra::DVector::from_column_slice(&m.samples);
            g += &v * v.transpose() * m.eigenvalue;
        }
        g
    }

    /// Groups of consecutive centered modes with equal |λ|.
    pub fn centered_groups(&self) -> Vec<std::ops::Range<usize>> {
        let mags: Vec<f64> = self.centered_modes().iter().map(|m| m.eigenvalue.abs()).collect();
        linalg::degenerate_groups(&mags, DEGENERACY_RTOL)
    }
}

fn mode_samples(lat: &SemanticLattice, n: &[i64], sine: bool) -> Vec<f64> {
    let k = WavevectorSet::k(n);
    (0..lat.len())
        .map(|i| {
            let phase: f64 = (0..lat.dim).map(|a| k[a] * lat.coords[(i, a)]).sum();
            if sine {
                phase.sin()
            } else {
                phase.cos()
            }
        })
        .collect()
}

/// Build a periodic prediction from a transfer function m̃ evaluated per wavevector.
fn fourier_prediction(lat: &SemanticLattice, transfer: impl Fn(&[i64]) -> f64) -> Result<SpectralPrediction> {
    let ks = enumerate_wavevectors(lat)?;
    let size = lat.len() as f64;
    let paired = (2.0 / size).sqrt();
    let single = (1.0 / size).sqrt();
    let mut modes = Vec::with_capacity(lat.len());
    let mut mu = 1;
    let mut push = |n: &[i64], kind: ModeKind, norm: f64, sine: bool, modes: &mut Vec<ModePrediction>| {
        let lam = transfer(n);
        let samples = mode_samples(lat, n, sine).into_iter().map(|v| v * norm).collect();
        modes.push(ModePrediction {
            mu,
            kind,
            k: WavevectorSet::k(n),
            eigenvalue: lam,
            amplitude: lam.abs().sqrt(),
            normalization: norm,
            samples,
        });
        mu += 1;
    };
    for (plus, minus) in &ks.pairs {
        push(plus, ModeKind::SinPair, paired, true, &mut modes);
        push(minus, ModeKind::CosPair, paired, false, &mut modes);
    }
    for n in &ks.self_conjugate {
        push(n, ModeKind::SelfConjugate, single, false, &mut modes);
    }
    push(&ks.zero, ModeKind::Constant, single, false, &mut modes);
    // A pair must carry one eigenvalue; average away rounding differences.
    for p in 0..ks.p() {
        let avg = 0.5 * (modes[2 * p].eigenvalue + modes[2 * p + 1].eigenvalue);
        for m in &mut modes[2 * p..2 * p + 2] {
            m.eigenvalue = avg;
            m.amplitude = avg.abs().sqrt();
        }
    }
    Ok(SpectralPrediction::sorted(lat.len(), modes))
}

/// Eigen-structure of the circulant matrix H_ij = m(x_i − x_j) from the
/// kernel samples `m` (site order, `m[i] = C(dist(x_i, 0))`).
///
/// λ(k) = Σ_x m(x) cos(k·x); the sine part vanishes because m is even.
pub fn predict_fourier_geometry(lat: &SemanticLattice, samples: &[f64]) -> Result<SpectralPrediction> {
    if samples.len() != lat.len() {
        return Err(Error::Dimension(format!(
            "{} kernel samples for {} sites",
            samples.len(),
            lat.len()
        )));
    }
    let coords = &lat.coords;
    fourier_prediction(lat, |n| {
        let k = WavevectorSet::k(n);
        (0..lat.len())
            .map(|i| {
                let phase: f64 = (0..lat.dim).map(|a| k[a] * coords[(i, a)]).sum();
                samples[i] * phase.cos()
            })
            .sum()
    })
}

/// Exponential kernel `amplitude·C(Δ) + shift` on `[−1, 1]` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialKernel {
    pub sigma: f64,
    pub amplitude: f64,
    pub shift: f64,
    /// Sum over periodic images `Σ_n exp(−|Δ + 2n|/σ)`.
    pub periodized: bool,
}

impl ExponentialKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        let k = ExponentialKernel {
            sigma,
            amplitude: 1.0,
            shift: 0.0,
            periodized: false,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn periodized(sigma: f64) -> Result<Self> {
        Ok(ExponentialKernel {
            periodized: true,
            ..Self::new(sigma)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.amplitude.is_finite() || !self.shift.is_finite() {
            return Err(Error::InvalidArgument(
                "kernel amplitude and shift must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Unit-amplitude shape C(Δ).
    pub fn shape(&self, delta: f64) -> f64 {
        if self.periodized {
            periodized_exp(delta, self.sigma)
        } else {
            (-delta.abs() / self.sigma).exp()
        }
    }

    pub fn eval(&self, delta: f64) -> f64 {
        self.amplitude * self.shape(delta) + self.shift
    }
}

/// Σ_n exp(−|Δ + 2n|/σ) in closed form:
/// `(e^{−Δ/σ} + e^{−(2−Δ)/σ}) / (1 − e^{−2/σ})` for Δ reduced to [0, 2].
pub fn periodized_exp(delta: f64, sigma: f64) -> f64 {
    let d = delta.abs().rem_euclid(2.0);
    let q2 = (-2.0 / sigma).exp();
    ((-d / sigma).exp() + (-(2.0 - d) / sigma).exp()) / (1.0 - q2)
}

/// Continuum amplitude √(2σ/(1 + σ²k²)).
pub fn continuum_amplitude(sigma: f64, k: f64) -> f64 {
    (2.0 * sigma / (1.0 + sigma * sigma * k * k)).sqrt()
}

/// m̃(k) = (2/L)(1 − q²)/(1 − 2q cos(2k/L) + q²) with q = e^{−2/(σL)}.
pub fn periodized_exp_transfer(l: usize, sigma: f64, k: f64) -> f64 {
    let lf = l as f64;
    let q = (-2.0 / (sigma * lf)).exp();
    (2.0 / lf) * (1.0 - q * q) / (1.0 - 2.0 * q * (2.0 * k / lf).cos() + q * q)
}

/// Closed-form spectrum of the periodized exponential kernel on a 1-D
/// periodic lattice, with the lattice measure 2/L included.
pub fn periodized_exp_spectrum(lat: &SemanticLattice, sigma: f64) -> Result<SpectralPrediction> {
    if lat.dim != 1 || lat.bc != Boundary::Periodic {
        return Err(Error::InvalidArgument(
            "the closed-form spectrum needs a 1-D periodic lattice".into(),
        ));
    }
    ExponentialKernel::new(sigma)?;
    let l = lat.sites_per_axis;
    fourier_prediction(lat, |n| periodized_exp_transfer(l, sigma, PI * n[0] as f64))
}

/// Result of a bracketed scalar root solve.
#[derive(Debug, Clone, Copy)]
struct Root {
    x: f64,
}

/// Bisection on a sign change in [lo, hi].
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<Root> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(Root { x: lo });
    }
    if fhi == 0.0 {
        return Ok(Root { x: hi });
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Numerical(format!(
            "root not bracketed in [{lo}, {hi}]: f(lo) = {flo:e}, f(hi) = {fhi:e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(Root { x: mid });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Root { x: 0.5 * (lo + hi) })
}

/// One open-boundary eigenmode of the exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpenMode {
    pub mu: usize,
    pub k: f64,
    /// N_μ with N_μ² = ½∫_{−1}^{1} φ_μ(x)² dx.
    pub normalization: f64,
    /// a_μ = √(2σ/(1 + σ²k_μ²)).
    pub amplitude: f64,
    /// |k − rhs(k)| of the quantization condition at the solution.
    pub residual: f64,
}

impl OpenMode {
    pub fn is_odd(&self) -> bool {
        self.mu % 2 == 1
    }

    /// φ_μ(x): sin(kx) for odd μ, cos(kx) − sin(k)/k for even μ.
    pub fn eval(&self, x: f64) -> f64 {
        if self.is_odd() {
            (self.k * x).sin()
        } else {
            (self.k * x).cos() - self.k.sin() / self.k
        }
    }

    pub fn kind(&self) -> ModeKind {
        if self.is_odd() {
            ModeKind::OpenOdd
        } else {
            ModeKind::OpenEven
        }
    }
}

/// Right-hand side of the quantization condition k = rhs(k).
pub fn open_bc_rhs(mu: usize, sigma: f64, k: f64) -> f64 {
    let m = mu as f64;
    if mu % 2 == 1 {
        (m + 1.0) * PI / 2.0 - (sigma * k).atan()
    } else {
        m * PI / 2.0 + (k / (1.0 + sigma * (1.0 + sigma) * k * k)).atan()
    }
}

/// Wavenumbers, normalizations and amplitudes of the first `n_modes` open-BC modes.
///
/// Every root lies in (μπ/2, (μ+1)π/2), where k − rhs(k) changes sign, and is
/// found by bisection to machine precision.
pub fn solve_open_bc_modes(sigma: f64, n_modes: usize) -> Result<Vec<OpenMode>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if n_modes == 0 {
        return Err(Error::InvalidArgument("n_modes must be at least 1".into()));
    }
    (1..=n_modes)
        .map(|mu| {
            let m = mu as f64;
            let (lo, hi) = (m * PI / 2.0, (m + 1.0) * PI / 2.0);
            let root = bisect(|k| k - open_bc_rhs(mu, sigma, k), lo, hi)
                .map_err(|e| Error::Numerical(format!("open-BC mode {mu} (σ = {sigma}): {e}")))?;
            let k = root.x;
            let s2k = (2.0 * k).sin() / (4.0 * k);
            let n2 = if mu % 2 == 1 {
                0.5 - s2k
            } else {
                0.5 + s2k - (k.sin() / k).powi(2)
            };
            Ok(OpenMode {
                mu,
                k,
                normalization: n2.sqrt(),
                amplitude: continuum_amplitude(sigma, k),
                residual: (k - open_bc_rhs(mu, sigma, k)).abs(),
            })
        })
        .collect()
}

/// Predicted PCA geometry of an open 1-D lattice: column μ holds
/// a_μ·φ_μ(x_i)/(N_μ√L) (stored as `amplitude` × `samples`).
pub fn predict_open_geometry(lat: &SemanticLattice, sigma: f64, n_modes: usize) -> Result<SpectralPrediction> {
    if lat.dim != 1 || lat.bc != Boundary::Open {
        return Err(Error::InvalidArgument(
            "open-BC prediction needs a 1-D open lattice".into(),
        ));
    }
    let modes = solve_open_bc_modes(sigma, n_modes)?;
    let scale = 1.0 / (lat.len() as f64).sqrt();
    let preds = modes
        .iter()
        .map(|m| ModePrediction {
            mu: m.mu,
            kind: m.kind(),
            k: vec![m.k],
            eigenvalue: m.amplitude * m.amplitude,
            amplitude: m.amplitude,
            normalization: m.normalization,
            samples: (0..lat.len())
                .map(|i| m.eval(lat.coords[(i, 0)]) * scale / m.normalization)
                .collect(),
        })
        .collect();
    Ok(SpectralPrediction::sorted(lat.len(), preds))
}

/// Kernel model over arbitrary points: M_ij = amplitude·exp(−d_ij/σ) + shift with
/// d_ij² = Σ_a w_a (p_ia − p_ja)².
pub fn kernel_matrix_points(
    words: Vec<String>,
    points: &DMatrix<f64>,
    kernel: &ExponentialKernel,
    axis_weights: &[f64],
) -> Result<TargetMatrix> {
    kernel.validate()?;
    let (n, dim) = points.shape();
    if axis_weights.len() != dim {
        return Err(Error::Dimension(format!(
            "{} axis weights for {dim}-dimensional points",
            axis_weights.len()
        )));
    }
    if axis_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("axis weights must be non-negative".into()));
    }
    linalg::check_finite(points, "points")?;
    let dist = |i: usize, j: usize| -> f64 {
        (0..dim)
            .map(|a| axis_weights[a] * (points[(i, a)] - points[(j, a)]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    for i in 0..n {
        for j in (i + 1)..n {
            if dist(i, j) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "points {i} and {j} coincide under the weighted metric"
                )));
            }
        }
    }
    let values = DMatrix::from_fn(n, n, |i, j| {
        kernel.amplitude * (-dist(i, j) / kernel.sigma).exp() + kernel.shift
    });
    // Fitted geography kernels routinely exceed the M* range, so only label
    // the model as M* when it could actually be one.
    let kind = if values.amax() <= 2.0 {
        MatrixKind::Mstar
    } else {
        MatrixKind::Pmi
    };
    TargetMatrix::new(
        kind,
        values,
        words,
        Provenance {
            source: format!(
                "kernel model: {}*exp(-d/{}) + {}",
                kernel.amplitude, kernel.sigma, kernel.shift
            ),
            ..Default::default()
        },
    )
}
