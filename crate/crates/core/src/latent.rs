//! Latent-variable generative models: seasonal modulation, binary attributes,
//! synthetic corpora and the robustness experiments built on them.
//!
//! A word `i` with center `t_i` occurs at latent time `t` with probability
//! `P(i|t) = P(i)·(1 + s_i·g(t − t_i))`, where `g` is a symmetric, zero-mean
//! periodic modulation. To leading order the PMI between two words is
//! `log(1 + s_i s_j K̃(t_i − t_j))` with `K̃` the circular autocorrelation of `g`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Documents;
use crate::embed::{self, align_procrustes};
use crate::linalg::{self, ModeOrder};
use crate::matrix::{mstar_entry, zero_block, MatrixKind, Provenance, TargetMatrix};
use crate::{Error, Result};

/// Midpoint nodes used for every quadrature over one period.
pub const QUADRATURE_POINTS: usize = 2048;

/// Largest combined model (items) assembled densely.
pub const COMBINED_GUARD: usize = 6000;

/// Periodic zero-mean modulation g(t) with period T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Modulation {
    /// g ≡ 0.
    None,
    /// `h·(Σ_m exp(−(t + mT)²/(2w²)) − w√(2π)/T)`.
    WrappedGaussian { width: f64, height: f64 },
    /// `h·Σ_{k=1}^{K} 2cos(2πkt/T)/√(1 + (2πkσ/T)²)`, whose autocorrelation is
    /// a mean-removed periodized exponential of length σ (truncated at K harmonics).
    ExponentialSpectrum { sigma: f64, height: f64, harmonics: usize },
}

impl Modulation {
    /// Exponential-spectrum modulation scaled so that K̃(0) = `variance`.
    pub fn exponential_with_variance(sigma: f64, variance: f64, harmonics: usize, period: f64) -> Self {
        let s: f64 = (1..=harmonics)
            .map(|k| 1.0 / (1.0 + (2.0 * PI * k as f64 * sigma / period).powi(2)))
            .sum();
        Modulation::ExponentialSpectrum {
            sigma,
            height: (variance / (2.0 * s)).sqrt(),
            harmonics,
        }
    }

    pub fn validate(&self, period: f64) -> Result<()> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        match *self {
            Modulation::None => Ok(()),
            Modulation::WrappedGaussian { width, height } => {
                if !(width > 0.0) || !width.is_finite() || !height.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "wrapped Gaussian needs width > 0 and finite height (got {width}, {height})"
                    )));
                }
                Ok(())
            }
            Modulation::ExponentialSpectrum {
                sigma,
                height,
                harmonics,
            } => {
                if !(sigma > 0.0) || !sigma.is_finite() || !height.is_finite() || harmonics == 0 {
                    return Err(Error::InvalidArgument(
                        "exponential spectrum needs sigma > 0, finite height and at least one harmonic".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, t: f64, period: f64) -> f64 {
        match *self {
            Modulation::None => 0.0,
            Modulation::WrappedGaussian { width, height } => {
                let t = wrap(t, period);
                let images = (6.0 * width / period).ceil() as i64 + 1;
                let s: f64 = (-images..=images)
                    .map(|m| (-0.5 * ((t + m as f64 * period) / width).powi(2)).exp())
                    .sum();
                height * (s - width * (2.0 * PI).sqrt() / period)
            }
            Modulation::ExponentialSpectrum {
                sigma,
                height,
                harmonics,
            } => {
                let w = 2.0 * PI / period;
                height
                    * (1..=harmonics)
                        .map(|k| {
                            let k = k as f64;
                            2.0 * (w * k * t).cos() / (1.0 + (w * k * sigma).powi(2)).sqrt()
                        })
                        .sum::<f64>()
            }
        }
    }

    /// K̃(Δ) = (1/T)∫ g(u) g(u + Δ) du by midpoint quadrature.
    pub fn autocorrelation(&self, delta: f64, period: f64) -> f64 {
        if *self == Modulation::None {
            return 0.0;
        }
        let n = QUADRATURE_POINTS;
        let h = period / n as f64;
        (0..n)
            .map(|q| {
                let u = -period / 2.0 + (q as f64 + 0.5) * h;
                self.eval(u, period) * self.eval(u + delta, period)
            })
            .sum::<f64>()
            / n as f64
    }

    /// Closed-form autocorrelation, where the family has one.
    pub fn autocorrelation_exact(&self, delta: f64, period: f64) -> Option<f64> {
        match *self {
            Modulation::None => Some(0.0),
            Modulation::WrappedGaussian { .. } => None,
            Modulation::ExponentialSpectrum {
                sigma,
                height,
                harmonics,
            } => {
                let w = 2.0 * PI / period;
                Some(
                    2.0 * height
                        * height
                        * (1..=harmonics)
                            .map(|k| {
                                let k = k as f64;
                                (w * k * delta).cos() / (1.0 + (w * k * sigma).powi(2))
                            })
                            .sum::<f64>(),
                )
            }
        }
    }

    /// The kernel length in `[−1, 1]` lattice units, `2σ/T`, for the exponential family.
    pub fn lattice_sigma(&self, period: f64) -> Option<f64> {
        match *self {
            Modulation::ExponentialSpectrum { sigma, .. } => Some(2.0 * sigma / period),
            _ => None,
        }
    }

    /// (1/T)∫ g over one period.
    pub fn mean(&self, period: f64) -> f64 {
        let n = QUADRATURE_POINTS;
        (0..n)
            .map(|q| self.eval(-period / 2.0 + (q as f64 + 0.5) * period / n as f64, period))
            .sum::<f64>()
            / n as f64
    }
}

/// Reduce t into [−T/2, T/2).
fn wrap(t: f64, period: f64) -> f64 {
    (t + period / 2.0).rem_euclid(period) - period / 2.0
}

/// Words with latent centers on a circle of circumference T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalModel {
    pub words: Vec<String>,
    pub period: f64,
    pub centers: Vec<f64>,
    /// Unnormalized base weights; P(i) = base_i / Σ base.
    pub base: Vec<f64>,
    /// Per-word modulation strength s_i (1 for seasonal words, 0 for flat ones).
    pub strengths: Vec<f64>,
    pub modulation: Modulation,
}

impl SeasonalModel {
    /// N words with centers `(i/N − ½)·T`, uniform base probability and full strength.
    pub fn equispaced(n: usize, period: f64, modulation: Modulation) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("seasonal model needs at least one word".into()));
        }
        let m = SeasonalModel {
            words: (0..n).map(|i| format!("w{i}")).collect(),
            period,
            centers: (0..n).map(|i| (i as f64 / n as f64 - 0.5) * period).collect(),
            base: vec![1.0; n],
            strengths: vec![1.0; n],
            modulation,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.modulation.validate(self.period)?;
        let n = self.words.len();
        if n == 0 {
            return Err(Error::InvalidArgument("seasonal model needs at least one word".into()));
        }
        if self.centers.len() != n || self.base.len() != n || self.strengths.len() != n {
            return Err(Error::Dimension(format!(
                "{n} words but {} centers, {} base weights, {} strengths",
                self.centers.len(),
                self.base.len(),
                self.strengths.len()
            )));
        }
        if self.base.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidArgument("base probabilities must be positive".into()));
        }
        if self.centers.iter().chain(&self.strengths).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("centers and strengths must be finite".into()));
        }
        let mean = self.modulation.mean(self.period);
        if mean.abs() > 1e-10 {
            return Err(Error::Numerical(format!("modulation mean {mean:e} is not zero")));
        }
        Ok(())
    }

    /// Normalized base probabilities P(i).
    pub fn base_probabilities(&self) -> Vec<f64> {
        let z: f64 = self.base.iter().sum();
        self.base.iter().map(|b| b / z).collect()
    }

    /// P(·|t), renormalized over the vocabulary.
    pub fn conditional(&self, t: f64) -> Result<Vec<f64>> {
        let p = self.base_probabilities();
        let raw: Vec<f64> = (0..self.len())
            .map(|i| p[i] * (1.0 + self.strengths[i] * self.modulation.eval(t - self.centers[i], self.period)))
            .collect();
        if let Some(i) = raw.iter().position(|v| *v < 0.0) {
            return Err(Error::ModulationTooStrong {
                separation: t - self.centers[i],
                value: raw[i] / p[i] - 1.0,
            });
        }
        let z: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|v| v / z).collect())
    }

    /// Expected co-occurrence P_ij = E_t[P(i|t)P(j|t)], by quadrature over t.
    pub fn expected_joint(&self) -> Result<DMatrix<f64>> {
        let n = QUADRATURE_POINTS;
        let h = self.period / n as f64;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|q| self.conditional(-self.period / 2.0 + (q as f64 + 0.5) * h))
            .collect::<Result<_>>()?;
        let c = DMatrix::from_fn(n, self.len(), |q, i| rows[q][i]);
        Ok(c.transpose() * c / n as f64)
    }

    /// M* of the expected co-occurrence.
    pub fn expected_mstar(&self) -> Result<TargetMatrix> {
        let joint = self.expected_joint()?;
        let p: Vec<f64> = joint.row_iter().map(|r| r.sum()).collect();
        let n = self.len();
        let values = DMatrix::from_fn(n, n, |i, j| mstar_entry(joint[(i, j)], p[i] * p[j]));
        TargetMatrix::new(
            MatrixKind::Mstar,
            values,
            self.words.clone(),
            Provenance {
                source: "expected M* of seasonal model".into(),
                ..Default::default()
            },
        )
    }
}

/// Memoized K̃ keyed by the reduced separation |Δ| mod T.
struct AutocorrelationCache<'a> {
    modulation: &'a Modulation,
    period: f64,
    values: HashMap<i64, f64>,
}

impl<'a> AutocorrelationCache<'a> {
    fn new(modulation: &'a Modulation, period: f64) -> Self {
        AutocorrelationCache {
            modulation,
            period,
            values: HashMap::new(),
        }
    }

    fn get(&mut self, delta: f64) -> f64 {
        // K̃ is even and T-periodic; key on |Δ| reduced to [0, T/2].
        let d = wrap(delta, self.period).abs();
        let key = (d / self.period * (1u64 << 40) as f64).round() as i64;
        let (m, p) = (self.modulation, self.period);
        *self.values.entry(key).or_insert_with(|| m.autocorrelation(d, p))
    }
}

/// PMI_ij = log(1 + s_i s_j K̃(t_i − t_j)).
pub fn seasonal_pmi(m: &SeasonalModel) -> Result<TargetMatrix> {
    m.validate()?;
    let n = m.len();
    let mut cache = AutocorrelationCache::new(&m.modulation, m.period);
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let delta = m.centers[i] - m.centers[j];
            let k = m.strengths[i] * m.strengths[j] * cache.get(delta);
            if 1.0 + k <= 0.0 {
                return Err(Error::ModulationTooStrong {
                    separation: delta,
                    value: k,
                });
            }
            let v = k.ln_1p();
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    TargetMatrix::new(
        MatrixKind::Pmi,
        values,
        m.words.clone(),
        Provenance {
            source: format!("seasonal PMI, N = {n}, T = {}", m.period),
            ..Default::default()
        },
    )
}

/// Largest deviation from circulant structure, max |K(i,j) − K(i+1, j+1)|.
pub fn circulant_deviation(k: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((k[(i, j)] - k[((i + 1) % n, (j + 1) % n)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a circulant matrix from its first row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirculantSpectrum {
    pub first_row: Vec<f64>,
    /// μ_k for k = 0..N−1.
    pub eigenvalues: Vec<f64>,
    /// Largest |Im μ_k| relative to max |μ|, zero for an even first row.
    pub max_imaginary: f64,
}

impl CirculantSpectrum {
    /// Real orthonormal Fourier mode for frequency k: the cosine for k ≤ N/2,
    /// the sine of N − k otherwise (so every k has one real vector).
    pub fn mode(&self, k: usize) -> DVector<f64> {
        fourier_mode(self.first_row.len(), k)
    }
}

/// Real Fourier basis vector on N points, indexed like the complex modes.
pub fn fourier_mode(n: usize, k: usize) -> DVector<f64> {
    let nf = n as f64;
    let v = DVector::from_fn(n, |j, _| {
        let phase = 2.0 * PI * (k as f64) * j as f64 / nf;
        if 2 * k <= n {
            phase.cos()
        } else {
            -phase.sin()
        }
    });
    let norm = v.norm();
    v / norm
}

/// μ_k = Σ_j exp(2πikj/N) K_0j, after checking the input is circulant.
pub fn circulant_spectrum(k: &TargetMatrix, tol: f64) -> Result<CirculantSpectrum> {
    let dev = circulant_deviation(&k.values);
    if dev > tol {
        return Err(Error::NotCirculant(dev));
    }
    let n = k.len();
    let row: Vec<f64> = k.values.row(0).iter().cloned().collect();
    let mut eig = Vec::with_capacity(n);
    let mut imag: f64 = 0.0;
    for kk in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in row.iter().enumerate() {
            // reduce kj mod N first so the phase stays accurate for large N
            let phase = 2.0 * PI * ((kk * j) % n) as f64 / n as f64;
            re += v * phase.cos();
            im += v * phase.sin();
        }
        eig.push(re);
        imag = imag.max(im.abs());
    }
    let scale = eig.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Ok(CirculantSpectrum {
        first_row: row,
        eigenvalues: eig,
        max_imaginary: imag / scale,
    })
}

/// Independent binary attributes with strengths s_r ∈ (−1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    pub strengths: Vec<f64>,
}

impl AttributeModel {
    pub fn new(strengths: Vec<f64>) -> Result<Self> {
        if let Some(s) = strengths.iter().find(|s| !(s.abs() < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "attribute strength {s} outside (-1, 1)"
            )));
        }
        Ok(AttributeModel { strengths })
    }

    pub fn d(&self) -> usize {
        self.strengths.len()
    }

    /// α_r = ½[log(1+s) + log(1−s)].
    pub fn alpha(&self, r: usize) -> f64 {
        let s = self.strengths[r];
        0.5 * (s.ln_1p() + (-s).ln_1p())
    }

    /// β_r = ½[log(1+s) − log(1−s)].
    pub fn beta(&self, r: usize) -> f64 {
        let s = self.strengths[r];
        0.5 * (s.ln_1p() - (-s).ln_1p())
    }

    /// A = Σ_r α_r.
    pub fn offset(&self) -> f64 {
        (0..self.d()).map(|r| self.alpha(r)).sum()
    }

    /// Attribute value a_r ∈ {+1, −1} for bit r of `bits` (bit clear → +1).
    pub fn attribute(bits: usize, r: usize) -> f64 {
        if bits >> r & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Walsh character ψ_S(a) = Π_{r∈S} a_r, with S given as a bit mask.
    pub fn walsh(subset: usize, bits: usize) -> f64 {
        if (subset & bits).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// PMI = K_t ⊗ J + J ⊗ K_attr + A·J ⊗ J over items (x, bits), row index `x·2^d + bits`.
pub fn combined_model_matrix(kt: &TargetMatrix, attrs: &AttributeModel) -> Result<TargetMatrix> {
    let n = kt.len();
    let d = attrs.d();
    if d >= usize::BITS as usize - 1 {
        return Err(Error::SizeGuard {
            what: "combined model items".into(),
            requested: usize::MAX,
            limit: COMBINED_GUARD,
        });
    }
    let m = 1usize << d;
    let items = n.saturating_mul(m);
    if items > COMBINED_GUARD {
        return Err(Error::SizeGuard {
            what: "combined model items".into(),
            requested: items,
            limit: COMBINED_GUARD,
        });
    }
    let betas: Vec<f64> = (0..d).map(|r| attrs.beta(r)).collect();
    let a = attrs.offset();
    let kattr = DMatrix::from_fn(m, m, |b1, b2| {
        (0..d)
            .map(|r| betas[r] * AttributeModel::attribute(b1, r) * AttributeModel::attribute(b2, r))
            .sum::<f64>()
    });
    let values = DMatrix::from_fn(items, items, |i, j| {
        let (x1, b1) = (i / m, i % m);
        let (x2, b2) = (j / m, j % m);
        kt.values[(x1, x2)] + kattr[(b1, b2)] + a
    });
    let words = (0..items)
        .map(|i| format!("{}|{:0width$b}", kt.words[i / m], i % m, width = d.max(1)))
        .collect();
    TargetMatrix::new(
        MatrixKind::Pmi,
        values,
        words,
        Provenance {
            source: format!("combined seasonal-attribute model, N = {n}, d = {d}"),
            ..Default::default()
        },
    )
}

/// One predicted eigenpair of the combined model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedEigen {
    /// Fourier index k of the seasonal factor.
    pub k: usize,
    /// Attribute subset S as a bit mask.
    pub subset: usize,
    pub value: f64,
}

/// Closed-form eigenvalues of [`combined_model_matrix`] from the seasonal μ_k.
pub fn combined_model_spectrum(mu: &[f64], attrs: &AttributeModel) -> Vec<CombinedEigen> {
    let n = mu.len();
    let d = attrs.d();
    let m = 1usize << d;
    let (nf, mf) = (n as f64, m as f64);
    let a = attrs.offset();
    let mut out = Vec::with_capacity(n * m);
    for (k, &mk) in mu.iter().enumerate() {
        for subset in 0..m {
            let value = match (k, subset) {
                (0, 0) => mf * mk + a * nf * mf,
                (_, 0) => mf * mk,
                (0, s) if s.is_power_of_two() => nf * mf * attrs.beta(s.trailing_zeros() as usize),
                _ => 0.0,
            };
            out.push(CombinedEigen { k, subset, value });
        }
    }
    out
}

/// φ_k ⊗ ψ_S as a vector over items.
pub fn combined_eigenvector(n: usize, k: usize, subset: usize, d: usize) -> DVector<f64> {
    let phi = fourier_mode(n, k);
    let m = 1usize << d;
    let v = DVector::from_fn(n * m, |i, _| phi[i / m] * AttributeModel::walsh(subset, i % m));
    v / (m as f64).sqrt()
}

/// Sample a corpus in blocks: each block draws t ~ U[−T/2, T/2) and then
/// `block_len` tokens i.i.d. from P(·|t). Each block is returned as one document.
///
/// Blocks are generated in parallel from per-block streams of one ChaCha8
/// seed, so the output depends only on the seed.
pub fn sample_corpus(m: &SeasonalModel, n_tokens: usize, block_len: usize, seed: u64) -> Result<Documents> {
    m.validate()?;
    if n_tokens == 0 || block_len == 0 {
        return Err(Error::InvalidArgument(
            "need at least one token and a positive block length".into(),
        ));
    }
    if m.len() > u32::MAX as usize {
        return Err(Error::SizeGuard {
            what: "vocabulary".into(),
            requested: m.len(),
            limit: u32::MAX as usize,
        });
    }
    let blocks = n_tokens.div_ceil(block_len);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let t = rng.random_range(-m.period / 2.0..m.period / 2.0);
            let p = m.conditional(t)?;
            let dist = WeightedIndex::new(&p).map_err(|e| Error::Numerical(format!("sampling weights: {e}")))?;
            let len = block_len.min(n_tokens - b * block_len);
            Ok((0..len).map(|_| dist.sample(&mut rng) as u32).collect())
        })
        .collect()
}

/// Exact circular order test: sort points by angle in their top-2 centered
/// PCA plane and check the result is a rotation of 0..n (either direction).
///
/// Rows that collapse to the centroid make the order undefined and fail.
pub fn circular_order(points: &DMatrix<f64>) -> Result<(bool, Vec<usize>)> {
    let n = points.nrows();
    if n < 3 {
        return Err(Error::InvalidArgument("circular order needs at least 3 points".into()));
    }
    let words: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let e = embed::EmbeddingSet::from_rows(words, points.clone())?;
    let g = match embed::project_pca(&e, &[] as &[&str]) {
        Ok(g) if g.rank() >= 2 => g,
        _ => return Ok((false, (0..n).collect())),
    };
    let plane = g.truncate(2);
    let radii: Vec<f64> = plane.row_iter().map(|r| r.norm()).collect();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    let angle = |i: usize| plane[(i, 1)].atan2(plane[(i, 0)]);
    order.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    if radii.iter().any(|&r| r <= 1e-9 * rmax) {
        return Ok((false, order));
    }
    let start = order.iter().position(|&v| v == 0).unwrap();
    let rotated: Vec<usize> = (0..n).map(|i| order[(start + i) % n]).collect();
    let forward = rotated.iter().enumerate().all(|(i, &v)| v == i);
    let backward = (0..n).all(|i| rotated[i] == (n - i) % n);
    Ok((forward || backward, order))
}

/// Before/after comparison for a zeroed block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub d_embed: usize,
    pub block: Vec<String>,
    /// Principal angles (radians) between the top-d subspaces.
    pub subspace_angles: Vec<f64>,
    /// Largest principal angle of the top nonconstant pair (radians).
    pub top_pair_angle: f64,
    /// Procrustes residual of the block rows (centered, unit-norm).
    pub procrustes_residual: f64,
    /// Pearson correlation of the block rows' embedding Gram `W_S W_Sᵀ` with the original block.
    pub gram_pearson: f64,
    pub order_recovered: bool,
    pub recovered_order: Vec<usize>,
}

/// First two modes whose overlap with the uniform vector is below 1/√2.
pub fn top_nonconstant_pair(modes: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = modes.nrows() as f64;
    let picks: Vec<usize> = (0..modes.ncols())
        .filter(|&j| (modes.column(j).sum() / n.sqrt()).abs() < std::f64::consts::FRAC_1_SQRT_2)
        .take(2)
        .collect();
    (picks.len() == 2).then(|| modes.select_columns(&picks))
}

/// Zero the block, refactorize at `d_embed` and compare with the original.
pub fn robustness_ablation(m: &TargetMatrix, block: &[usize], d_embed: usize) -> Result<AblationReport> {
    if block.len() < 3 {
        return Err(Error::InvalidArgument("ablation block needs at least 3 words".into()));
    }
    let ablated = zero_block(m, block)?;
    let before = embed::factorize(m, d_embed, ModeOrder::Magnitude)?;
    let after = embed::factorize(&ablated, d_embed, ModeOrder::Magnitude)?;
    let subspace_angles = linalg::principal_angles(&before.modes, &after.modes)?;
    let top_pair_angle = match (top_nonconstant_pair(&before.modes), top_nonconstant_pair(&after.modes)) {
        (Some(a), Some(b)) => linalg::max_principal_angle(&a, &b)?,
        _ => PI / 2.0,
    };
    let wb = before.w.select_rows(block);
    let wa = after.w.select_rows(block);
    let procrustes_residual = normalized_procrustes(&wa, &wb).unwrap_or(f64::INFINITY);
    // The Gram of the embedding rows, as plotted for the ablated block; the
    // signed reconstruction would add back the negative modes the ablation creates.
    let gram = &wa * wa.transpose();
    let original = m.values.select_rows(block).select_columns(block);
    let gram_pearson = linalg::pearson(gram.as_slice(), original.as_slice());
    let (order_recovered, recovered_order) = circular_order(&wa)?;
    Ok(AblationReport {
        d_embed,
        block: block.iter().map(|&i| m.words[i].clone()).collect(),
        subspace_angles,
        top_pair_angle,
        procrustes_residual,
        gram_pearson: if gram_pearson.is_finite() { gram_pearson } else { 0.0 },
        order_recovered,
        recovered_order,
    })
}

/// Center both point sets, scale to unit Frobenius norm, align `a` onto `b`
/// and return ‖aQ − b‖_F.
pub fn normalized_procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let prep = |x: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mean = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        let norm = c.norm();
        if norm == 0.0 {
            return Err(Error::Numerical("point set collapses to its centroid".into()));
        }
        Ok(c / norm)
    };
    let (a, b) = (prep(a)?, prep(b)?);
    Ok(align_procrustes(&a, &b)?.residual)
}

/// Complex month affinity of one word.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonalityScore {
    pub word: String,
    pub magnitude: f64,
    /// Phase in [0, 2π).
    pub phase: f64,
    /// Phase expressed as a fractional month index in [0, 12).
    pub month: f64,
}

/// Scores from A = Q_words·Q_months⁺ weighted by e^{i2πm/M}, sorted by magnitude.
pub fn seasonality_scores(
    words: &[String],
    q_words: &DMatrix<f64>,
    q_months: &DMatrix<f64>,
) -> Result<Vec<SeasonalityScore>> {
    if words.len() != q_words.nrows() {
        return Err(Error::Dimension(format!(
            "{} words for {} rows",
            words.len(),
            q_words.nrows()
        )));
    }
    if q_words.ncols() != q_months.ncols() {
        return Err(Error::Dimension(format!(
            "word embeddings have {} columns, month embeddings {}",
            q_words.ncols(),
            q_months.ncols()
        )));
    }
    let months = q_months.nrows();
    let (pinv, cond, rank) = linalg::pseudo_inverse(q_months)?;
    if rank < months.min(q_months.ncols()) || cond > 1e8 {
        return Err(Error::RankTooSmall(format!(
            "month embeddings are ill-conditioned (rank {rank}, condition number {cond:e})"
        )));
    }
    let affinity = q_words * pinv;
    let mut out: Vec<SeasonalityScore> = affinity
        .row_iter()
        .zip(words)
        .map(|(row, w)| {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, a) in row.iter().enumerate() {
                let phase = 2.0 * PI * m as f64 / months as f64;
                re += a * phase.cos();
                im += a * phase.sin();
            }
            let phase = im.atan2(re).rem_euclid(2.0 * PI);
            SeasonalityScore {
                word: w.clone(),
                magnitude: re.hypot(im),
                phase,
                month: phase * months as f64 / (2.0 * PI),
            }
        })
        .collect();
    out.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    Ok(out)
}

/// Settings for the helper-count scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperScalingConfig {
    pub helper_counts: Vec<usize>,
    pub trials: usize,
    /// Std of the symmetric Gaussian noise added to every PMI entry.
    pub noise: f64,
    pub d_embed: usize,
    pub period: f64,
    pub modulation: Modulation,
    pub months: usize,
    pub seed: u64,
}

impl Default for HelperScalingConfig {
    fn default() -> Self {
        HelperScalingConfig {
            helper_counts: vec![8, 16, 32, 64, 128, 256],
            trials: 30,
            noise: 0.05,
            d_embed: 3,
            period: 12.0,
            modulation: Modulation::WrappedGaussian {
                width: 1.5,
                height: 0.8,
            },
            months: 12,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelperScalingPoint {
    pub helpers: usize,
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelperScaling {
    pub points: Vec<HelperScalingPoint>,
    /// Least-squares slope of log(mean error) against log(H).
    pub slope: f64,
}

/// Reconstruct the months' circle from helpers alone (month block zeroed) and
/// measure the Procrustes error against the true circle as H grows.
pub fn helper_scaling_experiment(cfg: &HelperScalingConfig) -> Result<HelperScaling> {
    cfg.modulation.validate(cfg.period)?;
    if cfg.helper_counts.len() < 2 || cfg.trials == 0 || cfg.months < 3 {
        return Err(Error::InvalidArgument(
            "helper scaling needs two helper counts, one trial and three months".into(),
        ));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let t = cfg.period;
    let nm = cfg.months;
    let month_t: Vec<f64> = (0..nm).map(|m| (m as f64 / nm as f64 - 0.5) * t).collect();
    let reference = DMatrix::from_fn(nm, 2, |m, c| {
        let ph = 2.0 * PI * month_t[m] / t;
        if c == 0 {
            ph.cos()
        } else {
            ph.sin()
        }
    });
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;

    let jobs: Vec<(usize, usize)> = cfg
        .helper_counts
        .iter()
        .enumerate()
        .flat_map(|(hi, _)| (0..cfg.trials).map(move |tr| (hi, tr)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(hi, trial)| -> Result<f64> {
            let h = cfg.helper_counts[hi];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((h as u64) << 20) | trial as u64);
            let offset = rng.random_range(0.0..t / h as f64);
            let centers: Vec<f64> = month_t
                .iter()
                .cloned()
                .chain((0..h).map(|i| (i as f64 / h as f64 - 0.5) * t + offset))
                .collect();
            let n = centers.len();
            let model = SeasonalModel {
                words: (0..n).map(|i| format!("w{i}")).collect(),
                period: t,
                centers,
                base: vec![1.0; n],
                strengths: vec![1.0; n],
                modulation: cfg.modulation,
            };
            let mut k = seasonal_pmi(&model)?.values;
            if cfg.noise > 0.0 {
                let e = DMatrix::from_fn(n, n, |_, _| noise.sample(&mut rng));
                k += (&e + e.transpose()) / 2f64.sqrt();
            }
            for i in 0..nm {
                for j in 0..nm {
                    k[(i, j)] = 0.0;
                }
            }
            let target = TargetMatrix::anonymous(MatrixKind::Pmi, k, "helper reconstruction")?;
            let e = embed::factorize(&target, cfg.d_embed, ModeOrder::Magnitude)?;
            let month_rows = e.w.rows(0, nm).into_owned();
            let words: Vec<String> = (0..nm).map(|i| format!("m{i}")).collect();
            let g = embed::project_pca(&embed::EmbeddingSet::from_rows(words, month_rows)?, &[] as &[&str])?;
            let plane = if g.rank() >= 2 {
                g.truncate(2)
            } else {
                let mut p = DMatrix::zeros(nm, 2);
                p.columns_mut(0, g.rank()).copy_from(&g.truncate(g.rank()));
                p
            };
            normalized_procrustes(&plane, &reference)
        })
        .collect::<Result<_>>()?;

    let points: Vec<HelperScalingPoint> = cfg
        .helper_counts
        .iter()
        .enumerate()
        .map(|(hi, &h)| {
            let e = &errors[hi * cfg.trials..(hi + 1) * cfg.trials];
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
            HelperScalingPoint {
                helpers: h,
                mean_error: mean,
                std_error: std,
            }
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| (p.helpers as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_error.ln()).collect();
    Ok(HelperScaling {
        slope: loglog_slope(&xs, &ys),
        points,
    })
}

/// Least-squares slope of ys against xs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::corpus::{count_cooccurrences, Weighting};
    use crate::matrix::{build_mstar, Subset};
    use proptest::prelude::*;

    fn wg() -> Modulation {
        Modulation::WrappedGaussian {
            width: 1.5,
            height: 0.8,
        }
    }

    #[test]
    fn modulations_are_zero_mean_and_even() {
        for m in [wg(), Modulation::exponential_with_variance(1.5, 0.2, 64, 12.0)] {
            assert!(m.mean(12.0).abs() < 1e-12);
            for t in [0.3, 2.0, 5.9] {
                assert!((m.eval(t, 12.0) - m.eval(-t, 12.0)).abs() < 1e-12);
                assert!((m.eval(t, 12.0) - m.eval(t + 12.0, 12.0)).abs() < 1e-10);
            }
            assert!(m.eval(0.0, 12.0) > m.eval(3.0, 12.0));
        }
    }

    #[test]
    fn quadrature_matches_closed_form_autocorrelation() {
        let m = Modulation::exponential_with_variance(1.5, 0.2, 64, 12.0);
        assert!((m.autocorrelation_exact(0.0, 12.0).unwrap() - 0.2).abs() < 1e-14);
        for d in [0.0, 0.7, 3.0, 6.0] {
            let q = m.autocorrelation(d, 12.0);
            let e = m.autocorrelation_exact(d, 12.0).unwrap();
            assert!((q - e).abs() < 1e-12, "Δ={d}: {q} vs {e}");
        }
        assert_eq!(m.lattice_sigma(12.0), Some(0.25));
    }

    #[test]
    fn flat_model_has_zero_pmi() {
        let m = SeasonalModel::equispaced(10, 12.0, Modulation::None).unwrap();
        assert_eq!(seasonal_pmi(&m).unwrap().values.amax(), 0.0);
    }

    #[test]
    fn strong_modulation_is_rejected() {
        let m = SeasonalModel::equispaced(
            24,
            12.0,
            Modulation::WrappedGaussian {
                width: 0.5,
                height: 10.0,
            },
        )
        .unwrap();
        assert!(matches!(seasonal_pmi(&m), Err(Error::ModulationTooStrong { .. })));
    }

    #[test]
    fn equispaced_pmi_is_circulant_with_real_spectrum() {
        let m = SeasonalModel::equispaced(60, 12.0, wg()).unwrap();
        let k = seasonal_pmi(&m).unwrap();
        assert!(circulant_deviation(&k.values) < 1e-10);
        let spec = circulant_spectrum(&k, 1e-10).unwrap();
        assert!(spec.max_imaginary < 1e-10);
        assert!((spec.eigenvalues[0] - spec.first_row.iter().sum::<f64>()).abs() < 1e-12);
        for kk in 1..60 {
            assert!((spec.eigenvalues[kk] - spec.eigenvalues[60 - kk]).abs() < 1e-10);
        }
        let mut pred = spec.eigenvalues.clone();
        pred.sort_by(|a, b| b.total_cmp(a));
        let dense = linalg::sym_eigen(&k.values, ModeOrder::Value).unwrap();
        for (a, b) in pred.iter().zip(&dense.values) {
            assert!((a - b).abs() < 1e-9);
        }
        // each real Fourier mode is an eigenvector
        for kk in [0, 1, 7, 59] {
            let v = spec.mode(kk);
            let r = &k.values * &v - &v * spec.eigenvalues[kk];
            assert!(r.norm() < 1e-9);
        }
    }

    #[test]
    fn non_circulant_input_is_rejected() {
        let mut v = DMatrix::identity(5, 5);
        v[(0, 1)] = 0.5;
        v[(1, 0)] = 0.5;
        let m = TargetMatrix::anonymous(MatrixKind::Pmi, v, "x").unwrap();
        assert!(matches!(circulant_spectrum(&m, 1e-10), Err(Error::NotCirculant(_))));
    }

    #[test]
    fn attribute_logs() {
        let a = AttributeModel::new(vec![0.5, 0.0]).unwrap();
        assert!((a.beta(0) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((a.alpha(0) - 0.5 * 0.75f64.ln()).abs() < 1e-15);
        assert!((a.beta(0) - 0.5493).abs() < 1e-4);
        assert!((a.alpha(0) + 0.1438).abs() < 1e-4);
        assert_eq!((a.alpha(1), a.beta(1)), (0.0, 0.0));
        for s in [-0.9, -0.2, 0.3, 0.99] {
            let m = AttributeModel::new(vec![s]).unwrap();
            assert!(m.alpha(0) <= 0.0);
            assert_eq!(m.beta(0).signum(), s.signum());
            for (ab, expect) in [(1.0, (1.0 + s).ln()), (-1.0, (1.0 - s).ln())] {
                assert!((m.alpha(0) + m.beta(0) * ab - expect).abs() < 1e-14);
            }
        }
        assert!(AttributeModel::new(vec![1.0]).is_err());
    }

    fn small_kt(n: usize) -> TargetMatrix {
        seasonal_pmi(&SeasonalModel::equispaced(n, 12.0, wg()).unwrap()).unwrap()
    }

    #[test]
    fn combined_reduces_to_seasonal_without_attributes() {
        let kt = small_kt(8);
        let c = combined_model_matrix(&kt, &AttributeModel::new(vec![]).unwrap()).unwrap();
        assert_eq!(c.values, kt.values);
        let z = combined_model_matrix(&kt, &AttributeModel::new(vec![0.0, 0.0]).unwrap()).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(z.values[(i, j)], kt.values[(i / 4, j / 4)]);
            }
        }
    }

    #[test]
    fn combined_case_table() {
        let kt = small_kt(4);
        let spec = circulant_spectrum(&kt, 1e-10).unwrap();
        let pred = combined_model_spectrum(&spec.eigenvalues, &AttributeModel::new(vec![0.4]).unwrap());
        assert_eq!(pred.len(), 8);
        let zeros = pred.iter().filter(|e| e.k != 0 && e.subset == 1).count();
        assert_eq!(zeros, 3);
        assert_eq!(pred.iter().filter(|e| e.value == 0.0).count(), 3);
    }

    #[test]
    fn combined_spectrum_matches_dense() {
        let kt = small_kt(12);
        let attrs = AttributeModel::new(vec![0.3, -0.5]).unwrap();
        let c = combined_model_matrix(&kt, &attrs).unwrap();
        let spec = circulant_spectrum(&kt, 1e-10).unwrap();
        let mut pred: Vec<f64> = combined_model_spectrum(&spec.eigenvalues, &attrs)
            .iter()
            .map(|e| e.value)
            .collect();
        pred.sort_by(|a, b| b.total_cmp(a));
        let dense = linalg::sym_eigen(&c.values, ModeOrder::Value).unwrap();
        for (a, b) in pred.iter().zip(&dense.values) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // predicted eigenvectors
        for e in combined_model_spectrum(&spec.eigenvalues, &attrs) {
            let v = combined_eigenvector(12, e.k, e.subset, 2);
            assert!((&c.values * &v - &v * e.value).norm() < 1e-9);
        }
    }

    #[test]
    fn combined_size_guard() {
        let kt = small_kt(12);
        let attrs = AttributeModel::new(vec![0.1; 10]).unwrap();
        assert!(matches!(
            combined_model_matrix(&kt, &attrs),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = SeasonalModel::equispaced(20, 12.0, wg()).unwrap();
        let a = sample_corpus(&m, 1000, 16, 3).unwrap();
        let b = sample_corpus(&m, 1000, 16, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|d| d.len()).sum::<usize>(), 1000);
        assert_eq!(a.last().unwrap().len(), 1000 - 62 * 16);
        assert_ne!(a, sample_corpus(&m, 1000, 16, 4).unwrap());
    }

    #[test]
    fn flat_model_sample_is_independent() {
        let m = SeasonalModel::equispaced(50, 12.0, Modulation::None).unwrap();
        let docs = sample_corpus(&m, 1_000_000, 32, 9).unwrap();
        let t = count_cooccurrences(&docs, 50, 32, Weighting::Uniform).unwrap();
        let vocab = Vocabulary::from_ordered((0..50).map(|i| (format!("w{i:02}"), 1)).collect()).unwrap();
        let ms = build_mstar(&t, &Subset::all(&vocab)).unwrap();
        assert!(ms.values.amax() < 0.05, "max |M*| = {}", ms.values.amax());
    }

    #[test]
    fn expected_mstar_tracks_linearized_pmi() {
        let m =
            SeasonalModel::equispaced(24, 12.0, Modulation::exponential_with_variance(1.5, 0.05, 32, 12.0)).unwrap();
        let exact = m.expected_mstar().unwrap();
        let lin = seasonal_pmi(&m).unwrap();
        // M* ≈ PMI to third order, and the renormalization is a small effect here.
        assert!((&exact.values - &lin.values).amax() < 2e-3);
    }

    #[test]
    fn order_detection() {
        let n = 12;
        let circle = DMatrix::from_fn(n, 3, |i, c| {
            let a = 2.0 * PI * i as f64 / n as f64;
            [a.cos(), a.sin(), 0.01 * (i as f64)][c]
        });
        assert!(circular_order(&circle).unwrap().0);
        let rev = DMatrix::from_fn(n, 2, |i, c| circle[((n - i) % n, c)]);
        assert!(circular_order(&rev).unwrap().0);
        let mut swapped = circle.clone();
        swapped.swap_rows(3, 4);
        assert!(!circular_order(&swapped).unwrap().0);
        assert!(!circular_order(&DMatrix::zeros(n, 3)).unwrap().0);
    }

    #[test]
    fn ablation_without_helpers_destroys_order() {
        let m = small_kt(12);
        let all: Vec<usize> = (0..12).collect();
        let r = robustness_ablation(&m, &all, 4).unwrap();
        assert!(!r.order_recovered);
    }

    #[test]
    fn ablation_with_helpers_keeps_geometry() {
        let m = seasonal_pmi(&SeasonalModel::equispaced(240, 12.0, wg()).unwrap()).unwrap();
        let block: Vec<usize> = (0..12).map(|i| 20 * i).collect();
        let r = robustness_ablation(&m, &block, 6).unwrap();
        assert!(r.order_recovered, "{r:?}");
        assert!(r.top_pair_angle.to_degrees() < 5.0);
        assert!(r.gram_pearson > 0.9, "{r:?}");
    }

    #[test]
    fn seasonality_examples() {
        let months = DMatrix::from_fn(12, 3, |m, c| {
            let a = 2.0 * PI * m as f64 / 12.0;
            [a.cos(), a.sin(), 1.0][c]
        });
        // a word sitting on month 4, a flat word
        let words = DMatrix::from_rows(&[
            months.row(4).into_owned(),
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]).row(0).into_owned(),
        ]);
        let names = vec!["peak".to_string(), "flat".to_string()];
        let s = seasonality_scores(&names, &words, &months).unwrap();
        assert_eq!(s[0].word, "peak");
        assert!((s[0].month - 4.0).abs() < 1e-9);
        assert!(s[1].magnitude < 1e-12);
        let degenerate = DMatrix::from_fn(12, 3, |m, c| if c == 0 { m as f64 } else { 2.0 * m as f64 });
        assert!(seasonality_scores(&names, &words, &degenerate).is_err());
    }

    #[test]
    fn helper_error_decreases() {
        let cfg = HelperScalingConfig {
            helper_counts: vec![16, 64],
            trials: 6,
            ..Default::default()
        };
        let r = helper_scaling_experiment(&cfg).unwrap();
        assert!(r.points[1].mean_error < r.points[0].mean_error);
        assert_eq!(r, helper_scaling_experiment(&cfg).unwrap());
    }

    proptest! {
        #[test]
        fn walsh_orthogonality(d in 0usize..6, s1 in 0usize..64, s2 in 0usize..64) {
            let m = 1usize << d;
            let (s1, s2) = (s1 % m, s2 % m);
            let dot: f64 = (0..m).map(|a| AttributeModel::walsh(s1, a) * AttributeModel::walsh(s2, a)).sum();
            prop_assert_eq!(dot, if s1 == s2 { m as f64 } else { 0.0 });
        }

        #[test]
        fn theorem_spectrum(n in 3usize..16, s in proptest::collection::vec(-0.9f64..0.9, 0..4)) {
            let kt = small_kt(n);
            let attrs = AttributeModel::new(s).unwrap();
            let c = combined_model_matrix(&kt, &attrs).unwrap();
            let spec = circulant_spectrum(&kt, 1e-10).unwrap();
            let mut pred: Vec<f64> = combined_model_spectrum(&spec.eigenvalues, &attrs).iter().map(|e| e.value).collect();
            pred.sort_by(|a, b| b.total_cmp(a));
            let dense = linalg::sym_eigen(&c.values, ModeOrder::Value).unwrap();
            for (a, b) in pred.iter().zip(&dense.values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn circulant_for_any_n(n in 2usize..80) {
            let k = small_kt(n);
            prop_assert!(circulant_deviation(&k.values) < 1e-10);
        }
    }
}
