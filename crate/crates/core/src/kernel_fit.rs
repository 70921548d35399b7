//! Exponential-kernel fits to empirical target matrices mapped onto a 1-D lattice.

use serde::Serialize;

use crate::lattice::{Boundary, ExponentialKernel, SemanticLattice};
use crate::matrix::TargetMatrix;
use crate::{Error, Result};

/// Mean and spread of matrix entries grouped by lattice distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceStats {
    /// Separation in integer sites.
    pub sites: Vec<usize>,
    /// Separation in `[−1, 1]` coordinates, `2·sites/L`.
    pub distance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population standard deviation of the entries in each bin.
    pub std: Vec<f64>,
    pub count: Vec<usize>,
    pub sites_per_axis: usize,
    pub boundary: Boundary,
}

impl DistanceStats {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Build stats directly from a kernel profile, one bin per site distance.
    pub fn from_profile(l: usize, boundary: Boundary, profile: impl Fn(f64) -> f64) -> DistanceStats {
        let max = match boundary {
            Boundary::Periodic => l / 2,
            Boundary::Open => l.saturating_sub(1),
        };
        let sites: Vec<usize> = (0..=max).collect();
        let distance: Vec<f64> = sites.iter().map(|&s| 2.0 * s as f64 / l as f64).collect();
        DistanceStats {
            mean: distance.iter().map(|&d| profile(d)).collect(),
            std: vec![0.0; sites.len()],
            count: vec![1; sites.len()],
            sites,
            distance,
            sites_per_axis: l,
            boundary,
        }
    }
}

/// Group the entries of `m` by the lattice distance of their words.
///
/// Words are matched by name when the lattice carries words; otherwise the
/// matrix rows are taken in site order.
pub fn empirical_kernel(m: &TargetMatrix, lat: &SemanticLattice) -> Result<DistanceStats> {
    if lat.dim != 1 {
        return Err(Error::InvalidArgument(format!(
            "empirical kernels need a 1-D lattice, got D = {}",
            lat.dim
        )));
    }
    let sites: Vec<usize> = match &lat.words {
        Some(words) => {
            let missing: Vec<String> = m.words.iter().filter(|w| !words.contains(w)).cloned().collect();
            if !missing.is_empty() {
                return Err(Error::MissingWords(missing));
            }
            m.words
                .iter()
                .map(|w| words.iter().position(|x| x == w).unwrap())
                .collect()
        }
        None => {
            if m.len() != lat.len() {
                return Err(Error::Dimension(format!(
                    "{}-word matrix on a {}-site lattice without a word map",
                    m.len(),
                    lat.len()
                )));
            }
            (0..m.len()).collect()
        }
    };
    let l = lat.sites_per_axis;
    let nbins = match lat.bc {
        Boundary::Periodic => l / 2 + 1,
        Boundary::Open => l,
    };
    let mut sum = vec![0.0; nbins];
    let mut count = vec![0usize; nbins];
    let bin = |i: usize, j: usize| lat.site_distance(sites[i], sites[j]);
    for i in 0..m.len() {
        for j in 0..m.len() {
            sum[bin(i, j)] += m.values[(i, j)];
            count[bin(i, j)] += 1;
        }
    }
    // Second pass for the spread, to avoid cancellation in E[v²] − E[v]².
    let mut sq = vec![0.0; nbins];
    for i in 0..m.len() {
        for j in 0..m.len() {
            let b = bin(i, j);
            sq[b] += (m.values[(i, j)] - sum[b] / count[b] as f64).powi(2);
        }
    }
    let mut stats = DistanceStats {
        sites: Vec::new(),
        distance: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
        count: Vec::new(),
        sites_per_axis: l,
        boundary: lat.bc,
    };
    for s in 0..nbins {
        if count[s] == 0 {
            continue;
        }
        let n = count[s] as f64;
        let mean = sum[s] / n;
        stats.sites.push(s);
        stats.distance.push(2.0 * s as f64 / l as f64);
        stats.mean.push(mean);
        stats.std.push((sq[s] / n).sqrt());
        stats.count.push(count[s]);
    }
    Ok(stats)
}

/// Which parts of the per-distance profile enter the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FitOptions {
    pub periodized: bool,
    pub fit_shift: bool,
    pub exclude_diagonal: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            periodized: false,
            fit_shift: false,
            exclude_diagonal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelFit {
    pub kernel: ExponentialKernel,
    pub options: FitOptions,
    pub stats: DistanceStats,
    /// RMS of (mean − kernel) over the fitted bins.
    pub residual: f64,
    pub iterations: usize,
}

impl KernelFit {
    /// σ expressed in lattice sites (one site spans 2/L).
    pub fn sigma_sites(&self) -> f64 {
        self.kernel.sigma * self.stats.sites_per_axis as f64 / 2.0
    }

    /// σ in natural units, given the natural length of one site (a month, a year).
    pub fn sigma_natural(&self, unit_per_site: f64) -> f64 {
        self.sigma_sites() * unit_per_site
    }

    /// Fitted kernel evaluated at every bin (including any excluded diagonal).
    pub fn predicted(&self) -> Vec<f64> {
        self.stats.distance.iter().map(|&d| self.kernel.eval(d)).collect()
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    periodized: bool,
    fit_shift: bool,
}

impl Problem<'_> {
    fn shape(&self, d: f64, sigma: f64) -> f64 {
        ExponentialKernel {
            sigma,
            amplitude: 1.0,
            shift: 0.0,
            periodized: self.periodized,
        }
        .shape(d)
    }

    /// Best (amplitude, shift) for fixed σ and the resulting sum of squares.
    fn project(&self, sigma: f64) -> (f64, f64, f64) {
        let c: Vec<f64> = self.x.iter().map(|&d| self.shape(d, sigma)).collect();
        let n = c.len() as f64;
        let (a, b) = if self.fit_shift {
            let mc = c.iter().sum::<f64>() / n;
            let my = self.y.iter().sum::<f64>() / n;
            let sxx: f64 = c.iter().map(|v| (v - mc).powi(2)).sum();
            let sxy: f64 = c.iter().zip(self.y).map(|(v, y)| (v - mc) * (y - my)).sum();
            if sxx <= f64::MIN_POSITIVE {
                (0.0, my)
            } else {
                let a = sxy / sxx;
                (a, my - a * mc)
            }
        } else {
            let sxx: f64 = c.iter().map(|v| v * v).sum();
            let sxy: f64 = c.iter().zip(self.y).map(|(v, y)| v * y).sum();
            (if sxx > 0.0 { sxy / sxx } else { 0.0 }, 0.0)
        };
        let ss = c.iter().zip(self.y).map(|(v, y)| (a * v + b - y).powi(2)).sum();
        (a, b, ss)
    }

    fn sum_sq(&self, p: &[f64; 3]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .map(|(&d, &y)| (p[0] * self.shape(d, p[1]) + p[2] - y).powi(2))
            .sum()
    }
}

/// Least-squares fit of `amplitude·C_σ(Δ) [+ shift]` to the per-distance means.
///
/// Seeds come from a log-linear fit and from a log-σ grid on which amplitude
/// and shift are solved exactly; the best seed is polished with damped
/// Gauss–Newton steps on all parameters.
pub fn fit_exponential(stats: &DistanceStats, opts: FitOptions) -> Result<KernelFit> {
    let keep: Vec<usize> = (0..stats.len())
        .filter(|&b| !(opts.exclude_diagonal && stats.sites[b] == 0))
        .collect();
    let needed = if opts.fit_shift { 3 } else { 2 };
    if keep.len() < needed.max(3) {
        return Err(Error::InvalidArgument(format!(
            "kernel fit needs at least {} distance bins, got {}",
            needed.max(3),
            keep.len()
        )));
    }
    let x: Vec<f64> = keep.iter().map(|&b| stats.distance[b]).collect();
    let y: Vec<f64> = keep.iter().map(|&b| stats.mean[b]).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite per-distance mean".into()));
    }
    let prob = Problem {
        x: &x,
        y: &y,
        periodized: opts.periodized,
        fit_shift: opts.fit_shift,
    };

    let dmin = x.iter().cloned().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    let dmax = x.iter().cloned().fold(0.0, f64::max);
    if !dmin.is_finite() {
        return Err(Error::InvalidArgument("kernel fit needs nonzero distances".into()));
    }
    let (lo, hi) = ((dmin / 50.0).ln(), (dmax * 50.0).ln());

    let mut seeds = Vec::new();
    if let Some(s) = log_linear_seed(&x, &y, opts.fit_shift) {
        seeds.push(s);
    }
    let grid = 240;
    let mut best_grid = (f64::INFINITY, lo.exp());
    for g in 0..=grid {
        let sigma = (lo + (hi - lo) * g as f64 / grid as f64).exp();
        let ss = prob.project(sigma).2;
        if ss < best_grid.0 {
            best_grid = (ss, sigma);
        }
    }
    seeds.push(best_grid.1);

    let mut best: Option<([f64; 3], f64, usize)> = None;
    let mut trace = Vec::new();
    for sigma in seeds {
        let (a, b, _) = prob.project(sigma);
        let (p, ss, it) = levenberg_marquardt(&prob, [a, sigma, b], &mut trace);
        if p[1] > 0.0 && p.iter().all(|v| v.is_finite()) && best.as_ref().is_none_or(|b| ss < b.1) {
            best = Some((p, ss, it));
        }
    }
    let (p, ss, iterations) =
        best.ok_or_else(|| Error::Numerical(format!("kernel fit did not converge; residual trace {trace:?}")))?;
    let kernel = ExponentialKernel {
        sigma: p[1],
        amplitude: p[0],
        shift: p[2],
        periodized: opts.periodized,
    };
    Ok(KernelFit {
        kernel,
        options: opts,
        stats: stats.clone(),
        residual: (ss / x.len() as f64).sqrt(),
        iterations,
    })
}

/// σ from a straight-line fit of log(mean − shift) against distance.
fn log_linear_seed(x: &[f64], y: &[f64], fit_shift: bool) -> Option<f64> {
    // With a shift, the far tail stands in for it.
    let shift = if fit_shift {
        y.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-3 * y.iter().map(|v| v.abs()).fold(0.0, f64::max)
    } else {
        0.0
    };
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v - shift > 0.0)
        .map(|(&d, &v)| (d, (v - shift).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope < 0.0 && slope.is_finite()).then(|| -1.0 / slope)
}

/// Damped Gauss–Newton on (amplitude, σ, shift); σ is kept positive.
fn levenberg_marquardt(prob: &Problem, mut p: [f64; 3], trace: &mut Vec<f64>) -> ([f64; 3], f64, usize) {
    let nparam = if prob.fit_shift { 3 } else { 2 };
    let mut ss = prob.sum_sq(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let h = 1e-6 * p[1];
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&d, &y) in prob.x.iter().zip(prob.y) {
            let c = prob.shape(d, p[1]);
            let dc = (prob.shape(d, p[1] + h) - prob.shape(d, p[1] - h)) / (2.0 * h);
            let jac = [c, p[0] * dc, 1.0];
            let r = p[0] * c + p[2] - y;
            for a in 0..nparam {
                jtr[a] += jac[a] * r;
                for b in 0..nparam {
                    jtj[a][b] += jac[a] * jac[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for (k, row) in a.iter_mut().enumerate().take(nparam) {
                row[k] += lambda * row[k].max(1e-300);
            }
            let Some(step) = solve_small(&a, &jtr, nparam) else {
                lambda *= 10.0;
                continue;
            };
            let mut q = p;
            for k in 0..nparam {
                q[k] -= step[k];
            }
            if q[1] <= 0.0 {
                q[1] = p[1] / 4.0;
            }
            let s2 = prob.sum_sq(&q);
            if s2 < ss {
                let rel = (ss - s2) / ss.max(f64::MIN_POSITIVE);
                p = q;
                ss = s2;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-15 {
                    return (p, ss, iterations);
                }
                break;
            }
            lambda *= 4.0;
        }
        trace.push(ss);
        if !improved {
            break;
        }
    }
    (p, ss, iterations)
}

fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut v = *b;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (a, p) in m[row][col..n].iter_mut().zip(&pivot_row[col..n]) {
                *a -= f * p;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
