//! Lévy area of the two-component fractional field: sampling, dyadic area
//! estimators, the Fourier normal-ordered split of `∂φ₁·φ₂`, and the
//! renormalized-area and boundary-term checks.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::powercount::least_squares_slope;
use crate::quad;
use crate::rgflow;
use crate::rng;
use crate::scales::{build_partition, slice_covariance, BumpSpec, ScaleError, ScaleSystem, SlicedCovariance, SpectralDensity};
use crate::spectral::{Grid, Transform};

#[derive(Debug, Error)]
pub enum LevyError {
    #[error("Hurst index {0} outside (0, 1/2)")]
    Hurst(f64),
    #[error("alpha {0} outside (1/8, 1/4)")]
    Alpha(f64),
    #[error("lambda {0} outside the allowed range")]
    Lambda(f64),
    #[error("level {level} needs 2^level to divide the interval length {len}")]
    Level { level: u32, len: usize },
    #[error("interval [{start}, {start}+{len}) does not fit in {size} points")]
    Interval { start: usize, len: usize, size: usize },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

/// Grid and scale range for the sampler.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FbmGrid {
    pub size: usize,
    pub spacing: f64,
    pub m: f64,
    pub j_min: i32,
    pub j_max: i32,
}

impl FbmGrid {
    /// 2¹⁴ points at spacing 1/1024 (volume 16), scales −2..=10 with M = 2.
    pub fn standard() -> Self {
        FbmGrid { size: 1 << 14, spacing: 1.0 / 1024.0, m: 2.0, j_min: -2, j_max: 10 }
    }

    /// Same point count at spacing 1/256: volume 64, scales −4..=8.
    pub fn wide() -> Self {
        FbmGrid { size: 1 << 14, spacing: 1.0 / 256.0, m: 2.0, j_min: -4, j_max: 8 }
    }

    pub fn grid(&self) -> Grid {
        Grid { size: self.size, spacing: self.spacing }
    }
}

/// Constant making `⟨(φ(1)−φ(0))²⟩ = 1` for density `K|ξ|^{−1−2α}`.
pub fn fbm_normalization(alpha: f64) -> f64 {
    PI * alpha / (statrs::function::gamma::gamma(1.0 - 2.0 * alpha) * (PI * alpha).cos())
}

/// `½(|t|^{2α}+|s|^{2α}−|t−s|^{2α})`.
pub fn fbm_covariance(alpha: f64, s: f64, t: f64) -> f64 {
    let h = 2.0 * alpha;
    0.5 * (t.abs().powf(h) + s.abs().powf(h) - (t - s).abs().powf(h))
}

/// A seeded family of two-component samples; paths are regenerated on demand
/// from `(seed, sample, component, scale)` streams.
#[derive(Clone, Debug)]
pub struct FbmEnsemble {
    pub alpha: f64,
    pub seed: u64,
    pub len: usize,
    pub config: FbmGrid,
    pub sliced: SlicedCovariance,
    amplitudes: Vec<Vec<f64>>,
    /// bin spectrum of everything the windows miss, aliases included
    remainder: Vec<f64>,
    remainder_amplitude: Vec<f64>,
}

/// `Σ_n |ξ + nP|^{−p}` over all integers n: direct terms for `|n| ≤ 128`, midpoint-rule
/// tails with their first derivative correction beyond.
pub fn aliased_power_law(xi: f64, period: f64, p: f64) -> f64 {
    const TERMS: i64 = 128;
    let direct: f64 = (-TERMS..=TERMS).map(|n| (xi + n as f64 * period).abs().powf(-p)).sum();
    let start = TERMS as f64 + 0.5;
    let tail = |a: f64| {
        let x = a + start * period;
        x.powf(1.0 - p) / (period * (p - 1.0)) - p * period * x.powf(-p - 1.0) / 24.0
    };
    direct + tail(xi) + tail(-xi)
}

pub fn sample_fbm(alpha: f64, config: FbmGrid, seed: u64, len: usize) -> Result<FbmEnsemble, LevyError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(LevyError::Hurst(alpha));
    }
    let system = ScaleSystem::new(config.m, config.j_min, config.j_max, config.size, config.spacing)?;
    let partition = build_partition(&system, BumpSpec::standard(config.m))?;
    let density = SpectralDensity::PowerLaw { exponent: 1.0 + 2.0 * alpha, amplitude: fbm_normalization(alpha) };
    let sliced = slice_covariance(&partition, density, -alpha)?;
    let grid = config.grid();
    let amplitudes = system.scales().map(|j| sliced.transform().amplitudes(&grid, sliced.slice_spectrum(j).unwrap())).collect();
    let k = fbm_normalization(alpha);
    let period = 2.0 * PI / grid.spacing;
    let remainder: Vec<f64> = grid
        .frequencies()
        .iter()
        .enumerate()
        .map(|(b, &xi)| {
            if b == 0 {
                return 0.0;
            }
            let covered: f64 = system.scales().map(|j| sliced.slice_spectrum(j).unwrap()[b]).sum();
            (k * aliased_power_law(xi, period, 1.0 + 2.0 * alpha) - covered).max(0.0)
        })
        .collect();
    let remainder_amplitude = sliced.transform().amplitudes(&grid, &remainder);
    Ok(FbmEnsemble { alpha, seed, len, config, sliced, amplitudes, remainder, remainder_amplitude })
}

fn hermitian_noise(n: usize, rng: &mut rng::Rng) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let full = (n as f64).sqrt();
    let half = (n as f64 / 2.0).sqrt();
    buf[0] = Complex64::new(rng.sample::<f64, _>(StandardNormal) * full, 0.0);
    buf[n / 2] = Complex64::new(rng.sample::<f64, _>(StandardNormal) * full, 0.0);
    for k in 1..n / 2 {
        let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * half;
        buf[k] = z;
        buf[n - k] = z.conj();
    }
    buf
}

impl FbmEnsemble {
    pub fn grid(&self) -> Grid {
        self.config.grid()
    }

    pub fn transform(&self) -> &Transform {
        self.sliced.transform()
    }

    pub fn scales(&self) -> std::ops::RangeInclusive<i32> {
        self.config.j_min..=self.config.j_max
    }

    fn noise(&self, sample: usize, component: usize, j: i32) -> Vec<Complex64> {
        let id = rng::stream_id(&[0xfb3, sample as u64, component as u64, j as i64 as u64]);
        hermitian_noise(self.config.size, &mut rng::stream(self.seed, id))
    }

    fn invert(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.transform().inverse(&mut buf);
        let n = self.config.size as f64;
        buf.iter().map(|c| c.re / n).collect()
    }

    /// Path of one component of one sample: node values with the exact periodic covariance.
    pub fn path(&self, sample: usize, component: usize) -> Vec<f64> {
        let n = self.config.size;
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let layers = self.amplitudes.iter().zip(self.scales()).chain(std::iter::once((&self.remainder_amplitude, self.config.j_max + 1)));
        for (amp, j) in layers {
            let w = self.noise(sample, component, j);
            for ((a, z), &s) in acc.iter_mut().zip(&w).zip(amp) {
                *a += z * s;
            }
        }
        self.invert(acc)
    }

    /// The part of [`Self::path`] above the windows.
    pub fn remainder(&self, sample: usize, component: usize) -> Vec<f64> {
        let mut w = self.noise(sample, component, self.config.j_max + 1);
        for (z, &s) in w.iter_mut().zip(&self.remainder_amplitude) {
            *z *= s;
        }
        self.invert(w)
    }

    /// Independent scale components `φʲ`, indexed from `j_min`; with [`Self::remainder`] they sum to [`Self::path`].
    pub fn components(&self, sample: usize, component: usize) -> Vec<Vec<f64>> {
        self.scales()
            .enumerate()
            .map(|(idx, j)| {
                let mut w = self.noise(sample, component, j);
                for (z, &s) in w.iter_mut().zip(&self.amplitudes[idx]) {
                    *z *= s;
                }
                self.invert(w)
            })
            .collect()
    }

    /// Lattice covariance `⟨φ(x_m)φ(0)⟩` of the sampled paths.
    pub fn lattice_kernel(&self) -> Vec<f64> {
        let mut k = self.transform().kernel_from_spectrum(&self.grid(), &self.remainder);
        for j in self.scales() {
            for (a, b) in k.iter_mut().zip(self.sliced.slice(j).unwrap()) {
                *a += b;
            }
        }
        k
    }

    /// Exact lattice value of `⟨B_sB_t⟩` for `B = φ(·) − φ(0)`, lags in grid steps.
    pub fn lattice_increment_covariance(&self, s: usize, t: usize) -> f64 {
        let c = self.lattice_kernel();
        let n = self.config.size;
        let d = s.abs_diff(t) % n;
        c[d] - c[s % n] - c[t % n] + c[0]
    }
}

/// Antisymmetrized iterated integral `∫dX¹∫dX² − ½ΔX¹ΔX²` of the polygon through the nodes.
pub fn polygon_area(x1: &[f64], x2: &[f64]) -> f64 {
    assert_eq!(x1.len(), x2.len());
    let mut iterated = 0.0;
    for i in 1..x1.len() {
        let d1 = x1[i] - x1[i - 1];
        let d2 = x2[i] - x2[i - 1];
        iterated += (x2[i - 1] - x2[0]) * d1 + 0.5 * d1 * d2;
    }
    let n = x1.len() - 1;
    iterated - 0.5 * (x1[n] - x1[0]) * (x2[n] - x2[0])
}

/// Area of the interpolation through `2^level + 1` equally spaced nodes of `[start, start+len]`.
pub fn levy_area_dyadic(x1: &[f64], x2: &[f64], start: usize, len: usize, level: u32) -> Result<f64, LevyError> {
    let pieces = 1usize << level;
    if len == 0 || !len.is_multiple_of(pieces) {
        return Err(LevyError::Level { level, len });
    }
    if start + len > x1.len() || x1.len() != x2.len() {
        return Err(LevyError::Interval { start, len, size: x1.len() });
    }
    let step = len / pieces;
    // start + len may equal the size: wrap periodically
    let n = x1.len();
    let pick = |x: &[f64]| -> Vec<f64> { (0..=pieces).map(|i| x[(start + i * step) % n]).collect() };
    Ok(polygon_area(&pick(x1), &pick(x2)))
}

/// Area at one level over one grid interval, across the ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct LevyAreaEstimate {
    pub level: u32,
    pub interval: (f64, f64),
    pub values: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

pub fn ensemble_area(ens: &FbmEnsemble, level: u32, start: usize, len: usize) -> Result<LevyAreaEstimate, LevyError> {
    let mut values = Vec::with_capacity(ens.len);
    for i in 0..ens.len {
        values.push(levy_area_dyadic(&ens.path(i, 0), &ens.path(i, 1), start, len, level)?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let h = ens.config.spacing;
    Ok(LevyAreaEstimate { level, interval: (start as f64 * h, (start + len) as f64 * h), values, mean, variance })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoutinQianConfig {
    pub alphas: Vec<f64>,
    pub levels: (u32, u32),
    pub paths: usize,
    pub seed: u64,
    pub grid: FbmGrid,
}

impl Default for CoutinQianConfig {
    fn default() -> Self {
        CoutinQianConfig { alphas: vec![0.15, 0.2, 0.3, 0.35], levels: (1, 6), paths: 200, seed: 0, grid: FbmGrid::standard() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub level: u32,
    /// `Var(A_L)` over unit intervals
    pub variance: f64,
    pub stderr: f64,
    /// `Var(A_{L+1} − A_L)`
    pub refinement: f64,
    pub refinement_stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Convergent,
    Divergent,
    /// the fitted trend is within two standard errors of flat
    Marginal,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaScan {
    pub alpha: f64,
    pub rows: Vec<LevelRow>,
    /// slope of `log₂ Var(A_{L+1} − A_L)` in `L`
    pub slope: f64,
    pub slope_stderr: f64,
    pub predicted: f64,
    /// `2^slope`, the asymptotic ratio of successive refinements
    pub ratio: f64,
    pub verdict: Verdict,
}

/// Refinement ratio below which a sequence counts as Cauchy.
pub const CAUCHY_RATIO: f64 = 0.95;

/// Dyadic-area variance table on the unit intervals of each path.
pub fn coutin_qian_scan(cfg: &CoutinQianConfig) -> Result<Vec<AlphaScan>, LevyError> {
    if cfg.paths < 2 {
        return Err(LevyError::TooFewSamples { need: 2, got: cfg.paths });
    }
    let (lo, hi) = cfg.levels;
    let unit = (1.0 / cfg.grid.spacing).round() as usize;
    if !unit.is_multiple_of(1usize << (hi + 1)) {
        return Err(LevyError::Level { level: hi + 1, len: unit });
    }
    let intervals = cfg.grid.size / unit;
    let nl = (hi - lo + 1) as usize;
    let mut out = Vec::new();
    for &alpha in &cfg.alphas {
        let ens = sample_fbm(alpha, cfg.grid, cfg.seed, cfg.paths)?;
        // per-path means of A_L² and (A_{L+1}−A_L)²
        let mut sq = vec![Vec::with_capacity(cfg.paths); nl];
        let mut dsq = vec![Vec::with_capacity(cfg.paths); nl];
        for p in 0..cfg.paths {
            let x1 = ens.path(p, 0);
            let x2 = ens.path(p, 1);
            for (li, level) in (lo..=hi).enumerate() {
                let (mut a, mut d) = (0.0, 0.0);
                for k in 0..intervals {
                    let cur = levy_area_dyadic(&x1, &x2, k * unit, unit, level)?;
                    let next = levy_area_dyadic(&x1, &x2, k * unit, unit, level + 1)?;
                    a += cur * cur;
                    d += (next - cur) * (next - cur);
                }
                sq[li].push(a / intervals as f64);
                dsq[li].push(d / intervals as f64);
            }
        }
        let rows: Vec<LevelRow> = (lo..=hi)
            .enumerate()
            .map(|(li, level)| {
                let (v, se) = mean_stderr(&sq[li]);
                let (r, rse) = mean_stderr(&dsq[li]);
                LevelRow { level, variance: v, stderr: se, refinement: r, refinement_stderr: rse }
            })
            .collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.refinement.log2()).collect();
        let sig: Vec<f64> = rows.iter().map(|r| r.refinement_stderr / (r.refinement * std::f64::consts::LN_2)).collect();
        let slope = least_squares_slope(&xs, &ys);
        let slope_stderr = slope_error(&xs, &sig);
        let verdict = if 2f64.powf(slope + 2.0 * slope_stderr) < CAUCHY_RATIO {
            Verdict::Convergent
        } else if slope - 2.0 * slope_stderr > 0.0 {
            Verdict::Divergent
        } else {
            Verdict::Marginal
        };
        out.push(AlphaScan { alpha, rows, slope, slope_stderr, predicted: 1.0 - 4.0 * alpha, ratio: 2f64.powf(slope), verdict });
    }
    Ok(out)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope error from independent point errors.
fn slope_error(xs: &[f64], sig: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    xs.iter().zip(sig).map(|(x, s)| ((x - mx) * s).powi(2)).sum::<f64>().sqrt() / sxx
}

/// `P^±` split of the two derivative-times-field products, built from scale components.
#[derive(Clone, Debug)]
pub struct NormalOrderedDerivative {
    /// `½Σⱼ∂φ₁ʲφ₂ʲ + Σ_{j<k}∂φ₁ʲφ₂ᵏ`
    pub plus: Vec<f64>,
    /// the same with the component labels exchanged
    pub minus: Vec<f64>,
    /// `½Σⱼ∂φ₁ʲφ₂ʲ + Σ_{j>k}∂φ₁ʲφ₂ᵏ`, so that `plus + plus_rest = ∂φ₁·φ₂`
    pub plus_rest: Vec<f64>,
    pub minus_rest: Vec<f64>,
}

/// `Σ_k (½aᵏ + Σ_{j<k} aʲ) bᵏ` if `lower`, else with `j > k`.
fn ordered_product(a: &[Vec<f64>], b: &[Vec<f64>], lower: bool) -> Vec<f64> {
    let n = a[0].len();
    let mut out = vec![0.0; n];
    let mut partial = vec![0.0; n];
    let order: Vec<usize> = if lower { (0..a.len()).collect() } else { (0..a.len()).rev().collect() };
    for k in order {
        for m in 0..n {
            out[m] += (partial[m] + 0.5 * a[k][m]) * b[k][m];
            partial[m] += a[k][m];
        }
    }
    out
}

/// Builds the split from per-scale components, ordered from the lowest scale up.
pub fn fourier_normal_order(phi1: &[Vec<f64>], phi2: &[Vec<f64>], grid: &Grid, transform: &Transform) -> NormalOrderedDerivative {
    let d1: Vec<Vec<f64>> = phi1.iter().map(|x| transform.derivative(grid, x)).collect();
    let d2: Vec<Vec<f64>> = phi2.iter().map(|x| transform.derivative(grid, x)).collect();
    NormalOrderedDerivative {
        plus: ordered_product(&d1, phi2, true),
        minus: ordered_product(&d2, phi1, true),
        plus_rest: ordered_product(&d1, phi2, false),
        minus_rest: ordered_product(&d2, phi1, false),
    }
}

impl FbmEnsemble {
    pub fn normal_order(&self, sample: usize) -> NormalOrderedDerivative {
        fourier_normal_order(&self.components(sample, 0), &self.components(sample, 1), &self.grid(), self.transform())
    }

    /// Expected periodogram of `∂A⁺` at every bin: the cyclic convolution of the
    /// scale spectra with weight ¼ on equal scales and 1 below the diagonal.
    pub fn plus_spectrum(&self) -> Vec<f64> {
        let grid = self.grid();
        let n = grid.size;
        let t = self.transform();
        let specs: Vec<Vec<f64>> = self.scales().map(|j| self.sliced.slice_spectrum(j).unwrap().to_vec()).collect();
        let fft = |v: &[f64]| t.forward_real(v);
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut upper = vec![0.0; n];
        for idx in (0..specs.len()).rev() {
            let deriv: Vec<f64> =
                specs[idx].iter().enumerate().map(|(k, s)| if 2 * k == n { 0.0 } else { grid.frequency(k).powi(2) * s }).collect();
            let partner: Vec<f64> = specs[idx].iter().zip(&upper).map(|(s, u)| 0.25 * s + u).collect();
            let fa = fft(&deriv);
            let fb = fft(&partner);
            for (c, (x, y)) in acc.iter_mut().zip(fa.iter().zip(&fb)) {
                *c += x * y;
            }
            for (u, s) in upper.iter_mut().zip(&specs[idx]) {
                *u += s;
            }
        }
        t.inverse(&mut acc);
        let l = grid.length();
        acc.iter().map(|c| c.re / (n as f64 * l)).collect()
    }

    /// Periodogram of `∂A⁺` averaged over the first `samples` members.
    pub fn empirical_plus_spectrum(&self, samples: usize) -> Vec<f64> {
        let grid = self.grid();
        let mut acc = vec![0.0; grid.size];
        for i in 0..samples {
            let p = self.transform().periodogram(&grid, &self.normal_order(i).plus);
            for (a, b) in acc.iter_mut().zip(p) {
                *a += b;
            }
        }
        acc.iter().map(|a| a / samples as f64).collect()
    }

    /// `Var Σⱼ(φ₁ʲ(s+δ)−φ₁ʲ(s))(½φ₂ʲ(s) + Σ_{k>j}φ₂ᵏ(s))` for each lag in grid steps.
    pub fn remainder_variance(&self, samples: usize, lags: &[usize]) -> Vec<(f64, f64, f64)> {
        let n = self.config.size;
        let mut per_sample = vec![Vec::with_capacity(samples); lags.len()];
        for i in 0..samples {
            let c1 = self.components(i, 0);
            let c2 = self.components(i, 1);
            // weights ½φ₂ʲ + Σ_{k>j} φ₂ᵏ
            let mut tail = vec![0.0; n];
            let mut weights = vec![vec![0.0; n]; c2.len()];
            for j in (0..c2.len()).rev() {
                for m in 0..n {
                    weights[j][m] = tail[m] + 0.5 * c2[j][m];
                    tail[m] += c2[j][m];
                }
            }
            for (li, &lag) in lags.iter().enumerate() {
                let mut s2 = 0.0;
                for m in 0..n {
                    let r: f64 = (0..c1.len()).map(|j| (c1[j][(m + lag) % n] - c1[j][m]) * weights[j][m]).sum();
                    s2 += r * r;
                }
                per_sample[li].push(s2 / n as f64);
            }
        }
        lags.iter()
            .zip(&per_sample)
            .map(|(&lag, v)| {
                let (mean, se) = mean_stderr(v);
                (lag as f64 * self.config.spacing, mean, se)
            })
            .collect()
    }
}

/// Log-log slope of `(δ, variance, _)` rows.
pub fn fit_exponent(rows: &[(f64, f64, f64)]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    least_squares_slope(&xs, &ys)
}

#[derive(Clone, Debug, Serialize)]
pub struct AreaExperimentConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// finite cut-off positions; the limit density is always included
    pub rhos: Vec<f64>,
    pub m: f64,
    pub samples: usize,
    pub seed: u64,
    pub size: usize,
    pub spacing: f64,
    /// increment lags in grid steps
    pub lags: Vec<usize>,
}

impl Default for AreaExperimentConfig {
    fn default() -> Self {
        AreaExperimentConfig {
            alpha: 0.2,
            lambda: 1.0,
            rhos: vec![4.0, 8.0, 12.0],
            m: 2.0,
            samples: 64,
            seed: 0,
            size: 1 << 14,
            spacing: 1.0 / 1024.0,
            lags: vec![8, 16, 32, 64, 128, 256],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AreaRow {
    /// `None` for the limit density `|ξ|^{1−4α}/λ²`
    pub rho: Option<f64>,
    /// `(δ, sampled variance, stderr)`
    pub sampled: Vec<(f64, f64, f64)>,
    /// `(δ, lattice variance)` from the density
    pub exact: Vec<(f64, f64)>,
    pub exponent: f64,
    pub exact_exponent: f64,
    /// `sup_ξ |1 − density/limit|` over the bins
    pub density_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AreaReport {
    pub alpha: f64,
    pub lambda: f64,
    pub predicted: f64,
    pub rows: Vec<AreaRow>,
    pub limit: AreaRow,
    /// sampled increment variance at λ over that at 2λ, per lag (limit density)
    pub lambda_doubling: Vec<f64>,
}

/// Gaussian surrogate for renormalized `∂A⁺`, integrated to an area process.
pub fn renormalized_area_experiment(cfg: &AreaExperimentConfig) -> Result<AreaReport, LevyError> {
    let (alpha, lambda) = (cfg.alpha, cfg.lambda);
    if !(alpha > 0.125 && alpha < 0.25) {
        return Err(LevyError::Alpha(alpha));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(LevyError::Lambda(lambda));
    }
    if cfg.samples < 2 {
        return Err(LevyError::TooFewSamples { need: 2, got: cfg.samples });
    }
    let grid = Grid { size: cfg.size, spacing: cfg.spacing };
    if !cfg.size.is_power_of_two() {
        return Err(ScaleError::GridSize(cfg.size).into());
    }
    let transform = Transform::new(cfg.size);
    let freqs = grid.frequencies();
    let spectrum = |rho: Option<f64>, lam: f64| -> Vec<f64> {
        freqs
            .iter()
            .enumerate()
            .map(|(k, &xi)| {
                if k == 0 {
                    0.0
                } else {
                    match rho {
                        Some(r) => rgflow::renormalized_area_covariance(xi, r, lam, alpha, cfg.m),
                        None => rgflow::limiting_area_covariance(xi, lam, alpha),
                    }
                }
            })
            .collect()
    };
    let limit_spec = spectrum(None, lambda);
    let run = |rho: Option<f64>, lam: f64| -> AreaRow {
        let spec = spectrum(rho, lam);
        let amp = transform.amplitudes(&grid, &spec);
        let n = cfg.size;
        let mut per_sample = vec![Vec::with_capacity(cfg.samples); cfg.lags.len()];
        for i in 0..cfg.samples {
            let mut r = rng::stream(cfg.seed, rng::stream_id(&[0xa2ea, i as u64]));
            let noise: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            let d = transform.filter_noise(&amp, &noise);
            let area = transform.skeleton_integral(&grid, &d);
            for (li, &lag) in cfg.lags.iter().enumerate() {
                let v = (0..n).map(|m| (area[(m + lag) % n] - area[m]).powi(2)).sum::<f64>() / n as f64;
                per_sample[li].push(v);
            }
        }
        let sampled: Vec<(f64, f64, f64)> = cfg
            .lags
            .iter()
            .zip(&per_sample)
            .map(|(&lag, v)| {
                let (mean, se) = mean_stderr(v);
                (lag as f64 * cfg.spacing, mean, se)
            })
            .collect();
        let exact: Vec<(f64, f64)> = cfg
            .lags
            .iter()
            .map(|&lag| {
                let delta = lag as f64 * cfg.spacing;
                let v: f64 = freqs
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != 0 && 2 * k != n)
                    .map(|(k, &xi)| spec[k] / (xi * xi) * 2.0 * (1.0 - (xi * delta).cos()))
                    .sum();
                (delta, v / grid.length())
            })
            .collect();
        let exact_rows: Vec<(f64, f64, f64)> = exact.iter().map(|&(d, v)| (d, v, 0.0)).collect();
        let density_gap = spec.iter().zip(&limit_spec).skip(1).map(|(s, l)| (1.0 - s / l).abs()).fold(0.0, f64::max);
        AreaRow { rho, exponent: fit_exponent(&sampled), exact_exponent: fit_exponent(&exact_rows), sampled, exact, density_gap }
    };
    let rows = cfg.rhos.iter().map(|&r| run(Some(r), lambda)).collect();
    let limit = run(None, lambda);
    let doubled = run(None, 2.0 * lambda);
    let lambda_doubling = limit.sampled.iter().zip(&doubled.sampled).map(|(a, b)| a.1 / b.1).collect();
    Ok(AreaReport { alpha, lambda, predicted: 4.0 * alpha, rows, limit, lambda_doubling })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryRow {
    pub j: i32,
    /// `Var(σʲ)` for density `χʲ(ξ)|ξ|^{−(1−4α)}`
    pub variance: f64,
    pub sixth_moment: f64,
    /// `M^{−(12α−1)ρ} λ³ E(σʲ)⁶ M^{−j}`
    pub magnitude: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryProfile {
    pub alpha: f64,
    pub lambda: f64,
    pub rho: i32,
    pub m: f64,
    pub rows: Vec<BoundaryRow>,
    /// `magnitude(j)/magnitude(j−1)`
    pub ratios: Vec<f64>,
    pub predicted_ratio: f64,
}

/// `Var(σʲ)` by quadrature over the support of the unit-scale window.
pub fn sigma_slice_variance(alpha: f64, j: i32, m: f64) -> f64 {
    let bump = BumpSpec::standard(m);
    let mj = m.powi(j);
    let chi = |u: f64| bump.rise(u) * (1.0 - bump.rise(u / m));
    // substitute ξ = M^j e^v over v ∈ [−ln M, ln M]
    let f = |v: f64| {
        let u = v.exp();
        let xi = mj * u;
        chi(u) * xi.powf(4.0 * alpha - 1.0) * xi
    };
    let lm = m.ln();
    let r = quad::integrate_pieces(f, &[-lm, -0.5 * lm, 0.0, 0.5 * lm, lm], 1e-12, 0.0);
    // two signs of ξ, measure dξ/2π
    r.value / PI
}

/// Per-scale size of the sextic boundary term at scales `0..=ρ`.
pub fn boundary_term_profile(alpha: f64, lambda: f64, rho: i32, m: f64) -> Result<BoundaryProfile, LevyError> {
    if !(alpha > 0.125 && alpha < 0.25) {
        return Err(LevyError::Alpha(alpha));
    }
    if !(lambda >= 0.0) {
        return Err(LevyError::Lambda(lambda));
    }
    let damp = m.powf(-(12.0 * alpha - 1.0) * rho as f64);
    let rows: Vec<BoundaryRow> = (0..=rho)
        .map(|j| {
            let variance = sigma_slice_variance(alpha, j, m);
            let sixth_moment = 15.0 * variance.powi(3);
            BoundaryRow { j, variance, sixth_moment, magnitude: damp * lambda.powi(3) * sixth_moment * m.powi(-j) }
        })
        .collect();
    let ratios = rows.windows(2).map(|w| w[1].magnitude / w[0].magnitude).collect();
    Ok(BoundaryProfile { alpha, lambda, rho, m, rows, ratios, predicted_ratio: m.powf(12.0 * alpha - 1.0) })
}
