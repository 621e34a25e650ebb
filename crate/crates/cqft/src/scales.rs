//! M-adic partition of unity in Fourier space, sliced stationary covariances
//! and per-scale Gaussian field synthesis on periodic 1-D grids.

use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::spectral::{Grid, Transform};

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("ratio M must exceed 1, got {0}")]
    BadRatio(f64),
    #[error("empty scale range [{0}, {1}]")]
    EmptyRange(i32, i32),
    #[error("grid size {0} is not a power of two")]
    GridSize(usize),
    #[error("grid spacing must be positive, got {0}")]
    GridSpacing(f64),
    #[error("Nyquist frequency {nyquist} does not exceed M^j_max = {top}")]
    Nyquist { nyquist: f64, top: f64 },
    #[error("bump edge must satisfy 0 < inner < outer, got inner={inner}, outer={outer}")]
    BumpShape { inner: f64, outer: f64 },
    #[error("partition of unity fails at xi={worst_xi}: |1 - sum| = {residual}")]
    PartitionGap { worst_xi: f64, residual: f64 },
    #[error("slice {j} has non-finite weight (UV weight not integrable on this grid)")]
    SliceOverflow { j: i32 },
    #[error("scale {0} outside the system range")]
    ScaleOutOfRange(i32),
    #[error("decay bound with r={r} is not uniform in j: constants {constants:?}")]
    DecayNotUniform { r: u32, constants: Vec<(i32, f64)> },
}

/// Scale range and grid. `j_max` is the UV cutoff.
#[derive(Clone, Debug)]
pub struct ScaleSystem {
    pub m: f64,
    pub j_min: i32,
    pub j_max: i32,
    pub grid: Grid,
}

impl ScaleSystem {
    pub fn new(m: f64, j_min: i32, j_max: i32, grid_size: usize, spacing: f64) -> Result<Self, ScaleError> {
        if m.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ScaleError::BadRatio(m));
        }
        if j_min > j_max {
            return Err(ScaleError::EmptyRange(j_min, j_max));
        }
        if !grid_size.is_power_of_two() || grid_size < 2 {
            return Err(ScaleError::GridSize(grid_size));
        }
        if spacing.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ScaleError::GridSpacing(spacing));
        }
        let grid = Grid { size: grid_size, spacing };
        let top = m.powi(j_max);
        if grid.nyquist() <= top {
            return Err(ScaleError::Nyquist { nyquist: grid.nyquist(), top });
        }
        Ok(ScaleSystem { m, j_min, j_max, grid })
    }

    pub fn scales(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn num_scales(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BumpProfile {
    /// `exp(-1/t)` transitions, C^∞.
    #[default]
    Smooth,
    /// Piecewise-linear in log|ξ|; only continuous.
    Linear,
}

/// The rising edge of the unit-scale window runs from `inner` to `outer` in |ξ|;
/// the falling edge is the same profile dilated by M.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub inner: f64,
    pub outer: f64,
    #[serde(default)]
    pub profile: BumpProfile,
}

impl BumpSpec {
    /// Window supported in `[1/M, M]`.
    pub fn standard(m: f64) -> Self {
        BumpSpec { inner: 1.0 / m, outer: 1.0, profile: BumpProfile::Smooth }
    }

    fn step(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match self.profile {
            BumpProfile::Linear => t,
            BumpProfile::Smooth => {
                let a = (-1.0 / t).exp();
                let b = (-1.0 / (1.0 - t)).exp();
                a / (a + b)
            }
        }
    }

    /// Rising edge: 0 for |ξ| ≤ inner, 1 for |ξ| ≥ outer.
    pub fn rise(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a <= self.inner {
            return 0.0;
        }
        if a >= self.outer {
            return 1.0;
        }
        self.step((a / self.inner).ln() / (self.outer / self.inner).ln())
    }
}

/// Windows χʲ for `j_min ≤ j ≤ j_max`: the lowest one is the IR catch-all
/// χ⁰(M^{-j_min}·), the others are χ¹(M^{-j}·).
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub system: ScaleSystem,
    pub bump: BumpSpec,
    cache: Vec<Vec<f64>>,
    residual: f64,
}

impl PartitionOfUnity {
    /// IR window χ⁰.
    pub fn chi0(&self, xi: f64) -> f64 {
        1.0 - self.bump.rise(xi / self.system.m)
    }

    /// Unit-scale band window χ¹.
    pub fn chi1(&self, xi: f64) -> f64 {
        self.bump.rise(xi) * (1.0 - self.bump.rise(xi / self.system.m))
    }

    /// Window of scale j evaluated off-grid.
    pub fn chi(&self, j: i32, xi: f64) -> f64 {
        let s = xi * self.system.m.powi(-j);
        if j == self.system.j_min {
            self.chi0(s)
        } else {
            self.chi1(s)
        }
    }

    /// Cached window values on the FFT bins.
    pub fn weights(&self, j: i32) -> &[f64] {
        &self.cache[(j - self.system.j_min) as usize]
    }

    /// Sum of all windows (the UV-truncation profile).
    pub fn total(&self, xi: f64) -> f64 {
        self.system.scales().map(|j| self.chi(j, xi)).sum()
    }

    /// Frequency below which the windows must sum to exactly one.
    pub fn uv_edge(&self) -> f64 {
        self.system.m.powi(self.system.j_max + 1) * self.bump.inner
    }

    /// Worst `|1 − Σχ|` over the grid bins inside the UV edge.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Builds the windows and verifies the partition of unity on the grid.
pub fn build_partition(system: &ScaleSystem, bump: BumpSpec) -> Result<PartitionOfUnity, ScaleError> {
    if !(bump.inner > 0.0 && bump.inner < bump.outer) {
        return Err(ScaleError::BumpShape { inner: bump.inner, outer: bump.outer });
    }
    let mut p = PartitionOfUnity { system: system.clone(), bump, cache: Vec::new(), residual: 0.0 };
    let freqs = system.grid.frequencies();
    p.cache = system.scales().map(|j| freqs.iter().map(|&xi| p.chi(j, xi)).collect()).collect();
    let edge = p.uv_edge();
    let mut worst = (0.0f64, 0.0f64);
    for (k, &xi) in freqs.iter().enumerate() {
        if xi.abs() > edge {
            continue;
        }
        let s: f64 = p.cache.iter().map(|w| w[k]).sum();
        let r = (1.0 - s).abs();
        if r > worst.1 {
            worst = (xi, r);
        }
    }
    // scan off-grid too: the bins may miss a gap between windows
    let samples = 4096;
    let lo = freqs[1].abs().min(1.0) * system.m.powi(system.j_min.min(0));
    for i in 0..=samples {
        let xi = lo * (edge / lo).powf(i as f64 / samples as f64);
        if xi > edge {
            continue;
        }
        let r = (1.0 - p.total(xi)).abs();
        if r > worst.1 {
            worst = (xi, r);
        }
    }
    p.residual = worst.1;
    if worst.1 > 1e-12 {
        return Err(ScaleError::PartitionGap { worst_xi: worst.0, residual: worst.1 });
    }
    Ok(p)
}

/// Nonnegative spectral densities on the line.
#[derive(Clone)]
pub enum SpectralDensity {
    /// `amplitude · |ξ|^{-exponent}`.
    PowerLaw {
        exponent: f64,
        amplitude: f64,
    },
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralDensity::PowerLaw { exponent, amplitude } => {
                write!(f, "PowerLaw({amplitude}·|ξ|^-{exponent})")
            }
            SpectralDensity::Constant(c) => write!(f, "Constant({c})"),
            SpectralDensity::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl SpectralDensity {
    /// Density `|ξ|^{-(1+2α)}` of the fractional field with Hurst index α.
    pub fn fbm(alpha: f64) -> Self {
        SpectralDensity::PowerLaw { exponent: 1.0 + 2.0 * alpha, amplitude: 1.0 }
    }

    /// Density `|ξ|^{-(1-4α)}` of the σ field.
    pub fn sigma(alpha: f64) -> Self {
        SpectralDensity::PowerLaw { exponent: 1.0 - 4.0 * alpha, amplitude: 1.0 }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            SpectralDensity::PowerLaw { exponent, amplitude } => amplitude * xi.abs().powf(-exponent),
            SpectralDensity::Constant(c) => *c,
            SpectralDensity::Custom(f) => f(xi),
        }
    }
}

/// A stationary covariance cut into scale slices.
#[derive(Clone, Debug)]
pub struct SlicedCovariance {
    pub partition: PartitionOfUnity,
    pub density: SpectralDensity,
    pub beta: f64,
    spectra: Vec<Vec<f64>>,
    slices: Vec<Vec<f64>>,
    transform: Transform,
}

/// Slices `C_φ` into `Cʲ = F⁻¹(χʲ · F C_φ)`; the ξ=0 bin is zeroed.
pub fn slice_covariance(partition: &PartitionOfUnity, density: SpectralDensity, beta: f64) -> Result<SlicedCovariance, ScaleError> {
    let system = &partition.system;
    let grid = system.grid;
    let transform = Transform::new(grid.size);
    let freqs = grid.frequencies();
    let mut spectra = Vec::with_capacity(system.num_scales());
    let mut slices = Vec::with_capacity(system.num_scales());
    for j in system.scales() {
        let w = partition.weights(j);
        let spec: Vec<f64> =
            freqs.iter().zip(w).enumerate().map(|(k, (&xi, &c))| if k == 0 || c == 0.0 { 0.0 } else { c * density.eval(xi) }).collect();
        if spec.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ScaleError::SliceOverflow { j });
        }
        let kernel = transform.kernel_from_spectrum(&grid, &spec);
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(ScaleError::SliceOverflow { j });
        }
        spectra.push(spec);
        slices.push(kernel);
    }
    Ok(SlicedCovariance { partition: partition.clone(), density, beta, spectra, slices, transform })
}

/// Per-scale constants and the overall constant of the scaled decay bound.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub r: u32,
    pub constant: f64,
    pub per_scale: Vec<(i32, f64)>,
    /// max/min of the per-scale constants
    pub spread: f64,
}

impl SlicedCovariance {
    pub fn system(&self) -> &ScaleSystem {
        &self.partition.system
    }

    pub fn grid(&self) -> Grid {
        self.partition.system.grid
    }

    fn index(&self, j: i32) -> Result<usize, ScaleError> {
        let s = self.system();
        if j < s.j_min || j > s.j_max {
            return Err(ScaleError::ScaleOutOfRange(j));
        }
        Ok((j - s.j_min) as usize)
    }

    /// Direct-space kernel `Cʲ(x_m)`.
    pub fn slice(&self, j: i32) -> Result<&[f64], ScaleError> {
        Ok(&self.slices[self.index(j)?])
    }

    /// Bin values of `χʲ · density`.
    pub fn slice_spectrum(&self, j: i32) -> Result<&[f64], ScaleError> {
        Ok(&self.spectra[self.index(j)?])
    }

    /// `χʲ(ξ)·density(ξ)` evaluated off-grid.
    pub fn slice_density(&self, j: i32, xi: f64) -> f64 {
        let c = self.partition.chi(j, xi);
        if c == 0.0 {
            0.0
        } else {
            c * self.density.eval(xi)
        }
    }

    /// Kernel with the full UV-truncated window, computed from the summed windows directly.
    pub fn truncated_kernel(&self) -> Vec<f64> {
        let grid = self.grid();
        let spec: Vec<f64> = grid
            .frequencies()
            .iter()
            .enumerate()
            .map(|(k, &xi)| {
                let w = if xi.abs() <= self.partition.uv_edge() { 1.0 } else { self.partition.total(xi) };
                if k == 0 || w == 0.0 {
                    0.0
                } else {
                    w * self.density.eval(xi)
                }
            })
            .collect();
        self.transform.kernel_from_spectrum(&grid, &spec)
    }

    /// `sup |Σ_j Cʲ − C^{→ρ}|` on the grid.
    pub fn telescoping_residual(&self) -> f64 {
        let full = self.truncated_kernel();
        let n = full.len();
        (0..n)
            .map(|m| {
                let s: f64 = self.slices.iter().map(|c| c[m]).sum();
                (s - full[m]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Smallest circulant eigenvalue of slice j.
    pub fn min_eigenvalue(&self, j: i32) -> Result<f64, ScaleError> {
        let c = self.slice(j)?;
        let eig = self.transform.forward_real(c);
        Ok(eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
    }

    /// Fits `C_r` in `|Cʲ(x)| ≤ C_r M^{2βj}(1+Mʲ|x|)^{−r}`. Uses the band slices
    /// `j > j_min` when there are any (the IR slice depends on the volume).
    pub fn check_scaled_decay(&self, r: u32) -> Result<DecayReport, ScaleError> {
        let s = self.system();
        let grid = self.grid();
        let first = if s.j_max > s.j_min { s.j_min + 1 } else { s.j_min };
        let mut per_scale = Vec::new();
        for j in first..=s.j_max {
            let c = self.slice(j)?;
            let mj = s.m.powi(j);
            let norm = s.m.powf(-2.0 * self.beta * j as f64);
            let cj = c
                .iter()
                .enumerate()
                .map(|(m, v)| v.abs() * norm * (1.0 + mj * grid.periodic_distance(m)).powi(r as i32))
                .fold(0.0, f64::max);
            per_scale.push((j, cj));
        }
        let max = per_scale.iter().map(|p| p.1).fold(0.0, f64::max);
        let min = per_scale.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let spread = if min > 0.0 {
            max / min
        } else if max == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        // growth by more than a factor 2 across the range means the bound is not uniform
        let growing = per_scale.len() >= 2 && per_scale.last().unwrap().1 > 2.0 * per_scale[0].1;
        if !max.is_finite() || growing {
            return Err(ScaleError::DecayNotUniform { r, constants: per_scale });
        }
        Ok(DecayReport { r, constant: max, per_scale, spread })
    }

    /// One sample of ψʲ on the grid; the stream is derived from `(seed, j)`.
    pub fn sample(&self, j: i32, seed: u64) -> Result<Vec<f64>, ScaleError> {
        let idx = self.index(j)?;
        let mut rng = rng::stream(seed, rng::stream_id(&[0x5ca1e, j as i64 as u64]));
        Ok(self.transform.synthesize(&self.grid(), &self.spectra[idx], &mut rng))
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    /// CSV rows `j,x,value` of the slice kernels.
    pub fn write_kernels_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "j,x,value")?;
        let grid = self.grid();
        for (i, j) in self.system().scales().enumerate() {
            for (m, v) in self.slices[i].iter().enumerate() {
                writeln!(out, "{},{},{:e}", j, grid.position(m), v)?;
            }
        }
        Ok(())
    }
}

/// Draws one sample of ψʲ; see [`SlicedCovariance::sample`].
pub fn sample_sliced_field(sliced: &SlicedCovariance, j: i32, seed: u64) -> Result<Vec<f64>, ScaleError> {
    sliced.sample(j, seed)
}

impl PartitionOfUnity {
    /// CSV rows `j,xi,value` over the nonnegative bins.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "j,xi,value")?;
        let grid = self.system.grid;
        for j in self.system.scales() {
            let w = self.weights(j);
            for k in 0..=grid.size / 2 {
                writeln!(out, "{},{},{:e}", j, grid.frequency(k), w[k])?;
            }
        }
        Ok(())
    }
}
