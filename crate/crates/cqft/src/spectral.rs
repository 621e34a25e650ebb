//! Periodic 1-D grids and the FFT plumbing shared by the field samplers.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::rng::Rng;

/// Uniform periodic grid of `size` points with spacing `spacing`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub size: usize,
    pub spacing: f64,
}

impl Grid {
    pub fn length(&self) -> f64 {
        self.size as f64 * self.spacing
    }

    /// Signed angular frequency of FFT bin `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        let n = self.size as i64;
        let k = k as i64;
        let signed = if k <= n / 2 { k } else { k - n };
        2.0 * PI * signed as f64 / self.length()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.frequency(k)).collect()
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.spacing
    }

    pub fn position(&self, m: usize) -> f64 {
        m as f64 * self.spacing
    }

    /// Distance from 0 to grid point `m` on the circle.
    pub fn periodic_distance(&self, m: usize) -> f64 {
        let m = m.min(self.size - m % self.size);
        m as f64 * self.spacing
    }
}

/// Forward/inverse transforms for one grid size (unnormalized, rustfft sign convention).
#[derive(Clone)]
pub struct Transform {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Transform({})", self.n)
    }
}

impl Transform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Transform { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.fwd.process(data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inv.process(data);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Direct-space kernel `(1/L) Σ_k S(ξ_k) e^{iξ_k x}` of a spectral density sampled on the bins.
    pub fn kernel_from_spectrum(&self, grid: &Grid, spectrum: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = spectrum.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        self.inverse(&mut buf);
        let l = grid.length();
        buf.iter().map(|c| c.re / l).collect()
    }

    /// Stationary Gaussian sample whose lattice covariance is the kernel of `spectrum`.
    pub fn synthesize(&self, grid: &Grid, spectrum: &[f64], rng: &mut Rng) -> Vec<f64> {
        let amp = self.amplitudes(grid, spectrum);
        let noise: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
        self.filter_noise(&amp, &noise)
    }

    /// Square roots of the circulant eigenvalues `(n/L)·S(ξ_k)`.
    pub fn amplitudes(&self, grid: &Grid, spectrum: &[f64]) -> Vec<f64> {
        let scale = self.n as f64 / grid.length();
        spectrum.iter().map(|&s| (scale * s.max(0.0)).sqrt()).collect()
    }

    pub fn filter_noise(&self, amplitudes: &[f64], noise: &[f64]) -> Vec<f64> {
        let mut buf = self.forward_real(noise);
        for (c, &a) in buf.iter_mut().zip(amplitudes) {
            *c *= a;
        }
        self.inverse(&mut buf);
        let n = self.n as f64;
        buf.iter().map(|c| c.re / n).collect()
    }

    /// Spectral derivative.
    pub fn derivative(&self, grid: &Grid, x: &[f64]) -> Vec<f64> {
        self.fourier_multiply(x, |k| Complex64::new(0.0, grid.frequency(k)), grid)
    }

    /// Antiderivative defined by division by `iξ`; the zero mode is dropped.
    pub fn skeleton_integral(&self, grid: &Grid, x: &[f64]) -> Vec<f64> {
        self.fourier_multiply(
            x,
            |k| {
                let xi = grid.frequency(k);
                if k == 0 || (2 * k == grid.size) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -1.0 / xi)
                }
            },
            grid,
        )
    }

    fn fourier_multiply<F: Fn(usize) -> Complex64>(&self, x: &[f64], mult: F, grid: &Grid) -> Vec<f64> {
        let mut buf = self.forward_real(x);
        let nyq = grid.size / 2;
        for (k, c) in buf.iter_mut().enumerate() {
            // the Nyquist bin has no sign; zero it so the result stays real
            *c *= if k == nyq { Complex64::new(0.0, 0.0) } else { mult(k) };
        }
        self.inverse(&mut buf);
        let n = self.n as f64;
        buf.iter().map(|c| c.re / n).collect()
    }

    /// Periodogram `|h·FFT(x)_k|² / L`, an estimator of the spectral density at bin `k`.
    pub fn periodogram(&self, grid: &Grid, x: &[f64]) -> Vec<f64> {
        let buf = self.forward_real(x);
        let h = grid.spacing;
        let l = grid.length();
        buf.iter().map(|c| (c.norm_sqr() * h * h) / l).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_sine() {
        let grid = Grid { size: 64, spacing: 2.0 * PI / 64.0 };
        let t = Transform::new(64);
        let x: Vec<f64> = (0..64).map(|m| (3.0 * grid.position(m)).sin()).collect();
        let d = t.derivative(&grid, &x);
        for m in 0..64 {
            assert!((d[m] - 3.0 * (3.0 * grid.position(m)).cos()).abs() < 1e-10);
        }
        let back = t.skeleton_integral(&grid, &d);
        for m in 0..64 {
            assert!((back[m] - x[m]).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_of_constant_spectrum_is_delta() {
        let grid = Grid { size: 16, spacing: 0.5 };
        let t = Transform::new(16);
        let k = t.kernel_from_spectrum(&grid, &[1.0; 16]);
        assert!((k[0] - 16.0 / grid.length()).abs() < 1e-12);
        assert!(k[1].abs() < 1e-12);
    }
}
