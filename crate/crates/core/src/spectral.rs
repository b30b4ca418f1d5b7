//! FFT plumbing shared by the propagator and the guidance field.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid1D;

/// Forward/inverse FFT plans and the FFT-ordered wavenumbers of a grid.
#[derive(Clone)]
pub struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("n", &self.wavenumbers.len())
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wavenumbers: wavenumbers(grid),
        }
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn n(&self) -> usize {
        self.wavenumbers.len()
    }

    /// In-place forward transform (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// In-place inverse transform, including the `1/n` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// Inverse transform without normalization, for callers that fold `1/n`
    /// into a multiplier.
    pub(crate) fn inverse_unnormalized(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
    }

    /// `d/dx` by multiplication with `i k`. The Nyquist mode is dropped.
    pub fn derivative(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        let nyquist = self.n() / 2;
        for (j, (z, k)) in buf.iter_mut().zip(&self.wavenumbers).enumerate() {
            *z = if j == nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                *z * Complex64::new(0.0, *k)
            };
        }
        self.inverse(&mut buf);
        buf
    }

    /// `-1/2 d^2/dx^2` applied spectrally.
    pub fn kinetic(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        for (z, k) in buf.iter_mut().zip(&self.wavenumbers) {
            *z *= 0.5 * k * k;
        }
        self.inverse(&mut buf);
        buf
    }
}

/// Wavenumbers `2 pi m / L` in FFT order: `0, 1, .., n/2 - 1, -n/2, .., -1`.
pub fn wavenumbers(grid: &Grid1D) -> Vec<f64> {
    let n = grid.n();
    let dk = 2.0 * PI / grid.length();
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            m * dk
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumber_ordering() {
        let g = Grid1D::new(16, 0.0, 2.0 * PI).unwrap();
        let k = wavenumbers(&g);
        assert_eq!(k[0], 0.0);
        assert_eq!(k[1], 1.0);
        assert_eq!(k[7], 7.0);
        assert_eq!(k[8], -8.0);
        assert_eq!(k[15], -1.0);
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid1D::new(64, 0.0, 2.0 * PI).unwrap();
        let s = Spectral::new(&g);
        let f: Vec<Complex64> = g.points().map(|x| Complex64::new((3.0 * x).sin(), 0.0)).collect();
        let df = s.derivative(&f);
        for (x, d) in g.points().zip(&df) {
            assert!((d.re - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
            assert!(d.im.abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip() {
        let g = Grid1D::new(32, -1.0, 1.0).unwrap();
        let s = Spectral::new(&g);
        let f: Vec<Complex64> = (0..32).map(|j| Complex64::new(j as f64, -(j as f64) * 0.5)).collect();
        let mut buf = f.clone();
        s.forward(&mut buf);
        s.inverse(&mut buf);
        for (a, b) in f.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
