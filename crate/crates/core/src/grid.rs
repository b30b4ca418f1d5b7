//! Uniform periodic grid and spinor-valued wave functions on it.

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size {0} must be a power of two and at least 16")]
    BadSize(usize),
    #[error("grid bounds inverted or degenerate: x_min = {x_min}, x_max = {x_max}")]
    BadBounds { x_min: f64, x_max: f64 },
    #[error("packet width must be positive, got sigma = {0}")]
    BadWidth(f64),
    #[error("spinor coefficients are both zero")]
    ZeroSpinor,
    #[error("packet center {center} +/- 5 sigma ({sigma}) leaves the domain [{x_min}, {x_max})")]
    PacketOverflow {
        center: f64,
        sigma: f64,
        x_min: f64,
        x_max: f64,
    },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("component length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cannot normalize a field of zero norm")]
    ZeroNorm,
}

/// Uniform periodic grid `x_j = x_min + j dx`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
}

impl Grid1D {
    pub fn new(n: usize, x_min: f64, x_max: f64) -> Result<Self, GridError> {
        if n < 16 || !n.is_power_of_two() {
            return Err(GridError::BadSize(n));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(GridError::BadBounds { x_min, x_max });
        }
        Ok(Self {
            n,
            x_min,
            x_max,
            dx: (x_max - x_min) / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.x(j))
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.x_min && q < self.x_max
    }

    /// Maps `q` into `[x_min, x_max)` using the periodic topology.
    pub fn wrap(&self, q: f64) -> f64 {
        if self.contains(q) {
            return q;
        }
        let w = (q - self.x_min).rem_euclid(self.length()) + self.x_min;
        // rem_euclid can round up to exactly the period
        if w >= self.x_max {
            self.x_min
        } else {
            w
        }
    }

    /// Index of the grid point mirrored through `x = 0`, if the grid is
    /// symmetric about the origin and `x_j` has a mirror image on it.
    pub fn mirror_index(&self, j: usize) -> Option<usize> {
        if (self.x_min + self.x_max).abs() > 1e-12 * self.length() {
            return None;
        }
        Some((self.n - j) % self.n)
    }

    /// Largest wavenumber resolved by the grid, `pi / dx`.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.dx
    }

    pub(crate) fn same_as(&self, other: &Grid1D) -> bool {
        self.n == other.n && self.x_min == other.x_min && self.x_max == other.x_max
    }
}

/// A position of the single particle.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Configuration {
    pub q: f64,
}

impl Configuration {
    pub fn new(q: f64) -> Self {
        Self { q }
    }
}

/// Two-component wave function sampled on a [`Grid1D`]. Spinless fields keep
/// `comp2` identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: Grid1D,
    comp1: Vec<Complex64>,
    comp2: Vec<Complex64>,
}

impl SpinorField {
    pub fn new(
        grid: Grid1D,
        comp1: Vec<Complex64>,
        comp2: Vec<Complex64>,
    ) -> Result<Self, GridError> {
        for len in [comp1.len(), comp2.len()] {
            if len != grid.n() {
                return Err(GridError::LengthMismatch {
                    expected: grid.n(),
                    got: len,
                });
            }
        }
        Ok(Self { grid, comp1, comp2 })
    }

    /// Builds a spinless field (second component zero).
    pub fn scalar(grid: Grid1D, comp: Vec<Complex64>) -> Result<Self, GridError> {
        let zeros = vec![Complex64::new(0.0, 0.0); grid.n()];
        Self::new(grid, comp, zeros)
    }

    /// `(a|up> + b|down>) (x) phi` for a scalar profile `phi`.
    pub fn from_spin_profile(
        grid: Grid1D,
        a: Complex64,
        b: Complex64,
        profile: &[Complex64],
    ) -> Result<Self, GridError> {
        Self::new(
            grid,
            profile.iter().map(|p| a * p).collect(),
            profile.iter().map(|p| b * p).collect(),
        )
    }

    pub fn zeros(grid: Grid1D) -> Self {
        let zeros = vec![Complex64::new(0.0, 0.0); grid.n()];
        Self {
            grid,
            comp1: zeros.clone(),
            comp2: zeros,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn comp1(&self) -> &[Complex64] {
        &self.comp1
    }

    pub fn comp2(&self) -> &[Complex64] {
        &self.comp2
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.comp1, &mut self.comp2)
    }

    pub fn norm_sq(&self) -> f64 {
        let s: f64 = self
            .comp1
            .iter()
            .zip(&self.comp2)
            .map(|(u, d)| u.norm_sqr() + d.norm_sqr())
            .sum();
        s * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&self) -> Result<Self, GridError> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GridError::ZeroNorm);
        }
        Ok(self.scale(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            comp1: self.comp1.iter().map(|z| c * z).collect(),
            comp2: self.comp2.iter().map(|z| c * z).collect(),
        }
    }

    /// `a * phi + b * psi`.
    pub fn combine(
        a: Complex64,
        phi: &SpinorField,
        b: Complex64,
        psi: &SpinorField,
    ) -> Result<Self, GridError> {
        if !phi.grid.same_as(&psi.grid) {
            return Err(GridError::GridMismatch);
        }
        let mix = |u: &[Complex64], v: &[Complex64]| -> Vec<Complex64> {
            u.iter().zip(v).map(|(x, y)| a * x + b * y).collect()
        };
        Ok(Self {
            grid: phi.grid,
            comp1: mix(&phi.comp1, &psi.comp1),
            comp2: mix(&phi.comp2, &psi.comp2),
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            comp1: self.comp1.iter().map(|z| z.conj()).collect(),
            comp2: self.comp2.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Spin-summed density `|psi_1|^2 + |psi_2|^2` at each grid point.
    pub fn density(&self) -> Vec<f64> {
        self.comp1
            .iter()
            .zip(&self.comp2)
            .map(|(u, d)| u.norm_sqr() + d.norm_sqr())
            .collect()
    }

    /// Spin populations `(int |psi_1|^2, int |psi_2|^2)`.
    pub fn spin_populations(&self) -> (f64, f64) {
        let dx = self.grid.dx();
        let up: f64 = self.comp1.iter().map(|z| z.norm_sqr()).sum();
        let down: f64 = self.comp2.iter().map(|z| z.norm_sqr()).sum();
        (up * dx, down * dx)
    }

    /// Sup-norm distance over both components.
    pub fn max_abs_diff(&self, other: &SpinorField) -> Result<f64, GridError> {
        if !self.grid.same_as(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        let d1 = self.comp1.iter().zip(&other.comp1).map(|(a, b)| (a - b).norm());
        let d2 = self.comp2.iter().zip(&other.comp2).map(|(a, b)| (a - b).norm());
        Ok(d1.chain(d2).fold(0.0, f64::max))
    }

    /// L2 distance `||self - other||`.
    pub fn l2_distance(&self, other: &SpinorField) -> Result<f64, GridError> {
        let diff = SpinorField::combine(
            Complex64::new(1.0, 0.0),
            self,
            Complex64::new(-1.0, 0.0),
            other,
        )?;
        Ok(diff.norm())
    }

    pub fn mean_position(&self) -> f64 {
        let rho = self.density();
        let total: f64 = rho.iter().sum();
        self.grid
            .points()
            .zip(&rho)
            .map(|(x, r)| x * r)
            .sum::<f64>()
            / total
    }

    /// Standard deviation of the position density.
    pub fn position_width(&self) -> f64 {
        let rho = self.density();
        let total: f64 = rho.iter().sum();
        let mean = self.mean_position();
        let var = self
            .grid
            .points()
            .zip(&rho)
            .map(|(x, r)| (x - mean).powi(2) * r)
            .sum::<f64>()
            / total;
        var.sqrt()
    }

    /// `<psi| -i d/dx |psi>` with the derivative taken in Fourier space.
    pub fn mean_momentum(&self) -> f64 {
        let spectral = Spectral::new(&self.grid);
        let d1 = spectral.derivative(&self.comp1);
        let d2 = spectral.derivative(&self.comp2);
        let minus_i = Complex64::new(0.0, -1.0);
        let s: Complex64 = self
            .comp1
            .iter()
            .zip(&d1)
            .chain(self.comp2.iter().zip(&d2))
            .map(|(p, dp)| p.conj() * minus_i * dp)
            .sum();
        s.re * self.grid.dx()
    }
}

/// `<phi, psi> = sum_j (phi_1^* psi_1 + phi_2^* psi_2)(x_j) dx`.
pub fn inner_product(phi: &SpinorField, psi: &SpinorField) -> Result<Complex64, GridError> {
    if !phi.grid.same_as(&psi.grid) {
        return Err(GridError::GridMismatch);
    }
    let s: Complex64 = phi
        .comp1
        .iter()
        .zip(&psi.comp1)
        .chain(phi.comp2.iter().zip(&psi.comp2))
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * phi.grid.dx())
}

pub fn density(psi: &SpinorField) -> Vec<f64> {
    psi.density()
}

/// Parameters of a Gaussian wave packet `exp(-(x-c)^2/(4 sigma^2) + i k x)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianPacket {
    pub center: f64,
    pub sigma: f64,
    pub k: f64,
}

impl GaussianPacket {
    pub fn new(center: f64, sigma: f64, k: f64) -> Self {
        Self { center, sigma, k }
    }

    pub fn is_even(&self) -> bool {
        self.center == 0.0 && self.k == 0.0
    }

    /// Unnormalized scalar profile on the grid.
    pub fn profile(&self, grid: &Grid1D) -> Vec<Complex64> {
        grid.points()
            .map(|x| {
                let envelope = (-(x - self.center).powi(2) / (4.0 * self.sigma * self.sigma)).exp();
                Complex64::from_polar(envelope, self.k * x)
            })
            .collect()
    }
}

/// Normalized `(a|up> + b|down>) (x) phi_0` with a Gaussian `phi_0`.
pub fn gaussian_packet(
    grid: &Grid1D,
    center: f64,
    sigma: f64,
    k: f64,
    a: Complex64,
    b: Complex64,
) -> Result<SpinorField, GridError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(GridError::BadWidth(sigma));
    }
    if a.norm_sqr() + b.norm_sqr() == 0.0 {
        return Err(GridError::ZeroSpinor);
    }
    if center - 5.0 * sigma < grid.x_min() || center + 5.0 * sigma > grid.x_max() {
        return Err(GridError::PacketOverflow {
            center,
            sigma,
            x_min: grid.x_min(),
            x_max: grid.x_max(),
        });
    }
    let profile = GaussianPacket::new(center, sigma, k).profile(grid);
    SpinorField::from_spin_profile(*grid, a, b, &profile)?.normalize()
}

/// Normalized plane wave `exp(i k x) / sqrt(L)` in the spin state `(a, b)`.
/// `k` should be a multiple of `2 pi / L` for the field to be periodic.
pub fn plane_wave(
    grid: &Grid1D,
    k: f64,
    a: Complex64,
    b: Complex64,
) -> Result<SpinorField, GridError> {
    if a.norm_sqr() + b.norm_sqr() == 0.0 {
        return Err(GridError::ZeroSpinor);
    }
    let profile: Vec<Complex64> = grid.points().map(|x| Complex64::from_polar(1.0, k * x)).collect();
    SpinorField::from_spin_profile(*grid, a, b, &profile)?.normalize()
}
