//! Periodic boundary fields sampled on a uniform angular grid.
//!
//! A [`BoundaryField`] keeps both representations of a real periodic
//! function: the samples `h(θ_j)`, `θ_j = 2πj/N`, and the real Fourier
//! coefficients of its trigonometric interpolant
//!
//! ```text
//! h(θ) = c0 + Σ_{1≤k<N/2} (a_k cos kθ + b_k sin kθ) + a_{N/2} cos(Nθ/2)
//! ```
//!
//! The Nyquist term is present only for even `N`.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Smallest number of samples a field may carry.
pub const MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    samples: Vec<f64>,
    mean: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    nyquist: f64,
}

impl BoundaryField {
    /// Builds a field from samples on the grid `θ_j = 2πj/N`.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::from_shifted_samples(samples, 0.0)
    }

    /// Builds a field from samples taken at `θ_j = phase + 2πj/N`. The
    /// stored samples are the interpolant re-evaluated on the unshifted
    /// grid.
    pub fn from_shifted_samples(samples: Vec<f64>, phase: f64) -> Result<Self> {
        let n = samples.len();
        if n < MIN_SAMPLES {
            return Err(Error::InvalidField(format!(
                "need at least {MIN_SAMPLES} samples, got {n}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite sample".into()));
        }
        let (mean, mut cos, mut sin, nyquist) = analyze(&samples);
        if phase == 0.0 {
            return Ok(Self { samples, mean, cos, sin, nyquist });
        }
        // g(s) = h(s + phase) has the computed coefficients; rotate back.
        for k in 0..cos.len() {
            let (s, c) = ((k + 1) as f64 * phase).sin_cos();
            let (a, b) = (cos[k], sin[k]);
            cos[k] = a * c - b * s;
            sin[k] = a * s + b * c;
        }
        // The sine half of a shifted Nyquist mode vanishes on the grid.
        let nyquist = if n.is_multiple_of(2) {
            nyquist * ((n / 2) as f64 * phase).cos()
        } else {
            0.0
        };
        Self::from_parts(n, mean, cos, sin, nyquist)
    }

    /// Builds an `n`-sample field from Fourier coefficients `c0`,
    /// `a_1..a_K`, `b_1..b_K` with `K < n/2`.
    pub fn from_fourier(n: usize, c0: f64, cos: &[f64], sin: &[f64]) -> Result<Self> {
        if cos.len() != sin.len() {
            return Err(Error::InvalidField(format!(
                "cosine/sine coefficient lengths differ ({} vs {})",
                cos.len(),
                sin.len()
            )));
        }
        if n < MIN_SAMPLES || 2 * cos.len() >= n {
            return Err(Error::InvalidField(format!(
                "{} modes cannot be represented with {n} samples",
                cos.len()
            )));
        }
        let m = (n - 1) / 2;
        let mut c = vec![0.0; m];
        let mut s = vec![0.0; m];
        c[..cos.len()].copy_from_slice(cos);
        s[..sin.len()].copy_from_slice(sin);
        Self::from_parts(n, c0, c, s, 0.0)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_fourier(n, value, &[], &[])
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::constant(n, 0.0)
    }

    /// Samples `f` on the `n`-point grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_samples((0..n).map(|j| f(grid_angle(j, n))).collect())
    }

    fn from_parts(n: usize, mean: f64, cos: Vec<f64>, sin: Vec<f64>, nyquist: f64) -> Result<Self> {
        let mut field = Self {
            samples: Vec::new(),
            mean,
            cos,
            sin,
            nyquist,
        };
        field.samples = (0..n).map(|j| field.eval(grid_angle(j, n))).collect();
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    pub fn nyquist(&self) -> f64 {
        self.nyquist
    }

    /// Angle of sample `j`.
    pub fn angle(&self, j: usize) -> f64 {
        grid_angle(j, self.len())
    }

    /// Highest mode with a coefficient above `tol` in absolute value.
    pub fn bandwidth(&self, tol: f64) -> usize {
        if self.nyquist.abs() > tol {
            return self.len() / 2;
        }
        (0..self.cos.len())
            .rev()
            .find(|&k| self.cos[k].abs() > tol || self.sin[k].abs() > tol)
            .map_or(0, |k| k + 1)
    }

    /// Trigonometric interpolant at an arbitrary angle.
    pub fn eval(&self, theta: f64) -> f64 {
        let mut acc = self.mean;
        let (s1, c1) = theta.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        for (a, b) in self.cos.iter().zip(&self.sin) {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            acc += a * c + b * s;
        }
        if self.nyquist != 0.0 {
            acc += self.nyquist * ((self.len() / 2) as f64 * theta).cos();
        }
        acc
    }

    /// Derivative of the interpolant with respect to θ.
    pub fn eval_derivative(&self, theta: f64) -> f64 {
        let mut acc = 0.0;
        let (s1, c1) = theta.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            acc += (k + 1) as f64 * (b * c - a * s);
        }
        if self.nyquist != 0.0 {
            let m = (self.len() / 2) as f64;
            acc -= self.nyquist * m * (m * theta).sin();
        }
        acc
    }

    /// Values on the `n`-point grid offset by `phase`. Returns the stored
    /// samples unchanged when the grids coincide.
    pub fn values_on_grid(&self, n: usize, phase: f64) -> Vec<f64> {
        if n == self.len() && phase == 0.0 {
            return self.samples.clone();
        }
        if phase == 0.0 && n > 0 && self.len().is_multiple_of(n) {
            let stride = self.len() / n;
            return self.samples.iter().step_by(stride).copied().collect();
        }
        (0..n).map(|j| self.eval(phase + grid_angle(j, n))).collect()
    }

    /// Re-samples the interpolant on an `n`-point grid.
    pub fn resample(&self, n: usize) -> Result<Self> {
        Self::from_samples(self.values_on_grid(n, 0.0))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_samples(self.samples.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            mean: self.mean * factor,
            cos: self.cos.iter().map(|v| v * factor).collect(),
            sin: self.sin.iter().map(|v| v * factor).collect(),
            nyquist: self.nyquist * factor,
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::InvalidField(format!(
                "grid mismatch ({} vs {} samples)",
                self.len(),
                other.len()
            )));
        }
        Self::from_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Trapezoid-rule `∫₀^{2π} h² dθ`.
    pub fn squared_integral(&self) -> f64 {
        let w = 2.0 * PI / self.len() as f64;
        w * self.samples.iter().map(|v| v * v).sum::<f64>()
    }

    /// L² norm on a circle of the given radius, `(R ∫ h² dθ)^{1/2}`.
    pub fn l2_norm_on_circle(&self, radius: f64) -> f64 {
        (radius * self.squared_integral()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn grid_angle(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

/// Real Fourier analysis of uniform samples: `(c0, a_k, b_k, a_nyquist)`.
fn analyze(samples: &[f64]) -> (f64, Vec<f64>, Vec<f64>, f64) {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let inv = 1.0 / n as f64;
    let m = (n - 1) / 2;
    let cos = (1..=m).map(|k| 2.0 * buf[k].re * inv).collect();
    let sin = (1..=m).map(|k| -2.0 * buf[k].im * inv).collect();
    let nyquist = if n.is_multiple_of(2) { buf[n / 2].re * inv } else { 0.0 };
    (buf[0].re * inv, cos, sin, nyquist)
}
