//! Modified Bessel functions of orders 0 and 1 by power series, and the
//! closed-form radial solutions of `−Δu + u = 0` in a concentric annulus
//! they provide.
//!
//! The series are evaluated to full double precision for `0 < x ≤ 5`,
//! which covers every annulus used here.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 200;

/// `I_n(x)` for `n ∈ {0, 1}`.
fn bessel_i(n: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = if n == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    for m in 1..MAX_TERMS {
        term *= q / (m as f64 * (m as f64 + n as f64));
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum
}

pub fn i0(x: f64) -> f64 {
    bessel_i(0, x)
}

pub fn i1(x: f64) -> f64 {
    bessel_i(1, x)
}

/// `K_0(x) = −(ln(x/2) + γ) I_0(x) + Σ_{m≥1} H_m (x²/4)^m / (m!)²`.
pub fn k0(x: f64) -> f64 {
    assert!(x > 0.0, "K0 is singular at x = {x}");
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut sum = 0.0;
    for m in 1..MAX_TERMS {
        let mf = m as f64;
        term *= q / (mf * mf);
        harmonic += 1.0 / mf;
        let add = term * harmonic;
        sum += add;
        if add.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    -((0.5 * x).ln() + EULER_GAMMA) * i0(x) + sum
}

/// `K_1(x) = 1/x + ln(x/2) I_1(x) − (x/4) Σ_{m≥0} (ψ(m+1) + ψ(m+2)) (x²/4)^m / (m!(m+1)!)`.
pub fn k1(x: f64) -> f64 {
    assert!(x > 0.0, "K1 is singular at x = {x}");
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut psi_m1 = -EULER_GAMMA;
    let mut psi_m2 = 1.0 - EULER_GAMMA;
    let mut sum = term * (psi_m1 + psi_m2);
    for m in 1..MAX_TERMS {
        let mf = m as f64;
        term *= q / (mf * (mf + 1.0));
        psi_m1 += 1.0 / mf;
        psi_m2 += 1.0 / (mf + 1.0);
        let add = term * (psi_m1 + psi_m2);
        sum += add;
        if add.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    1.0 / x + (0.5 * x).ln() * i1(x) - 0.25 * x * sum
}

/// Radial solution `u(ρ) = A I_0(ρ) + B K_0(ρ)` of `−Δu + u = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSolution {
    pub a: f64,
    pub b: f64,
}

impl RadialSolution {
    /// Annulus `r_inner < ρ < r_outer` with `u(r_inner) = dirichlet` and
    /// `∂_ρ u(r_outer) = neumann`.
    pub fn annulus(r_inner: f64, r_outer: f64, dirichlet: f64, neumann: f64) -> Self {
        // [ I0(R0)   K0(R0) ] [A]   [dirichlet]
        // [ I1(R1)  -K1(R1) ] [B] = [neumann  ]
        let (m11, m12) = (i0(r_inner), k0(r_inner));
        let (m21, m22) = (i1(r_outer), -k1(r_outer));
        let det = m11 * m22 - m12 * m21;
        Self {
            a: (dirichlet * m22 - m12 * neumann) / det,
            b: (m11 * neumann - m21 * dirichlet) / det,
        }
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.a * i0(rho) + self.b * k0(rho)
    }

    /// `∂_ρ u`.
    pub fn derivative(&self, rho: f64) -> f64 {
        self.a * i1(rho) - self.b * k1(rho)
    }
}
