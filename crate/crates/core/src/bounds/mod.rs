//! Concentration bounds: closed-form tail formulas, the operator quantities
//! they control, and helpers for checking one against the other.
//!
//! Formula evaluators are pure. The Monte-Carlo comparisons live in
//! [`montecarlo`].

pub mod montecarlo;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::TangentSpace;
use crate::rng::{self, streams};
use crate::sampling::{self, ObservationSet};

pub use montecarlo::{monte_carlo_count, BoundReport};

/// Convergence tolerance and iteration cap of the matrix-free norm estimate.
pub const OPERATOR_NORM_TOL: f64 = 1e-8;
pub const OPERATOR_NORM_MAX_ITER: usize = 10_000;
/// `X ⋠ A` is declared when `λ_min(A − X)` falls below this.
pub const PSD_EVENT_TOL: f64 = -1e-12;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Unclamped noncommutative Bernstein tail
/// `(d1+d2) exp(−(τ²/2) / (Σρ_k² + Mτ/3))`.
pub fn bernstein_tail_raw(d1: usize, d2: usize, rho_sq_sum: f64, m_bound: f64, tau: f64) -> Result<f64> {
    check_positive("rho_sq_sum", rho_sq_sum)?;
    check_positive("M", m_bound)?;
    if d1 == 0 || d2 == 0 || !(tau >= 0.0) {
        return Err(Error::invalid("dimensions must be positive and tau nonnegative"));
    }
    let exponent = -(tau * tau / 2.0) / (rho_sq_sum + m_bound * tau / 3.0);
    Ok((d1 + d2) as f64 * exponent.exp())
}

/// [`bernstein_tail_raw`] clamped to a probability.
pub fn bernstein_tail(d1: usize, d2: usize, rho_sq_sum: f64, m_bound: f64, tau: f64) -> Result<f64> {
    Ok(bernstein_tail_raw(d1, d2, rho_sq_sum, m_bound, tau)?.min(1.0))
}

/// Condensed form `(d1+d2) exp(−(3/8) τ² / Σρ_k²)`, valid for `τ <= Σρ_k²/M`.
/// Unclamped, so it can be ordered against the full form.
pub fn bernstein_condensed(d1: usize, d2: usize, rho_sq_sum: f64, m_bound: f64, tau: f64) -> Result<f64> {
    check_positive("rho_sq_sum", rho_sq_sum)?;
    check_positive("M", m_bound)?;
    if d1 == 0 || d2 == 0 || !(tau >= 0.0) {
        return Err(Error::invalid("dimensions must be positive and tau nonnegative"));
    }
    let edge = rho_sq_sum / m_bound;
    if tau > edge {
        return Err(Error::Domain(format!(
            "tau = {tau} beyond the condensed form's validity edge {edge}"
        )));
    }
    Ok((d1 + d2) as f64 * (-(3.0 / 8.0) * tau * tau / rho_sq_sum).exp())
}

/// `[[0, X], [Xᵀ, 0]]`.
pub fn hermitian_dilation(x: &Matrix) -> Matrix {
    let (d1, d2) = x.shape();
    let mut y = Matrix::zeros(d1 + d2, d1 + d2);
    y.view_mut((0, d1), (d1, d2)).copy_from(x);
    y.view_mut((d1, 0), (d2, d1)).copy_from(&x.transpose());
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePair {
    pub lhs: f64,
    pub rhs: f64,
}

impl TracePair {
    /// `lhs <= rhs + 1e-9 |rhs|`.
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9 * self.rhs.abs()
    }
}

/// `(Tr exp(A+B), Tr(exp A · exp B))`.
pub fn golden_thompson_check(a: &Matrix, b: &Matrix) -> Result<TracePair> {
    linalg::ensure_symmetric(a, "A", 1e-10)?;
    linalg::ensure_symmetric(b, "B", 1e-10)?;
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.shape(),
            got: b.shape(),
        });
    }
    let lhs = linalg::sym_expm(&(a + b)).trace();
    let rhs = (linalg::sym_expm(a) * linalg::sym_expm(b)).trace();
    Ok(TracePair { lhs, rhs })
}

/// Spectral norm of `Z ↦ (n1 n2/m) P_T R_Ω P_T(Z) − P_T(Z)` restricted to `T`,
/// i.e. `(n1n2/m) ‖P_T R_Ω P_T − (m/(n1n2)) P_T‖`.
pub fn superop_deviation_norm(ts: &TangentSpace, obs: &ObservationSet) -> Result<f64> {
    let (n1, n2) = (ts.n1(), ts.n2());
    if (obs.n1(), obs.n2()) != (n1, n2) {
        return Err(Error::DimensionMismatch {
            expected: (n1, n2),
            got: (obs.n1(), obs.n2()),
        });
    }
    if obs.m() == 0 {
        return Err(Error::invalid("empty observation set"));
    }
    let scale = (n1 * n2) as f64 / obs.m() as f64;
    let mut rng = rng::stream_rng(0x5EED, streams::LANCZOS);
    let g = Matrix::from_fn(n1, n2, |_, _| rng::next_unit(&mut rng) - 0.5);
    let start = ts.project_unchecked(&g);
    let out = linalg::lanczos_operator_norm(
        |z| {
            let pz = ts.project_unchecked(z);
            let rz = sampling::apply_r_omega_unchecked(obs, &pz);
            ts.project_unchecked(&rz) * scale - pz
        },
        &start,
        OPERATOR_NORM_TOL,
        OPERATOR_NORM_MAX_ITER,
    )?;
    Ok(out.value)
}

/// `‖(n1n2/m) R_Ω(Z) − Z‖` (spectral).
pub fn inf_norm_deviation(obs: &ObservationSet, z: &Matrix) -> Result<f64> {
    let rz = sampling::apply_r_omega(obs, z)?;
    let scale = (obs.n1() * obs.n2()) as f64 / obs.m() as f64;
    Ok(linalg::spectral_norm(&(rz * scale - z)))
}

/// `‖(n1n2/m) P_T R_Ω(Z) − Z‖_∞` for `Z ∈ T`.
pub fn pt_romega_inf_deviation(ts: &TangentSpace, obs: &ObservationSet, z: &Matrix) -> Result<f64> {
    let perp = ts.project_perp(z)?;
    if perp.norm() > 1e-8 * z.norm() {
        return Err(Error::invalid(format!(
            "Z is not in T (‖P_T⊥ Z‖_F = {:.3e})",
            perp.norm()
        )));
    }
    let rz = sampling::apply_r_omega(obs, z)?;
    let scale = (obs.n1() * obs.n2()) as f64 / obs.m() as f64;
    Ok(linalg::inf_norm(&(ts.project_unchecked(&rz) * scale - z)))
}

/// `(‖Z‖, sqrt(n1 n2) ‖Z‖_∞)`.
pub fn spectral_vs_inf_bound_check(z: &Matrix) -> TracePair {
    let (n1, n2) = z.shape();
    TracePair {
        lhs: linalg::spectral_norm(z),
        rhs: ((n1 * n2) as f64).sqrt() * linalg::inf_norm(z),
    }
}

/// `d ∏ ‖E[exp(T X_k Tᵀ − T A Tᵀ)]‖`.
pub fn chernoff_operator_bound(d: usize, per_term_norms: &[f64]) -> Result<f64> {
    if per_term_norms.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::invalid("per-term norms must be nonnegative"));
    }
    Ok(d as f64 * per_term_norms.iter().product::<f64>())
}

/// `‖mean_i exp(T X_i Tᵀ − T A Tᵀ)‖` over the supplied samples (or atoms of a
/// discrete law, which makes it exact).
pub fn expected_exp_norm(samples: &[Matrix], t: &Matrix, a: &Matrix) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let shift = t * a * t.transpose();
    let mut mean = Matrix::zeros(shift.nrows(), shift.ncols());
    for x in samples {
        linalg::ensure_symmetric(x, "sample", 1e-10)?;
        mean += linalg::sym_expm(&(t * x * t.transpose() - &shift));
    }
    mean /= samples.len() as f64;
    Ok(linalg::spectral_norm(&mean))
}

/// Right-hand side of the near-isometry theorem,
/// `sqrt(16 μ0 r (n1+n2) β ln n2 / (3m))`.
pub fn near_isometry_bound(n1: usize, n2: usize, r: usize, mu0: f64, beta: f64, m: usize) -> f64 {
    (16.0 * mu0 * r as f64 * (n1 + n2) as f64 * beta * (n2 as f64).ln() / (3.0 * m as f64)).sqrt()
}

/// Sample count the near-isometry theorem requires to be exceeded:
/// `(16/3) μ0 r (n1+n2) β ln n2`.
pub fn near_isometry_min_m(n1: usize, n2: usize, r: usize, mu0: f64, beta: f64) -> f64 {
    16.0 / 3.0 * mu0 * r as f64 * (n1 + n2) as f64 * beta * (n2 as f64).ln()
}

/// Coefficient of `‖Z‖_∞` in the spectral deviation bound,
/// `sqrt(8 β n1 n2² ln(n1+n2) / (3m))`.
pub fn inf_norm_bound_coeff(n1: usize, n2: usize, beta: f64, m: usize) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    (8.0 * beta * a * b * b * (a + b).ln() / (3.0 * m as f64)).sqrt()
}

/// `6 β n1 ln(n1+n2)`.
pub fn inf_norm_min_m(n1: usize, n2: usize, beta: f64) -> f64 {
    6.0 * beta * n1 as f64 * ((n1 + n2) as f64).ln()
}

/// Coefficient of `‖Z‖_∞` in the norm-contraction lemma,
/// `sqrt(8 β μ0 r (n1+n2) ln n2 / (3m))`.
pub fn norm_contraction_coeff(n1: usize, n2: usize, r: usize, mu0: f64, beta: f64, m: usize) -> f64 {
    (8.0 * beta * mu0 * r as f64 * (n1 + n2) as f64 * (n2 as f64).ln() / (3.0 * m as f64)).sqrt()
}

/// `(8/3) β μ0 r (n1+n2) ln n2`.
pub fn norm_contraction_min_m(n1: usize, n2: usize, r: usize, mu0: f64, beta: f64) -> f64 {
    8.0 / 3.0 * beta * mu0 * r as f64 * (n1 + n2) as f64 * (n2 as f64).ln()
}
