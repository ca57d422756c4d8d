//! Nuclear-norm minimisation `minimize ‖X‖_* subject to X_ab = M_ab on Ω`.
//!
//! Alternating splitting (ADMM) on `X = Z`, `Z ∈ {P_Ω Z = P_Ω M}`:
//!
//! ```text
//! X ← D_{1/ρ}(Z − Λ/ρ)
//! Z ← X + Λ/ρ, observed cells reset to their values
//! Λ ← Λ + ρ (X − Z)
//! ```
//!
//! with `ρ = rho_scale / σ_1(P_Ω M)`. The residual is
//! `max(‖X − Z‖_F, ‖Z − Z_prev‖_F) / ‖Z‖_F`, and the returned matrix is the
//! feasible iterate `Z`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::LowRankFactorization;
use crate::sampling::ObservationSet;

#[derive(Debug, Clone, Copy)]
pub struct SolverParams {
    pub max_iter: usize,
    pub tol: f64,
    pub rho_scale: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tol: 1e-7,
            rho_scale: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverResult {
    #[serde(skip)]
    pub x: Matrix,
    pub iterations: usize,
    /// Relative primal/dual residual of the final step.
    pub residual: f64,
    /// `‖X‖_*`.
    pub objective: f64,
    pub converged: bool,
}

/// `U max(Σ − τ, 0) Vᵀ`, the proximal map of `τ ‖·‖_*`.
pub fn sv_soft_threshold(z: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    if tau == 0.0 || z.is_empty() {
        return Ok(z.clone());
    }
    let (u, s, v) = linalg::thin_svd(z);
    let kept = s.iter().take_while(|&&x| x > tau).count();
    if kept == 0 {
        return Ok(Matrix::zeros(z.nrows(), z.ncols()));
    }
    let shrunk = DVector::from_iterator(kept, s[..kept].iter().map(|x| x - tau));
    Ok(u.columns(0, kept) * Matrix::from_diagonal(&shrunk) * v.columns(0, kept).transpose())
}

pub fn solve_nuclear_min(obs: &ObservationSet, params: &SolverParams) -> Result<SolverResult> {
    if obs.distinct() == 0 {
        return Err(Error::invalid("no observations"));
    }
    if !obs.has_values() {
        return Err(Error::invalid("observation set carries no values"));
    }
    if !(params.rho_scale > 0.0) || !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::invalid("solver parameters out of range"));
    }
    let (n1, n2) = (obs.n1(), obs.n2());
    let mut data = Matrix::zeros(n1, n2);
    for c in obs.cells() {
        data[(c.row, c.col)] = c.value.expect("checked above");
    }
    let reimpose = |x: &mut Matrix| {
        for c in obs.cells() {
            x[(c.row, c.col)] = c.value.expect("checked above");
        }
    };

    let sigma1 = linalg::spectral_norm(&data);
    if obs.distinct() == n1 * n2 || sigma1 == 0.0 {
        // feasible set is a point, or zero is feasible and optimal
        let objective = linalg::nuclear_norm(&data);
        return Ok(SolverResult {
            x: data,
            iterations: 1,
            residual: 0.0,
            objective,
            converged: true,
        });
    }

    let rho = params.rho_scale / sigma1;
    let mut z = data;
    let mut lambda = Matrix::zeros(n1, n2);
    let mut residual = f64::INFINITY;
    let mut iterations = params.max_iter;
    let mut converged = false;
    for it in 1..=params.max_iter {
        let x = sv_soft_threshold(&(&z - &lambda / rho), 1.0 / rho)?;
        let mut next = &x + &lambda / rho;
        reimpose(&mut next);
        let primal = &x - &next;
        let dual = (&next - &z).norm();
        residual = primal.norm().max(dual) / next.norm().max(f64::MIN_POSITIVE);
        lambda += primal * rho;
        z = next;
        if !residual.is_finite() {
            return Err(Error::NumericFailure {
                message: format!("solver diverged at iteration {it}"),
                last_value: residual,
            });
        }
        if residual < params.tol {
            iterations = it;
            converged = true;
            break;
        }
    }
    let objective = linalg::nuclear_norm(&z);
    Ok(SolverResult {
        x: z,
        iterations,
        residual,
        objective,
        converged,
    })
}

/// `‖X − M‖_F / ‖M‖_F <= tol`.
pub fn recovery_verdict(x: &Matrix, f: &LowRankFactorization, tol: f64) -> Result<bool> {
    Ok(relative_error(x, f)? <= tol)
}

pub fn relative_error(x: &Matrix, f: &LowRankFactorization) -> Result<f64> {
    linalg::ensure_shape(x, f.n1(), f.n2())?;
    let m = f.matrix();
    Ok((x - &m).norm() / m.norm())
}

pub const DEFAULT_RECOVERY_TOL: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{ObservedCell, SamplingModel};

    #[test]
    fn threshold_edge_cases() {
        let z = Matrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        assert_eq!(sv_soft_threshold(&z, 0.0).unwrap(), z);
        let top = linalg::spectral_norm(&z);
        assert_eq!(sv_soft_threshold(&z, top).unwrap(), Matrix::zeros(2, 3));
        assert!(sv_soft_threshold(&z, -1.0).is_err());
        let d = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let out = sv_soft_threshold(&d, 2.0).unwrap();
        assert!((out - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-14);
    }

    fn cell(row: usize, col: usize, value: f64) -> ObservedCell {
        ObservedCell {
            row,
            col,
            multiplicity: 1,
            value: Some(value),
        }
    }

    #[test]
    fn needs_values() {
        let obs = crate::sampling::sample_uniform(2, 2, 2, 0).unwrap();
        assert!(solve_nuclear_min(&obs, &SolverParams::default()).is_err());
    }

    #[test]
    fn full_observation_is_exact() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        let obs = ObservationSet::from_cells(
            2,
            2,
            SamplingModel::UniformNoReplace,
            0,
            (0..4).map(|k| cell(k / 2, k % 2, vals[k])),
        )
        .unwrap();
        let res = solve_nuclear_min(&obs, &SolverParams::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert_eq!(res.x, Matrix::from_row_slice(2, 2, &vals));
    }

    #[test]
    fn two_by_two_completion() {
        let obs = ObservationSet::from_cells(
            2,
            2,
            SamplingModel::UniformNoReplace,
            0,
            [(0, 0), (0, 1), (1, 0)].map(|(a, b)| cell(a, b, 1.0)),
        )
        .unwrap();
        let res = solve_nuclear_min(&obs, &SolverParams::default()).unwrap();
        assert!(res.converged);
        // nuclear norm of [[1,1],[1,x]] is sqrt((1-x)^2+4) for x <= 1, 1+x above
        let oracle = |x: f64| if x <= 1.0 { ((1.0 - x).powi(2) + 4.0).sqrt() } else { 1.0 + x };
        assert!((res.x[(1, 1)] - 1.0).abs() < 2e-6);
        assert!((res.objective - oracle(1.0)).abs() < 1e-6);
        let f = LowRankFactorization::from_matrix(&Matrix::from_element(2, 2, 1.0), 1).unwrap();
        assert!(recovery_verdict(&res.x, &f, 1e-6).unwrap());
        assert!(!recovery_verdict(&Matrix::zeros(2, 2), &f, 0.5).unwrap());
    }
}
