//! Monte-Carlo comparison of empirical tail frequencies against the
//! theoretical bounds.
//!
//! Trial `t` of a run with seed `s` draws everything from
//! `derive_seed(s, t)`, and results are reduced by counting, so reports are
//! bit-identical for any rayon pool size.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::*;
use crate::model::{coherence_profile, LowRankFactorization};
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::sampling::{duplicate_bound, max_multiplicity, sample_with_replacement};

/// One verified inequality.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub params: String,
    /// Theoretical tail probability, clamped to `[0, 1]`.
    pub theoretical_tail: f64,
    /// Unclamped formula value.
    pub raw_tail: f64,
    /// Deviation level (or bound value) whose exceedance is counted.
    pub theoretical_threshold: f64,
    pub empirical_exceed_frequency: f64,
    pub trials: usize,
    pub stderr: f64,
    /// Largest formula mismatch, for rows that also compare two closed forms.
    pub formula_residual: Option<f64>,
}

/// Closed-form identities checked inside a report must agree to this.
pub const FORMULA_TOL: f64 = 1e-12;

impl BoundReport {
    pub fn new(
        bound_name: impl Into<String>,
        params: impl Into<String>,
        raw_tail: f64,
        threshold: f64,
        exceed: usize,
        trials: usize,
    ) -> Self {
        let f = if trials == 0 { 0.0 } else { exceed as f64 / trials as f64 };
        Self {
            bound_name: bound_name.into(),
            params: params.into(),
            theoretical_tail: raw_tail.clamp(0.0, 1.0),
            raw_tail,
            theoretical_threshold: threshold,
            empirical_exceed_frequency: f,
            trials,
            stderr: stderr(f, trials),
            formula_residual: None,
        }
    }

    /// Empirical frequency within three standard errors of the (one-sided)
    /// bound, and any attached formula check within [`FORMULA_TOL`].
    pub fn passed(&self) -> bool {
        let tail_ok =
            self.empirical_exceed_frequency <= self.theoretical_tail + 3.0 * self.stderr;
        let formula_ok = self.formula_residual.is_none_or(|r| r <= FORMULA_TOL);
        tail_ok && formula_ok
    }

    pub fn verdict(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

pub fn stderr(f: f64, trials: usize) -> f64 {
    if trials == 0 {
        0.0
    } else {
        (f * (1.0 - f) / trials as f64).sqrt()
    }
}

/// Count trials for which `exceeds(trial)` is true. Errors surface from the
/// lowest-numbered failing trial.
pub fn monte_carlo_count<F>(trials: usize, exceeds: F) -> Result<usize>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    let outcomes: Vec<Result<bool>> = (0..trials as u64).into_par_iter().map(&exceeds).collect();
    let mut count = 0;
    for o in outcomes {
        if o? {
            count += 1;
        }
    }
    Ok(count)
}

/// Multiplicity of the most repeated cell vs `(8/3) β ln n2`.
pub fn duplicate_count_report(n1: usize, n2: usize, m: usize, beta: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let db = duplicate_bound(n2, beta)?;
    let exceed = monte_carlo_count(trials, |t| {
        let obs = sample_with_replacement(n1, n2, m, derive_seed(seed, t))?;
        Ok(max_multiplicity(&obs) as f64 >= db.bound)
    })?;
    Ok(BoundReport::new(
        "duplicate_count",
        format!("n1={n1};n2={n2};m={m};beta={beta}"),
        db.failure_probability,
        db.bound,
        exceed,
        trials,
    ))
}

/// Near isometry of `P_T R_Ω P_T` at `m = ⌈(16/3) μ0 r (n1+n2) β ln n2⌉ + 1`.
pub fn near_isometry_report(f: &LowRankFactorization, beta: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let (n1, n2, r) = (f.n1(), f.n2(), f.rank());
    let mu0 = coherence_profile(f).mu0;
    let m = near_isometry_min_m(n1, n2, r, mu0, beta).ceil() as usize + 1;
    let threshold = near_isometry_bound(n1, n2, r, mu0, beta, m);
    let ts = f.tangent_space();
    let exceed = monte_carlo_count(trials, |t| {
        let obs = sample_with_replacement(n1, n2, m, derive_seed(seed, t))?;
        Ok(superop_deviation_norm(&ts, &obs)? > threshold)
    })?;
    let tail = 2.0 * (n2 as f64).powf(2.0 - 2.0 * beta);
    Ok(BoundReport::new(
        "near_isometry",
        format!("n1={n1};n2={n2};r={r};mu0={mu0:.6};beta={beta};m={m}"),
        tail,
        threshold,
        exceed,
        trials,
    ))
}

/// Spectral deviation of `(n1n2/m) R_Ω(Z) − Z` for the fixed `Z = UVᵀ`.
pub fn inf_norm_report(f: &LowRankFactorization, beta: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let (n1, n2) = (f.n1(), f.n2());
    let z = f.uv_t();
    let m = inf_norm_min_m(n1, n2, beta).floor() as usize + 1;
    let threshold = inf_norm_bound_coeff(n1, n2, beta, m) * linalg::inf_norm(&z);
    let exceed = monte_carlo_count(trials, |t| {
        let obs = sample_with_replacement(n1, n2, m, derive_seed(seed, t))?;
        Ok(inf_norm_deviation(&obs, &z)? > threshold)
    })?;
    let tail = ((n1 + n2) as f64).powf(1.0 - beta);
    Ok(BoundReport::new(
        "inf_norm_deviation",
        format!("n1={n1};n2={n2};beta={beta};m={m}"),
        tail,
        threshold,
        exceed,
        trials,
    ))
}

/// Entrywise contraction of `(n1n2/m) P_T R_Ω` on `Z = UVᵀ ∈ T`. The lemma
/// is stated for `β > 2`; smaller values are rejected.
pub fn norm_contraction_report(f: &LowRankFactorization, beta: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    if !(beta > 2.0) {
        return Err(Error::PreconditionViolation(format!(
            "norm contraction needs beta > 2, got {beta}"
        )));
    }
    let (n1, n2, r) = (f.n1(), f.n2(), f.rank());
    let mu0 = coherence_profile(f).mu0;
    let ts = f.tangent_space();
    let z = f.uv_t();
    let m = norm_contraction_min_m(n1, n2, r, mu0, beta).floor() as usize + 1;
    let threshold = norm_contraction_coeff(n1, n2, r, mu0, beta, m) * linalg::inf_norm(&z);
    let exceed = monte_carlo_count(trials, |t| {
        let obs = sample_with_replacement(n1, n2, m, derive_seed(seed, t))?;
        Ok(pt_romega_inf_deviation(&ts, &obs, &z)? > threshold)
    })?;
    let tail = 2.0 * (n2 as f64).powf(2.0 - beta);
    Ok(BoundReport::new(
        "norm_contraction",
        format!("n1={n1};n2={n2};r={r};mu0={mu0:.6};beta={beta};m={m}"),
        tail,
        threshold,
        exceed,
        trials,
    ))
}

/// Operator Markov inequality `P[X ⋠ A] <= Tr(E[X] A⁻¹)` with `E[X]` replaced
/// by the empirical mean. `ensemble` must produce PSD samples.
pub fn operator_markov_check<E>(ensemble: E, a: &Matrix, trials: usize, seed: u64) -> Result<BoundReport>
where
    E: Fn(&mut StreamRng) -> Matrix + Sync,
{
    let d = linalg::ensure_square(a, "A")?;
    linalg::ensure_symmetric(a, "A", 1e-10)?;
    let a_eigs = linalg::sym_eigenvalues(a);
    if a_eigs.first().is_none_or(|&l| l <= 0.0) {
        return Err(Error::invalid("A must be positive definite"));
    }
    let a_inv = linalg::sym_function(a, |l| 1.0 / l);
    let samples: Vec<Result<(Matrix, bool)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(derive_seed(seed, t), streams::ENSEMBLE);
            let x = ensemble(&mut rng);
            if x.shape() != (d, d) {
                return Err(Error::EnsembleContract {
                    bound: "operator_markov".into(),
                    message: format!("sample has shape {:?}, expected {d}x{d}", x.shape()),
                });
            }
            let lmin = linalg::sym_eigenvalues(&x)[0];
            if lmin < PSD_EVENT_TOL * x.norm().max(1.0) || linalg::symmetry_residual(&x) > 1e-10 {
                return Err(Error::EnsembleContract {
                    bound: "operator_markov".into(),
                    message: format!("sample is not PSD (λ_min = {lmin:.3e})"),
                });
            }
            let exceeds = linalg::sym_eigenvalues(&(a - &x))[0] < PSD_EVENT_TOL;
            Ok((x, exceeds))
        })
        .collect();
    let mut mean = Matrix::zeros(d, d);
    let mut exceed = 0;
    for s in samples {
        let (x, e) = s?;
        mean += x;
        exceed += usize::from(e);
    }
    if trials > 0 {
        mean /= trials as f64;
    }
    let bound = (mean * a_inv).trace();
    Ok(BoundReport::new(
        "operator_markov",
        format!("d={d};trials={trials}"),
        bound,
        bound,
        exceed,
        trials,
    ))
}

fn random_symmetric(d: usize, rng: &mut StreamRng) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| 2.0 * rng::next_unit(rng) - 1.0);
    (&g + g.transpose()) * 0.5
}

/// Golden–Thompson on random symmetric pairs; every violation counts.
pub fn golden_thompson_report(d: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    let exceed = monte_carlo_count(trials, |t| {
        let mut rng = stream_rng(derive_seed(seed, t), streams::ENSEMBLE);
        let a = random_symmetric(d, &mut rng) * 2.0;
        let b = random_symmetric(d, &mut rng) * 2.0;
        Ok(!golden_thompson_check(&a, &b)?.holds())
    })?;
    Ok(BoundReport::new(
        "golden_thompson",
        format!("d={d}"),
        0.0,
        0.0,
        exceed,
        trials,
    ))
}

/// Classical two-sided scalar Bernstein tail `2 exp(−τ² / (2(σ² + Mτ/3)))`.
pub fn scalar_bernstein(variance_sum: f64, m_bound: f64, tau: f64) -> f64 {
    2.0 * (-(tau * tau) / (2.0 * (variance_sum + m_bound * tau / 3.0))).exp()
}

/// Scalar reduction: `d1 = d2 = 1` against the classical formula over a
/// parameter grid, plus a Rademacher-sum Monte-Carlo tail.
pub fn bernstein_scalar_report(trials: usize, seed: u64) -> Result<BoundReport> {
    let mut residual = 0.0_f64;
    for i in 0..10 {
        for j in 0..10 {
            let var = 0.5 + i as f64 * 3.0;
            let tau = j as f64 * 2.5;
            let got = bernstein_tail_raw(1, 1, var, 1.5, tau)?;
            residual = residual.max((got - scalar_bernstein(var, 1.5, tau)).abs());
        }
    }
    let (len, tau) = (100usize, 25.0);
    let exceed = monte_carlo_count(trials, |t| {
        let mut rng = stream_rng(derive_seed(seed, t), streams::ENSEMBLE);
        let s: i64 = (0..len)
            .map(|_| if rng::next_unit(&mut rng) < 0.5 { 1 } else { -1 })
            .sum();
        Ok(s.unsigned_abs() as f64 > tau)
    })?;
    let raw = bernstein_tail_raw(1, 1, len as f64, 1.0, tau)?;
    let mut rep = BoundReport::new(
        "bernstein_scalar",
        format!("L={len};M=1;tau={tau}"),
        raw,
        tau,
        exceed,
        trials,
    );
    rep.formula_residual = Some(residual);
    Ok(rep)
}

/// Matrix Bernstein with `X_k = ε_k e_a e_bᵀ` (uniform cell, Rademacher sign)
/// in `d1 × d2`: `Σρ² = L / min(d1, d2)`, `M = 1`.
pub fn matrix_bernstein_report(d1: usize, d2: usize, len: usize, tau: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let rho_sq = len as f64 / d1.min(d2) as f64;
    let exceed = monte_carlo_count(trials, |t| {
        let mut rng = stream_rng(derive_seed(seed, t), streams::ENSEMBLE);
        let mut s = Matrix::zeros(d1, d2);
        for _ in 0..len {
            let a = rng::next_index(&mut rng, d1 as u64) as usize;
            let b = rng::next_index(&mut rng, d2 as u64) as usize;
            s[(a, b)] += if rng::next_unit(&mut rng) < 0.5 { 1.0 } else { -1.0 };
        }
        Ok(linalg::spectral_norm(&s) > tau)
    })?;
    Ok(BoundReport::new(
        "matrix_bernstein",
        format!("d1={d1};d2={d2};L={len};tau={tau}"),
        bernstein_tail_raw(d1, d2, rho_sq, 1.0, tau)?,
        tau,
        exceed,
        trials,
    ))
}

/// Noncommutative Chernoff bound for `X_k = ε_k H`, `A = t I`, `T = sqrt(λ) I`
/// with λ chosen from a grid to minimise the bound. The per-term factor is
/// the exact two-atom expectation of the matrix exponential.
pub fn chernoff_report(len: usize, level: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    let h = Matrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, -0.3]));
    let d = h.nrows();
    let atoms = [h.clone(), -&h];
    let a = Matrix::identity(d, d) * level;
    let mut best = f64::INFINITY;
    for i in 1..=200 {
        let lambda = i as f64 * 0.01;
        let t = Matrix::identity(d, d) * lambda.sqrt();
        let factor = expected_exp_norm(&atoms, &t, &a)?;
        best = best.min(chernoff_operator_bound(d, &vec![factor; len])?);
    }
    let exceed = monte_carlo_count(trials, |t| {
        let mut rng = stream_rng(derive_seed(seed, t), streams::ENSEMBLE);
        let s: f64 = (0..len)
            .map(|_| if rng::next_unit(&mut rng) < 0.5 { 1.0 } else { -1.0 })
            .sum();
        let sum = &h * s;
        let target = &a * len as f64;
        Ok(linalg::sym_eigenvalues(&(target - sum))[0] < PSD_EVENT_TOL)
    })?;
    Ok(BoundReport::new(
        "noncommutative_chernoff",
        format!("d={d};n={len};t={level}"),
        best,
        level * len as f64,
        exceed,
        trials,
    ))
}
