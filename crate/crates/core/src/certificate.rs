//! Approximate dual certificate by the golfing scheme.
//!
//! With `W_0 = UVᵀ`, block `j` of size `q_j` contributes
//! `(n1n2/q_j) R_{Ω_j}(W_{j−1})` to `Y`, and `W_j = UVᵀ − P_T(Y_j)`.
//! Unequal blocks are scaled by their own size so each step stays unbiased.
//!
//! Uniqueness of `M` as the nuclear-norm minimiser follows when, for every
//! nonzero `Z` with `R_Ω(Z) = 0`,
//! `(1 − ‖P_T⊥ Y‖)·‖P_T⊥ Z‖_F > ‖P_T Y − UVᵀ‖_F·‖P_T Z‖_F`. The big-set
//! conditions give `‖P_T⊥ Z‖_F ≥ c‖P_T Z‖_F` with
//! `c = sqrt((1 − δ) m/(n1n2)) / ‖R_Ω‖`, `δ` the measured isometry
//! deviation. [`optimality_check`] certifies only when the quasi-multiplier
//! verdicts, the big-set conditions and this margin all hold.

use serde::Serialize;

use crate::bounds::{superop_deviation_norm, TracePair};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{coherence_profile, LowRankFactorization, TangentSpace};
use crate::sampling::{self, max_multiplicity, ObservationSet, SamplingModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GolfingParameters {
    pub p: usize,
    pub q: usize,
    pub q_required: f64,
}

/// `⌈(3/4) ln(2 n2)⌉`.
pub fn golfing_blocks(n2: usize) -> usize {
    (0.75 * (2.0 * n2 as f64).ln()).ceil().max(1.0) as usize
}

/// `(128/3) max(μ0, μ1²) r (n1+n2) β ln(n1+n2)`.
pub fn golfing_q_required(n1: usize, n2: usize, r: usize, mu0: f64, mu1: f64, beta: f64) -> f64 {
    128.0 / 3.0 * mu0.max(mu1 * mu1) * (r * (n1 + n2)) as f64 * beta * ((n1 + n2) as f64).ln()
}

/// Smallest `m` for which [`golfing_parameters`] succeeds.
pub fn golfing_min_m(n1: usize, n2: usize, r: usize, mu0: f64, mu1: f64, beta: f64) -> u64 {
    golfing_blocks(n2) as u64 * golfing_q_required(n1, n2, r, mu0, mu1, beta).ceil() as u64
}

pub fn golfing_parameters(
    n1: usize,
    n2: usize,
    r: usize,
    mu0: f64,
    mu1: f64,
    beta: f64,
    m: usize,
) -> Result<GolfingParameters> {
    if !(beta > 1.0) {
        return Err(Error::invalid(format!("beta must exceed 1, got {beta}")));
    }
    if n1 == 0 || n2 == 0 || r == 0 {
        return Err(Error::invalid("dimensions and rank must be positive"));
    }
    let p = golfing_blocks(n2);
    let q = m / p;
    let q_required = golfing_q_required(n1, n2, r, mu0, mu1, beta);
    if (q as f64) < q_required {
        return Err(Error::InsufficientSamples {
            q,
            q_required,
            minimal_m: golfing_min_m(n1, n2, r, mu0, mu1, beta),
        });
    }
    Ok(GolfingParameters { p, q, q_required })
}

#[derive(Debug, Clone)]
pub struct CertificateTrace {
    pub p: usize,
    pub q_list: Vec<usize>,
    /// `‖W_k‖_F` for `k = 0..=p`.
    pub w_fro: Vec<f64>,
    /// `‖W_k‖_∞` for `k = 0..=p`.
    pub w_inf: Vec<f64>,
    /// Superoperator deviation of each block.
    pub per_step_isometry: Vec<f64>,
    /// `‖((n1n2/q_j) R_{Ω_j} − I)(W_{j−1})‖` for each block.
    pub step_terms: Vec<f64>,
    /// `P_T⊥(W_k)` Frobenius residuals, `k = 0..=p`.
    pub w_perp: Vec<f64>,
    pub y: Matrix,
    /// `‖P_T(Y) − UVᵀ‖_F`.
    pub fro_residual: f64,
    /// `‖P_T⊥(Y)‖`.
    pub perp_norm: f64,
    pub verdict_fro: bool,
    pub verdict_perp: bool,
}

impl CertificateTrace {
    /// `‖W_k‖_F ≤ ½‖W_{k−1}‖_F + 1e-9` at every step whose block deviation is
    /// at most ½.
    pub fn contraction_holds(&self) -> bool {
        (1..=self.p).all(|k| {
            self.per_step_isometry[k - 1] > 0.5 || self.w_fro[k] <= 0.5 * self.w_fro[k - 1] + 1e-9
        })
    }

    /// `‖W_k‖_F ≤ 2^{−k} ‖W_0‖_F` for all `k`.
    pub fn halving_holds(&self) -> bool {
        (0..=self.p).all(|k| self.w_fro[k] <= self.w_fro[0] * 0.5f64.powi(k as i32))
    }

    /// `‖P_T⊥(Y_p)‖ ≤ Σ_j ‖((n1n2/q_j) R_{Ω_j} − I)(W_{j−1})‖`.
    pub fn telescoping_audit(&self) -> TracePair {
        TracePair {
            lhs: self.perp_norm,
            rhs: self.step_terms.iter().sum(),
        }
    }

    /// [`Self::telescoping_audit`] up to `1e-9 · max(1, rhs)`.
    pub fn telescoping_holds(&self) -> bool {
        let t = self.telescoping_audit();
        t.lhs <= t.rhs + 1e-9 * t.rhs.max(1.0)
    }
}

pub fn build_certificate(f: &LowRankFactorization, partitions: &[ObservationSet]) -> Result<CertificateTrace> {
    if partitions.is_empty() {
        return Err(Error::invalid("no partitions"));
    }
    let (n1, n2) = (f.n1(), f.n2());
    let ts = f.tangent_space();
    let uv = f.uv_t();
    let mut w = uv.clone();
    let mut y = Matrix::zeros(n1, n2);
    let p = partitions.len();
    let mut trace = CertificateTrace {
        p,
        q_list: Vec::with_capacity(p),
        w_fro: vec![w.norm()],
        w_inf: vec![linalg::inf_norm(&w)],
        per_step_isometry: Vec::with_capacity(p),
        step_terms: Vec::with_capacity(p),
        w_perp: vec![ts.project_perp_unchecked(&w).norm()],
        y: Matrix::zeros(0, 0),
        fro_residual: 0.0,
        perp_norm: 0.0,
        verdict_fro: false,
        verdict_perp: false,
    };
    for (j, block) in partitions.iter().enumerate() {
        if (block.n1(), block.n2()) != (n1, n2) {
            return Err(Error::DimensionMismatch {
                expected: (n1, n2),
                got: (block.n1(), block.n2()),
            });
        }
        let q = block.m();
        if q == 0 {
            return Err(Error::invalid(format!("partition {j} is empty")));
        }
        let step = sampling::apply_r_omega_unchecked(block, &w) * ((n1 * n2) as f64 / q as f64);
        trace.step_terms.push(linalg::spectral_norm(&(&step - &w)));
        trace.per_step_isometry.push(superop_deviation_norm(&ts, block)?);
        y += step;
        w = &uv - ts.project_unchecked(&y);
        trace.q_list.push(q);
        trace.w_fro.push(w.norm());
        trace.w_inf.push(linalg::inf_norm(&w));
        trace.w_perp.push(ts.project_perp_unchecked(&w).norm());
    }
    trace.fro_residual = *trace.w_fro.last().expect("p >= 1");
    trace.perp_norm = linalg::spectral_norm(&ts.project_perp_unchecked(&y));
    trace.verdict_fro = trace.fro_residual <= (f.rank() as f64 / (2.0 * n2 as f64)).sqrt();
    trace.verdict_perp = trace.perp_norm < 0.5;
    trace.y = y;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BigSetReport {
    pub deviation: f64,
    pub romega_norm: f64,
    /// `(8/3) β^{1/2} ln n2`.
    pub romega_bound: f64,
    pub ok: bool,
}

pub fn verify_big_set_conditions(ts: &TangentSpace, obs: &ObservationSet, beta: f64) -> Result<BigSetReport> {
    let deviation = superop_deviation_norm(ts, obs)?;
    let romega_norm = max_multiplicity(obs) as f64;
    let romega_bound = 8.0 / 3.0 * beta.sqrt() * (ts.n2() as f64).ln();
    Ok(BigSetReport {
        deviation,
        romega_norm,
        romega_bound,
        ok: deviation <= 0.5 && romega_norm <= romega_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `‖P_T⊥ Z‖_F ≥ sqrt(9m/(128 β n1n2 ln² n2)) ‖P_T Z‖_F` for `Z` in the
/// kernel of `R_Ω`.
pub fn kernel_inequality_check(ts: &TangentSpace, obs: &ObservationSet, z: &Matrix, beta: f64) -> Result<KernelCheck> {
    let rz = sampling::apply_r_omega(obs, z)?;
    linalg::ensure_shape(z, ts.n1(), ts.n2())?;
    if rz.norm() > 1e-10 * z.norm() {
        return Err(Error::invalid("Z is not in the kernel of R_Ω"));
    }
    let (n1, n2) = (ts.n1() as f64, ts.n2() as f64);
    let c = (9.0 * obs.m() as f64 / (128.0 * beta * n1 * n2 * n2.ln().powi(2))).sqrt();
    let lhs = ts.project_perp_unchecked(z).norm();
    let rhs = c * ts.project_unchecked(z).norm();
    Ok(KernelCheck { lhs, rhs, ok: lhs >= rhs })
}

/// Measured uniqueness margin `(1 − ‖P_T⊥ Y‖)·c − ‖P_T Y − UVᵀ‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMargin {
    /// Lower bound on `‖P_T⊥ Z‖_F / ‖P_T Z‖_F` over the kernel.
    pub c: f64,
    pub margin: f64,
    pub ok: bool,
}

pub fn kernel_margin(obs: &ObservationSet, big_set: &BigSetReport, trace: &CertificateTrace) -> KernelMargin {
    let density = obs.m() as f64 / (obs.n1() * obs.n2()) as f64;
    let c = if big_set.deviation < 1.0 && big_set.romega_norm > 0.0 {
        ((1.0 - big_set.deviation) * density).sqrt() / big_set.romega_norm
    } else {
        0.0
    };
    let margin = (1.0 - trace.perp_norm) * c - trace.fro_residual;
    KernelMargin {
        c,
        margin,
        ok: margin > 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityVerdict {
    pub verdict_fro: bool,
    pub verdict_perp: bool,
    pub big_set: BigSetReport,
    pub kernel_margin: KernelMargin,
    pub certified: bool,
}

pub fn optimality_check(
    f: &LowRankFactorization,
    obs: &ObservationSet,
    trace: &CertificateTrace,
    beta: f64,
) -> Result<OptimalityVerdict> {
    let big_set = verify_big_set_conditions(&f.tangent_space(), obs, beta)?;
    let margin = kernel_margin(obs, &big_set, trace);
    Ok(OptimalityVerdict {
        verdict_fro: trace.verdict_fro,
        verdict_perp: trace.verdict_perp,
        big_set,
        kernel_margin: margin,
        certified: trace.verdict_fro && trace.verdict_perp && big_set.ok && margin.ok,
    })
}

/// Golfing blocks for `obs`: `⌈(3/4) ln(2 n2)⌉` consecutive slices of its
/// draw sequence, capped at `m`.
pub fn golfing_partition(obs: &ObservationSet) -> Result<Vec<ObservationSet>> {
    let p = golfing_blocks(obs.n2()).min(obs.m());
    if obs.model() == SamplingModel::WithReplace {
        return sampling::partition(obs, p);
    }
    let as_draws = ObservationSet::from_draws(
        obs.n1(),
        obs.n2(),
        SamplingModel::WithReplace,
        obs.seed(),
        obs.draws().to_vec(),
    )?;
    sampling::partition(&as_draws, p)
}

/// Partition, build and check in one go.
pub fn certify(f: &LowRankFactorization, obs: &ObservationSet, beta: f64) -> Result<(CertificateTrace, OptimalityVerdict)> {
    let blocks = golfing_partition(obs)?;
    let trace = build_certificate(f, &blocks)?;
    let verdict = optimality_check(f, obs, &trace, beta)?;
    Ok((trace, verdict))
}

/// Golfing parameters from the instance's own coherence.
pub fn golfing_parameters_for(f: &LowRankFactorization, beta: f64, m: usize) -> Result<GolfingParameters> {
    let c = coherence_profile(f);
    golfing_parameters(f.n1(), f.n2(), f.rank(), c.mu0, c.mu1, beta, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_random_low_rank, MatrixModel};

    fn full_coverage(n1: usize, n2: usize) -> ObservationSet {
        let draws = (0..n1 as u32).flat_map(|a| (0..n2 as u32).map(move |b| (a, b))).collect();
        ObservationSet::from_draws(n1, n2, SamplingModel::WithReplace, 0, draws).unwrap()
    }

    #[test]
    fn block_count() {
        assert_eq!(golfing_blocks(40), 4);
        assert_eq!(golfing_blocks(1), 1);
    }

    #[test]
    fn insufficient_samples_reports_minimum() {
        let q_req = golfing_q_required(10, 10, 1, 1.0, 1.0, 2.0);
        let expected = 128.0 / 3.0 * 20.0 * 2.0 * 20f64.ln();
        assert!((q_req - expected).abs() < 1e-9);
        match golfing_parameters(10, 10, 1, 1.0, 1.0, 2.0, 100) {
            Err(Error::InsufficientSamples { q, minimal_m, .. }) => {
                assert_eq!(q, 100 / golfing_blocks(10));
                assert_eq!(minimal_m, golfing_blocks(10) as u64 * q_req.ceil() as u64);
                let ok = golfing_parameters(10, 10, 1, 1.0, 1.0, 2.0, minimal_m as usize).unwrap();
                assert!(ok.q as f64 >= ok.q_required);
            }
            other => panic!("{other:?}"),
        }
        assert!(golfing_parameters(10, 10, 1, 1.0, 1.0, 1.0, 10_000_000).is_err());
    }

    #[test]
    fn full_coverage_is_exact() {
        let f = make_random_low_rank(6, 8, 2, MatrixModel::Haar, 3).unwrap();
        let obs = full_coverage(6, 8);
        let trace = build_certificate(&f, std::slice::from_ref(&obs)).unwrap();
        assert!((trace.w_fro[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!(trace.w_fro[1] < 1e-12);
        assert!(trace.verdict_fro && trace.verdict_perp);
        let v = optimality_check(&f, &obs, &trace, 2.0).unwrap();
        assert!(v.big_set.ok);
        assert_eq!(v.big_set.romega_norm, 1.0);
        assert!(v.certified);
        assert!(trace.telescoping_holds());
    }

    #[test]
    fn degenerate_set_fails_big_set() {
        let f = make_random_low_rank(5, 5, 1, MatrixModel::Haar, 1).unwrap();
        let obs = ObservationSet::from_draws(5, 5, SamplingModel::WithReplace, 0, vec![(0, 0); 50]).unwrap();
        let rep = verify_big_set_conditions(&f.tangent_space(), &obs, 2.0).unwrap();
        assert_eq!(rep.romega_norm, 50.0);
        assert!(!rep.ok);
    }

    #[test]
    fn kernel_check_edges() {
        let f = make_random_low_rank(5, 5, 1, MatrixModel::Haar, 1).unwrap();
        let ts = f.tangent_space();
        let obs = crate::sampling::sample_with_replacement(5, 5, 10, 2).unwrap();
        let zero = Matrix::zeros(5, 5);
        let k = kernel_inequality_check(&ts, &obs, &zero, 2.0).unwrap();
        assert_eq!((k.lhs, k.rhs, k.ok), (0.0, 0.0, true));
        assert!(kernel_inequality_check(&ts, &obs, &Matrix::from_element(5, 5, 1.0), 2.0).is_err());
    }

    #[test]
    fn empty_partition_rejected() {
        let f = make_random_low_rank(4, 4, 1, MatrixModel::Haar, 1).unwrap();
        assert!(build_certificate(&f, &[]).is_err());
    }
}
