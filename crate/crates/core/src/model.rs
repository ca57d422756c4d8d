//! Ground-truth low-rank matrices, subspace coherence, and the tangent space
//! `T` of the rank-r variety at `M = U Σ Vᵀ`.
//!
//! Conventions: `n1 <= n2`, indices are 0-based, and the factor matrices
//! have orthonormal columns.

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, streams, StreamRng};

/// Orthonormality tolerance for factors (Frobenius, absolute).
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Idempotence residual above which a matrix is rejected as a projector.
pub const PROJECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LowRankFactorization {
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
}

impl LowRankFactorization {
    pub fn new(u: Matrix, s: Vec<f64>, v: Matrix) -> Result<Self> {
        let (n1, r) = u.shape();
        let (n2, rv) = v.shape();
        if r == 0 {
            return Err(Error::invalid("rank must be positive"));
        }
        if rv != r || s.len() != r {
            return Err(Error::invalid(format!(
                "inconsistent ranks: U has {r} columns, V has {rv}, S has {}",
                s.len()
            )));
        }
        if !(r <= n1 && n1 <= n2) {
            return Err(Error::invalid(format!(
                "need r <= n1 <= n2, got r={r}, n1={n1}, n2={n2}"
            )));
        }
        if s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::invalid("singular values must be positive and finite"));
        }
        if s.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("singular values must be nonincreasing"));
        }
        for (name, f) in [("U", &u), ("V", &v)] {
            let res = linalg::orthonormality_residual(f);
            if res > ORTHONORMAL_TOL {
                return Err(Error::invalid(format!(
                    "{name} columns not orthonormal (residual {res:.3e})"
                )));
            }
        }
        Ok(Self { u, s, v })
    }

    /// Rank-r truncated SVD of a dense matrix. The rank is supplied by the
    /// caller; nothing here tries to estimate it.
    pub fn from_matrix(m: &Matrix, r: usize) -> Result<Self> {
        let (n1, n2) = m.shape();
        if r == 0 || r > n1.min(n2) {
            return Err(Error::invalid(format!("rank {r} invalid for {n1}x{n2}")));
        }
        if n1 > n2 {
            return Err(Error::invalid(format!(
                "expected n1 <= n2 (transpose the input), got {n1}x{n2}"
            )));
        }
        let (u, s, v) = linalg::thin_svd(m);
        let u = u.columns(0, r).into_owned();
        let v = v.columns(0, r).into_owned();
        Self::new(u, s[..r].to_vec(), v)
    }

    pub fn n1(&self) -> usize {
        self.u.nrows()
    }
    pub fn n2(&self) -> usize {
        self.v.nrows()
    }
    pub fn rank(&self) -> usize {
        self.s.len()
    }
    pub fn u(&self) -> &Matrix {
        &self.u
    }
    pub fn v(&self) -> &Matrix {
        &self.v
    }
    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    /// `M = U Σ Vᵀ`.
    pub fn matrix(&self) -> Matrix {
        let sigma = Matrix::from_diagonal(&DVector::from_column_slice(&self.s));
        &self.u * sigma * self.v.transpose()
    }

    /// `U Vᵀ`, the sign pattern of `M` on `T`.
    pub fn uv_t(&self) -> Matrix {
        &self.u * self.v.transpose()
    }

    pub fn tangent_space(&self) -> TangentSpace {
        TangentSpace::from_factorization(self)
    }
}

/// The pair `(P_U, P_V)` defining `T`.
#[derive(Debug, Clone)]
pub struct TangentSpace {
    pu: Matrix,
    pv: Matrix,
    rank: usize,
}

impl TangentSpace {
    pub fn from_factorization(f: &LowRankFactorization) -> Self {
        Self {
            pu: f.u() * f.u().transpose(),
            pv: f.v() * f.v().transpose(),
            rank: f.rank(),
        }
    }

    pub fn from_projectors(pu: Matrix, pv: Matrix) -> Result<Self> {
        let ru = projector_rank(&pu)?;
        let rv = projector_rank(&pv)?;
        if ru != rv {
            return Err(Error::invalid(format!(
                "projector ranks differ: {ru} vs {rv}"
            )));
        }
        Ok(Self { pu, pv, rank: ru })
    }

    pub fn pu(&self) -> &Matrix {
        &self.pu
    }
    pub fn pv(&self) -> &Matrix {
        &self.pv
    }
    pub fn n1(&self) -> usize {
        self.pu.nrows()
    }
    pub fn n2(&self) -> usize {
        self.pv.nrows()
    }
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `P_T(Z) = P_U Z + Z P_V − P_U Z P_V`.
    pub fn project(&self, z: &Matrix) -> Result<Matrix> {
        linalg::ensure_shape(z, self.n1(), self.n2())?;
        Ok(self.project_unchecked(z))
    }

    pub(crate) fn project_unchecked(&self, z: &Matrix) -> Matrix {
        let pu_z = &self.pu * z;
        let z_pv = z * &self.pv;
        let pu_z_pv = &pu_z * &self.pv;
        pu_z + z_pv - pu_z_pv
    }

    /// `P_{T⊥}(Z) = (I − P_U) Z (I − P_V)`.
    pub fn project_perp(&self, z: &Matrix) -> Result<Matrix> {
        linalg::ensure_shape(z, self.n1(), self.n2())?;
        Ok(self.project_perp_unchecked(z))
    }

    pub(crate) fn project_perp_unchecked(&self, z: &Matrix) -> Matrix {
        let left = z - &self.pu * z;
        &left - &left * &self.pv
    }

    /// `‖P_T(e_a e_bᵀ)‖_F²` in closed form.
    pub fn basis_norm_sq(&self, a: usize, b: usize) -> Result<f64> {
        let (n1, n2) = (self.n1(), self.n2());
        if a >= n1 || b >= n2 {
            return Err(Error::IndexOutOfRange {
                row: a,
                col: b,
                n1,
                n2,
            });
        }
        // ‖P e_i‖² = P_ii for an orthogonal projector
        let xu = self.pu[(a, a)];
        let xv = self.pv[(b, b)];
        Ok(xu + xv - xu * xv)
    }

    /// Right-hand side of the tangent-space basis bound:
    /// `max{μ(U), μ(V)} r (n1+n2)/(n1 n2)`.
    pub fn basis_norm_bound(&self) -> Result<f64> {
        let mu0 = coherence(&self.pu)?.max(coherence(&self.pv)?);
        let (n1, n2) = (self.n1() as f64, self.n2() as f64);
        Ok(mu0 * self.rank as f64 * (n1 + n2) / (n1 * n2))
    }
}

/// Numerical rank of an orthogonal projector, validating idempotence.
fn projector_rank(p: &Matrix) -> Result<usize> {
    let n = linalg::ensure_square(p, "projector")?;
    if n == 0 {
        return Err(Error::invalid("projector has zero dimension"));
    }
    let idem = (p * p - p).norm();
    let sym = linalg::symmetry_residual(p);
    if idem > PROJECTOR_TOL || sym > PROJECTOR_TOL {
        return Err(Error::invalid(format!(
            "not an orthogonal projector (idempotence residual {idem:.3e}, symmetry residual {sym:.3e})"
        )));
    }
    let tr = p.trace();
    let r = tr.round();
    if r < 1.0 || (tr - r).abs() > PROJECTOR_TOL {
        return Err(Error::invalid(format!(
            "projector trace {tr} is not a positive integer"
        )));
    }
    Ok(r as usize)
}

/// Coherence `μ = (n/r) max_i ‖P e_i‖²` of the range of an orthogonal projector.
pub fn coherence(p: &Matrix) -> Result<f64> {
    let r = projector_rank(p)?;
    let n = p.nrows();
    let max_sq = p
        .column_iter()
        .map(|c| c.norm_squared())
        .fold(0.0_f64, f64::max);
    Ok(n as f64 / r as f64 * max_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub mu_u: f64,
    pub mu_v: f64,
    /// `max(μ(U), μ(V))`.
    pub mu0: f64,
    /// Tightest constant with `‖UVᵀ‖_∞ <= μ1 sqrt(r/(n1 n2))`.
    pub mu1: f64,
}

pub fn coherence_profile(f: &LowRankFactorization) -> CoherenceProfile {
    let ts = f.tangent_space();
    let mu_u = coherence(ts.pu()).expect("factorization yields a valid projector");
    let mu_v = coherence(ts.pv()).expect("factorization yields a valid projector");
    let (n1, n2, r) = (f.n1() as f64, f.n2() as f64, f.rank() as f64);
    let mu1 = linalg::inf_norm(&f.uv_t()) * (n1 * n2 / r).sqrt();
    CoherenceProfile {
        mu_u,
        mu_v,
        mu0: mu_u.max(mu_v),
        mu1,
    }
}

/// Test-instance families for [`make_random_low_rank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixModel {
    /// Orthonormalised Gaussian factors (uniform on the Grassmannian).
    Haar,
    /// Factors drawn from a sign-randomised cosine basis, entries bounded by
    /// `sqrt(2/n)`, so `μ0 <= 2`.
    BoundedEntry,
    /// Column space contains `e_1`, giving the maximal coherence `n1/r`.
    /// Not an incoherent model; used to exercise failure modes.
    Spiky,
}

impl std::str::FromStr for MatrixModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Self::Haar),
            "bounded-entry" => Ok(Self::BoundedEntry),
            "spiky" => Ok(Self::Spiky),
            other => Err(Error::invalid(format!("unknown matrix model '{other}'"))),
        }
    }
}

impl std::fmt::Display for MatrixModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Haar => "haar",
            Self::BoundedEntry => "bounded-entry",
            Self::Spiky => "spiky",
        })
    }
}

pub fn make_random_low_rank(
    n1: usize,
    n2: usize,
    r: usize,
    model: MatrixModel,
    seed: u64,
) -> Result<LowRankFactorization> {
    if !(1 <= r && r <= n1 && n1 <= n2) {
        return Err(Error::invalid(format!(
            "need 1 <= r <= n1 <= n2, got r={r}, n1={n1}, n2={n2}"
        )));
    }
    let mut rng = rng::stream_rng(seed, streams::INSTANCE);
    let (u, v) = match model {
        MatrixModel::Haar => (haar_factor(n1, r, &mut rng), haar_factor(n2, r, &mut rng)),
        MatrixModel::BoundedEntry => (
            cosine_factor(n1, r, &mut rng),
            cosine_factor(n2, r, &mut rng),
        ),
        MatrixModel::Spiky => (spiky_factor(n1, r, &mut rng), cosine_factor(n2, r, &mut rng)),
    };
    let mut s: Vec<f64> = (0..r).map(|_| 1.0 + rng::next_unit(&mut rng)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    LowRankFactorization::new(u, s, v)
}

fn gaussian(n: usize, r: usize, rng: &mut StreamRng) -> Matrix {
    Matrix::from_fn(n, r, |_, _| StandardNormal.sample(rng))
}

fn haar_factor(n: usize, r: usize, rng: &mut StreamRng) -> Matrix {
    linalg::orthonormalize(&gaussian(n, r, rng))
}

/// `r` distinct columns of the orthonormal DCT-II basis with random row signs
/// and a random row permutation.
fn cosine_factor(n: usize, r: usize, rng: &mut StreamRng) -> Matrix {
    let mut freqs: Vec<usize> = (0..n).collect();
    partial_shuffle(&mut freqs, r, rng);
    let mut rows: Vec<usize> = (0..n).collect();
    partial_shuffle(&mut rows, n, rng);
    let signs: Vec<f64> = (0..n)
        .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
        .collect();
    let nf = n as f64;
    Matrix::from_fn(n, r, |i, j| {
        let k = freqs[j];
        let t = rows[i] as f64;
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        signs[i] * scale * (std::f64::consts::PI * (t + 0.5) * k as f64 / nf).cos()
    })
}

fn spiky_factor(n: usize, r: usize, rng: &mut StreamRng) -> Matrix {
    let mut a = gaussian(n, r, rng);
    a.column_mut(0).fill(0.0);
    a[(0, 0)] = 1.0;
    for j in 1..r {
        a[(0, j)] = 0.0;
    }
    linalg::orthonormalize(&a)
}

fn partial_shuffle<T>(items: &mut [T], k: usize, rng: &mut StreamRng) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = i + rng::next_index(rng, (n - i) as u64) as usize;
        items.swap(i, j);
    }
}
