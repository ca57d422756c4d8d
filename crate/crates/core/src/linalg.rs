//! Dense kernels shared by every module: norms, SVD wrappers, symmetric
//! eigendecomposition, matrix exponentials, and a Lanczos estimator for the
//! spectral norm of self-adjoint operators acting on matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Largest absolute entry.
pub fn inf_norm(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn nuclear_norm(a: &Matrix) -> f64 {
    singular_values(a).iter().sum()
}

/// Thin SVD `(U, s, V)` with `a = U diag(s) Vᵀ`, sorted nonincreasing.
pub fn thin_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Matrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = Matrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (u, s, v)
}

pub fn symmetry_residual(a: &Matrix) -> f64 {
    (a - a.transpose()).norm()
}

pub fn ensure_square(a: &Matrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn ensure_symmetric(a: &Matrix, what: &str, tol: f64) -> Result<()> {
    ensure_square(a, what)?;
    let res = symmetry_residual(a);
    if res > tol {
        return Err(Error::invalid(format!(
            "{what} is not symmetric (residual {res:.3e})"
        )));
    }
    Ok(())
}

pub fn ensure_shape(a: &Matrix, n1: usize, n2: usize) -> Result<()> {
    if a.shape() != (n1, n2) {
        return Err(Error::DimensionMismatch {
            expected: (n1, n2),
            got: a.shape(),
        });
    }
    Ok(())
}

/// Eigendecomposition of the symmetric part of `a`, eigenvalues ascending.
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Matrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    sym_eigen(a).0
}

/// Apply a scalar function spectrally: `Q f(Λ) Qᵀ`.
pub fn sym_function(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let (vals, q) = sym_eigen(a);
    let mut scaled = q.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let fl = f(lam);
        scaled.column_mut(j).scale_mut(fl);
    }
    scaled * q.transpose()
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_expm(a: &Matrix) -> Matrix {
    sym_function(a, f64::exp)
}

/// Orthonormal basis for the column span of a full-column-rank matrix.
pub fn orthonormalize(a: &Matrix) -> Matrix {
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    // fix signs so the factor is unique
    let mut q = q;
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Frobenius distance of `qᵀq` from the identity.
pub fn orthonormality_residual(q: &Matrix) -> f64 {
    (q.transpose() * q - Matrix::identity(q.ncols(), q.ncols())).norm()
}

/// Result of a Lanczos run.
#[derive(Debug, Clone, Copy)]
pub struct OperatorNorm {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Spectral norm (largest |eigenvalue|) of a self-adjoint linear operator on
/// matrices, computed matrix-free by Lanczos with full reorthogonalisation.
///
/// `apply` must be self-adjoint with respect to the trace inner product on
/// the subspace containing `start`. Convergence is declared once the Ritz
/// residual `β_k |s_k|` of the extreme Ritz pair drops below
/// `tol · max(1, |θ|)`, or when the Krylov space becomes invariant.
pub fn lanczos_operator_norm<F>(
    mut apply: F,
    start: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<OperatorNorm>
where
    F: FnMut(&Matrix) -> Matrix,
{
    let dim = start.len();
    let start_norm = start.norm();
    if start_norm == 0.0 || dim == 0 {
        return Ok(OperatorNorm {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut basis: Vec<Matrix> = vec![start / start_norm];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale = 0.0_f64;
    let mut last = 0.0;

    for k in 0..max_iter {
        let qk = &basis[k];
        let mut w = apply(qk);
        let alpha = w.dot(qk);
        scale = scale.max(w.norm());
        w -= qk * alpha;
        if k > 0 {
            w -= &basis[k - 1] * betas[k - 1];
        }
        for _ in 0..2 {
            for q in &basis {
                let c = w.dot(q);
                w -= q * c;
            }
        }
        let beta = w.norm();
        alphas.push(alpha);

        let invariant = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) || basis.len() >= dim;
        let check = invariant || (k + 1) % 4 == 0 || k + 1 == max_iter;
        if check {
            let (theta, residual) = extreme_ritz(&alphas, &betas, beta);
            last = theta;
            if scale == 0.0 {
                return Ok(OperatorNorm {
                    value: 0.0,
                    iterations: k + 1,
                    residual: 0.0,
                });
            }
            if invariant || residual <= tol * theta.max(1.0) {
                return Ok(OperatorNorm {
                    value: theta,
                    iterations: k + 1,
                    residual: if invariant { 0.0 } else { residual },
                });
            }
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    Err(Error::NumericFailure {
        message: format!("Lanczos did not converge within {max_iter} iterations"),
        last_value: last,
    })
}

/// Largest |Ritz value| of the tridiagonal `(alphas, betas)` and its residual.
fn extreme_ritz(alphas: &[f64], betas: &[f64], beta_next: f64) -> (f64, f64) {
    let k = alphas.len();
    let t = Matrix::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (idx, theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let residual = beta_next * eig.eigenvectors[(k - 1, idx)].abs();
    (theta, residual)
}
