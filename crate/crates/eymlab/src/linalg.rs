//! Krylov solvers on flat coefficient vectors with a caller-supplied inner
//! product.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{EymError, Result};

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub relative_residual: f64,
    pub converged: bool,
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

/// Conjugate gradients for `A x = b` with `A` self-adjoint and positive
/// semi-definite in `inner`. Consistent singular systems converge to the
/// solution closest to the initial guess `0`.
pub fn conjugate_gradient<A, I>(apply: A, inner: I, b: &[f64], tol: f64, max_iter: usize) -> CgOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let b_norm = inner(b, b).max(0.0).sqrt();
    if b_norm == 0.0 {
        return CgOutcome { solution: x, iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    let mut it = 0;
    while it < max_iter {
        if rr.max(0.0).sqrt() <= tol * b_norm {
            break;
        }
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = inner(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        it += 1;
    }
    let rel = rr.max(0.0).sqrt() / b_norm;
    CgOutcome { solution: x, iterations: it, relative_residual: rel, converged: rel <= tol }
}

/// Lowest eigenpairs from a Rayleigh-Ritz projection.
#[derive(Clone, Debug)]
pub struct EigenOutcome {
    /// Ascending Ritz values.
    pub values: Vec<f64>,
    /// Matching Ritz vectors, orthonormal in the supplied inner product.
    pub vectors: Vec<Vec<f64>>,
    /// `||A v - lambda v||` for each returned pair.
    pub residuals: Vec<f64>,
    pub subspace_dim: usize,
}

/// Options for [`block_lanczos`].
#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub block_size: usize,
    /// Largest Krylov subspace built (clamped to the problem size).
    pub max_dim: usize,
}

/// Block Lanczos with full reorthogonalization. The Krylov basis is grown one
/// block at a time from `block_size` random vectors; the projected operator is
/// diagonalized densely. When the basis becomes invariant before `max_dim`
/// fresh random vectors continue the build, so repeated eigenvalues are
/// resolved once the subspace covers them.
pub fn block_lanczos<A, I, R>(
    apply: A,
    inner: I,
    len: usize,
    k: usize,
    opts: LanczosOptions,
    rng: &mut R,
) -> Result<EigenOutcome>
where
    A: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
    R: Rng,
{
    if k == 0 || len == 0 {
        return Err(EymError::Precondition("eigensolver needs k >= 1 and a nonempty space".into()));
    }
    let max_dim = opts.max_dim.clamp(k.min(len), len);
    let block = opts.block_size.max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_dim);
    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| random_vector(len, rng)).collect();
    let mut stalls = 0;
    while basis.len() < max_dim {
        let mut next = Vec::new();
        let mut added = 0;
        for mut v in pending.drain(..) {
            if basis.len() >= max_dim {
                break;
            }
            let norm_before = inner(&v, &v).max(0.0).sqrt();
            for _ in 0..2 {
                for q in &basis {
                    let c = inner(q, &v);
                    axpy(&mut v, -c, q);
                }
            }
            let norm = inner(&v, &v).max(0.0).sqrt();
            if norm_before == 0.0 || norm <= 1e-10 * norm_before {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let av = apply(&v);
            next.push(av.clone());
            basis.push(v);
            images.push(av);
            added += 1;
        }
        if added == 0 {
            stalls += 1;
            if stalls > 8 {
                break;
            }
            pending = (0..block).map(|_| random_vector(len, rng)).collect();
        } else {
            stalls = 0;
            pending = next;
        }
    }
    let m = basis.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = 0.5 * (inner(&basis[i], &images[j]) + inner(&images[i], &basis[j]));
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let take = k.min(m);
    let mut values = Vec::with_capacity(take);
    let mut vectors = Vec::with_capacity(take);
    let mut residuals = Vec::with_capacity(take);
    for &idx in order.iter().take(take) {
        let lambda = eig.eigenvalues[idx];
        let mut x = vec![0.0; len];
        let mut ax = vec![0.0; len];
        for j in 0..m {
            let c = eig.eigenvectors[(j, idx)];
            axpy(&mut x, c, &basis[j]);
            axpy(&mut ax, c, &images[j]);
        }
        axpy(&mut ax, -lambda, &x);
        residuals.push(inner(&ax, &ax).max(0.0).sqrt());
        values.push(lambda);
        vectors.push(x);
    }
    Ok(EigenOutcome { values, vectors, residuals, subspace_dim: m })
}

fn random_vector<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// All eigenvalues of an operator self-adjoint in `inner`, by assembling its
/// matrix on the coordinate basis and reducing the generalized problem
/// `K x = lambda G x` with a Cholesky factor of the Gram matrix `G`.
pub fn dense_spectrum<A, I>(apply: A, inner: I, len: usize) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let unit = |i: usize| {
        let mut e = vec![0.0; len];
        e[i] = 1.0;
        e
    };
    let columns: Vec<Vec<f64>> = (0..len).map(|j| apply(&unit(j))).collect();
    let mut gram = DMatrix::<f64>::zeros(len, len);
    let mut k = DMatrix::<f64>::zeros(len, len);
    for i in 0..len {
        let ei = unit(i);
        for j in 0..len {
            gram[(i, j)] = inner(&ei, &unit(j));
            k[(i, j)] = inner(&ei, &columns[j]);
        }
    }
    let k = (&k + k.transpose()) * 0.5;
    let chol = gram
        .cholesky()
        .ok_or_else(|| EymError::Precondition("Gram matrix of the inner product is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| EymError::Precondition("singular Cholesky factor".into()))?;
    let reduced = &l_inv * k * l_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let mut values: Vec<f64> = SymmetricEigen::new(reduced).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Kernel count from ascending eigenvalues: entries at or below
/// `rel * max(lambda_last, abs)`, with a gap ratio of the first value above the
/// cut to the last one at or below it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelCount {
    pub dim: usize,
    pub gap_ratio: f64,
    pub ambiguous: bool,
}

pub fn kernel_count(values: &[f64], rel: f64, abs: f64, min_gap: f64) -> KernelCount {
    let Some(&largest) = values.last() else {
        return KernelCount { dim: 0, gap_ratio: f64::INFINITY, ambiguous: true };
    };
    let cut = rel * largest.max(abs);
    let dim = values.iter().take_while(|&&v| v <= cut).count();
    let gap_ratio = match (dim, values.get(dim)) {
        (_, None) => f64::INFINITY,
        (0, Some(_)) => f64::INFINITY,
        (m, Some(&above)) => {
            let below = values[m - 1].max(0.0);
            if below == 0.0 {
                f64::INFINITY
            } else {
                above / below
            }
        }
    };
    // With no computed value above the cut the count is only a lower bound.
    let ambiguous = gap_ratio < min_gap || (dim == values.len());
    KernelCount { dim, gap_ratio, ambiguous }
}
