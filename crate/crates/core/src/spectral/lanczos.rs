//! Lowest eigenvalues of large symmetric operators.
//!
//! Thick-restart Lanczos with an explicitly accumulated projection matrix
//! and two passes of full Gram-Schmidt per step. Convergence is declared
//! only after the residual of every wanted Ritz pair is recomputed from the
//! operator itself.

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Symmetric real operator acting on dense vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

const MAX_RESTARTS: usize = 2000;
const PARALLEL_DIM: usize = 1 << 14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PARALLEL_DIM {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() >= PARALLEL_DIM {
        y.par_iter_mut().zip(x).for_each(|(v, u)| *v += alpha * u);
    } else {
        y.iter_mut().zip(x).for_each(|(v, u)| *v += alpha * u);
    }
}

fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Deterministic, roughly uniform entries in `[-0.5, 0.5)`; `attempt` 0 is
/// the documented start vector `frac((i + 1) * 0.618...) - 0.5`.
fn probe_vector(dim: usize, attempt: u64) -> Vec<f64> {
    if attempt == 0 {
        const GOLDEN: f64 = 0.618_033_988_749_894_8;
        return (0..dim).map(|i| ((i as f64 + 1.0) * GOLDEN).fract() - 0.5).collect();
    }
    (0..dim as u64)
        .map(|i| {
            let mut z = i.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Orthogonalizes `w` against `basis` twice; returns the summed coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let d = dot(v, w);
            *c += d;
            axpy(-d, v, w);
        }
    }
    coeffs
}

fn sorted_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = m.self_adjoint_eigen(Side::Lower).map_err(eigen_failure)?;
    let values = (0..m.nrows()).map(|i| eig.S()[i]).collect();
    Ok((values, eig.U().to_owned()))
}

fn eigen_failure(e: faer::linalg::evd::EvdError) -> Error {
    Error::InvalidInput(format!("dense eigensolver failed: {e:?}"))
}

/// Materializes the operator column by column.
pub fn to_dense<Op: LinearOperator + ?Sized>(op: &Op) -> Mat<f64> {
    let n = op.dim();
    let mut m = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for (i, &v) in col.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// All eigenvalues of the operator, ascending, by dense diagonalization.
pub fn dense_eigenvalues<Op: LinearOperator + ?Sized>(op: &Op) -> Result<Vec<f64>> {
    to_dense(op).self_adjoint_eigenvalues(Side::Lower).map_err(eigen_failure)
}

/// The `count` lowest eigenvalues, ascending. `tol` bounds the relative
/// residual `|H y - theta y| / max(1, |theta|)` of every returned pair.
pub fn lowest_eigenvalues<Op: LinearOperator + ?Sized>(op: &Op, count: usize, tol: f64) -> Result<Vec<f64>> {
    lowest_eigenvalues_with_basis(op, count, tol, 2 * count + 30)
}

/// As `lowest_eigenvalues` with an explicit Krylov basis size.
pub fn lowest_eigenvalues_with_basis<Op: LinearOperator + ?Sized>(
    op: &Op,
    count: usize,
    tol: f64,
    basis_size: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    let want = count.min(n);
    if want == 0 {
        return Ok(Vec::new());
    }
    let m = basis_size.max(want + 4).min(n);
    if m >= n || n <= 64 {
        return Ok(dense_eigenvalues(op)?[..want].to_vec());
    }
    let keep = (want + 8).min(m - 2);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut t = Mat::<f64>::zeros(m, m);
    let mut attempts = 0u64;
    let mut v = probe_vector(n, attempts);
    scale(1.0 / dot(&v, &v).sqrt(), &mut v);
    let mut kept = 0usize;
    let mut w = vec![0.0; n];

    for _ in 0..MAX_RESTARTS {
        basis.truncate(kept);
        basis.push(v);
        let mut beta = 0.0;
        let mut residual = Vec::new();
        for j in kept..m {
            op.apply(&basis[j], &mut w);
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, &c) in coeffs.iter().enumerate() {
                t[(i, j)] = c;
                t[(j, i)] = c;
            }
            let mut norm = dot(&w, &w).sqrt();
            let scale_ref = coeffs.iter().fold(1.0f64, |a, c| a.max(c.abs()));
            if norm <= 1e-12 * scale_ref {
                // Invariant subspace: continue from a fresh direction.
                attempts += 1;
                w = probe_vector(n, attempts);
                orthogonalize(&basis, &mut w);
                norm = dot(&w, &w).sqrt();
                beta = 0.0;
            } else {
                beta = norm;
            }
            scale(1.0 / norm, &mut w);
            if j + 1 < m {
                t[(j + 1, j)] = beta;
                t[(j, j + 1)] = beta;
                basis.push(std::mem::replace(&mut w, vec![0.0; n]));
            } else {
                residual = std::mem::replace(&mut w, vec![0.0; n]);
            }
        }

        let (theta, s) = sorted_eigen(&t)?;
        let estimate = |i: usize| (beta * s[(m - 1, i)]).abs();
        let converged = (0..want).all(|i| estimate(i) <= tol * theta[i].abs().max(1.0));

        let ritz: Vec<Vec<f64>> = (0..keep)
            .map(|i| {
                let mut y = vec![0.0; n];
                for (j, b) in basis.iter().enumerate() {
                    axpy(s[(j, i)], b, &mut y);
                }
                y
            })
            .collect();

        if converged {
            let mut hy = vec![0.0; n];
            let verified = (0..want).all(|i| {
                op.apply(&ritz[i], &mut hy);
                axpy(-theta[i], &ritz[i], &mut hy);
                dot(&hy, &hy).sqrt() <= 10.0 * tol * theta[i].abs().max(1.0)
            });
            if verified {
                return Ok(theta[..want].to_vec());
            }
        }

        t = Mat::zeros(m, m);
        for i in 0..keep {
            t[(i, i)] = theta[i];
            t[(keep, i)] = beta * s[(m - 1, i)];
            t[(i, keep)] = t[(keep, i)];
        }
        basis = ritz;
        kept = keep;
        orthogonalize(&basis, &mut residual);
        let norm = dot(&residual, &residual).sqrt();
        scale(1.0 / norm, &mut residual);
        v = residual;
    }
    Err(Error::InvalidInput(format!("eigenvalue iteration did not converge within {MAX_RESTARTS} restarts")))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Diagonal(Vec<f64>);

    impl LinearOperator for Diagonal {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for ((o, d), v) in y.iter_mut().zip(&self.0).zip(x) {
                *o = d * v;
            }
        }
    }

    /// Path Laplacian, eigenvalues `2 - 2 cos(k pi / (n + 1))`.
    struct Path(usize);

    impl LinearOperator for Path {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..500).map(|i| ((i * 37) % 500) as f64 * 0.01 - 1.0).collect();
        let got = lowest_eigenvalues(&Diagonal(d.clone()), 3, 1e-10).unwrap();
        let mut want = d;
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn path_laplacian() {
        let n = 400;
        let got = lowest_eigenvalues(&Path(n), 3, 1e-11).unwrap();
        for (k, g) in got.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((g - exact).abs() < 1e-9, "{g} vs {exact}");
        }
    }
}
