//! Linear solvers for the symmetric positive semidefinite systems that come
//! out of the boundary operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Relative cutoff below which an eigenvalue counts as part of the null space.
pub(crate) const PINV_RCOND: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
}

/// Preconditioned conjugate gradient for a consistent symmetric PSD system.
///
/// `inv_diag` is a Jacobi preconditioner; pass `None` for plain CG, which
/// started from zero converges to the minimum-norm solution.
pub fn conjugate_gradient(
    a: &SparseOperator,
    b: &[f64],
    inv_diag: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    if a.rows() != n || a.cols() != n {
        return Err(Error::Dimension(format!(
            "cg on {}x{} operator with rhs of length {n}",
            a.rows(),
            a.cols()
        )));
    }
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }

    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;

    for iter in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // search direction fell into the null space; nothing left to reduce
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        residual = norm(&r) / b_norm;
        if residual <= tol {
            // confirm with the true residual, recurrences drift
            let mut ax = vec![0.0; n];
            a.matvec_into(&x, &mut ax);
            let true_res = ax
                .iter()
                .zip(b)
                .map(|(ax, b)| (b - ax) * (b - ax))
                .sum::<f64>()
                .sqrt()
                / b_norm;
            if true_res <= tol {
                return Ok(CgOutcome {
                    x,
                    iterations: iter + 1,
                    residual: true_res,
                });
            }
            r.iter_mut()
                .zip(b)
                .zip(&ax)
                .for_each(|((r, b), ax)| *r = b - ax);
            residual = true_res;
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Minimum-norm solution of `A x = b` through the eigendecomposition of a
/// dense symmetric PSD matrix.
pub(crate) fn dense_pinv_solve(a: DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let eig = SymmetricEigen::new(a);
    let cutoff = PINV_RCOND * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let rhs = DVector::from_column_slice(b);
    let mut x = DVector::zeros(b.len());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let v = eig.eigenvectors.column(i);
            x += v * (v.dot(&rhs) / lambda);
        }
    }
    x.as_slice().to_vec()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        SparseOperator::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn cg_solves_consistent_singular_system() {
        let l = path_laplacian(5);
        let b = [-1.0, 0.5, 0.0, 0.25, 0.25];
        let out = conjugate_gradient(&l, &b, None, 1e-12, 50).unwrap();
        let lx = l.matvec(&out.x).unwrap();
        for (a, b) in lx.iter().zip(&b) {
            assert!((a - b).abs() < 1e-10);
        }
        // plain cg from zero stays orthogonal to the constant null vector
        assert!(out.x.iter().sum::<f64>().abs() < 1e-10);

        let dense = dense_pinv_solve(l.to_dense(), &b);
        for (a, b) in out.x.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = conjugate_gradient(&path_laplacian(3), &[0.0; 3], None, 1e-10, 10).unwrap();
        assert_eq!(out.x, vec![0.0; 3]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let l = path_laplacian(40);
        let mut b = vec![0.0; 40];
        b[0] = -1.0;
        b[39] = 1.0;
        match conjugate_gradient(&l, &b, None, 1e-14, 2) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
