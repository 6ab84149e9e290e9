//! Smallest eigenpairs of symmetric PSD operators.
//!
//! Small operators go through a dense symmetric eigensolver. Larger ones use
//! block inverse subspace iteration: each sweep applies `(L + sI)⁻¹` to the
//! block with preconditioned CG, re-orthonormalizes, and takes Ritz pairs
//! from the projected matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CutVariant, SpectralEmbedding};
use crate::error::{Error, Result};
use crate::solver::conjugate_gradient;
use crate::sparse::SparseOperator;

/// Eigenvalues below this count as null.
pub const NULL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Residual bound relative to `‖L‖∞`.
    pub tol: f64,
    /// Largest dimension solved densely.
    pub dense_limit: usize,
    pub null_threshold: f64,
    pub max_sweeps: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dense_limit: 3000,
            null_threshold: NULL_THRESHOLD,
            max_sweeps: 500,
        }
    }
}

/// The `k` smallest eigenpairs of `l`, optionally after discarding the null
/// space.
pub fn smallest_eigenpairs(
    l: &SparseOperator,
    k: usize,
    skip_null: bool,
    tol: f64,
) -> Result<SpectralEmbedding> {
    smallest_eigenpairs_with(
        l,
        k,
        skip_null,
        &EigenOptions {
            tol,
            ..EigenOptions::default()
        },
    )
}

pub fn smallest_eigenpairs_with(
    l: &SparseOperator,
    k: usize,
    skip_null: bool,
    opts: &EigenOptions,
) -> Result<SpectralEmbedding> {
    let n = l.rows();
    if l.cols() != n {
        return Err(Error::Dimension(format!(
            "eigenproblem on non-square {}x{} operator",
            l.rows(),
            l.cols()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigen tolerance must be positive, got {}",
            opts.tol
        )));
    }

    let (values, vectors) = if n <= opts.dense_limit {
        let (values, vectors) = dense_ascending(l.to_dense());
        select(values, vectors, k, skip_null, opts.null_threshold)?
    } else {
        let nulls = if skip_null { null_dimension_bound(l) } else { 0 };
        if k + nulls > n {
            return Err(Error::SpectrumExhausted {
                requested: k,
                available: n.saturating_sub(nulls),
            });
        }
        let (values, vectors) = subspace_iteration(l, k + nulls, opts)?;
        select(values, vectors, k, skip_null, opts.null_threshold)?
    };

    let mut vectors = vectors;
    fix_signs(&mut vectors);
    let norm = l.norm_inf().max(f64::MIN_POSITIVE);
    let residual = max_residual(l, &values, &vectors) / norm;
    if residual > opts.tol {
        return Err(Error::EigenResidual {
            residual,
            tolerance: opts.tol,
        });
    }
    Ok(SpectralEmbedding {
        eigenvalues: values,
        vectors,
        variant: CutVariant::RatioCut,
    })
}

fn dense_ascending(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

fn select(
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    k: usize,
    skip_null: bool,
    null_threshold: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let start = if skip_null {
        values.iter().take_while(|&&v| v < null_threshold).count()
    } else {
        0
    };
    let available = values.len() - start;
    if k > available {
        return Err(Error::SpectrumExhausted {
            requested: k,
            available,
        });
    }
    let cols: Vec<usize> = (start..start + k).collect();
    Ok((values[start..start + k].to_vec(), vectors.select_columns(&cols)))
}

/// Makes the largest-magnitude entry of every column positive; ties go to
/// the first index.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let max = col.amax();
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|v| v.abs() >= max * (1.0 - 1e-12))
            .expect("some entry attains the max");
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

fn max_residual(l: &SparseOperator, values: &[f64], vectors: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    let mut lv = vec![0.0; l.rows()];
    for (j, &lambda) in values.iter().enumerate() {
        let v = vectors.column(j);
        l.matvec_into(v.as_slice(), &mut lv);
        let r = lv
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    worst
}

/// Number of connected blocks of the sparsity pattern, which bounds the
/// null dimension of a Laplacian.
fn null_dimension_bound(l: &SparseOperator) -> usize {
    let n = l.rows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (r, c, v) in l.triplets() {
        if r != c && v != 0.0 {
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

fn subspace_iteration(
    l: &SparseOperator,
    want: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = l.rows();
    let block = (want + want.max(8)).min(n);
    let norm = l.norm_inf().max(f64::MIN_POSITIVE);
    let shift = 1e-3 * norm;

    let shifted = {
        let triplets = l
            .triplets()
            .chain((0..n).map(|i| (i, i, shift)))
            .collect::<Vec<_>>();
        SparseOperator::from_triplets(n, n, triplets)?
    };
    let inv_diag: Vec<f64> = shifted.diagonal().iter().map(|d| 1.0 / d).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, block, |_, _| rng.random::<f64>() - 0.5);
    x = orthonormalize(x);

    for _ in 0..opts.max_sweeps {
        let mut y = DMatrix::zeros(n, block);
        for j in 0..block {
            let col = x.column(j).clone_owned();
            let sol = conjugate_gradient(&shifted, col.as_slice(), Some(&inv_diag), 1e-11, 20 * n)?;
            y.set_column(j, &DVector::from_vec(sol.x));
        }
        let q = orthonormalize(y);

        let mut lq = DMatrix::zeros(n, block);
        let mut buf = vec![0.0; n];
        for j in 0..block {
            l.matvec_into(q.column(j).as_slice(), &mut buf);
            lq.set_column(j, &DVector::from_column_slice(&buf));
        }
        let mut h = q.transpose() * &lq;
        h = (&h + h.transpose()) * 0.5;
        let (theta, s) = dense_ascending(h);
        x = &q * &s;

        let cols: Vec<usize> = (0..want).collect();
        let values = theta[..want].to_vec();
        let vectors = x.select_columns(&cols);
        if max_residual(l, &values, &vectors) <= 0.1 * opts.tol * norm {
            return Ok((values, vectors));
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_sweeps,
        residual: f64::NAN,
    })
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    // two passes of Gram-Schmidt keep the block orthonormal to working precision
    let mut q = m;
    for _ in 0..2 {
        for j in 0..q.ncols() {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
            let nrm = q.column(j).norm();
            if nrm > 0.0 {
                q.column_mut(j).scale_mut(1.0 / nrm);
            }
        }
    }
    q
}
