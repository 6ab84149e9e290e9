//! Diagnostics comparing a potential with the divergence it came from.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::{graph_laplacian, FlowGraph};
use crate::hodge::{divergence, solve_potential, EdgeFlow, SolverOptions};
use crate::sparse::SparseOperator;

/// Largest graph for which the spectral sums are computed.
pub const SPECTRAL_LIMIT: usize = 500;

/// Agreement expected between the direct and spectral values.
pub const SPECTRAL_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub local_p: f64,
    pub local_d: f64,
    pub global_p: f64,
    pub global_d: f64,
    /// `Σ a²`
    pub spectral_local_p: Option<f64>,
    /// `Σ λ² a²`
    pub spectral_local_d: Option<f64>,
    /// `Σ a² / λ`
    pub spectral_global_p: Option<f64>,
    /// `Σ λ a²`
    pub spectral_global_d: Option<f64>,
    /// Nonzero Laplacian eigenvalues, ascending. Empty above
    /// [`SPECTRAL_LIMIT`].
    pub lambda: Vec<f64>,
    /// Coordinates of the flow on the left singular vectors of the incidence
    /// matrix paired with `lambda`.
    pub a: Vec<f64>,
}

impl VarianceReport {
    /// Largest relative gap between a direct value and its spectral twin.
    pub fn max_relative_gap(&self) -> Option<f64> {
        let pairs = [
            (self.local_p, self.spectral_local_p?),
            (self.local_d, self.spectral_local_d?),
            (self.global_p, self.spectral_global_p?),
            (self.global_d, self.spectral_global_d?),
        ];
        Some(
            pairs
                .iter()
                .map(|&(x, y)| relative_gap(x, y))
                .fold(0.0, f64::max),
        )
    }
}

pub(crate) fn relative_gap(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub slope_neg: f64,
    pub slope_pos: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// `xᵀ L x`, half the sum of squared differences over both edge directions.
pub fn local_variance(l: &SparseOperator, x: &[f64]) -> Result<f64> {
    check_len("node field", l.cols(), x.len())?;
    let lx = l.matvec(x)?;
    Ok(x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>().max(0.0))
}

/// Sum of squared deviations from the mean.
pub fn global_variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Potential and divergence variances, direct and as spectral sums.
pub fn variance_report(g: &FlowGraph, f: &EdgeFlow) -> Result<VarianceReport> {
    variance_report_with(g, f, &SolverOptions::default())
}

pub fn variance_report_with(
    g: &FlowGraph,
    f: &EdgeFlow,
    opts: &SolverOptions,
) -> Result<VarianceReport> {
    if opts.edge_weights.is_some() {
        return Err(Error::InvalidParameter(
            "variance identities hold for the unweighted Laplacian only".into(),
        ));
    }
    let p = solve_potential(g, f, opts)?;
    let d = divergence(g, f)?;
    let l = graph_laplacian(g, None)?;
    let mut report = VarianceReport {
        local_p: local_variance(&l, &p)?,
        local_d: local_variance(&l, &d)?,
        global_p: global_variance(&p),
        global_d: global_variance(&d),
        spectral_local_p: None,
        spectral_local_d: None,
        spectral_global_p: None,
        spectral_global_d: None,
        lambda: Vec::new(),
        a: Vec::new(),
    };
    if g.node_count() <= SPECTRAL_LIMIT {
        let (lambda, a) = spectral_coefficients(&l, &d);
        let sum = |w: &dyn Fn(f64) -> f64| -> f64 {
            lambda.iter().zip(&a).map(|(&l, &a)| w(l) * a * a).sum()
        };
        report.spectral_local_p = Some(sum(&|_| 1.0));
        report.spectral_local_d = Some(sum(&|l| l * l));
        report.spectral_global_p = Some(sum(&|l| 1.0 / l));
        report.spectral_global_d = Some(sum(&|l| l));
        report.lambda = lambda;
        report.a = a;
        if let Some(gap) = report.max_relative_gap() {
            if gap > SPECTRAL_RTOL {
                log::warn!("direct and spectral variances differ by {gap:.3e} (relative)");
            }
        }
    }
    Ok(report)
}

/// With `grad = U Σ Vᵀ` and `L = V Σ² Vᵀ`, the divergence is `V Σ a`, so each
/// `a_i` is read off as `v_iᵀ d / σ_i`.
fn spectral_coefficients(l: &SparseOperator, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(l.to_dense());
    let cutoff = 1e-9 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let d = DVector::from_column_slice(d);
    let mut pairs: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &lambda)| lambda > cutoff)
        .map(|(i, &lambda)| (lambda, eig.eigenvectors.column(i).dot(&d) / lambda.sqrt()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

fn pearson_of(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Option<f64> {
    let n = pairs.clone().count() as f64;
    let (sx, sy) = pairs.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    let scale = mx.abs().max(my.abs()).max(1.0);
    let tiny = 1e-24 * scale * scale * n;
    if vx <= tiny || vy <= tiny {
        return None;
    }
    Some((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len("second sample", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::EmptyInput("correlation sample"));
    }
    pearson_of(x.iter().copied().zip(y.iter().copied()))
        .ok_or(Error::UndefinedCorrelation("constant sample"))
}

/// Pearson correlation of endpoint values with every edge counted in both
/// directions.
pub fn assortativity(g: &FlowGraph, x: &[f64]) -> Result<f64> {
    check_len("node field", g.node_count(), x.len())?;
    if g.edge_count() < 2 {
        return Err(Error::InvalidParameter(
            "assortativity needs at least two edges".into(),
        ));
    }
    let pairs = g
        .edges()
        .iter()
        .flat_map(|&(i, j)| [(x[i], x[j]), (x[j], x[i])]);
    pearson_of(pairs).ok_or(Error::UndefinedCorrelation("node field is constant over edges"))
}

/// Two-slope least-squares fit of `p` against `d` joined at `d = 0`.
pub fn piecewise_fit(p: &[f64], d: &[f64]) -> Result<PiecewiseFit> {
    check_len("divergence", p.len(), d.len())?;
    if !d.iter().any(|&v| v < 0.0) {
        return Err(Error::EmptyBranch("d < 0"));
    }
    if !d.iter().any(|&v| v >= 0.0) {
        return Err(Error::EmptyBranch("d >= 0"));
    }
    let n = p.len();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => d[i].min(0.0),
        _ => d[i].max(0.0),
    });
    let y = DVector::from_column_slice(p);
    // normal equations through a 3x3 eigen pseudo-inverse; a branch of exact
    // zeros leaves a null column and gets slope 0
    let eig = SymmetricEigen::new(design.tr_mul(&design));
    let cutoff = 1e-12 * eig.eigenvalues.amax();
    let rhs = eig.eigenvectors.tr_mul(&design.tr_mul(&y));
    let scaled = DVector::from_fn(3, |i, _| {
        let l = eig.eigenvalues[i];
        if l > cutoff { rhs[i] / l } else { 0.0 }
    });
    let beta = &eig.eigenvectors * scaled;
    let fitted = &design * &beta;
    let ss_res: f64 = (&y - fitted).norm_squared();
    let ss_tot = global_variance(p);
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PiecewiseFit {
        intercept: beta[0],
        slope_neg: beta[1],
        slope_pos: beta[2],
        r2,
    })
}

/// Average ranks starting at 1; ties share their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation.
pub fn rank_correlation(p: &[f64], d: &[f64]) -> Result<f64> {
    check_len("second sample", p.len(), d.len())?;
    if p.len() < 3 {
        return Err(Error::InvalidParameter(
            "rank correlation needs at least three items".into(),
        ));
    }
    let (rp, rd) = (average_ranks(p), average_ranks(d));
    pearson_of(rp.into_iter().zip(rd)).ok_or(Error::UndefinedCorrelation("constant ranking"))
}

/// Everything reported for one flow slice. Undefined statistics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub variance: VarianceReport,
    pub assortativity_p: Option<f64>,
    pub assortativity_d: Option<f64>,
    pub piecewise: Option<PiecewiseFit>,
    pub spearman: Option<f64>,
    pub local_p_lt_local_d: bool,
    pub global_p_gt_global_d: bool,
}

pub fn flow_diagnostics(
    g: &FlowGraph,
    f: &EdgeFlow,
    opts: &SolverOptions,
) -> Result<FlowDiagnostics> {
    let variance = variance_report_with(g, f, opts)?;
    let p = solve_potential(g, f, opts)?;
    let d = divergence(g, f)?;
    Ok(FlowDiagnostics {
        assortativity_p: assortativity(g, &p).ok(),
        assortativity_d: assortativity(g, &d).ok(),
        piecewise: piecewise_fit(&p, &d).ok(),
        spearman: rank_correlation(&p, &d).ok(),
        local_p_lt_local_d: variance.local_p < variance.local_d,
        global_p_gt_global_d: variance.global_p > variance.global_d,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, incidence_matrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> FlowGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        FlowGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn local_variance_examples() {
        let l2 = graph_laplacian(&path(2), None).unwrap();
        assert_eq!(local_variance(&l2, &[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(local_variance(&l2, &[0.0, 1.0]).unwrap(), 1.0);
        let l3 = graph_laplacian(&path(3), None).unwrap();
        assert_abs_diff_eq!(local_variance(&l3, &[0.0, 1.0, 3.0]).unwrap(), 5.0);
        assert!(local_variance(&l3, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn global_variance_examples() {
        assert_eq!(global_variance(&[4.0, 4.0, 4.0]), 0.0);
        assert_eq!(global_variance(&[-1.0, 1.0]), 2.0);
        assert_eq!(global_variance(&[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn p2_report() {
        let f = EdgeFlow::new(vec![2.0]).unwrap();
        let r = variance_report(&path(2), &f).unwrap();
        assert_abs_diff_eq!(r.local_p, 4.0, epsilon = 1e-12);
        assert_eq!(r.lambda.len(), 1);
        assert_abs_diff_eq!(r.lambda[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.a[0].powi(2), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.spectral_local_p.unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn cyclic_triangle_has_flat_fields() {
        let b = build_graph(&[(0, 1), (1, 2), (2, 0)], 3, None).unwrap();
        let f = EdgeFlow::new(b.remap_flows(&[1.0, 1.0, 1.0]).unwrap()).unwrap();
        let r = variance_report(&b.graph, &f).unwrap();
        for v in [r.local_p, r.local_d, r.global_p, r.global_d] {
            assert!(v.abs() < 1e-20);
        }
    }

    /// Independent oracle: eigenpairs of the edge-space operator `G Gᵀ`,
    /// whose eigenvectors are the left singular vectors of `G`.
    fn edge_space_sums(g: &FlowGraph, f: &[f64]) -> [f64; 4] {
        let grad = incidence_matrix(g).to_dense();
        let eig = SymmetricEigen::new(&grad * grad.transpose());
        let f = DVector::from_column_slice(f);
        let mut sums = [0.0; 4];
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda > 1e-9 {
                let a2 = eig.eigenvectors.column(i).dot(&f).powi(2);
                sums[0] += a2;
                sums[1] += lambda * lambda * a2;
                sums[2] += a2 / lambda;
                sums[3] += lambda * a2;
            }
        }
        sums
    }

    #[test]
    fn random_tree_global_p_matches_edge_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let edges: Vec<_> = (1..6).map(|v| (rng.random_range(0..v), v)).collect();
        let b = build_graph(&edges, 6, None).unwrap();
        let raw: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = EdgeFlow::new(b.remap_flows(&raw).unwrap()).unwrap();
        let r = variance_report(&b.graph, &f).unwrap();
        let oracle = edge_space_sums(&b.graph, &f);
        assert_abs_diff_eq!(r.global_p, oracle[2], epsilon = 1e-8);
        assert_abs_diff_eq!(r.spectral_global_p.unwrap(), oracle[2], epsilon = 1e-8);
    }

    #[test]
    fn assortativity_examples() {
        // symmetrized pairs (0,1),(1,0),(1,2),(2,1): both coordinates have mean 1
        // and the centered products are all zero
        assert_abs_diff_eq!(assortativity(&path(3), &[0.0, 1.0, 2.0]).unwrap(), 0.0, epsilon = 1e-15);
        let star = FlowGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(assortativity(&star, &[10.0, 0.0, 0.0, 0.0]).unwrap() < 0.0);
        assert!(matches!(
            assortativity(&star, &[1.0; 4]),
            Err(Error::UndefinedCorrelation(_))
        ));
        // longer path is smooth enough to be positive
        assert!(assortativity(&path(6), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap() > 0.5);
    }

    #[test]
    fn piecewise_examples() {
        let d = [-3.0, -1.5, -0.5, 0.0, 1.0, 2.0, 4.0];
        let same = piecewise_fit(&d, &d).unwrap();
        assert_abs_diff_eq!(same.slope_neg, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(same.slope_pos, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(same.r2, 1.0, epsilon = 1e-12);

        let p: Vec<f64> = d.iter().map(|&v| if v < 0.0 { 2.0 * v } else { 0.5 * v }).collect();
        let fit = piecewise_fit(&p, &d).unwrap();
        assert_abs_diff_eq!(fit.slope_neg, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.slope_pos, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);

        assert!(matches!(
            piecewise_fit(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::EmptyBranch("d < 0"))
        ));
    }

    #[test]
    fn spearman_examples() {
        let d = [0.3, -1.0, 2.5, 0.0, 7.0];
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(rank_correlation(&d, &d).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rank_correlation(&neg, &d).unwrap(), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert!(rank_correlation(&[1.0; 4], &d[..4]).is_err());
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>)> {
        (3usize..30, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
            for _ in 0..n {
                let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
                if u != v {
                    edges.push((u, v));
                }
            }
            let flows = (0..edges.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            (n, edges, flows)
        })
    }

    proptest! {
        #[test]
        fn spectral_sums_match_direct((n, edges, flows) in connected_graph()) {
            let b = build_graph(&edges, n, None).unwrap();
            let f = EdgeFlow::new(b.remap_flows(&flows).unwrap()).unwrap();
            let r = variance_report_with(&b.graph, &f, &SolverOptions::dense()).unwrap();
            prop_assert!(r.max_relative_gap().unwrap() <= SPECTRAL_RTOL);
            for v in [r.local_p, r.local_d, r.global_p, r.global_d] {
                prop_assert!(v >= 0.0);
            }
        }

        #[test]
        fn assortativity_is_affine_invariant(
            (n, edges, _) in connected_graph(),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let b = build_graph(&edges, n, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let (ax, ay) = (assortativity(&b.graph, &x), assortativity(&b.graph, &y));
            if let (Ok(ax), Ok(ay)) = (ax, ay) {
                prop_assert!((ax - ay).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&ax));
            }
        }
    }
}
