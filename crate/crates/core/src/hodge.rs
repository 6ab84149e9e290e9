//! Hodge decomposition of edge flows.
//!
//! An edge flow `f` splits into three mutually orthogonal parts:
//!
//! ```text
//! f = grad p  +  curlᵀ h  +  harmonic
//! ```
//!
//! The potential `p` is the weighted least-squares fit of `f` by potential
//! differences, `h` is the least-squares fit of what remains by triangle
//! circulations, and the harmonic part carries circulation around cycles that
//! bound no triangle. With edge weights `W` the split is orthogonal in the
//! `W` inner product and the curl part becomes `W⁻¹ curlᵀ h`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, check_nonnegative, Error, Result};
use crate::graph::{
    component_count, connected_components, curl_matrix, enumerate_triangles, graph_laplacian,
    incidence_matrix, FlowGraph,
};
use crate::solver::{conjugate_gradient, dense_pinv_solve, norm, PINV_RCOND};
use crate::sparse::SparseOperator;

/// Largest system handed to the dense pseudo-inverse.
pub const DENSE_LIMIT: usize = 2000;

/// Real value per canonical edge; positive means flow from tail to head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeFlow(Vec<f64>);

impl EdgeFlow {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("edge flow", &values)?;
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl std::ops::Deref for EdgeFlow {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Neg for &EdgeFlow {
    type Output = EdgeFlow;

    fn neg(self) -> EdgeFlow {
        EdgeFlow(self.0.iter().map(|v| -v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Potential,
    Divergence,
}

/// Scalar per node: a potential (mean zero per component) or a divergence
/// (net inflow, sums to zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl NodeField {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Deref for NodeField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    DensePseudoinverse,
    #[default]
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative residual target for the iterative path.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the system size.
    pub max_iter: Option<usize>,
    /// Positive per-edge weights `W`; `None` is the identity.
    pub edge_weights: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::default(),
            tol: 1e-10,
            max_iter: None,
            edge_weights: None,
        }
    }
}

impl SolverOptions {
    pub fn dense() -> Self {
        Self {
            method: SolverMethod::DensePseudoinverse,
            ..Self::default()
        }
    }

    pub fn cg() -> Self {
        Self::default()
    }

    fn validate(&self, edge_count: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let Some(w) = &self.edge_weights {
            check_len("edge weights", edge_count, w.len())?;
            check_nonnegative("edge weights", w)?;
            if let Some(i) = w.iter().position(|&v| v == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "edge weight {i} must be positive"
                )));
            }
        }
        Ok(())
    }

    fn weight(&self, e: usize) -> f64 {
        self.edge_weights.as_ref().map_or(1.0, |w| w[e])
    }

    fn uses_dense(&self, size: usize) -> bool {
        match self.method {
            SolverMethod::DensePseudoinverse if size <= DENSE_LIMIT => true,
            SolverMethod::DensePseudoinverse => {
                warn!("system of size {size} exceeds the dense limit {DENSE_LIMIT}; using conjugate gradient");
                false
            }
            SolverMethod::ConjugateGradient => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyFractions {
    pub gradient: f64,
    pub curl: f64,
    pub harmonic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HodgeComponents {
    pub gradient: EdgeFlow,
    pub curl_adjoint: EdgeFlow,
    pub harmonic: EdgeFlow,
    pub potential: NodeField,
    /// Curl of the input flow on each triangle, in [`enumerate_triangles`] order.
    pub triangle_curl: Vec<f64>,
    /// `None` for a zero flow.
    pub energies: Option<EnergyFractions>,
    edge_weights: Option<Vec<f64>>,
}

/// Net inflow per node, `gradᵀ f`.
pub fn divergence(g: &FlowGraph, f: &EdgeFlow) -> Result<NodeField> {
    check_len("edge flow", g.edge_count(), f.len())?;
    let mut d = vec![0.0; g.node_count()];
    for (&(t, h), &v) in g.edges().iter().zip(f.iter()) {
        d[t] -= v;
        d[h] += v;
    }
    Ok(NodeField {
        kind: FieldKind::Divergence,
        values: d,
    })
}

/// Weighted least-squares potential, mean zero on every connected component.
pub fn solve_potential(g: &FlowGraph, f: &EdgeFlow, opts: &SolverOptions) -> Result<NodeField> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    check_len("edge flow", g.edge_count(), f.len())?;
    opts.validate(g.edge_count())?;

    let weighted: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(e, v)| opts.weight(e) * v)
        .collect();
    let labels = connected_components(g);
    let mut rhs = incidence_matrix(g).transpose_matvec(&weighted)?;
    // roundoff leaves a sliver of the rhs in the null space, which CG cannot fit
    center_per_component(&mut rhs, &labels);
    let laplacian = graph_laplacian(g, opts.edge_weights.as_deref())?;
    let n = g.node_count();

    let mut p = if negligible(&rhs, &weighted, laplacian.norm_inf()) {
        vec![0.0; n]
    } else if opts.uses_dense(n) {
        dense_pinv_solve(laplacian.to_dense(), &rhs)
    } else {
        let inv_diag: Vec<f64> = laplacian
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let max_iter = opts.max_iter.unwrap_or(10 * n);
        conjugate_gradient(&laplacian, &rhs, Some(&inv_diag), opts.tol, max_iter)?.x
    };
    center_per_component(&mut p, &labels);
    Ok(NodeField {
        kind: FieldKind::Potential,
        values: p,
    })
}

/// True when `rhs = A x` is at roundoff level for an input `x` and an
/// operator of size `scale`.
fn negligible(rhs: &[f64], x: &[f64], scale: f64) -> bool {
    norm(rhs) <= 1e-13 * scale * norm(x)
}

/// Subtracts each component's mean.
pub(crate) fn center_per_component(values: &mut [f64], labels: &[usize]) {
    let c = component_count(labels);
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (&v, &l) in values.iter().zip(labels) {
        sums[l] += v;
        counts[l] += 1;
    }
    for (v, &l) in values.iter_mut().zip(labels) {
        *v -= sums[l] / counts[l] as f64;
    }
}

pub fn hodge_decompose(
    g: &FlowGraph,
    f: &EdgeFlow,
    opts: &SolverOptions,
) -> Result<HodgeComponents> {
    let potential = solve_potential(g, f, opts)?;
    let gradient = incidence_matrix(g).matvec(&potential)?;

    let triangles = enumerate_triangles(g);
    let curl = curl_matrix(g, &triangles)?;
    let triangle_curl = curl.matvec(f)?;
    let curl_adjoint = if triangles.is_empty() {
        vec![0.0; g.edge_count()]
    } else {
        curl_projection(&curl, &triangle_curl, f, opts)?
    };

    let harmonic: Vec<f64> = f
        .iter()
        .zip(&gradient)
        .zip(&curl_adjoint)
        .map(|((f, g), c)| f - g - c)
        .collect();

    let mut components = HodgeComponents {
        gradient: EdgeFlow(gradient),
        curl_adjoint: EdgeFlow(curl_adjoint),
        harmonic: EdgeFlow(harmonic),
        potential,
        triangle_curl,
        energies: None,
        edge_weights: opts.edge_weights.clone(),
    };
    components.energies = component_energies(&components).ok();
    Ok(components)
}

/// Solves `curl W⁻¹ curlᵀ h = curl f` for the minimum-norm `h` and returns
/// `W⁻¹ curlᵀ h`.
fn curl_projection(
    curl: &SparseOperator,
    rhs: &[f64],
    f: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let inv_w: Vec<f64> = (0..curl.cols()).map(|e| 1.0 / opts.weight(e)).collect();
    let gram = curl.scale_cols(&inv_w)?.matmul(&curl.transpose())?;
    let t = curl.rows();
    if negligible(rhs, f, curl.norm_inf()) {
        return Ok(vec![0.0; curl.cols()]);
    }
    let h = if opts.uses_dense(t) {
        dense_pinv_solve(gram.to_dense(), rhs)
    } else {
        let max_iter = opts.max_iter.unwrap_or(10 * t);
        conjugate_gradient(&gram, rhs, None, opts.tol, max_iter)?.x
    };
    let mut out = curl.transpose_matvec(&h)?;
    out.iter_mut().zip(&inv_w).for_each(|(v, w)| *v *= w);
    Ok(out)
}

/// `dim ker(Helmholtzian) = |E| - rank(grad) - rank(curl)`.
///
/// `rank(grad)` is `|V|` minus the component count; `rank(curl)` comes from a
/// dense eigendecomposition of the smaller Gram matrix.
pub fn harmonic_dimension(g: &FlowGraph) -> Result<usize> {
    let grad_rank = g.node_count() - component_count(&connected_components(g));
    let triangles = enumerate_triangles(g);
    let curl_rank = if triangles.is_empty() {
        0
    } else {
        let curl = curl_matrix(g, &triangles)?;
        let curl_t = curl.transpose();
        let gram = if curl.rows() <= curl.cols() {
            curl.matmul(&curl_t)?
        } else {
            curl_t.matmul(&curl)?
        };
        let eig = nalgebra::SymmetricEigen::new(gram.to_dense());
        let cutoff = PINV_RCOND * eig.eigenvalues.amax();
        eig.eigenvalues.iter().filter(|&&l| l > cutoff).count()
    };
    Ok(g.edge_count() - grad_rank - curl_rank)
}

/// Share of the (weighted) squared norm carried by each component.
pub fn component_energies(c: &HodgeComponents) -> Result<EnergyFractions> {
    let w = c.edge_weights.as_deref();
    let energy = |x: &[f64]| -> f64 {
        x.iter()
            .enumerate()
            .map(|(e, v)| w.map_or(1.0, |w| w[e]) * v * v)
            .sum()
    };
    let total: Vec<f64> = c
        .gradient
        .iter()
        .zip(c.curl_adjoint.iter())
        .zip(c.harmonic.iter())
        .map(|((a, b), h)| a + b + h)
        .collect();
    let total_energy = energy(&total);
    if total_energy == 0.0 {
        return Err(Error::UndefinedEnergies);
    }
    Ok(EnergyFractions {
        gradient: energy(&c.gradient) / total_energy,
        curl: energy(&c.curl_adjoint) / total_energy,
        harmonic: energy(&c.harmonic) / total_energy,
    })
}

/// Net flow `fwd - rev` along each canonical edge. Edges with balanced
/// volumes stay in the graph with a zero flow.
pub fn net_flow(fwd: &[f64], rev: &[f64]) -> Result<EdgeFlow> {
    check_len("reverse volumes", fwd.len(), rev.len())?;
    check_nonnegative("forward volumes", fwd)?;
    check_nonnegative("reverse volumes", rev)?;
    Ok(EdgeFlow(fwd.iter().zip(rev).map(|(a, b)| a - b).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p2() -> FlowGraph {
        FlowGraph::from_edges(2, &[(0, 1)]).unwrap()
    }

    fn triangle() -> FlowGraph {
        FlowGraph::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn star4() -> FlowGraph {
        FlowGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    fn c4() -> FlowGraph {
        FlowGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
    }

    fn flow(v: &[f64]) -> EdgeFlow {
        EdgeFlow::new(v.to_vec()).unwrap()
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence(&p2(), &flow(&[2.0])).unwrap().values, vec![-2.0, 2.0]);
        assert_eq!(
            divergence(&triangle(), &flow(&[1.0, -1.0, 1.0])).unwrap().values,
            vec![0.0, 0.0, 0.0]
        );
        assert_eq!(
            divergence(&star4(), &flow(&[1.0, 1.0, 1.0])).unwrap().values,
            vec![-3.0, 1.0, 1.0, 1.0]
        );
        assert!(divergence(&p2(), &flow(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn potential_examples_both_solvers() {
        for opts in [SolverOptions::dense(), SolverOptions::cg()] {
            let p = solve_potential(&p2(), &flow(&[2.0]), &opts).unwrap();
            assert_abs_diff_eq!(p.values[0], -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.values[1], 1.0, epsilon = 1e-12);

            let p = solve_potential(&star4(), &flow(&[1.0, 1.0, 1.0]), &opts).unwrap();
            for (a, b) in p.values.iter().zip([-0.75, 0.25, 0.25, 0.25]) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }

            let p = solve_potential(&triangle(), &flow(&[1.0, -1.0, 1.0]), &opts).unwrap();
            assert!(p.values.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn potential_errors() {
        let empty = FlowGraph::from_edges(3, &[]).unwrap();
        assert!(matches!(
            solve_potential(&empty, &flow(&[]), &SolverOptions::default()),
            Err(Error::EmptyGraph)
        ));
        let opts = SolverOptions {
            max_iter: Some(1),
            tol: 1e-14,
            ..SolverOptions::cg()
        };
        let path = FlowGraph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let f = flow(&[1.0, -2.0, 0.5, 3.0, 1.0]);
        assert!(matches!(
            solve_potential(&path, &f, &opts),
            Err(Error::NotConverged { .. })
        ));
        let bad = SolverOptions {
            edge_weights: Some(vec![0.0]),
            ..SolverOptions::default()
        };
        assert!(solve_potential(&p2(), &flow(&[1.0]), &bad).is_err());
    }

    #[test]
    fn disconnected_graph_is_centered_per_component() {
        let g = FlowGraph::from_edges(5, &[(0, 1), (2, 3), (3, 4)]).unwrap();
        let f = flow(&[4.0, 1.0, 1.0]);
        let p = solve_potential(&g, &f, &SolverOptions::cg()).unwrap();
        assert_abs_diff_eq!(p.values[0] + p.values[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.values[2] + p.values[3] + p.values[4], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.values[1] - p.values[0], 4.0, epsilon = 1e-10);
    }

    #[test]
    fn decomposition_of_triangle_circulation() {
        let f = flow(&[1.0, -1.0, 1.0]);
        let c = hodge_decompose(&triangle(), &f, &SolverOptions::dense()).unwrap();
        // im(curlᵀ) is spanned by (1, -1, 1), which is f itself
        for i in 0..3 {
            assert_abs_diff_eq!(c.gradient[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.curl_adjoint[i], f[i], epsilon = 1e-12);
            assert_abs_diff_eq!(c.harmonic[i], 0.0, epsilon = 1e-12);
        }
        assert_eq!(c.triangle_curl, vec![3.0]);
        let e = c.energies.unwrap();
        assert_abs_diff_eq!(e.curl, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn decomposition_of_square_circulation() {
        // input order (0,1),(1,2),(2,3),(0,3): going around 0→1→2→3→0
        let built = crate::graph::build_graph(&[(0, 1), (1, 2), (2, 3), (0, 3)], 4, None).unwrap();
        let f = flow(&built.remap_flows(&[1.0, 1.0, 1.0, -1.0]).unwrap());
        assert_eq!(f.as_slice(), &[1.0, -1.0, 1.0, 1.0]);
        for opts in [SolverOptions::dense(), SolverOptions::cg()] {
            let c = hodge_decompose(&built.graph, &f, &opts).unwrap();
            for i in 0..4 {
                assert_abs_diff_eq!(c.gradient[i], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(c.curl_adjoint[i], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(c.harmonic[i], f[i], epsilon = 1e-12);
            }
            let e = component_energies(&c).unwrap();
            assert_abs_diff_eq!(e.harmonic, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(e.gradient + e.curl, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_gradient_on_k4() {
        let g = FlowGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let p = [0.3, -1.2, 2.5, 0.1];
        let f = EdgeFlow::new(incidence_matrix(&g).matvec(&p).unwrap()).unwrap();
        let c = hodge_decompose(&g, &f, &SolverOptions::cg()).unwrap();
        let e = c.energies.unwrap();
        assert_abs_diff_eq!(e.gradient, 1.0, epsilon = 1e-8);
        assert!(e.curl < 1e-8 && e.harmonic < 1e-8);
    }

    #[test]
    fn zero_flow_has_no_energies() {
        let c = hodge_decompose(&p2(), &flow(&[0.0]), &SolverOptions::default()).unwrap();
        assert!(c.energies.is_none());
        assert!(matches!(component_energies(&c), Err(Error::UndefinedEnergies)));
    }

    #[test]
    fn weighted_split_is_w_orthogonal() {
        let g = FlowGraph::from_edges(
            5,
            &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (0, 4)],
        )
        .unwrap();
        let w = vec![1.0, 2.0, 0.5, 3.0, 1.5, 0.7, 2.2];
        let f = flow(&[1.0, -2.0, 0.3, 4.0, -1.0, 2.0, 0.5]);
        for method in [SolverMethod::DensePseudoinverse, SolverMethod::ConjugateGradient] {
            let opts = SolverOptions {
                method,
                edge_weights: Some(w.clone()),
                ..SolverOptions::default()
            };
            let c = hodge_decompose(&g, &f, &opts).unwrap();
            let wdot = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).zip(&w).map(|((a, b), w)| a * b * w).sum()
            };
            assert!(wdot(&c.gradient, &c.curl_adjoint).abs() < 1e-9);
            assert!(wdot(&c.gradient, &c.harmonic).abs() < 1e-9);
            assert!(wdot(&c.curl_adjoint, &c.harmonic).abs() < 1e-9);
            let e = c.energies.unwrap();
            assert_abs_diff_eq!(e.gradient + e.curl + e.harmonic, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn harmonic_dimension_examples() {
        assert_eq!(harmonic_dimension(&triangle()).unwrap(), 0);
        assert_eq!(harmonic_dimension(&c4()).unwrap(), 1);
        let two = FlowGraph::from_edges(
            8,
            &[(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7)],
        )
        .unwrap();
        assert_eq!(harmonic_dimension(&two).unwrap(), 2);
    }

    #[test]
    fn net_flow_examples() {
        assert_eq!(net_flow(&[10.0], &[4.0]).unwrap().as_slice(), &[6.0]);
        assert_eq!(net_flow(&[7.0], &[7.0]).unwrap().as_slice(), &[0.0]);
        assert_eq!(
            net_flow(&[0.0, 5.0], &[3.0, 0.0]).unwrap().as_slice(),
            &[-3.0, 5.0]
        );
        assert!(matches!(
            net_flow(&[1.0], &[-1.0]),
            Err(Error::Negative { .. })
        ));
    }

    #[test]
    fn balanced_edge_still_ties_potentials() {
        // 0 -> 1 -> 2 with a balanced edge 0-2: the balanced edge pulls p0 and p2 together
        let g = FlowGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let f = net_flow(&[3.0, 3.0, 5.0], &[0.0, 0.0, 5.0]).unwrap();
        let with_edge = solve_potential(&g, &f, &SolverOptions::dense()).unwrap();
        let path = FlowGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let without = solve_potential(&path, &flow(&[3.0, 3.0]), &SolverOptions::dense()).unwrap();
        let spread = |p: &NodeField| p.values[2] - p.values[0];
        assert!(spread(&with_edge) < spread(&without));
    }
}
