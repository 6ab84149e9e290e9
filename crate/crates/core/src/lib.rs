//! Hodge decomposition of edge flows on traffic graphs, with potential and
//! divergence diagnostics, spectral and flow-aware clustering, synthetic
//! generators and table I/O.
//!
//! ```
//! use hodgeflow::{hodge_decompose, EdgeFlow, FlowGraph, SolverOptions};
//!
//! let g = FlowGraph::from_edges(2, &[(0, 1)]).unwrap();
//! let f = EdgeFlow::new(vec![2.0]).unwrap();
//! let parts = hodge_decompose(&g, &f, &SolverOptions::default()).unwrap();
//! assert!((parts.potential[1] - 1.0).abs() < 1e-12);
//! ```

pub mod embed;
pub mod error;
pub mod graph;
pub mod hodge;
pub mod io;
pub mod metrics;
pub mod solver;
pub mod sparse;
pub mod spectral;
pub mod synth;

pub use embed::{cluster_flow_graph, flow_embedding, EmbeddingMatrix, FeatureSet};
pub use error::{Error, Result};
pub use graph::{build_graph, FlowGraph};
pub use hodge::{
    divergence, harmonic_dimension, hodge_decompose, solve_potential, EdgeFlow, HodgeComponents,
    NodeField, SolverMethod, SolverOptions,
};
pub use metrics::{variance_report, VarianceReport};
pub use sparse::SparseOperator;
pub use spectral::{spectral_cluster, ClusterAssignment, CutVariant, SimilarityMatrix};
