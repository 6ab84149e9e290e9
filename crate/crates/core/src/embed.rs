//! Node embeddings that combine graph structure with directional flow.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_nonnegative, Error, Result};
use crate::graph::FlowGraph;
use crate::hodge::{net_flow, solve_potential, SolverOptions};
use crate::spectral::{kmeans, smallest_eigenpairs, ClusterAssignment, SimilarityMatrix};

/// Eigen residual tolerance for the structural block.
const STRUCT_TOL: f64 = 1e-8;

/// Per-edge mean volume and skew along the stored orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures {
    pub m: Vec<f64>,
    pub s: Vec<f64>,
}

/// Per-node averages of the edge features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub z_mean: Vec<f64>,
    /// Average signed outflow.
    pub z_skew: Vec<f64>,
}

pub fn mean_skew(fwd: &[f64], rev: &[f64]) -> Result<EdgeFeatures> {
    check_len("reverse volumes", fwd.len(), rev.len())?;
    check_nonnegative("forward volumes", fwd)?;
    check_nonnegative("reverse volumes", rev)?;
    Ok(EdgeFeatures {
        m: fwd.iter().zip(rev).map(|(a, b)| (a + b) / 2.0).collect(),
        s: fwd.iter().zip(rev).map(|(a, b)| a - b).collect(),
    })
}

/// Degree-normalized sums of `w m` and of `w s` seen as outflow. Weights
/// default to 1 and the degree is the plain edge count.
pub fn node_flow_features(
    g: &FlowGraph,
    edges: &EdgeFeatures,
    weights: Option<&[f64]>,
) -> Result<NodeFeatures> {
    check_len("mean flows", g.edge_count(), edges.m.len())?;
    check_len("skews", g.edge_count(), edges.s.len())?;
    if let Some(w) = weights {
        check_len("feature weights", g.edge_count(), w.len())?;
    }
    let n = g.node_count();
    let (mut z_mean, mut z_skew) = (vec![0.0; n], vec![0.0; n]);
    for (e, &(t, h)) in g.edges().iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[e]);
        z_mean[t] += w * edges.m[e];
        z_mean[h] += w * edges.m[e];
        z_skew[t] += w * edges.s[e];
        z_skew[h] -= w * edges.s[e];
    }
    for i in 0..n {
        let deg = g.degree(i);
        if deg > 0 {
            z_mean[i] /= deg as f64;
            z_skew[i] /= deg as f64;
        }
    }
    Ok(NodeFeatures { z_mean, z_skew })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    StructOnly,
    StructMean,
    StructMeanSkew,
    MeanOnly,
    PotentialOnly,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::StructOnly,
        FeatureSet::StructMean,
        FeatureSet::StructMeanSkew,
        FeatureSet::MeanOnly,
        FeatureSet::PotentialOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::StructOnly => "struct_only",
            FeatureSet::StructMean => "struct_mean",
            FeatureSet::StructMeanSkew => "struct_mean_skew",
            FeatureSet::MeanOnly => "mean_only",
            FeatureSet::PotentialOnly => "potential_only",
        }
    }

    fn uses_struct(self) -> bool {
        matches!(
            self,
            FeatureSet::StructOnly | FeatureSet::StructMean | FeatureSet::StructMeanSkew
        )
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let allowed: Vec<_> = FeatureSet::ALL.iter().map(|f| f.name()).collect();
                Error::InvalidParameter(format!(
                    "unknown feature set '{s}', expected one of {}",
                    allowed.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// One row per node.
    pub z: DMatrix<f64>,
    pub feature_set: FeatureSet,
    pub columns: Vec<String>,
    /// Constant columns left out.
    pub dropped: Vec<String>,
}

fn is_constant(col: &[f64]) -> bool {
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let spread = col.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    spread <= 1e-12 * mean.abs().max(1.0)
}

fn standardize(col: &mut [f64]) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
}

/// Builds the node embedding for `feature_set`.
///
/// The structural block holds the `k` smallest non-null eigenvectors of the
/// Laplacian weighted by mean volume. When more than one block is selected,
/// every column is z-scored and the structural columns are scaled by `1/√k`
/// so the block as a whole carries the weight of one feature.
pub fn flow_embedding(
    g: &FlowGraph,
    fwd: &[f64],
    rev: &[f64],
    k: usize,
    feature_set: FeatureSet,
) -> Result<EmbeddingMatrix> {
    if g.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    check_len("forward volumes", g.edge_count(), fwd.len())?;
    let edge = mean_skew(fwd, rev)?;
    if k == 0 && feature_set.uses_struct() {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }

    let mut blocks: Vec<(Vec<(String, Vec<f64>)>, bool)> = Vec::new();
    if feature_set.uses_struct() {
        if edge.m.iter().all(|&m| m == 0.0) {
            return Err(Error::InvalidParameter("every mean flow is zero".into()));
        }
        let l = SimilarityMatrix::from_graph(g, &edge.m)?.laplacian();
        let e = smallest_eigenpairs(&l, k, true, STRUCT_TOL)?;
        let cols = (0..k)
            .map(|j| (format!("struct_{j}"), e.vectors.column(j).iter().copied().collect()))
            .collect();
        blocks.push((cols, true));
    }
    let needs_nodes = matches!(
        feature_set,
        FeatureSet::StructMean | FeatureSet::StructMeanSkew | FeatureSet::MeanOnly
    );
    if needs_nodes {
        let node = node_flow_features(g, &edge, None)?;
        blocks.push((vec![("z_mean".into(), node.z_mean)], false));
        if feature_set == FeatureSet::StructMeanSkew {
            blocks.push((vec![("z_skew".into(), node.z_skew)], false));
        }
    }
    if feature_set == FeatureSet::PotentialOnly {
        let f = net_flow(fwd, rev)?;
        let p = solve_potential(g, &f, &SolverOptions::default())?;
        blocks.push((vec![("potential".into(), p.values)], false));
    }

    let combine = blocks.len() > 1;
    let mut columns = Vec::new();
    let mut names = Vec::new();
    let mut dropped = Vec::new();
    for (cols, structural) in blocks {
        let scale = if structural { 1.0 / (k as f64).sqrt() } else { 1.0 };
        for (name, mut col) in cols {
            if is_constant(&col) {
                log::warn!("dropping constant feature column {name}");
                dropped.push(name);
                continue;
            }
            if combine {
                standardize(&mut col);
                col.iter_mut().for_each(|v| *v *= scale);
            }
            names.push(name);
            columns.push(col);
        }
    }
    if columns.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "every column of feature set {feature_set} is constant"
        )));
    }
    let n = g.node_count();
    let z = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Ok(EmbeddingMatrix {
        z,
        feature_set,
        columns: names,
        dropped,
    })
}

/// k-means on the rows of [`flow_embedding`] with a structural block of
/// `k` eigenvectors.
pub fn cluster_flow_graph(
    g: &FlowGraph,
    fwd: &[f64],
    rev: &[f64],
    k: usize,
    feature_set: FeatureSet,
    seed: u64,
) -> Result<ClusterAssignment> {
    let emb = flow_embedding(g, fwd, rev, k, feature_set)?;
    kmeans(&emb.z, k, seed)
}
