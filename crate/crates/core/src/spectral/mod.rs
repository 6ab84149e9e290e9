//! Spectral clustering on node similarity graphs.

mod eigen;
mod kmeans;
mod quality;
mod similarity;

pub use eigen::{smallest_eigenpairs, smallest_eigenpairs_with, EigenOptions, NULL_THRESHOLD};
pub use kmeans::{kmeans, kmeans_with, KMeansOptions};
pub use quality::{adjusted_rand_index, silhouette};
pub use similarity::{
    blend_distance, gaussian_similarity, median_bandwidth, symmetrize_mean, volume_kernel,
    SimilarityMatrix,
};

pub(crate) use eigen::fix_signs;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutVariant {
    #[default]
    RatioCut,
    NormalizedCut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// One row per node, one column per eigenpair.
    pub vectors: DMatrix<f64>,
    pub variant: CutVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster per node in `0..k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Within-cluster sum of squared distances of the clustered points.
    pub inertia: f64,
    pub seed: u64,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Relaxed cut embedding: the `k` smallest eigenvectors of `L = D - S`, or of
/// `D^{-1/2} L D^{-1/2}` mapped back through `D^{-1/2}` for the normalized
/// variant. Null eigenvectors are kept since they carry the component
/// indicators.
pub fn spectral_embedding(
    s: &SimilarityMatrix,
    k: usize,
    variant: CutVariant,
) -> Result<SpectralEmbedding> {
    spectral_embedding_with(s, k, variant, &EigenOptions::default())
}

pub fn spectral_embedding_with(
    s: &SimilarityMatrix,
    k: usize,
    variant: CutVariant,
    opts: &EigenOptions,
) -> Result<SpectralEmbedding> {
    if s.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    // isolated rows make both relaxations meaningless
    let inv_sqrt = s.inv_sqrt_degrees()?;
    if k > s.node_count() {
        return Err(Error::SpectrumExhausted {
            requested: k,
            available: s.node_count(),
        });
    }
    match variant {
        CutVariant::RatioCut => {
            let mut e = smallest_eigenpairs_with(&s.laplacian(), k, false, opts)?;
            e.variant = CutVariant::RatioCut;
            Ok(e)
        }
        CutVariant::NormalizedCut => {
            let e = smallest_eigenpairs_with(&s.normalized_laplacian()?, k, false, opts)?;
            let mut vectors = e.vectors;
            for (mut row, w) in vectors.row_iter_mut().zip(&inv_sqrt) {
                row *= *w;
            }
            fix_signs(&mut vectors);
            Ok(SpectralEmbedding {
                eigenvalues: e.eigenvalues,
                vectors,
                variant: CutVariant::NormalizedCut,
            })
        }
    }
}

/// Spectral clustering into `k` groups: k-means on the rows of the relaxed
/// cut embedding.
pub fn spectral_cluster(
    s: &SimilarityMatrix,
    k: usize,
    variant: CutVariant,
    seed: u64,
) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::InvalidParameter("cluster count must be at least 1".into()));
    }
    let e = spectral_embedding(s, k, variant)?;
    kmeans(&e.vectors, k, seed)
}

/// `Σ_c cut(A_c, Ā_c) / |A_c|` over the nonempty clusters.
pub fn ratio_cut(s: &SimilarityMatrix, labels: &[usize]) -> Result<f64> {
    cut_objective(s, labels, |members, _| members as f64)
}

/// `Σ_c cut(A_c, Ā_c) / vol(A_c)` over the nonempty clusters.
pub fn normalized_cut(s: &SimilarityMatrix, labels: &[usize]) -> Result<f64> {
    cut_objective(s, labels, |_, volume| volume)
}

fn cut_objective(
    s: &SimilarityMatrix,
    labels: &[usize],
    size: impl Fn(usize, f64) -> f64,
) -> Result<f64> {
    check_len("labels", s.node_count(), labels.len())?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cut = vec![0.0; k];
    let mut count = vec![0usize; k];
    let mut volume = vec![0.0; k];
    for (i, d) in s.degrees().into_iter().enumerate() {
        count[labels[i]] += 1;
        volume[labels[i]] += d;
    }
    for &(i, j, w) in s.entries() {
        if labels[i] != labels[j] {
            cut[labels[i]] += w;
            cut[labels[j]] += w;
        }
    }
    Ok((0..k)
        .filter(|&c| count[c] > 0)
        .map(|c| {
            let denom = size(count[c], volume[c]);
            if cut[c] == 0.0 {
                0.0
            } else {
                cut[c] / denom
            }
        })
        .sum())
}
