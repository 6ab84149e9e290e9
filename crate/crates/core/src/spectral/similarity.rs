use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_nonnegative, Error, Result};
use crate::graph::FlowGraph;
use crate::sparse::SparseOperator;

/// Symmetric nonnegative node similarity with zero diagonal, stored once per
/// unordered pair. The support is fixed at construction; zero weights stay in
/// it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    node_count: usize,
    /// `(i, j, w)` with `i < j`, sorted by `(i, j)`.
    entries: Vec<(usize, usize, f64)>,
}

impl SimilarityMatrix {
    /// Similarity supported on the edges of `g` with one weight per edge.
    pub fn from_graph(g: &FlowGraph, weights: &[f64]) -> Result<Self> {
        check_len("similarity weights", g.edge_count(), weights.len())?;
        check_nonnegative("similarity weights", weights)?;
        let entries = g
            .edges()
            .iter()
            .zip(weights)
            .map(|(&(i, j), &w)| (i, j, w))
            .collect();
        Ok(Self {
            node_count: g.node_count(),
            entries,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.2)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&key))
            .map_or(0.0, |pos| self.entries[pos].2)
    }

    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.node_count];
        for &(i, j, w) in &self.entries {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    /// `L = D - S`.
    pub fn laplacian(&self) -> SparseOperator {
        let mut triplets = Vec::with_capacity(2 * self.entries.len() + self.node_count);
        for &(i, j, w) in &self.entries {
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
        }
        triplets.extend(self.degrees().into_iter().enumerate().map(|(i, d)| (i, i, d)));
        SparseOperator::from_triplets(self.node_count, self.node_count, triplets)
            .expect("pairs are in range")
    }

    /// `D^{-1/2} L D^{-1/2}`; every node needs positive degree.
    pub fn normalized_laplacian(&self) -> Result<SparseOperator> {
        let inv_sqrt = self.inv_sqrt_degrees()?;
        self.laplacian().scale_rows(&inv_sqrt)?.scale_cols(&inv_sqrt)
    }

    pub(crate) fn inv_sqrt_degrees(&self) -> Result<Vec<f64>> {
        self.degrees()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d > 0.0 {
                    Ok(1.0 / d.sqrt())
                } else {
                    Err(Error::IsolatedNode(i))
                }
            })
            .collect()
    }
}

/// Mean of the two directed volumes on each edge.
pub fn symmetrize_mean(fwd: &[f64], rev: &[f64]) -> Result<Vec<f64>> {
    check_len("reverse volumes", fwd.len(), rev.len())?;
    check_nonnegative("forward volumes", fwd)?;
    check_nonnegative("reverse volumes", rev)?;
    Ok(fwd.iter().zip(rev).map(|(a, b)| (a + b) / 2.0).collect())
}

/// Median of the strictly positive values, the default kernel bandwidth.
pub fn median_bandwidth(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| *x > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Monotone Gaussian kernel `1 - exp(-m² / 2σ²)`: zero volume maps to zero
/// similarity and larger volumes to larger similarity.
pub fn volume_kernel(volume: f64, sigma: f64) -> f64 {
    1.0 - (-(volume * volume) / (2.0 * sigma * sigma)).exp()
}

/// Similarity from per-edge mean volumes; `sigma = None` uses
/// [`median_bandwidth`].
pub fn gaussian_similarity(
    g: &FlowGraph,
    volumes: &[f64],
    sigma: Option<f64>,
) -> Result<SimilarityMatrix> {
    check_len("volumes", g.edge_count(), volumes.len())?;
    check_nonnegative("volumes", volumes)?;
    let sigma = match sigma {
        Some(s) => s,
        None => median_bandwidth(volumes).unwrap_or(1.0),
    };
    check_bandwidth(sigma)?;
    let weights: Vec<f64> = volumes.iter().map(|&m| volume_kernel(m, sigma)).collect();
    SimilarityMatrix::from_graph(g, &weights)
}

/// Convex combination `α s_flow + (1 - α) exp(-dist² / 2σ_d²)` over the
/// support of `s_flow`.
pub fn blend_distance(
    s_flow: &SimilarityMatrix,
    coords: Option<&[[f64; 2]]>,
    sigma_d: Option<f64>,
    alpha: f64,
) -> Result<SimilarityMatrix> {
    let coords = coords.ok_or(Error::MissingCoordinates("distance blending"))?;
    check_len("coordinates", s_flow.node_count, coords.len())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "blend weight must lie in [0, 1], got {alpha}"
        )));
    }
    let dist = |i: usize, j: usize| -> f64 {
        let (a, b) = (coords[i], coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    };
    let lengths: Vec<f64> = s_flow.entries.iter().map(|&(i, j, _)| dist(i, j)).collect();
    let sigma_d = match sigma_d {
        Some(s) => s,
        None => median_bandwidth(&lengths).unwrap_or(1.0),
    };
    check_bandwidth(sigma_d)?;
    let entries = s_flow
        .entries
        .iter()
        .zip(&lengths)
        .map(|(&(i, j, w), &d)| {
            let near = (-(d * d) / (2.0 * sigma_d * sigma_d)).exp();
            (i, j, alpha * w + (1.0 - alpha) * near)
        })
        .collect();
    Ok(SimilarityMatrix {
        node_count: s_flow.node_count,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetrize_examples() {
        assert_eq!(
            symmetrize_mean(&[10.0, 0.0, 5.0], &[4.0, 0.0, 5.0]).unwrap(),
            vec![7.0, 0.0, 5.0]
        );
        assert!(symmetrize_mean(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn kernel_values() {
        let g = FlowGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = gaussian_similarity(&g, &[0.0, 1.0], Some(1.0)).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
        assert_abs_diff_eq!(s.get(2, 1), 1.0 - (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(1, 2), 0.393_469_340_287_366_6, epsilon = 1e-15);
        assert!(gaussian_similarity(&g, &[0.0, 1.0], Some(0.0)).is_err());
        assert!(gaussian_similarity(&g, &[0.0, 1.0], Some(-2.0)).is_err());
    }

    #[test]
    fn kernel_is_increasing() {
        let mut prev = -1.0;
        for i in 0..100 {
            let s = volume_kernel(i as f64 * 0.05, 1.0);
            assert!(s > prev && s < 1.0);
            prev = s;
        }
    }

    #[test]
    fn median_bandwidth_skips_zeros() {
        assert_eq!(median_bandwidth(&[0.0, 3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median_bandwidth(&[0.0, 4.0, 2.0, 0.0, 1.0, 3.0]), Some(2.5));
        assert_eq!(median_bandwidth(&[0.0]), None);
    }

    #[test]
    fn blend_cases() {
        let g = FlowGraph::from_edges(2, &[(0, 1)]).unwrap();
        let s = SimilarityMatrix::from_graph(&g, &[0.4]).unwrap();
        let sigma = 2.0;
        // place the nodes so the distance kernel is exactly 0.8
        let d = (-2.0 * sigma * sigma * 0.8f64.ln()).sqrt();
        let coords = [[0.0, 0.0], [d, 0.0]];

        let same = blend_distance(&s, Some(&coords), Some(sigma), 1.0).unwrap();
        assert_eq!(same, s);

        let half = blend_distance(&s, Some(&coords), Some(sigma), 0.5).unwrap();
        assert_abs_diff_eq!(half.get(0, 1), 0.6, epsilon = 1e-12);

        let stacked = blend_distance(&s, Some(&[[1.0, 1.0], [1.0, 1.0]]), Some(sigma), 0.0).unwrap();
        assert_eq!(stacked.get(0, 1), 1.0);

        assert!(matches!(
            blend_distance(&s, None, None, 0.5),
            Err(Error::MissingCoordinates(_))
        ));
        assert!(blend_distance(&s, Some(&coords), None, 1.5).is_err());
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = FlowGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let s = SimilarityMatrix::from_graph(&g, &[0.5, 1.0, 0.25, 2.0]).unwrap();
        let l = s.laplacian();
        assert!(l.is_symmetric(0.0));
        for r in 0..4 {
            assert!(l.row(r).map(|(_, v)| v).sum::<f64>().abs() < 1e-12);
        }
        let isolated = SimilarityMatrix::from_graph(
            &FlowGraph::from_edges(3, &[(0, 1)]).unwrap(),
            &[1.0],
        )
        .unwrap();
        assert!(matches!(
            isolated.normalized_laplacian(),
            Err(Error::IsolatedNode(2))
        ));
    }
}
