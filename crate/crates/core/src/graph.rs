//! Graph representation, canonical edge orientation, triangle enumeration and
//! the boundary operators built from them.
//!
//! Every edge is stored once with `tail < head`, and the edge list is sorted
//! lexicographically. Edge flows are signed along that orientation, so the
//! incidence (gradient) operator has `-1` at the tail and `+1` at the head.

use std::collections::VecDeque;

use crate::error::{check_len, check_nonnegative, Error, Result};
use crate::sparse::SparseOperator;

/// Planar coordinate in arbitrary units (meters after projection).
pub type Coord = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    node_count: usize,
    coords: Option<Vec<Coord>>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Where an input pair ended up after canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEdge {
    pub edge: usize,
    /// The input was given as `(head, tail)` and its flow must be negated.
    pub flipped: bool,
}

/// Output of [`build_graph`]: the graph plus a map from input pairs to
/// canonical edges.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: FlowGraph,
    pub inputs: Vec<InputEdge>,
}

impl BuiltGraph {
    /// Flip flags in input order.
    pub fn flipped(&self) -> Vec<bool> {
        self.inputs.iter().map(|i| i.flipped).collect()
    }

    /// Converts per-input signed flows into a canonical edge flow. Flows on
    /// flipped inputs are negated and duplicate pairs are summed.
    pub fn remap_flows(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_len("input flows", self.inputs.len(), raw.len())?;
        let mut out = vec![0.0; self.graph.edge_count()];
        for (input, &v) in self.inputs.iter().zip(raw) {
            out[input.edge] += if input.flipped { -v } else { v };
        }
        Ok(out)
    }

    /// Same for nonnegative directed volume pairs: flipped inputs swap their
    /// forward and reverse volumes.
    pub fn remap_volumes(&self, fwd: &[f64], rev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("forward volumes", self.inputs.len(), fwd.len())?;
        check_len("reverse volumes", self.inputs.len(), rev.len())?;
        let m = self.graph.edge_count();
        let (mut out_f, mut out_r) = (vec![0.0; m], vec![0.0; m]);
        for ((input, &a), &b) in self.inputs.iter().zip(fwd).zip(rev) {
            let (a, b) = if input.flipped { (b, a) } else { (a, b) };
            out_f[input.edge] += a;
            out_r[input.edge] += b;
        }
        Ok((out_f, out_r))
    }
}

/// Canonicalizes `raw_edges` into a [`FlowGraph`].
///
/// Pairs are oriented so that `tail < head`; repeated node pairs collapse to a
/// single edge.
pub fn build_graph(
    raw_edges: &[(usize, usize)],
    node_count: usize,
    coords: Option<Vec<Coord>>,
) -> Result<BuiltGraph> {
    if let Some(c) = &coords {
        if c.len() != node_count {
            return Err(Error::CoordinateCount {
                expected: node_count,
                got: c.len(),
            });
        }
        for (i, p) in c.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::NonFinite {
                    what: "coordinates",
                    index: i,
                });
            }
        }
    }
    let mut canonical = Vec::with_capacity(raw_edges.len());
    for &(u, v) in raw_edges {
        for id in [u, v] {
            if id >= node_count {
                return Err(Error::NodeOutOfRange { id, node_count });
            }
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        canonical.push(if u < v { (u, v) } else { (v, u) });
    }
    let mut edges = canonical.clone();
    edges.sort_unstable();
    edges.dedup();

    let inputs = raw_edges
        .iter()
        .zip(&canonical)
        .map(|(&(u, v), key)| InputEdge {
            edge: edges.binary_search(key).expect("canonical edge present"),
            flipped: u > v,
        })
        .collect();

    let graph = FlowGraph::from_sorted_edges(node_count, edges, coords);
    Ok(BuiltGraph { graph, inputs })
}

impl FlowGraph {
    fn from_sorted_edges(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        coords: Option<Vec<Coord>>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(t, h) in &edges {
            adjacency[t].push(h);
            adjacency[h].push(t);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            node_count,
            coords,
            edges,
            adjacency,
        }
    }

    /// Builds a graph from an edge list that must already be canonical
    /// (no duplicates, no self-loops); orientation and order are normalized.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Ok(build_graph(edges, node_count, None)?.graph)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn coords(&self) -> Option<&[Coord]> {
        self.coords.as_deref()
    }

    pub fn with_coords(mut self, coords: Vec<Coord>) -> Result<Self> {
        check_len("coordinates", self.node_count, coords.len())?;
        self.coords = Some(coords);
        Ok(self)
    }

    /// Index of the canonical edge joining `u` and `v`, in either order.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).ok()
    }
}

/// Triangles (3-cliques) of a graph together with their boundary edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleSet {
    /// Node triples `(i, j, k)` with `i < j < k`, sorted.
    pub triangles: Vec<[usize; 3]>,
    /// Edge indices of `(i, j)`, `(i, k)` and `(j, k)` for each triangle.
    pub edges: Vec<[usize; 3]>,
}

impl TriangleSet {
    /// Orientation signs of the boundary edges `(i, j)`, `(i, k)`, `(j, k)`:
    /// the curl of a triangle is `g_ij - g_ik + g_jk`.
    pub const SIGNS: [f64; 3] = [1.0, -1.0, 1.0];

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

pub fn enumerate_triangles(g: &FlowGraph) -> TriangleSet {
    let mut set = TriangleSet::default();
    for (e_ij, &(i, j)) in g.edges.iter().enumerate() {
        // merge the sorted neighbor lists above j
        let (a, b) = (&g.adjacency[i], &g.adjacency[j]);
        let mut p = a.partition_point(|&x| x <= j);
        let mut q = b.partition_point(|&x| x <= j);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let k = a[p];
                    let e_ik = g.edge_index(i, k).expect("neighbor edge");
                    let e_jk = g.edge_index(j, k).expect("neighbor edge");
                    set.triangles.push([i, j, k]);
                    set.edges.push([e_ij, e_ik, e_jk]);
                    p += 1;
                    q += 1;
                }
            }
        }
    }
    set
}

/// Gradient operator `|E| x |V|`: `(grad p)_e = p_head - p_tail`.
pub fn incidence_matrix(g: &FlowGraph) -> SparseOperator {
    let triplets = g
        .edges
        .iter()
        .enumerate()
        .flat_map(|(e, &(t, h))| [(e, t, -1.0), (e, h, 1.0)]);
    SparseOperator::from_triplets(g.edge_count(), g.node_count, triplets)
        .expect("edge endpoints are in range")
}

/// Curl operator `|T| x |E|` with rows `+1` on `(i, j)`, `-1` on `(i, k)` and
/// `+1` on `(j, k)`.
pub fn curl_matrix(g: &FlowGraph, t: &TriangleSet) -> Result<SparseOperator> {
    let mut triplets = Vec::with_capacity(3 * t.len());
    for (row, &[i, j, k]) in t.triangles.iter().enumerate() {
        let (Some(ij), Some(ik), Some(jk)) =
            (g.edge_index(i, j), g.edge_index(i, k), g.edge_index(j, k))
        else {
            return Err(Error::MissingEdge(i, j, k));
        };
        for (e, s) in [ij, ik, jk].into_iter().zip(TriangleSet::SIGNS) {
            triplets.push((row, e, s));
        }
    }
    SparseOperator::from_triplets(t.len(), g.edge_count(), triplets)
}

/// Weighted graph Laplacian `gradᵀ diag(w) grad`; unit weights by default.
pub fn graph_laplacian(g: &FlowGraph, edge_weights: Option<&[f64]>) -> Result<SparseOperator> {
    if let Some(w) = edge_weights {
        check_len("edge weights", g.edge_count(), w.len())?;
        check_nonnegative("edge weights", w)?;
    }
    let mut diag = vec![0.0; g.node_count];
    let mut triplets = Vec::with_capacity(2 * g.edge_count() + g.node_count);
    for (e, &(t, h)) in g.edges.iter().enumerate() {
        let w = edge_weights.map_or(1.0, |w| w[e]);
        diag[t] += w;
        diag[h] += w;
        triplets.push((t, h, -w));
        triplets.push((h, t, -w));
    }
    triplets.extend(diag.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    SparseOperator::from_triplets(g.node_count, g.node_count, triplets)
}

/// Component labels `0..c`, numbered in order of each component's smallest
/// node.
pub fn connected_components(g: &FlowGraph) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let mut labels = vec![UNSEEN; g.node_count];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..g.node_count {
        if labels[start] != UNSEEN {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &g.adjacency[u] {
                if labels[v] == UNSEEN {
                    labels[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    labels
}

pub fn component_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}
