use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::tables::{DetectorPoint, FlowSlice, SegmentRecord};
use crate::error::{Error, Result};
use crate::graph::{Coord, FlowGraph};

/// Mean earth radius in meters.
const EARTH_RADIUS: f64 = 6_371_008.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    /// Detector id to merged node.
    pub assignment: BTreeMap<String, usize>,
    /// Member mean per merged node.
    pub centroids: Vec<Coord>,
    /// Smallest member id per merged node, used as its external id.
    pub node_ids: Vec<String>,
    pub radius: f64,
}

impl MergeResult {
    pub fn node_count(&self) -> usize {
        self.centroids.len()
    }
}

/// Replaces `x` = longitude and `y` = latitude in degrees by planar meters
/// around the centroid of the points.
pub fn project_equirectangular(points: &mut [DetectorPoint]) {
    if points.is_empty() {
        return;
    }
    let n = points.len() as f64;
    let lon0 = points.iter().map(|p| p.x).sum::<f64>() / n;
    let lat0 = points.iter().map(|p| p.y).sum::<f64>() / n;
    let k = EARTH_RADIUS * std::f64::consts::PI / 180.0;
    let shrink = lat0.to_radians().cos();
    for p in points {
        p.x = k * (p.x - lon0) * shrink;
        p.y = k * (p.y - lat0);
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-link clustering: points closer than `radius`, directly or through
/// a chain, share a node. Nodes are numbered by their smallest member id.
pub fn merge_detectors(points: &[DetectorPoint], radius: f64) -> Result<MergeResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput("detector list"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("merge radius must be positive, got {radius}")));
    }
    let mut sorted: Vec<&DetectorPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidParameter(format!("duplicate detector id `{}`", w[0].id)));
    }
    for (i, p) in sorted.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::NonFinite { what: "detector coordinates", index: i });
        }
    }

    let cell = |p: &DetectorPoint| ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in sorted.iter().enumerate() {
        buckets.entry(cell(p)).or_default().push(i);
    }
    let mut parent: Vec<usize> = (0..sorted.len()).collect();
    let r2 = radius * radius;
    for (i, p) in sorted.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = buckets.get(&(cx + dx, cy + dy)) else { continue };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let q = sorted[j];
                    if (p.x - q.x).powi(2) + (p.y - q.y).powi(2) <= r2 {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }

    // roots are the smallest sorted index of each cluster, so scanning in order
    // numbers clusters by their smallest id
    let mut node_of_root: HashMap<usize, usize> = HashMap::new();
    let mut sums: Vec<(f64, f64, usize)> = Vec::new();
    let mut node_ids = Vec::new();
    let mut assignment = BTreeMap::new();
    for (i, p) in sorted.iter().enumerate() {
        let root = find(&mut parent, i);
        let node = *node_of_root.entry(root).or_insert_with(|| {
            sums.push((0.0, 0.0, 0));
            node_ids.push(p.id.clone());
            sums.len() - 1
        });
        sums[node].0 += p.x;
        sums[node].1 += p.y;
        sums[node].2 += 1;
        assignment.insert(p.id.clone(), node);
    }
    let centroids = sums
        .into_iter()
        .map(|(x, y, c)| [x / c as f64, y / c as f64])
        .collect();
    Ok(MergeResult {
        assignment,
        centroids,
        node_ids,
        radius,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub merge: MergeResult,
    /// Nodes are merged intersections with centroid coordinates.
    pub graph: FlowGraph,
    pub slices: Vec<FlowSlice>,
    /// Segments whose two ends fell into the same node.
    pub dropped_self_edges: usize,
}

impl RoadNetwork {
    pub fn ids(&self) -> &[String] {
        &self.merge.node_ids
    }
}

/// Road graph between merged intersections. Parallel segments add up and
/// segments collapsed by the merge are dropped.
pub fn build_road_network(
    points: &[DetectorPoint],
    segments: &[SegmentRecord],
    radius: f64,
) -> Result<RoadNetwork> {
    if segments.is_empty() {
        return Err(Error::EmptyInput("segment list"));
    }
    let merge = merge_detectors(points, radius)?;
    let node = |id: &str| {
        merge
            .assignment
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownDetector(id.to_string()))
    };

    let mut cells: BTreeMap<(usize, usize), BTreeMap<Option<u32>, (f64, f64)>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    let mut dropped = 0;
    for s in segments {
        if !seen.insert((s.segment_id.as_str(), s.timestamp)) {
            return Err(Error::InvalidParameter(format!(
                "segment `{}` appears twice in slice {:?}",
                s.segment_id, s.timestamp
            )));
        }
        let (a, b) = (node(&s.det_a)?, node(&s.det_b)?);
        if a == b {
            dropped += 1;
            continue;
        }
        let (f, r) = if a < b { (s.fwd, s.rev) } else { (s.rev, s.fwd) };
        let cell = cells
            .entry((a.min(b), a.max(b)))
            .or_default()
            .entry(s.timestamp)
            .or_insert((0.0, 0.0));
        cell.0 += f;
        cell.1 += r;
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} segment records whose endpoints merged into one node");
    }

    let edges: Vec<(usize, usize)> = cells.keys().copied().collect();
    let graph = FlowGraph::from_edges(merge.node_count(), &edges)?.with_coords(merge.centroids.clone())?;
    let mut stamps: Vec<Option<u32>> = segments.iter().map(|s| s.timestamp).collect();
    stamps.sort();
    stamps.dedup();
    let slices = stamps
        .into_iter()
        .map(|ts| {
            let (fwd, rev) = cells
                .values()
                .map(|by_ts| by_ts.get(&ts).copied().unwrap_or((0.0, 0.0)))
                .unzip();
            FlowSlice { timestamp: ts, fwd, rev }
        })
        .collect();
    Ok(RoadNetwork {
        merge,
        graph,
        slices,
        dropped_self_edges: dropped,
    })
}
