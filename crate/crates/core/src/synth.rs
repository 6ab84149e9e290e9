//! Seeded generators for dense OD graphs, lattice road networks and planted
//! flows with known parts.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::{
    component_count, connected_components, curl_matrix, enumerate_triangles, graph_laplacian,
    incidence_matrix, FlowGraph,
};
use crate::hodge::{harmonic_dimension, hodge_decompose, EdgeFlow, FieldKind, NodeField, SolverOptions};
use crate::io::{DetectorPoint, FlowSlice, SegmentRecord};
use crate::spectral::smallest_eigenpairs;

/// Regeneration attempts for a disconnected OD draw.
pub const MAX_ATTEMPTS: usize = 10;

/// Low-frequency Laplacian modes mixed into a planted potential.
pub const SMOOTH_MODES: usize = 8;

/// Mean base volume per edge in [`planted_community_flows`].
pub const COMMUNITY_BASE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Morning,
    Evening,
}

impl Phase {
    /// Slice start in minutes after midnight: 08:30 and 18:30.
    pub fn minutes(self) -> u32 {
        match self {
            Phase::Morning => 8 * 60 + 30,
            Phase::Evening => 18 * 60 + 30,
        }
    }

    fn stream(self) -> u64 {
        match self {
            Phase::Morning => 1,
            Phase::Evening => 2,
        }
    }
}

fn phase_rng(seed: u64, phase: Phase) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase.stream());
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdSpec {
    pub n: usize,
    pub edge_prob: f64,
    /// Share of nodes acting as hubs.
    pub hub_fraction: f64,
    /// Factor on the mean volume flowing into hubs in the morning and out of
    /// them in the evening.
    pub hub_weight_multiplier: f64,
    /// Link probability for pairs touching a hub.
    pub hub_edge_prob: f64,
    /// Poisson mean per direction before the hub factor.
    pub base_volume: f64,
    pub seed: u64,
}

impl Default for OdSpec {
    fn default() -> Self {
        Self {
            n: 300,
            edge_prob: 0.5,
            hub_fraction: 0.05,
            hub_weight_multiplier: 2.0,
            hub_edge_prob: 0.75,
            base_volume: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block length in meters.
    pub spacing: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            spacing: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    ErOd(OdSpec),
    Grid(GridSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumePair {
    pub fwd: Vec<f64>,
    pub rev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdNetwork {
    /// External ids, zero-padded so lexicographic order is node order.
    pub ids: Vec<String>,
    pub graph: FlowGraph,
    pub hubs: Vec<usize>,
    pub morning: VolumePair,
    pub evening: VolumePair,
    /// Draws needed to get a connected graph.
    pub attempts: usize,
}

impl OdNetwork {
    pub fn slice(&self, phase: Phase) -> &VolumePair {
        match phase {
            Phase::Morning => &self.morning,
            Phase::Evening => &self.evening,
        }
    }
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must lie in (0, 1], got {p}")))
    }
}

fn padded_ids(prefix: char, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Dense random OD graph with hubs.
///
/// Pairs link independently; pairs touching a hub use `hub_edge_prob`. The
/// morning slice sends `hub_weight_multiplier` times the base volume into
/// hubs and the evening slice sends it out of them. Disconnected draws are
/// redrawn up to [`MAX_ATTEMPTS`] times.
pub fn er_od_graph(spec: &OdSpec) -> Result<OdNetwork> {
    let n = spec.n;
    if n < 10 {
        return Err(Error::InvalidParameter(format!("OD graph needs n >= 10, got {n}")));
    }
    check_prob("edge probability", spec.edge_prob)?;
    check_prob("hub edge probability", spec.hub_edge_prob)?;
    if !(0.0..1.0).contains(&spec.hub_fraction) {
        return Err(Error::InvalidParameter(format!(
            "hub fraction must lie in [0, 1), got {}",
            spec.hub_fraction
        )));
    }
    if !(spec.hub_weight_multiplier >= 0.0) || !(spec.base_volume > 0.0) {
        return Err(Error::InvalidParameter(
            "hub multiplier must be nonnegative and base volume positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hub_count = (spec.hub_fraction * n as f64).round() as usize;
    let mut hubs = sample(&mut rng, n, hub_count).into_vec();
    hubs.sort_unstable();
    let mut is_hub = vec![false; n];
    hubs.iter().for_each(|&h| is_hub[h] = true);

    for attempt in 1..=MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if is_hub[i] || is_hub[j] {
                    spec.hub_edge_prob
                } else {
                    spec.edge_prob
                };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let graph = FlowGraph::from_edges(n, &edges)?;
        if component_count(&connected_components(&graph)) != 1 {
            log::debug!("OD draw {attempt} is disconnected, redrawing");
            continue;
        }
        let volumes = |phase: Phase| -> Result<VolumePair> {
            let mut rng = phase_rng(spec.seed, phase);
            let mult = spec.hub_weight_multiplier;
            let mean = |boost: bool| spec.base_volume * if boost { mult } else { 1.0 };
            let mut draw = |lambda: f64| -> Result<f64> {
                if lambda == 0.0 {
                    return Ok(0.0);
                }
                let d = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(d.sample(&mut rng))
            };
            let mut pair = VolumePair {
                fwd: Vec::with_capacity(edges.len()),
                rev: Vec::with_capacity(edges.len()),
            };
            for &(t, h) in graph.edges() {
                // morning boosts traffic arriving at a hub, evening traffic leaving one
                let (into_h, into_t) = match phase {
                    Phase::Morning => (is_hub[h], is_hub[t]),
                    Phase::Evening => (is_hub[t], is_hub[h]),
                };
                pair.fwd.push(draw(mean(into_h))?);
                pair.rev.push(draw(mean(into_t))?);
            }
            Ok(pair)
        };
        return Ok(OdNetwork {
            ids: padded_ids('n', n),
            morning: volumes(Phase::Morning)?,
            evening: volumes(Phase::Evening)?,
            graph,
            hubs,
            attempts: attempt,
        });
    }
    Err(Error::Disconnected(MAX_ATTEMPTS))
}

/// 4-neighbor lattice in row-major node order with coordinates in meters.
pub fn grid_network(spec: &GridSpec) -> Result<FlowGraph> {
    if spec.rows < 3 || spec.cols < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 3x3, got {}x{}",
            spec.rows, spec.cols
        )));
    }
    if !(spec.spacing > 0.0) {
        return Err(Error::InvalidParameter("grid spacing must be positive".into()));
    }
    let (rows, cols) = (spec.rows, spec.cols);
    let mut edges = Vec::with_capacity(2 * rows * cols);
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            coords.push([c as f64 * spec.spacing, r as f64 * spec.spacing]);
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    FlowGraph::from_edges(rows * cols, &edges)?.with_coords(coords)
}

/// Root-mean-square size per edge of each planted part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantStrengths {
    pub potential: f64,
    pub curl: f64,
    pub harmonic: f64,
    /// Standard deviation of the Gaussian edge noise.
    pub noise: f64,
}

impl PlantStrengths {
    pub fn gradient_only() -> Self {
        Self {
            potential: 1.0,
            curl: 0.0,
            harmonic: 0.0,
            noise: 0.0,
        }
    }

    /// Unit gradient with Gaussian noise carrying `share` of the expected
    /// total energy.
    pub fn with_noise_share(share: f64) -> Self {
        Self {
            noise: (share / (1.0 - share)).sqrt(),
            ..Self::gradient_only()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFlow {
    pub potential_true: NodeField,
    pub phase: Phase,
    pub strengths: PlantStrengths,
    pub gradient: Vec<f64>,
    pub curl_part: Vec<f64>,
    pub harmonic_part: Vec<f64>,
    pub noise: Vec<f64>,
    pub flow: EdgeFlow,
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn rescale(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..len).map(|_| normal.sample(rng)).collect()
}

/// Edge flow with a known potential plus curl, harmonic and noise parts.
///
/// The potential mixes the lowest non-null Laplacian modes with weights
/// drawn from `seed` alone, so both phases share it up to sign; the evening
/// phase negates it. The other parts are drawn from a phase-specific stream.
pub fn planted_flow(
    g: &FlowGraph,
    strengths: &PlantStrengths,
    phase: Phase,
    seed: u64,
) -> Result<PlantedFlow> {
    let s = strengths;
    for (what, v) in [
        ("potential strength", s.potential),
        ("curl strength", s.curl),
        ("harmonic strength", s.harmonic),
        ("noise", s.noise),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{what} must be nonnegative, got {v}")));
        }
    }
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = g.node_count();
    let m = g.edge_count();
    let grad = incidence_matrix(g);

    let mut potential = vec![0.0; n];
    if s.potential > 0.0 {
        let nulls = component_count(&connected_components(g));
        let modes = SMOOTH_MODES.min(n - nulls);
        let l = graph_laplacian(g, None)?;
        let e = smallest_eigenpairs(&l, modes, true, 1e-8)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = gaussian(&mut rng, modes);
        for (j, w) in weights.iter().enumerate() {
            for (p, v) in potential.iter_mut().zip(e.vectors.column(j).iter()) {
                *p += w * v;
            }
        }
        let scale = s.potential / rms(&grad.matvec(&potential)?);
        let sign = if phase == Phase::Evening { -1.0 } else { 1.0 };
        potential.iter_mut().for_each(|p| *p *= sign * scale);
    }
    let gradient = grad.matvec(&potential)?;

    let mut rng = phase_rng(seed, phase);
    let mut curl_part = vec![0.0; m];
    if s.curl > 0.0 {
        let triangles = enumerate_triangles(g);
        if triangles.is_empty() {
            return Err(Error::NoTriangles);
        }
        let h = gaussian(&mut rng, triangles.len());
        curl_part = curl_matrix(g, &triangles)?.transpose_matvec(&h)?;
        rescale(&mut curl_part, s.curl);
    }
    let mut harmonic_part = vec![0.0; m];
    if s.harmonic > 0.0 {
        if harmonic_dimension(g)? == 0 {
            return Err(Error::NoHarmonicSpace);
        }
        let raw = EdgeFlow::new(gaussian(&mut rng, m))?;
        harmonic_part = hodge_decompose(g, &raw, &SolverOptions::default())?
            .harmonic
            .into_inner();
        rescale(&mut harmonic_part, s.harmonic);
    }
    let noise: Vec<f64> = gaussian(&mut rng, m).into_iter().map(|v| v * s.noise).collect();

    let flow: Vec<f64> = (0..m)
        .map(|e| gradient[e] + curl_part[e] + harmonic_part[e] + noise[e])
        .collect();
    Ok(PlantedFlow {
        potential_true: NodeField {
            kind: FieldKind::Potential,
            values: potential,
        },
        phase,
        strengths: *strengths,
        gradient,
        curl_part,
        harmonic_part,
        noise,
        flow: EdgeFlow::new(flow)?,
    })
}

/// Splits a signed flow into nonnegative directed volumes with the same net.
pub fn split_signed(f: &[f64]) -> VolumePair {
    VolumePair {
        fwd: f.iter().map(|v| v.max(0.0)).collect(),
        rev: f.iter().map(|v| (-v).max(0.0)).collect(),
    }
}

/// Bidirectional volumes whose mean is blind to `labels` but whose skew
/// points from lower to higher label on every cross-community edge.
///
/// Each edge draws a base `b = skew_delta + Poisson(COMMUNITY_BASE)`; inner
/// edges carry `b` both ways and cross edges `b ± skew_delta / 2`.
pub fn planted_community_flows(
    g: &FlowGraph,
    labels: &[usize],
    skew_delta: f64,
    seed: u64,
) -> Result<VolumePair> {
    check_len("labels", g.node_count(), labels.len())?;
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::InvalidParameter("planted communities need two or more labels".into()));
    }
    if !(skew_delta >= 0.0) || !skew_delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "skew delta must be nonnegative, got {skew_delta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(COMMUNITY_BASE).expect("positive mean");
    let half = skew_delta / 2.0;
    let mut out = VolumePair {
        fwd: Vec::with_capacity(g.edge_count()),
        rev: Vec::with_capacity(g.edge_count()),
    };
    for &(t, h) in g.edges() {
        let b = skew_delta + poisson.sample(&mut rng);
        let (f, r) = match labels[t].cmp(&labels[h]) {
            std::cmp::Ordering::Equal => (b, b),
            std::cmp::Ordering::Less => (b + half, b - half),
            std::cmp::Ordering::Greater => (b - half, b + half),
        };
        out.fwd.push(f);
        out.rev.push(r);
    }
    Ok(out)
}

/// Detector offset from the intersection center, in meters.
pub const DETECTOR_OFFSET: f64 = 5.0;

/// Detector and segment tables for a lattice: one detector per edge end,
/// placed [`DETECTOR_OFFSET`] meters from its intersection towards the
/// neighbor. Merging with any radius between `2 * DETECTOR_OFFSET` and
/// `spacing - 2 * DETECTOR_OFFSET` recovers [`grid_network`] node for node.
pub fn road_fixture(
    spec: &GridSpec,
    slices: &[FlowSlice],
) -> Result<(Vec<DetectorPoint>, Vec<SegmentRecord>)> {
    let g = grid_network(spec)?;
    let coords = g.coords().expect("lattice has coordinates");
    for s in slices {
        check_len("slice forward volumes", g.edge_count(), s.fwd.len())?;
        check_len("slice reverse volumes", g.edge_count(), s.rev.len())?;
    }
    let node_ids = padded_ids('d', g.node_count());
    let seg_ids = padded_ids('s', g.edge_count());
    let mut detectors = Vec::with_capacity(2 * g.edge_count());
    let mut ends = Vec::with_capacity(g.edge_count());
    for (e, &(t, h)) in g.edges().iter().enumerate() {
        let mut end = |from: usize, to: usize| {
            let (a, b) = (coords[from], coords[to]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let id = format!("{}_{}", node_ids[from], seg_ids[e]);
            detectors.push(DetectorPoint {
                id: id.clone(),
                x: a[0] + DETECTOR_OFFSET * (b[0] - a[0]) / len,
                y: a[1] + DETECTOR_OFFSET * (b[1] - a[1]) / len,
                segment_id: seg_ids[e].clone(),
            });
            id
        };
        let a = end(t, h);
        let b = end(h, t);
        ends.push((a, b));
    }
    detectors.sort_by(|a, b| a.id.cmp(&b.id));
    let mut segments = Vec::with_capacity(slices.len() * g.edge_count());
    for s in slices {
        for (e, (a, b)) in ends.iter().enumerate() {
            segments.push(SegmentRecord {
                segment_id: seg_ids[e].clone(),
                det_a: a.clone(),
                det_b: b.clone(),
                fwd: s.fwd[e],
                rev: s.rev[e],
                timestamp: s.timestamp,
            });
        }
    }
    Ok((detectors, segments))
}

/// Labels for alternating horizontal stripes of a row-major lattice.
pub fn stripe_labels(rows: usize, cols: usize, communities: usize) -> Vec<usize> {
    (0..rows * cols).map(|i| (i / cols) % communities.max(1)).collect()
}
