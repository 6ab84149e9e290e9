use hodgeflow::io::{
    build_road_network, load_detectors, load_edge_flows, load_segments, parse_timestamp,
    FlowSlice, IdPolicy, Schema,
};
use hodgeflow::FlowGraph;

use crate::args::{IdOrder, InputArgs, InputSchema};
use crate::fail::{usage, Outcome};

pub struct Dataset {
    pub ids: Vec<String>,
    pub graph: FlowGraph,
    pub slices: Vec<FlowSlice>,
}

/// Inclusive timestamp window in minutes after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub from: u32,
    pub to: u32,
}

impl Window {
    pub fn parse(s: &str) -> Outcome<Self> {
        let bad = || usage(format!("--slices expects FROM..TO with HH:MM times, got {s:?}"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let from = parse_timestamp(a.trim()).ok_or_else(bad)?;
        let to = parse_timestamp(b.trim()).ok_or_else(bad)?;
        if from > to {
            return Err(usage(format!("--slices range {s:?} is empty")));
        }
        Ok(Self { from, to })
    }

    fn admits(&self, t: Option<u32>) -> bool {
        t.is_none_or(|t| (self.from..=self.to).contains(&t))
    }
}

pub fn validate(a: &InputArgs) -> Outcome<Option<Window>> {
    if a.schema == InputSchema::Segments && a.detectors.is_none() {
        return Err(usage("--schema segments needs --detectors"));
    }
    if a.schema != InputSchema::Segments && a.detectors.is_some() {
        return Err(usage("--detectors only applies to --schema segments"));
    }
    if !(a.radius >= 0.0) || !a.radius.is_finite() {
        return Err(usage(format!("--radius must be a non-negative distance, got {}", a.radius)));
    }
    a.slices.as_deref().map(Window::parse).transpose()
}

pub fn load(a: &InputArgs, window: Option<Window>) -> Outcome<Dataset> {
    let mut data = match a.schema {
        InputSchema::Od | InputSchema::Bidirectional => {
            let schema = if a.schema == InputSchema::Od { Schema::Od } else { Schema::Bidirectional };
            let ids = match a.ids {
                IdOrder::Lexicographic => IdPolicy::Lexicographic,
                IdOrder::Numeric => IdPolicy::Numeric,
            };
            let loaded = load_edge_flows(&a.input, schema, ids)?;
            Dataset {
                ids: loaded.ids,
                graph: loaded.graph,
                slices: loaded.slices,
            }
        }
        InputSchema::Segments => {
            let detectors = load_detectors(a.detectors.as_ref().expect("validated"))?;
            let segments = load_segments(&a.input)?;
            let road = build_road_network(&detectors, &segments, a.radius)?;
            if road.dropped_self_edges > 0 {
                log::warn!(
                    "{} segments collapsed into a single intersection and were dropped",
                    road.dropped_self_edges
                );
            }
            Dataset {
                ids: road.ids().to_vec(),
                graph: road.graph,
                slices: road.slices,
            }
        }
    };
    if let Some(w) = window {
        data.slices.retain(|s| w.admits(s.timestamp));
        if data.slices.is_empty() {
            return Err(usage(format!(
                "no slice of {} falls in --slices {}",
                a.input.display(),
                a.slices.as_deref().unwrap_or_default()
            )));
        }
    }
    Ok(data)
}
