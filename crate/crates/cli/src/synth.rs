use hodgeflow::io::{write_detectors, write_edge_flows, write_segments, FlowSlice, Schema};
use hodgeflow::synth::{
    er_od_graph, grid_network, planted_community_flows, planted_flow, road_fixture, split_signed,
    stripe_labels, GridSpec, OdSpec, Phase, PlantStrengths,
};
use serde_json::Value;

use crate::args::{SynthArgs, SynthKind};
use crate::fail::{usage, Outcome};
use crate::output;

fn validate(a: &SynthArgs) -> Outcome {
    let probability = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(usage(format!("--{name} must lie in [0, 1], got {v}")))
        }
    };
    match a.kind {
        SynthKind::ErOd => {
            probability("p", a.p)?;
            probability("hub-fraction", a.hub_fraction)?;
        }
        SynthKind::Grid | SynthKind::Communities => {
            if !(a.spacing > 0.0) || !a.spacing.is_finite() {
                return Err(usage(format!("--spacing must be positive, got {}", a.spacing)));
            }
        }
    }
    if a.kind == SynthKind::Grid && !(0.0..1.0).contains(&a.noise) {
        return Err(usage(format!("--noise must lie in [0, 1), got {}", a.noise)));
    }
    if a.kind == SynthKind::Communities && a.communities < 2 {
        return Err(usage("--communities must be at least 2"));
    }
    Ok(())
}

pub fn run(a: &SynthArgs, config: &Value) -> Outcome {
    validate(a)?;
    let out = &a.output;
    output::prepare_dir(out)?;
    output::write_run_config(out, config)?;
    match a.kind {
        SynthKind::ErOd => {
            let spec = OdSpec {
                n: a.n,
                edge_prob: a.p,
                hub_fraction: a.hub_fraction,
                seed: a.seed,
                ..OdSpec::default()
            };
            let net = er_od_graph(&spec)?;
            let slices: Vec<FlowSlice> = [Phase::Morning, Phase::Evening]
                .into_iter()
                .map(|phase| {
                    let v = net.slice(phase);
                    FlowSlice {
                        timestamp: Some(phase.minutes()),
                        fwd: v.fwd.clone(),
                        rev: v.rev.clone(),
                    }
                })
                .collect();
            let path = out.join("od.csv");
            write_edge_flows(&path, Schema::Od, &net.ids, &net.graph, &slices)?;
            println!(
                "{}: {} nodes, {} edges, {} hubs",
                path.display(),
                net.graph.node_count(),
                net.graph.edge_count(),
                net.hubs.len()
            );
        }
        SynthKind::Grid => {
            let spec = GridSpec { rows: a.rows, cols: a.cols, spacing: a.spacing };
            let g = grid_network(&spec)?;
            let strengths = PlantStrengths::with_noise_share(a.noise);
            let mut slices = Vec::new();
            for phase in [Phase::Morning, Phase::Evening] {
                let planted = planted_flow(&g, &strengths, phase, a.seed)?;
                let v = split_signed(&planted.flow);
                slices.push(FlowSlice { timestamp: Some(phase.minutes()), fwd: v.fwd, rev: v.rev });
            }
            let (detectors, segments) = road_fixture(&spec, &slices)?;
            write_detectors(out.join("detectors.csv"), &detectors)?;
            write_segments(out.join("segments.csv"), &segments)?;
            println!(
                "{}: {} detectors, {} segment rows over {} intersections",
                out.display(),
                detectors.len(),
                segments.len(),
                g.node_count()
            );
        }
        SynthKind::Communities => {
            let spec = GridSpec { rows: a.rows, cols: a.cols, spacing: a.spacing };
            let g = grid_network(&spec)?;
            let labels = stripe_labels(a.rows, a.cols, a.communities);
            let v = planted_community_flows(&g, &labels, a.skew_delta, a.seed)?;
            let width = (g.node_count().max(2) - 1).to_string().len();
            let ids: Vec<String> = (0..g.node_count()).map(|i| format!("g{i:0width$}")).collect();
            let slice = FlowSlice { timestamp: None, fwd: v.fwd, rev: v.rev };
            write_edge_flows(out.join("flows.csv"), Schema::Bidirectional, &ids, &g, &[slice])?;
            let rows: Vec<Vec<String>> = ids
                .iter()
                .zip(&labels)
                .map(|(id, l)| vec![id.clone(), l.to_string()])
                .collect();
            output::write_csv(&out.join("labels.csv"), &["node_id", "label"], &rows)?;
            println!(
                "{}: {} nodes in {} communities",
                out.display(),
                g.node_count(),
                a.communities
            );
        }
    }
    Ok(())
}
