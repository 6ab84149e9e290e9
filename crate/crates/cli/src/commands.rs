use std::collections::HashMap;
use std::path::Path;

use hodgeflow::embed::flow_embedding;
use hodgeflow::hodge::{hodge_decompose, SolverOptions};
use hodgeflow::io::{export_results, ExportFormat, FlowSlice, ResultBundle};
use hodgeflow::metrics::{flow_diagnostics, FlowDiagnostics};
use hodgeflow::spectral::{
    adjusted_rand_index, blend_distance, gaussian_similarity, kmeans, silhouette,
    spectral_cluster, spectral_embedding, symmetrize_mean, ClusterAssignment, CutVariant,
};
use hodgeflow::FeatureSet;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::args::{ClusterArgs, Cut, DecomposeArgs, Format, MetricsArgs, RunArgs, Solver, SolverArgs};
use crate::fail::{io_failure, usage, Failure, Outcome};
use crate::input::{self, Dataset};
use crate::output::{self, num, opt_num, slice_file};

fn solver_options(a: &SolverArgs) -> Outcome<SolverOptions> {
    if !(a.tol > 0.0) || !a.tol.is_finite() {
        return Err(usage(format!("--tol must be positive, got {}", a.tol)));
    }
    let base = match a.solver {
        Solver::Dense => SolverOptions::dense(),
        Solver::Cg => SolverOptions::cg(),
    };
    Ok(SolverOptions { tol: a.tol, ..base })
}

fn check_jobs(run: &RunArgs) -> Outcome {
    if run.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(())
}

fn require_flow(slice: &FlowSlice) -> Outcome {
    if slice.fwd.iter().chain(&slice.rev).all(|&v| v == 0.0) {
        return Err(Failure::Compute("slice carries no flow".into()));
    }
    Ok(())
}

/// Runs `work` on every slice, at most `jobs` at a time, and returns the
/// results in slice order.
fn per_slice<T: Send>(
    data: &Dataset,
    jobs: usize,
    work: impl Fn(&FlowSlice) -> Outcome<T> + Sync,
) -> Outcome<Vec<(String, Outcome<T>)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Compute(e.to_string()))?;
    Ok(pool.install(|| {
        data.slices
            .par_iter()
            .map(|s| (s.label(), require_flow(s).and_then(|_| work(s))))
            .collect()
    }))
}

/// Prints per-slice failures; any failure makes the command fail.
fn settle<T>(results: Vec<(String, Outcome<T>)>) -> Outcome<Vec<(String, T)>> {
    let mut ok = Vec::new();
    let mut failed = 0;
    for (label, r) in results {
        match r {
            Ok(v) => ok.push((label, v)),
            Err(e) => {
                failed += 1;
                eprintln!("error: slice {label}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Compute(format!("{failed} slice(s) failed")));
    }
    Ok(ok)
}

pub fn decompose(a: &DecomposeArgs, config: &Value) -> Outcome {
    let window = input::validate(&a.input)?;
    let opts = solver_options(&a.solver)?;
    check_jobs(&a.run)?;
    let data = input::load(&a.input, window)?;
    if a.format == Format::Geojson && data.graph.coords().is_none() {
        return Err(usage("--format geojson needs node coordinates, which only --schema segments provides"));
    }
    let out = &a.run.output;
    output::prepare_dir(out)?;
    output::write_run_config(out, config)?;
    let (format, ext) = match a.format {
        Format::Json => (ExportFormat::Json, ".json"),
        Format::Csv => (ExportFormat::Csv, ""),
        Format::Geojson => (ExportFormat::Geojson, ".geojson"),
    };
    let results = per_slice(&data, a.run.jobs, |slice| {
        let f = slice.net()?;
        let parts = hodge_decompose(&data.graph, &f, &opts)?;
        let bundle = ResultBundle::new(slice.label(), &data.ids, &data.graph, &f, &parts)?
            .with_config(config.clone());
        let path = slice_file(out, "decompose", slice, ext);
        export_results(&bundle, data.graph.coords(), format, &path)?;
        Ok(parts.energies)
    })?;
    for (label, energies) in settle(results)? {
        match energies {
            Some(e) => println!(
                "{label}: gradient {:.4} curl {:.4} harmonic {:.4}",
                e.gradient, e.curl, e.harmonic
            ),
            None => println!("{label}: zero flow"),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    config: &'a Value,
    slice: String,
    diagnostics: &'a FlowDiagnostics,
}

pub fn metrics(a: &MetricsArgs, config: &Value) -> Outcome {
    let window = input::validate(&a.input)?;
    let opts = solver_options(&a.solver)?;
    check_jobs(&a.run)?;
    let data = input::load(&a.input, window)?;
    let out = &a.run.output;
    output::prepare_dir(out)?;
    output::write_run_config(out, config)?;
    let results = per_slice(&data, a.run.jobs, |slice| {
        let f = slice.net()?;
        let diagnostics = flow_diagnostics(&data.graph, &f, &opts)?;
        let doc = MetricsDoc {
            config,
            slice: slice.label(),
            diagnostics: &diagnostics,
        };
        output::write_json(&slice_file(out, "metrics", slice, ".json"), &doc)?;
        Ok(diagnostics)
    })?;
    let done = settle(results)?;
    let rows: Vec<Vec<String>> = done
        .iter()
        .map(|(label, d)| {
            let v = &d.variance;
            vec![
                label.clone(),
                num(v.local_p),
                num(v.local_d),
                num(v.global_p),
                num(v.global_d),
                d.local_p_lt_local_d.to_string(),
            ]
        })
        .collect();
    output::write_csv(
        &out.join("variances.csv"),
        &["slice", "local_p", "local_d", "global_p", "global_d", "local_p_lt_local_d"],
        &rows,
    )?;
    for (label, d) in &done {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{label}: spearman {} assortativity p {} d {} local_p < local_d {}",
            fmt(d.spearman),
            fmt(d.assortativity_p),
            fmt(d.assortativity_d),
            d.local_p_lt_local_d
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Method {
    Features(FeatureSet),
    Spectral,
}

impl Method {
    fn parse(s: &str) -> Outcome<Self> {
        if s == "spectral" {
            return Ok(Method::Spectral);
        }
        s.parse().map(Method::Features).map_err(|_| {
            let allowed: Vec<&str> = FeatureSet::ALL.iter().map(|f| f.name()).collect();
            usage(format!(
                "unknown feature set '{s}', expected one of: {}, spectral",
                allowed.join(", ")
            ))
        })
    }

    fn name(self) -> &'static str {
        match self {
            Method::Features(f) => f.name(),
            Method::Spectral => "spectral",
        }
    }
}

/// Reference labels in node order, renumbered by first appearance.
fn load_labels(path: &Path, ids: &[String]) -> Outcome<Vec<usize>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_failure(path, e))?;
    let headers = reader.headers().map_err(|e| io_failure(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| usage(format!("{}: missing column `{name}`", path.display())))
    };
    let (id_col, label_col) = (col("node_id")?, col("label")?);
    let mut by_id = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| io_failure(path, e))?;
        let id = rec.get(id_col).unwrap_or_default().trim().to_string();
        let label = rec.get(label_col).unwrap_or_default().trim().to_string();
        if by_id.insert(id.clone(), label).is_some() {
            return Err(usage(format!("{}: node `{id}` listed twice", path.display())));
        }
    }
    let mut codes: HashMap<String, usize> = HashMap::new();
    ids.iter()
        .map(|id| {
            let label = by_id
                .get(id)
                .ok_or_else(|| usage(format!("{}: no label for node `{id}`", path.display())))?;
            let next = codes.len();
            Ok(*codes.entry(label.clone()).or_insert(next))
        })
        .collect()
}

struct ClusterRun {
    method: Method,
    k: usize,
    assignment: ClusterAssignment,
    silhouette: Option<f64>,
    ari: Option<f64>,
}

pub fn cluster(a: &ClusterArgs, config: &Value) -> Outcome {
    let window = input::validate(&a.input)?;
    check_jobs(&a.run)?;
    let methods = a.features.iter().map(|s| Method::parse(s.trim())).collect::<Outcome<Vec<_>>>()?;
    if a.k.is_empty() || a.k.contains(&0) {
        return Err(usage("--k values must be at least 1"));
    }
    if let Some(s) = a.sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(usage(format!("--sigma must be positive, got {s}")));
        }
    }
    if let Some(alpha) = a.alpha {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(usage(format!("--alpha must lie in [0, 1], got {alpha}")));
        }
    }
    let variant = match a.cut {
        Cut::Ratio => CutVariant::RatioCut,
        Cut::Normalized => CutVariant::NormalizedCut,
    };
    let data = input::load(&a.input, window)?;
    if a.alpha.is_some() && methods.contains(&Method::Spectral) && data.graph.coords().is_none() {
        return Err(usage("--alpha blends in distances, which needs --schema segments"));
    }
    let truth = a.labels.as_deref().map(|p| load_labels(p, &data.ids)).transpose()?;
    let out = &a.run.output;
    output::prepare_dir(out)?;
    output::write_run_config(out, config)?;

    let results = per_slice(&data, a.run.jobs, |slice| {
        let mut runs = Vec::new();
        for &method in &methods {
            for &k in &a.k {
                let (assignment, points) = match method {
                    Method::Features(fs) => {
                        let emb = flow_embedding(&data.graph, &slice.fwd, &slice.rev, k, fs)?;
                        (kmeans(&emb.z, k, a.seed)?, emb.z)
                    }
                    Method::Spectral => {
                        let m = symmetrize_mean(&slice.fwd, &slice.rev)?;
                        let mut s = gaussian_similarity(&data.graph, &m, a.sigma)?;
                        if let Some(alpha) = a.alpha {
                            s = blend_distance(&s, data.graph.coords(), None, alpha)?;
                        }
                        let emb = spectral_embedding(&s, k, variant)?;
                        (spectral_cluster(&s, k, variant, a.seed)?, emb.vectors)
                    }
                };
                let silhouette = if k > 1 { silhouette(&points, &assignment.labels).ok() } else { None };
                let ari = truth
                    .as_ref()
                    .map(|t| adjusted_rand_index(&assignment.labels, t))
                    .transpose()?;
                runs.push(ClusterRun { method, k, assignment, silhouette, ari });
            }
        }
        write_cluster_tables(out, slice, &data.ids, &runs)?;
        Ok(runs)
    })?;
    for (label, runs) in settle(results)? {
        for r in runs {
            let ari = r.ari.map_or(String::new(), |v| format!(" ari {v:.3}"));
            let sil = r.silhouette.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            println!(
                "{label}: {} k={} sizes {:?} silhouette {sil}{ari}",
                r.method.name(),
                r.k,
                r.assignment.sizes()
            );
        }
    }
    Ok(())
}

fn write_cluster_tables(dir: &Path, slice: &FlowSlice, ids: &[String], runs: &[ClusterRun]) -> Outcome {
    let names: Vec<String> = runs.iter().map(|r| format!("{}_k{}", r.method.name(), r.k)).collect();
    let mut header = vec!["node_id"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            std::iter::once(id.clone())
                .chain(runs.iter().map(|r| r.assignment.labels[i].to_string()))
                .collect()
        })
        .collect();
    output::write_csv(&slice_file(dir, "labels", slice, ".csv"), &header, &rows)?;

    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                slice.label(),
                r.method.name().to_string(),
                r.k.to_string(),
                num(r.assignment.inertia),
                opt_num(r.silhouette),
                opt_num(r.ari),
            ]
        })
        .collect();
    output::write_csv(
        &slice_file(dir, "cluster", slice, ".csv"),
        &["slice", "method", "k", "inertia", "silhouette", "ari"],
        &rows,
    )
}
