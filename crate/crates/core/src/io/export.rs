use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{csv_error, write_atomic};
use crate::error::{check_len, Error, Result};
use crate::graph::{Coord, FlowGraph};
use crate::hodge::{divergence, EdgeFlow, EnergyFractions, HodgeComponents};
use crate::metrics::VarianceReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    /// `<stem>.nodes.csv`, `<stem>.edges.csv` and `<stem>.meta.json`.
    Csv,
    Geojson,
}

impl ExportFormat {
    pub fn name(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
            ExportFormat::Geojson => "geojson",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "geojson" => Ok(ExportFormat::Geojson),
            _ => Err(Error::InvalidParameter(format!(
                "unknown format '{s}', expected json, csv or geojson"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub potential: f64,
    pub divergence: f64,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub tail: String,
    pub head: String,
    pub flow: f64,
    pub grad: f64,
    pub curl: f64,
    pub harmonic: f64,
}

/// Everything written for one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    /// Effective run configuration, echoed verbatim.
    pub config: Value,
    pub slice: String,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub energies: Option<EnergyFractions>,
    pub metrics: Option<VarianceReport>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: Value,
    slice: String,
    energies: Option<EnergyFractions>,
    metrics: Option<VarianceReport>,
}

impl ResultBundle {
    pub fn new(
        slice: impl Into<String>,
        ids: &[String],
        graph: &FlowGraph,
        flow: &EdgeFlow,
        components: &HodgeComponents,
    ) -> Result<Self> {
        check_len("node ids", graph.node_count(), ids.len())?;
        check_len("edge flow", graph.edge_count(), flow.len())?;
        check_len("potential", graph.node_count(), components.potential.len())?;
        let d = divergence(graph, flow)?;
        let nodes = (0..graph.node_count())
            .map(|i| NodeRecord {
                id: ids[i].clone(),
                potential: components.potential[i],
                divergence: d[i],
                cluster: None,
            })
            .collect();
        let edges = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, &(t, h))| EdgeRecord {
                tail: ids[t].clone(),
                head: ids[h].clone(),
                flow: flow[e],
                grad: components.gradient[e],
                curl: components.curl_adjoint[e],
                harmonic: components.harmonic[e],
            })
            .collect();
        Ok(Self {
            config: Value::Null,
            slice: slice.into(),
            nodes,
            edges,
            energies: components.energies,
            metrics: None,
        })
    }

    pub fn with_config(mut self, config: Value) -> Self {
        self.config = config;
        self
    }

    pub fn with_metrics(mut self, metrics: VarianceReport) -> Self {
        self.metrics = Some(metrics);
        self
    }

    pub fn with_clusters(mut self, labels: &[usize]) -> Result<Self> {
        check_len("cluster labels", self.nodes.len(), labels.len())?;
        self.nodes
            .iter_mut()
            .zip(labels)
            .for_each(|(n, &l)| n.cluster = Some(l));
        Ok(self)
    }

    /// Rebuilds the graph from the node and edge records.
    pub fn graph(&self) -> Result<FlowGraph> {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("edge references unknown node `{id}`")))
        };
        let edges = self
            .edges
            .iter()
            .map(|e| Ok((lookup(&e.tail)?, lookup(&e.head)?)))
            .collect::<Result<Vec<_>>>()?;
        FlowGraph::from_edges(self.nodes.len(), &edges)
    }

    pub fn flow(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.flow).collect()
    }
}

fn csv_paths(stem: &Path) -> [PathBuf; 3] {
    let with = |suffix: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    [with(".nodes.csv"), with(".edges.csv"), with(".meta.json")]
}

fn geojson(bundle: &ResultBundle, coords: &[Coord]) -> Value {
    let index: HashMap<&str, usize> = bundle
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut features: Vec<Value> = bundle
        .nodes
        .iter()
        .zip(coords)
        .map(|(n, c)| {
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [c[0], c[1]]},
                "properties": {
                    "id": n.id,
                    "potential": n.potential,
                    "divergence": n.divergence,
                    "cluster": n.cluster,
                },
            })
        })
        .collect();
    features.extend(bundle.edges.iter().map(|e| {
        let (a, b) = (coords[index[e.tail.as_str()]], coords[index[e.head.as_str()]]);
        json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[a[0], a[1]], [b[0], b[1]]]},
            "properties": {
                "tail": e.tail,
                "head": e.head,
                "flow": e.flow,
                "grad": e.grad,
                "curl": e.curl,
                "harmonic": e.harmonic,
            },
        })
    }));
    json!({"type": "FeatureCollection", "slice": bundle.slice, "features": features})
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        Ok(())
    })
}

/// Writes `bundle` and returns the files created. For csv `path` is a stem.
/// GeoJSON needs one coordinate per node.
pub fn export_results(
    bundle: &ResultBundle,
    coords: Option<&[Coord]>,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    match format {
        ExportFormat::Json => {
            write_json(path, bundle)?;
            Ok(vec![path.to_path_buf()])
        }
        ExportFormat::Geojson => {
            let coords = coords.ok_or(Error::MissingCoordinates("geojson export"))?;
            check_len("coordinates", bundle.nodes.len(), coords.len())?;
            write_json(path, &geojson(bundle, coords))?;
            Ok(vec![path.to_path_buf()])
        }
        ExportFormat::Csv => {
            let [nodes, edges, meta] = csv_paths(path);
            write_atomic(&nodes, |out| {
                let mut w = csv::Writer::from_writer(out);
                for n in &bundle.nodes {
                    w.serialize(n)?;
                }
                w.flush().map_err(|e| Error::io(&nodes, e))?;
                Ok(())
            })?;
            write_atomic(&edges, |out| {
                let mut w = csv::Writer::from_writer(out);
                for e in &bundle.edges {
                    w.serialize(e)?;
                }
                w.flush().map_err(|e| Error::io(&edges, e))?;
                Ok(())
            })?;
            write_json(
                &meta,
                &Meta {
                    config: bundle.config.clone(),
                    slice: bundle.slice.clone(),
                    energies: bundle.energies,
                    metrics: bundle.metrics.clone(),
                },
            )?;
            Ok(vec![nodes, edges, meta])
        }
    }
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Reads back a json or csv export.
pub fn reload_results(path: impl AsRef<Path>, format: ExportFormat) -> Result<ResultBundle> {
    let path = path.as_ref();
    match format {
        ExportFormat::Json => read_json(path),
        ExportFormat::Csv => {
            let [nodes, edges, meta] = csv_paths(path);
            let meta: Meta = read_json(&meta)?;
            Ok(ResultBundle {
                config: meta.config,
                slice: meta.slice,
                nodes: read_csv(&nodes)?,
                edges: read_csv(&edges)?,
                energies: meta.energies,
                metrics: meta.metrics,
            })
        }
        ExportFormat::Geojson => Err(Error::InvalidParameter(
            "geojson exports are for map viewers and are not reloaded".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hodge::{hodge_decompose, SolverOptions};
    use crate::metrics::variance_report;

    fn p2_bundle() -> (FlowGraph, ResultBundle) {
        let g = FlowGraph::from_edges(2, &[(0, 1)]).unwrap();
        let f = EdgeFlow::new(vec![2.0]).unwrap();
        let c = hodge_decompose(&g, &f, &SolverOptions::default()).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let b = ResultBundle::new("08:30", &ids, &g, &f, &c)
            .unwrap()
            .with_config(json!({"command": "decompose", "seed": 1}))
            .with_metrics(variance_report(&g, &f).unwrap())
            .with_clusters(&[0, 1])
            .unwrap();
        (g, b)
    }

    #[test]
    fn p2_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (g, b) = p2_bundle();
        assert_eq!(b.nodes.len(), 2);
        assert_eq!(b.edges.len(), 1);
        assert!((b.nodes[0].potential + 1.0).abs() < 1e-12);
        let p = dir.path().join("p2.json");
        export_results(&b, None, ExportFormat::Json, &p).unwrap();
        let back = reload_results(&p, ExportFormat::Json).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.graph().unwrap(), g);
        let text = std::fs::read_to_string(&p).unwrap();
        let keys: Vec<usize> = ["\"config\"", "\"slice\"", "\"nodes\"", "\"edges\"", "\"energies\"", "\"metrics\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (_, mut b) = p2_bundle();
        b.edges[0].flow = 0.1 + 0.2;
        b.nodes[1].potential = std::f64::consts::PI / 7.0;
        let stem = dir.path().join("out");
        let files = export_results(&b, None, ExportFormat::Csv, &stem).unwrap();
        assert_eq!(files.len(), 3);
        assert_eq!(reload_results(&stem, ExportFormat::Csv).unwrap(), b);
    }

    #[test]
    fn geojson_needs_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let (_, b) = p2_bundle();
        let p = dir.path().join("p2.geojson");
        assert!(matches!(
            export_results(&b, None, ExportFormat::Geojson, &p),
            Err(Error::MissingCoordinates(_))
        ));
        export_results(&b, Some(&[[0.0, 0.0], [1.0, 2.0]]), ExportFormat::Geojson, &p).unwrap();
        let v: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["features"].as_array().unwrap().len(), 3);
        assert_eq!(v["features"][2]["geometry"]["type"], "LineString");
        assert_eq!(v["features"][1]["properties"]["cluster"], 1);
    }

    #[test]
    fn unwritable_path_fails() {
        let (_, b) = p2_bundle();
        let r = export_results(&b, None, ExportFormat::Json, "/nonexistent-dir/x/out.json");
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
