use std::io::Write;
use std::path::{Path, PathBuf};

use hodgeflow::io::FlowSlice;
use serde::Serialize;
use serde_json::Value;

use crate::fail::{io_failure, Outcome};

pub fn prepare_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

/// Writes through a temporary file in the same directory so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| io_failure(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Outcome {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_failure(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_failure(path, e))?;
    write_atomic(path, &bytes)
}

pub fn write_run_config(dir: &Path, config: &Value) -> Outcome {
    write_json(&dir.join("run_config.json"), config)
}

/// `0830` for an 08:30 slice, `all` for untimed data.
pub fn slice_tag(slice: &FlowSlice) -> String {
    slice.label().replace(':', "")
}

pub fn slice_file(dir: &Path, prefix: &str, slice: &FlowSlice, ext: &str) -> PathBuf {
    dir.join(format!("{prefix}_{}{ext}", slice_tag(slice)))
}

/// Shortest text that parses back to the same float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
