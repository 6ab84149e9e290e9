//! Reading flow tables, merging detector points into intersections, and
//! writing results.

mod export;
mod merge;
mod tables;

pub use export::{
    export_results, reload_results, EdgeRecord, ExportFormat, NodeRecord, ResultBundle,
};
pub use merge::{build_road_network, merge_detectors, project_equirectangular, MergeResult, RoadNetwork};
pub use tables::{
    format_timestamp, load_detectors, load_edge_flows, load_segments, parse_timestamp,
    write_detectors, write_edge_flows, write_segments, DetectorPoint, EdgeFlowRecord, FlowSlice,
    IdPolicy, LoadedFlows, Schema, SegmentRecord,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Maps a csv error to a located parse error when it carries a position.
pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse {
            path: path.to_path_buf(),
            line: pos.line(),
            message: e.to_string(),
        },
        None => Error::Csv(e),
    }
}
