//! Per-experiment archive files.
//!
//! An archive is a gzip stream of four JSON lines:
//!
//! ```text
//! {"schema_version":1,"generator":"chacha8","documents":["config","summary","snapshots"]}
//! {"config":{...}}
//! {"summary":{...}}
//! {"snapshots":[{...},...]}
//! ```
//!
//! Writes go to a temporary sibling first and are renamed into place, so a
//! reader never observes a partial archive.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentConfig, ExperimentRecord, SCHEMA_VERSION};
use crate::sim::GENERATOR_ID;
use crate::telemetry::{ExperimentSummary, Snapshot};

pub const ARCHIVE_EXTENSION: &str = "jsonl.gz";

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed archive: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("{path}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    generator: String,
    documents: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ConfigDoc<T> {
    config: T,
}

#[derive(Serialize, Deserialize)]
struct SummaryDoc<T> {
    summary: T,
}

#[derive(Serialize, Deserialize)]
struct SnapshotsDoc<T> {
    snapshots: T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes a record to the archive byte layout (uncompressed).
pub fn encode_lines(rec: &ExperimentRecord) -> Vec<u8> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        generator: GENERATOR_ID.to_string(),
        documents: vec!["config".into(), "summary".into(), "snapshots".into()],
    };
    let mut buf = Vec::new();
    push_line(&mut buf, &header);
    push_line(&mut buf, &ConfigDoc { config: &rec.config });
    push_line(&mut buf, &SummaryDoc { summary: &rec.summary });
    push_line(
        &mut buf,
        &SnapshotsDoc {
            snapshots: &rec.snapshots,
        },
    );
    buf
}

fn push_line<T: Serialize>(buf: &mut Vec<u8>, doc: &T) {
    serde_json::to_writer(&mut *buf, doc).expect("archive documents serialize");
    buf.push(b'\n');
}

pub fn write_archive(path: &Path, rec: &ExperimentRecord) -> Result<(), ArchiveError> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
        gz.write_all(&encode_lines(rec)).map_err(io_err(&tmp))?;
        let mut inner = gz.finish().map_err(io_err(&tmp))?;
        inner.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_archive(path: &Path) -> Result<ExperimentRecord, ArchiveError> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(GzDecoder::new(file));
    let mut lines = reader.lines();
    let malformed = |msg: String| ArchiveError::Malformed {
        path: path.to_path_buf(),
        msg,
    };
    let mut next = |what: &str| -> Result<String, ArchiveError> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(ArchiveError::Io {
                path: path.to_path_buf(),
                source: e,
            }),
            None => Err(ArchiveError::Malformed {
                path: path.to_path_buf(),
                msg: format!("missing {what} document"),
            }),
        }
    };

    let header: Header = serde_json::from_str(&next("header")?).map_err(|e| malformed(format!("header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(ArchiveError::Schema {
            path: path.to_path_buf(),
            found: header.schema_version,
        });
    }
    let config: ConfigDoc<ExperimentConfig> =
        serde_json::from_str(&next("config")?).map_err(|e| malformed(format!("config: {e}")))?;
    let summary: SummaryDoc<ExperimentSummary> =
        serde_json::from_str(&next("summary")?).map_err(|e| malformed(format!("summary: {e}")))?;
    let snapshots: SnapshotsDoc<Vec<Snapshot>> =
        serde_json::from_str(&next("snapshots")?).map_err(|e| malformed(format!("snapshots: {e}")))?;
    Ok(ExperimentRecord {
        config: config.config,
        summary: summary.summary,
        snapshots: snapshots.snapshots,
    })
}

/// Archive paths in `dir`, sorted by file name.
pub fn list_archives(dir: &Path) -> Result<Vec<PathBuf>, ArchiveError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let is_archive = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(&format!(".{ARCHIVE_EXTENSION}")));
        if is_archive {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;
    use crate::sim::SimDuration;

    fn record() -> ExperimentRecord {
        let mut c = ExperimentConfig::desk(5);
        c.sim_duration = SimDuration::from_millis(300);
        c.n_dctcp_senders = 1;
        c.n_cubic_senders = 1;
        c.flows_per_sender = 1;
        run_experiment(&c).unwrap()
    }

    #[test]
    fn round_trip_and_stable_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record();
        let a = dir.path().join("a.jsonl.gz");
        let b = dir.path().join("b.jsonl.gz");
        write_archive(&a, &rec).unwrap();
        write_archive(&b, &rec).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_archive(&a).unwrap(), rec);
        assert_eq!(list_archives(dir.path()).unwrap(), vec![a, b]);
    }

    #[test]
    fn layout_is_four_tagged_lines() {
        let text = String::from_utf8(encode_lines(&record())).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with(r#"{"schema_version":1,"generator":"chacha8""#));
        assert!(lines[1].starts_with(r#"{"config":{"#));
        assert!(lines[2].starts_with(r#"{"summary":{"cubic_share":"#));
        assert!(lines[3].starts_with(r#"{"snapshots":[{"t":0,"#));
        assert!(lines[3].contains(r#""counters":{"enqueued":"#));
        for name in ["dequeued", "dropped_overflow", "dropped_red", "marked_ecn"] {
            assert!(lines[2].contains(&format!("\"{name}\":")));
        }
    }

    #[test]
    fn rejects_other_schema_versions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl.gz");
        let text = String::from_utf8(encode_lines(&record())).unwrap().replacen(
            "\"schema_version\":1",
            "\"schema_version\":7",
            1,
        );
        let mut gz = GzEncoder::new(File::create(&p).unwrap(), Compression::default());
        gz.write_all(text.as_bytes()).unwrap();
        gz.finish().unwrap();
        assert!(matches!(read_archive(&p), Err(ArchiveError::Schema { found: 7, .. })));
    }

    #[test]
    fn truncated_archive_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl.gz");
        let text = String::from_utf8(encode_lines(&record())).unwrap();
        let first_two: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        let mut gz = GzEncoder::new(File::create(&p).unwrap(), Compression::default());
        gz.write_all(first_two.as_bytes()).unwrap();
        gz.finish().unwrap();
        assert!(matches!(read_archive(&p), Err(ArchiveError::Malformed { .. })));
    }
}
