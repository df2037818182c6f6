//! Tables derived from archive sets: heatmap cells and the per-experiment
//! aggregate CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::archive::{list_archives, read_archive, ArchiveError};
use crate::experiment::{ExperimentConfig, ExperimentRecord};
use crate::telemetry::ExperimentSummary;
use crate::units::{parse_bytes, parse_duration, parse_rate};

/// A configuration axis a table can be keyed on. Values are in base
/// units: bytes, nanoseconds, bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    EcnThreshold,
    RedMin,
    RedMax,
    /// Drop-tail threshold, i.e. `red_max` (equal to `red_min` on a
    /// drop-tail grid).
    DropThreshold,
    Capacity,
    MaxDropProb,
    CubicRtt,
    DctcpRtt,
    LineRate,
    ReceiverLinkDelay,
    SimDuration,
    Seed,
}

const DIMENSIONS: &[(&str, Dimension)] = &[
    ("ecn_threshold", Dimension::EcnThreshold),
    ("red_min", Dimension::RedMin),
    ("red_max", Dimension::RedMax),
    ("drop_threshold", Dimension::DropThreshold),
    ("capacity", Dimension::Capacity),
    ("max_drop_prob", Dimension::MaxDropProb),
    ("cubic_rtt", Dimension::CubicRtt),
    ("dctcp_rtt", Dimension::DctcpRtt),
    ("line_rate", Dimension::LineRate),
    ("receiver_link_delay", Dimension::ReceiverLinkDelay),
    ("sim_duration", Dimension::SimDuration),
    ("seed", Dimension::Seed),
];

impl Dimension {
    pub fn name(self) -> &'static str {
        DIMENSIONS
            .iter()
            .find(|(_, d)| *d == self)
            .map(|(n, _)| *n)
            .expect("listed")
    }

    pub fn value(self, c: &ExperimentConfig) -> f64 {
        let b = &c.buffer;
        let n = &c.conditions;
        match self {
            Dimension::EcnThreshold => b.ecn_threshold as f64,
            Dimension::RedMin => b.red_min as f64,
            Dimension::RedMax | Dimension::DropThreshold => b.red_max as f64,
            Dimension::Capacity => b.capacity as f64,
            Dimension::MaxDropProb => b.max_drop_prob,
            Dimension::CubicRtt => n.cubic_rtt.as_nanos() as f64,
            Dimension::DctcpRtt => n.dctcp_rtt.as_nanos() as f64,
            Dimension::LineRate => n.line_rate_bps as f64,
            Dimension::ReceiverLinkDelay => n.receiver_link_delay.as_nanos() as f64,
            Dimension::SimDuration => c.sim_duration.as_nanos() as f64,
            Dimension::Seed => c.seed as f64,
        }
    }

    /// Parses a filter value written with or without units (`100KB`,
    /// `25ms`, `1Gbps`, `0.05`).
    pub fn parse_value(self, s: &str) -> Result<f64, ReportError> {
        let bad = || ReportError::BadFilter(format!("{}={s}", self.name()));
        match self {
            Dimension::EcnThreshold
            | Dimension::RedMin
            | Dimension::RedMax
            | Dimension::DropThreshold
            | Dimension::Capacity => parse_bytes(s).map(|v| v as f64).map_err(|_| bad()),
            Dimension::CubicRtt | Dimension::DctcpRtt | Dimension::ReceiverLinkDelay | Dimension::SimDuration => {
                match s.trim().parse::<u64>() {
                    Ok(ns) => Ok(ns as f64),
                    Err(_) => parse_duration(s).map(|d| d.as_nanos() as f64).map_err(|_| bad()),
                }
            }
            Dimension::LineRate => parse_rate(s).map(|v| v as f64).map_err(|_| bad()),
            Dimension::MaxDropProb => s.trim().parse().map_err(|_| bad()),
            Dimension::Seed => s.trim().parse::<u64>().map(|v| v as f64).map_err(|_| bad()),
        }
    }
}

impl FromStr for Dimension {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        DIMENSIONS
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, d)| *d)
            .ok_or_else(|| ReportError::UnknownDimension(s.to_string()))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An outcome read from an experiment summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CubicShare,
    TotalDrops,
    AvgBuffer,
    MaxBuffer,
    TotalGoodput,
    MarkedEcn,
    Utilization,
    DroppedOverflow,
    DroppedRed,
    Retransmits,
}

const METRICS: &[(&str, Metric)] = &[
    ("cubic_share", Metric::CubicShare),
    ("total_drops", Metric::TotalDrops),
    ("avg_buffer", Metric::AvgBuffer),
    ("max_buffer", Metric::MaxBuffer),
    ("total_goodput", Metric::TotalGoodput),
    ("marked_ecn", Metric::MarkedEcn),
    ("utilization", Metric::Utilization),
    ("dropped_overflow", Metric::DroppedOverflow),
    ("dropped_red", Metric::DroppedRed),
    ("retransmits", Metric::Retransmits),
];

impl Metric {
    pub fn name(self) -> &'static str {
        METRICS
            .iter()
            .find(|(_, m)| *m == self)
            .map(|(n, _)| *n)
            .expect("listed")
    }

    pub fn value(self, s: &ExperimentSummary) -> f64 {
        match self {
            Metric::CubicShare => s.cubic_share,
            Metric::TotalDrops => s.total_drops as f64,
            Metric::AvgBuffer => s.avg_buffer,
            Metric::MaxBuffer => s.max_buffer as f64,
            Metric::TotalGoodput => s.total_goodput as f64,
            Metric::MarkedEcn => s.marked_ecn as f64,
            Metric::Utilization => s.utilization(),
            Metric::DroppedOverflow => s.counters.dropped_overflow as f64,
            Metric::DroppedRed => s.counters.dropped_red as f64,
            Metric::Retransmits => s.retransmits.total() as f64,
        }
    }
}

impl FromStr for Metric {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        METRICS
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, m)| *m)
            .ok_or_else(|| ReportError::UnknownMetric(s.to_string()))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("bad filter `{0}` (expected dimension=value)")]
    BadFilter(String),
    #[error("no archives found in {0}")]
    NoArchives(String),
    #[error("no experiment matches the filters")]
    NothingSelected,
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// `dimension=value` restriction on which experiments enter a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter {
    pub dim: Dimension,
    pub value: f64,
}

impl FromStr for Filter {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        let (k, v) = s.split_once('=').ok_or_else(|| ReportError::BadFilter(s.to_string()))?;
        let dim: Dimension = k.trim().parse()?;
        Ok(Filter {
            dim,
            value: dim.parse_value(v)?,
        })
    }
}

impl Filter {
    pub fn accepts(&self, c: &ExperimentConfig) -> bool {
        let v = self.dim.value(c);
        v == self.value || (v - self.value).abs() <= 1e-9 * self.value.abs()
    }
}

/// Loads a single archive file or every archive in a directory.
pub fn load_archives(path: &Path) -> Result<Vec<ExperimentRecord>, ReportError> {
    if path.is_file() {
        return Ok(vec![read_archive(path)?]);
    }
    let paths = list_archives(path)?;
    if paths.is_empty() {
        return Err(ReportError::NoArchives(path.display().to_string()));
    }
    paths
        .iter()
        .map(|p| read_archive(p).map_err(ReportError::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub x: f64,
    pub y: f64,
    /// Mean of the metric over the experiments in this cell.
    pub z: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Groups experiments by `(x, y)` and averages `z`; rows come out sorted
/// by x, then y.
pub fn heatmap(
    records: &[ExperimentRecord],
    x: Dimension,
    y: Dimension,
    z: Metric,
    filters: &[Filter],
) -> Result<Vec<HeatCell>, ReportError> {
    let mut cells: BTreeMap<(Key, Key), (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| filters.iter().all(|f| f.accepts(&r.config))) {
        let e = cells
            .entry((Key(x.value(&r.config)), Key(y.value(&r.config))))
            .or_insert((0.0, 0));
        e.0 += z.value(&r.summary);
        e.1 += 1;
    }
    if cells.is_empty() {
        return Err(ReportError::NothingSelected);
    }
    Ok(cells
        .into_iter()
        .map(|((kx, ky), (sum, n))| HeatCell {
            x: kx.0,
            y: ky.0,
            z: sum / n as f64,
            n,
        })
        .collect())
}

pub fn write_heatmap_csv<W: Write>(
    out: W,
    x: Dimension,
    y: Dimension,
    z: Metric,
    cells: &[HeatCell],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([x.name(), y.name(), z.name(), "n"])?;
    for c in cells {
        w.write_record([c.x.to_string(), c.y.to_string(), c.z.to_string(), c.n.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Column order of the aggregate table. Durations are in nanoseconds,
/// sizes in bytes, rates in bits per second.
pub const AGGREGATE_COLUMNS: &[&str] = &[
    "schema_version",
    "seed",
    "ecn_threshold",
    "red_min",
    "red_max",
    "max_drop_prob",
    "capacity",
    "cubic_rtt_ns",
    "dctcp_rtt_ns",
    "line_rate_bps",
    "receiver_link_delay_ns",
    "n_dctcp_senders",
    "n_cubic_senders",
    "flows_per_sender",
    "sim_duration_ns",
    "cubic_share",
    "total_drops",
    "avg_buffer",
    "max_buffer",
    "total_goodput",
    "marked_ecn",
    "dropped_overflow",
    "dropped_red",
    "utilization",
    "zero_goodput",
];

/// One row per experiment, in the order given.
pub fn write_aggregate_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    for r in records {
        let c = &r.config;
        let s = &r.summary;
        w.write_record([
            c.schema_version.to_string(),
            c.seed.to_string(),
            c.buffer.ecn_threshold.to_string(),
            c.buffer.red_min.to_string(),
            c.buffer.red_max.to_string(),
            c.buffer.max_drop_prob.to_string(),
            c.buffer.capacity.to_string(),
            c.conditions.cubic_rtt.as_nanos().to_string(),
            c.conditions.dctcp_rtt.as_nanos().to_string(),
            c.conditions.line_rate_bps.to_string(),
            c.conditions.receiver_link_delay.as_nanos().to_string(),
            c.n_dctcp_senders.to_string(),
            c.n_cubic_senders.to_string(),
            c.flows_per_sender.to_string(),
            c.sim_duration.as_nanos().to_string(),
            s.cubic_share.to_string(),
            s.total_drops.to_string(),
            s.avg_buffer.to_string(),
            s.max_buffer.to_string(),
            s.total_goodput.to_string(),
            s.marked_ecn.to_string(),
            s.counters.dropped_overflow.to_string(),
            s.counters.dropped_red.to_string(),
            s.utilization().to_string(),
            s.zero_goodput.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_experiment;
    use crate::sim::SimDuration;

    fn rec(ecn: u64, drop: u64, seed: u64) -> ExperimentRecord {
        let mut c = ExperimentConfig::desk(seed);
        c.sim_duration = SimDuration::from_millis(200);
        c.n_dctcp_senders = 1;
        c.n_cubic_senders = 1;
        c.flows_per_sender = 1;
        c.buffer.ecn_threshold = ecn;
        c.buffer.red_min = drop;
        c.buffer.red_max = drop;
        run_experiment(&c).unwrap()
    }

    #[test]
    fn names_round_trip_and_unknowns_are_rejected() {
        for (n, d) in DIMENSIONS {
            assert_eq!(n.parse::<Dimension>().unwrap(), *d);
            assert_eq!(d.to_string(), *n);
        }
        for (n, m) in METRICS {
            assert_eq!(n.parse::<Metric>().unwrap(), *m);
        }
        assert!(matches!(
            "colour".parse::<Dimension>(),
            Err(ReportError::UnknownDimension(_))
        ));
        assert!(matches!("speed".parse::<Metric>(), Err(ReportError::UnknownMetric(_))));
        assert!("ecn_threshold".parse::<Filter>().is_err());
        assert!("ecn_threshold=lots".parse::<Filter>().is_err());
    }

    #[test]
    fn filters_accept_units() {
        let f: Filter = "cubic_rtt=25ms".parse().unwrap();
        assert_eq!(f.value, 25e6);
        let f: Filter = "ecn_threshold=100KB".parse().unwrap();
        assert!(f.accepts(&ExperimentConfig::desk(1)));
        let f: Filter = "line_rate=100Mbps".parse().unwrap();
        assert!(!f.accepts(&ExperimentConfig::desk(1)));
    }

    #[test]
    fn single_archive_gives_one_cell_equal_to_its_metric() {
        let r = rec(100_000, 1_800_000, 1);
        let cells = heatmap(
            std::slice::from_ref(&r),
            Dimension::DropThreshold,
            Dimension::EcnThreshold,
            Metric::CubicShare,
            &[],
        )
        .unwrap();
        assert_eq!(
            cells,
            vec![HeatCell {
                x: 1_800_000.0,
                y: 100_000.0,
                z: r.summary.cubic_share,
                n: 1
            }]
        );
    }

    #[test]
    fn cells_average_and_sort() {
        let rs = vec![
            rec(100_000, 800_000, 1),
            rec(20_000, 800_000, 2),
            rec(20_000, 800_000, 3),
        ];
        let cells = heatmap(
            &rs,
            Dimension::DropThreshold,
            Dimension::EcnThreshold,
            Metric::TotalDrops,
            &[],
        )
        .unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!((cells[0].y, cells[0].n), (20_000.0, 2));
        let mean = (rs[1].summary.total_drops + rs[2].summary.total_drops) as f64 / 2.0;
        assert_eq!(cells[0].z, mean);

        let only: Filter = "ecn_threshold=100KB".parse().unwrap();
        let cells = heatmap(
            &rs,
            Dimension::DropThreshold,
            Dimension::EcnThreshold,
            Metric::TotalDrops,
            &[only],
        )
        .unwrap();
        assert_eq!(cells.len(), 1);

        let none: Filter = "ecn_threshold=1KB".parse().unwrap();
        assert!(matches!(
            heatmap(
                &rs,
                Dimension::DropThreshold,
                Dimension::EcnThreshold,
                Metric::TotalDrops,
                &[none]
            ),
            Err(ReportError::NothingSelected)
        ));

        let mut buf = Vec::new();
        write_heatmap_csv(
            &mut buf,
            Dimension::DropThreshold,
            Dimension::EcnThreshold,
            Metric::TotalDrops,
            &cells[..0],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "drop_threshold,ecn_threshold,total_drops,n\n"
        );
    }

    #[test]
    fn aggregate_has_one_row_per_experiment() {
        let rs = vec![rec(20_000, 200_000, 1), rec(400_000, 1_800_000, 2)];
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &rs).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rd.headers().unwrap().len(), AGGREGATE_COLUMNS.len());
        let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][2], "400000");
        assert_eq!(rows[0][15].parse::<f64>().unwrap(), rs[0].summary.cubic_share);
    }
}
