//! Grid expansion through sweep, archives and report tables.

use bufshare::report::{self, Dimension, Filter, Metric, AGGREGATE_COLUMNS};
use bufshare::{generate_grid, run_sweep, GridSpec};

const GRID: &str = r#"
master_seed = 11
line_rates = ["100Mbps"]
cubic_rtts = ["25ms"]
dctcp_rtts = ["200us"]
capacities = ["1.8MB"]
ecn_thresholds = ["20KB", "200KB"]
red_mins = ["400KB", "1.8MB"]
red_maxes = ["400KB", "1.8MB"]
max_drop_probs = [0.05]
n_dctcp_senders = [1]
n_cubic_senders = [1]
flows_per_sender = [2]
sim_durations = ["400ms"]
snapshot_mean = "20ms"
flow_start_window = "50ms"
drop_tail_only = true
"#;

#[test]
fn sweep_then_report() {
    let spec = GridSpec::from_toml_str(GRID).unwrap();
    let configs = generate_grid(&spec).unwrap();
    assert_eq!(configs.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let r = run_sweep(&configs, 2, dir.path()).unwrap();
    assert_eq!((r.executed, r.skipped, r.failed), (4, 0, 0));

    let records = report::load_archives(dir.path()).unwrap();
    assert_eq!(records.len(), 4);
    for rec in &records {
        assert!(configs.contains(&rec.config));
        assert!(rec.summary.total_goodput > 0);
        assert!((0.0..=1.0).contains(&rec.summary.cubic_share));
    }

    let cells = report::heatmap(
        &records,
        Dimension::DropThreshold,
        Dimension::EcnThreshold,
        Metric::CubicShare,
        &[],
    )
    .unwrap();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|c| c.n == 1));
    assert!(cells.windows(2).all(|w| (w[0].x, w[0].y) < (w[1].x, w[1].y)));

    let only: Filter = "ecn_threshold=20KB".parse().unwrap();
    let cells = report::heatmap(
        &records,
        Dimension::DropThreshold,
        Dimension::EcnThreshold,
        Metric::TotalDrops,
        &[only],
    )
    .unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c.y == 20_000.0));

    let mut csv = Vec::new();
    report::write_aggregate_csv(&mut csv, &records).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), AGGREGATE_COLUMNS.join(","));
    assert_eq!(lines.count(), 4);
}

#[test]
fn rerun_skips_finished_archives() {
    let spec = GridSpec::from_toml_str(GRID).unwrap();
    let configs = generate_grid(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&configs[..2], 1, dir.path()).unwrap();
    let r = run_sweep(&configs, 1, dir.path()).unwrap();
    assert_eq!((r.executed, r.skipped), (2, 2));
}
