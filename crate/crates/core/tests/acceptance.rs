//! Acceptance suite. Runs every exit criterion at its fixed tolerance and
//! prints one PASS/FAIL line each; the process fails if any criterion does.
//!
//! Desk-scale defaults throughout: 1 Gb/s, 1.8 MB buffer, 5 DCTCP + 5 Cubic
//! senders with 4 flows each, 25 ms / 200 us RTTs, 10 s of simulated time.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;

use rayon::prelude::*;

use bufshare::net::{Group, Packet, DATA_WIRE_LEN};
use bufshare::qdisc::{red_drop_probability, SharedBufferConfig, SharedBufferQueue, Verdict};
use bufshare::sim::{RandomSource, SimTime};
use bufshare::sweep::{archive_name, generate_grid, run_sweep, ByteValues, GridSpec};
use bufshare::transport::cubic::{cubic_target_window, CubicState, DEFAULT_BETA, DEFAULT_C};
use bufshare::transport::dctcp::{dctcp_update_alpha, DEFAULT_G};
use bufshare::transport::{Connection, Phase, TransportConfig};
use bufshare::units::{BitRate, Span};
use bufshare::{run_experiment, ExperimentConfig, ExperimentSummary, SimDuration};

const SEEDS: [u64; 3] = [1, 2, 3];
const ECNS: [u64; 4] = [20_000, 100_000, 200_000, 400_000];
const DROP_TAILS: [u64; 4] = [200_000, 800_000, 1_600_000, 1_800_000];

type Outcome = Result<String, String>;

fn run(cfg: &ExperimentConfig) -> ExperimentSummary {
    run_experiment(cfg).expect("experiment runs").summary
}

fn desk(seed: u64, ecn: u64, drop_tail: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk(seed);
    c.buffer.ecn_threshold = ecn;
    c.buffer.red_min = drop_tail;
    c.buffer.red_max = drop_tail;
    c
}

/// Per (ECN, drop-tail) cell: mean Cubic share and mean total drops over
/// the seed set.
fn desk_grid() -> &'static BTreeMap<(u64, u64), (f64, f64)> {
    static GRID: OnceLock<BTreeMap<(u64, u64), (f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let jobs: Vec<(u64, u64, u64)> = ECNS
            .iter()
            .flat_map(|&e| {
                DROP_TAILS
                    .iter()
                    .flat_map(move |&d| SEEDS.iter().map(move |&s| (e, d, s)))
            })
            .collect();
        let results: Vec<((u64, u64), ExperimentSummary)> = jobs
            .par_iter()
            .map(|&(e, d, s)| ((e, d), run(&desk(s, e, d))))
            .collect();
        let mut cells: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
        for (key, s) in results {
            let c = cells.entry(key).or_default();
            c.0 += s.cubic_share / SEEDS.len() as f64;
            c.1 += s.total_drops as f64 / SEEDS.len() as f64;
        }
        cells
    })
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ecn_trend() -> Outcome {
    let g = desk_grid();
    let shares: Vec<f64> = ECNS.iter().map(|&e| g[&(e, 1_800_000)].0).collect();
    let gap = shares[3] - shares[0];
    let drops: Vec<f64> = shares.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    let monotone = drops.len() <= 1 && drops.iter().all(|d| *d <= 0.02);
    verdict(
        gap >= 0.05 && monotone,
        format!("cubic share over ECN 20/100/200/400KB = {shares:.3?}; share(400KB)-share(20KB) = {gap:.3} (need >= 0.05), inversions = {drops:.3?} (need at most one, <= 0.02)"),
    )
}

fn drop_threshold_trend() -> Outcome {
    let g = desk_grid();
    let low = g[&(100_000, 200_000)].0;
    let high = g[&(100_000, 1_600_000)].0;
    verdict(
        high - low >= 0.05,
        format!(
            "cubic share at drop-tail 200KB = {low:.3}, 1.6MB = {high:.3}; difference {:.3} (need >= 0.05)",
            high - low
        ),
    )
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn drops_correlation() -> Outcome {
    let g = desk_grid();
    let shares: Vec<f64> = g.values().map(|c| c.0).collect();
    let drops: Vec<f64> = g.values().map(|c| c.1).collect();
    let rho = spearman(&shares, &drops);
    verdict(
        rho > 0.0,
        format!("spearman(cubic share, total drops) over 16 cells = {rho:.3} (need > 0)"),
    )
}

fn red_vs_drop_tail() -> Outcome {
    let red = SharedBufferConfig {
        red_min: 900_000,
        red_max: 1_800_000,
        max_drop_prob: 0.05,
        ..SharedBufferConfig::default()
    };
    let mean = |buffer: SharedBufferConfig| {
        let runs: Vec<ExperimentSummary> = SEEDS
            .par_iter()
            .map(|&s| {
                let mut c = ExperimentConfig::desk(s);
                c.buffer = buffer;
                run(&c)
            })
            .collect();
        let n = runs.len() as f64;
        (
            runs.iter().map(|r| r.total_drops as f64).sum::<f64>() / n,
            runs.iter().map(|r| r.avg_buffer).sum::<f64>() / n,
            runs.iter().map(|r| r.max_buffer as f64).sum::<f64>() / n,
        )
    };
    let (rd, ra, rm) = mean(red);
    let (dd, da, dm) = mean(SharedBufferConfig::default());
    let max_gap = (rm - dm).abs() / rm.max(dm);
    verdict(
        rd < dd && ra < da && max_gap <= 0.15,
        format!(
            "RED vs drop-tail means: drops {rd:.0} vs {dd:.0}, avg buffer {ra:.0} vs {da:.0}, max buffer {rm:.0} vs {dm:.0} ({:.1}% apart, need <= 15%)",
            max_gap * 100.0
        ),
    )
}

fn solo_sanity() -> Outcome {
    let mut cubic = ExperimentConfig::desk(1);
    cubic.n_dctcp_senders = 0;
    let mut dctcp = ExperimentConfig::desk(1);
    dctcp.n_cubic_senders = 0;
    let k = dctcp.buffer.ecn_threshold as f64;
    let (c, d) = rayon::join(|| run(&cubic), || run(&dctcp));
    let util = c.utilization();
    let q = d.avg_buffer;
    let overflow = d.counters.dropped_overflow;
    verdict(
        util >= 0.85 && (0.3 * k..=3.0 * k).contains(&q) && overflow == 0,
        format!(
            "cubic-only utilization {util:.3} (need >= 0.85); dctcp-only mean queue {q:.0} B in [{:.0}, {:.0}], overflow drops {overflow} (need 0)",
            0.3 * k,
            3.0 * k
        ),
    )
}

fn filler(ect: bool) -> Packet {
    Packet::data(0, 0, 1448, ect, SimTime::ZERO)
}

fn red_oracle() -> Outcome {
    let cfg = SharedBufferConfig {
        capacity: 2_400_000,
        ecn_threshold: 2_400_000,
        red_min: 900_000,
        red_max: 1_800_000,
        max_drop_prob: 0.05,
        avg_weight: 1.0,
    };
    const TRIALS: u64 = 100_000;
    let mut rng = RandomSource::new(42).fork("oracle");
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let mut ok = true;
    // Queue depths in packets: below min, at min, inside the ramp, just
    // under max, at max.
    for depth in [500u64, 600, 750, 900, 1050, 1199, 1200] {
        let mut q = SharedBufferQueue::new(cfg).unwrap();
        for _ in 0..depth {
            assert!(q.enqueue(filler(true), &mut rng).accepted());
        }
        let level = q.bytes_queued();
        let p = red_drop_probability(level as f64, &cfg);
        let mut drops = 0u64;
        for _ in 0..TRIALS {
            match q.enqueue(filler(false), &mut rng) {
                Verdict::DroppedRed => drops += 1,
                v if v.accepted() => {
                    q.dequeue();
                }
                other => panic!("unexpected verdict {other:?}"),
            }
            assert_eq!(q.bytes_queued(), level);
        }
        let expect = p * TRIALS as f64;
        let sigma = (TRIALS as f64 * p * (1.0 - p)).sqrt();
        let dev = (drops as f64 - expect).abs();
        let within = dev <= 3.0 * sigma;
        ok &= within;
        if sigma > 0.0 {
            worst = worst.max(dev / sigma);
        }
        lines.push(format!("{}KB:{drops}/{expect:.0}", level / 1000));
    }
    let invariants = qdisc_invariants();
    verdict(
        ok && invariants.is_ok(),
        format!(
            "7 buckets x 1e5 arrivals [{}], worst deviation {worst:.2} sigma (need <= 3); invariants: {}",
            lines.join(" "),
            invariants.unwrap_or_else(|e| e)
        ),
    )
}

/// Random interleaving of ECT and non-ECT arrivals with departures,
/// checked after every step against an independent byte ledger.
fn qdisc_invariants() -> Result<String, String> {
    let cfg = SharedBufferConfig {
        capacity: 600_000,
        ecn_threshold: 150_000,
        red_min: 200_000,
        red_max: 500_000,
        max_drop_prob: 0.3,
        avg_weight: 0.25,
    };
    let mut q = SharedBufferQueue::new(cfg).unwrap();
    let mut script = RandomSource::new(7).fork("script");
    let mut rng = RandomSource::new(7).fork("red");
    let mut ledger = std::collections::VecDeque::new();
    let mut arrivals = 0u64;
    for step in 0..100_000 {
        if script.chance(0.55) {
            let ect = script.chance(0.5);
            arrivals += 1;
            let v = q.enqueue(filler(ect), &mut rng);
            if ect && v == Verdict::DroppedRed {
                return Err(format!("step {step}: ECT packet RED-dropped"));
            }
            if !ect && v == Verdict::EnqueuedMarked {
                return Err(format!("step {step}: non-ECT packet marked"));
            }
            if v.accepted() {
                ledger.push_back(ect);
            }
        } else if let Some(p) = q.dequeue() {
            let ect = ledger.pop_front().expect("ledger in sync");
            if p.ect != ect || (p.ce && !p.ect) {
                return Err(format!("step {step}: departure order or marking broken"));
            }
        }
        let c = q.counters();
        let bytes = ledger.len() as u64 * DATA_WIRE_LEN as u64;
        if q.bytes_queued() != bytes || bytes > cfg.capacity || q.max_bytes_seen() < bytes {
            return Err(format!("step {step}: byte accounting broken"));
        }
        if c.arrivals() != arrivals || c.enqueued != c.dequeued + q.len() as u64 {
            return Err(format!("step {step}: counter conservation broken"));
        }
    }
    let c = q.counters();
    Ok(format!(
        "held over 1e5 steps ({} overflow, {} RED drops, {} marks)",
        c.dropped_overflow, c.dropped_red, c.marked_ecn
    ))
}

fn determinism() -> Outcome {
    let spec = GridSpec {
        line_rates: vec![BitRate(1_000_000_000)],
        cubic_rtts: vec![Span(SimDuration::from_millis(25))],
        ecn_thresholds: ByteValues::list(&[20_000, 400_000]),
        red_mins: ByteValues::list(&[200_000, 1_800_000]),
        red_maxes: ByteValues::list(&[200_000, 1_800_000]),
        sim_durations: vec![Span(SimDuration::from_secs(10))],
        drop_tail_only: true,
        ..GridSpec::desk()
    };
    let configs = generate_grid(&spec).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_sweep(&configs, 1, a.path()).unwrap();
    let rb = run_sweep(&configs, 4, b.path()).unwrap();
    let read = |dir: &Path, i: usize| fs::read(dir.join(archive_name(i))).unwrap();
    let identical = (0..configs.len()).all(|i| read(a.path(), i) == read(b.path(), i));
    verdict(
        identical && ra.failed == 0 && rb.failed == 0,
        format!(
            "{} archives, workers 1 vs 4: {}",
            configs.len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn transport_suite() -> Outcome {
    let mut checks: Vec<(&str, bool)> = Vec::new();

    // Fixed points and geometric decay of the marked-fraction estimate.
    checks.push(("alpha fixed point 0", dctcp_update_alpha(0.0, 0.0, DEFAULT_G) == 0.0));
    checks.push(("alpha fixed point 1", dctcp_update_alpha(1.0, 1.0, DEFAULT_G) == 1.0));
    checks.push(("alpha fixed point f", dctcp_update_alpha(0.25, 0.25, DEFAULT_G) == 0.25));
    let mut a = 1.0;
    let mut decay = true;
    for expect in [0.9375, 0.87890625, 0.823974609375] {
        a = dctcp_update_alpha(a, 0.0, DEFAULT_G);
        decay &= a == expect;
    }
    checks.push(("alpha decays by 15/16 per unmarked window", decay));

    let mut cs = CubicState::new(DEFAULT_C, DEFAULT_BETA, true);
    cs.w_max = 100.0;
    cs.k = cs.k_after_reduction();
    let w0 = cubic_target_window(0.0, &cs);
    let wk = cubic_target_window(cs.k, &cs);
    checks.push((
        "W(0) = beta * W_max",
        ((w0 - DEFAULT_BETA * 100.0) / 70.0).abs() <= 1e-6,
    ));
    checks.push(("W(K) = W_max", ((wk - 100.0) / 100.0).abs() <= 1e-6));

    for group in [Group::Cubic, Group::Dctcp] {
        let cfg = TransportConfig::default();
        let mss = cfg.mss as u64;
        let mut c = Connection::new(0, group, cfg);
        let mut out = Vec::new();
        c.start(SimTime::ZERO, &mut out);
        out.clear();
        let ack = |n| Packet::ack(0, n, false, SimTime::ZERO);
        c.on_ack(&ack(mss), SimTime(10), &mut out);
        out.clear();
        let mut exact = true;
        for i in 1..=2 {
            c.on_ack(&ack(mss), SimTime(10 + i), &mut out);
            exact &= c.fast_retransmits() == 0 && out.iter().all(|p| p.seq != mss);
        }
        c.on_ack(&ack(mss), SimTime(20), &mut out);
        exact &= c.fast_retransmits() == 1
            && c.phase() == Phase::FastRecovery
            && out.iter().filter(|p| p.seq == mss).count() == 1;
        checks.push((
            if group == Group::Cubic {
                "cubic fast retransmit on 3rd dup-ACK"
            } else {
                "dctcp fast retransmit on 3rd dup-ACK"
            },
            exact,
        ));
    }

    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} exact checks hold", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("ECN-threshold trend", ecn_trend),
        ("drop-threshold trend", drop_threshold_trend),
        ("drops correlate with cubic share", drops_correlation),
        ("RED vs drop-tail", red_vs_drop_tail),
        ("solo-algorithm sanity", solo_sanity),
        ("qdisc oracle equivalence", red_oracle),
        ("sweep determinism", determinism),
        ("transport unit suite", transport_suite),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("criterion {}: PASS  {name}: {d}", i + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {}: FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
