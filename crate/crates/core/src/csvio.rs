//! CSV and manifest plumbing. Columns are fixed and hand-rolled (no quoting:
//! every field is numeric, boolean, or a machine identifier), floats print at
//! 6 significant digits so reruns diff byte-for-byte.

use crate::analysis::{HeadwayInputs, HeatmapGrid, ObsRow, RegressionResult};
use crate::engine::RunLog;
use crate::measurement::RunSummary;
use crate::scenario::{FleetShares, GroupKind, Scenario};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: missing required columns: {columns}")]
    MissingColumns { path: String, columns: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CsvError {
    CsvError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A float at 6 significant digits, plain decimal notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = 5 - magnitude;
    if decimals >= 0 {
        format!("{x:.*}", decimals as usize)
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 20] = [
    "scenario_id",
    "seed",
    "lane_group",
    "approach",
    "kind",
    "hv",
    "cv",
    "av",
    "cav",
    "d_exl",
    "d_exr",
    "d_shtr",
    "rt_pct",
    "h_s",
    "n_queues",
    "low_sample",
    "delay",
    "travel_time",
    "queue_len",
    "throughput",
];

pub const INTERSECTION_HEADER: [&str; 11] = [
    "scenario_id",
    "seed",
    "hv",
    "cv",
    "av",
    "cav",
    "h_s",
    "delay",
    "travel_time",
    "queue_len",
    "throughput",
];

/// One results row: a lane group of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub seed: u64,
    pub lane_group: String,
    pub approach: String,
    pub kind: String,
    pub hv: f64,
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
    pub d_exl: bool,
    pub d_exr: bool,
    pub d_shtr: bool,
    pub rt_pct: f64,
    pub h_s: Option<f64>,
    pub n_queues: usize,
    pub low_sample: bool,
    pub delay: Option<f64>,
    pub travel_time: Option<f64>,
    pub queue_len: f64,
    pub throughput: f64,
}

/// Intersection-level row of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionRow {
    pub scenario_id: String,
    pub seed: u64,
    pub hv: f64,
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
    pub h_s: Option<f64>,
    pub delay: Option<f64>,
    pub travel_time: Option<f64>,
    pub queue_len: f64,
    pub throughput: f64,
}

/// Flatten one replication summary into results rows.
pub fn rows_from_summary(sc: &Scenario, summary: &RunSummary) -> Vec<ResultRow> {
    summary
        .groups
        .iter()
        .map(|g| ResultRow {
            scenario_id: summary.scenario_id.clone(),
            seed: summary.seed,
            lane_group: g.group.id.clone(),
            approach: g.group.approach.as_str().into(),
            kind: g.group.kind.as_str().into(),
            hv: sc.shares.hv,
            cv: sc.shares.cv,
            av: sc.shares.av,
            cav: sc.shares.cav,
            d_exl: g.group.kind == GroupKind::ExclusiveLeft,
            d_exr: g.group.kind == GroupKind::ExclusiveRight,
            d_shtr: g.group.kind == GroupKind::SharedThroughRight,
            rt_pct: g.group.rt_pct,
            h_s: g.h_s,
            n_queues: g.n_queues,
            low_sample: g.low_sample,
            delay: g.delay,
            travel_time: g.travel_time,
            queue_len: g.queue_len,
            throughput: g.throughput,
        })
        .collect()
}

pub fn intersection_row_from_summary(sc: &Scenario, summary: &RunSummary) -> IntersectionRow {
    let i = &summary.intersection;
    IntersectionRow {
        scenario_id: summary.scenario_id.clone(),
        seed: summary.seed,
        hv: sc.shares.hv,
        cv: sc.shares.cv,
        av: sc.shares.av,
        cav: sc.shares.cav,
        h_s: i.h_s,
        delay: i.delay,
        travel_time: i.travel_time,
        queue_len: i.queue_len,
        throughput: i.throughput,
    }
}

/// Regression observations from results rows: every row with a measured h_s.
pub fn observations(rows: &[ResultRow]) -> Vec<ObsRow> {
    rows.iter()
        .filter_map(|r| {
            r.h_s.map(|h_s| ObsRow {
                h_s,
                inputs: HeadwayInputs {
                    cv: r.cv,
                    av: r.av,
                    cav: r.cav,
                    d_exl: r.d_exl,
                    d_exr: r.d_exr,
                    d_shtr: r.d_shtr,
                    rt: r.rt_pct,
                },
            })
        })
        .collect()
}

fn write_atomic(path: &Path, content: &str) -> Result<(), CsvError> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| io_err(path, e))
}

/// Write the merged results CSV, sorted by (scenario_id, seed, lane_group) so
/// the bytes do not depend on execution order.
pub fn write_results_csv(path: &Path, rows: &mut [ResultRow]) -> Result<(), CsvError> {
    rows.sort_by(|a, b| {
        (&a.scenario_id, a.seed, &a.lane_group).cmp(&(&b.scenario_id, b.seed, &b.lane_group))
    });
    let mut out = RESULTS_HEADER.join(",");
    out.push('\n');
    for r in rows.iter() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.seed,
            r.lane_group,
            r.approach,
            r.kind,
            fmt_sig(r.hv),
            fmt_sig(r.cv),
            fmt_sig(r.av),
            fmt_sig(r.cav),
            r.d_exl,
            r.d_exr,
            r.d_shtr,
            fmt_sig(r.rt_pct),
            fmt_opt(r.h_s),
            r.n_queues,
            r.low_sample,
            fmt_opt(r.delay),
            fmt_opt(r.travel_time),
            fmt_sig(r.queue_len),
            fmt_sig(r.throughput),
        );
    }
    write_atomic(path, &out)
}

pub fn write_intersection_csv(path: &Path, rows: &mut [IntersectionRow]) -> Result<(), CsvError> {
    rows.sort_by(|a, b| (&a.scenario_id, a.seed).cmp(&(&b.scenario_id, b.seed)));
    let mut out = INTERSECTION_HEADER.join(",");
    out.push('\n');
    for r in rows.iter() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.seed,
            fmt_sig(r.hv),
            fmt_sig(r.cv),
            fmt_sig(r.av),
            fmt_sig(r.cav),
            fmt_opt(r.h_s),
            fmt_opt(r.delay),
            fmt_opt(r.travel_time),
            fmt_sig(r.queue_len),
            fmt_sig(r.throughput),
        );
    }
    write_atomic(path, &out)
}

/// Read a results CSV back. Column order is free; the required columns must
/// all be present by name.
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let pathstr = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| CsvError::Parse {
        path: pathstr.clone(),
        line: 1,
        message: "empty file".into(),
    })?;
    let names: Vec<&str> = header.split(',').collect();
    let mut missing = Vec::new();
    let col = |name: &'static str, missing: &mut Vec<&str>| {
        names.iter().position(|n| *n == name).unwrap_or_else(|| {
            missing.push(name);
            usize::MAX
        })
    };
    let idx: Vec<usize> = RESULTS_HEADER
        .iter()
        .map(|&n| col(n, &mut missing))
        .collect();
    if !missing.is_empty() {
        return Err(CsvError::MissingColumns {
            path: pathstr,
            columns: missing.join(", "),
        });
    }

    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |message: String| CsvError::Parse {
            path: pathstr.clone(),
            line: lineno + 1,
            message,
        };
        let get = |i: usize| -> Result<&str, CsvError> {
            fields
                .get(idx[i])
                .copied()
                .ok_or_else(|| parse_err(format!("short row: {} fields", fields.len())))
        };
        let f64_at = |i: usize| -> Result<f64, CsvError> {
            let s = get(i)?;
            s.parse()
                .map_err(|_| parse_err(format!("bad number {s:?} in column {}", RESULTS_HEADER[i])))
        };
        let opt_at = |i: usize| -> Result<Option<f64>, CsvError> {
            let s = get(i)?;
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| parse_err(format!("bad number {s:?} in column {}", RESULTS_HEADER[i])))
        };
        let bool_at = |i: usize| -> Result<bool, CsvError> {
            let s = get(i)?;
            s.parse().map_err(|_| {
                parse_err(format!("bad boolean {s:?} in column {}", RESULTS_HEADER[i]))
            })
        };
        rows.push(ResultRow {
            scenario_id: get(0)?.to_string(),
            seed: get(1)?.parse().map_err(|_| parse_err("bad seed".into()))?,
            lane_group: get(2)?.to_string(),
            approach: get(3)?.to_string(),
            kind: get(4)?.to_string(),
            hv: f64_at(5)?,
            cv: f64_at(6)?,
            av: f64_at(7)?,
            cav: f64_at(8)?,
            d_exl: bool_at(9)?,
            d_exr: bool_at(10)?,
            d_shtr: bool_at(11)?,
            rt_pct: f64_at(12)?,
            h_s: opt_at(13)?,
            n_queues: f64_at(14)? as usize,
            low_sample: bool_at(15)?,
            delay: opt_at(16)?,
            travel_time: opt_at(17)?,
            queue_len: f64_at(18)?,
            throughput: f64_at(19)?,
        });
    }
    Ok(rows)
}

/// Sweep manifest: which fleet mix each scenario id denotes, plus the seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seeds: Vec<u64>,
    pub scenarios: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scenario_id: String,
    pub hv: f64,
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
}

impl ManifestEntry {
    pub fn new(id: &str, s: FleetShares) -> Self {
        ManifestEntry {
            scenario_id: id.into(),
            hv: s.hv,
            cv: s.cv,
            av: s.av,
            cav: s.cav,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), CsvError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(path, &text)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CsvError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CsvError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Regression report: one row per term, mirroring the fitted table.
pub fn regression_report_csv(result: &RegressionResult) -> String {
    let mut out = String::from("term,coefficient,std_error,t_stat,p_value,ci95_low,ci95_high\n");
    for t in &result.terms {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.name,
            fmt_sig(t.coefficient),
            fmt_sig(t.std_error),
            fmt_sig(t.t_stat),
            fmt_sig(t.p_value),
            fmt_sig(t.ci95_low),
            fmt_sig(t.ci95_high),
        );
    }
    let _ = writeln!(out, "adj_r2,{},,,,,", fmt_sig(result.adj_r2));
    let _ = writeln!(out, "n_obs,{},,,,,", result.n_obs);
    out
}

/// Human-readable fit table (same content as the CSV, aligned).
pub fn regression_report_text(result: &RegressionResult) -> String {
    let mut out = format!(
        "{:<12} {:>12} {:>10} {:>8} {:>8} {:>20}\n",
        "term", "coef", "SE", "t", "p", "95% CI"
    );
    for t in &result.terms {
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>10} {:>8.2} {:>8.3} [{:>8}, {:>8}]",
            t.name,
            fmt_sig(t.coefficient),
            fmt_sig(t.std_error),
            t.t_stat,
            t.p_value,
            fmt_sig(t.ci95_low),
            fmt_sig(t.ci95_high),
        );
    }
    let _ = writeln!(
        out,
        "adjusted R^2 = {} over {} observations",
        fmt_sig(result.adj_r2),
        result.n_obs
    );
    out
}

/// Heatmap grid CSV: header row is CAV levels, each body row is one AV level.
pub fn write_grid_csv(path: &Path, grid: &HeatmapGrid) -> Result<(), CsvError> {
    let mut out = String::from("av\\cav");
    for c in &grid.cav_levels {
        let _ = write!(out, ",{}", fmt_sig(*c));
    }
    out.push('\n');
    for (ai, row) in grid.cells.iter().enumerate() {
        let _ = write!(out, "{}", fmt_sig(grid.av_levels[ai]));
        for cell in row {
            let _ = write!(out, ",{}", fmt_opt(*cell));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Trajectory CSV from a run log that sampled them.
pub fn write_trajectories_csv(path: &Path, log: &RunLog) -> Result<(), CsvError> {
    let mut out = String::from("t,id,fleet,lane,position,speed\n");
    for s in log.trajectories.as_deref().unwrap_or_default() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(s.t),
            s.id,
            s.fleet.as_str(),
            s.lane,
            fmt_sig(s.position),
            fmt_sig(s.speed),
        );
    }
    write_atomic(path, &out)
}

struct EventRow {
    t: f64,
    event: &'static str,
    movement: String,
    lane: Option<usize>,
    vehicle: Option<u64>,
    fleet: Option<&'static str>,
}

/// Event log CSV: every stop-bar crossing and every signal change over the
/// whole run, warmup included. Signal rows name the movement whose display
/// changed; crossing rows name the vehicle.
pub fn write_events_csv(path: &Path, sc: &Scenario, log: &RunLog) -> Result<(), CsvError> {
    let horizon = log.warmup + log.duration;
    let cycle = sc.plan.cycle_length();
    let mut rows = Vec::new();

    let mut phase_start = 0.0;
    for ph in &sc.plan.phases {
        let changes = [
            ("green_start", phase_start),
            ("amber_start", phase_start + ph.green),
            ("red_start", phase_start + ph.green + ph.amber),
        ];
        for &(approach, turn) in &ph.movements {
            let movement = format!("{}:{}", approach.as_str(), turn.as_str());
            for (event, at) in changes {
                // Absolute times t with (t + offset) = at (mod cycle).
                let mut k = ((sc.plan.offset - at) / cycle).ceil() as i64;
                loop {
                    let t = at - sc.plan.offset + k as f64 * cycle;
                    if t > horizon {
                        break;
                    }
                    if t >= 0.0 {
                        rows.push(EventRow {
                            t,
                            event,
                            movement: movement.clone(),
                            lane: None,
                            vehicle: None,
                            fleet: None,
                        });
                    }
                    k += 1;
                }
            }
        }
        phase_start += ph.total();
    }

    for v in &log.vehicles {
        if let Some(t) = v.crossing_time {
            rows.push(EventRow {
                t,
                event: "crossing",
                movement: format!("{}:{}", v.approach.as_str(), v.movement.as_str()),
                lane: Some(v.lane),
                vehicle: Some(v.id),
                fleet: Some(v.fleet.as_str()),
            });
        }
    }

    rows.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then_with(|| a.event.cmp(b.event))
            .then_with(|| a.movement.cmp(&b.movement))
            .then_with(|| a.vehicle.cmp(&b.vehicle))
    });

    let mut out = String::from("t,event,movement,lane,vehicle,fleet\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(r.t),
            r.event,
            r.movement,
            r.lane.map(|l| l.to_string()).unwrap_or_default(),
            r.vehicle.map(|v| v.to_string()).unwrap_or_default(),
            r.fleet.unwrap_or_default(),
        );
    }
    write_atomic(path, &out)
}
