//! Post-processing of a run log: queue-discharge extraction, the field-manual
//! saturation-headway estimator (timer from the 4th to the last of the
//! 7th–10th queued vehicle, ≥ 30 valid queues for a trustworthy estimate),
//! and per-lane-group mobility aggregates.

use crate::engine::{RunLog, VehicleRecord, EXIT_MARGIN, TURN_CAP_ZONE, TURN_SPEED_CAP};
use crate::scenario::{lane_groups, LaneGroup, Scenario};
use crate::signal::Turn;
use serde::Serialize;

/// s — one aggregation period.
pub const PERIOD: f64 = 900.0;
/// Queues shorter than this are excluded from headway estimation.
pub const MIN_QUEUE: usize = 7;
/// First timer vehicle (1-based queue position).
pub const TIMER_FROM: usize = 4;
/// Last timer vehicle position considered.
pub const TIMER_TO: usize = 10;
/// Fewer valid queues than this flags the estimate as low-sample.
pub const MIN_VALID_QUEUES: usize = 30;

/// One lane's stopped queue at a green onset, with the crossing times of the
/// queued vehicles during that service interval (in queue order, truncated at
/// the first vehicle that did not clear before the signal returned to red).
#[derive(Debug, Clone, Serialize)]
pub struct QueueDischargeRecord {
    pub group: usize,
    pub lane: usize,
    /// Running count of onsets seen by this lane.
    pub cycle_index: u64,
    pub onset_t: f64,
    pub queue_size_at_green: usize,
    pub crossing_times: Vec<f64>,
    /// Long enough for the estimator (≥ 7 queued at onset).
    pub valid: bool,
    /// 15-minute bucket within the measured window.
    pub period_index: usize,
    /// (t_last − t_4)/(last − 4), where `last` is the last of the 7th–10th
    /// queued vehicles to clear during the interval; absent when fewer than
    /// seven cleared.
    pub headway: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationEstimate {
    /// Mean headway over contributing records; absent when there are none.
    pub h_s: Option<f64>,
    /// Records that contributed a headway.
    pub n_queues: usize,
    /// Whole-run sample below the field-manual minimum.
    pub low_sample: bool,
}

/// Pull every measured-window green-onset queue out of a run log.
///
/// The queue at an onset is the contiguous stopped prefix upstream of the bar
/// at that instant; vehicles joining after the onset are not counted. Onsets
/// with an empty queue produce no record.
pub fn extract_discharges(log: &RunLog, sc: &Scenario) -> Vec<QueueDischargeRecord> {
    let groups = lane_groups(sc);
    let mut lane_to_group = vec![usize::MAX; sc.lanes.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &l in &g.lanes {
            lane_to_group[l] = gi;
        }
    }
    let crossing_of: std::collections::HashMap<u64, f64> = log
        .vehicles
        .iter()
        .filter_map(|v| v.crossing_time.map(|t| (v.id, t)))
        .collect();
    // How long each lane's movement may legally cross once its green starts.
    let service_len: Vec<f64> = sc
        .lanes
        .iter()
        .map(|lane| {
            let mv = (lane.approach, lane.allowed[0]);
            sc.plan
                .phases
                .iter()
                .find(|ph| ph.movements.contains(&mv))
                .map_or(f64::MAX, |ph| ph.green + ph.amber + ph.all_red)
        })
        .collect();

    let mut cycle_count = vec![0u64; sc.lanes.len()];
    let mut out = Vec::new();
    for onset in &log.onsets {
        let in_window = onset.t >= log.warmup && onset.t < log.warmup + log.duration;
        let cycle_index = cycle_count[onset.lane];
        cycle_count[onset.lane] += 1;
        if !in_window {
            continue;
        }
        let q = onset.queued.len();
        let service_end = onset.t + service_len[onset.lane];
        let crossing_times: Vec<f64> = onset
            .queued
            .iter()
            .map_while(|id| crossing_of.get(id).copied())
            .take_while(|&t| t < service_end)
            .collect();
        let valid = q >= MIN_QUEUE;
        // Timer ends at the last of vehicles 7..=10 that cleared this green;
        // a queue that only partially discharges still yields a headway from
        // the vehicles that did.
        let last = q.min(TIMER_TO).min(crossing_times.len());
        let headway = (valid && last >= MIN_QUEUE).then(|| {
            (crossing_times[last - 1] - crossing_times[TIMER_FROM - 1]) / (last - TIMER_FROM) as f64
        });
        out.push(QueueDischargeRecord {
            group: lane_to_group[onset.lane],
            lane: onset.lane,
            cycle_index,
            onset_t: onset.t,
            queue_size_at_green: q,
            crossing_times,
            valid,
            period_index: ((onset.t - log.warmup) / PERIOD).floor().max(0.0) as usize,
            headway,
        });
    }
    out
}

/// Saturation headway over a set of records (already filtered to one lane
/// group), pooled across periods or restricted to one 15-minute period.
pub fn saturation_headway(
    records: &[QueueDischargeRecord],
    period: Option<usize>,
) -> SaturationEstimate {
    let total_valid = records.iter().filter(|r| r.headway.is_some()).count();
    let hs: Vec<f64> = records
        .iter()
        .filter(|r| period.is_none_or(|p| r.period_index == p))
        .filter_map(|r| r.headway)
        .collect();
    SaturationEstimate {
        h_s: (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64),
        n_queues: hs.len(),
        low_sample: total_valid < MIN_VALID_QUEUES,
    }
}

/// Unimpeded traversal time for one vehicle: the full link at its own desired
/// speed, with turning trips capped over the curve zone.
pub fn free_flow_time(sc: &Scenario, movement: Turn, desired_speed: f64) -> f64 {
    match movement {
        Turn::Through => (sc.link_length + EXIT_MARGIN) / desired_speed,
        Turn::Left | Turn::Right => {
            (sc.link_length - TURN_CAP_ZONE) / desired_speed
                + TURN_CAP_ZONE / desired_speed.min(TURN_SPEED_CAP)
        }
    }
}

/// Control delay of one completed vehicle; None for vehicles cut off by the
/// end of the run or those that entered during warmup.
pub fn control_delay(rec: &VehicleRecord, sc: &Scenario) -> Option<f64> {
    if rec.entry_time < sc.warmup {
        return None;
    }
    let exit = rec.exit_time?;
    Some((exit - rec.entry_time) - free_flow_time(sc, rec.movement, rec.desired_speed))
}

/// Everything reported for one lane group of one replication.
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: LaneGroup,
    pub h_s: Option<f64>,
    pub n_queues: usize,
    pub low_sample: bool,
    /// s/veh over completed measured-window vehicles.
    pub delay: Option<f64>,
    /// s/veh actual traversal time.
    pub travel_time: Option<f64>,
    /// veh, time-mean of the stopped count.
    pub queue_len: f64,
    /// veh/h through the bar during the measured window.
    pub throughput: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntersectionSummary {
    /// Volume-weighted mean of lane-group saturation headways.
    pub h_s: Option<f64>,
    pub delay: Option<f64>,
    pub travel_time: Option<f64>,
    /// Sum of group mean queue lengths.
    pub queue_len: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario_id: String,
    pub seed: u64,
    pub groups: Vec<GroupSummary>,
    pub intersection: IntersectionSummary,
}

/// Reduce one run log to its per-group and intersection-level summary.
pub fn summarize(sc: &Scenario, log: &RunLog) -> RunSummary {
    let groups = lane_groups(sc);
    let mut lane_to_group = vec![usize::MAX; sc.lanes.len()];
    for (gi, g) in groups.iter().enumerate() {
        for &l in &g.lanes {
            lane_to_group[l] = gi;
        }
    }
    let records = extract_discharges(log, sc);
    let hours = log.duration / 3600.0;

    let mut delays: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
    let mut travels: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
    let mut crossings = vec![0u64; groups.len()];
    for v in &log.vehicles {
        let gi = lane_to_group[v.lane];
        if let Some(tc) = v.crossing_time {
            if tc >= log.warmup && tc < log.warmup + log.duration {
                crossings[gi] += 1;
            }
        }
        if let Some(d) = control_delay(v, sc) {
            delays[gi].push(d);
            travels[gi].push(v.exit_time.unwrap() - v.entry_time);
        }
    }

    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let mut out_groups = Vec::with_capacity(groups.len());
    for (gi, g) in groups.iter().enumerate() {
        let recs: Vec<QueueDischargeRecord> =
            records.iter().filter(|r| r.group == gi).cloned().collect();
        let est = saturation_headway(&recs, None);
        let queue_len = if log.queue_samples > 0 {
            g.lanes.iter().map(|&l| log.queue_len_sum[l]).sum::<f64>() / log.queue_samples as f64
        } else {
            0.0
        };
        out_groups.push(GroupSummary {
            group: g.clone(),
            h_s: est.h_s,
            n_queues: est.n_queues,
            low_sample: est.low_sample,
            delay: mean(&delays[gi]),
            travel_time: mean(&travels[gi]),
            queue_len,
            throughput: crossings[gi] as f64 / hours,
        });
    }

    let weighted: Vec<(f64, f64)> = out_groups
        .iter()
        .filter_map(|g| g.h_s.map(|h| (g.group.demand_vph, h)))
        .collect();
    let wsum: f64 = weighted.iter().map(|(w, _)| w).sum();
    let h_s = (wsum > 0.0).then(|| weighted.iter().map(|(w, h)| w * h).sum::<f64>() / wsum);
    let all_delays: Vec<f64> = delays.iter().flatten().copied().collect();
    let all_travels: Vec<f64> = travels.iter().flatten().copied().collect();
    let intersection = IntersectionSummary {
        h_s,
        delay: mean(&all_delays),
        travel_time: mean(&all_travels),
        queue_len: out_groups.iter().map(|g| g.queue_len).sum(),
        throughput: crossings.iter().sum::<u64>() as f64 / hours,
    };
    RunSummary {
        scenario_id: log.scenario_id.clone(),
        seed: log.seed,
        groups: out_groups,
        intersection,
    }
}
