//! The fixed-step world: arrivals, signal interaction, car following,
//! kinematic integration, and the run log everything downstream consumes.
//!
//! One step is strictly ordered — advisory, stop/go, acceleration from the
//! previous step's state, integration, crossings/exits, arrivals — and all
//! randomness flows through a single seeded stream in a fixed draw order, so
//! a `(scenario, seed)` pair determines every output bit.

use crate::driver::{
    builtin_profile, compute_acceleration, envelope_speed, sample_accel_multiplier,
    sample_band_ratio, sample_desired_speed, AmberMode, DriverError, DriverProfile, Fleet,
    FollowerState, LeaderView, B_COMFORT, B_EMAX,
};
use crate::run_seed;
use crate::scenario::{Scenario, ScenarioError, VEHICLE_LENGTH};
use crate::signal::{
    advisory_speed, required_decel, stop_go_decision, Approach, Decision, Indication, Movement,
    SignalError, Turn, CRAWL_FLOOR,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

/// m/s — below this a vehicle counts as stopped (queue membership).
pub const V_STOP: f64 = 1.0;
/// m/s — turning vehicles slow to this while negotiating the curve.
pub const TURN_SPEED_CAP: f64 = 8.0;
/// m upstream of the bar where the turning cap applies.
pub const TURN_CAP_ZONE: f64 = 30.0;
/// m past the bar where through vehicles leave the model.
pub const EXIT_MARGIN: f64 = 30.0;
/// m — communication range of the roadside unit; connected vehicles receive
/// the pacing advisory only once they are this close to the stop bar.
pub const ADVISORY_RANGE: f64 = 150.0;
/// m — the virtual stop-bar leader is placed so vehicles park with the front
/// bumper just short of the bar.
const BAR_PARK_OFFSET: f64 = 0.25;
/// m — tolerance on the brick-wall invariant check.
const BRICK_WALL_EPS: f64 = 0.05;

/// The four driver profiles in effect for a run (built-ins plus overrides).
#[derive(Debug, Clone)]
pub struct Profiles {
    by_fleet: [DriverProfile; 4],
}

impl Profiles {
    pub fn builtin() -> Self {
        Profiles {
            by_fleet: [
                builtin_profile(Fleet::Hv),
                builtin_profile(Fleet::Cv),
                builtin_profile(Fleet::Av),
                builtin_profile(Fleet::Cav),
            ],
        }
    }

    pub fn get(&self, fleet: Fleet) -> &DriverProfile {
        &self.by_fleet[fleet.index()]
    }

    pub fn get_mut(&mut self, fleet: Fleet) -> &mut DriverProfile {
        &mut self.by_fleet[fleet.index()]
    }
}

impl Default for Profiles {
    fn default() -> Self {
        Profiles::builtin()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VehicleState {
    pub id: u64,
    pub fleet: Fleet,
    pub approach: Approach,
    pub movement: Turn,
    pub lane: usize,
    /// m — front bumper; the stop bar is 0, upstream is negative.
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub length: f64,
    pub desired_speed: f64,
    pub accel_multiplier: f64,
    pub band_ratio: f64,
    pub entry_time: f64,
    pub crossing_time: Option<f64>,
    pub stops: u32,
    amber_decision: Option<Decision>,
    committed_red: bool,
    hold_until: Option<f64>,
    was_moving: bool,
}

impl VehicleState {
    fn movement_key(&self) -> Movement {
        (self.approach, self.movement)
    }
}

/// Everything measurement needs about one finished (or cut-off) vehicle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleRecord {
    pub id: u64,
    pub fleet: Fleet,
    pub approach: Approach,
    pub movement: Turn,
    pub lane: usize,
    pub entry_time: f64,
    pub crossing_time: Option<f64>,
    /// None when the run ended with the vehicle still on the link.
    pub exit_time: Option<f64>,
    pub desired_speed: f64,
    pub stops: u32,
}

/// Stopped vehicles in one lane at one green onset, nearest the bar first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnsetQueue {
    pub t: f64,
    pub lane: usize,
    pub queued: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajSample {
    pub t: f64,
    pub id: u64,
    pub fleet: Fleet,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub scenario_id: String,
    pub seed: u64,
    pub dt: f64,
    pub warmup: f64,
    pub duration: f64,
    pub cycle_length: f64,
    pub vehicles: Vec<VehicleRecord>,
    pub onsets: Vec<OnsetQueue>,
    /// Per lane: sum over measured steps of the stopped-vehicle count.
    pub queue_len_sum: Vec<f64>,
    /// Number of measured steps behind `queue_len_sum`.
    pub queue_samples: u64,
    pub entered: u64,
    pub exited: u64,
    /// Front bumpers that crossed on red without a feasible-stop exemption.
    /// Always 0 unless the signal logic is broken.
    pub red_crossings: u64,
    pub trajectories: Option<Vec<TrajSample>>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("vehicle state corrupt at t={t:.1}s in lane {lane}: {source}")]
    Driver {
        t: f64,
        lane: usize,
        source: DriverError,
    },
    #[error(
        "collision at t={t:.1}s in lane {lane}: gap {gap:.3} m between #{leader} and #{follower}"
    )]
    Collision {
        t: f64,
        lane: usize,
        leader: u64,
        follower: u64,
        gap: f64,
    },
    #[error(
        "brick-wall violation at t={t:.1}s lane {lane} vehicle #{id}: gap {gap:.3} m < {needed:.3} m"
    )]
    BrickWall {
        t: f64,
        lane: usize,
        id: u64,
        gap: f64,
        needed: f64,
    },
    #[error(
        "conservation breach at t={t:.1}s: entered {entered} != exited {exited} + driving {driving} + held {held}"
    )]
    Conservation {
        t: f64,
        entered: u64,
        exited: u64,
        driving: u64,
        held: u64,
    },
}

struct LaneRt {
    approach: Approach,
    allowed: Vec<Turn>,
    /// Index 0 is the most downstream vehicle.
    vehicles: VecDeque<VehicleState>,
    /// Generated but not yet on the link (vertical queue), FIFO.
    holding: VecDeque<VehicleState>,
}

/// Kinematic snapshot used as the synchronous "previous state" within a step.
#[derive(Clone, Copy)]
struct Kin {
    position: f64,
    speed: f64,
    accel: f64,
    length: f64,
    connected: bool,
}

pub struct Engine {
    sc: Scenario,
    profiles: Profiles,
    lanes: Vec<LaneRt>,
    /// Lane indices serving each (approach, turn), for arrival lane choice.
    movement_lanes: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    step: u64,
    next_id: u64,
    prev_indication: Vec<Indication>,
    log: RunLog,
    scratch_kin: Vec<Kin>,
    scratch_accel: Vec<f64>,
}

fn movement_slot(a: Approach, t: Turn) -> usize {
    a.index() * 3
        + match t {
            Turn::Left => 0,
            Turn::Through => 1,
            Turn::Right => 2,
        }
}

impl Engine {
    pub fn new(
        sc: &Scenario,
        profiles: &Profiles,
        seed: u64,
        trajectories: bool,
    ) -> Result<Engine, EngineError> {
        sc.validate()?;
        let lanes: Vec<LaneRt> = sc
            .lanes
            .iter()
            .map(|l| LaneRt {
                approach: l.approach,
                allowed: l.allowed.clone(),
                vehicles: VecDeque::new(),
                holding: VecDeque::new(),
            })
            .collect();
        let mut movement_lanes = vec![Vec::new(); 12];
        for (i, l) in sc.lanes.iter().enumerate() {
            for &t in &l.allowed {
                movement_lanes[movement_slot(l.approach, t)].push(i);
            }
        }
        let mut prev_indication = Vec::with_capacity(lanes.len());
        for l in &lanes {
            prev_indication.push(sc.plan.indication((l.approach, l.allowed[0]), 0.0)?);
        }
        let n_lanes = lanes.len();
        Ok(Engine {
            sc: sc.clone(),
            profiles: profiles.clone(),
            lanes,
            movement_lanes,
            rng: ChaCha8Rng::seed_from_u64(run_seed(&sc.id, seed)),
            step: 0,
            next_id: 1,
            prev_indication,
            log: RunLog {
                scenario_id: sc.id.clone(),
                seed,
                dt: sc.dt,
                warmup: sc.warmup,
                duration: sc.duration,
                cycle_length: sc.plan.cycle_length(),
                vehicles: Vec::new(),
                onsets: Vec::new(),
                queue_len_sum: vec![0.0; n_lanes],
                queue_samples: 0,
                entered: 0,
                exited: 0,
                red_crossings: 0,
                trajectories: trajectories.then(Vec::new),
            },
            scratch_kin: Vec::new(),
            scratch_accel: Vec::new(),
        })
    }

    fn t(&self) -> f64 {
        self.step as f64 * self.sc.dt
    }

    fn in_measured_window(&self, t: f64) -> bool {
        t >= self.sc.warmup && t < self.sc.warmup + self.sc.duration
    }

    /// Record green onsets and snapshot the stopped queues at those instants.
    fn observe_signals(&mut self) -> Result<(), EngineError> {
        let t = self.t();
        for (i, lane) in self.lanes.iter().enumerate() {
            let ind = self
                .sc
                .plan
                .indication((lane.approach, lane.allowed[0]), t)?;
            if ind == Indication::Green && self.prev_indication[i] != Indication::Green {
                let mut queued = Vec::new();
                for v in &lane.vehicles {
                    if v.position >= 0.0 {
                        continue; // already past the bar, not part of the queue
                    }
                    if v.speed < V_STOP {
                        queued.push(v.id);
                    } else {
                        break; // the queue is the contiguous stopped prefix
                    }
                }
                if !queued.is_empty() {
                    self.log.onsets.push(OnsetQueue { t, lane: i, queued });
                }
            }
            self.prev_indication[i] = ind;
        }
        Ok(())
    }

    /// Stop/go bookkeeping plus the acceleration decision for one vehicle.
    /// `kin` holds the whole lane's previous-step kinematics.
    fn decide_accel(
        &mut self,
        lane_idx: usize,
        veh_idx: usize,
        kin: &[Kin],
    ) -> Result<f64, EngineError> {
        let t = self.t();
        let dt = self.sc.dt;
        let plan = self.sc.plan.clone();
        let v_now = kin[veh_idx];
        let lane = &mut self.lanes[lane_idx];
        let veh = &mut lane.vehicles[veh_idx];
        let p = &self.profiles.by_fleet[veh.fleet.index()];
        let crossed = v_now.position >= 0.0;
        let dist_to_bar = -v_now.position;
        let in_zone = v_now.position >= -p.zone_upstream && v_now.position <= p.zone_downstream;

        let mut v_des = veh.desired_speed;
        if !crossed && veh.fleet.is_connected() && dist_to_bar <= ADVISORY_RANGE {
            let mv = veh.movement_key();
            let w1 = plan.next_green_window(mv, t)?;
            let w2 = plan.following_green_window(mv, t)?;
            v_des = advisory_speed(dist_to_bar, w1, w2, v_des, CRAWL_FLOOR);
        }
        if veh.movement != Turn::Through && v_now.position >= -TURN_CAP_ZONE {
            v_des = v_des.min(TURN_SPEED_CAP);
        }

        let mut stop_for_bar = false;
        if !crossed {
            let ind = plan.indication(veh.movement_key(), t)?;
            match ind {
                Indication::Green => {
                    veh.amber_decision = None;
                    veh.committed_red = false;
                }
                Indication::Amber => {
                    let latch = if p.amber_mode == AmberMode::OneDecision {
                        veh.amber_decision
                    } else {
                        None
                    };
                    let d = stop_go_decision(p, ind, dist_to_bar, v_now.speed, latch);
                    veh.amber_decision = Some(d);
                    stop_for_bar = d == Decision::Stop;
                }
                Indication::Red => {
                    if veh.committed_red {
                        // Entered on a feasible amber 'go'; let it clear.
                    } else if veh.amber_decision == Some(Decision::Proceed)
                        && required_decel(v_now.speed, dist_to_bar) > B_EMAX
                    {
                        veh.committed_red = true;
                    } else {
                        veh.amber_decision = None;
                        stop_for_bar = true;
                    }
                }
            }
        }

        let fs = FollowerState {
            speed: v_now.speed,
            accel: v_now.accel,
            band_ratio: veh.band_ratio,
            accel_multiplier: veh.accel_multiplier,
        };
        let mut leaders: Vec<LeaderView> = Vec::with_capacity(2);
        for j in (0..veh_idx).rev().take(p.interaction_vehicle_count) {
            leaders.push(LeaderView {
                net_gap: (kin[j].position - kin[j].length) - v_now.position,
                speed: kin[j].speed,
                accel: kin[j].accel,
                is_stop_bar: false,
                connected: kin[j].connected,
            });
        }
        let wrap = |e: DriverError| EngineError::Driver {
            t,
            lane: lane_idx,
            source: e,
        };
        let mut a = compute_acceleration(&fs, &leaders, p, v_des, in_zone, dt).map_err(wrap)?;
        if stop_for_bar {
            let bar = LeaderView {
                net_gap: ((p.cc0 - BAR_PARK_OFFSET) - v_now.position).max(0.0),
                speed: 0.0,
                accel: 0.0,
                is_stop_bar: true,
                connected: false,
            };
            let a_bar = compute_acceleration(&fs, &[bar], p, v_des, in_zone, dt).map_err(wrap)?;
            a = a.min(a_bar);
        }

        // A driver standing still reacts to being freed only after the
        // profile's startup delay.
        if v_now.speed < 0.05 {
            if a > 0.01 {
                let release = *veh.hold_until.get_or_insert(t + p.startup_reaction);
                if t + 1e-9 < release {
                    a = 0.0;
                }
            }
        } else {
            veh.hold_until = None;
        }
        Ok(a)
    }

    /// Integrate one lane, detect crossings and exits, enforce invariants.
    fn integrate_lane(&mut self, lane_idx: usize) -> Result<(), EngineError> {
        let t = self.t();
        let dt = self.sc.dt;
        let n = self.lanes[lane_idx].vehicles.len();
        for idx in 0..n {
            let a = self.scratch_accel[idx];
            let veh = &mut self.lanes[lane_idx].vehicles[idx];
            let v0 = veh.speed;
            let x0 = veh.position;
            let raw = v0 + a * dt;
            // Braking to rest mid-step covers the exact stopping distance,
            // not the full-step trapezoid.
            let (v1, dx) = if raw < 0.0 {
                (0.0, if a < 0.0 { v0 * v0 / (-2.0 * a) } else { 0.0 })
            } else {
                (raw, 0.5 * (v0 + raw) * dt)
            };
            let x1 = x0 + dx;
            veh.speed = v1;
            veh.position = x1;
            veh.accel = (v1 - v0) / dt;

            if x0 < 0.0 && x1 >= 0.0 {
                let frac = (0.0 - x0) / (x1 - x0);
                let t_cross = t + frac * dt;
                debug_assert!(veh.crossing_time.is_none());
                veh.crossing_time = Some(t_cross);
                let ind = self
                    .sc
                    .plan
                    .indication((veh.approach, veh.movement), t_cross)?;
                if ind == Indication::Red && !veh.committed_red {
                    self.log.red_crossings += 1;
                }
            }

            if v1 >= V_STOP {
                veh.was_moving = true;
            } else if veh.was_moving {
                veh.stops += 1;
                veh.was_moving = false;
            }
        }

        // Exits: only front vehicles can leave, in order.
        loop {
            let lane = &self.lanes[lane_idx];
            let Some(front) = lane.vehicles.front() else {
                break;
            };
            let exits = match front.movement {
                // Turning vehicles leave the model at the bar.
                Turn::Left | Turn::Right => front.position >= 0.0,
                Turn::Through => front.position >= EXIT_MARGIN,
            };
            if !exits {
                break;
            }
            let veh = self.lanes[lane_idx].vehicles.pop_front().unwrap();
            let exit_time = match veh.movement {
                Turn::Left | Turn::Right => veh.crossing_time.unwrap_or(t + dt),
                Turn::Through => t + dt,
            };
            self.log.exited += 1;
            self.log.vehicles.push(finish(veh, Some(exit_time)));
        }

        // Collision and brick-wall invariants on the post-step state.
        let lane = &self.lanes[lane_idx];
        for idx in 1..lane.vehicles.len() {
            let lead = &lane.vehicles[idx - 1];
            let veh = &lane.vehicles[idx];
            let gap = (lead.position - lead.length) - veh.position;
            if gap <= 0.0 {
                return Err(EngineError::Collision {
                    t: t + dt,
                    lane: lane_idx,
                    leader: lead.id,
                    follower: veh.id,
                    gap,
                });
            }
            let p = &self.profiles.by_fleet[veh.fleet.index()];
            if p.eabd_enabled {
                let needed = veh.speed * veh.speed / (2.0 * B_EMAX) - BRICK_WALL_EPS;
                if gap < needed {
                    return Err(EngineError::BrickWall {
                        t: t + dt,
                        lane: lane_idx,
                        id: veh.id,
                        gap,
                        needed,
                    });
                }
            }
        }
        Ok(())
    }

    /// Bernoulli arrival draws and holding-buffer release, in a fixed order.
    fn generate_arrivals(&mut self) {
        let t_next = self.t() + self.sc.dt;
        for a in Approach::ALL {
            let spec = &self.sc.approaches[a.index()];
            let p_arrival = spec.demand_vph / 3600.0 * self.sc.dt;
            let u: f64 = self.rng.random();
            if u >= p_arrival {
                continue;
            }
            let u_fleet: f64 = self.rng.random();
            let fleet = self.sc.shares.pick(u_fleet);
            let u_turn: f64 = self.rng.random();
            let movement = spec.turning.pick(u_turn);
            let u_lane: f64 = self.rng.random();
            let candidates = &self.movement_lanes[movement_slot(a, movement)];
            let lane =
                candidates[((u_lane * candidates.len() as f64) as usize).min(candidates.len() - 1)];
            let profile = &self.profiles.by_fleet[fleet.index()];
            let desired_speed = sample_desired_speed(profile, self.sc.v_base, &mut self.rng);
            let accel_multiplier = sample_accel_multiplier(profile, &mut self.rng);
            let band_ratio = sample_band_ratio(profile, &mut self.rng);
            let veh = VehicleState {
                id: self.next_id,
                fleet,
                approach: a,
                movement,
                lane,
                position: -self.sc.link_length,
                speed: 0.0,
                accel: 0.0,
                length: VEHICLE_LENGTH,
                desired_speed,
                accel_multiplier,
                band_ratio,
                entry_time: t_next,
                crossing_time: None,
                stops: 0,
                amber_decision: None,
                committed_red: false,
                hold_until: None,
                was_moving: false,
            };
            self.next_id += 1;
            self.log.entered += 1;
            self.lanes[lane].holding.push_back(veh);
        }

        for lane in &mut self.lanes {
            while let Some(head) = lane.holding.front() {
                let p = &self.profiles.by_fleet[head.fleet.index()];
                let (space, lead_speed) = match lane.vehicles.back() {
                    None => (f64::INFINITY, 0.0),
                    Some(last) => (
                        (last.position - last.length) + self.sc.link_length,
                        last.speed,
                    ),
                };
                if space < p.cc0 + head.length {
                    break;
                }
                let mut veh = lane.holding.pop_front().unwrap();
                let v_env = if space.is_finite() {
                    envelope_speed(space, lead_speed, p.cc0, p.cc1, B_COMFORT)
                        .min((2.0 * B_EMAX * (space - 0.1).max(0.0)).sqrt())
                } else {
                    f64::INFINITY
                };
                veh.speed = veh.desired_speed.min(v_env);
                veh.was_moving = veh.speed >= V_STOP;
                lane.vehicles.push_back(veh);
            }
        }
    }

    fn sample_queues_and_trajectories(&mut self) {
        let t_next = self.t() + self.sc.dt;
        if self.in_measured_window(t_next) {
            for (i, lane) in self.lanes.iter().enumerate() {
                let q = lane
                    .vehicles
                    .iter()
                    .filter(|v| v.speed < V_STOP && v.position < 0.0)
                    .count();
                self.log.queue_len_sum[i] += q as f64;
            }
            self.log.queue_samples += 1;
        }
        if let Some(traj) = &mut self.log.trajectories {
            for lane in &self.lanes {
                for v in &lane.vehicles {
                    traj.push(TrajSample {
                        t: t_next,
                        id: v.id,
                        fleet: v.fleet,
                        lane: v.lane,
                        position: v.position,
                        speed: v.speed,
                    });
                }
            }
        }
    }

    fn check_conservation(&self) -> Result<(), EngineError> {
        let driving: u64 = self.lanes.iter().map(|l| l.vehicles.len() as u64).sum();
        let held: u64 = self.lanes.iter().map(|l| l.holding.len() as u64).sum();
        if self.log.entered != self.log.exited + driving + held {
            return Err(EngineError::Conservation {
                t: self.t(),
                entered: self.log.entered,
                exited: self.log.exited,
                driving,
                held,
            });
        }
        Ok(())
    }

    /// Advance the world by one `dt`.
    pub fn step_once(&mut self) -> Result<(), EngineError> {
        self.observe_signals()?;
        for lane_idx in 0..self.lanes.len() {
            let lane = &self.lanes[lane_idx];
            self.scratch_kin.clear();
            self.scratch_kin.extend(lane.vehicles.iter().map(|v| Kin {
                position: v.position,
                speed: v.speed,
                accel: v.accel,
                length: v.length,
                connected: v.fleet.is_connected(),
            }));
            let kin = std::mem::take(&mut self.scratch_kin);
            self.scratch_accel.clear();
            for veh_idx in 0..kin.len() {
                let a = self.decide_accel(lane_idx, veh_idx, &kin)?;
                self.scratch_accel.push(a);
            }
            self.scratch_kin = kin;
            self.integrate_lane(lane_idx)?;
        }
        self.generate_arrivals();
        self.sample_queues_and_trajectories();
        self.check_conservation()?;
        self.step += 1;
        Ok(())
    }

    /// Run to the configured horizon and finalize the log.
    pub fn run_to_end(mut self) -> Result<RunLog, EngineError> {
        let steps = ((self.sc.warmup + self.sc.duration) / self.sc.dt).round() as u64;
        for _ in 0..steps {
            self.step_once()?;
        }
        // Vehicles still on the link (or held) are logged without an exit.
        for lane in &mut self.lanes {
            for veh in lane.vehicles.drain(..) {
                self.log.vehicles.push(finish(veh, None));
            }
            for veh in lane.holding.drain(..) {
                self.log.vehicles.push(finish(veh, None));
            }
        }
        Ok(self.log)
    }

    #[cfg(test)]
    fn test_inject(&mut self, lane: usize, mut veh: VehicleState) {
        veh.id = self.next_id;
        self.next_id += 1;
        self.log.entered += 1;
        veh.was_moving = veh.speed >= V_STOP;
        self.lanes[lane].vehicles.push_back(veh);
    }
}

fn finish(veh: VehicleState, exit_time: Option<f64>) -> VehicleRecord {
    VehicleRecord {
        id: veh.id,
        fleet: veh.fleet,
        approach: veh.approach,
        movement: veh.movement,
        lane: veh.lane,
        entry_time: veh.entry_time,
        crossing_time: veh.crossing_time,
        exit_time,
        desired_speed: veh.desired_speed,
        stops: veh.stops,
    }
}

/// One replication: warmup plus the measured window.
pub fn run(
    sc: &Scenario,
    profiles: &Profiles,
    seed: u64,
    trajectories: bool,
) -> Result<RunLog, EngineError> {
    Engine::new(sc, profiles, seed, trajectories)?.run_to_end()
}
