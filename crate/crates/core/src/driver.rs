//! Fleet behavior profiles and the car-following model.
//!
//! Four fleets share one parameterization (the Wiedemann-99 style CC0..CC9 set
//! plus signal-behavior attributes). The following model reconstructs the
//! four-regime psychophysical structure — free driving, closing, following
//! (oscillating at ±CC7), emergency — on top of a braking-aware speed envelope
//! so that the steady following gap is exactly `CC0 + CC1·v`. That keeps CC0
//! and CC1 the governing knobs for discharge headways, which is what the
//! calibration stage tunes.

use serde::Serialize;
use thiserror::Error;

/// m/s^2 — emergency braking capability, common to all fleets.
pub const B_EMAX: f64 = 6.0;
/// m/s^2 — comfortable deceleration; also the human stop/go threshold at amber.
pub const B_COMFORT: f64 = 3.5;
/// m/s — 50 mph, the speed at which the max-acceleration ramp reaches CC9.
pub const SPEED_AT_CC9: f64 = 22.35;
/// s — first-order speed-tracking response of the model.
const TAU: f64 = 0.25;
/// CC6 is tabulated in 1e-4 1/(m·s); the perception width term is CC6·1e-4·dx².
const CC6_SCALE: f64 = 1e-4;
/// m — a stopped follower creeps forward only if its gap exceeds the preferred
/// standstill gap by more than this (keeps queues compact but quiescent).
const CREEP_SLACK: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Fleet {
    Hv,
    Cv,
    Av,
    Cav,
}

impl Fleet {
    pub const ALL: [Fleet; 4] = [Fleet::Hv, Fleet::Cv, Fleet::Av, Fleet::Cav];

    /// Position in [`Fleet::ALL`]; used to index per-fleet arrays.
    pub fn index(self) -> usize {
        match self {
            Fleet::Hv => 0,
            Fleet::Cv => 1,
            Fleet::Av => 2,
            Fleet::Cav => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fleet::Hv => "hv",
            Fleet::Cv => "cv",
            Fleet::Av => "av",
            Fleet::Cav => "cav",
        }
    }

    /// Broadcasts V2V state (position/speed/accel) that an automated follower
    /// can consume.
    pub fn is_connected(self) -> bool {
        matches!(self, Fleet::Cv | Fleet::Cav)
    }
}

/// How the stop/go rule is applied during the amber interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AmberMode {
    /// Re-evaluated every step while the indication is amber.
    ContinuousCheck,
    /// Evaluated once at amber onset and latched until the indication changes.
    OneDecision,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriverProfile {
    pub fleet: Fleet,
    /// m — standstill net gap.
    pub cc0: f64,
    /// s — headway time; speed-dependent part of the safety distance.
    pub cc1: f64,
    /// m — following variation: the band ridden above the minimum safety distance.
    pub cc2: f64,
    /// s — following entry: how far ahead (in relative-speed seconds) the
    /// approach to the band is perceived. Negative by convention.
    pub cc3: f64,
    /// m/s — negative edge of the speed-difference dead-band.
    pub cc4: f64,
    /// m/s — positive edge of the speed-difference dead-band.
    pub cc5: f64,
    /// 1e-4 1/(m·s) — widens the perception dead-band quadratically with gap.
    pub cc6: f64,
    /// m/s^2 — oscillation acceleration while following.
    pub cc7: f64,
    /// m/s^2 — desired acceleration from standstill.
    pub cc8: f64,
    /// m/s^2 — desired acceleration at 50 mph.
    pub cc9: f64,
    pub amber_mode: AmberMode,
    /// m/s^2 — stop at amber iff the required deceleration is at most this.
    /// Human drivers give up at comfort level; automation stops whenever
    /// physically able.
    pub amber_stop_decel: f64,
    /// Start on a red+amber overlap (no such interval in the default plan;
    /// retained for fidelity to the source parameter set).
    pub red_amber_go: bool,
    /// Scales the speed-dependent safety terms near the stop bar. 1.0 = no effect.
    pub reduced_safety_factor: f64,
    /// m — reduced-safety zone extent upstream of the bar.
    pub zone_upstream: f64,
    /// m — reduced-safety zone extent downstream of the bar.
    pub zone_downstream: f64,
    /// Absolute braking distance constraint (brick wall) on candidate accelerations.
    pub eabd_enabled: bool,
    /// Per-vehicle spread of desired speed and of the ride point in the band.
    pub implicit_stochasticity: bool,
    /// How many leaders ahead are evaluated (min of the single-leader results).
    pub interaction_vehicle_count: usize,
    /// Uniform range the desired-acceleration multiplier is drawn from.
    pub desired_accel_multiplier: (f64, f64),
    /// s — delay before a stopped vehicle first accelerates once freed.
    pub startup_reaction: f64,
    /// Headway-time factor applied when the immediate leader broadcasts V2V
    /// state; < 1 only for vehicles that can exploit it.
    pub coop_headway_factor: f64,
}

/// The built-in profile for a fleet. Values are the calibration-ready defaults;
/// run-time overrides go through the profile-override file, never through here.
pub fn builtin_profile(fleet: Fleet) -> DriverProfile {
    match fleet {
        Fleet::Hv => DriverProfile {
            fleet,
            cc0: 1.5,
            cc1: 1.6,
            cc2: 4.0,
            cc3: -8.0,
            cc4: -0.35,
            cc5: 0.35,
            cc6: 11.44,
            cc7: 0.25,
            cc8: 3.5,
            cc9: 1.5,
            amber_mode: AmberMode::ContinuousCheck,
            amber_stop_decel: B_COMFORT,
            red_amber_go: true,
            reduced_safety_factor: 0.6,
            zone_upstream: 100.0,
            zone_downstream: 100.0,
            eabd_enabled: false,
            implicit_stochasticity: true,
            interaction_vehicle_count: 1,
            desired_accel_multiplier: (1.0, 1.1),
            startup_reaction: 0.6,
            coop_headway_factor: 1.0,
        },
        Fleet::Cv => DriverProfile {
            fleet,
            cc2: 2.0,
            desired_accel_multiplier: (1.0, 1.0),
            // SPaT-informed driver: ready to move at green and willing to
            // ride closer behind a leader that broadcasts its state.
            startup_reaction: 0.1,
            coop_headway_factor: 0.7,
            ..builtin_profile(Fleet::Hv)
        },
        Fleet::Av => DriverProfile {
            fleet,
            cc1: 2.2,
            cc2: 0.0,
            cc3: -10.0,
            cc4: -0.1,
            cc5: 0.1,
            cc6: 0.0,
            cc7: 0.1,
            cc8: 2.0,
            cc9: 1.2,
            amber_stop_decel: B_EMAX,
            red_amber_go: false,
            reduced_safety_factor: 1.0,
            eabd_enabled: true,
            implicit_stochasticity: false,
            desired_accel_multiplier: (1.0, 1.0),
            startup_reaction: 0.0,
            ..builtin_profile(Fleet::Hv)
        },
        Fleet::Cav => DriverProfile {
            fleet,
            cc0: 1.0,
            cc1: 1.0,
            cc3: -6.0,
            cc8: 4.0,
            cc9: 2.0,
            amber_mode: AmberMode::OneDecision,
            eabd_enabled: false,
            desired_accel_multiplier: (1.1, 1.1),
            interaction_vehicle_count: 2,
            coop_headway_factor: 0.7,
            startup_reaction: 0.0,
            ..builtin_profile(Fleet::Av)
        },
    }
}

/// What the follower knows about one leader (real vehicle or the stop bar).
#[derive(Debug, Clone, Copy)]
pub struct LeaderView {
    /// m — front bumper of the follower to rear bumper of the leader.
    pub net_gap: f64,
    /// m/s.
    pub speed: f64,
    /// m/s^2.
    pub accel: f64,
    /// The "leader" is the stop bar of a signal the vehicle must stop for.
    pub is_stop_bar: bool,
    /// Leader broadcasts V2V state.
    pub connected: bool,
}

/// Follower-side state the model needs.
#[derive(Debug, Clone, Copy)]
pub struct FollowerState {
    /// m/s.
    pub speed: f64,
    /// m/s^2 — previous-step acceleration (regime hysteresis).
    pub accel: f64,
    /// Where in [ABX, SDX] this driver prefers to ride, as a fraction of CC2.
    pub band_ratio: f64,
    /// Sampled desired-acceleration multiplier.
    pub accel_multiplier: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error("negative net gap {gap:.3} m: vehicle state is corrupt (overlap)")]
    NegativeGap { gap: f64 },
}

/// Driving regime labels, mostly useful for traces and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    FreeDriving,
    Following,
    Closing,
    Emergency,
}

/// Desired acceleration capability at speed `v`: CC8 at standstill, CC9 at
/// 50 mph, linear in between, constant beyond.
pub fn max_accel(p: &DriverProfile, v: f64) -> f64 {
    let f = (v / SPEED_AT_CC9).clamp(0.0, 1.0);
    p.cc8 + (p.cc9 - p.cc8) * f
}

/// Largest speed from which the follower, allowing one headway time `t_h` of
/// reaction and braking at `b`, stays at least `s0` behind a leader that
/// itself brakes at `b`. Steady-state solution: gap settles at `s0 + t_h·v`.
pub fn envelope_speed(net_gap: f64, leader_speed: f64, s0: f64, t_h: f64, b: f64) -> f64 {
    let bt = b * t_h;
    let arg = bt * bt + leader_speed * leader_speed + 2.0 * b * (net_gap - s0);
    if arg <= 0.0 {
        0.0
    } else {
        (arg.sqrt() - bt).max(0.0)
    }
}

/// Clamp a candidate acceleration so that after one `dt` step the remaining
/// net gap still covers a full stop at `b_emax` even if the leader freezes in
/// place (brick-wall assumption). Never demands more than `-b_emax`.
pub fn enforce_absolute_braking(
    accel_candidate: f64,
    speed: f64,
    net_gap: f64,
    b_emax: f64,
    dt: f64,
) -> f64 {
    let v = speed.max(0.0);
    // Next-step speed u must satisfy u²/(2b) ≤ gap − (v+u)/2·dt. At zero gap
    // this pins a standing vehicle in place (u_max = 0).
    let disc = b_emax * dt * (b_emax * dt - 4.0 * v) + 8.0 * b_emax * net_gap;
    let u_max = if disc <= 0.0 {
        -1.0
    } else {
        0.5 * (disc.sqrt() - b_emax * dt)
    };
    let a_limit = if u_max >= 0.0 {
        ((u_max - v) / dt).max(-b_emax)
    } else if net_gap > 0.0 {
        // The vehicle has to stop inside this step; it then travels its
        // exact stopping distance v²/(2|a|), which must fit in the gap.
        (-(v * v) / (2.0 * net_gap)).max(-b_emax)
    } else {
        -b_emax
    };
    accel_candidate.min(a_limit).max(-b_emax)
}

/// Acceleration toward the (possibly advisory-reduced) desired speed.
fn free_accel(st: &FollowerState, p: &DriverProfile, desired_speed: f64) -> f64 {
    let gap_to_desired = (desired_speed - st.speed) / TAU;
    if st.speed <= desired_speed {
        gap_to_desired.min(max_accel(p, st.speed) * st.accel_multiplier)
    } else {
        gap_to_desired.max(-B_COMFORT)
    }
}

/// Single-leader regime response. Inside the reduced-safety zone the spacing
/// thresholds compress, but only against the stop bar itself or a queue
/// standing at it — never against moving traffic.
fn single_leader_accel(
    st: &FollowerState,
    lv: &LeaderView,
    p: &DriverProfile,
    desired_speed: f64,
    in_reduced_safety_zone: bool,
) -> (f64, Regime) {
    let dx = lv.net_gap;
    let v = st.speed;
    let scale = if in_reduced_safety_zone && (lv.is_stop_bar || lv.speed < 1.0) {
        p.reduced_safety_factor
    } else {
        1.0
    };
    let coop = if lv.connected && !lv.is_stop_bar {
        p.coop_headway_factor
    } else {
        1.0
    };
    let t_h = p.cc1 * scale * coop;
    // Drivers pull fully up to a stop line; the riding band is a trait of
    // following real vehicles.
    let band = if lv.is_stop_bar { 0.0 } else { p.cc2 * scale };
    let ax = p.cc0;
    let abx = ax + t_h * v;
    let sdx = abx + band;
    // Preferred standstill gap inside [AX, AX + band].
    let ride = ax + st.band_ratio * band;
    // Gap this follower settles at once speed-matched with the leader.
    let steady = ride + t_h * lv.speed;

    let dv = lv.speed - v; // > 0 while the gap opens
    let sdv = CC6_SCALE * p.cc6 * dx * dx;
    let sdv_close = p.cc4 - sdv;
    // Perception reach of an approach situation; grows with closing rate (CC3 < 0).
    let sdxv = sdx + p.cc3 * (dv - p.cc4);

    let v_safe = envelope_speed(dx, lv.speed, ax, t_h, B_COMFORT);
    let v_ride = envelope_speed(dx, lv.speed, ride, t_h, B_COMFORT);
    let cap_safe = (v_safe - v) / TAU;
    let cap_ride = (v_ride - v) / TAU;
    let free = free_accel(st, p, desired_speed);
    // The anticipated leader braking; ignore harder-than-comfort transients so
    // spikes do not ring down a platoon (the envelope and EABD carry safety).
    let lead_accel = lv.accel.clamp(-B_COMFORT, 0.0);

    if dx < ax || (dx < abx && dv < 0.0) {
        // Too close and not opening: restore the safety distance.
        let a = if v <= 0.0 {
            0.0
        } else {
            let spare = (dx - ax).max(0.05);
            (lead_accel - dv * dv / (2.0 * spare))
                .clamp(-B_EMAX, -p.cc7)
                .min(cap_safe)
        };
        (a, Regime::Emergency)
    } else if dv < sdv_close && dx < sdxv {
        // Perceived approach: decelerate to arrive at the steady gap speed-matched.
        let spare = dx - steady;
        let a = if spare > 0.1 {
            lead_accel - dv * dv / (2.0 * spare)
        } else {
            -p.cc7
        };
        (a.min(cap_ride).max(-B_EMAX), Regime::Closing)
    } else if dx <= sdx {
        // Inside the band: oscillation-level acceleration only, whether the
        // leader is opening the gap or holding it.
        let a = if dx > ride + CREEP_SLACK {
            // Short of the preferred gap: close up along the comfort envelope.
            p.cc7.min(cap_ride).min(free)
        } else if dv < -0.01 {
            // At the preferred gap and still closing: ease off.
            (-p.cc7).min(cap_ride)
        } else if v < 0.05 {
            // Settled.
            cap_ride.min(0.0)
        } else {
            p.cc7.min(cap_ride).min(free)
        };
        (a, Regime::Following)
    } else {
        // Unperceived or opening: head for the desired speed, but never
        // through the comfort envelope.
        (free.min(cap_ride), Regime::FreeDriving)
    }
}

/// One step's acceleration for a follower given up to
/// `interaction_vehicle_count` leaders (nearest first, cumulative net gaps).
///
/// Returns a value in `[-B_EMAX, max_accel·multiplier]`. With no leaders the
/// vehicle tracks `desired_speed` (zero exactly when already there). A
/// negative nearest gap is a corrupted world and is rejected.
pub fn compute_acceleration(
    st: &FollowerState,
    leaders: &[LeaderView],
    p: &DriverProfile,
    desired_speed: f64,
    in_reduced_safety_zone: bool,
    dt: f64,
) -> Result<f64, DriverError> {
    let mut a = free_accel(st, p, desired_speed);
    for lv in leaders {
        if lv.net_gap < 0.0 {
            return Err(DriverError::NegativeGap { gap: lv.net_gap });
        }
        let (al, _) = single_leader_accel(st, lv, p, desired_speed, in_reduced_safety_zone);
        a = a.min(al);
    }
    if p.eabd_enabled {
        if let Some(nearest) = leaders.first() {
            a = enforce_absolute_braking(a, st.speed, nearest.net_gap, B_EMAX, dt);
        }
    }
    Ok(a.clamp(-B_EMAX, max_accel(p, st.speed) * st.accel_multiplier))
}

/// Regime label for the governing (nearest) leader; diagnostic only.
pub fn classify_regime(
    st: &FollowerState,
    lv: &LeaderView,
    p: &DriverProfile,
    desired_speed: f64,
    in_reduced_safety_zone: bool,
) -> Regime {
    single_leader_accel(st, lv, p, desired_speed, in_reduced_safety_zone).1
}

/// Per-vehicle desired speed draw. Fleets with implicit stochasticity spread
/// uniformly ±5% around the base; the rest drive the base exactly. Always
/// consumes one draw so the stream layout does not depend on fleet.
pub fn sample_desired_speed<R: rand::Rng>(p: &DriverProfile, v_base: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if p.implicit_stochasticity {
        v_base * (0.95 + 0.10 * u)
    } else {
        v_base
    }
}

/// Per-vehicle desired-acceleration multiplier draw (uniform over the profile
/// range). Always consumes one draw.
pub fn sample_accel_multiplier<R: rand::Rng>(p: &DriverProfile, rng: &mut R) -> f64 {
    let (lo, hi) = p.desired_accel_multiplier;
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Per-vehicle ride position in the following band. Stochastic fleets spread
/// over [0.4, 0.9]; deterministic fleets sit at the midpoint of that range
/// (irrelevant when CC2 = 0). Always consumes one draw.
pub fn sample_band_ratio<R: rand::Rng>(p: &DriverProfile, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if p.implicit_stochasticity {
        0.4 + 0.5 * u
    } else {
        0.65
    }
}
