//! Fixed-time signal control, green-window broadcast, the amber stop/go rule,
//! and the connected-vehicle speed advisory.

use crate::driver::{AmberMode, DriverProfile};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// m/s — 5 mph; the advisory never slows a vehicle below this.
pub const CRAWL_FLOOR: f64 = 2.2352;
/// s — guard on the fastest-arrival division right at a window boundary.
const WINDOW_EPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Approach {
    Eb,
    Nb,
    Wb,
    Sb,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Eb, Approach::Nb, Approach::Wb, Approach::Sb];

    /// Position in [`Approach::ALL`]; used to index per-approach arrays.
    pub fn index(self) -> usize {
        match self {
            Approach::Eb => 0,
            Approach::Nb => 1,
            Approach::Wb => 2,
            Approach::Sb => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Eb => "eb",
            Approach::Nb => "nb",
            Approach::Wb => "wb",
            Approach::Sb => "sb",
        }
    }
}

impl FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eb" => Ok(Approach::Eb),
            "nb" => Ok(Approach::Nb),
            "wb" => Ok(Approach::Wb),
            "sb" => Ok(Approach::Sb),
            other => Err(format!("unknown approach '{other}' (expected eb/nb/wb/sb)")),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Through => "through",
            Turn::Right => "right",
        }
    }
}

impl FromStr for Turn {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Turn::Left),
            "through" => Ok(Turn::Through),
            "right" => Ok(Turn::Right),
            other => Err(format!(
                "unknown movement '{other}' (expected left/through/right)"
            )),
        }
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One signalized movement: an approach plus the turn made at the bar.
pub type Movement = (Approach, Turn);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Indication {
    Green,
    Amber,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Proceed,
    Stop,
}

/// The next (or current) green interval for a movement, relative to now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenWindow {
    /// s until the green starts; 0 if green right now.
    pub starts_in: f64,
    /// s until the green ends; always > starts_in.
    pub ends_in: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub movements: Vec<Movement>,
    /// s of green.
    pub green: f64,
    /// s of amber following the green.
    pub amber: f64,
    /// s of all-red clearance closing the phase.
    pub all_red: f64,
}

impl Phase {
    pub fn total(&self) -> f64 {
        self.green + self.amber + self.all_red
    }
}

/// A fixed-time plan: phases run back to back and tile the cycle.
#[derive(Debug, Clone, Serialize)]
pub struct SignalPlan {
    pub phases: Vec<Phase>,
    /// s added to the wall clock before the cycle lookup.
    pub offset: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("movement {0}:{1} is not served by any phase")]
    UnservedMovement(Approach, Turn),
    #[error("movement {0}:{1} is served by more than one phase")]
    DuplicateMovement(Approach, Turn),
    #[error("phase {0} has non-positive green {1}")]
    BadGreen(usize, f64),
    #[error("phase {0} has negative amber or all-red")]
    BadClearance(usize),
    #[error("plan has no phases")]
    Empty,
}

impl SignalPlan {
    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(Phase::total).sum()
    }

    /// Structural checks plus coverage of every movement the caller needs:
    /// positive greens, non-negative clearances, and each required movement
    /// served by exactly one phase.
    pub fn validate(&self, required: &[Movement]) -> Result<(), SignalError> {
        if self.phases.is_empty() {
            return Err(SignalError::Empty);
        }
        for (i, ph) in self.phases.iter().enumerate() {
            if ph.green <= 0.0 {
                return Err(SignalError::BadGreen(i, ph.green));
            }
            if ph.amber < 0.0 || ph.all_red < 0.0 {
                return Err(SignalError::BadClearance(i));
            }
        }
        for &m in required {
            let n = self
                .phases
                .iter()
                .filter(|ph| ph.movements.contains(&m))
                .count();
            match n {
                0 => return Err(SignalError::UnservedMovement(m.0, m.1)),
                1 => {}
                _ => return Err(SignalError::DuplicateMovement(m.0, m.1)),
            }
        }
        Ok(())
    }

    /// Start of the serving phase's green within the cycle, plus the phase.
    fn green_interval(&self, movement: Movement) -> Result<(f64, &Phase), SignalError> {
        let mut start = 0.0;
        for ph in &self.phases {
            if ph.movements.contains(&movement) {
                return Ok((start, ph));
            }
            start += ph.total();
        }
        Err(SignalError::UnservedMovement(movement.0, movement.1))
    }

    pub fn indication(&self, movement: Movement, t: f64) -> Result<Indication, SignalError> {
        let cycle = self.cycle_length();
        let (g0, ph) = self.green_interval(movement)?;
        let tau = (t + self.offset).rem_euclid(cycle);
        Ok(if tau >= g0 && tau < g0 + ph.green {
            Indication::Green
        } else if tau >= g0 + ph.green && tau < g0 + ph.green + ph.amber {
            Indication::Amber
        } else {
            Indication::Red
        })
    }

    /// The current green window if the movement is green, else the next one.
    pub fn next_green_window(
        &self,
        movement: Movement,
        t: f64,
    ) -> Result<GreenWindow, SignalError> {
        let cycle = self.cycle_length();
        let (g0, ph) = self.green_interval(movement)?;
        let tau = (t + self.offset).rem_euclid(cycle);
        if tau >= g0 && tau < g0 + ph.green {
            Ok(GreenWindow {
                starts_in: 0.0,
                ends_in: g0 + ph.green - tau,
            })
        } else {
            let starts_in = (g0 - tau).rem_euclid(cycle);
            Ok(GreenWindow {
                starts_in,
                ends_in: starts_in + ph.green,
            })
        }
    }

    /// The full green window after the one `next_green_window` reports.
    pub fn following_green_window(
        &self,
        movement: Movement,
        t: f64,
    ) -> Result<GreenWindow, SignalError> {
        let cycle = self.cycle_length();
        let w = self.next_green_window(movement, t)?;
        let (_, ph) = self.green_interval(movement)?;
        if w.starts_in == 0.0 {
            // Currently green: the next full interval starts one cycle after
            // this one's start.
            let starts_in = w.ends_in - ph.green + cycle;
            Ok(GreenWindow {
                starts_in,
                ends_in: starts_in + ph.green,
            })
        } else {
            Ok(GreenWindow {
                starts_in: w.starts_in + cycle,
                ends_in: w.ends_in + cycle,
            })
        }
    }
}

/// The testbed plan: protected east/west lefts, east/west through+right,
/// protected north/south lefts, north/south through+right; 3 s amber and 1 s
/// all-red close every phase. The greens are 15/40/15/38 s, so the cycle is
/// 124 s.
pub fn default_plan() -> SignalPlan {
    use Approach::*;
    use Turn::*;
    SignalPlan {
        phases: vec![
            Phase {
                movements: vec![(Eb, Left), (Wb, Left)],
                green: 15.0,
                amber: 3.0,
                all_red: 1.0,
            },
            Phase {
                movements: vec![(Eb, Through), (Eb, Right), (Wb, Through), (Wb, Right)],
                green: 40.0,
                amber: 3.0,
                all_red: 1.0,
            },
            Phase {
                movements: vec![(Nb, Left), (Sb, Left)],
                green: 15.0,
                amber: 3.0,
                all_red: 1.0,
            },
            Phase {
                movements: vec![(Nb, Through), (Nb, Right), (Sb, Through), (Sb, Right)],
                green: 38.0,
                amber: 3.0,
                all_red: 1.0,
            },
        ],
        offset: 0.0,
    }
}

/// Speed to hold so the bar is reached inside a green window.
///
/// Arrival at the desired speed inside `window` needs no change. Otherwise the
/// vehicle slows to the fastest speed that arrives no earlier than the window
/// opens, floored at the crawl speed. A window unreachable even at the desired
/// speed falls through to `next_window`; failing that too, the vehicle keeps
/// its desired speed and will simply stop at the bar.
pub fn advisory_speed(
    dist_to_bar: f64,
    window: GreenWindow,
    next_window: GreenWindow,
    v_desired: f64,
    crawl_floor: f64,
) -> f64 {
    for w in [window, next_window] {
        let v_min = dist_to_bar / w.ends_in;
        if v_min <= v_desired {
            let v_max = dist_to_bar / w.starts_in.max(WINDOW_EPS);
            return v_desired.min(v_max.max(crawl_floor));
        }
    }
    v_desired
}

/// Whether to run or stop for the bar, given the current indication.
///
/// Green always proceeds and red always stops (the engine separately exempts
/// vehicles physically committed at red onset). At amber the vehicle stops iff
/// braking to the bar needs no more than its profile's amber threshold;
/// one-decision fleets freeze their first amber evaluation via `latch`.
pub fn stop_go_decision(
    profile: &DriverProfile,
    indication: Indication,
    dist_to_bar: f64,
    v: f64,
    latch: Option<Decision>,
) -> Decision {
    match indication {
        Indication::Green => Decision::Proceed,
        Indication::Red => Decision::Stop,
        Indication::Amber => {
            if profile.amber_mode == AmberMode::OneDecision {
                if let Some(d) = latch {
                    return d;
                }
            }
            if required_decel(v, dist_to_bar) <= profile.amber_stop_decel {
                Decision::Stop
            } else {
                Decision::Proceed
            }
        }
    }
}

/// Constant deceleration that stops the vehicle exactly at the bar.
pub fn required_decel(v: f64, dist_to_bar: f64) -> f64 {
    if dist_to_bar <= 0.0 {
        f64::INFINITY
    } else {
        v * v / (2.0 * dist_to_bar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{builtin_profile, Fleet};
    use approx::assert_abs_diff_eq;

    const EBL: Movement = (Approach::Eb, Turn::Left);
    const EBT: Movement = (Approach::Eb, Turn::Through);
    const NBT: Movement = (Approach::Nb, Turn::Through);

    fn all_movements() -> Vec<Movement> {
        let mut v = Vec::new();
        for a in Approach::ALL {
            for t in Turn::ALL {
                v.push((a, t));
            }
        }
        v
    }

    #[test]
    fn default_plan_tiles_and_serves_everything() {
        let plan = default_plan();
        assert_abs_diff_eq!(plan.cycle_length(), 124.0);
        plan.validate(&all_movements()).unwrap();
    }

    #[test]
    fn indication_walks_the_phases() {
        let plan = default_plan();
        assert_eq!(plan.indication(EBL, 0.0).unwrap(), Indication::Green);
        assert_eq!(plan.indication(EBL, 14.9).unwrap(), Indication::Green);
        assert_eq!(plan.indication(EBL, 16.5).unwrap(), Indication::Amber);
        assert_eq!(plan.indication(EBL, 18.5).unwrap(), Indication::Red);
        assert_eq!(plan.indication(EBT, 0.0).unwrap(), Indication::Red);
        assert_eq!(plan.indication(EBT, 19.0).unwrap(), Indication::Green);
        assert_eq!(plan.indication(EBT, 60.5).unwrap(), Indication::Amber);
        assert_eq!(plan.indication(NBT, 86.0).unwrap(), Indication::Green);
        assert_eq!(plan.indication(NBT, 123.5).unwrap(), Indication::Red);
    }

    #[test]
    fn indication_is_periodic() {
        let plan = default_plan();
        let c = plan.cycle_length();
        for m in all_movements() {
            for k in 0..620 {
                let t = k as f64 * 0.2;
                assert_eq!(
                    plan.indication(m, t).unwrap(),
                    plan.indication(m, t + c).unwrap(),
                    "{m:?} at t={t}"
                );
            }
        }
    }

    #[test]
    fn unknown_movement_is_a_config_error() {
        let mut plan = default_plan();
        plan.phases[0].movements.retain(|&m| m != EBL);
        assert_eq!(
            plan.indication(EBL, 0.0).unwrap_err(),
            SignalError::UnservedMovement(Approach::Eb, Turn::Left)
        );
        assert_eq!(
            plan.validate(&all_movements()).unwrap_err(),
            SignalError::UnservedMovement(Approach::Eb, Turn::Left)
        );
    }

    #[test]
    fn duplicate_movement_fails_validation() {
        let mut plan = default_plan();
        plan.phases[2].movements.push(EBL);
        assert_eq!(
            plan.validate(&all_movements()).unwrap_err(),
            SignalError::DuplicateMovement(Approach::Eb, Turn::Left)
        );
    }

    #[test]
    fn green_window_now_and_later() {
        let plan = default_plan();
        // EB through green spans [19, 59).
        let w = plan.next_green_window(EBT, 30.0).unwrap();
        assert_abs_diff_eq!(w.starts_in, 0.0);
        assert_abs_diff_eq!(w.ends_in, 29.0);
        let w = plan.next_green_window(EBT, 0.0).unwrap();
        assert_abs_diff_eq!(w.starts_in, 19.0);
        assert_abs_diff_eq!(w.ends_in, 59.0);
        // Wrap across the cycle end: NB through green spans [82, 120).
        let w = plan.next_green_window(NBT, 125.0).unwrap();
        assert_abs_diff_eq!(w.starts_in, 81.0);
        assert_abs_diff_eq!(w.ends_in, 119.0);
        assert_eq!(w.ends_in - w.starts_in, 38.0);
    }

    #[test]
    fn green_window_is_periodic() {
        let plan = default_plan();
        let c = plan.cycle_length();
        for m in [EBL, EBT, NBT] {
            for k in 0..1240 {
                let t = k as f64 * 0.1;
                let a = plan.next_green_window(m, t).unwrap();
                let b = plan.next_green_window(m, t + c).unwrap();
                assert_abs_diff_eq!(a.starts_in, b.starts_in, epsilon = 1e-9);
                assert_abs_diff_eq!(a.ends_in, b.ends_in, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn following_window_is_one_cycle_out() {
        let plan = default_plan();
        let c = plan.cycle_length();
        // Red now: the following window is the next one plus a cycle.
        let w1 = plan.next_green_window(EBT, 0.0).unwrap();
        let w2 = plan.following_green_window(EBT, 0.0).unwrap();
        assert_abs_diff_eq!(w2.starts_in, w1.starts_in + c);
        // Green now (t = 30, green spans [19, 59)): the following window
        // starts a cycle after this green did, i.e. at t = 143 → in 113 s.
        let w2 = plan.following_green_window(EBT, 30.0).unwrap();
        assert_abs_diff_eq!(w2.starts_in, 113.0);
        assert_abs_diff_eq!(w2.ends_in - w2.starts_in, 40.0);
    }

    #[test]
    fn advisory_examples() {
        let next = GreenWindow {
            starts_in: 144.0,
            ends_in: 184.0,
        };
        // Natural arrival already in green.
        let w = GreenWindow {
            starts_in: 0.0,
            ends_in: 20.0,
        };
        assert_abs_diff_eq!(advisory_speed(200.0, w, next, 15.0, CRAWL_FLOOR), 15.0);
        // Slow to hit the window start.
        let w = GreenWindow {
            starts_in: 20.0,
            ends_in: 40.0,
        };
        assert_abs_diff_eq!(advisory_speed(200.0, w, next, 15.0, CRAWL_FLOOR), 10.0);
        // Far-off window: barely above the crawl floor.
        let w = GreenWindow {
            starts_in: 85.0,
            ends_in: 95.0,
        };
        assert_abs_diff_eq!(
            advisory_speed(200.0, w, next, 15.0, CRAWL_FLOOR),
            200.0 / 85.0
        );
        // Crawl floor binds.
        let w = GreenWindow {
            starts_in: 110.0,
            ends_in: 120.0,
        };
        assert_abs_diff_eq!(
            advisory_speed(200.0, w, next, 15.0, CRAWL_FLOOR),
            CRAWL_FLOOR
        );
    }

    #[test]
    fn advisory_rolls_to_the_following_window() {
        // Green now but too short to reach: target the following window.
        let w = GreenWindow {
            starts_in: 0.0,
            ends_in: 5.0,
        };
        let next = GreenWindow {
            starts_in: 89.0,
            ends_in: 129.0,
        };
        let v = advisory_speed(300.0, w, next, 15.0, CRAWL_FLOOR);
        assert_abs_diff_eq!(v, 300.0 / 89.0);
        // Both unreachable: keep the desired speed and queue at the bar.
        let v = advisory_speed(3000.0, w, next, 15.0, CRAWL_FLOOR);
        assert_abs_diff_eq!(v, 15.0);
    }

    #[test]
    fn advisory_held_speed_arrives_in_green() {
        // Whenever the advisory targets a window, holding the advised speed
        // lands the arrival inside it.
        let next = GreenWindow {
            starts_in: 150.0,
            ends_in: 190.0,
        };
        for starts in [5.0_f64, 12.0, 30.0, 60.0, 80.0] {
            for dist in [40.0_f64, 120.0, 300.0, 550.0] {
                let w = GreenWindow {
                    starts_in: starts,
                    ends_in: starts + 40.0,
                };
                let v = advisory_speed(dist, w, next, 15.6, CRAWL_FLOOR);
                if v < 15.6 && v > CRAWL_FLOOR {
                    let arrival = dist / v;
                    assert!(
                        arrival >= w.starts_in - 1e-9 && arrival <= w.ends_in + 1e-9,
                        "dist {dist}, window ({starts}, {}), v {v}, arrival {arrival}",
                        w.ends_in
                    );
                }
            }
        }
    }

    #[test]
    fn stop_go_rules_per_fleet() {
        let hv = builtin_profile(Fleet::Hv);
        let av = builtin_profile(Fleet::Av);
        let cav = builtin_profile(Fleet::Cav);

        for p in [&hv, &av, &cav] {
            assert_eq!(
                stop_go_decision(p, Indication::Green, 50.0, 15.0, None),
                Decision::Proceed
            );
            assert_eq!(
                stop_go_decision(p, Indication::Red, 50.0, 15.0, None),
                Decision::Stop
            );
        }

        // d_req = 15²/(2·10) = 11.25: beyond everyone's braking intent.
        assert_eq!(
            stop_go_decision(&hv, Indication::Amber, 10.0, 15.0, None),
            Decision::Proceed
        );
        assert_eq!(
            stop_go_decision(&av, Indication::Amber, 10.0, 15.0, None),
            Decision::Proceed
        );
        // d_req = 15²/(2·25) = 4.5: uncomfortable for humans, fine for AVs.
        assert_eq!(
            stop_go_decision(&hv, Indication::Amber, 25.0, 15.0, None),
            Decision::Proceed
        );
        assert_eq!(
            stop_go_decision(&av, Indication::Amber, 25.0, 15.0, None),
            Decision::Stop
        );
        // d_req = 15²/(2·50) = 2.25: everyone stops.
        assert_eq!(
            stop_go_decision(&hv, Indication::Amber, 50.0, 15.0, None),
            Decision::Stop
        );
        // The CAV latch overrides the instantaneous evaluation.
        assert_eq!(
            stop_go_decision(&cav, Indication::Amber, 10.0, 15.0, Some(Decision::Stop)),
            Decision::Stop
        );
        assert_eq!(
            stop_go_decision(&cav, Indication::Amber, 50.0, 15.0, Some(Decision::Proceed)),
            Decision::Proceed
        );
        // A latch from a past amber does not leak into a continuous-check fleet.
        assert_eq!(
            stop_go_decision(&hv, Indication::Amber, 50.0, 15.0, Some(Decision::Proceed)),
            Decision::Stop
        );
    }
}
