//! Scenario definition — fleet mix, demands, geometry, timing — plus the
//! built-in testbed and the lane-group view the measurements aggregate over.

use crate::driver::Fleet;
use crate::signal::{default_plan, Approach, Movement, SignalPlan, Turn};
use serde::Serialize;
use thiserror::Error;

/// m — single passenger-car class.
pub const VEHICLE_LENGTH: f64 = 4.5;

/// Market penetration per fleet; the four values are a probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FleetShares {
    pub hv: f64,
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
}

impl FleetShares {
    pub fn hv_only() -> Self {
        FleetShares {
            hv: 1.0,
            cv: 0.0,
            av: 0.0,
            cav: 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.hv + self.cv + self.av + self.cav
    }

    pub fn get(&self, fleet: Fleet) -> f64 {
        match fleet {
            Fleet::Hv => self.hv,
            Fleet::Cv => self.cv,
            Fleet::Av => self.av,
            Fleet::Cav => self.cav,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.hv < 0.0 || self.cv < 0.0 || self.av < 0.0 || self.cav < 0.0 {
            return Err(ScenarioError::NegativeShare);
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::SharesSum { sum });
        }
        Ok(())
    }

    /// Map a uniform draw to a fleet, in fixed hv/cv/av/cav order.
    pub fn pick(&self, u: f64) -> Fleet {
        let x = u * self.sum();
        if x < self.hv {
            Fleet::Hv
        } else if x < self.hv + self.cv {
            Fleet::Cv
        } else if x < self.hv + self.cv + self.av {
            Fleet::Av
        } else {
            Fleet::Cav
        }
    }
}

/// Turning percentages for one approach; they sum to 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnShares {
    pub left: f64,
    pub through: f64,
    pub right: f64,
}

impl TurnShares {
    pub fn sum(&self) -> f64 {
        self.left + self.through + self.right
    }

    pub fn get(&self, turn: Turn) -> f64 {
        match turn {
            Turn::Left => self.left,
            Turn::Through => self.through,
            Turn::Right => self.right,
        }
    }

    /// Map a uniform draw to a movement, in fixed left/through/right order.
    pub fn pick(&self, u: f64) -> Turn {
        let x = u * self.sum();
        if x < self.left {
            Turn::Left
        } else if x < self.left + self.through {
            Turn::Through
        } else {
            Turn::Right
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproachSpec {
    pub demand_vph: f64,
    pub turning: TurnShares,
}

/// One physical lane: which approach it belongs to and which movements it
/// permits. Vehicles are lane-assigned at generation and never change lanes.
#[derive(Debug, Clone, Serialize)]
pub struct LaneSpec {
    pub approach: Approach,
    pub allowed: Vec<Turn>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub id: String,
    pub shares: FleetShares,
    /// Indexed by [`Approach::index`].
    pub approaches: [ApproachSpec; 4],
    pub lanes: Vec<LaneSpec>,
    pub plan: SignalPlan,
    /// s excluded from every measurement, run before the measured window.
    pub warmup: f64,
    /// s of measured simulation after the warmup.
    pub duration: f64,
    pub dt: f64,
    /// m/s base desired speed; per-vehicle spread comes from the profile.
    pub v_base: f64,
    /// m of upstream link per lane, stop bar at 0.
    pub link_length: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("shares: negative value")]
    NegativeShare,
    #[error("shares: sum to {sum}, expected 1")]
    SharesSum { sum: f64 },
    #[error("approaches.{0}.turning: percentages sum to {1}, expected 100")]
    TurningSum(Approach, f64),
    #[error("approaches.{0}.turning: negative percentage")]
    NegativeTurning(Approach),
    #[error("approaches.{0}.demand: must be non-negative, got {1}")]
    NegativeDemand(Approach, f64),
    #[error("lanes: no lane on approach {0} permits {1} (turning share is positive)")]
    UnservedTurn(Approach, Turn),
    #[error("lanes[{0}]: empty movement list")]
    EmptyLane(usize),
    #[error("lanes[{0}]: movements span different signal phases")]
    SplitPhaseLane(usize),
    #[error("lanes[{0}]: unsupported movement combination {1:?}")]
    UnsupportedLane(usize, Vec<Turn>),
    #[error("dt: must be positive, got {0}")]
    BadDt(f64),
    #[error("duration/warmup: need duration > 0 and warmup >= 0, got {duration}/{warmup}")]
    BadHorizon { duration: f64, warmup: f64 },
    #[error("v_base: must be positive, got {0}")]
    BadBaseSpeed(f64),
    #[error("link_length: must be positive, got {0}")]
    BadLinkLength(f64),
    #[error("plan: {0}")]
    Plan(#[from] crate::signal::SignalError),
}

impl Scenario {
    /// Movements that actually carry demand and therefore must be served.
    pub fn active_movements(&self) -> Vec<Movement> {
        let mut v = Vec::new();
        for a in Approach::ALL {
            let spec = &self.approaches[a.index()];
            if spec.demand_vph <= 0.0 {
                continue;
            }
            for t in Turn::ALL {
                if spec.turning.get(t) > 0.0 {
                    v.push((a, t));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.shares.validate()?;
        for a in Approach::ALL {
            let spec = &self.approaches[a.index()];
            if spec.demand_vph < 0.0 {
                return Err(ScenarioError::NegativeDemand(a, spec.demand_vph));
            }
            let t = spec.turning;
            if t.left < 0.0 || t.through < 0.0 || t.right < 0.0 {
                return Err(ScenarioError::NegativeTurning(a));
            }
            if (t.sum() - 100.0).abs() > 1e-6 {
                return Err(ScenarioError::TurningSum(a, t.sum()));
            }
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.allowed.is_empty() {
                return Err(ScenarioError::EmptyLane(i));
            }
            group_kind(&lane.allowed)
                .ok_or_else(|| ScenarioError::UnsupportedLane(i, lane.allowed.clone()))?;
        }
        if self.dt <= 0.0 {
            return Err(ScenarioError::BadDt(self.dt));
        }
        if self.duration <= 0.0 || self.warmup < 0.0 {
            return Err(ScenarioError::BadHorizon {
                duration: self.duration,
                warmup: self.warmup,
            });
        }
        if self.v_base <= 0.0 {
            return Err(ScenarioError::BadBaseSpeed(self.v_base));
        }
        if self.link_length <= 0.0 {
            return Err(ScenarioError::BadLinkLength(self.link_length));
        }
        let active = self.active_movements();
        self.plan.validate(&active)?;
        for &(a, t) in &active {
            let served = self
                .lanes
                .iter()
                .any(|l| l.approach == a && l.allowed.contains(&t));
            if !served {
                return Err(ScenarioError::UnservedTurn(a, t));
            }
        }
        // Queue discharge is defined per lane, so one lane must answer to one
        // phase: all movements a lane permits have to turn green together.
        for (i, lane) in self.lanes.iter().enumerate() {
            let mut onset: Option<f64> = None;
            for &t in &lane.allowed {
                let w = self.plan.next_green_window((lane.approach, t), 0.0)?;
                match onset {
                    None => onset = Some(w.starts_in),
                    Some(s) if (s - w.starts_in).abs() > 1e-9 => {
                        return Err(ScenarioError::SplitPhaseLane(i));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn with_shares(&self, id: &str, shares: FleetShares) -> Scenario {
        Scenario {
            id: id.to_string(),
            shares,
            ..self.clone()
        }
    }
}

/// The built-in intersection: eastbound with exclusive left/through/right
/// lanes at 900 veh/h, the other three approaches with an exclusive left and
/// two shared through-right lanes at 1,200 veh/h each; lefts are 15%
/// everywhere, rights are 15/5/15/25% for EB/NB/WB/SB.
pub fn default_testbed() -> Scenario {
    use Approach::*;
    use Turn::*;
    let lane = |approach, allowed: &[Turn]| LaneSpec {
        approach,
        allowed: allowed.to_vec(),
    };
    Scenario {
        id: "testbed".to_string(),
        shares: FleetShares::hv_only(),
        approaches: [
            ApproachSpec {
                demand_vph: 900.0,
                turning: TurnShares {
                    left: 15.0,
                    through: 70.0,
                    right: 15.0,
                },
            },
            ApproachSpec {
                demand_vph: 1200.0,
                turning: TurnShares {
                    left: 15.0,
                    through: 80.0,
                    right: 5.0,
                },
            },
            ApproachSpec {
                demand_vph: 1200.0,
                turning: TurnShares {
                    left: 15.0,
                    through: 70.0,
                    right: 15.0,
                },
            },
            ApproachSpec {
                demand_vph: 1200.0,
                turning: TurnShares {
                    left: 15.0,
                    through: 60.0,
                    right: 25.0,
                },
            },
        ],
        lanes: vec![
            lane(Eb, &[Left]),
            lane(Eb, &[Through]),
            lane(Eb, &[Right]),
            lane(Nb, &[Left]),
            lane(Nb, &[Through, Right]),
            lane(Nb, &[Through, Right]),
            lane(Wb, &[Left]),
            lane(Wb, &[Through, Right]),
            lane(Wb, &[Through, Right]),
            lane(Sb, &[Left]),
            lane(Sb, &[Through, Right]),
            lane(Sb, &[Through, Right]),
        ],
        plan: default_plan(),
        warmup: 600.0,
        duration: 3600.0,
        dt: 0.1,
        v_base: 15.6,
        link_length: 600.0,
        seed: 1,
    }
}

/// Lane-group classification for measurement and the headway regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupKind {
    ExclusiveLeft,
    ExclusiveThrough,
    ExclusiveRight,
    SharedThroughRight,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::ExclusiveLeft => "excl_left",
            GroupKind::ExclusiveThrough => "excl_through",
            GroupKind::ExclusiveRight => "excl_right",
            GroupKind::SharedThroughRight => "shared_tr",
        }
    }
}

fn group_kind(allowed: &[Turn]) -> Option<GroupKind> {
    let mut set: Vec<Turn> = allowed.to_vec();
    set.sort();
    set.dedup();
    match set.as_slice() {
        [Turn::Left] => Some(GroupKind::ExclusiveLeft),
        [Turn::Through] => Some(GroupKind::ExclusiveThrough),
        [Turn::Right] => Some(GroupKind::ExclusiveRight),
        [Turn::Through, Turn::Right] => Some(GroupKind::SharedThroughRight),
        _ => None,
    }
}

/// Lanes of one approach serving the same movement set, measured as a unit.
#[derive(Debug, Clone, Serialize)]
pub struct LaneGroup {
    pub id: String,
    pub approach: Approach,
    pub kind: GroupKind,
    /// Indices into `scenario.lanes`.
    pub lanes: Vec<usize>,
    /// s of green per cycle for this group's movements.
    pub green: f64,
    /// s of cycle length.
    pub cycle: f64,
    /// Right-turn percentage among this group's own traffic (shared groups
    /// only; 0 elsewhere).
    pub rt_pct: f64,
    /// veh/h routed to this group by demand and turning shares.
    pub demand_vph: f64,
}

/// Derive the lane groups of a validated scenario, in a fixed approach-major
/// order.
pub fn lane_groups(sc: &Scenario) -> Vec<LaneGroup> {
    let cycle = sc.plan.cycle_length();
    let mut groups: Vec<LaneGroup> = Vec::new();
    for a in Approach::ALL {
        let spec = &sc.approaches[a.index()];
        for kind in [
            GroupKind::ExclusiveLeft,
            GroupKind::ExclusiveThrough,
            GroupKind::SharedThroughRight,
            GroupKind::ExclusiveRight,
        ] {
            let lanes: Vec<usize> = sc
                .lanes
                .iter()
                .enumerate()
                .filter(|(_, l)| l.approach == a && group_kind(&l.allowed) == Some(kind))
                .map(|(i, _)| i)
                .collect();
            if lanes.is_empty() {
                continue;
            }
            let lead_turn = match kind {
                GroupKind::ExclusiveLeft => Turn::Left,
                GroupKind::ExclusiveRight => Turn::Right,
                _ => Turn::Through,
            };
            let green = sc
                .plan
                .phases
                .iter()
                .find(|ph| ph.movements.contains(&(a, lead_turn)))
                .map(|ph| ph.green)
                .unwrap_or(0.0);
            let (rt_pct, demand_share) = match kind {
                GroupKind::ExclusiveLeft => (0.0, spec.turning.left),
                GroupKind::ExclusiveThrough => (0.0, spec.turning.through),
                GroupKind::ExclusiveRight => (0.0, spec.turning.right),
                GroupKind::SharedThroughRight => {
                    let tr = spec.turning.through + spec.turning.right;
                    let rt = if tr > 0.0 {
                        100.0 * spec.turning.right / tr
                    } else {
                        0.0
                    };
                    (rt, tr)
                }
            };
            groups.push(LaneGroup {
                id: format!("{}_{}", a.as_str(), kind.as_str()),
                approach: a,
                kind,
                lanes,
                green,
                cycle,
                rt_pct,
                demand_vph: spec.demand_vph * demand_share / 100.0,
            });
        }
    }
    groups
}
