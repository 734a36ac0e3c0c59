//! Grid calibration of the human-driver standstill distance and headway-time
//! pair against a saturation-headway target, measured on the exclusive
//! through lane of an all-human base scenario.

use crate::config::CalibrationConfig;
use crate::driver::Fleet;
use crate::engine::{self, EngineError, Profiles};
use crate::measurement;
use crate::scenario::{GroupKind, Scenario};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("calibration scenario must be all human-driven, got hv share {0}")]
    NotPureHv(f64),
    #[error("no grid point produced a saturation-headway estimate")]
    AllSkipped,
    #[error("run failed at cc0={cc0}, cc1={cc1}, seed={seed}: {source}")]
    Run {
        cc0: f64,
        cc1: f64,
        seed: u64,
        #[source]
        source: EngineError,
    },
}

/// One evaluated (cc0, cc1) pair.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub cc0: f64,
    pub cc1: f64,
    /// Mean exclusive-through saturation headway over the replications that
    /// produced one; None when every replication came back empty.
    pub mean_h: Option<f64>,
    pub reps_with_estimate: u32,
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub target_headway: f64,
    pub cc0: f64,
    pub cc1: f64,
    pub achieved_h: f64,
    /// Every grid point in evaluation order (cc0-major), skipped ones included.
    pub points: Vec<GridPoint>,
}

impl CalibrationReport {
    pub fn skipped(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.mean_h.is_none())
            .map(|p| (p.cc0, p.cc1))
            .collect()
    }
}

/// Exhaustive search over the (cc0, cc1) grid: each point gets `reps`
/// replications of the base scenario with the human profile overridden, and
/// the winner minimizes |mean h_s - target| with ties broken toward the
/// smaller cc1, then the smaller cc0.
pub fn calibrate_base(
    cfg: &CalibrationConfig,
    base: &Scenario,
) -> Result<CalibrationReport, CalibrateError> {
    if (base.shares.hv - 1.0).abs() > 1e-9 {
        return Err(CalibrateError::NotPureHv(base.shares.hv));
    }

    let pairs: Vec<(f64, f64)> = cfg
        .cc0
        .iter()
        .flat_map(|&c0| cfg.cc1.iter().map(move |&c1| (c0, c1)))
        .collect();

    let points = pairs
        .par_iter()
        .map(|&(cc0, cc1)| evaluate_point(cfg, base, cc0, cc1))
        .collect::<Result<Vec<GridPoint>, CalibrateError>>()?;

    let best = select_best(&points, cfg.target_headway).ok_or(CalibrateError::AllSkipped)?;
    Ok(CalibrationReport {
        target_headway: cfg.target_headway,
        cc0: best.cc0,
        cc1: best.cc1,
        achieved_h: best.mean_h.expect("selected point has an estimate"),
        points,
    })
}

fn evaluate_point(
    cfg: &CalibrationConfig,
    base: &Scenario,
    cc0: f64,
    cc1: f64,
) -> Result<GridPoint, CalibrateError> {
    let mut profiles = Profiles::builtin();
    {
        let hv = profiles.get_mut(Fleet::Hv);
        hv.cc0 = cc0;
        hv.cc1 = cc1;
    }
    let mut estimates = Vec::new();
    for k in 0..cfg.reps {
        let seed = cfg.seed_base + u64::from(k);
        let log =
            engine::run(base, &profiles, seed, false).map_err(|source| CalibrateError::Run {
                cc0,
                cc1,
                seed,
                source,
            })?;
        if let Some(h) = exclusive_through_headway(base, &log) {
            estimates.push(h);
        }
    }
    let reps_with_estimate = estimates.len() as u32;
    let mean_h =
        (!estimates.is_empty()).then(|| estimates.iter().sum::<f64>() / estimates.len() as f64);
    Ok(GridPoint {
        cc0,
        cc1,
        mean_h,
        reps_with_estimate,
    })
}

fn exclusive_through_headway(sc: &Scenario, log: &engine::RunLog) -> Option<f64> {
    measurement::summarize(sc, log)
        .groups
        .iter()
        .find(|g| g.group.kind == GroupKind::ExclusiveThrough)
        .and_then(|g| g.h_s)
}

fn select_best(points: &[GridPoint], target: f64) -> Option<&GridPoint> {
    points.iter().filter(|p| p.mean_h.is_some()).min_by(|a, b| {
        let da = (a.mean_h.unwrap() - target).abs();
        let db = (b.mean_h.unwrap() - target).abs();
        da.total_cmp(&db)
            .then(a.cc1.total_cmp(&b.cc1))
            .then(a.cc0.total_cmp(&b.cc0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_testbed, FleetShares};

    fn point(cc0: f64, cc1: f64, h: Option<f64>) -> GridPoint {
        GridPoint {
            cc0,
            cc1,
            mean_h: h,
            reps_with_estimate: u32::from(h.is_some()),
        }
    }

    #[test]
    fn ties_prefer_smaller_cc1_then_smaller_cc0() {
        // Equal distance from target on both sides: lower cc1 wins.
        let pts = vec![
            point(1.0, 1.2, Some(2.1)),
            point(1.5, 0.9, Some(1.9)),
            point(1.0, 0.9, Some(1.9)),
        ];
        let best = select_best(&pts, 2.0).unwrap();
        assert_eq!((best.cc0, best.cc1), (1.0, 0.9));

        // Strictly closer beats a lower cc1.
        let pts = vec![point(1.0, 0.9, Some(1.7)), point(2.0, 1.6, Some(2.05))];
        let best = select_best(&pts, 2.0).unwrap();
        assert_eq!((best.cc0, best.cc1), (2.0, 1.6));
    }

    #[test]
    fn skipped_points_are_ignored_and_all_skipped_is_none() {
        let pts = vec![point(1.0, 0.9, None), point(1.5, 1.0, Some(2.4))];
        assert_eq!(select_best(&pts, 2.0).unwrap().cc0, 1.5);
        let pts = vec![point(1.0, 0.9, None)];
        assert!(select_best(&pts, 2.0).is_none());
    }

    #[test]
    fn mixed_fleet_base_is_rejected() {
        let sc = default_testbed().with_shares(
            "mixed",
            FleetShares {
                hv: 0.5,
                cv: 0.0,
                av: 0.0,
                cav: 0.5,
            },
        );
        let cfg = CalibrationConfig::default();
        assert!(matches!(
            calibrate_base(&cfg, &sc),
            Err(CalibrateError::NotPureHv(_))
        ));
    }

    #[test]
    fn empty_traffic_skips_every_point() {
        let mut sc = default_testbed();
        for a in &mut sc.approaches {
            a.demand_vph = 0.0;
        }
        let cfg = CalibrationConfig {
            cc0: vec![1.5],
            cc1: vec![1.6],
            reps: 1,
            ..CalibrationConfig::default()
        };
        assert!(matches!(
            calibrate_base(&cfg, &sc),
            Err(CalibrateError::AllSkipped)
        ));
    }

    #[test]
    fn singleton_grid_returns_that_pair() {
        let cfg = CalibrationConfig {
            cc0: vec![1.5],
            cc1: vec![1.6],
            reps: 1,
            ..CalibrationConfig::default()
        };
        let report = calibrate_base(&cfg, &default_testbed()).unwrap();
        assert_eq!((report.cc0, report.cc1), (1.5, 1.6));
        assert_eq!(report.points.len(), 1);
        assert!(report.skipped().is_empty());
        // The built-in profile discharges at a plausible human headway.
        assert!(report.achieved_h > 1.5 && report.achieved_h < 3.0);
    }
}
