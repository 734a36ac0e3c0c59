//! Acceptance gate: the eight deliverable criteria, evaluated end to end on a
//! single shared pipeline (calibrate the base case, sweep the 56-mix grid at
//! 10 replications, fit the headway model). Each test prints one PASS/FAIL
//! line; run with `--nocapture` to see them all.
//!
//! The pipeline is the real production path: `calibrate_base` with the
//! default search box, `run_sweep` with the calibrated parameters applied to
//! the human-driven and connected profiles, `fit_headway_model` on the pooled
//! lane-group observations.

use mixflow::analysis::{
    caf, fit_headway_model, predict_headway, scenario_grid, Coefficients, FitOutput, HeadwayInputs,
};
use mixflow::calibrate::{calibrate_base, CalibrationReport};
use mixflow::config::CalibrationConfig;
use mixflow::csvio::{observations, IntersectionRow, ResultRow};
use mixflow::driver::Fleet;
use mixflow::engine::Profiles;
use mixflow::scenario::default_testbed;
use mixflow::sweep::{run_sweep, SweepJob};
use std::sync::LazyLock;
use std::time::Instant;

struct Pipeline {
    calibration: CalibrationReport,
    calibration_secs: f64,
    results: Vec<ResultRow>,
    intersection: Vec<IntersectionRow>,
    fit: FitOutput,
    sweep_secs: f64,
    analysis_secs: f64,
}

static PIPELINE: LazyLock<Pipeline> = LazyLock::new(|| {
    let base = default_testbed();

    let t = Instant::now();
    let calibration = calibrate_base(&CalibrationConfig::default(), &base)
        .expect("base-case calibration must complete");
    let calibration_secs = t.elapsed().as_secs_f64();

    // Calibrated car-following core applies to both human-driven fleets
    // (connected drivers share it; connectivity acts through other levers).
    let mut profiles = Profiles::builtin();
    for fleet in [Fleet::Hv, Fleet::Cv] {
        let p = profiles.get_mut(fleet);
        p.cc0 = calibration.cc0;
        p.cc1 = calibration.cc1;
    }

    let t = Instant::now();
    let job = SweepJob {
        base,
        grid: scenario_grid(0.2).expect("grid step"),
        seeds: (1..=10).collect(),
        out_dir: None,
        parallelism: None,
    };
    let sweep = run_sweep(&job, &profiles).expect("full sweep must complete");
    let sweep_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let obs = observations(&sweep.results);
    let fit = fit_headway_model(&obs, true).expect("headway model must fit");
    let analysis_secs = t.elapsed().as_secs_f64();

    Pipeline {
        calibration,
        calibration_secs,
        results: sweep.results,
        intersection: sweep.intersection,
        fit,
        sweep_secs,
        analysis_secs,
    }
});

/// Mean over the 10 seeds of one pure-fleet mix, pulled from the
/// intersection-level rows.
fn pure_mix_mean(p: &Pipeline, id: &str, value: impl Fn(&IntersectionRow) -> f64) -> f64 {
    let vals: Vec<f64> = p
        .intersection
        .iter()
        .filter(|r| r.scenario_id == id)
        .map(value)
        .collect();
    assert!(!vals.is_empty(), "no intersection rows for {id}");
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_1_calibration_hits_the_base_headway() {
    let p = &*PIPELINE;
    let h = p.calibration.achieved_h;
    let in_band = (1.90..=2.05).contains(&h);
    let in_time = p.calibration_secs <= 600.0;
    println!(
        "criterion 1 (calibration): {} — achieved h_s {:.4} (band [1.90, 2.05]) with \
         (cc0, cc1) = ({}, {}) in {:.0} s (budget 600 s)",
        verdict(in_band && in_time),
        h,
        p.calibration.cc0,
        p.calibration.cc1,
        p.calibration_secs,
    );
    assert!(in_band, "calibrated headway {h} outside [1.90, 2.05]");
    assert!(
        in_time,
        "calibration took {:.0} s > 600 s",
        p.calibration_secs
    );
}

#[test]
fn criterion_2_pure_fleet_headways_sit_at_their_targets() {
    let p = &*PIPELINE;
    let h = |id: &str| pure_mix_mean(p, id, |r| r.h_s.expect("intersection h_s"));
    let (hv, cv, av, cav) = (
        h("cv0_av0_cav0"),
        h("cv100_av0_cav0"),
        h("cv0_av100_cav0"),
        h("cv0_av0_cav100"),
    );
    let banded = [(cav, 1.2), (cv, 1.5), (hv, 2.0), (av, 2.6)]
        .iter()
        .all(|(got, want)| (got - want).abs() <= 0.3);
    let ordered = cav < cv && cv < hv && hv < av;
    println!(
        "criterion 2 (pure-fleet headways): {} — CAV {:.3}, CV {:.3}, HV {:.3}, AV {:.3} \
         (targets 1.2 / 1.5 / 2.0 / 2.6 ± 0.3, order CAV < CV < HV < AV)",
        verdict(banded && ordered),
        cav,
        cv,
        hv,
        av,
    );
    assert!(
        ordered,
        "headway ordering violated: CAV {cav}, CV {cv}, HV {hv}, AV {av}"
    );
    assert!(banded, "a pure-fleet headway missed its ±0.3 band");
}

#[test]
fn criterion_3_model_signs_and_fit_quality() {
    let p = &*PIPELINE;
    let c = p.fit.reported().coefficients();
    let signs = c.cv < 0.0 && c.av > 0.0 && c.cav < 0.0 && c.d_exl > 0.0 && c.d_exr > 0.0;
    let magnitude = c.cav.abs() > c.cv.abs();
    let r2 = p.fit.reported().adj_r2;
    let fit_ok = r2 >= 0.85;
    println!(
        "criterion 3 (regression): {} — cv {:+.3}, av {:+.3}, cav {:+.3}, exl {:+.3}, \
         exr {:+.3}; |cav| > |cv| {}; adj R² {:.3} (≥ 0.85)",
        verdict(signs && magnitude && fit_ok),
        c.cv,
        c.av,
        c.cav,
        c.d_exl,
        c.d_exr,
        magnitude,
        r2,
    );
    assert!(
        signs,
        "coefficient signs disagree with the documented model"
    );
    assert!(magnitude, "|cav| must exceed |cv|");
    assert!(fit_ok, "adjusted R² {r2} below 0.85");
}

#[test]
fn criterion_4_caf_bands_for_the_pure_automated_fleets() {
    let p = &*PIPELINE;
    let c = p.fit.reported().coefficients();
    let caf_cav = caf(&c, &HeadwayInputs::through(0.0, 0.0, 1.0)).unwrap();
    let caf_av = caf(&c, &HeadwayInputs::through(0.0, 1.0, 0.0)).unwrap();
    let cav_ok = (1.6..=2.0).contains(&caf_cav);
    let av_ok = (0.70..=0.88).contains(&caf_av);
    println!(
        "criterion 4 (CAF bands): {} — 100% CAV {:.3} (band [1.60, 2.00]) {}; \
         100% AV {:.3} (band [0.70, 0.88]) {}",
        verdict(cav_ok && av_ok),
        caf_cav,
        verdict(cav_ok),
        caf_av,
        verdict(av_ok),
    );
    assert!(cav_ok, "CAF at 100% CAV = {caf_cav} outside [1.6, 2.0]");
    assert!(av_ok, "CAF at 100% AV = {caf_av} outside [0.70, 0.88]");
}

#[test]
fn criterion_5_throughput_ordering_of_pure_fleets() {
    let p = &*PIPELINE;
    let thr = |id: &str| pure_mix_mean(p, id, |r| r.throughput);
    let (hv, av, cav) = (
        thr("cv0_av0_cav0"),
        thr("cv0_av100_cav0"),
        thr("cv0_av0_cav100"),
    );
    let ordered = cav > hv && hv > av;
    let margin = cav >= 1.10 * av;
    println!(
        "criterion 5 (throughput): {} — CAV {:.0}, HV {:.0}, AV {:.0} veh/h \
         (CAV > HV > AV; CAV ≥ AV + 10%: {:.1}% gain)",
        verdict(ordered && margin),
        cav,
        hv,
        av,
        (cav / av - 1.0) * 100.0,
    );
    assert!(
        ordered,
        "throughput ordering violated: CAV {cav}, HV {hv}, AV {av}"
    );
    assert!(margin, "CAV throughput {cav} not 10% above AV {av}");
}

#[test]
fn criterion_6_worked_prediction_example() {
    // Documented coefficient table and its printed worked example.
    let c = Coefficients {
        intercept: 1.95,
        cv: -0.51,
        av: 0.56,
        cav: -0.91,
        d_exl: 0.11,
        d_exr: 0.11,
        d_shtr: None,
        d_shtr_rt: None,
    };
    let got = predict_headway(&c, &HeadwayInputs::through(0.15, 0.25, 0.50));
    let pass = (got - 1.59).abs() <= 0.005;
    println!(
        "criterion 6 (worked example): {} — predicted {:.4} s vs documented 1.59 ± 0.005 \
         (the table's own arithmetic gives 1.95 − 0.51·0.15 + 0.56·0.25 − 0.91·0.50 = 1.5585)",
        verdict(pass),
        got,
    );
    assert!(
        pass,
        "prediction {got} outside 1.59 ± 0.005; the documented coefficients do not \
         reproduce the documented example"
    );
}

#[test]
fn criterion_7_safety_and_statistical_invariants() {
    let p = &*PIPELINE;
    // Collisions and absolute-braking-distance violations abort a run with a
    // hard error, so 560 completed runs certify the safety invariants across
    // the full sweep. Determinism, estimator exactness, OLS recovery,
    // CAF(base) = 1, grid size, signal periodicity, and the 1,000-case
    // advisory arrival property run in the engine_behavior and properties
    // suites alongside this one; re-check the cheap ones here.
    let runs = p.intersection.len();
    let all_ran = runs == 56 * 10;
    let grid_ok = scenario_grid(0.2).unwrap().len() == 56;
    let c = p.fit.reported().coefficients();
    let base_caf = caf(&c, &HeadwayInputs::through(0.0, 0.0, 0.0)).unwrap();
    let caf_ok = (base_caf - 1.0).abs() < 1e-12;
    println!(
        "criterion 7 (invariant suites): {} — {} / 560 sweep runs completed with \
         no-collision and braking-distance checks enforced every step; grid = 56: {}; \
         CAF(base) = 1: {}; remaining properties covered by the dedicated suites",
        verdict(all_ran && grid_ok && caf_ok),
        runs,
        grid_ok,
        caf_ok,
    );
    assert!(all_ran, "expected 560 completed runs, got {runs}");
    assert!(grid_ok && caf_ok);
}

#[test]
fn criterion_8_sweep_and_analysis_fit_the_time_budget() {
    let p = &*PIPELINE;
    let total = p.sweep_secs + p.analysis_secs;
    let pass = total <= 1800.0;
    let rows = p.results.len();
    println!(
        "criterion 8 (runtime): {} — 560-run sweep {:.0} s + analysis {:.1} s = {:.0} s \
         (budget 1800 s) producing {} lane-group rows at dt = 0.1",
        verdict(pass),
        p.sweep_secs,
        p.analysis_secs,
        total,
        rows,
    );
    assert!(pass, "sweep + analysis took {total:.0} s > 1800 s");
}
