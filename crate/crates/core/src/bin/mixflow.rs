//! Command-line front end: single replications, fleet-mix sweeps, base
//! headway calibration, and regression/CAF analysis over merged results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mixflow::analysis::{self, GridQuantity, HeadwayInputs};
use mixflow::calibrate;
use mixflow::config;
use mixflow::csvio::{self, fmt_sig};
use mixflow::engine::{self, Profiles};
use mixflow::measurement;
use mixflow::scenario::{default_testbed, Scenario};
use mixflow::sweep::{self, SweepJob};

#[derive(Parser)]
#[command(
    name = "mixflow",
    version,
    about = "Signalized-intersection simulator for mixed human/connected/automated fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and write its result, event, and trajectory CSVs.
    Run {
        /// Scenario TOML; the built-in testbed when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Driver-profile override TOML.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Also write per-step vehicle trajectories.
        #[arg(long)]
        trajectories: bool,
    },
    /// Run every fleet mix on the share grid across seeds and merge the results.
    Sweep {
        /// Scenario TOML for everything except the fleet shares.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// First seed; replication k uses seed_base + k.
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
        /// Replications per fleet mix.
        #[arg(long, default_value_t = 10)]
        reps: u32,
        /// Share-grid step (0.2 gives the 56-mix grid).
        #[arg(long, default_value_t = 0.2)]
        step: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Concurrent replications; default one per core.
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        profiles: Option<PathBuf>,
    },
    /// Grid-search the human standstill/headway pair for a target saturation headway.
    Calibrate {
        /// Calibration TOML (target, grids, reps); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base scenario TOML; must be all human-driven.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Concurrent grid points; default one per core.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Fit the headway model on a merged results CSV and export reports and grids.
    Analyze {
        /// results.csv from a sweep.
        results: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            scenario,
            seed,
            out,
            profiles,
            trajectories,
        } => cmd_run(
            scenario.as_deref(),
            seed,
            &out,
            profiles.as_deref(),
            trajectories,
        ),
        Command::Sweep {
            scenario,
            seed_base,
            reps,
            step,
            out,
            parallelism,
            profiles,
        } => cmd_sweep(
            scenario.as_deref(),
            seed_base,
            reps,
            step,
            &out,
            parallelism,
            profiles.as_deref(),
        ),
        Command::Calibrate {
            config,
            scenario,
            out,
            parallelism,
        } => cmd_calibrate(config.as_deref(), scenario.as_deref(), &out, parallelism),
        Command::Analyze { results, out } => cmd_analyze(&results, &out),
    }
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => Ok(config::load_scenario(p)?),
        None => Ok(default_testbed()),
    }
}

fn load_profiles(path: Option<&Path>) -> Result<Profiles> {
    match path {
        Some(p) => Ok(config::load_profiles(p)?),
        None => Ok(Profiles::builtin()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(
    scenario: Option<&Path>,
    seed: u64,
    out: &Path,
    profiles: Option<&Path>,
    trajectories: bool,
) -> Result<()> {
    let sc = load_scenario(scenario)?;
    let prof = load_profiles(profiles)?;
    let log = engine::run(&sc, &prof, seed, trajectories)?;
    let summary = measurement::summarize(&sc, &log);

    ensure_dir(out)?;
    let mut rows = csvio::rows_from_summary(&sc, &summary);
    let mut irows = vec![csvio::intersection_row_from_summary(&sc, &summary)];
    csvio::write_results_csv(&out.join("results.csv"), &mut rows)?;
    csvio::write_intersection_csv(&out.join("intersection.csv"), &mut irows)?;
    csvio::write_events_csv(&out.join("events.csv"), &sc, &log)?;
    if trajectories {
        csvio::write_trajectories_csv(&out.join("trajectories.csv"), &log)?;
    }

    println!(
        "scenario {} seed {}: {} vehicles entered, {} crossed the bar",
        sc.id, seed, log.entered, log.exited
    );
    for g in &summary.groups {
        let h = g.h_s.map_or("-".into(), fmt_sig);
        println!(
            "  {:<18} h_s={:<8} queues={:<3} throughput={} veh/h",
            g.group.id,
            h,
            g.n_queues,
            fmt_sig(g.throughput)
        );
    }
    if let Some(h) = summary.intersection.h_s {
        println!("  intersection h_s = {} s", fmt_sig(h));
    }
    println!("wrote {}", out.join("results.csv").display());
    Ok(())
}

fn cmd_sweep(
    scenario: Option<&Path>,
    seed_base: u64,
    reps: u32,
    step: f64,
    out: &Path,
    parallelism: Option<usize>,
    profiles: Option<&Path>,
) -> Result<()> {
    let base = load_scenario(scenario)?;
    let prof = load_profiles(profiles)?;
    let grid = analysis::scenario_grid(step)?;
    let seeds: Vec<u64> = (0..reps).map(|k| seed_base + u64::from(k)).collect();
    let n_runs = grid.len() * seeds.len();

    let job = SweepJob {
        base,
        grid,
        seeds,
        out_dir: Some(out.to_path_buf()),
        parallelism,
    };
    let output = sweep::run_sweep(&job, &prof)?;

    println!(
        "{} runs -> {} lane-group rows, {} intersection rows",
        n_runs,
        output.results.len(),
        output.intersection.len()
    );
    for p in &output.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_calibrate(
    config: Option<&Path>,
    scenario: Option<&Path>,
    out: &Path,
    parallelism: Option<usize>,
) -> Result<()> {
    let cfg = match config {
        Some(p) => config::load_calibration(p)?,
        None => config::CalibrationConfig::default(),
    };
    let base = load_scenario(scenario)?;

    let report = match parallelism {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(|| calibrate::calibrate_base(&cfg, &base)),
        _ => calibrate::calibrate_base(&cfg, &base),
    }?;

    for (cc0, cc1) in report.skipped() {
        eprintln!("warning: no headway sample at cc0={cc0}, cc1={cc1}; point skipped");
    }

    ensure_dir(out)?;
    let mut table = String::from("cc0,cc1,mean_h,reps_with_estimate\n");
    for p in &report.points {
        let h = p.mean_h.map_or(String::new(), fmt_sig);
        table.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(p.cc0),
            fmt_sig(p.cc1),
            h,
            p.reps_with_estimate
        ));
    }
    write_text(&out.join("calibration.csv"), &table)?;

    let chosen = serde_json::json!({
        "target_headway": report.target_headway,
        "cc0": report.cc0,
        "cc1": report.cc1,
        "achieved_h": report.achieved_h,
    });
    let mut chosen_text = serde_json::to_string_pretty(&chosen).expect("serializes");
    chosen_text.push('\n');
    write_text(&out.join("calibration.json"), &chosen_text)?;

    println!(
        "chose cc0={}, cc1={} with h_s={} s against target {} s",
        fmt_sig(report.cc0),
        fmt_sig(report.cc1),
        fmt_sig(report.achieved_h),
        fmt_sig(report.target_headway)
    );
    println!("wrote {}", out.join("calibration.csv").display());
    println!("wrote {}", out.join("calibration.json").display());
    Ok(())
}

fn cmd_analyze(results: &Path, out: &Path) -> Result<()> {
    let rows = csvio::read_results_csv(results)?;
    let obs = csvio::observations(&rows);
    let fit = analysis::fit_headway_model(&obs, true)?;
    let reported = fit.reported();
    let coeffs = reported.coefficients();

    ensure_dir(out)?;
    write_text(
        &out.join("regression_full.csv"),
        &csvio::regression_report_csv(&fit.full),
    )?;
    write_text(
        &out.join("regression_reported.csv"),
        &csvio::regression_report_csv(reported),
    )?;
    let mut text = String::from("Full model (shared-lane terms included):\n");
    text.push_str(&csvio::regression_report_text(&fit.full));
    text.push_str("\nReported model (shared-lane terms dropped when uninformative):\n");
    text.push_str(&csvio::regression_report_text(reported));
    write_text(&out.join("regression_report.txt"), &text)?;

    // Representative right-turn share for the shared-lane CAF column comes
    // from the data itself.
    let shared: Vec<f64> = rows.iter().filter(|r| r.d_shtr).map(|r| r.rt_pct).collect();
    let shared_rt = if shared.is_empty() {
        0.0
    } else {
        shared.iter().sum::<f64>() / shared.len() as f64
    };

    let mut caf_table = String::from(
        "scenario_id,hv,cv,av,cav,caf_excl_through,caf_excl_left,caf_excl_right,caf_shared_tr\n",
    );
    for s in analysis::scenario_grid(0.2)? {
        let mk = |d_exl: bool, d_exr: bool, d_shtr: bool, rt: f64| HeadwayInputs {
            cv: s.cv,
            av: s.av,
            cav: s.cav,
            d_exl,
            d_exr,
            d_shtr,
            rt,
        };
        let cell = |x: HeadwayInputs| analysis::caf(&coeffs, &x).map_or(String::new(), fmt_sig);
        caf_table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            sweep::scenario_id_for(s),
            fmt_sig(s.hv),
            fmt_sig(s.cv),
            fmt_sig(s.av),
            fmt_sig(s.cav),
            cell(mk(false, false, false, 0.0)),
            cell(mk(true, false, false, 0.0)),
            cell(mk(false, true, false, 0.0)),
            cell(mk(false, false, true, shared_rt)),
        ));
    }
    write_text(&out.join("caf_table.csv"), &caf_table)?;

    for hv in [0.0, 0.2, 0.4, 0.6] {
        for q in [GridQuantity::Headway, GridQuantity::Caf] {
            let grid = analysis::grid_export(&coeffs, hv, q)?;
            let name = format!(
                "heatmap_{}_hv{}.csv",
                q.as_str(),
                (hv * 100.0).round() as u32
            );
            csvio::write_grid_csv(&out.join(name), &grid)?;
        }
    }

    println!(
        "fitted {} observations, adjusted R^2 = {}",
        reported.n_obs,
        fmt_sig(reported.adj_r2)
    );
    for t in &reported.terms {
        println!(
            "  {:<10} {:>9} (p={})",
            t.name,
            fmt_sig(t.coefficient),
            fmt_sig(t.p_value)
        );
    }
    println!("wrote reports and grids under {}", out.display());
    Ok(())
}
