//! Batch execution of a fleet-mix grid: every scenario crossed with every
//! seed, results merged and written once so output never depends on the
//! order workers finish in.

use crate::csvio::{self, CsvError, IntersectionRow, Manifest, ManifestEntry, ResultRow};
use crate::engine::{self, EngineError, Profiles};
use crate::measurement;
use crate::scenario::{FleetShares, Scenario};
use rayon::prelude::*;
use std::collections::HashSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one fleet mix and one seed")]
    Empty,
    #[error("duplicate seed {0} in sweep")]
    DuplicateSeed(u64),
    #[error("scenario {scenario_id} seed {seed} failed: {source}")]
    Run {
        scenario_id: String,
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

pub struct SweepJob {
    pub base: Scenario,
    pub grid: Vec<FleetShares>,
    pub seeds: Vec<u64>,
    /// When set, results.csv / intersection.csv / manifest.json land here.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; None (or Some(0)) uses one per core.
    pub parallelism: Option<usize>,
}

pub struct SweepOutput {
    pub results: Vec<ResultRow>,
    pub intersection: Vec<IntersectionRow>,
    pub manifest: Manifest,
    pub written: Vec<PathBuf>,
}

/// Scenario id for a fleet mix, in whole percent: "cv20_av40_cav40".
pub fn scenario_id_for(s: FleetShares) -> String {
    let pct = |x: f64| (x * 100.0).round() as u32;
    format!("cv{}_av{}_cav{}", pct(s.cv), pct(s.av), pct(s.cav))
}

pub fn run_sweep(job: &SweepJob, profiles: &Profiles) -> Result<SweepOutput, SweepError> {
    if job.grid.is_empty() || job.seeds.is_empty() {
        return Err(SweepError::Empty);
    }
    let mut seen = HashSet::new();
    for &s in &job.seeds {
        if !seen.insert(s) {
            return Err(SweepError::DuplicateSeed(s));
        }
    }

    let scenarios: Vec<Scenario> = job
        .grid
        .iter()
        .map(|&shares| job.base.with_shares(&scenario_id_for(shares), shares))
        .collect();
    let tasks: Vec<(usize, u64)> = (0..scenarios.len())
        .flat_map(|si| job.seeds.iter().map(move |&seed| (si, seed)))
        .collect();

    let evaluate = || {
        tasks
            .par_iter()
            .map(|&(si, seed)| {
                let sc = &scenarios[si];
                let log =
                    engine::run(sc, profiles, seed, false).map_err(|source| SweepError::Run {
                        scenario_id: sc.id.clone(),
                        seed,
                        source,
                    })?;
                let summary = measurement::summarize(sc, &log);
                Ok((
                    csvio::rows_from_summary(sc, &summary),
                    csvio::intersection_row_from_summary(sc, &summary),
                ))
            })
            .collect::<Result<Vec<_>, SweepError>>()
    };
    let per_run = match job.parallelism {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(evaluate),
        _ => evaluate(),
    }?;

    let mut results = Vec::new();
    let mut intersection = Vec::new();
    for (rows, irow) in per_run {
        results.extend(rows);
        intersection.push(irow);
    }
    let manifest = Manifest {
        seeds: job.seeds.clone(),
        scenarios: scenarios
            .iter()
            .map(|sc| ManifestEntry::new(&sc.id, sc.shares))
            .collect(),
    };

    let mut written = Vec::new();
    if let Some(dir) = &job.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| CsvError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let results_path = dir.join("results.csv");
        let intersection_path = dir.join("intersection.csv");
        let manifest_path = dir.join("manifest.json");
        csvio::write_results_csv(&results_path, &mut results)?;
        csvio::write_intersection_csv(&intersection_path, &mut intersection)?;
        csvio::write_manifest(&manifest_path, &manifest)?;
        written.extend([results_path, intersection_path, manifest_path]);
    }

    Ok(SweepOutput {
        results,
        intersection,
        manifest,
        written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_testbed;

    fn shares(cv: f64, av: f64, cav: f64) -> FleetShares {
        FleetShares {
            hv: 1.0 - cv - av - cav,
            cv,
            av,
            cav,
        }
    }

    #[test]
    fn ids_are_whole_percents() {
        assert_eq!(scenario_id_for(shares(0.0, 0.0, 0.0)), "cv0_av0_cav0");
        assert_eq!(scenario_id_for(shares(0.2, 0.4, 0.4)), "cv20_av40_cav40");
        assert_eq!(scenario_id_for(shares(0.15, 0.25, 0.5)), "cv15_av25_cav50");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let job = SweepJob {
            base: default_testbed(),
            grid: vec![],
            seeds: vec![1],
            out_dir: None,
            parallelism: None,
        };
        assert!(matches!(
            run_sweep(&job, &Profiles::builtin()),
            Err(SweepError::Empty)
        ));

        let job = SweepJob {
            base: default_testbed(),
            grid: vec![shares(0.0, 0.0, 0.0)],
            seeds: vec![4, 4],
            out_dir: None,
            parallelism: None,
        };
        assert!(matches!(
            run_sweep(&job, &Profiles::builtin()),
            Err(SweepError::DuplicateSeed(4))
        ));
    }

    #[test]
    fn small_sweep_writes_merged_outputs_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let job = SweepJob {
            base: default_testbed(),
            grid: vec![shares(0.0, 0.0, 0.0), shares(0.0, 0.0, 1.0)],
            seeds: vec![1],
            out_dir: Some(dir.path().to_path_buf()),
            parallelism: Some(2),
        };
        let profiles = Profiles::builtin();
        let out = run_sweep(&job, &profiles).unwrap();
        let n_groups = out.results.len() / 2;
        assert!(n_groups >= 4, "expected lane groups per scenario");
        assert_eq!(out.intersection.len(), 2);
        assert_eq!(out.manifest.scenarios.len(), 2);
        assert_eq!(out.written.len(), 3);

        let first = std::fs::read(dir.path().join("results.csv")).unwrap();
        let reread = csvio::read_results_csv(&dir.path().join("results.csv")).unwrap();
        assert_eq!(reread.len(), out.results.len());

        // Same job again: byte-identical files regardless of scheduling.
        run_sweep(&job, &profiles).unwrap();
        let second = std::fs::read(dir.path().join("results.csv")).unwrap();
        assert_eq!(first, second);
    }
}
