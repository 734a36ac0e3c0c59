//! Run-configuration files (TOML): scenario, per-fleet profile overrides, and
//! the calibration search. Scenario files are partial — anything omitted keeps
//! its default-testbed value — so a three-line file is a valid experiment.

use crate::driver::{AmberMode, Fleet};
use crate::engine::Profiles;
use crate::scenario::{default_testbed, Scenario};
use crate::signal::{Approach, Movement, Phase, SignalPlan, Turn};
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// The message carries toml's own line/column anchor.
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Malformed {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn invalid(path: &Path, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: Option<String>,
    warmup: Option<f64>,
    duration: Option<f64>,
    dt: Option<f64>,
    v_base: Option<f64>,
    link_length: Option<f64>,
    seed: Option<u64>,
    shares: Option<SharesFile>,
    approaches: Option<ApproachesFile>,
    plan: Option<PlanFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SharesFile {
    hv: f64,
    cv: f64,
    av: f64,
    cav: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproachesFile {
    eb: Option<ApproachFile>,
    nb: Option<ApproachFile>,
    wb: Option<ApproachFile>,
    sb: Option<ApproachFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApproachFile {
    demand_vph: Option<f64>,
    turning: Option<TurningFile>,
    /// Movement lists, kerb-inward order, e.g. [["left"], ["through","right"]].
    lanes: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurningFile {
    left: f64,
    through: f64,
    right: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    offset: Option<f64>,
    phases: Vec<PhaseFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseFile {
    /// "approach:turn" strings, e.g. "eb:left".
    movements: Vec<String>,
    green: f64,
    amber: f64,
    all_red: f64,
}

fn parse_movement(path: &Path, s: &str) -> Result<Movement, ConfigError> {
    let (a, t) = s
        .split_once(':')
        .ok_or_else(|| invalid(path, format!("movement '{s}' is not approach:turn")))?;
    let approach: Approach = a.parse().map_err(|e: String| invalid(path, e))?;
    let turn: Turn = t.parse().map_err(|e: String| invalid(path, e))?;
    Ok((approach, turn))
}

/// Load a scenario file over the default testbed and validate the result.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = parse(path, &read(path)?)?;
    let mut sc = default_testbed();

    if let Some(id) = file.id {
        sc.id = id;
    }
    if let Some(v) = file.warmup {
        sc.warmup = v;
    }
    if let Some(v) = file.duration {
        sc.duration = v;
    }
    if let Some(v) = file.dt {
        sc.dt = v;
    }
    if let Some(v) = file.v_base {
        sc.v_base = v;
    }
    if let Some(v) = file.link_length {
        sc.link_length = v;
    }
    if let Some(v) = file.seed {
        sc.seed = v;
    }
    if let Some(s) = file.shares {
        sc.shares.hv = s.hv;
        sc.shares.cv = s.cv;
        sc.shares.av = s.av;
        sc.shares.cav = s.cav;
    }
    if let Some(approaches) = file.approaches {
        let pairs = [
            (Approach::Eb, approaches.eb),
            (Approach::Nb, approaches.nb),
            (Approach::Wb, approaches.wb),
            (Approach::Sb, approaches.sb),
        ];
        for (approach, spec) in pairs {
            let Some(spec) = spec else { continue };
            let slot = &mut sc.approaches[approach.index()];
            if let Some(d) = spec.demand_vph {
                slot.demand_vph = d;
            }
            if let Some(t) = spec.turning {
                slot.turning.left = t.left;
                slot.turning.through = t.through;
                slot.turning.right = t.right;
            }
            if let Some(lanes) = spec.lanes {
                sc.lanes.retain(|l| l.approach != approach);
                for allowed in lanes {
                    let mut turns = Vec::with_capacity(allowed.len());
                    for t in allowed {
                        turns.push(t.parse::<Turn>().map_err(|e| invalid(path, e))?);
                    }
                    sc.lanes.push(crate::scenario::LaneSpec {
                        approach,
                        allowed: turns,
                    });
                }
            }
        }
    }
    if let Some(plan) = file.plan {
        let mut phases = Vec::with_capacity(plan.phases.len());
        for ph in plan.phases {
            let mut movements = Vec::with_capacity(ph.movements.len());
            for m in &ph.movements {
                movements.push(parse_movement(path, m)?);
            }
            phases.push(Phase {
                movements,
                green: ph.green,
                amber: ph.amber,
                all_red: ph.all_red,
            });
        }
        sc.plan = SignalPlan {
            phases,
            offset: plan.offset.unwrap_or(0.0),
        };
    }

    sc.validate().map_err(|e| invalid(path, e.to_string()))?;
    Ok(sc)
}

/// Per-fleet profile override: every field optional; unknown keys rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverride {
    pub cc0: Option<f64>,
    pub cc1: Option<f64>,
    pub cc2: Option<f64>,
    pub cc3: Option<f64>,
    pub cc4: Option<f64>,
    pub cc5: Option<f64>,
    pub cc6: Option<f64>,
    pub cc7: Option<f64>,
    pub cc8: Option<f64>,
    pub cc9: Option<f64>,
    /// "continuous" or "one_decision".
    pub amber_mode: Option<String>,
    pub amber_stop_decel: Option<f64>,
    pub red_amber_go: Option<bool>,
    pub reduced_safety_factor: Option<f64>,
    pub zone_upstream: Option<f64>,
    pub zone_downstream: Option<f64>,
    pub eabd_enabled: Option<bool>,
    pub implicit_stochasticity: Option<bool>,
    pub interaction_vehicle_count: Option<usize>,
    pub desired_accel_multiplier: Option<(f64, f64)>,
    pub startup_reaction: Option<f64>,
    pub coop_headway_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilesFile {
    hv: Option<ProfileOverride>,
    cv: Option<ProfileOverride>,
    av: Option<ProfileOverride>,
    cav: Option<ProfileOverride>,
}

fn apply_override(
    path: &Path,
    profiles: &mut Profiles,
    fleet: Fleet,
    ov: &ProfileOverride,
) -> Result<(), ConfigError> {
    let p = profiles.get_mut(fleet);
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = ov.$field { p.$field = v; })*
        };
    }
    set!(
        cc0,
        cc1,
        cc2,
        cc3,
        cc4,
        cc5,
        cc6,
        cc7,
        cc8,
        cc9,
        amber_stop_decel,
        red_amber_go,
        reduced_safety_factor,
        zone_upstream,
        zone_downstream,
        eabd_enabled,
        implicit_stochasticity,
        interaction_vehicle_count,
        desired_accel_multiplier,
        startup_reaction,
        coop_headway_factor
    );
    if let Some(mode) = &ov.amber_mode {
        p.amber_mode = match mode.as_str() {
            "continuous" => AmberMode::ContinuousCheck,
            "one_decision" => AmberMode::OneDecision,
            other => {
                return Err(invalid(
                    path,
                    format!("amber_mode '{other}' (expected continuous/one_decision)"),
                ))
            }
        };
    }
    Ok(())
}

/// Load a profile-override file on top of the built-ins.
pub fn load_profiles(path: &Path) -> Result<Profiles, ConfigError> {
    let file: ProfilesFile = parse(path, &read(path)?)?;
    let mut profiles = Profiles::builtin();
    let pairs = [
        (Fleet::Hv, &file.hv),
        (Fleet::Cv, &file.cv),
        (Fleet::Av, &file.av),
        (Fleet::Cav, &file.cav),
    ];
    for (fleet, ov) in pairs {
        if let Some(ov) = ov {
            apply_override(path, &mut profiles, fleet, ov)?;
        }
    }
    Ok(profiles)
}

/// Calibration search settings; grids default to the documented search box.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_target")]
    pub target_headway: f64,
    #[serde(default = "default_cc0_grid")]
    pub cc0: Vec<f64>,
    #[serde(default = "default_cc1_grid")]
    pub cc1: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: u32,
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
}

fn default_target() -> f64 {
    2.0
}

fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + i as f64 * step).collect()
}

fn default_cc0_grid() -> Vec<f64> {
    grid(1.0, 2.0, 0.25)
}

fn default_cc1_grid() -> Vec<f64> {
    grid(0.9, 1.6, 0.05)
}

fn default_reps() -> u32 {
    3
}

fn default_seed_base() -> u64 {
    1
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target_headway: default_target(),
            cc0: default_cc0_grid(),
            cc1: default_cc1_grid(),
            reps: default_reps(),
            seed_base: default_seed_base(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        if self.cc0.is_empty() || self.cc1.is_empty() {
            return Err(invalid(path, "calibration grids must be nonempty"));
        }
        if self.reps == 0 {
            return Err(invalid(path, "reps must be positive"));
        }
        if self.target_headway <= 0.0 {
            return Err(invalid(path, "target_headway must be positive"));
        }
        Ok(())
    }
}

pub fn load_calibration(path: &Path) -> Result<CalibrationConfig, ConfigError> {
    let cfg: CalibrationConfig = parse(path, &read(path)?)?;
    cfg.validate(path)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::builtin_profile;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn empty_file_is_the_default_testbed() {
        let (_d, path) = write_tmp("");
        let sc = load_scenario(&path).unwrap();
        let base = default_testbed();
        assert_eq!(sc.lanes.len(), base.lanes.len());
        assert_eq!(sc.seed, base.seed);
        assert_eq!(sc.plan.phases.len(), 4);
    }

    #[test]
    fn partial_override_keeps_the_rest() {
        let (_d, path) = write_tmp(
            r#"
id = "half"
seed = 9

[shares]
hv = 0.5
cv = 0.5
av = 0.0
cav = 0.0

[approaches.eb]
demand_vph = 450.0
"#,
        );
        let sc = load_scenario(&path).unwrap();
        assert_eq!(sc.id, "half");
        assert_eq!(sc.seed, 9);
        assert_eq!(sc.shares.cv, 0.5);
        assert_eq!(sc.approaches[Approach::Eb.index()].demand_vph, 450.0);
        // NB untouched.
        assert_eq!(sc.approaches[Approach::Nb.index()].demand_vph, 1200.0);
    }

    #[test]
    fn bad_shares_name_the_field() {
        let (_d, path) = write_tmp("[shares]\nhv = 0.5\ncv = 0.4\nav = 0.0\ncav = 0.0\n");
        let err = load_scenario(&path).unwrap_err();
        assert!(err.to_string().contains("shares"), "{err}");
    }

    #[test]
    fn syntax_errors_are_line_anchored() {
        let (_d, path) = write_tmp("id = \"x\"\nwarmup = oops\n");
        let err = load_scenario(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (_d, path) = write_tmp("speling_mistake = 1\n");
        assert!(load_scenario(&path).is_err());
        let (_d2, path2) = write_tmp("[hv]\ncc0 = 1.2\nwarp_drive = true\n");
        assert!(load_profiles(&path2).is_err());
    }

    #[test]
    fn custom_plan_and_lanes_parse() {
        let (_d, path) = write_tmp(
            r#"
[approaches.nb]
lanes = [["left"], ["through"], ["through", "right"]]

[plan]
offset = 2.0

[[plan.phases]]
movements = ["eb:left", "wb:left", "eb:through", "eb:right", "wb:through", "wb:right"]
green = 40.0
amber = 3.0
all_red = 1.0

[[plan.phases]]
movements = ["nb:left", "sb:left", "nb:through", "nb:right", "sb:through", "sb:right"]
green = 40.0
amber = 3.0
all_red = 1.0
"#,
        );
        let sc = load_scenario(&path).unwrap();
        assert_eq!(sc.plan.phases.len(), 2);
        assert_eq!(sc.plan.offset, 2.0);
        assert_eq!(
            sc.lanes
                .iter()
                .filter(|l| l.approach == Approach::Nb)
                .count(),
            3
        );
    }

    #[test]
    fn bad_movement_string_is_reported() {
        let (_d, path) = write_tmp(
            "[[plan.phases]]\nmovements = [\"north:left\"]\ngreen = 10.0\namber = 3.0\nall_red = 1.0\n",
        );
        let err = load_scenario(&path).unwrap_err();
        assert!(err.to_string().contains("north"), "{err}");
    }

    #[test]
    fn profile_overrides_apply_per_fleet() {
        let (_d, path) = write_tmp(
            r#"
[hv]
cc0 = 1.25
cc1 = 1.05

[cv]
cc1 = 1.05
amber_mode = "one_decision"
"#,
        );
        let profiles = load_profiles(&path).unwrap();
        assert_eq!(profiles.get(Fleet::Hv).cc0, 1.25);
        assert_eq!(profiles.get(Fleet::Hv).cc1, 1.05);
        assert_eq!(profiles.get(Fleet::Cv).cc1, 1.05);
        assert_eq!(profiles.get(Fleet::Cv).amber_mode, AmberMode::OneDecision);
        // Untouched fleets and fields match the built-ins.
        assert_eq!(profiles.get(Fleet::Cv).cc0, builtin_profile(Fleet::Cv).cc0);
        assert_eq!(
            profiles.get(Fleet::Cav).cc1,
            builtin_profile(Fleet::Cav).cc1
        );
    }

    #[test]
    fn calibration_defaults_and_validation() {
        let (_d, path) = write_tmp("");
        let cfg = load_calibration(&path).unwrap();
        assert_eq!(cfg.target_headway, 2.0);
        assert_eq!(cfg.cc0.len(), 5);
        assert_eq!(cfg.cc1.len(), 15);
        assert_eq!(cfg.reps, 3);

        let (_d2, path2) = write_tmp("cc0 = []\n");
        assert!(load_calibration(&path2).is_err());

        let (_d3, path3) = write_tmp("target_headway = 1.8\ncc0 = [1.5]\ncc1 = [1.0, 1.1]\n");
        let cfg3 = load_calibration(&path3).unwrap();
        assert_eq!(cfg3.cc0, vec![1.5]);
        assert_eq!(cfg3.target_headway, 1.8);
    }
}
