//! Additive saturation-headway model: ordinary least squares with
//! normal-approximation inference, capacity / capacity-adjustment arithmetic,
//! and the share grids behind the sweep and the heatmap exports.

use crate::scenario::FleetShares;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

/// z multiplier for the 95% interval. Normal approximation: at the row counts
/// involved here the exact t quantile differs in the third decimal.
pub const Z95: f64 = 1.96;
/// Share resolution of the heatmap grids.
pub const GRID_STEP: f64 = 0.05;
/// A shared-lane indicator with a two-sided p above this is judged
/// uninformative and the model is refit without the shared terms.
pub const SHARED_DROP_P: f64 = 0.85;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("design matrix is singular (collinear columns)")]
    SingularDesign,
    #[error("{n} observations cannot support {k} model terms")]
    TooFewRows { n: usize, k: usize },
    #[error("capacity needs h > 0 and 0 < g <= C (got h={h}, g={g}, C={c})")]
    CapacityDomain { h: f64, g: f64, c: f64 },
    #[error("predicted headway {h} is not positive")]
    NonPositiveHeadway { h: f64 },
    #[error("share step {step} does not divide 1 evenly")]
    BadStep { step: f64 },
    #[error("hv level {hv} is not one of 0, 0.2, 0.4, 0.6")]
    BadHvLevel { hv: f64 },
    #[error("shares ({cv}, {av}, {cav}) are not a valid mix")]
    InvalidShares { cv: f64, av: f64, cav: f64 },
    #[error("more than one lane indicator set")]
    ConflictingLaneFlags,
}

/// Predictors for one lane-group observation. The base case (all zeros) is a
/// 100% human-driven exclusive through lane.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct HeadwayInputs {
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
    pub d_exl: bool,
    pub d_exr: bool,
    pub d_shtr: bool,
    /// % right-turning traffic; enters only through the shared-lane term.
    pub rt: f64,
}

impl HeadwayInputs {
    /// Through-lane inputs for a fleet mix.
    pub fn through(cv: f64, av: f64, cav: f64) -> Self {
        HeadwayInputs {
            cv,
            av,
            cav,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ok = |s: f64| (0.0..=1.0).contains(&s);
        if !(ok(self.cv) && ok(self.av) && ok(self.cav))
            || self.cv + self.av + self.cav > 1.0 + 1e-9
        {
            return Err(AnalysisError::InvalidShares {
                cv: self.cv,
                av: self.av,
                cav: self.cav,
            });
        }
        if u8::from(self.d_exl) + u8::from(self.d_exr) + u8::from(self.d_shtr) > 1 {
            return Err(AnalysisError::ConflictingLaneFlags);
        }
        Ok(())
    }
}

/// One regression observation.
#[derive(Debug, Clone, Copy)]
pub struct ObsRow {
    pub h_s: f64,
    pub inputs: HeadwayInputs,
}

/// One fitted term.
#[derive(Debug, Clone, Serialize)]
pub struct Term {
    pub name: &'static str,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_stat: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionResult {
    pub terms: Vec<Term>,
    pub adj_r2: f64,
    pub n_obs: usize,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Point estimates in prediction form.
    pub fn coefficients(&self) -> Coefficients {
        let get = |n: &str| self.term(n).map(|t| t.coefficient);
        Coefficients {
            intercept: get("intercept").unwrap_or(0.0),
            cv: get("cv").unwrap_or(0.0),
            av: get("av").unwrap_or(0.0),
            cav: get("cav").unwrap_or(0.0),
            d_exl: get("d_exl").unwrap_or(0.0),
            d_exr: get("d_exr").unwrap_or(0.0),
            d_shtr: get("d_shtr"),
            d_shtr_rt: get("d_shtr_rt"),
        }
    }
}

/// Coefficient vector of the additive headway model. The shared-lane pair is
/// absent in the reduced form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Coefficients {
    pub intercept: f64,
    pub cv: f64,
    pub av: f64,
    pub cav: f64,
    pub d_exl: f64,
    pub d_exr: f64,
    pub d_shtr: Option<f64>,
    pub d_shtr_rt: Option<f64>,
}

/// Requested model plus, when the shared-lane indicator came back
/// uninformative (p > 0.85), the refit without both shared terms.
#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub full: RegressionResult,
    pub reduced: Option<RegressionResult>,
}

impl FitOutput {
    /// The model analysis reports by default: the reduced form when present.
    pub fn reported(&self) -> &RegressionResult {
        self.reduced.as_ref().unwrap_or(&self.full)
    }
}

fn term_names(shared: bool) -> Vec<&'static str> {
    let mut names = vec!["intercept", "cv", "av", "cav", "d_exl", "d_exr"];
    if shared {
        names.push("d_shtr");
        names.push("d_shtr_rt");
    }
    names
}

fn design_row(x: &HeadwayInputs, shared: bool) -> Vec<f64> {
    let mut row = vec![
        1.0,
        x.cv,
        x.av,
        x.cav,
        f64::from(x.d_exl),
        f64::from(x.d_exr),
    ];
    if shared {
        let d = f64::from(x.d_shtr);
        row.push(d);
        row.push(d * x.rt);
    }
    row
}

fn fit_once(rows: &[ObsRow], shared: bool) -> Result<RegressionResult, AnalysisError> {
    let names = term_names(shared);
    let (n, k) = (rows.len(), names.len());
    if n <= k {
        return Err(AnalysisError::TooFewRows { n, k });
    }
    let x = DMatrix::from_fn(n, k, |r, c| design_row(&rows[r].inputs, shared)[c]);
    let y = DVector::from_fn(n, |r, _| rows[r].h_s);

    let xtx = x.transpose() * &x;
    let inv = xtx
        .clone()
        .try_inverse()
        .ok_or(AnalysisError::SingularDesign)?;
    // LU can "succeed" on a numerically rank-deficient system; demand an
    // actual inverse before trusting the normal equations.
    let residual_identity = (&xtx * &inv - DMatrix::<f64>::identity(k, k)).amax();
    if residual_identity > 1e-6 {
        return Err(AnalysisError::SingularDesign);
    }

    let beta = &inv * (x.transpose() * &y);
    let resid = &y - &x * &beta;
    let sse = resid.dot(&resid);
    let sigma2 = sse / (n - k) as f64;
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k) as f64;

    let terms = names
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let coefficient = beta[i];
            let std_error = (sigma2 * inv[(i, i)]).sqrt();
            let t_stat = coefficient / std_error;
            Term {
                name,
                coefficient,
                std_error,
                t_stat,
                p_value: erfc(t_stat.abs() / std::f64::consts::SQRT_2),
                ci95_low: coefficient - Z95 * std_error,
                ci95_high: coefficient + Z95 * std_error,
            }
        })
        .collect();
    Ok(RegressionResult {
        terms,
        adj_r2,
        n_obs: n,
    })
}

/// Ordinary least squares of h_s on [1, CV, AV, CAV, D_EXL, D_EXR] plus,
/// optionally, the shared-lane pair [D_SHTR, D_SHTR·RT]. When the shared
/// indicator is requested but uninformative, the reduction is fit alongside.
pub fn fit_headway_model(
    rows: &[ObsRow],
    include_shared_terms: bool,
) -> Result<FitOutput, AnalysisError> {
    let full = fit_once(rows, include_shared_terms)?;
    let reduced = if include_shared_terms
        && full
            .term("d_shtr")
            .is_some_and(|t| t.p_value > SHARED_DROP_P)
    {
        Some(fit_once(rows, false)?)
    } else {
        None
    };
    Ok(FitOutput { full, reduced })
}

/// Model prediction for one set of inputs.
pub fn predict_headway(c: &Coefficients, x: &HeadwayInputs) -> f64 {
    let d = f64::from(x.d_shtr);
    c.intercept
        + c.cv * x.cv
        + c.av * x.av
        + c.cav * x.cav
        + c.d_exl * f64::from(x.d_exl)
        + c.d_exr * f64::from(x.d_exr)
        + c.d_shtr.unwrap_or(0.0) * d
        + c.d_shtr_rt.unwrap_or(0.0) * d * x.rt
}

/// Lane capacity in veh/h from a saturation headway and a green ratio.
pub fn capacity(h: f64, g: f64, c: f64) -> Result<f64, AnalysisError> {
    if h <= 0.0 || g <= 0.0 || g > c {
        return Err(AnalysisError::CapacityDomain { h, g, c });
    }
    Ok((3600.0 / h) * (g / c))
}

/// Capacity adjustment factor: base-case headway over predicted headway.
/// Equals adjusted/base capacity at unchanged signal timing.
pub fn caf(c: &Coefficients, x: &HeadwayInputs) -> Result<f64, AnalysisError> {
    let h = predict_headway(c, x);
    if h <= 0.0 {
        return Err(AnalysisError::NonPositiveHeadway { h });
    }
    Ok(c.intercept / h)
}

/// Every fleet mix whose CV/AV/CAV shares are nonnegative multiples of `step`
/// summing to at most 1; HV takes the remainder. Step 0.2 yields 56 mixes.
pub fn scenario_grid(step: f64) -> Result<Vec<FleetShares>, AnalysisError> {
    let n = (1.0 / step).round();
    if !(n >= 1.0 && (n * step - 1.0).abs() <= 1e-9) {
        return Err(AnalysisError::BadStep { step });
    }
    let n = n as usize;
    let mut out = Vec::new();
    for cv_i in 0..=n {
        for av_i in 0..=n - cv_i {
            for cav_i in 0..=n - cv_i - av_i {
                let f = |i: usize| i as f64 / n as f64;
                out.push(FleetShares {
                    hv: f(n - cv_i - av_i - cav_i),
                    cv: f(cv_i),
                    av: f(av_i),
                    cav: f(cav_i),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridQuantity {
    Headway,
    Caf,
}

impl GridQuantity {
    pub fn as_str(self) -> &'static str {
        match self {
            GridQuantity::Headway => "headway",
            GridQuantity::Caf => "caf",
        }
    }
}

/// Through-lane heatmap at one HV level: AV share down the rows, CAV share
/// across the columns, CV as the remainder. Infeasible cells (CV < 0) are
/// empty.
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapGrid {
    pub hv: f64,
    pub quantity: GridQuantity,
    pub av_levels: Vec<f64>,
    pub cav_levels: Vec<f64>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn grid_export(
    c: &Coefficients,
    hv_level: f64,
    quantity: GridQuantity,
) -> Result<HeatmapGrid, AnalysisError> {
    // Work in integer twentieths so feasibility is exact.
    let per = (1.0 / GRID_STEP).round() as i64;
    let hv_i = (hv_level * per as f64).round() as i64;
    if (hv_i as f64 / per as f64 - hv_level).abs() > 1e-9 || ![0, 4, 8, 12].contains(&hv_i) {
        return Err(AnalysisError::BadHvLevel { hv: hv_level });
    }
    let levels: Vec<f64> = (0..=per).map(|i| i as f64 / per as f64).collect();
    let cells = (0..=per)
        .map(|av_i| {
            (0..=per)
                .map(|cav_i| {
                    let cv_i = per - hv_i - av_i - cav_i;
                    if cv_i < 0 {
                        return None;
                    }
                    let x = HeadwayInputs::through(
                        cv_i as f64 / per as f64,
                        av_i as f64 / per as f64,
                        cav_i as f64 / per as f64,
                    );
                    let v = match quantity {
                        GridQuantity::Headway => predict_headway(c, &x),
                        GridQuantity::Caf => caf(c, &x).unwrap_or(f64::NAN),
                    };
                    v.is_finite().then_some(v)
                })
                .collect()
        })
        .collect();
    Ok(HeatmapGrid {
        hv: hv_level,
        quantity,
        av_levels: levels.clone(),
        cav_levels: levels,
        cells,
    })
}
