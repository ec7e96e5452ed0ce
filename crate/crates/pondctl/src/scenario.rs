//! Scenario ingestion: inflow/rainfall series, forecast windows, and the
//! plain-text run configuration.
//!
//! Series files are two-column CSV (`time_s,value`) with integer-second
//! timestamps on a uniform step. Configuration is `key = value` lines with
//! `#` comments; unknown keys are rejected so typos cannot silently fall back
//! to defaults.

use crate::controller::{ControllerConfig, ForecastMode, ForecastWindow};
use crate::hydraulics::{HydraulicsError, PondParams};
use crate::rules::TeMode;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Config { path: String, msg: String },
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    #[error(transparent)]
    Pond(#[from] HydraulicsError),
}

/// A uniformly sampled series as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start_time_s: u64,
    pub dt_s: f64,
    pub values: Vec<f64>,
}

/// Catchment stand-in that turns rainfall depth into pond inflow: a runoff
/// coefficient and a single linear reservoir. Deliberately not a hydrologic
/// model; callers with real hydrographs should load inflow series directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatchmentParams {
    pub area_m2: f64,
    pub runoff_coefficient: f64,
    pub reservoir_tau_s: f64,
}

impl CatchmentParams {
    pub fn new(
        area_m2: f64,
        runoff_coefficient: f64,
        reservoir_tau_s: f64,
    ) -> Result<Self, ScenarioError> {
        if !(area_m2.is_finite() && area_m2 > 0.0) {
            return Err(ScenarioError::Invalid {
                what: "catchment area",
                msg: format!("{area_m2} must be finite and > 0"),
            });
        }
        if !(0.0..=1.0).contains(&runoff_coefficient) {
            return Err(ScenarioError::Invalid {
                what: "runoff coefficient",
                msg: format!("{runoff_coefficient} must be in [0, 1]"),
            });
        }
        if !(reservoir_tau_s.is_finite() && reservoir_tau_s > 0.0) {
            return Err(ScenarioError::Invalid {
                what: "reservoir time constant",
                msg: format!("{reservoir_tau_s} must be finite and > 0"),
            });
        }
        Ok(Self {
            area_m2,
            runoff_coefficient,
            reservoir_tau_s,
        })
    }
}

/// An inflow scenario on a uniform step, optionally remembering the rainfall
/// it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub start_time_s: u64,
    pub dt_s: f64,
    pub inflow: Vec<f64>,
    pub rainfall_mm: Option<Vec<f64>>,
}

fn validate_dt(dt_s: f64) -> Result<(), ScenarioError> {
    if !(dt_s.is_finite() && dt_s > 0.0 && dt_s.fract() == 0.0) {
        return Err(ScenarioError::Invalid {
            what: "dt",
            msg: format!("{dt_s} must be a positive whole number of seconds"),
        });
    }
    Ok(())
}

impl Scenario {
    pub fn from_inflow(
        name: &str,
        start_time_s: u64,
        dt_s: f64,
        inflow: Vec<f64>,
    ) -> Result<Self, ScenarioError> {
        validate_dt(dt_s)?;
        if inflow.is_empty() {
            return Err(ScenarioError::Invalid {
                what: "inflow series",
                msg: "empty".into(),
            });
        }
        if let Some(bad) = inflow.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ScenarioError::Invalid {
                what: "inflow series",
                msg: format!("negative or non-finite value {bad}"),
            });
        }
        Ok(Self {
            name: name.to_string(),
            start_time_s,
            dt_s,
            inflow,
            rainfall_mm: None,
        })
    }

    pub fn from_rainfall(
        name: &str,
        start_time_s: u64,
        dt_s: f64,
        rainfall_mm: Vec<f64>,
        catchment: &CatchmentParams,
    ) -> Result<Self, ScenarioError> {
        validate_dt(dt_s)?;
        if rainfall_mm.is_empty() {
            return Err(ScenarioError::Invalid {
                what: "rainfall series",
                msg: "empty".into(),
            });
        }
        if let Some(bad) = rainfall_mm.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ScenarioError::Invalid {
                what: "rainfall series",
                msg: format!("negative or non-finite value {bad}"),
            });
        }
        let inflow = rainfall_to_inflow(&rainfall_mm, catchment, dt_s);
        Ok(Self {
            name: name.to_string(),
            start_time_s,
            dt_s,
            inflow,
            rainfall_mm: Some(rainfall_mm),
        })
    }
}

/// Parse a `time_s,value` CSV with a uniform step of `expected_dt_s`.
pub fn load_series_csv(path: &Path, expected_dt_s: f64) -> Result<TimeSeries, ScenarioError> {
    validate_dt(expected_dt_s)?;
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: display.clone(),
        source,
    })?;
    let parse_err = |line: usize, msg: String| ScenarioError::Parse {
        path: display.clone(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == "time_s,value" => {}
        Some((_, header)) => {
            return Err(parse_err(
                1,
                format!("expected header `time_s,value`, found `{header}`"),
            ))
        }
        None => return Err(parse_err(1, "empty file".into())),
    }

    let dt = expected_dt_s as u64;
    let mut start: Option<u64> = None;
    let mut prev_t: Option<u64> = None;
    let mut values = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let (t_str, v_str) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(v), None) => (t, v),
            _ => {
                return Err(parse_err(
                    line_no,
                    format!("expected two fields, found `{row}`"),
                ))
            }
        };
        let t: u64 = t_str
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad timestamp `{t_str}`")))?;
        let v: f64 = v_str
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad value `{v_str}`")))?;
        if !v.is_finite() {
            return Err(parse_err(line_no, format!("non-finite value {v}")));
        }
        if v < 0.0 {
            return Err(parse_err(
                line_no,
                format!("negative value at line {line_no}"),
            ));
        }
        if let Some(p) = prev_t {
            if t <= p || t - p != dt {
                return Err(parse_err(
                    line_no,
                    format!(
                        "non-uniform time step at line {line_no}: expected {}, found {t}",
                        p + dt
                    ),
                ));
            }
        } else {
            start = Some(t);
        }
        prev_t = Some(t);
        values.push(v);
    }
    if values.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok(TimeSeries {
        start_time_s: start.unwrap(),
        dt_s: expected_dt_s,
        values,
    })
}

/// Route effective rainfall through a single linear reservoir.
///
/// Each step contributes `coefficient * depth * area` of effective volume;
/// the reservoir drains a fraction `1 - exp(-dt/tau)` of its storage per
/// step, so the emitted volume equals the effective volume up to whatever is
/// still in storage at the end of the series.
pub fn rainfall_to_inflow(rain_mm: &[f64], catchment: &CatchmentParams, dt_s: f64) -> Vec<f64> {
    let drain = 1.0 - (-dt_s / catchment.reservoir_tau_s).exp();
    let mut storage = 0.0;
    rain_mm
        .iter()
        .map(|&mm| {
            storage += catchment.runoff_coefficient * (mm / 1000.0) * catchment.area_m2;
            let out = storage * drain;
            storage -= out;
            out / dt_s
        })
        .collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_open(x: u64) -> f64 {
    (((x >> 11) as f64) + 0.5) / (1u64 << 53) as f64
}

/// Deterministic standard normal for (seed, step, offset).
fn noise_normal(seed: u64, step: usize, offset: usize) -> f64 {
    let mut s = seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (offset as u64) << 32;
    let u1 = unit_open(splitmix64(&mut s));
    let u2 = unit_open(splitmix64(&mut s));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Slice the controller-visible forecast starting at `now_step`.
///
/// Perfect mode copies the true future (zero-padded past the scenario end).
/// Degraded mode jitters every sample except the current observation. The
/// window also carries the wait until the next forecast wet sample (infinite
/// when none is in sight) and the clock time the previous wet episode ended.
pub fn forecast_window(
    scenario: &Scenario,
    now_step: usize,
    config: &ControllerConfig,
) -> ForecastWindow {
    let dt = scenario.dt_s;
    let n_c = (config.anticipation_horizon_s / dt).round() as usize;
    let mut series = Vec::with_capacity(n_c + 1);
    for offset in 0..=n_c {
        let true_value = scenario
            .inflow
            .get(now_step + offset)
            .copied()
            .unwrap_or(0.0);
        let value = match (offset, config.forecast_mode) {
            (0, _) | (_, ForecastMode::Perfect) => true_value,
            (_, ForecastMode::Degraded(noise)) => {
                let z = noise_normal(noise.seed, now_step, offset);
                (true_value * (1.0 + noise.relative_sigma * z)).max(0.0)
            }
        };
        series.push(value);
    }

    let t_next_rain_s = series
        .iter()
        .position(|&v| v > config.wet_threshold_m3s)
        .map(|o| o as f64 * dt)
        .unwrap_or(f64::INFINITY);

    let now_s = scenario.start_time_s as f64 + now_step as f64 * dt;
    // The previous episode ends at the first dry instant after its last wet
    // sample; with no wet history the start of record stands in.
    let t_f_s = (0..=now_step.min(scenario.inflow.len() - 1))
        .rev()
        .find(|&j| scenario.inflow[j] > config.wet_threshold_m3s)
        .map(|j| scenario.start_time_s as f64 + (j as f64 + 1.0) * dt)
        .unwrap_or(scenario.start_time_s as f64)
        .min(now_s);

    ForecastWindow {
        series,
        t_next_rain_s,
        t_f_s,
        now_s,
    }
}

/// Everything a run needs, as parsed from one config file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub pond: PondParams,
    pub controller: ControllerConfig,
    pub catchment: Option<CatchmentParams>,
    pub initial_depth_m: f64,
}

/// Parse a `key = value` config. Required keys: `area_m2`, `h_max_m`,
/// `q_max_m3s`, `dt_s`, `horizon_hours`. Optional: `settle_hours` (20),
/// `wet_threshold_m3s` (1e-3), `te_mode` (`drain_at_qmax` | `literal_360`),
/// `initial_depth_m` (0), and the catchment triple `catchment_area_m2`,
/// `runoff_coefficient`, `reservoir_tau_s`.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ScenarioError> {
    const REQUIRED: [&str; 5] = ["area_m2", "h_max_m", "q_max_m3s", "dt_s", "horizon_hours"];
    const OPTIONAL: [&str; 7] = [
        "settle_hours",
        "wet_threshold_m3s",
        "te_mode",
        "initial_depth_m",
        "catchment_area_m2",
        "runoff_coefficient",
        "reservoir_tau_s",
    ];

    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: display.clone(),
        source,
    })?;
    let config_err = |msg: String| ScenarioError::Config {
        path: display.clone(),
        msg,
    };

    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
            path: display.clone(),
            line: line_no,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim().to_string();
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        if entries
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(config_err(format!("duplicate key `{key}`")));
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(config_err(format!("missing required key `{key}`")));
        }
    }

    let number = |key: &str| -> Result<f64, ScenarioError> {
        let raw = &entries[key];
        raw.parse::<f64>()
            .map_err(|_| config_err(format!("key `{key}`: unparsable number `{raw}`")))
    };
    let opt_number = |key: &str| -> Result<Option<f64>, ScenarioError> {
        match entries.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<f64>()
                .map(Some)
                .map_err(|_| config_err(format!("key `{key}`: unparsable number `{raw}`"))),
        }
    };

    let dt_s = number("dt_s")?;
    validate_dt(dt_s)?;
    let horizon_hours = number("horizon_hours")?;
    let horizon_s = horizon_hours * 3600.0;
    let steps = horizon_s / dt_s;
    if steps < 1.0 || (steps - steps.round()).abs() > 1e-9 {
        return Err(config_err(format!(
            "horizon_hours {horizon_hours} is not a whole number of {dt_s} s steps"
        )));
    }
    let n_c = steps.round() as usize;

    let pond = PondParams::new(
        number("area_m2")?,
        number("h_max_m")?,
        number("q_max_m3s")?,
        dt_s,
        n_c,
    )?;

    let te_mode = match entries.get("te_mode").map(String::as_str) {
        None | Some("drain_at_qmax") => TeMode::DrainAtQmax,
        Some("literal_360") => TeMode::Literal360,
        Some(other) => {
            return Err(config_err(format!(
                "key `te_mode`: expected drain_at_qmax or literal_360, found `{other}`"
            )))
        }
    };
    let controller = ControllerConfig {
        anticipation_horizon_s: horizon_s,
        wet_threshold_m3s: opt_number("wet_threshold_m3s")?.unwrap_or(1e-3),
        forecast_mode: ForecastMode::Perfect,
        te_mode,
        settle_time_s: opt_number("settle_hours")?.unwrap_or(20.0) * 3600.0,
    };
    if controller.wet_threshold_m3s < 0.0 {
        return Err(config_err("wet_threshold_m3s must be >= 0".into()));
    }
    if controller.settle_time_s <= 0.0 {
        return Err(config_err("settle_hours must be > 0".into()));
    }

    let catchment_keys = ["catchment_area_m2", "runoff_coefficient", "reservoir_tau_s"];
    let present = catchment_keys
        .iter()
        .filter(|k| entries.contains_key(**k))
        .count();
    let catchment =
        match present {
            0 => None,
            3 => Some(CatchmentParams::new(
                number("catchment_area_m2")?,
                number("runoff_coefficient")?,
                number("reservoir_tau_s")?,
            )?),
            _ => return Err(config_err(
                "catchment_area_m2, runoff_coefficient and reservoir_tau_s must be given together"
                    .into(),
            )),
        };

    let initial_depth_m = opt_number("initial_depth_m")?.unwrap_or(0.0);
    if !(0.0..=pond.h_max_m).contains(&initial_depth_m) {
        return Err(config_err(format!(
            "initial_depth_m {initial_depth_m} outside [0, {}]",
            pond.h_max_m
        )));
    }

    Ok(LoadedConfig {
        pond,
        controller,
        catchment,
        initial_depth_m,
    })
}
