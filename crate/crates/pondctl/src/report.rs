//! Static baseline, performance metrics, and trace/report emission.
//!
//! Traces are written as CSV with floats at 17 significant digits so a
//! re-load is bit-identical; every report number is recomputable from the
//! emitted trace alone.

use crate::controller::{ControllerConfig, ControllerMode, SimulationTrace, StepTag, TraceStep};
use crate::hydraulics::{initial_outflow_cap, route_step, HydraulicsError, PondParams, PondState};
use crate::lp::{LpProblem, Relation};
use crate::scenario::Scenario;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

const GRAVITY_MS2: f64 = 9.81;

#[derive(Debug, Error)]
pub enum ReportError {
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
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
}

/// The uncontrolled comparison case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StaticBaselineSpec {
    /// No storage at all: outflow equals inflow.
    Passthrough,
    /// A fixed orifice `Q = c_a * sqrt(2 g H)`, where `c_a` is the discharge
    /// coefficient times the orifice area (m^2). Not capped by `q_max`:
    /// static infrastructure has no controller.
    Orifice { coefficient_area_m2: f64 },
}

/// Simulate the uncontrolled pond on the identical inflow series.
pub fn static_baseline(
    scenario: &Scenario,
    params: &PondParams,
    spec: StaticBaselineSpec,
    initial_depth_m: f64,
) -> Result<SimulationTrace, ReportError> {
    let dt = scenario.dt_s as u64;
    let mut steps = Vec::with_capacity(scenario.inflow.len());
    match spec {
        StaticBaselineSpec::Passthrough => {
            for (k, &inflow) in scenario.inflow.iter().enumerate() {
                steps.push(TraceStep {
                    time_s: scenario.start_time_s + k as u64 * dt,
                    inflow_m3s: inflow,
                    mode: if inflow > 0.0 {
                        ControllerMode::Wet
                    } else {
                        ControllerMode::Dry
                    },
                    tag: StepTag::StaticPassthrough,
                    commanded_m3s: inflow,
                    realized_m3s: inflow,
                    depth_m: initial_depth_m,
                    overflow_step_m3: 0.0,
                });
            }
            Ok(SimulationTrace {
                start_time_s: scenario.start_time_s,
                dt_s: scenario.dt_s,
                steps,
                overflow_total_m3: 0.0,
            })
        }
        StaticBaselineSpec::Orifice {
            coefficient_area_m2,
        } => {
            let mut state = PondState::new(initial_depth_m);
            let mut prev: Option<(f64, f64)> = None; // (inflow, realized)
            for (k, &inflow) in scenario.inflow.iter().enumerate() {
                let time_s = scenario.start_time_s + k as u64 * dt;
                let command = orifice_outflow(coefficient_area_m2, state.depth_m);
                let mode = if inflow > 0.0 {
                    ControllerMode::Wet
                } else {
                    ControllerMode::Dry
                };
                let row = match prev {
                    None => {
                        let realized =
                            command.min(initial_outflow_cap(params, state.depth_m, inflow));
                        prev = Some((inflow, realized));
                        TraceStep {
                            time_s,
                            inflow_m3s: inflow,
                            mode,
                            tag: StepTag::StaticOrifice,
                            commanded_m3s: command,
                            realized_m3s: realized,
                            depth_m: state.depth_m,
                            overflow_step_m3: 0.0,
                        }
                    }
                    Some((inflow_prev, outflow_prev)) => {
                        let out =
                            route_step(&state, params, inflow_prev, inflow, outflow_prev, command)?;
                        state = out.state;
                        prev = Some((inflow, out.realized_outflow_m3s));
                        TraceStep {
                            time_s,
                            inflow_m3s: inflow,
                            mode,
                            tag: StepTag::StaticOrifice,
                            commanded_m3s: command,
                            realized_m3s: out.realized_outflow_m3s,
                            depth_m: out.state.depth_m,
                            overflow_step_m3: out.overflow_step_m3,
                        }
                    }
                };
                steps.push(row);
            }
            Ok(SimulationTrace {
                start_time_s: scenario.start_time_s,
                dt_s: scenario.dt_s,
                steps,
                overflow_total_m3: state.overflow_total_m3,
            })
        }
    }
}

/// Free-discharge orifice law.
pub fn orifice_outflow(coefficient_area_m2: f64, depth_m: f64) -> f64 {
    coefficient_area_m2 * (2.0 * GRAVITY_MS2 * depth_m.max(0.0)).sqrt()
}

/// One dry spell in a trace, as seen by the retention check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DryEpisode {
    pub start_step: usize,
    pub steps: usize,
    /// Leading span with the gate fully shut (commanded exactly zero), s.
    pub initial_hold_s: f64,
    /// Whether any step of the episode commanded a release.
    pub released: bool,
    /// Shut for at least the settling window before the first release
    /// (vacuously true when the episode never releases).
    pub retention_met: bool,
}

#[derive(Debug, Clone)]
pub struct PerformanceReport {
    pub peak_outflow_m3s: f64,
    /// Trapezoidal volume of the realized outflows (m^3).
    pub total_release_volume_m3: f64,
    pub total_overflow_m3: f64,
    pub max_depth_m: f64,
    pub dry_episodes: Vec<DryEpisode>,
    /// `1 - exp(-k * longest quiescent span)`; only with an explicit rate.
    pub tss_removal_fraction: Option<f64>,
}

/// Summarize a trace. `tss_settle_rate` enables the optional first-order
/// removal estimate; the quality objective proper is the retention check.
pub fn metrics(
    trace: &SimulationTrace,
    _params: &PondParams,
    config: &ControllerConfig,
    tss_settle_rate: Option<f64>,
) -> Result<PerformanceReport, ReportError> {
    if trace.steps.is_empty() {
        return Err(ReportError::EmptyTrace);
    }
    let peak = trace
        .steps
        .iter()
        .map(|s| s.realized_m3s)
        .fold(0.0f64, f64::max);
    let max_depth = trace.steps.iter().map(|s| s.depth_m).fold(0.0f64, f64::max);

    let mut dry_episodes = Vec::new();
    let mut k = 0;
    while k < trace.steps.len() {
        if trace.steps[k].mode != ControllerMode::Dry {
            k += 1;
            continue;
        }
        let start = k;
        while k < trace.steps.len() && trace.steps[k].mode == ControllerMode::Dry {
            k += 1;
        }
        let episode = &trace.steps[start..k];
        let hold_steps = episode
            .iter()
            .take_while(|s| s.commanded_m3s == 0.0)
            .count();
        let released = episode.iter().any(|s| s.commanded_m3s > 0.0);
        let initial_hold_s = hold_steps as f64 * trace.dt_s;
        dry_episodes.push(DryEpisode {
            start_step: start,
            steps: episode.len(),
            initial_hold_s,
            released,
            retention_met: !released || initial_hold_s >= config.settle_time_s,
        });
    }

    let tss_removal_fraction = tss_settle_rate.map(|rate| {
        let mut longest = 0usize;
        let mut run = 0usize;
        for s in &trace.steps {
            if s.mode == ControllerMode::Dry && s.commanded_m3s == 0.0 {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        1.0 - (-rate * longest as f64 * trace.dt_s).exp()
    });

    Ok(PerformanceReport {
        peak_outflow_m3s: peak,
        total_release_volume_m3: trace.total_release_volume_m3(),
        total_overflow_m3: trace.overflow_total_m3,
        max_depth_m: max_depth,
        dry_episodes,
        tss_removal_fraction,
    })
}

fn fmt_f64(v: f64) -> String {
    // 17 significant digits: exact f64 round-trip.
    format!("{v:.16e}")
}

pub fn trace_csv_string(trace: &SimulationTrace) -> String {
    let mut out = String::with_capacity(trace.steps.len() * 96 + 96);
    out.push_str("time_s,inflow_m3s,commanded_m3s,realized_m3s,depth_m,overflow_m3,mode,rule\n");
    for s in &trace.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.time_s,
            fmt_f64(s.inflow_m3s),
            fmt_f64(s.commanded_m3s),
            fmt_f64(s.realized_m3s),
            fmt_f64(s.depth_m),
            fmt_f64(s.overflow_step_m3),
            s.mode.as_str(),
            s.tag.as_str()
        );
    }
    out
}

pub fn emit_trace_csv(trace: &SimulationTrace, path: &Path) -> Result<(), ReportError> {
    fs::write(path, trace_csv_string(trace)).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read back a trace written by [`emit_trace_csv`].
pub fn load_trace_csv(path: &Path) -> Result<SimulationTrace, ReportError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: display.clone(),
        source,
    })?;
    let parse_err = |line: usize, msg: String| ReportError::Parse {
        path: display.clone(),
        line,
        msg,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h))
            if h.trim_end_matches('\r')
                == "time_s,inflow_m3s,commanded_m3s,realized_m3s,depth_m,overflow_m3,mode,rule" => {
        }
        Some((_, h)) => return Err(parse_err(1, format!("unexpected header `{h}`"))),
        None => return Err(parse_err(1, "empty file".into())),
    }

    let mut steps: Vec<TraceStep> = Vec::new();
    let mut overflow_total = 0.0;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let time_s: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad timestamp `{}`", fields[0])))?;
        let num = |i: usize| -> Result<f64, ReportError> {
            fields[i]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad number `{}`", fields[i])))
        };
        let mode = match fields[6] {
            "wet" => ControllerMode::Wet,
            "dry" => ControllerMode::Dry,
            other => return Err(parse_err(line_no, format!("bad mode `{other}`"))),
        };
        let tag = StepTag::parse(fields[7])
            .ok_or_else(|| parse_err(line_no, format!("bad rule `{}`", fields[7])))?;
        let overflow_step = num(5)?;
        overflow_total += overflow_step;
        steps.push(TraceStep {
            time_s,
            inflow_m3s: num(1)?,
            mode,
            tag,
            commanded_m3s: num(2)?,
            realized_m3s: num(3)?,
            depth_m: num(4)?,
            overflow_step_m3: overflow_step,
        });
    }
    if steps.len() < 2 {
        return Err(parse_err(2, "need at least two rows".into()));
    }
    let dt_s = (steps[1].time_s - steps[0].time_s) as f64;
    Ok(SimulationTrace {
        start_time_s: steps[0].time_s,
        dt_s,
        steps,
        overflow_total_m3: overflow_total,
    })
}

pub fn series_csv_string(start_time_s: u64, dt_s: f64, values: &[f64]) -> String {
    let mut out = String::from("time_s,value\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{}",
            start_time_s + k as u64 * dt_s as u64,
            fmt_f64(*v)
        );
    }
    out
}

pub fn emit_series_csv(
    path: &Path,
    start_time_s: u64,
    dt_s: f64,
    values: &[f64],
) -> Result<(), ReportError> {
    fs::write(path, series_csv_string(start_time_s, dt_s, values)).map_err(|source| {
        ReportError::Io {
            path: path.display().to_string(),
            source,
        }
    })
}

/// Plain-text dump of an LP, one constraint per line, for cross-checking
/// against external solvers.
pub fn lp_text(lp: &LpProblem, names: &[String]) -> String {
    let name = |j: usize| -> String { names.get(j).cloned().unwrap_or_else(|| format!("x{j}")) };
    let mut out = String::from("Minimize\n obj:");
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            let _ = write!(
                out,
                " {} {} {}",
                if c < 0.0 { "-" } else { "+" },
                c.abs(),
                name(j)
            );
        }
    }
    out.push_str("\nSubject To\n");
    for (r, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " c{}:", r + 1);
        for &(j, v) in &c.coeffs {
            let _ = write!(
                out,
                " {} {} {}",
                if v < 0.0 { "-" } else { "+" },
                v.abs(),
                name(j)
            );
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars {
        let _ = writeln!(out, " {} <= {} <= {}", lp.lower[j], name(j), lp.upper[j]);
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_text(lp: &LpProblem, names: &[String], path: &Path) -> Result<(), ReportError> {
    fs::write(path, lp_text(lp, names)).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn render_report(label: &str, report: &PerformanceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[{label}]");
    let _ = writeln!(
        out,
        "  peak outflow        : {:.4} m^3/s",
        report.peak_outflow_m3s
    );
    let _ = writeln!(
        out,
        "  total release volume: {:.1} m^3",
        report.total_release_volume_m3
    );
    let _ = writeln!(
        out,
        "  total overflow      : {:.1} m^3",
        report.total_overflow_m3
    );
    let _ = writeln!(out, "  max depth           : {:.4} m", report.max_depth_m);
    for (i, e) in report.dry_episodes.iter().enumerate() {
        let _ = writeln!(
            out,
            "  dry episode {i}: start step {}, {} steps, held {:.1} h, released: {}, retention met: {}",
            e.start_step,
            e.steps,
            e.initial_hold_s / 3600.0,
            e.released,
            e.retention_met
        );
    }
    if let Some(f) = report.tss_removal_fraction {
        let _ = writeln!(out, "  est. TSS removal    : {:.1} %", 100.0 * f);
    }
    out
}

pub fn render_comparison(dynamic: &PerformanceReport, baseline: &PerformanceReport) -> String {
    let mut out = String::from("[comparison: dynamic vs static]\n");
    let _ = writeln!(
        out,
        "  peak outflow : {:.4} vs {:.4} m^3/s ({:+.4})",
        dynamic.peak_outflow_m3s,
        baseline.peak_outflow_m3s,
        dynamic.peak_outflow_m3s - baseline.peak_outflow_m3s
    );
    let _ = writeln!(
        out,
        "  overflow     : {:.1} vs {:.1} m^3 ({:+.1})",
        dynamic.total_overflow_m3,
        baseline.total_overflow_m3,
        dynamic.total_overflow_m3 - baseline.total_overflow_m3
    );
    let _ = writeln!(
        out,
        "  max depth    : {:.4} vs {:.4} m",
        dynamic.max_depth_m, baseline.max_depth_m
    );
    let _ = writeln!(
        out,
        "  release      : {:.1} vs {:.1} m^3",
        dynamic.total_release_volume_m3, baseline.total_release_volume_m3
    );
    out
}
