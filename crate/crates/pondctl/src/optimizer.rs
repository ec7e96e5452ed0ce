//! Wet-period outflow scheduling as a linear program.
//!
//! Decision variables are the instantaneous outflows `Q(0..n_c)` and the
//! depths `H(1..n_c)`; `H(0)` is the measured depth and is folded into the
//! first balance row. One equality row per step encodes the trapezoidal
//! balance `Q(t) dt + 2A H(t) = I(t-1) dt + I(t) dt + 2A H(t-1) - Q(t-1) dt`,
//! and the box `0 <= Q <= q_max`, `0 <= H <= h_max` carries the outflow and
//! capacity limits at every step.
//!
//! Minimizing total outflow alone is degenerate (any placement of the same
//! released volume ties), so the planner solves lexicographically: first the
//! minimal total release, then, with that total pinned, the minimal peak
//! outflow. The result is the flattest schedule among the least-release ones.

use crate::hydraulics::PondParams;
use crate::lp::{Constraint, LpError, LpProblem, LpStatus, Relation};
use thiserror::Error;

pub use crate::lp::{solve_lp, LpSolution};

/// Allowed slop when sanitizing solver output back into the physical box.
const SANITIZE_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("forecast has {got} samples but the horizon needs n_c + 1 = {want}")]
    ForecastLength { got: usize, want: usize },
    #[error("initial depth {0} m outside [0, h_max]")]
    DepthOutOfRange(f64),
    #[error("negative or non-finite forecast inflow at index {index}: {value}")]
    BadInflow { index: usize, value: f64 },
    #[error(
        "inflow volume exceeds pond capacity even at maximum outflow; \
         minimal capacity deficit {deficit_m3:.3} m^3"
    )]
    CapacityExceeded { deficit_m3: f64 },
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("schedule sanitation failed: {0}")]
    Degenerate(String),
}

/// The planner's decision vector plus the depths it implies.
#[derive(Debug, Clone)]
pub struct OutflowSchedule {
    /// `Q(0..n_c)` (m^3/s).
    pub outflows: Vec<f64>,
    /// `H(0..n_c)` (m); `depths[0]` is the initial depth.
    pub depths: Vec<f64>,
    /// Release volume implied by the objective, `dt * sum Q` (m^3).
    pub total_release_volume_m3: f64,
    /// Largest scheduled outflow (m^3/s).
    pub peak_outflow_m3s: f64,
}

impl OutflowSchedule {
    /// Worst balance-row residual of this schedule against a forecast, in m^3.
    pub fn balance_residual_m3(&self, params: &PondParams, forecast: &[f64]) -> f64 {
        let a = params.area_m2;
        let dt = params.dt_s;
        let mut worst = 0.0f64;
        for t in 1..self.outflows.len() {
            let lhs = 2.0 * a * (self.depths[t] - self.depths[t - 1]);
            let rhs =
                dt * ((forecast[t - 1] + forecast[t]) - (self.outflows[t - 1] + self.outflows[t]));
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

fn validate(params: &PondParams, initial_depth: f64, forecast: &[f64]) -> Result<(), PlanError> {
    if forecast.len() != params.n_c + 1 {
        return Err(PlanError::ForecastLength {
            got: forecast.len(),
            want: params.n_c + 1,
        });
    }
    if !(initial_depth.is_finite()
        && initial_depth >= -SANITIZE_TOL
        && initial_depth <= params.h_max_m + SANITIZE_TOL)
    {
        return Err(PlanError::DepthOutOfRange(initial_depth));
    }
    for (index, &value) in forecast.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(PlanError::BadInflow { index, value });
        }
    }
    Ok(())
}

/// Assemble the wet-period LP: `n_c + 1` outflow variables, `n_c` depth
/// variables and one balance row per step. The objective is the total outflow.
pub fn build_lp(
    params: &PondParams,
    initial_depth: f64,
    inflow_forecast: &[f64],
) -> Result<LpProblem, PlanError> {
    validate(params, initial_depth, inflow_forecast)?;
    let n = params.n_c;
    let dt = params.dt_s;
    let two_a = 2.0 * params.area_m2;
    let h0 = initial_depth.clamp(0.0, params.h_max_m);

    let num_vars = (n + 1) + n; // Q(0..n), H(1..n)
    let mut objective = vec![0.0; num_vars];
    let mut lower = vec![0.0; num_vars];
    let mut upper = vec![0.0; num_vars];
    for t in 0..=n {
        objective[t] = 1.0;
        lower[t] = 0.0;
        upper[t] = params.q_max_m3s;
    }
    for t in 1..=n {
        lower[n + t] = 0.0;
        upper[n + t] = params.h_max_m;
    }

    let mut constraints = Vec::with_capacity(n);
    for t in 1..=n {
        let mut coeffs = vec![(t - 1, dt), (t, dt), (n + t, two_a)];
        let mut rhs = dt * (inflow_forecast[t - 1] + inflow_forecast[t]);
        if t == 1 {
            rhs += two_a * h0;
        } else {
            coeffs.push((n + t - 1, -two_a));
        }
        constraints.push(Constraint {
            coeffs,
            relation: Relation::Eq,
            rhs,
        });
    }

    Ok(LpProblem {
        num_vars,
        objective,
        constraints,
        lower,
        upper,
    })
}

/// Names aligned with `build_lp`'s variable order, for debug dumps.
pub fn lp_variable_names(n_c: usize, with_peak: bool) -> Vec<String> {
    let mut names: Vec<String> = (0..=n_c).map(|t| format!("q{t}")).collect();
    names.extend((1..=n_c).map(|t| format!("h{t}")));
    if with_peak {
        names.push("p".into());
    }
    names
}

/// Cumulative trapezoidal inflow volume through each step (m^3), index 0 = 0.
fn cumulative_inflow(dt: f64, forecast: &[f64]) -> Vec<f64> {
    let mut ci = Vec::with_capacity(forecast.len());
    ci.push(0.0);
    for t in 1..forecast.len() {
        ci.push(ci[t - 1] + 0.5 * dt * (forecast[t - 1] + forecast[t]));
    }
    ci
}

/// Analytic lower bound on the released volume: by each step the pond must
/// have passed on whatever the incoming volume exceeds its remaining storage,
/// so the bound is the worst prefix deficit, floored at zero.
pub fn min_release_lower_bound(
    params: &PondParams,
    initial_depth: f64,
    inflow_forecast: &[f64],
) -> f64 {
    let stored = params.area_m2 * initial_depth.clamp(0.0, params.h_max_m);
    let capacity = params.capacity_m3();
    cumulative_inflow(params.dt_s, inflow_forecast)
        .iter()
        .skip(1)
        .map(|ci| stored + ci - capacity)
        .fold(0.0f64, f64::max)
}

/// Cumulative release volume through each step with every outflow at `q_max`
/// (the first one pinned to the anchor when given).
fn max_release_curve(params: &PondParams, n: usize, anchor: Option<f64>) -> Vec<f64> {
    let dt = params.dt_s;
    let qm = params.q_max_m3s;
    (0..=n)
        .map(|t| match anchor {
            None => dt * qm * t as f64,
            Some(q0) if t >= 1 => dt * (0.5 * (q0 + qm) + qm * (t as f64 - 1.0)),
            Some(_) => 0.0,
        })
        .collect()
}

/// Worst prefix shortfall when releasing at `q_max` throughout (optionally
/// with a fixed first outflow); positive means no feasible schedule exists.
fn capacity_deficit_at_qmax(
    params: &PondParams,
    initial_depth: f64,
    forecast: &[f64],
    anchor: Option<f64>,
) -> f64 {
    let stored = params.area_m2 * initial_depth.clamp(0.0, params.h_max_m);
    let capacity = params.capacity_m3();
    let ci = cumulative_inflow(params.dt_s, forecast);
    let crmax = max_release_curve(params, forecast.len() - 1, anchor);
    ci.iter()
        .zip(&crmax)
        .skip(1)
        .map(|(ci_t, rel_t)| stored + ci_t - capacity - rel_t)
        .fold(0.0f64, f64::max)
}

/// Sharper infeasibility magnitude over release windows: by step `t` the pond
/// owes `L(t)` of cumulative release, what left by step `s` is capped both by
/// the water available then and by the full-rate curve, and the window
/// `(s, t]` can transfer at most the full-rate increment. The worst shortfall
/// over all cuts covers late inflow spikes the whole-horizon prefix misses.
fn windowed_capacity_deficit(
    params: &PondParams,
    initial_depth: f64,
    forecast: &[f64],
    anchor: Option<f64>,
) -> f64 {
    let stored = params.area_m2 * initial_depth.clamp(0.0, params.h_max_m);
    let capacity = params.capacity_m3();
    let ci = cumulative_inflow(params.dt_s, forecast);
    let crmax = max_release_curve(params, forecast.len() - 1, anchor);
    let mut worst = 0.0f64;
    for t in 1..ci.len() {
        let needed = stored + ci[t] - capacity;
        if needed <= worst {
            continue;
        }
        for s in 0..t {
            let released_by_s = if s == 0 {
                0.0
            } else {
                (stored + ci[s]).min(crmax[s])
            };
            let transferable = crmax[t] - crmax[s];
            worst = worst.max(needed - released_by_s - transferable);
        }
    }
    worst
}

struct PlanRequest<'a> {
    params: &'a PondParams,
    initial_depth: f64,
    forecast: &'a [f64],
    /// Fixes `Q(0)` to an already-realized outflow; the peak tie-break then
    /// ranges over the free decisions only.
    anchor: Option<f64>,
}

fn plan(req: PlanRequest<'_>) -> Result<OutflowSchedule, PlanError> {
    let params = req.params;
    let n = params.n_c;
    let mut lp1 = build_lp(params, req.initial_depth, req.forecast)?;
    if let Some(q0) = req.anchor {
        let q0 = q0.clamp(0.0, params.q_max_m3s);
        lp1.lower[0] = q0;
        lp1.upper[0] = q0;
    }

    // A positive deficit at full-rate release proves infeasibility outright;
    // skip the solve. (The solver still backstops the borderline cases.)
    let deficit = capacity_deficit_at_qmax(params, req.initial_depth, req.forecast, req.anchor);
    if deficit > 1e-7 {
        return Err(PlanError::CapacityExceeded {
            deficit_m3: deficit,
        });
    }

    let sol1 = solve_lp(&lp1)?;
    match sol1.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(PlanError::CapacityExceeded {
                deficit_m3: windowed_capacity_deficit(
                    params,
                    req.initial_depth,
                    req.forecast,
                    req.anchor,
                ),
            });
        }
        LpStatus::Unbounded => {
            return Err(PlanError::Solver(LpError::Numerical(
                "box-constrained plan reported unbounded".into(),
            )))
        }
    }
    let total_flow = sol1.objective;

    // A zero free release pins every free outflow to zero; the tie-break
    // solve would be a no-op.
    let anchor_flow = req
        .anchor
        .map(|q| q.clamp(0.0, params.q_max_m3s))
        .unwrap_or(0.0);
    if total_flow - anchor_flow <= 1e-9 * (1.0 + anchor_flow) {
        let mut outflows = vec![0.0; n + 1];
        outflows[0] = anchor_flow;
        return finish_schedule(req.params, req.initial_depth, req.forecast, outflows);
    }

    // Tie-break: pin the total and minimize an upper envelope on the outflows.
    let mut lp2 = lp1.clone();
    let peak_var = lp2.num_vars;
    lp2.num_vars += 1;
    lp2.objective = vec![0.0; lp2.num_vars];
    lp2.objective[peak_var] = 1.0;
    lp2.lower.push(0.0);
    lp2.upper.push(params.q_max_m3s);
    lp2.constraints.push(Constraint {
        coeffs: (0..=n).map(|t| (t, 1.0)).collect(),
        relation: Relation::Eq,
        rhs: total_flow,
    });
    let peak_from = if req.anchor.is_some() { 1 } else { 0 };
    for t in peak_from..=n {
        lp2.constraints.push(Constraint {
            coeffs: vec![(t, 1.0), (peak_var, -1.0)],
            relation: Relation::Le,
            rhs: 0.0,
        });
    }

    let sol2 = solve_lp(&lp2)?;
    if sol2.status != LpStatus::Optimal {
        return Err(PlanError::Solver(LpError::Numerical(format!(
            "tie-break solve unexpectedly {:?}",
            sol2.status
        ))));
    }

    // Sanitize the outflows back into the box and rebuild the depths from the
    // balance recursion so the schedule satisfies it to rounding error.
    let mut outflows = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let q = sol2.values[t];
        if q < -SANITIZE_TOL || q > params.q_max_m3s + SANITIZE_TOL {
            return Err(PlanError::Degenerate(format!(
                "outflow {q} at step {t} violates [0, {}]",
                params.q_max_m3s
            )));
        }
        outflows.push(q.clamp(0.0, params.q_max_m3s));
    }
    finish_schedule(req.params, req.initial_depth, req.forecast, outflows)
}

fn finish_schedule(
    params: &PondParams,
    initial_depth: f64,
    forecast: &[f64],
    outflows: Vec<f64>,
) -> Result<OutflowSchedule, PlanError> {
    let n = params.n_c;
    let mut depths = Vec::with_capacity(n + 1);
    depths.push(initial_depth.clamp(0.0, params.h_max_m));
    let half = params.dt_s / (2.0 * params.area_m2);
    for t in 1..=n {
        let h = depths[t - 1]
            + half * ((forecast[t - 1] + forecast[t]) - (outflows[t - 1] + outflows[t]));
        if h < -SANITIZE_TOL || h > params.h_max_m + SANITIZE_TOL {
            return Err(PlanError::Degenerate(format!(
                "depth {h} at step {t} violates [0, {}]",
                params.h_max_m
            )));
        }
        depths.push(h.clamp(0.0, params.h_max_m));
    }

    let total: f64 = outflows.iter().sum();
    let peak = outflows.iter().fold(0.0f64, |m, &q| m.max(q));
    Ok(OutflowSchedule {
        outflows,
        depths,
        total_release_volume_m3: params.dt_s * total,
        peak_outflow_m3s: peak,
    })
}

/// Lexicographic optimum over the horizon: least total release, then least
/// peak among the least-release schedules.
pub fn plan_outflows(
    params: &PondParams,
    initial_depth: f64,
    inflow_forecast: &[f64],
) -> Result<OutflowSchedule, PlanError> {
    plan(PlanRequest {
        params,
        initial_depth,
        forecast: inflow_forecast,
        anchor: None,
    })
}

/// Like [`plan_outflows`] but with `Q(0)` pinned to an outflow that has
/// already been realized, so the plan's first interval coincides exactly with
/// the plant interval in progress. The first free set point is `outflows[1]`.
pub fn plan_outflows_anchored(
    params: &PondParams,
    initial_depth: f64,
    realized_outflow: f64,
    inflow_forecast: &[f64],
) -> Result<OutflowSchedule, PlanError> {
    plan(PlanRequest {
        params,
        initial_depth,
        forecast: inflow_forecast,
        anchor: Some(realized_outflow),
    })
}
