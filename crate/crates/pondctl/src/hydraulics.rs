//! Level-pool routing of a vertical-walled detention pond.
//!
//! The plant advances one interval at a time with trapezoidal averaging of
//! the endpoint inflows and outflows: `A * (H_new - H_old) =
//! dt * ((I_prev + I_now)/2 - (Q_prev + Q_new)/2)`. The idealized balance can
//! command more water out than the pond holds or push the level above the
//! rim; the plant clamps both and accounts for the spilled volume so a
//! trajectory always closes its volume ledger exactly.

use thiserror::Error;

/// Depth excursions below this size (m) are absorbed by the clamp without
/// being booked as overflow; keeps solver-tolerance hairs out of the ledger.
const DEPTH_SNAP_M: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum HydraulicsError {
    #[error("invalid pond parameter {name}: {value} (must be {requirement})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("negative or non-finite flow input {name}: {value}")]
    BadFlow { name: &'static str, value: f64 },
}

/// Physical and discretization constants of the basin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PondParams {
    /// Surface area (m^2); constant with depth (vertical walls).
    pub area_m2: f64,
    /// Maximum water depth before the pond spills (m).
    pub h_max_m: f64,
    /// Maximum allowable outflow through the outlet (m^3/s).
    pub q_max_m3s: f64,
    /// Step length (s).
    pub dt_s: f64,
    /// Number of control-horizon steps.
    pub n_c: usize,
}

impl PondParams {
    pub fn new(
        area_m2: f64,
        h_max_m: f64,
        q_max_m3s: f64,
        dt_s: f64,
        n_c: usize,
    ) -> Result<Self, HydraulicsError> {
        let check = |name: &'static str, value: f64| -> Result<(), HydraulicsError> {
            if !(value.is_finite() && value > 0.0) {
                return Err(HydraulicsError::InvalidParam {
                    name,
                    value,
                    requirement: "finite and > 0",
                });
            }
            Ok(())
        };
        check("area_m2", area_m2)?;
        check("h_max_m", h_max_m)?;
        check("q_max_m3s", q_max_m3s)?;
        check("dt_s", dt_s)?;
        if n_c == 0 {
            return Err(HydraulicsError::InvalidParam {
                name: "n_c",
                value: 0.0,
                requirement: ">= 1",
            });
        }
        if !(area_m2 * h_max_m).is_finite() {
            return Err(HydraulicsError::InvalidParam {
                name: "area_m2 * h_max_m",
                value: area_m2 * h_max_m,
                requirement: "finite",
            });
        }
        Ok(Self {
            area_m2,
            h_max_m,
            q_max_m3s,
            dt_s,
            n_c,
        })
    }

    /// Total storage volume at the rim (m^3).
    pub fn capacity_m3(&self) -> f64 {
        self.area_m2 * self.h_max_m
    }
}

/// Evolving plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PondState {
    /// Current water depth (m); held in `[0, h_max]` by the plant.
    pub depth_m: f64,
    /// Integer time index.
    pub step: u64,
    /// Cumulative spilled volume (m^3); never decreases.
    pub overflow_total_m3: f64,
}

impl PondState {
    pub fn new(depth_m: f64) -> Self {
        Self {
            depth_m,
            step: 0,
            overflow_total_m3: 0.0,
        }
    }
}

/// One endpoint sample of the flows through the pond.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowSample {
    pub inflow_m3s: f64,
    pub outflow_m3s: f64,
}

/// Result of advancing the plant by one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteOutcome {
    pub state: PondState,
    /// End-of-interval outflow actually achieved (m^3/s); never above the command.
    pub realized_outflow_m3s: f64,
    /// Volume spilled over the rim during this interval (m^3).
    pub overflow_step_m3: f64,
}

fn check_flow(name: &'static str, value: f64) -> Result<(), HydraulicsError> {
    if !value.is_finite() || value < 0.0 {
        return Err(HydraulicsError::BadFlow { name, value });
    }
    Ok(())
}

/// Advance the pond over one interval with endpoint flows
/// `(inflow_prev, inflow_now)` and `(outflow_prev, outflow_cmd)`.
///
/// The commanded outflow is reduced when the pond cannot sustain it: the
/// realized value is capped at the largest end-of-interval outflow that keeps
/// the trapezoidal volume ledger non-negative, including the half-step of
/// outflow the endpoint scheme carries into the next interval (with the rim
/// clamp of an overtopping interval taken into account). Under that cap an
/// emptying pond reaches exactly zero depth without the ledger ever booking
/// water that was not stored. Levels above the rim are clamped to `h_max`
/// and the excess is returned as overflow.
pub fn route_step(
    state: &PondState,
    params: &PondParams,
    inflow_prev: f64,
    inflow_now: f64,
    outflow_prev: f64,
    outflow_cmd: f64,
) -> Result<RouteOutcome, HydraulicsError> {
    check_flow("inflow_prev", inflow_prev)?;
    check_flow("inflow_now", inflow_now)?;
    check_flow("outflow_prev", outflow_prev)?;
    check_flow("outflow_cmd", outflow_cmd)?;

    let a = params.area_m2;
    let dt = params.dt_s;

    // Ledger carry: stored volume plus the half-step of flow the trapezoidal
    // endpoints still owe this interval. Non-negative whenever the previous
    // interval was routed through this same cap.
    let carry_m3 = a * state.depth_m + 0.5 * dt * (inflow_prev - outflow_prev);
    // Largest end-of-interval outflow that leaves the next carry non-negative.
    // Below `rim_flow` the interval overtops and the stored volume backing
    // future outflow is pinned at the rim, which loosens the slope of the
    // carry in the outflow; the cap switches branch accordingly.
    let rim_flow =
        2.0 * a / dt * (state.depth_m - params.h_max_m) + inflow_prev + inflow_now - outflow_prev;
    let no_spill_cap = inflow_now + carry_m3 / dt;
    let outflow_cap = if no_spill_cap >= rim_flow {
        no_spill_cap
    } else {
        inflow_now + 2.0 * a * params.h_max_m / dt
    }
    .max(0.0);
    let realized = outflow_cmd.min(outflow_cap);

    let unclamped =
        state.depth_m + (dt / (2.0 * a)) * ((inflow_prev + inflow_now) - (outflow_prev + realized));

    let (depth_m, overflow_step_m3) = if unclamped > params.h_max_m {
        let excess = unclamped - params.h_max_m;
        if excess > DEPTH_SNAP_M {
            (params.h_max_m, a * excess)
        } else {
            (params.h_max_m, 0.0)
        }
    } else if unclamped < 0.0 {
        // Reachable only when the caller violates the carry precondition.
        (0.0, 0.0)
    } else {
        (unclamped, 0.0)
    };

    Ok(RouteOutcome {
        state: PondState {
            depth_m,
            step: state.step + 1,
            overflow_total_m3: state.overflow_total_m3 + overflow_step_m3,
        },
        realized_outflow_m3s: realized,
        overflow_step_m3,
    })
}

/// Cap for an instantaneous outflow set at the very first sample, before any
/// interval exists: it may not exceed the current inflow plus the flux that
/// would drain the stored volume within half an interval.
pub fn initial_outflow_cap(params: &PondParams, depth_m: f64, inflow_now: f64) -> f64 {
    (inflow_now + 2.0 * params.area_m2 * depth_m / params.dt_s).max(0.0)
}

/// Stored volume `A * H` (m^3).
pub fn stored_volume(state: &PondState, params: &PondParams) -> f64 {
    params.area_m2 * state.depth_m
}
