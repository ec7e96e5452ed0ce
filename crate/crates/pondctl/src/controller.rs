//! Rolling-horizon orchestration of the pond outlet.
//!
//! Each simulated step the controller observes the current inflow, decides
//! wet or dry, and produces one outflow set point: wet steps re-solve the
//! horizon LP from the latest measured state, dry steps evaluate the release
//! rules. Only the first free set point of a plan is ever applied; the next
//! step re-plans from feedback.
//!
//! The plant advances with trapezoidal endpoint averaging, so the interval
//! being decided already has a realized left endpoint. Wet plans are anchored
//! on that history (previous inflow and realized outflow, with `Q(0)` pinned)
//! which makes the plan's first interval coincide with the plant's: under a
//! perfect forecast the planned depth cap is honored by the plant exactly
//! instead of within a one-interval lag.

use crate::hydraulics::{
    initial_outflow_cap, route_step, FlowSample, HydraulicsError, PondParams, PondState,
};
use crate::optimizer::{plan_outflows, plan_outflows_anchored, PlanError};
use crate::rules::{emptying_time, select_rule, DryContext, RuleVariant, TeMode};
use crate::scenario::{forecast_window, Scenario};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("configuration mismatch: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
}

/// Deterministic jitter spec for the degraded-forecast hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastNoise {
    pub seed: u64,
    /// Standard deviation of the multiplicative error per sample.
    pub relative_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ForecastMode {
    /// The true future series is visible over the anticipation horizon.
    #[default]
    Perfect,
    /// Future samples (not the current observation) carry multiplicative
    /// noise; reproducible from the seed.
    Degraded(ForecastNoise),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Total look-ahead (s); the LP horizon is `anticipation_horizon_s / dt`.
    pub anticipation_horizon_s: f64,
    /// Inflow level separating wet from dry (m^3/s); wet is strictly above.
    pub wet_threshold_m3s: f64,
    pub forecast_mode: ForecastMode,
    pub te_mode: TeMode,
    /// Required quiescent retention before a routine release (s).
    pub settle_time_s: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            anticipation_horizon_s: 216_000.0, // 60 h
            wet_threshold_m3s: 1e-3,
            forecast_mode: ForecastMode::Perfect,
            te_mode: TeMode::default(),
            settle_time_s: crate::rules::DEFAULT_SETTLE_TIME_S,
        }
    }
}

/// What the controller can see at one instant.
#[derive(Debug, Clone)]
pub struct ForecastWindow {
    /// Forecast inflows `[now .. now + n_c]`, `n_c + 1` samples.
    pub series: Vec<f64>,
    /// Time until the first forecast sample above the wet threshold (s);
    /// `f64::INFINITY` when none is in sight.
    pub t_next_rain_s: f64,
    /// Clock time at which the previous wet episode ended (s).
    pub t_f_s: f64,
    /// Current clock time (s).
    pub now_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    Wet,
    Dry,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::Wet => "wet",
            ControllerMode::Dry => "dry",
        }
    }
}

/// Wet iff the current inflow strictly exceeds the threshold.
pub fn detect_mode(current_inflow: f64, config: &ControllerConfig) -> ControllerMode {
    if current_inflow > config.wet_threshold_m3s {
        ControllerMode::Wet
    } else {
        ControllerMode::Dry
    }
}

/// Which path produced a step's set point; written into the trace for audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepTag {
    LpPlan,
    /// The horizon LP was infeasible (storm exceeds capacity at `q_max`);
    /// the controller falls back to commanding `q_max`.
    LpFallback,
    RuleEmptyAtMax,
    RuleProportional,
    RuleHoldClosed,
    StaticOrifice,
    StaticPassthrough,
}

impl StepTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepTag::LpPlan => "lp",
            StepTag::LpFallback => "lp_fallback",
            StepTag::RuleEmptyAtMax => "empty_at_max",
            StepTag::RuleProportional => "proportional",
            StepTag::RuleHoldClosed => "hold_closed",
            StepTag::StaticOrifice => "static_orifice",
            StepTag::StaticPassthrough => "static_passthrough",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "lp" => StepTag::LpPlan,
            "lp_fallback" => StepTag::LpFallback,
            "empty_at_max" => StepTag::RuleEmptyAtMax,
            "proportional" => StepTag::RuleProportional,
            "hold_closed" => StepTag::RuleHoldClosed,
            "static_orifice" => StepTag::StaticOrifice,
            "static_passthrough" => StepTag::StaticPassthrough,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Decision {
    pub mode: ControllerMode,
    pub command_m3s: f64,
    pub tag: StepTag,
}

/// One recorded simulation step.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    pub time_s: u64,
    pub inflow_m3s: f64,
    pub mode: ControllerMode,
    pub tag: StepTag,
    pub commanded_m3s: f64,
    pub realized_m3s: f64,
    pub depth_m: f64,
    pub overflow_step_m3: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub start_time_s: u64,
    pub dt_s: f64,
    pub steps: Vec<TraceStep>,
    pub overflow_total_m3: f64,
}

impl SimulationTrace {
    /// Released volume under trapezoidal averaging of the realized outflows.
    pub fn total_release_volume_m3(&self) -> f64 {
        pair_volume(self.dt_s, self.steps.iter().map(|s| s.realized_m3s))
    }

    /// Inflow volume under the same averaging.
    pub fn total_inflow_volume_m3(&self) -> f64 {
        pair_volume(self.dt_s, self.steps.iter().map(|s| s.inflow_m3s))
    }
}

fn pair_volume(dt: f64, series: impl Iterator<Item = f64>) -> f64 {
    let mut prev: Option<f64> = None;
    let mut acc = 0.0;
    for v in series {
        if let Some(p) = prev {
            acc += 0.5 * dt * (p + v);
        }
        prev = Some(v);
    }
    acc
}

/// Smallest set point that keeps the pond at or below the rim over the
/// interval being decided; zero whenever there is headroom. The wet plan
/// satisfies this by construction (its depth rows are capped), but the dry
/// rules never look at depth, so the controller enforces the floor on every
/// command: a release is always preferred over an avoidable spill.
fn capacity_relief_floor(
    state: &PondState,
    prev: Option<&FlowSample>,
    inflow_now: f64,
    params: &PondParams,
) -> f64 {
    match prev {
        None => 0.0,
        Some(fs) => {
            let need = (fs.inflow_m3s + inflow_now) - fs.outflow_m3s
                + 2.0 * params.area_m2 / params.dt_s * (state.depth_m - params.h_max_m);
            need.clamp(0.0, params.q_max_m3s)
        }
    }
}

/// Decide one set point from the latest measured state.
///
/// `prev` carries the realized left endpoint of the interval in progress;
/// `None` at the very first sample, where the plan starts free.
pub fn controller_step(
    state: &PondState,
    prev: Option<&FlowSample>,
    params: &PondParams,
    config: &ControllerConfig,
    window: &ForecastWindow,
) -> Result<Decision, ControlError> {
    let n_c = params.n_c;
    if window.series.len() != n_c + 1 {
        return Err(ControlError::Config(format!(
            "forecast window has {} samples, horizon needs {}",
            window.series.len(),
            n_c + 1
        )));
    }
    let current_inflow = window.series[0];
    let mode = detect_mode(current_inflow, config);
    let relief = capacity_relief_floor(state, prev, current_inflow, params);

    let decision = match mode {
        ControllerMode::Wet => {
            let planned = match prev {
                None => plan_outflows(params, state.depth_m, &window.series).map(|s| s.outflows[0]),
                Some(fs) => {
                    let mut series = Vec::with_capacity(n_c + 1);
                    series.push(fs.inflow_m3s);
                    series.extend_from_slice(&window.series[..n_c]);
                    plan_outflows_anchored(params, state.depth_m, fs.outflow_m3s, &series)
                        .map(|s| s.outflows[1])
                }
            };
            match planned {
                Ok(q) => Ok(Decision {
                    mode,
                    command_m3s: q,
                    tag: StepTag::LpPlan,
                }),
                Err(PlanError::CapacityExceeded { .. }) => Ok(Decision {
                    mode,
                    command_m3s: params.q_max_m3s,
                    tag: StepTag::LpFallback,
                }),
                Err(e) => Err(ControlError::Plan(e)),
            }
        }
        ControllerMode::Dry => {
            let t_e = emptying_time(state, params, config.te_mode);
            let ctx = DryContext {
                t_next_rain_s: window.t_next_rain_s,
                t_f_s: window.t_f_s,
                now_s: window.now_s,
                t_e_s: t_e,
                settle_time_s: config.settle_time_s,
            };
            let rule = select_rule(&ctx, params);
            let tag = match rule.variant {
                RuleVariant::EmptyAtMax => StepTag::RuleEmptyAtMax,
                RuleVariant::ProportionalRelease(_) => StepTag::RuleProportional,
                RuleVariant::HoldClosed => StepTag::RuleHoldClosed,
            };
            Ok(Decision {
                mode,
                command_m3s: rule.outflow_m3s,
                tag,
            })
        }
    }?;
    Ok(Decision {
        command_m3s: decision.command_m3s.max(relief),
        ..decision
    })
}

/// Step-wise simulation driver: external callers pump it one observation at
/// a time; `run_simulation` is the batch wrapper.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    params: PondParams,
    config: ControllerConfig,
    state: PondState,
    prev: Option<FlowSample>,
    k: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(
        scenario: &'a Scenario,
        params: PondParams,
        config: ControllerConfig,
        initial_depth_m: f64,
    ) -> Result<Self, ControlError> {
        if scenario.inflow.is_empty() {
            return Err(ControlError::Config("scenario has no samples".into()));
        }
        if scenario.dt_s != params.dt_s {
            return Err(ControlError::Config(format!(
                "scenario dt {} s does not match pond dt {} s",
                scenario.dt_s, params.dt_s
            )));
        }
        let ratio = config.anticipation_horizon_s / params.dt_s;
        if (ratio - params.n_c as f64).abs() > 1e-9 {
            return Err(ControlError::Config(format!(
                "anticipation horizon {} s / dt {} s = {} steps, but n_c = {}",
                config.anticipation_horizon_s, params.dt_s, ratio, params.n_c
            )));
        }
        if !(0.0..=params.h_max_m).contains(&initial_depth_m) {
            return Err(ControlError::Config(format!(
                "initial depth {initial_depth_m} m outside [0, {}]",
                params.h_max_m
            )));
        }
        Ok(Self {
            scenario,
            params,
            config,
            state: PondState::new(initial_depth_m),
            prev: None,
            k: 0,
        })
    }

    pub fn state(&self) -> &PondState {
        &self.state
    }

    /// Advance one step; `None` once the scenario is exhausted.
    pub fn step(&mut self) -> Result<Option<TraceStep>, ControlError> {
        let k = self.k;
        if k >= self.scenario.inflow.len() {
            return Ok(None);
        }
        let window = forecast_window(self.scenario, k, &self.config);
        let decision = controller_step(
            &self.state,
            self.prev.as_ref(),
            &self.params,
            &self.config,
            &window,
        )?;
        let inflow_now = self.scenario.inflow[k];
        let time_s = self.scenario.start_time_s + (k as u64) * (self.scenario.dt_s as u64);

        let row = match self.prev {
            None => {
                // First sample: no interval yet, the set point only takes
                // effect as the left endpoint of the interval that follows.
                let cap = initial_outflow_cap(&self.params, self.state.depth_m, inflow_now);
                let realized = decision.command_m3s.min(cap);
                self.prev = Some(FlowSample {
                    inflow_m3s: inflow_now,
                    outflow_m3s: realized,
                });
                TraceStep {
                    time_s,
                    inflow_m3s: inflow_now,
                    mode: decision.mode,
                    tag: decision.tag,
                    commanded_m3s: decision.command_m3s,
                    realized_m3s: realized,
                    depth_m: self.state.depth_m,
                    overflow_step_m3: 0.0,
                }
            }
            Some(prev) => {
                let outcome = route_step(
                    &self.state,
                    &self.params,
                    prev.inflow_m3s,
                    inflow_now,
                    prev.outflow_m3s,
                    decision.command_m3s,
                )?;
                self.state = outcome.state;
                self.prev = Some(FlowSample {
                    inflow_m3s: inflow_now,
                    outflow_m3s: outcome.realized_outflow_m3s,
                });
                TraceStep {
                    time_s,
                    inflow_m3s: inflow_now,
                    mode: decision.mode,
                    tag: decision.tag,
                    commanded_m3s: decision.command_m3s,
                    realized_m3s: outcome.realized_outflow_m3s,
                    depth_m: outcome.state.depth_m,
                    overflow_step_m3: outcome.overflow_step_m3,
                }
            }
        };
        self.k += 1;
        Ok(Some(row))
    }
}

/// Run the controller over a whole scenario, re-planning every step.
pub fn run_simulation(
    scenario: &Scenario,
    params: &PondParams,
    config: &ControllerConfig,
    initial_depth_m: f64,
) -> Result<SimulationTrace, ControlError> {
    let mut sim = Simulator::new(scenario, *params, *config, initial_depth_m)?;
    let mut steps = Vec::with_capacity(scenario.inflow.len());
    while let Some(row) = sim.step()? {
        steps.push(row);
    }
    Ok(SimulationTrace {
        start_time_s: scenario.start_time_s,
        dt_s: scenario.dt_s,
        steps,
        overflow_total_m3: sim.state.overflow_total_m3,
    })
}
