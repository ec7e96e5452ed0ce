//! Dry-period release rules.
//!
//! Between storms the gate is driven by three rules keyed on the time to the
//! next predicted rainfall against the pond's emptying time: empty at full
//! rate when the rain arrives sooner than the pond can drain, hold closed
//! when there is ample time to drain after the settling window, and release a
//! proportional fraction in between. All times are taken relative to "now":
//! `t_next_rain` is the wait until the next event and the elapsed time since
//! the previous event ended plays the part of the rule's reference instant.

use crate::hydraulics::{PondParams, PondState};

/// Default quiescent settling requirement: 20 h.
pub const DEFAULT_SETTLE_TIME_S: f64 = 72_000.0;

/// How the emptying time is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeMode {
    /// Stored volume over the maximum outflow: a genuine drain duration.
    #[default]
    DrainAtQmax,
    /// The legacy `H * A / H_max * 360` form, kept for comparison runs even
    /// though its units do not reduce to seconds.
    Literal360,
}

/// Everything the dry-period selector looks at.
#[derive(Debug, Clone, Copy)]
pub struct DryContext {
    /// Time until the next predicted rainfall begins (s); may be infinite.
    pub t_next_rain_s: f64,
    /// Clock time at which the previous rainfall ended (s).
    pub t_f_s: f64,
    /// Current clock time (s); `now >= t_f`.
    pub now_s: f64,
    /// Emptying time of the pond (s).
    pub t_e_s: f64,
    /// Required quiescent retention (s).
    pub settle_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleVariant {
    /// Rain arrives within the emptying time: release at `q_max`.
    EmptyAtMax,
    /// Rain arrives between `t_e` and `t_e + settle`: release the clamped
    /// fraction of `q_max` carried here.
    ProportionalRelease(f64),
    /// No rain until well past the settling window: keep the gate shut.
    HoldClosed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleDecision {
    pub variant: RuleVariant,
    pub outflow_m3s: f64,
}

/// Emptying time of the basin until the required storage is available.
pub fn emptying_time(state: &PondState, params: &PondParams, mode: TeMode) -> f64 {
    match mode {
        TeMode::DrainAtQmax => params.area_m2 * state.depth_m / params.q_max_m3s,
        TeMode::Literal360 => state.depth_m * params.area_m2 / params.h_max_m * 360.0,
    }
}

/// Select exactly one dry-period rule. The line of `t_next_rain` values is
/// partitioned closed-on-the-left: `t_next_rain <= t_e` empties at full rate,
/// `t_e < t_next_rain <= t_e + settle` releases proportionally, and anything
/// later holds closed.
pub fn select_rule(ctx: &DryContext, params: &PondParams) -> RuleDecision {
    debug_assert!(ctx.now_s >= ctx.t_f_s);
    if ctx.t_next_rain_s <= ctx.t_e_s {
        return RuleDecision {
            variant: RuleVariant::EmptyAtMax,
            outflow_m3s: params.q_max_m3s,
        };
    }
    if ctx.t_next_rain_s <= ctx.t_e_s + ctx.settle_time_s {
        let elapsed = ctx.now_s - ctx.t_f_s;
        let denom = ctx.t_next_rain_s - elapsed;
        // A non-positive denominator means the reference instant has already
        // passed the predicted event; release at full rate, matching the
        // degenerate division-by-zero clamp.
        let fraction = if denom <= 0.0 {
            1.0
        } else {
            ((ctx.t_e_s - elapsed) / denom).clamp(0.0, 1.0)
        };
        return RuleDecision {
            variant: RuleVariant::ProportionalRelease(fraction),
            outflow_m3s: fraction * params.q_max_m3s,
        };
    }
    RuleDecision {
        variant: RuleVariant::HoldClosed,
        outflow_m3s: 0.0,
    }
}
