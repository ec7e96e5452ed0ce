//! Command-line driver: simulate a controlled pond, compare against the
//! static baseline, inspect a one-shot plan, or self-check on bundled
//! fixtures.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (files, parsing,
//! configuration), 3 internal/numerical error.

use clap::{Parser, Subcommand, ValueEnum};
use pondctl::controller::{run_simulation, ControlError, SimulationTrace};
use pondctl::optimizer::{
    build_lp, lp_variable_names, min_release_lower_bound, plan_outflows, PlanError,
};
use pondctl::report::{
    emit_trace_csv, metrics, render_comparison, render_report, static_baseline, ReportError,
    StaticBaselineSpec,
};
use pondctl::scenario::{load_config, load_series_csv, LoadedConfig, Scenario, ScenarioError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pondctl",
    version,
    about = "Rolling-horizon outlet control simulator for stormwater detention ponds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    Passthrough,
    Orifice,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the controlled pond on a scenario and write the trace CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Inflow series CSV (`time_s,value` in m^3/s).
        #[arg(long, conflicts_with = "rain")]
        inflow: Option<PathBuf>,
        /// Rainfall series CSV (`time_s,value` in mm per step); needs the
        /// catchment keys in the config.
        #[arg(long)]
        rain: Option<PathBuf>,
        /// Output trace CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Enable the first-order TSS removal estimate with this rate (1/s).
        #[arg(long)]
        tss_k: Option<f64>,
    },
    /// Run dynamic control and a static baseline on the same inflow and
    /// report the deltas. Traces go to `<out>.dynamic.csv` and
    /// `<out>.static.csv`.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "rain")]
        inflow: Option<PathBuf>,
        #[arg(long)]
        rain: Option<PathBuf>,
        /// Output path prefix for the two traces.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "passthrough")]
        baseline: BaselineArg,
        /// Discharge coefficient times orifice area (m^2) for the orifice
        /// baseline.
        #[arg(long)]
        orifice_ca: Option<f64>,
        #[arg(long)]
        tss_k: Option<f64>,
    },
    /// Solve one horizon plan from a depth and a forecast series and print
    /// the schedule.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Forecast inflow CSV; padded with zeros (or truncated) to the
        /// horizon length.
        #[arg(long)]
        inflow: PathBuf,
        /// Initial depth (m); defaults to the config's `initial_depth_m`.
        #[arg(long)]
        depth: Option<f64>,
        /// Also dump the assembled LP in plain text to this path.
        #[arg(long)]
        emit_lp: Option<PathBuf>,
    },
    /// Self-check the solver and plant on bundled fixtures.
    Validate,
}

enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Hydraulics(_) => Failure::Internal(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Config(_) => Failure::Data(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_scenario(
    cfg: &LoadedConfig,
    inflow: Option<&Path>,
    rain: Option<&Path>,
) -> Result<Scenario, Failure> {
    match (inflow, rain) {
        (Some(path), None) => {
            let ts = load_series_csv(path, cfg.pond.dt_s)?;
            Ok(Scenario::from_inflow(
                &path.display().to_string(),
                ts.start_time_s,
                ts.dt_s,
                ts.values,
            )?)
        }
        (None, Some(path)) => {
            let catchment = cfg.catchment.ok_or_else(|| {
                Failure::Data(format!(
                    "{}: rainfall input needs catchment_area_m2, runoff_coefficient and \
                     reservoir_tau_s in the config",
                    path.display()
                ))
            })?;
            let ts = load_series_csv(path, cfg.pond.dt_s)?;
            Ok(Scenario::from_rainfall(
                &path.display().to_string(),
                ts.start_time_s,
                ts.dt_s,
                ts.values,
                &catchment,
            )?)
        }
        _ => Err(Failure::Usage(
            "exactly one of --inflow or --rain is required".into(),
        )),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            inflow,
            rain,
            out,
            tss_k,
        } => {
            let cfg = load_config(&config)?;
            let scenario = load_scenario(&cfg, inflow.as_deref(), rain.as_deref())?;
            let trace = run_simulation(&scenario, &cfg.pond, &cfg.controller, cfg.initial_depth_m)?;
            emit_trace_csv(&trace, &out)?;
            let report = metrics(&trace, &cfg.pond, &cfg.controller, tss_k)?;
            print!("{}", render_report("dynamic control", &report));
            println!("trace written to {}", out.display());
            Ok(())
        }
        Command::Compare {
            config,
            inflow,
            rain,
            out,
            baseline,
            orifice_ca,
            tss_k,
        } => {
            let cfg = load_config(&config)?;
            let scenario = load_scenario(&cfg, inflow.as_deref(), rain.as_deref())?;
            let spec = match baseline {
                BaselineArg::Passthrough => StaticBaselineSpec::Passthrough,
                BaselineArg::Orifice => {
                    let ca = orifice_ca.ok_or_else(|| {
                        Failure::Usage("--baseline orifice requires --orifice-ca".into())
                    })?;
                    if !(ca.is_finite() && ca > 0.0) {
                        return Err(Failure::Usage(format!(
                            "--orifice-ca must be finite and > 0, got {ca}"
                        )));
                    }
                    StaticBaselineSpec::Orifice {
                        coefficient_area_m2: ca,
                    }
                }
            };

            let dynamic =
                run_simulation(&scenario, &cfg.pond, &cfg.controller, cfg.initial_depth_m)?;
            let fixed = static_baseline(&scenario, &cfg.pond, spec, cfg.initial_depth_m)?;

            let dynamic_path = out.with_extension("dynamic.csv");
            let static_path = out.with_extension("static.csv");
            emit_trace_csv(&dynamic, &dynamic_path)?;
            emit_trace_csv(&fixed, &static_path)?;

            let dyn_report = metrics(&dynamic, &cfg.pond, &cfg.controller, tss_k)?;
            let sta_report = metrics(&fixed, &cfg.pond, &cfg.controller, tss_k)?;
            print!("{}", render_report("dynamic control", &dyn_report));
            print!("{}", render_report("static baseline", &sta_report));
            print!("{}", render_comparison(&dyn_report, &sta_report));
            println!(
                "traces written to {} and {}",
                dynamic_path.display(),
                static_path.display()
            );
            Ok(())
        }
        Command::Plan {
            config,
            inflow,
            depth,
            emit_lp,
        } => {
            let cfg = load_config(&config)?;
            let ts = load_series_csv(&inflow, cfg.pond.dt_s)?;
            let mut forecast = ts.values;
            forecast.resize(cfg.pond.n_c + 1, 0.0);
            let depth = depth.unwrap_or(cfg.initial_depth_m);

            if let Some(path) = emit_lp.as_deref() {
                let lp = build_lp(&cfg.pond, depth, &forecast).map_err(plan_failure)?;
                pondctl::report::write_lp_text(&lp, &lp_variable_names(cfg.pond.n_c, false), path)?;
                println!("lp written to {}", path.display());
            }

            match plan_outflows(&cfg.pond, depth, &forecast) {
                Ok(schedule) => {
                    println!(
                        "plan: total release {:.3} m^3, peak outflow {:.6} m^3/s, lower bound {:.3} m^3",
                        schedule.total_release_volume_m3,
                        schedule.peak_outflow_m3s,
                        min_release_lower_bound(&cfg.pond, depth, &forecast),
                    );
                    println!("time_s,outflow_m3s,depth_m");
                    for (t, (q, h)) in schedule.outflows.iter().zip(&schedule.depths).enumerate() {
                        println!(
                            "{},{:.9},{:.6}",
                            ts.start_time_s + t as u64 * cfg.pond.dt_s as u64,
                            q,
                            h
                        );
                    }
                    Ok(())
                }
                Err(PlanError::CapacityExceeded { deficit_m3 }) => {
                    println!(
                        "plan: infeasible even at q_max; minimal capacity deficit {deficit_m3:.3} m^3"
                    );
                    Ok(())
                }
                Err(e) => Err(plan_failure(e)),
            }
        }
        Command::Validate => validate(),
    }
}

fn plan_failure(e: PlanError) -> Failure {
    match e {
        PlanError::Solver(_) | PlanError::Degenerate(_) => Failure::Internal(e.to_string()),
        other => Failure::Data(other.to_string()),
    }
}

/// Built-in checks over embedded fixtures; exit 0 when all pass.
fn validate() -> Result<(), Failure> {
    use pondctl::controller::ControllerConfig;
    use pondctl::hydraulics::PondParams;

    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {}", if ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            failures += 1;
        }
    };

    // Plant arithmetic on a hand-checked step.
    {
        use pondctl::hydraulics::{route_step, PondState};
        let p = PondParams::new(100.0, 2.0, 10.0, 300.0, 4).map_err(internal)?;
        let out = route_step(&PondState::new(1.9), &p, 1.0, 1.0, 0.0, 0.0).map_err(internal)?;
        check(
            "plant overflow accounting",
            (out.state.depth_m - 2.0).abs() < 1e-12 && (out.overflow_step_m3 - 290.0).abs() < 1e-9,
        );
    }

    // Planner against the analytic release bound.
    {
        let p = PondParams::new(100.0, 1.0, 10.0, 300.0, 4).map_err(internal)?;
        let forecast = [0.0, 0.5, 0.5, 0.0, 0.0];
        let bound = min_release_lower_bound(&p, 0.0, &forecast);
        let plan = plan_outflows(&p, 0.0, &forecast).map_err(plan_failure)?;
        check(
            "planner meets analytic release bound",
            (plan.total_release_volume_m3 - bound).abs() <= 1e-8 * bound.max(1.0),
        );
        check(
            "planned schedule respects balance rows",
            plan.balance_residual_m3(&p, &forecast) <= 1e-6,
        );
    }

    // Rule partition on a grid.
    {
        use pondctl::rules::{select_rule, DryContext, RuleVariant};
        let p = PondParams::new(51245.833, 1.2, 2.54, 300.0, 720).map_err(internal)?;
        let mut ok = true;
        for te in [0.0, 3600.0, 24_211.0] {
            for wait in [0.0, 1800.0, 3600.0, 75_000.0, 96_211.0, 200_000.0] {
                let d = select_rule(
                    &DryContext {
                        t_next_rain_s: wait,
                        t_f_s: 0.0,
                        now_s: 600.0,
                        t_e_s: te,
                        settle_time_s: 72_000.0,
                    },
                    &p,
                );
                let expected = if wait <= te {
                    matches!(d.variant, RuleVariant::EmptyAtMax)
                } else if wait <= te + 72_000.0 {
                    matches!(d.variant, RuleVariant::ProportionalRelease(_))
                } else {
                    matches!(d.variant, RuleVariant::HoldClosed)
                };
                ok &= expected && (0.0..=p.q_max_m3s).contains(&d.outflow_m3s);
            }
        }
        check("dry rules partition the timeline", ok);
    }

    // End-to-end determinism on a small embedded storm.
    {
        let p = PondParams::new(100.0, 1.0, 10.0, 300.0, 8).map_err(internal)?;
        let cfg = ControllerConfig {
            anticipation_horizon_s: 8.0 * 300.0,
            ..ControllerConfig::default()
        };
        let inflow = vec![0.0, 0.4, 0.8, 0.8, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let sc = Scenario::from_inflow("embedded", 0, 300.0, inflow).map_err(data)?;
        let a = run_simulation(&sc, &p, &cfg, 0.0)?;
        let b = run_simulation(&sc, &p, &cfg, 0.0)?;
        check(
            "simulation is deterministic",
            pondctl::report::trace_csv_string(&a) == pondctl::report::trace_csv_string(&b),
        );
        check(
            "controlled storm spills nothing",
            a.overflow_total_m3 == 0.0,
        );
        check("trace volume ledger closes", mass_closes(&a, &p));
    }

    if failures == 0 {
        Ok(())
    } else {
        Err(Failure::Internal(format!(
            "{failures} validation check(s) failed"
        )))
    }
}

fn mass_closes(trace: &SimulationTrace, params: &pondctl::hydraulics::PondParams) -> bool {
    let v0 = params.area_m2 * trace.steps.first().map(|s| s.depth_m).unwrap_or(0.0);
    let v1 = params.area_m2 * trace.steps.last().map(|s| s.depth_m).unwrap_or(0.0);
    let rhs =
        trace.total_inflow_volume_m3() - trace.total_release_volume_m3() - trace.overflow_total_m3;
    ((v1 - v0) - rhs).abs() <= 1e-6 * trace.total_inflow_volume_m3().max(1.0)
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}
