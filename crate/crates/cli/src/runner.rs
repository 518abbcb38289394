//! Command execution: builds models from configuration, runs the
//! requested pipeline, and persists records, time series, and a meta
//! file capturing the full resolved configuration.

use crate::config::{CliArgs, Command, ConfResult, Config, ConfigError, parse_factors, parse_matrix};
use qsf_core::algebra::GradedOperator;
use qsf_core::classical::{
    GridDensity, GridSpec, LinearGaussianModel, kalman_run, ks_grid_run, simulate_linear,
};
use qsf_core::dynamics::{ConditionalState, StateDiagnostics, evolve_master};
use qsf_core::models::{
    DetectorParams, DotParams, SystemModel, dot_initial, dot_observables, photodetector,
    photodetector_initial, photodetector_observables, quantum_dot,
};
use qsf_core::stochastics::{FilterRun, run_ensemble, run_filter, simulate_record};
use qsf_core::tabular::{
    expectation_columns, fmt_f64, read_continuous_record_path, read_record_path, write_density_path,
    write_filter_run_path, write_record_path, write_timeseries_path,
    write_continuous_record_path,
};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "QSF_OUTPUT_ROOT";

/// Failure modes with their process exit codes.
#[derive(Debug)]
pub enum RunError {
    /// Exit 2: configuration or input problems.
    Config(String),
    /// Exit 3: invariant violation, degenerate ratio, or boundary leak,
    /// with the failing step reported by the message.
    Invariant(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "{m}"),
            Self::Invariant(m) => write!(f, "{m}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Invariant(_) => 3,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

fn core_err(e: qsf_core::Error) -> RunError {
    use qsf_core::Error as E;
    match &e {
        E::InvariantViolation { .. }
        | E::DegenerateRatio { .. }
        | E::BoundaryMassLeak { .. } => RunError::Invariant(e.to_string()),
        _ => RunError::Config(e.to_string()),
    }
}

type RunResult<T> = Result<T, RunError>;

struct Meta {
    entries: BTreeMap<String, String>,
}

impl Meta {
    fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn put_f64(&mut self, key: &str, value: f64) {
        self.put(key, fmt_f64(value));
    }

    fn put_diagnostics(&mut self, d: &StateDiagnostics) {
        self.put_f64("invariants.worst_trace_error", d.trace_error);
        self.put_f64("invariants.worst_min_eigenvalue", d.min_eigenvalue);
        self.put_f64("invariants.worst_evenness", d.evenness_defect);
        self.put_f64("invariants.worst_hermiticity", d.hermiticity_defect);
    }

    fn write(&self, path: &Path) -> RunResult<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push_str(" = ");
            text.push_str(v);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| RunError::Config(format!("write meta: {e}")))?;
        Ok(())
    }
}

/// A quantum model with its named operator catalog and initial state.
struct QuantumSetup {
    model: SystemModel,
    rho0: ConditionalState,
    observables: Vec<(String, GradedOperator)>,
}

fn catalog_lookup(
    catalog: &[(&str, &GradedOperator)],
    names: &[String],
) -> ConfResult<Vec<(String, GradedOperator)>> {
    let mut out = Vec::new();
    for name in names {
        match catalog.iter().find(|(n, _)| n == name) {
            Some((n, op)) => out.push((n.to_string(), (*op).clone())),
            None => {
                let known: Vec<&str> = catalog.iter().map(|(n, _)| *n).collect();
                return Err(ConfigError(format!(
                    "unknown observable {name:?}; catalog: {}",
                    known.join(", ")
                )));
            }
        }
    }
    Ok(out)
}

fn observable_names(cfg: &Config, default: &str) -> Vec<String> {
    cfg.get("observables")
        .map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_else(|| vec![default.to_string()])
}

fn build_quantum(cfg: &Config) -> RunResult<QuantumSetup> {
    let preset = cfg.require("model.preset")?;
    match preset {
        "dot" => {
            let p = DotParams::new(
                cfg.require_f64("model.gamma_l")?,
                cfg.require_f64("model.gamma_r")?,
            )
            .map_err(core_err)?;
            let model = quantum_dot(&p);
            let n0 = cfg.get_f64("init.occupation")?.unwrap_or(0.0);
            let rho0 = dot_initial(n0).map_err(core_err)?;
            let obs = dot_observables();
            let catalog = [("n", &obs.n)];
            let observables =
                catalog_lookup(&catalog, &observable_names(cfg, "n"))?;
            Ok(QuantumSetup {
                model,
                rho0,
                observables,
            })
        }
        "photodetector" => {
            let p = DetectorParams::new(
                cfg.require_f64("model.kappa")?,
                cfg.require_f64("model.gamma")?,
                cfg.require_f64("model.gamma0")?,
                cfg.require_f64("model.gamma1")?,
            )
            .map_err(core_err)?;
            let model = photodetector(&p);
            let excited = cfg.get_f64("init.excited")?.unwrap_or(1.0);
            let rho0 = photodetector_initial(excited).map_err(core_err)?;
            let obs = photodetector_observables();
            let catalog = [
                ("n", &obs.n),
                ("s22", &obs.s22),
                ("s12p", &obs.s12p),
                ("s11pm", &obs.s11pm),
                ("s22pm", &obs.s22pm),
                ("s33pm", &obs.s33pm),
                ("s11", &obs.s11),
                ("s33", &obs.s33),
            ];
            let observables =
                catalog_lookup(&catalog, &observable_names(cfg, "n"))?;
            Ok(QuantumSetup {
                model,
                rho0,
                observables,
            })
        }
        "custom" => {
            let space = parse_factors(cfg.require("model.factors")?)?;
            let op_or = |key: &str, default: GradedOperator| -> RunResult<GradedOperator> {
                match cfg.get(key) {
                    Some(v) => Ok(parse_matrix(v, &space)?),
                    None => Ok(default),
                }
            };
            let zero = GradedOperator::zero(space.clone());
            let id = GradedOperator::identity(space.clone());
            let model = SystemModel::new(
                space.clone(),
                op_or("model.h", zero.clone())?,
                op_or("model.s", id.clone())?,
                op_or("model.l", zero.clone())?,
                op_or("model.s0", id)?,
                op_or("model.l0", zero.clone())?,
                op_or("model.l1", zero)?,
            )
            .map_err(core_err)?;
            let rho_op = parse_matrix(cfg.require("init.rho")?, &space)?;
            let rho0 = ConditionalState::new(rho_op.matrix().clone(), space.clone())
                .map_err(core_err)?;
            // Custom observables come from `observable.<name>` keys.
            let mut declared: Vec<(String, GradedOperator)> = Vec::new();
            for key in cfg.keys_with_prefix("observable.") {
                let name = key.trim_start_matches("observable.").to_string();
                let op = parse_matrix(cfg.require(&key)?, &space)?;
                declared.push((name, op));
            }
            declared.sort_by(|a, b| a.0.cmp(&b.0));
            let observables = match cfg.get("observables") {
                None => declared,
                Some(list) => {
                    let refs: Vec<(&str, &GradedOperator)> = declared
                        .iter()
                        .map(|(n, o)| (n.as_str(), o))
                        .collect();
                    let names: Vec<String> = list
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    catalog_lookup(&refs, &names)?
                }
            };
            Ok(QuantumSetup {
                model,
                rho0,
                observables,
            })
        }
        other => Err(RunError::Config(format!(
            "config error: unknown model preset {other:?} (expected dot|photodetector|linear|custom)"
        ))),
    }
}

fn build_linear(cfg: &Config) -> RunResult<LinearGaussianModel> {
    let preset = cfg.require("model.preset")?;
    if preset != "linear" {
        return Err(RunError::Config(format!(
            "config error: command needs model.preset = linear, got {preset:?}"
        )));
    }
    let mut model = LinearGaussianModel::new(
        cfg.require_f64("model.a")?,
        cfg.require_f64("model.c")?,
        cfg.get_f64("model.xi0_mean")?.unwrap_or(0.0),
        cfg.get_f64("model.xi0_var")?.unwrap_or(1.0),
    )
    .map_err(core_err)?;
    if let Some(false) = cfg.get_bool("model.process_noise")? {
        model = model.without_process_noise();
    }
    Ok(model)
}

struct RunGrid {
    t_final: f64,
    dt: f64,
}

fn run_grid(cfg: &Config) -> RunResult<RunGrid> {
    Ok(RunGrid {
        t_final: cfg.require_f64("run.t")?,
        dt: cfg.require_f64("run.dt")?,
    })
}

fn worst_diagnostics(states: &[ConditionalState]) -> StateDiagnostics {
    states
        .iter()
        .map(|s| s.diagnostics())
        .fold(StateDiagnostics::default(), |acc, d| acc.merge(&d))
}

fn filter_outputs(
    out: &Path,
    run: &FilterRun,
    setup: &QuantumSetup,
    meta: &mut Meta,
) -> RunResult<Vec<&'static str>> {
    let columns = expectation_columns(run.states(), &setup.observables).map_err(core_err)?;
    write_timeseries_path(out.join("timeseries.csv"), run.times(), &columns).map_err(core_err)?;
    write_filter_run_path(out.join("filter.csv"), run, &setup.observables).map_err(core_err)?;
    meta.put_diagnostics(&run.worst_diagnostics());
    meta.put_f64("innovations.final", run.w_final());
    Ok(vec!["timeseries.csv", "filter.csv"])
}

/// Executes one command; returns the resolved output directory.
pub fn run(args: &CliArgs) -> RunResult<PathBuf> {
    let cfg = Config::load(args.config_path.as_deref().expect("checked in parse"))?;

    // The command comes from the command line, the config, or both in
    // agreement.
    let config_command = cfg.get("command").map(Command::parse).transpose()?;
    let cli_command = args
        .command
        .as_deref()
        .map(Command::parse)
        .transpose()?;
    let command = match (cli_command, config_command) {
        (Some(a), Some(b)) if a != b => {
            return Err(RunError::Config(format!(
                "config error: command line says {:?}, config says {:?}",
                a.name(),
                b.name()
            )));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(RunError::Config(
                "config error: no command given (flag or `command =` key)".into(),
            ));
        }
    };

    let config_seed = cfg.get_u64("run.seed")?;
    let seed = args.seed_override.or(config_seed).unwrap_or(0);
    let trajectory_id = cfg.get_u64("run.trajectory_id")?.unwrap_or(0);

    let config_out = cfg.get("output_dir").map(PathBuf::from);
    let out_dir: PathBuf = match &args.out_override {
        Some(p) => p.clone(),
        None => match config_out {
            Some(p) => p,
            None => std::env::var(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|_| PathBuf::from(".")),
        },
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| RunError::Config(format!("cannot create output dir: {e}")))?;

    let mut meta = Meta::new();
    meta.put("command", command.name());
    meta.put("run.effective_seed", seed.to_string());

    let mut outputs: Vec<&'static str> = Vec::new();
    match command {
        Command::Master => {
            let setup = build_quantum(&cfg)?;
            let grid = run_grid(&cfg)?;
            let run = evolve_master(&setup.model, &setup.rho0, grid.t_final, grid.dt)
                .map_err(core_err)?;
            let columns =
                expectation_columns(run.states(), &setup.observables).map_err(core_err)?;
            write_timeseries_path(out_dir.join("timeseries.csv"), run.times(), &columns)
                .map_err(core_err)?;
            meta.put_diagnostics(&worst_diagnostics(run.states()));
            outputs.push("timeseries.csv");
        }
        Command::Simulate => {
            let setup = build_quantum(&cfg)?;
            let grid = run_grid(&cfg)?;
            let (record, run) = simulate_record(
                &setup.model,
                &setup.rho0,
                grid.t_final,
                grid.dt,
                seed,
                trajectory_id,
            )
            .map_err(core_err)?;
            write_record_path(out_dir.join("record.csv"), &record).map_err(core_err)?;
            outputs.push("record.csv");
            meta.put("record.total_counts", record.total_counts().to_string());
            outputs.extend(filter_outputs(&out_dir, &run, &setup, &mut meta)?);
        }
        Command::Filter => {
            let setup = build_quantum(&cfg)?;
            let record_path = cfg.require("record_path")?;
            let record = read_record_path(record_path).map_err(core_err)?;
            let run = run_filter(&setup.model, &setup.rho0, &record).map_err(core_err)?;
            meta.put("record.total_counts", record.total_counts().to_string());
            outputs.extend(filter_outputs(&out_dir, &run, &setup, &mut meta)?);
        }
        Command::Ensemble => {
            let setup = build_quantum(&cfg)?;
            let grid = run_grid(&cfg)?;
            let n_traj = cfg
                .get_usize("run.trajectories")?
                .ok_or(ConfigError("missing run.trajectories".into()))?;
            let ops: Vec<GradedOperator> =
                setup.observables.iter().map(|(_, op)| op.clone()).collect();
            let stats = run_ensemble(
                &setup.model,
                &setup.rho0,
                grid.t_final,
                grid.dt,
                seed,
                n_traj,
                &ops,
            )
            .map_err(core_err)?;
            let mut columns = Vec::new();
            for ((name, _), obs) in setup.observables.iter().zip(&stats.observables) {
                columns.push((format!("{name}_mean"), obs.mean.clone()));
                columns.push((format!("{name}_se"), obs.se.clone()));
            }
            write_timeseries_path(out_dir.join("ensemble.csv"), &stats.times, &columns)
                .map_err(core_err)?;
            meta.put("ensemble.trajectories", stats.n_trajectories.to_string());
            meta.put_f64("ensemble.w_mean", stats.w_mean);
            meta.put_f64("ensemble.w_std", stats.w_std);
            meta.put_diagnostics(&stats.worst_diagnostics);
            outputs.push("ensemble.csv");
        }
        Command::Kalman => {
            let model = build_linear(&cfg)?;
            let (record, truth) = match cfg.get("record_path") {
                Some(path) => (read_continuous_record_path(path).map_err(core_err)?, None),
                None => {
                    let grid = run_grid(&cfg)?;
                    let (path, record) =
                        simulate_linear(&model, grid.t_final, grid.dt, seed, trajectory_id)
                            .map_err(core_err)?;
                    write_continuous_record_path(out_dir.join("record.csv"), &record)
                        .map_err(core_err)?;
                    outputs.push("record.csv");
                    (record, Some(path))
                }
            };
            let run = kalman_run(&model, &record).map_err(core_err)?;
            let mut columns = vec![
                ("xi_hat".to_string(), run.xi_hat.clone()),
                ("sigma".to_string(), run.sigma.clone()),
            ];
            if let Some(path) = truth {
                columns.push(("xi_true".to_string(), path));
            }
            write_timeseries_path(out_dir.join("timeseries.csv"), &run.times, &columns)
                .map_err(core_err)?;
            meta.put_f64("kalman.sigma_final", *run.sigma.last().unwrap());
            outputs.push("timeseries.csv");
        }
        Command::KsGrid => {
            let model = build_linear(&cfg)?;
            let record = match cfg.get("record_path") {
                Some(path) => read_continuous_record_path(path).map_err(core_err)?,
                None => {
                    let grid = run_grid(&cfg)?;
                    let (_, record) =
                        simulate_linear(&model, grid.t_final, grid.dt, seed, trajectory_id)
                            .map_err(core_err)?;
                    write_continuous_record_path(out_dir.join("record.csv"), &record)
                        .map_err(core_err)?;
                    outputs.push("record.csv");
                    record
                }
            };
            let spec = GridSpec::new(
                cfg.require_f64("grid.x_min")?,
                cfg.require_f64("grid.x_max")?,
                cfg.get_usize("grid.nx")?
                    .ok_or(ConfigError("missing grid.nx".into()))?,
            )
            .map_err(core_err)?;
            let stride = cfg.get_usize("grid.snapshot_stride")?.unwrap_or(0);
            let p0 = GridDensity::gaussian(spec, model.xi0_mean, model.xi0_var)
                .map_err(core_err)?;
            let a = model.a;
            let c = model.c;
            let run = ks_grid_run(|x| a * x, |x| c * x, &record, p0, stride)
                .map_err(core_err)?;
            write_timeseries_path(
                out_dir.join("timeseries.csv"),
                &run.times,
                &[("mean".to_string(), run.means.clone())],
            )
            .map_err(core_err)?;
            outputs.push("timeseries.csv");
            for (step, density) in &run.snapshots {
                let name = format!("density_{step:08}.csv");
                write_density_path(out_dir.join(&name), density).map_err(core_err)?;
            }
            write_density_path(out_dir.join("density_final.csv"), &run.final_density)
                .map_err(core_err)?;
            outputs.push("density_final.csv");
            meta.put("ksgrid.snapshots", run.snapshots.len().to_string());
            meta.put_f64("ksgrid.final_mass", run.final_density.mass());
        }
    }

    for (k, v) in cfg.entries() {
        meta.put(&format!("config.{k}"), v.clone());
    }
    outputs.push("meta");
    outputs.sort_unstable();
    meta.put("outputs", outputs.join(","));
    meta.put("invariants.ok", "true");
    cfg.finish()?;
    meta.write(&out_dir.join("meta"))?;
    Ok(out_dir)
}
