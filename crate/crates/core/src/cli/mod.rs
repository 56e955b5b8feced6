//! Command dispatch: parse a config, run one command, and persist its
//! artifacts with a manifest.

mod config;
mod io;
mod manifest;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::coeffs::GrowthClass;
use crate::error::{Error, Result};
use crate::experiments::{
    appendix_convergence, minimize_from_default, run_linear_regime, run_sublinear_regime,
    verify_identities, LinearReport, Setup, SublinearReport,
};
use crate::grid::Field;
use crate::solvers::{Classification, SolveReport};

pub use config::{
    parse_config, parse_config_str, AppendixSpec, FieldFormat, OutputSpec, RunConfig,
};
pub use io::{decode_field, encode_field, field_csv, read_field, table_csv, write_field};
pub use manifest::{
    sha256_hex, OutputEntry, RunDir, RunManifest, RunStatus, StageTiming, CONFIG_NAME,
    MANIFEST_NAME,
};

use io::num;

pub const THREADS_ENV: &str = "FRACVAR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Operator and energy identity suite.
    Verify,
    /// First Dirichlet eigenpair.
    Eig,
    /// Cone-constrained minimization.
    Solve,
    /// Minimizer, ray search and mountain pass.
    Mpass,
    /// Regime sweep over `ν` or `δ`.
    Sweep,
    /// Large-argument convergence of the weighted form.
    Appendix,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Eig => "eig",
            Command::Solve => "solve",
            Command::Mpass => "mpass",
            Command::Sweep => "sweep",
            Command::Appendix => "appendix",
        }
    }

    pub const ALL: [Command; 6] = [
        Command::Verify,
        Command::Eig,
        Command::Solve,
        Command::Mpass,
        Command::Sweep,
        Command::Appendix,
    ];
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::SolverFailure | RunStatus::Error => 1,
            RunStatus::ConfigError => 2,
        }
    }
}

/// Errors that stem from the configuration rather than from a run.
pub fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidDomain(_)
            | Error::Json(_)
    )
}

/// Command preconditions beyond schema validation.
fn check_command(cfg: &RunConfig, command: Command) -> Result<()> {
    let reaction = || {
        cfg.reaction
            .map(crate::coeffs::make_reaction)
            .transpose()?
            .ok_or_else(|| {
                Error::Config(format!("`{}` needs a `reaction` section", command.name()))
            })
    };
    match command {
        Command::Mpass => {
            if reaction()?.class != GrowthClass::Linear {
                return Err(Error::Config(
                    "`mpass` needs a linear-growth reaction".into(),
                ));
            }
        }
        Command::Sweep => {
            reaction()?;
        }
        _ => {}
    }
    Ok(())
}

struct Outcome {
    status: RunStatus,
    summary: Value,
}

fn write_solution(run: &mut RunDir, cfg: &RunConfig, stem: &str, u: &Field) -> Result<()> {
    if cfg.output.field_format != FieldFormat::Csv {
        run.write(&format!("{stem}.fvfd"), encode_field(u))?;
    }
    if cfg.output.field_format != FieldFormat::Binary {
        run.write(&format!("{stem}.csv"), field_csv(u))?;
    }
    Ok(())
}

fn history_csv(report: &SolveReport) -> String {
    let rows: Vec<Vec<String>> = report
        .energy_history
        .iter()
        .enumerate()
        .map(|(k, e)| vec![k.to_string(), num(*e)])
        .collect();
    table_csv(&["iteration", "energy"], &rows)
}

fn class_name(c: Classification) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn run_verify(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let report = run.time("verify", || verify_identities(&cfg.verify, cfg.seed))?;
    run.write_json("verify.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                num(c.value),
                num(c.tolerance),
                c.passed.to_string(),
            ]
        })
        .collect();
    run.write(
        "identities.csv",
        table_csv(&["check", "value", "tolerance", "passed"], &rows),
    )?;
    let rows: Vec<Vec<String>> = report
        .composition
        .iter()
        .map(|r| {
            vec![
                r.dim.to_string(),
                num(r.s),
                r.nodes.to_string(),
                num(r.residual),
            ]
        })
        .collect();
    run.write(
        "composition.csv",
        table_csv(&["dim", "s", "nodes", "residual"], &rows),
    )?;
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Outcome {
        status: if report.all_passed {
            RunStatus::Success
        } else {
            RunStatus::SolverFailure
        },
        summary: json!({ "all_passed": report.all_passed, "failed": failed }),
    })
}

fn run_eig(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let regime = cfg.regime();
    let setup = run.time("eigenpair", || Setup::new(&regime))?;
    run.write_json("eig.json", &setup.eigen)?;
    run.write("eigenpair.csv", field_csv(setup.phi1()))?;
    if cfg.output.field_format != FieldFormat::Csv {
        run.write("phi1.fvfd", encode_field(setup.phi1()))?;
    }
    Ok(Outcome {
        status: RunStatus::Success,
        summary: json!({ "lambda1": setup.lambda1(), "residual": setup.eigen.residual }),
    })
}

fn solve_summary(report: &SolveReport) -> Value {
    json!({
        "classification": report.classification,
        "energy": report.energy,
        "kkt_residual": report.kkt_residual,
        "iterations": report.iterations,
    })
}

fn run_solve(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let regime = cfg.regime();
    let setup = run.time("setup", || Setup::new(&regime))?;
    let report = run.time("solve", || {
        minimize_from_default(&setup, &setup.model, &cfg.solver)
    })?;
    run.write_json("solve.json", &report)?;
    run.write("energy_history.csv", history_csv(&report))?;
    write_solution(run, cfg, "solution", &report.solution)?;
    let mut summary = solve_summary(&report);
    summary["lambda1"] = json!(setup.lambda1());
    Ok(Outcome {
        status: if report.classification == Classification::Failed {
            RunStatus::SolverFailure
        } else {
            RunStatus::Success
        },
        summary,
    })
}

fn linear_rows(report: &LinearReport) -> Vec<Vec<String>> {
    let bound = report.smallness_bound.map(num).unwrap_or_default();
    let mut rows = Vec::new();
    for r in &report.runs {
        for (role, s) in [
            ("minimizer", Some(&r.minimizer)),
            ("saddle", r.saddle.as_ref()),
        ] {
            if let Some(s) = s {
                rows.push(vec![
                    num(r.delta),
                    role.to_string(),
                    class_name(s.classification),
                    num(s.energy),
                    num(s.kkt_residual),
                    r.second_solution.to_string(),
                    bound.clone(),
                ]);
            }
        }
    }
    rows
}

const LINEAR_HEADER: &[&str] = &[
    "delta",
    "role",
    "classification",
    "energy",
    "kkt_residual",
    "second_solution",
    "smallness_bound",
];

fn run_mpass(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let mut regime = cfg.regime();
    regime.sweep.delta.clear();
    let report = run.time("pipeline", || run_linear_regime(&regime))?;
    run.write_json("mpass.json", &report)?;
    run.write("mpass.csv", table_csv(LINEAR_HEADER, &linear_rows(&report)))?;
    let r = &report.runs[0];
    write_solution(run, cfg, "u1", &r.minimizer.solution)?;
    if let Some(s) = &r.saddle {
        write_solution(run, cfg, "u2", &s.solution)?;
    }
    Ok(Outcome {
        status: if r.second_solution {
            RunStatus::Success
        } else {
            RunStatus::SolverFailure
        },
        summary: json!({
            "lambda1": report.lambda1,
            "audit_passed": report.audit_passed,
            "geometry": r.geometry,
            "second_solution": r.second_solution,
            "minimizer": solve_summary(&r.minimizer),
            "saddle": r.saddle.as_ref().map(solve_summary),
        }),
    })
}

fn sublinear_rows(report: &SublinearReport) -> Vec<Vec<String>> {
    let nu_star = report
        .threshold
        .as_ref()
        .map(|t| num(t.nu_star))
        .unwrap_or_default();
    report
        .runs
        .iter()
        .map(|r| {
            vec![
                num(r.nu),
                class_name(r.solve.classification),
                num(r.solve.energy),
                num(r.solve.kkt_residual),
                r.nontrivial.to_string(),
                nu_star.clone(),
            ]
        })
        .collect()
}

fn run_sweep(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let regime = cfg.regime();
    let class = crate::coeffs::make_reaction(cfg.reaction.expect("checked"))?.class;
    match class {
        GrowthClass::Sublinear => {
            let report = run.time("sweep", || run_sublinear_regime(&regime))?;
            run.write_json("sweep.json", &report)?;
            run.write(
                "sweep.csv",
                table_csv(
                    &[
                        "nu",
                        "classification",
                        "energy",
                        "kkt_residual",
                        "nontrivial",
                        "nu_star",
                    ],
                    &sublinear_rows(&report),
                ),
            )?;
            if let Some(t) = &report.threshold {
                let rows: Vec<Vec<String>> = t
                    .probes
                    .iter()
                    .map(|p| {
                        vec![
                            num(p.nu),
                            p.nontrivial.to_string(),
                            num(p.energy),
                            p.iterations.to_string(),
                        ]
                    })
                    .collect();
                run.write(
                    "threshold.csv",
                    table_csv(&["nu", "nontrivial", "energy", "iterations"], &rows),
                )?;
            }
            let failed = report
                .runs
                .iter()
                .any(|r| r.solve.classification == Classification::Failed && !r.nontrivial);
            Ok(Outcome {
                status: if failed {
                    RunStatus::SolverFailure
                } else {
                    RunStatus::Success
                },
                summary: json!({
                    "lambda1": report.lambda1,
                    "audit_passed": report.audit_passed,
                    "nu_star": report.threshold.as_ref().map(|t| t.nu_star),
                }),
            })
        }
        GrowthClass::Linear => {
            let report = run.time("sweep", || run_linear_regime(&regime))?;
            run.write_json("sweep.json", &report)?;
            run.write("sweep.csv", table_csv(LINEAR_HEADER, &linear_rows(&report)))?;
            let failed = report
                .runs
                .iter()
                .any(|r| r.minimizer.classification == Classification::Failed);
            Ok(Outcome {
                status: if failed {
                    RunStatus::SolverFailure
                } else {
                    RunStatus::Success
                },
                summary: json!({
                    "lambda1": report.lambda1,
                    "audit_passed": report.audit_passed,
                    "smallness_bound": report.smallness_bound,
                }),
            })
        }
    }
}

fn run_appendix(cfg: &RunConfig, run: &mut RunDir) -> Result<Outcome> {
    let report = run.time("appendix", || appendix_convergence(&cfg.appendix()))?;
    run.write_json("appendix.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.t),
                num(r.value),
                num(r.limit),
                num(r.rel_error),
            ]
        })
        .collect();
    run.write(
        "appendix.csv",
        table_csv(&["n", "t", "value", "limit", "rel_error"], &rows),
    )?;
    Ok(Outcome {
        status: RunStatus::Success,
        summary: json!({
            "final_error": report.final_error,
            "nonincreasing_from_2": report.nonincreasing_from_2,
            "constant_error": report.constant_error,
        }),
    })
}

/// Run `command` into `out`, writing the config snapshot, the artifacts and
/// the manifest. Module errors are recorded in the manifest.
pub fn run_command(cfg: &RunConfig, command: Command, out: &Path) -> Result<RunManifest> {
    let config = serde_json::to_value(cfg)?;
    let mut run = RunDir::create(out)?;
    if let Err(e) = check_command(cfg, command) {
        let msg = e.to_string();
        return run.finish(
            command.name(),
            cfg.seed,
            config,
            RunStatus::ConfigError,
            Some(msg),
            Value::Null,
        );
    }
    let mut snapshot = cfg.to_json()?;
    snapshot.push('\n');
    run.write(CONFIG_NAME, snapshot)?;
    let result = match command {
        Command::Verify => run_verify(cfg, &mut run),
        Command::Eig => run_eig(cfg, &mut run),
        Command::Solve => run_solve(cfg, &mut run),
        Command::Mpass => run_mpass(cfg, &mut run),
        Command::Sweep => run_sweep(cfg, &mut run),
        Command::Appendix => run_appendix(cfg, &mut run),
    };
    let (status, error, summary) = match result {
        Ok(o) => (o.status, None, o.summary),
        Err(e) => (RunStatus::Error, Some(e.to_string()), Value::Null),
    };
    run.finish(command.name(), cfg.seed, config, status, error, summary)
}

/// Output directory: `--out` if given, else the config's `output.dir`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

/// Thread count from the flag, falling back to the environment.
pub fn thread_count(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    let k = match (flag, env) {
        (Some(k), _) => Some(k),
        (None, Some(v)) => Some(v.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?),
        (None, None) => None,
    };
    if k == Some(0) {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(k)
}

/// Manifest for a config that failed to parse, when an output directory is
/// known.
pub fn record_config_error(out: &Path, command: Command, error: &Error) -> Result<RunManifest> {
    RunDir::create(out)?.finish(
        command.name(),
        0,
        Value::Null,
        RunStatus::ConfigError,
        Some(error.to_string()),
        Value::Null,
    )
}
