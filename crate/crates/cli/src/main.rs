//! Command-line front end: `metastab rate|simulate|verify|suite`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metastab::runner::{cmd_rate, cmd_simulate, cmd_suite, cmd_verify, error_exit_code, Overrides};
use metastab::scenario::{load_scenario_with, Scenario};
use metastab::Error;
use serde_json::json;

/// Environment variable naming the default scenario directory.
const SCENARIO_DIR_ENV: &str = "METASTAB_SCENARIOS";

#[derive(Parser)]
#[command(name = "metastab", version, about = "Rates of metastability for Fejér monotone iterations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Scenario file; a bare name is also looked up in the scenario directory.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Witness search cap, overriding the scenario's.
    #[arg(long)]
    cap: Option<u64>,
    /// Float slack, overriding the scenario's.
    #[arg(long)]
    tau: Option<f64>,
    /// Counter function as modulus JSON, e.g. '{"kind":"affine","a":1,"b":1}'.
    #[arg(long)]
    g: Option<String>,
    /// Scenario directory.
    #[arg(long, env = SCENARIO_DIR_ENV, default_value = "scenarios")]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the certificate of a scenario.
    Rate(Common),
    /// Write a trajectory as CSV plus a JSON sidecar.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a certificate and the scheme's moduli against the trajectory.
    Verify(Common),
    /// Verify every scenario in the scenario directory.
    Suite {
        #[command(flatten)]
        common: Common,
        /// Also run the scenarios in `adversarial/`.
        #[arg(long)]
        include_adversarial: bool,
        #[arg(long, default_value = "suite-report")]
        out: PathBuf,
    },
}

fn scenario_path(common: &Common) -> Result<PathBuf, Error> {
    let p = common
        .scenario
        .clone()
        .ok_or_else(|| Error::Config("--scenario is required".into()))?;
    if p.exists() {
        return Ok(p);
    }
    let in_dir = common.dir.join(&p);
    if in_dir.exists() {
        return Ok(in_dir);
    }
    Ok(common.dir.join(p).with_extension("json"))
}

fn load(common: &Common) -> Result<Scenario, Error> {
    let mut sc = load_scenario_with(&scenario_path(common)?, common.g.as_deref())?;
    overrides(common).apply(&mut sc);
    Ok(sc)
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        cap: common.cap,
        tau: common.tau,
    }
}

fn print(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn fail(e: &Error) -> ExitCode {
    let mut body = json!({ "error": e.to_string() });
    if let Error::CapExceeded {
        lower_bound: Some(lb), ..
    } = e
    {
        body["lower_bound"] = json!(lb.to_string());
    }
    eprintln!("{}", serde_json::to_string_pretty(&body).expect("errors serialize"));
    ExitCode::from(error_exit_code(e) as u8)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Rate(common) => {
            print(&cmd_rate(&load(&common)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { common, steps, out } => {
            let sc = load(&common)?;
            let steps = steps.unwrap_or(sc.checker.steps);
            let out = out.or_else(|| sc.output.clone().map(PathBuf::from)).unwrap_or_else(|| Path::new("out").into());
            let (csv, sidecar) = cmd_simulate(&sc, steps, &out)?;
            print(&json!({ "csv": csv, "sidecar": sidecar, "steps": steps }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(common) => {
            let report = cmd_verify(&load(&common)?)?;
            print(&report);
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::Suite {
            common,
            include_adversarial,
            out,
        } => {
            if common.g.is_some() {
                return Err(Error::Config("--g applies to a single scenario, not to suite".into()));
            }
            let dir = common.scenario.clone().unwrap_or(common.dir.clone());
            let report = cmd_suite(&dir, include_adversarial, &out, &overrides(&common))?;
            print(&report);
            Ok(ExitCode::from(report.exit_code() as u8))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}
