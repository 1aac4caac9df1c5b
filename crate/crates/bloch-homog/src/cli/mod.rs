//! Batch front end.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 validation failure
//! (bad config or model), 3 numerical-quality failure.

pub mod config;
pub mod output;
mod tasks;

use crate::error::{Error, Result};
use crate::gallery;
use clap::{Parser, Subcommand};
use config::{BuiltModel, RunConfig, Task};
use serde_json::json;
use std::path::{Path, PathBuf};

pub use tasks::expected_rate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "BLOCH_HOMOG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "bloch-homog", version, about = "Threshold homogenization of periodic operators b(D)* g b(D)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the task described by a config file.
    Run(RunArgs),
    /// `gallery list` or `gallery <name> [--emit-config]`.
    Gallery {
        target: String,
        #[arg(long)]
        emit_config: bool,
        /// Constructor parameter, e.g. `--param c=0.2`.
        #[arg(long = "param", value_parser = parse_pair)]
        params: Vec<(String, String)>,
    },
}

#[derive(clap::Args, Debug, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub n_k: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Any config key: `--set numerics.eps=[0.1,0.05,0.025,0.0125]`.
    #[arg(long = "set", value_parser = parse_pair)]
    pub set: Vec<(String, String)>,
}

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

impl RunArgs {
    /// Flags as dotted config keys.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let q = |s: &str| format!("{:?}", s);
        if let Some(t) = &self.task {
            o.push(("run.task".into(), q(t)));
        }
        if let Some(n) = &self.name {
            o.push(("run.name".into(), q(n)));
        }
        if let Some(s) = self.s {
            o.push(("numerics.s".into(), format!("{s:?}")));
        }
        if let Some(t) = self.tau {
            o.push(("numerics.tau".into(), format!("{t:?}")));
        }
        if let Some(k) = self.cutoff {
            o.push(("numerics.cutoff".into(), k.to_string()));
        }
        if let Some(k) = self.n_k {
            o.push(("numerics.n_k".into(), k.to_string()));
        }
        if let Some(d) = &self.output_dir {
            o.push(("run.output_dir".into(), q(&d.to_string_lossy())));
        }
        if let Some(t) = self.threads {
            o.push(("run.threads".into(), t.to_string()));
        }
        o.extend(self.set.iter().cloned());
        o
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Config(_) => EXIT_VALIDATION,
        Error::Io(_) => EXIT_FAILURE,
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

/// Outcome of a run: where the summary went and the exit status.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary_path: PathBuf,
    pub exit: i32,
    pub messages: Vec<String>,
}

fn thread_count(cfg: &RunConfig) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(cfg.run.threads)
}

fn build(cfg: &RunConfig) -> Result<BuiltModel> {
    let m = &cfg.model;
    let empty = m.gallery.is_none() && m.lattice.is_none() && m.symbol.is_none() && m.g.is_none();
    if empty && cfg.run.task == Task::Gallery {
        if let Some(name) = &cfg.run.name {
            let entry = gallery::by_name(name, &[])?;
            return Ok(BuiltModel {
                model: entry.model.clone(),
                entry: Some(entry),
            });
        }
    }
    config::build_model(m)
}

/// Loads, validates and runs a config; artifacts go to `run.output_dir`.
pub fn run(config_path: &Path, overrides: &[(String, String)]) -> Result<RunOutcome> {
    let mut cfg = config::load(config_path, overrides)?;
    let built = build(&cfg)?;
    config::resolve(&mut cfg, &built);
    let out = cfg.run.output_dir.clone();
    std::fs::create_dir_all(&out)?;
    let summary_path = out.join("summary.json");
    let resolved = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;

    let report = built.model.validate();
    if !report.passed && cfg.run.task != Task::Validate {
        let msgs: Vec<String> = report.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        output::write_json(
            &summary_path,
            &json!({ "task": cfg.run.task.name(), "config": resolved, "status": "validation-failed",
                     "validation": serde_json::to_value(&report).unwrap_or_default() }),
        )?;
        return Ok(RunOutcome {
            summary_path,
            exit: EXIT_VALIDATION,
            messages: msgs,
        });
    }

    let threads = thread_count(&cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let result = pool.install(|| tasks::run_task(&cfg, &built, &out));
    let (status, exit, messages, body) = match result {
        Ok(t) => {
            let (status, exit, msgs) = if !t.validation_failures.is_empty() {
                ("validation-failed", EXIT_VALIDATION, t.validation_failures)
            } else if !t.quality_failures.is_empty() {
                ("quality-failed", EXIT_NUMERICAL, t.quality_failures)
            } else {
                ("ok", EXIT_OK, Vec::new())
            };
            (status, exit, msgs, t.result)
        }
        Err(e) => ("error", exit_code(&e), vec![e.to_string()], serde_json::Value::Null),
    };
    output::write_json(
        &summary_path,
        &json!({
            "task": cfg.run.task.name(),
            "status": status,
            "messages": messages,
            "config": resolved,
            "result": body,
        }),
    )?;
    Ok(RunOutcome {
        summary_path,
        exit,
        messages,
    })
}

fn gallery_command(target: &str, emit: bool, params: &[(String, String)]) -> Result<String> {
    if target == "list" {
        let mut s = String::new();
        for name in gallery::names() {
            match gallery::by_name(name, &[]) {
                Ok(e) => s.push_str(&format!("{name}\t{}\n", e.description)),
                Err(e) => s.push_str(&format!("{name}\t(unavailable: {e})\n")),
            }
        }
        return Ok(s);
    }
    let params = params
        .iter()
        .map(|(k, v)| {
            v.parse::<f64>()
                .map(|x| (k.clone(), x))
                .map_err(|_| Error::Config(format!("parameter {k} = '{v}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    let entry = gallery::by_name(target, &params)?;
    if emit {
        return config::emit_gallery_config(&entry);
    }
    let checks = gallery::verify(&entry)?;
    let v = json!({ "name": entry.name, "description": entry.description, "references": checks });
    Ok(serde_json::to_string_pretty(&v).unwrap_or_default() + "\n")
}

/// Process entry point; returns the exit status.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => match run(&args.config, &args.overrides()) {
            Ok(o) => {
                for m in &o.messages {
                    eprintln!("{m}");
                }
                println!("{}", o.summary_path.display());
                o.exit
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::Gallery {
            target,
            emit_config,
            params,
        } => match gallery_command(&target, emit_config, &params) {
            Ok(s) => {
                print!("{s}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
    }
}
