//! Command-line experiment runner: configuration, artifacts and plots.

pub mod checkpoint;
mod commands;
pub mod config;
pub mod plot;

use clap::{Args, Parser, Subcommand};
use config::{parse_value, SEED_PATHS};
use serde_json::Value;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("diverged: {0}")]
    Divergence(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::MissingInput(_) => 4,
            CliError::Run(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hyperql", version, about = "Hypernetwork critic and meta-policy experiments")]
#[command(after_help = "Any config key can be overridden with a dotted flag, e.g. `--trainer.batch 100`.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config merged over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `$HYPERQL_OUT/<command>` or `runs/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every section.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `lqr` or `point-mass`.
    #[arg(long)]
    env: Option<String>,
    /// `linear`, `mlp-concat`, `as-hyper` or `sa-hyper`.
    #[arg(long)]
    critic: Option<String>,
    /// `td3` or `sac`.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct MetaArgs {
    /// `goal` or `fwd_back`.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an actor-critic agent.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Train while tracking critic action-gradient cosine similarity.
    CsSweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Step-size bound check on random quadratic bandits.
    Prop1 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Meta-train a context-conditioned policy.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: MetaArgs,
        /// `context-mlp` or `hyper-context`.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Gradient-noise statistics for both meta-policy kinds.
    MetaVariance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: MetaArgs,
    },
    /// Compare generated-weight spreads across initialization schemes.
    InitAudit {
        #[command(flatten)]
        common: Common,
    },
    /// Render a CSV column as an SVG chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        window: Option<usize>,
        /// Draw only the mean line.
        #[arg(long)]
        no_iqr: bool,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Pulls `--a.b VALUE` / `--a.b=VALUE` pairs out of `args`.
pub fn split_overrides(args: &[String]) -> Result<(Vec<String>, Vec<(String, Value)>), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a
            .strip_prefix("--")
            .filter(|f| f.split('=').next().is_some_and(|k| k.contains('.')))
        else {
            rest.push(a.clone());
            continue;
        };
        let (key, raw) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("override --{flag} needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        overrides.push((key, parse_value(&raw)));
    }
    Ok((rest, overrides))
}

fn shortcut(out: &mut Vec<(String, Value)>, path: &str, v: Option<Value>) {
    if let Some(v) = v {
        out.push((path.to_string(), v));
    }
}

/// Runs the CLI on `args` (without the program name); returns the exit
/// code.
pub fn run(args: &[String]) -> i32 {
    match try_run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_run(args: &[String]) -> Result<(), CliError> {
    let (rest, dotted) = split_overrides(args)?;
    let cli = match Cli::try_parse_from(std::iter::once("hyperql".to_string()).chain(rest)) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    let s = |v: &Option<String>| v.clone().map(Value::String);
    let mut short = Vec::new();
    let (name, common) = match &cli.command {
        Command::Train { common, args } | Command::CsSweep { common, args } => {
            shortcut(&mut short, "env", s(&args.env));
            shortcut(&mut short, "trainer.critic", s(&args.critic));
            shortcut(&mut short, "trainer.algorithm", s(&args.algorithm));
            shortcut(&mut short, "trainer.total_steps", args.steps.map(Value::from));
            let name = if matches!(cli.command, Command::Train { .. }) {
                "train"
            } else {
                "cs-sweep"
            };
            (name, common)
        }
        Command::Prop1 {
            common,
            alphas,
            instances,
        } => {
            shortcut(&mut short, "prop1.alphas", alphas.clone().map(Value::from));
            shortcut(&mut short, "prop1.instances", instances.map(Value::from));
            ("prop1", common)
        }
        Command::MetaTrain { common, args, kind } => {
            shortcut(&mut short, "meta.family", s(&args.family));
            shortcut(&mut short, "meta.iterations", args.iterations.map(Value::from));
            shortcut(&mut short, "meta.kind", s(kind));
            ("meta-train", common)
        }
        Command::MetaVariance { common, args } => {
            shortcut(&mut short, "meta.family", s(&args.family));
            shortcut(&mut short, "meta.iterations", args.iterations.map(Value::from));
            ("meta-variance", common)
        }
        Command::InitAudit { common } => ("init-audit", common),
        Command::Plot {
            input,
            output,
            x,
            y,
            window,
            no_iqr,
            title,
        } => {
            let mut spec = config::resolve(None, &dotted)
                .map_err(|e| CliError::Config(e.to_string()))?
                .plot;
            if let Some(x) = x {
                spec.x = x.clone();
            }
            if let Some(y) = y {
                spec.y = y.clone();
            }
            if let Some(w) = window {
                spec.window = *w;
            }
            if *no_iqr {
                spec.iqr = false;
            }
            if let Some(t) = title {
                spec.title = t.clone();
            }
            return commands::plot(input, output.as_deref(), &spec);
        }
    };
    if let Some(seed) = common.seed {
        for p in SEED_PATHS {
            short.push((p.to_string(), Value::from(seed)));
        }
    }
    short.extend(dotted);
    let file = match &common.config {
        Some(p) => {
            Some(std::fs::read_to_string(p).map_err(|e| CliError::MissingInput(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let cfg = config::resolve(file.as_deref(), &short).map_err(|e| CliError::Config(e.to_string()))?;
    let out = common.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os("HYPERQL_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        root.join(name)
    });
    std::fs::create_dir_all(&out)?;
    let resolved = serde_json::to_string_pretty(&cfg).expect("config serializes");
    std::fs::write(out.join("config.resolved.json"), resolved + "\n")?;
    match name {
        "train" => commands::train(&cfg, &out),
        "cs-sweep" => commands::cs_sweep(&cfg, &out),
        "prop1" => commands::prop1(&cfg, &out),
        "meta-train" => commands::meta_train(&cfg, &out),
        "meta-variance" => commands::meta_variance(&cfg, &out),
        "init-audit" => commands::init_audit(&cfg, &out),
        _ => unreachable!("subcommand table"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn dotted_flags_are_split_off() {
        let (rest, ov) = split_overrides(&strings(&[
            "train",
            "--trainer.batch",
            "100",
            "--steps",
            "5",
            "--meta.lr=0.1",
            "--out",
            "a.b",
        ]))
        .unwrap();
        assert_eq!(rest, strings(&["train", "--steps", "5", "--out", "a.b"]));
        assert_eq!(
            ov,
            vec![
                ("trainer.batch".into(), Value::from(100)),
                ("meta.lr".into(), Value::from(0.1))
            ]
        );
        assert!(split_overrides(&strings(&["--trainer.batch"])).is_err());
    }
}
