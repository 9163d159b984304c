use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netreg::harness::{cmd_fit, cmd_run, cmd_sweep, cmd_validate, ExperimentConfig};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "netreg", about = "Distributed online linear regression experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set algo.beta=0.75`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a config without running it.
    Validate(ConfigArgs),
    /// Run every horizon and trial; write CSVs and summary.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run once per value of one config field.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted path of the field to vary.
        #[arg(long)]
        vary: String,
        /// Comma-separated values; each is parsed as JSON, else taken as a string.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Re-fit the scaling exponent from the CSVs of a previous run.
    Fit {
        #[arg(long)]
        out: PathBuf,
        /// regret, cv, or disagreement.
        #[arg(long, default_value = "regret")]
        metric: String,
    },
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

fn load(a: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut sets = a.set.clone();
    if let Some(s) = a.seed {
        sets.push(format!("master_seed={s}"));
    }
    ExperimentConfig::load_with_overrides(&a.config, &sets).map_err(|e| Failure::Invalid(e.to_string()))
}

fn validated(a: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let cfg = load(a)?;
    let rep = cmd_validate(&cfg);
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    if !rep.is_ok() {
        return Err(Failure::Invalid(rep.violations.join("\n")));
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(cfg.name.as_deref().unwrap_or("run")))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let rt = |e: netreg::Error| Failure::Runtime(e.to_string());
    match cli.cmd {
        Cmd::Validate(a) => {
            let cfg = load(&a)?;
            let rep = cmd_validate(&cfg);
            println!("{}", serde_json::to_string_pretty(&rep).map_err(|e| Failure::Runtime(e.to_string()))?);
            if !rep.is_ok() {
                return Err(Failure::Invalid(format!("{} violation(s)", rep.violations.len())));
            }
        }
        Cmd::Run { cfg, out } => {
            let cfg = validated(&cfg)?;
            let dir = out_dir(&cfg, &out);
            let r = cmd_run(&cfg, &dir).map_err(rt)?;
            println!("{:>8} {:>14} {:>10}", "T", "regret", "stderr");
            for h in &r.horizons {
                println!("{:>8} {:>14.6} {:>10.4}", h.horizon, h.regret, h.regret_stderr);
            }
            for (k, f) in &r.fits {
                println!("{k}: slope {:.4}, r2 {:.4}", f.slope, f.r_squared);
            }
            println!("wrote {}", dir.display());
        }
        Cmd::Sweep { cfg, out, vary, values } => {
            let cfg = validated(&cfg)?;
            let values: Vec<Value> =
                values.iter().map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.clone()))).collect();
            let dir = out_dir(&cfg, &out);
            let table = cmd_sweep(&cfg, &vary, &values, Some(&dir)).map_err(|e| match e {
                netreg::Error::Config(s) => Failure::Invalid(s),
                e => rt(e),
            })?;
            for row in &table.rows {
                let slope = row.fits.get("regret").map(|f| format!("{:.4}", f.slope)).unwrap_or_else(|| "-".into());
                let last = row.regret.last().map(|r| r.1).unwrap_or(f64::NAN);
                println!("{}={}  final regret {:.6}  slope {}", table.parameter, row.value, last, slope);
            }
        }
        Cmd::Fit { out, metric } => {
            let (points, fit) = cmd_fit(&out, &metric).map_err(rt)?;
            for (t, v) in &points {
                println!("{t:>8} {v:>14.6}");
            }
            println!("{metric}: slope {:.4}, intercept {:.4}, r2 {:.4}", fit.slope, fit.intercept, fit.r_squared);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(s)) => {
            eprintln!("invalid: {s}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(s)) => {
            eprintln!("error: {s}");
            ExitCode::from(1)
        }
    }
}
