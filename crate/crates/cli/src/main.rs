use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crofton::experiment::{
    run, scenarios, selftest, sweep, to_json, write_csv, write_sweep_csv, ExperimentConfig, ParamValue,
    RunOptions,
};
use crofton::Execution;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Monte Carlo experiments for Crofton formulas and mixed volumes.
#[derive(Parser, Debug)]
#[command(name = "crofton", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write a report row.
    Run {
        scenario: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario once per value of a numeric key (long-format CSV).
    Sweep {
        scenario: String,
        /// Key to vary: a scenario parameter or n_samples, seed, *_grid, ...
        #[arg(long)]
        parameter: String,
        /// Comma-separated values, e.g. 1e3,1e4,1e5.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// List scenarios with their default parameters.
    ListScenarios,
    /// κ_d oracle, exact planar route vs oracle, diagonal identity.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with one table per scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Override a parameter, e.g. --param r=2 or --param 'q1=[[4,0],[0,1]]'.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Write wall_time as 0 so reports are byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Common {
    fn config(&self, scenario: &str) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml_str(&text, scenario)?
            }
            None => ExperimentConfig::defaults(scenario)?,
        };
        for p in &self.params {
            let Some((k, v)) = p.split_once('=') else {
                bail!("--param expects KEY=VALUE, got {p:?}");
            };
            cfg.set(k.trim(), ParamValue::parse(v)?)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.set("n_samples", ParamValue::Number(n as f64))?;
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            exec: if self.sequential { Execution::Sequential } else { Execution::Parallel },
            timing: !self.no_timing,
        }
    }

    fn emit(&self, body: &[u8]) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display())),
            None => Ok(std::io::stdout().write_all(body)?),
        }
    }
}

fn pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { scenario, common } => {
            let cfg = common.config(&scenario)?;
            let record = pool(common.threads)?.install(|| run(&cfg, &common.options()))?;
            let mut body = Vec::new();
            match common.format {
                Format::Csv => write_csv(std::slice::from_ref(&record), &mut body)?,
                Format::Json => body = (to_json(&record)? + "\n").into_bytes(),
            }
            common.emit(&body)?;
            if !record.passes() {
                eprintln!(
                    "{}: |estimate − prediction| = {:e} exceeds 4·stderr = {:e}",
                    record.scenario,
                    record.abs_err.unwrap_or(0.0),
                    4.0 * record.stderr
                );
            }
            Ok(record.passes())
        }
        Command::Sweep {
            scenario,
            parameter,
            values,
            common,
        } => {
            let cfg = common.config(&scenario)?;
            let records = pool(common.threads)?.install(|| sweep(&cfg, &parameter, &values, &common.options()))?;
            let mut body = Vec::new();
            match common.format {
                Format::Csv => write_sweep_csv(&records, &mut body)?,
                Format::Json => body = (to_json(&records)? + "\n").into_bytes(),
            }
            common.emit(&body)?;
            Ok(records.iter().all(|r| r.record.passes()))
        }
        Command::ListScenarios => {
            for s in scenarios() {
                let cfg = ExperimentConfig::defaults(s.name)?;
                let params: Vec<String> = cfg
                    .params
                    .iter()
                    .map(|(k, v)| match v {
                        ParamValue::Number(x) => format!("{k}={x}"),
                        ParamValue::Table(t) => format!("{k}={t:?}"),
                    })
                    .collect();
                println!("{}\n    {}\n    n_samples={} {}", s.name, s.description, s.n_samples, params.join(" "));
            }
            Ok(true)
        }
        Command::Selftest { seed, threads } => {
            let lines = pool(threads)?.install(|| selftest(seed, Execution::Parallel))?;
            for l in &lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            Ok(lines.iter().all(|l| l.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
