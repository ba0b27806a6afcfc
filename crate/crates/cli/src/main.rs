use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wnv_core::harness::{
    load_config, run_experiment, sweep, write_outputs, write_sweep, Algorithm, RunOptions,
    ScenarioConfig, SweepAxis,
};
use wnv_core::{Error, Result};

/// Online coordinated precoding for virtualized multi-cell MIMO under
/// delayed CSI.
#[derive(Debug, Parser)]
#[command(name = "wnv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write timeseries.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write the channel trajectory to this binary trace file.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
    },
    /// Run one experiment per value of a single parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// tau, p_bar_dbm, n_c or T.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 1,4,8.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML scenario file; an empty file selects the defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// proposed, saddle, fdzf or all.
    #[arg(long)]
    algo: Option<String>,
    /// Worker threads; more than one enables parallel execution.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl Common {
    fn resolve(&self) -> Result<(ScenarioConfig, RunOptions)> {
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(algo) = &self.algo {
            cfg.algorithms = match algo.as_str() {
                "all" => Algorithm::ALL.to_vec(),
                one => vec![one.parse()?],
            };
        }
        cfg.validate()?;
        if self.threads == 0 {
            return Err(Error::ConfigInvalid("--threads must be at least 1".into()));
        }
        if self.threads > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global()
                .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        }
        Ok((
            cfg,
            RunOptions {
                parallel: self.threads > 1,
                trace_out: None,
            },
        ))
    }
}

fn execute(cli: Cli) -> Result<()> {
    // Write errors (e.g. a closed pipe) on the report are not failures.
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run { common, dump_trace } => {
            let (cfg, mut opts) = common.resolve()?;
            opts.trace_out = dump_trace;
            let output = run_experiment(&cfg, &opts)?;
            write_outputs(&output, &cfg.output_dir)?;
            for a in &output.summary.algorithms {
                let _ = writeln!(
                    stdout,
                    "{:<9} f_bar={:.6} r_bar={:.4} p_bar_run={:.4} RE={:.4e}",
                    a.algorithm, a.f_bar, a.r_bar, a.p_bar_run, a.regret
                );
            }
            let _ = writeln!(stdout, "wrote {}", cfg.output_dir.display());
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let (cfg, opts) = common.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            let points = sweep(&cfg, axis, &values, &opts)?;
            write_sweep(&points, axis, &cfg.output_dir)?;
            for p in &points {
                for a in &p.output.summary.algorithms {
                    let _ = writeln!(
                        stdout,
                        "{}={} {:<9} f_bar={:.6} r_bar={:.4}",
                        axis, p.value, a.algorithm, a.f_bar, a.r_bar
                    );
                }
            }
            let _ = writeln!(stdout, "wrote {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
