use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rdars_core::experiment::{
    cmd_eval, cmd_solve, cmd_sweep, write_sweep_csv, write_states_jsonl, write_trace_csv, SweepAxis, SweepSpec,
};
use rdars_core::selfcheck::{run_selfcheck, CheckSizes};
use rdars_core::train::{load_params, save_params, train, TrainRun};
use rdars_core::{parallel, Exec, SystemConfig, TrainableParams, Variant};

/// Beamforming and mode-switching experiments for RDARS-aided downlinks.
#[derive(Parser)]
#[command(name = "rdars", version, about)]
struct Cli {
    /// Run every batch on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one realization and write its iteration trace as CSV.
    Solve(SolveArgs),
    /// Sweep one scenario parameter and write per-cell mean WSR as CSV.
    Sweep(SweepArgs),
    /// Train the unrolled network and write its parameter file.
    Train(TrainArgs),
    /// Compare trained parameters against PWM at the same iteration budget.
    Eval(EvalArgs),
    /// Run the invariant suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults to the desk-scale scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stream family for channels and solver starts. Defaults to the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "pwm")]
    variant: Variant,
    /// Parameter file for `pwm_bfnet`; untrained defaults otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "pwm")]
    variant: Vec<Variant>,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Also write every final state as JSON lines next to `--out`.
    #[arg(long, requires = "out")]
    dump_states: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Use the full-size training schedule instead of the desk-scale one.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dataset_size: Option<usize>,
    #[arg(long)]
    unroll: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    realizations: usize,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(SystemConfig::desk()),
    }
}

fn load_optional_params(path: Option<&Path>) -> Result<Option<TrainableParams>> {
    path.map(|p| load_params(p).with_context(|| format!("loading params {}", p.display())))
        .transpose()
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn states_path(out: &Path) -> PathBuf {
    out.with_extension("states.jsonl")
}

fn run(cli: Cli) -> Result<ExitCode> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Solve(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let params = load_optional_params(a.params.as_deref())?;
            let seed = a.common.seed.unwrap_or(cfg.seed);
            let (trace, rows) = cmd_solve(&cfg, a.variant, seed, params.as_ref())?;
            write_trace_csv(output(a.common.out.as_deref())?, &rows)?;
            log::info!(
                "{}: final WSR {:.4} bits/s/Hz after {} iterations",
                a.variant,
                trace.final_wsr,
                trace.records.len().saturating_sub(1)
            );
        }
        Command::Sweep(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let mut spec = SweepSpec::new(cfg, a.axis, a.values);
            spec.variants = a.variant;
            spec.realizations = a.realizations;
            spec.seed = a.common.seed.unwrap_or(spec.base.seed);
            spec.params = load_optional_params(a.params.as_deref())?;
            let result = cmd_sweep(&spec, a.dump_states, exec)?;
            write_sweep_csv(output(a.common.out.as_deref())?, &result.rows)?;
            if a.dump_states {
                let out = a.common.out.as_deref().expect("clap enforces --out");
                let path = states_path(out);
                write_states_jsonl(output(Some(&path))?, &result.states)?;
                log::info!("wrote {} states to {}", result.states.len(), path.display());
            }
        }
        Command::Train(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let mut run = if a.full { TrainRun::full() } else { TrainRun::desk() };
            if let Some(s) = a.common.seed {
                run.seed = s;
            }
            if let Some(e) = a.epochs {
                run.epochs = e;
            }
            if let Some(d) = a.dataset_size {
                run.dataset_size = d;
            }
            if let Some(t) = a.unroll {
                run.unroll_t = t;
            }
            let report = train(&cfg, &run, exec)?;
            let out = a.common.out.unwrap_or_else(|| PathBuf::from("params.toml"));
            save_params(&out, &report.params)?;
            eprintln!(
                "validation loss {:.4} -> {:.4} (best epoch {}), {} loss evaluations; wrote {}",
                report.initial_val_loss,
                report.best_val_loss,
                report.best_epoch,
                report.loss_evaluations,
                out.display()
            );
        }
        Command::Eval(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let params = match load_optional_params(a.params.as_deref())? {
                Some(p) => p,
                None => TrainableParams::untrained(&cfg, rdars_core::experiment::DEFAULT_UNROLL),
            };
            let seed = a.common.seed.unwrap_or(cfg.seed);
            let report = cmd_eval(&cfg, &params, seed, a.realizations, exec)?;
            write_trace_csv(output(a.common.out.as_deref())?, &report.rows)?;
            eprintln!(
                "pwm_bfnet {:.4} vs pwm {:.4} at {} iterations over {} realizations: ratio {:.4}",
                report.mean_bfnet, report.mean_pwm, report.unroll_t, report.realizations, report.ratio
            );
        }
        Command::Selfcheck(a) => {
            let mut sizes = CheckSizes::default();
            if let Some(s) = a.seed {
                sizes.seed = s;
            }
            let report = run_selfcheck(&sizes, exec);
            for c in &report.checks {
                println!("{c}");
            }
            println!("{} checks in {:.1?}", report.checks.len(), report.elapsed);
            if !report.passed() {
                let names: Vec<_> = report.failures().map(|c| format!("{} ({})", c.name, c.module)).collect();
                eprintln!("failed: {}", names.join(", "));
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = parallel::init_from_env() {
        log::info!("using {n} worker threads");
    }
    match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}

