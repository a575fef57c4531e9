use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echomem::harness::{
    build_protocol, decay_csv, load_config, phase_csv, reference_energy, run_experiment,
    trace_csv, write_outputs, ExperimentConfig, ExperimentKind, HarnessError, RunData, RunResult,
};
use echomem::sequence::dump_sequence;

#[derive(Parser)]
#[command(name = "echomem", version, about = "Photon-echo memory with decoupled spin storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Echo efficiency against storage time.
    Sweep(Common),
    /// Two-input interference against relative phase.
    Visibility(Common),
    /// Calibrate the spin bath to the two-pulse T2eff.
    CalibrateBath(Common),
    /// Print the pulse table of the first grid point.
    DumpSequence(Common),
    /// Run the zero-delay reference and print its echo energy.
    Reference(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export echo traces.
    #[arg(long)]
    trace: bool,
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::new(kind.unwrap_or(ExperimentKind::StorageSweep), 0),
    };
    if let Some(k) = kind {
        if cfg.kind != k {
            return Err(HarnessError::Validation(vec![format!(
                "config kind {} does not match the command ({})",
                cfg.kind.name(),
                k.name()
            )]));
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.workers = common.workers;
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.display().to_string());
    }
    cfg.output.trace |= common.trace;
    cfg.resolve();
    let bad = cfg.validate();
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(HarnessError::Validation(bad))
    }
}

fn report(result: &RunResult) -> Result<(), HarnessError> {
    match &result.data {
        RunData::Decay(p) => print!("{}", decay_csv(p)),
        RunData::Phase(p) => print!("{}", phase_csv(p)),
    }
    if let Some(f) = &result.fits.t2eff {
        println!("# T2eff = {:.4} +- {:.4} ms", f.t2eff_ms, f.t2eff_stderr_ms);
    }
    if let Some(v) = &result.fits.visibility {
        println!("# V = {:.4}, I_max = {:.4}", v.v, v.i_max);
    }
    if let Some(b) = &result.fits.bath {
        println!(
            "# sigma_b = {:.5} rad/ms at tau_c = {} us",
            b.params.sigma_rad_per_ms, b.params.tau_c_us
        );
    }
    let m = &result.meta;
    println!(
        "# {} ion runs, {} steps in {:.2} s on {} workers ({:.0} ion runs/s)",
        m.ion_runs, m.steps, m.wall_s, m.workers, m.ion_runs_per_s
    );
    if let Some(dir) = &result.config.output.dir {
        for p in write_outputs(result, dir.as_ref(), result.config.output.trace)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn in_pool<T>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError>
where
    T: Send,
{
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| HarnessError::Io(format!("thread pool: {e}"))),
        None => Ok(f()),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Sweep(c) => report(&run_experiment(&load(&c, Some(ExperimentKind::StorageSweep))?)?),
        Command::Visibility(c) => report(&run_experiment(&load(&c, Some(ExperimentKind::PhaseSweep))?)?),
        Command::CalibrateBath(c) => {
            report(&run_experiment(&load(&c, Some(ExperimentKind::BathCalibration))?)?)
        }
        Command::DumpSequence(c) => {
            let cfg = load(&c, None)?;
            let (seq, warnings) = build_protocol(&cfg)?;
            for w in warnings {
                log::warn!("{w}");
            }
            print!("{}", dump_sequence(&seq));
            Ok(())
        }
        Command::Reference(c) => {
            let cfg = load(&c, None)?;
            let (energy, trace) = in_pool(cfg.workers, || reference_energy(&cfg))??;
            println!("reference echo energy {energy:.6e}");
            if let Some(dir) = &cfg.output.dir {
                std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(e.to_string()))?;
                let path = PathBuf::from(dir).join("trace_reference.csv");
                std::fs::write(&path, trace_csv(&trace)).map_err(|e| HarnessError::Io(e.to_string()))?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
