use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use xhammer::experiment::{
    cmd_calibrate, cmd_extract_alpha, cmd_simulate, cmd_sweep, load_experiment, read_experiment,
    ExperimentError, FreeParam,
};

/// Electro-thermal simulator for crosstalk bit-flip attacks on ReRAM crossbars.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads for sweeps and calibration (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the thermal model and write the alpha kernel.
    ExtractAlpha {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one attack; exits 0 on a flip and 2 otherwise.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory for result.json and trace.csv.
        #[arg(short, long)]
        out: PathBuf,
        /// Apply all max_pulses pulses and write a per-pulse trace.
        #[arg(long)]
        trace: bool,
    },
    /// Run the config's sweep block and write a CSV.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit kinetic parameters to reference pulse counts.
    Calibrate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        reference: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Parameters to fit, overriding the reference file (k0, e_a, r_th_eff).
        #[arg(long, value_delimiter = ',')]
        free: Option<Vec<FreeParam>>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::ExtractAlpha { config, out } => {
            let cfg = read_experiment(&config)?;
            cfg.validate_thermal()?;
            let ex = cmd_extract_alpha(&cfg, &out)?;
            let [nx, ny, nz] = ex.grid_dims;
            println!("grid {nx}x{ny}x{nz} voxels");
            println!(
                "r_th = {:.4e} K/W (r² = {:.6})",
                ex.fit.r_th, ex.fit.r_squared
            );
            for e in ex.kernel.entries() {
                println!(
                    "alpha({:+}, {:+}) = {:.5}  r² = {:.6}",
                    e.di, e.dj, e.value, e.r2
                );
            }
            println!("sum of neighbour alphas = {:.4}", ex.kernel.neighbour_sum());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, out, trace } => {
            let cfg = load_experiment(&config)?;
            let r = cmd_simulate(&cfg, &out, trace)?;
            match r.pulses_to_flip {
                Some(n) => {
                    println!("victim flipped after {n} pulses");
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    println!("no flip within {} pulses", r.pulses_applied);
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Sweep { config, out } => {
            let cfg = load_experiment(&config)?;
            let res = cmd_sweep(&cfg, &out)?;
            print!("{}", res.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            config,
            reference,
            out,
            free,
        } => {
            let cfg = load_experiment(&config)?;
            let cal = cmd_calibrate(&cfg, &reference, free.as_deref(), &out)?;
            println!(
                "k0 = {:.6e} 1/s, e_a = {:.6} eV, r_th_eff = {:.6e} K/W ({} iterations)",
                cal.device.k0, cal.device.e_a, cal.device.r_th_eff, cal.iterations
            );
            println!("pulse_length_ns,ambient_K,reference,predicted,log_residual");
            for r in &cal.residuals {
                println!(
                    "{},{},{},{:.2},{:+.4}",
                    r.pulse_length_ns,
                    r.ambient,
                    r.reference_pulses,
                    r.predicted_pulses,
                    r.log_residual
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            error!("cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
