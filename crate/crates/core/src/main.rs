use clap::{Parser, Subcommand};
use photon_memory::config::{CribConfig, Resolution, ResultRecord, RunConfig, SpinWaveConfig};
use photon_memory::crib::crib_width_scan;
use photon_memory::figures::figure;
use photon_memory::figures::par_map;
use photon_memory::free_space::{retrieve_spin_wave, store_and_retrieve, total_efficiency, ControlKind};
use photon_memory::mode::{write_csv_atomic, ModeSample};
use photon_memory::optimal_input::time_reversal_iterate;
use photon_memory::optimizer::{gaussian_like_pulse, max_total_efficiency_redistribution, optimal_spin_wave, retrieval_kernel};
use photon_memory::spectral::TransferMap;
use photon_memory::verify::{run_suite, VerifyOptions};
use photon_memory::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "photon-memory", version, about = "Photon storage and retrieval in inhomogeneously broadened ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for record.json and CSV arrays.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, value_enum)]
    resolution: Option<Resolution>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fast storage of an input pulse followed by fast retrieval.
    Simulate,
    /// Retrieval of a given spin wave with the configured control.
    Retrieve,
    /// Spin wave that maximizes the retrieval efficiency.
    OptimizeSpinwave,
    /// Input pulse that maximizes storage followed by retrieval.
    OptimizeInput {
        #[arg(long, default_value_t = 2000)]
        max_iters: usize,
    },
    /// Decay-free CRIB efficiency maximized over the broadening width.
    CribScan,
    /// Data behind one of the reproduced figures (2 to 8).
    Figure { n: u8 },
    /// Runs an acceptance suite: all, fast, slow, or one criterion.
    Verify {
        #[arg(default_value = "fast")]
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let (mut cfg, base) = match &cli.config {
        Some(path) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::load(path)?, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if cli.resolution.is_some() {
        cfg.resolution = cli.resolution;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok((cfg, base))
}

fn require_config(cli: &Cli) -> Result<()> {
    if cli.config.is_none() {
        return Err(Error::InvalidArgument("this command needs --config".into()));
    }
    Ok(())
}

fn write_mode(dir: &Path, name: &str, mode: &ModeSample, rec: &mut ResultRecord) -> Result<()> {
    mode.write_csv(&dir.join(name))?;
    rec.array(name.trim_end_matches(".csv"), name);
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()));
    }
    let (cfg, base) = load_config(cli)?;
    let started = Instant::now();
    let out = &cli.out;
    let name = match &cli.command {
        Command::Simulate => "simulate",
        Command::Retrieve => "retrieve",
        Command::OptimizeSpinwave => "optimize-spinwave",
        Command::OptimizeInput { .. } => "optimize-input",
        Command::CribScan => "crib-scan",
        Command::Figure { .. } => "figure",
        Command::Verify { .. } => "verify",
    };
    let mut rec = ResultRecord::new(name, &cfg);
    let mut code = ExitCode::SUCCESS;

    // Validate everything before creating the output directory.
    match &cli.command {
        Command::Figure { .. } | Command::Verify { .. } => {}
        Command::CribScan => {
            require_config(cli)?;
            cfg.crib.as_ref().ok_or_else(|| Error::InvalidConfig("crib section is required".into()))?.validate()?;
        }
        _ => {
            require_config(cli)?;
            cfg.medium()?;
        }
    }
    std::fs::create_dir_all(out)?;

    match &cli.command {
        Command::Simulate => {
            let medium = cfg.medium()?;
            let protocol = medium.protocol(cfg.resolution())?;
            let input = cfg.input.clone().unwrap_or_default().build(&base)?;
            let trip = store_and_retrieve(&protocol, &input)?;
            rec.scalar("storage_efficiency", trip.storage_efficiency);
            rec.scalar("total_efficiency", trip.total_efficiency);
            rec.scalar("residual_excitation", trip.residual);
            if !protocol.redistribute {
                let tc = medium.transfer()?;
                let duration = input.end() - input.start();
                let eta = TransferMap::for_duration(&tc, duration)?.efficiency(&input)?;
                rec.scalar("total_efficiency_spectral", eta);
            }
            write_mode(out, "input.csv", &input, &mut rec)?;
            write_mode(out, "output.csv", &trip.output, &mut rec)?;
            write_mode(out, "leaked.csv", &trip.leaked, &mut rec)?;
        }
        Command::Retrieve => {
            let medium = cfg.medium()?;
            let protocol = medium.protocol(cfg.resolution())?;
            let spin = cfg.spin_wave.clone().unwrap_or_default();
            let spin = SpinWaveConfig { nz: cfg.resolution().scale(spin.nz), ..spin }.build(&base)?;
            let control = cfg.control.clone().unwrap_or_default().build(protocol.grid.t_max)?;
            let stage = retrieve_spin_wave(&protocol, &spin, &control)?;
            let eta = total_efficiency(&stage.output);
            rec.scalar("efficiency", eta);
            rec.scalar("residual_excitation", stage.state.excitation());
            if control.kind() == ControlKind::IdealPiPulse {
                let tc = medium.transfer()?;
                let nodes = TransferMap::output_nodes(&tc);
                let spectral = TransferMap::new(&tc, nodes.clone(), nodes)?.retrieval(&spin).efficiency();
                rec.scalar("efficiency_spectral", spectral);
            }
            write_mode(out, "spin_wave.csv", &spin, &mut rec)?;
            write_mode(out, "output.csv", &stage.output, &mut rec)?;
        }
        Command::OptimizeSpinwave => {
            let tc = cfg.medium()?.transfer()?;
            let nz = cfg.resolution().scale(cfg.spin_wave.as_ref().map_or(201, |s| s.nz));
            let best = optimal_spin_wave(&retrieval_kernel(&tc, nz)?)?;
            rec.scalar("efficiency", best.efficiency);
            rec.scalar("iterations", best.iterations as f64);
            rec.note("converged", best.converged);
            rec.note("near_degenerate", best.near_degenerate);
            if !tc.reversed_broadening {
                rec.scalar("total_efficiency_max_redistribution", max_total_efficiency_redistribution(&tc, nz)?);
            }
            write_mode(out, "optimal_spin_wave.csv", &best.mode, &mut rec)?;
        }
        Command::OptimizeInput { max_iters } => {
            let tc = cfg.medium()?.transfer()?;
            let input = cfg.input.clone().unwrap_or_default();
            let trial = input.build(&base)?;
            let duration = trial.end() - trial.start();
            let (op, best) = time_reversal_iterate(&tc, &trial, *max_iters)?;
            let nt = cfg.resolution().scale(trial.len());
            let mode = op.input_mode(&best.amplitudes, duration, nt)?;
            rec.scalar("efficiency", best.efficiency);
            rec.scalar("iterations", best.iterations as f64);
            rec.note("converged", best.converged);
            rec.note("history", &best.history);
            write_mode(out, "optimal_input.csv", &mode, &mut rec)?;
        }
        Command::CribScan => {
            let crib: &CribConfig = cfg.crib.as_ref().expect("validated");
            let samples = cfg.resolution().scale(crib.pulse_samples.unwrap_or(1001));
            let pulse = gaussian_like_pulse(1.0, samples)?;
            let depths = &crib.depths;
            let points = par_map(depths, cli.threads, |&d| {
                Ok(crib_width_scan(&[d], crib.family, &pulse)?.points.remove(0))
            })?;
            let rows: Vec<Vec<f64>> = points
                .iter()
                .map(|p| vec![p.depth, p.width, p.efficiency, p.unbroadened, p.evaluations as f64])
                .collect();
            write_csv_atomic(
                &out.join("crib_scan.csv"),
                &["depth", "width", "efficiency", "unbroadened", "evaluations"],
                &rows,
            )?;
            rec.array("crib_scan", "crib_scan.csv");
            rec.note("family", crib.family);
        }
        Command::Figure { n } => {
            let fig = figure(*n, cfg.resolution(), cli.threads)?;
            for file in fig.write(out)? {
                rec.array(file.trim_end_matches(".csv"), &file);
            }
            for (k, v) in &fig.scalars {
                rec.scalar(k, *v);
            }
            rec.note("figure", n);
            for (k, v) in &fig.metadata {
                rec.note(k, v);
            }
        }
        Command::Verify { suite } => {
            let opts = VerifyOptions { seed: cfg.seed.unwrap_or(VerifyOptions::default().seed), threads: cli.threads };
            let outcomes = run_suite(suite, &opts)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            rec.scalar("passed", (outcomes.len() - failed) as f64);
            rec.scalar("failed", failed as f64);
            rec.note("suite", suite);
            rec.note("criteria", &outcomes);
            if failed > 0 {
                code = ExitCode::from(1);
            }
        }
    }
    rec.wall_clock_s = started.elapsed().as_secs_f64();
    let path = rec.write(out)?;
    eprintln!("wrote {}", path.display());
    Ok(code)
}
