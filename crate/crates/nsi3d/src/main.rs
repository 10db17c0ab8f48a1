use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nsi3d::bench::bench;
use nsi3d::config::{resolve, ApertureChoice, CompoundChoice, Overrides, Preset};
use nsi3d::scenario::{self, Experiment};
use nsi3d::{AppError, AppResult};

#[derive(Parser, Debug)]
#[command(name = "nsi3d", version, about = "Volumetric null subtraction imaging experiments")]
struct Cli {
    /// TOML experiment file, layered over its preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ApertureArg {
    #[arg(long, value_enum)]
    aperture: Option<ApertureChoice>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScenarioName {
    Points,
    Cyst,
    Beampattern,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Masks, apodizations and acquisition plans.
    Design(ApertureArg),
    /// Volume-rate and data-size accounting.
    Rates {
        #[command(flatten)]
        aperture: ApertureArg,
        /// Imaging depth in millimetres.
        #[arg(long)]
        depth_mm: Option<f64>,
    },
    /// Simulate, reconstruct and measure.
    Run {
        #[arg(long, value_enum)]
        scenario: ScenarioName,
        #[command(flatten)]
        aperture: ApertureArg,
        #[arg(long = "compound", value_enum)]
        compounding: Option<CompoundChoice>,
        #[arg(long)]
        dc: Option<f64>,
        /// Also write the simulated channel data.
        #[arg(long)]
        dump_rf: bool,
        /// Additive channel noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Time DAS against NSI on the same dataset.
    Bench {
        #[command(flatten)]
        aperture: ApertureArg,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Recompute metrics from a dumped volume header.
    Metrics {
        #[arg(long)]
        volume: PathBuf,
        /// Also compute cyst contrast.
        #[arg(long)]
        cyst: bool,
    },
}

fn overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides {
        preset: cli.preset,
        seed: cli.seed,
        output_dir: cli.out.clone(),
        threads: cli.threads,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Design(a) | Command::Bench { aperture: a, .. } => o.aperture = a.aperture,
        Command::Rates { aperture, depth_mm } => {
            o.aperture = aperture.aperture;
            o.depth = depth_mm.map(|d| d * 1e-3);
        }
        Command::Run {
            aperture,
            compounding,
            dc,
            noise,
            ..
        } => {
            o.aperture = aperture.aperture;
            o.compounding = *compounding;
            o.dc = *dc;
            o.noise_std = *noise;
        }
        Command::Metrics { .. } => {}
    }
    o
}

fn run(cli: &Cli) -> AppResult<()> {
    let cfg = resolve(cli.config.as_deref(), &overrides(cli))?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    }
    let exp = Experiment::new(cfg)?;
    match &cli.command {
        Command::Design(_) => {
            for r in scenario::design(&exp)?.rows {
                println!(
                    "{:<16} {:>4} elements  {:>4} inner  {:>4} outer  {:>3} events",
                    r.kind.name(),
                    r.n_elements,
                    r.n_inner,
                    r.n_outer,
                    r.n_events
                );
            }
        }
        Command::Rates { .. } => {
            let rep = scenario::rates(&exp)?;
            for r in rep.rows {
                let a = r.accounting;
                println!(
                    "{:<16} {:>4} elements  {:>3} events  {:>8.1} vol/s  {:>7.2} MB/vol",
                    r.kind.name(),
                    r.n_elements,
                    a.n_events,
                    a.max_volume_rate,
                    a.rf_bytes_per_volume as f64 / 1e6
                );
            }
        }
        Command::Run { scenario: s, dump_rf, .. } => match s {
            ScenarioName::Points => {
                for r in scenario::points(&exp, *dump_rf)?.rows {
                    let (ra, re) = r.fwhm_ratio();
                    println!(
                        "{:<16} {:>5.1} mm  FWHM az {:.3}/{:.3} mm ({ra:.3})  el {:.3}/{:.3} mm ({re:.3})  \
                         SMER az {:.2}/{:.2} dB  el {:.2}/{:.2} dB",
                        r.kind.name(),
                        r.depth * 1e3,
                        r.das.fwhm_az * 1e3,
                        r.nsi.fwhm_az * 1e3,
                        r.das.fwhm_el * 1e3,
                        r.nsi.fwhm_el * 1e3,
                        r.das.smer_az.db,
                        r.nsi.smer_az.db,
                        r.das.smer_el.db,
                        r.nsi.smer_el.db
                    );
                }
            }
            ScenarioName::Cyst => {
                for r in scenario::cyst(&exp, *dump_rf)?.rows {
                    println!(
                        "{:<16} CR {:.3} -> {:.3}  CNR {:.3} -> {:.3}",
                        r.kind.name(),
                        r.das.cr,
                        r.nsi.cr,
                        r.das.cnr,
                        r.nsi.cnr
                    );
                }
            }
            ScenarioName::Beampattern => {
                for r in scenario::beampattern(&exp)?.rows {
                    println!(
                        "{:<16} width az {:.3}/{:.3} mm  el {:.3}/{:.3} mm",
                        r.kind.name(),
                        r.das_fwhm.0 * 1e3,
                        r.nsi_fwhm.0 * 1e3,
                        r.das_fwhm.1 * 1e3,
                        r.nsi_fwhm.1 * 1e3
                    );
                }
            }
        },
        Command::Bench { repeats, .. } => {
            let r = bench(&exp, *repeats)?;
            println!(
                "{} voxels  DAS {:.3} s  NSI {:.3} s  ratio {:.3}",
                r.voxels,
                r.das_s,
                r.nsi_s,
                r.ratio()
            );
        }
        Command::Metrics { volume, cyst } => {
            let m = scenario::volume_metrics(&exp, volume, *cyst)?;
            println!(
                "{}  FWHM az {:.3} el {:.3} axial {:.3} mm  SMER az {:.2} el {:.2} dB",
                m.label.name(),
                m.lobes.fwhm_az * 1e3,
                m.lobes.fwhm_el * 1e3,
                m.lobes.fwhm_axial * 1e3,
                m.lobes.smer_az.db,
                m.lobes.smer_el.db
            );
            if let Some(c) = m.contrast {
                println!("CR {:.3}  CNR {:.3}", c.cr, c.cnr);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
