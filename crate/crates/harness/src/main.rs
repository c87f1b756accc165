use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lensvlc_core::geometry::{LensState, Pose, Vec3};
use lensvlc_harness::config::Config;
use lensvlc_harness::dataset::build_pbml_dataset;
use lensvlc_harness::error::{Error, Result};
use lensvlc_harness::scenario::{run_scenario, write_results_csv, write_timing_csv, Scenario};
use lensvlc_harness::spots::spot_diagram;
use lensvlc_harness::training::train_from_dir;
use lensvlc_neural::blocks::BlockId;
use lensvlc_neural::gradcheck::gradient_check;

#[derive(Parser)]
#[command(name = "lensvlc", version, about = "Liquid-lens MIMO VLC link simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario sweep and write results.csv and timing.csv.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only run these schemes (comma separated).
        #[arg(long, value_delimiter = ',')]
        scheme: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Draw the PD-array spot diagram for one pose and lens.
    Spots {
        #[arg(long)]
        config: Option<PathBuf>,
        /// x,y,z,theta_R,phi_R (metres, degrees).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        pose: Vec<f64>,
        /// f,theta_L,phi_L (metres, degrees).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lens: Vec<f64>,
        #[arg(long, default_value = "spots.svg")]
        out: PathBuf,
    },
    /// Generate labelled trajectories for the learned scheme.
    Dataset {
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one block and write block<k>.pbml.
    Train {
        #[arg(long)]
        block: u32,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "models")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Finite-difference check of a block's backward pass.
    Gradcheck {
        #[arg(long)]
        block: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn simulate(mut c: Config, scheme: Vec<String>, seed: Option<u64>, out: &Path) -> Result<()> {
    if !scheme.is_empty() {
        c.run.schemes = scheme;
    }
    if let Some(s) = seed {
        c.run.seed = s;
    }
    c.validate()?;
    let rows = run_scenario(&Scenario::new(c.clone())?)?;
    std::fs::create_dir_all(out)?;
    write_results_csv(BufWriter::new(File::create(out.join("results.csv"))?), &c, &rows)?;
    write_timing_csv(BufWriter::new(File::create(out.join("timing.csv"))?), &rows)?;
    for r in &rows {
        println!("{} = {:<8} {:<10} bound {:.3e}", r.sweep, r.sweep_value, r.scheme.to_string(), r.ber_bound);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { config, scheme, seed, out } => simulate(load(&config)?, scheme, seed, &out),
        Cmd::Spots { config, pose, lens, out } => {
            let c = load(&config)?;
            if pose.len() != 5 || lens.len() != 3 {
                return Err(Error::config("--pose takes x,y,z,theta_R,phi_R and --lens takes f,theta_L,phi_L"));
            }
            let rx = c.receiver()?;
            let p = Pose::from_degrees(Vec3::new(pose[0], pose[1], pose[2]), pose[3], pose[4])?;
            let l = LensState::from_degrees(lens[0], lens[1], lens[2], rx.d_len);
            if !c.bounds().contains(&l) {
                return Err(Error::config("--lens: outside the [lens] bounds"));
            }
            let s = spot_diagram(&p, &l, &c.room()?, &rx, &out)?;
            println!("{} of {} visible spots clipped; wrote {}", s.clipped.len(), s.visible.len(), out.display());
            Ok(())
        }
        Cmd::Dataset { paths, config, out, seed } => {
            let c = load(&config)?;
            let n = paths.unwrap_or(c.dataset.paths);
            let sizes = build_pbml_dataset(&c, n, seed.unwrap_or(c.run.seed), &out)?;
            println!("train {} / val {} / test {} rows in {}", sizes.train, sizes.val, sizes.test, out.display());
            Ok(())
        }
        Cmd::Train { block, data, out, config, seed } => {
            let c = load(&config)?;
            let id = BlockId::from_index(block).map_err(|e| Error::config(format!("--block: {e}")))?;
            let t = train_from_dir(&c, id, &data, &out, seed.unwrap_or(c.run.seed))?;
            println!("best epoch {}, test mse {:.4e}; wrote {}", t.best_epoch, t.test_loss, out.join(format!("block{block}.pbml")).display());
            Ok(())
        }
        Cmd::Gradcheck { block, seed } => {
            let id = BlockId::from_index(block).map_err(|e| Error::config(format!("--block: {e}")))?;
            let err = gradient_check(id, &Config::default().net_spec()?, seed)?;
            println!("block {block}: max relative error {err:.3e}");
            if err < 1e-5 {
                Ok(())
            } else {
                Err(Error::Divergence(format!("gradient check failed: {err:.3e}")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
