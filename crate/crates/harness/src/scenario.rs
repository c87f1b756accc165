//! Sweeps: for every sweep point and every trajectory pose, pick a lens with
//! each scheme, score it, and average over poses.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lensvlc_core::ber::{monte_carlo_ber, BoundEvaluator};
use lensvlc_core::dynamics::{make_trajectory, Trajectory};
use lensvlc_core::geometry::Pose;
use lensvlc_core::gsm::{build_codebook, sigma_for_snr, GsmCodebook, GsmConfig};
use lensvlc_core::optics::{ReceiverConfig, RoomConfig};
use lensvlc_core::optimizers::{solve_p1, LensBounds, LensPredictor, LinkModel, NoiseProtocol, Scheme, SchemeTag};
use lensvlc_neural::predictor::{BlockModel, LensRegressor};
use rayon::prelude::*;

use crate::config::{Config, SweepParam};
use crate::error::{Error, Result};

/// A validated configuration plus whatever it needs loaded from disk.
pub struct Scenario {
    pub config: Config,
    pub schemes: Vec<SchemeTag>,
    pub sweep: SweepParam,
    pub pbml: Option<LensRegressor>,
}

impl Scenario {
    pub fn new(config: Config) -> Result<Scenario> {
        config.validate()?;
        let schemes = config.schemes()?;
        let pbml = if schemes.contains(&SchemeTag::Pbml) {
            let dir = config
                .run
                .model_dir
                .clone()
                .ok_or_else(|| Error::config("run.model_dir: the pbml scheme needs a trained model directory"))?;
            Some(load_regressor(&config, &dir)?)
        } else {
            None
        };
        Ok(Scenario {
            sweep: config.sweep_param()?,
            schemes,
            pbml,
            config,
        })
    }

    pub fn with_regressor(config: Config, regressor: LensRegressor) -> Result<Scenario> {
        config.validate()?;
        Ok(Scenario {
            sweep: config.sweep_param()?,
            schemes: config.schemes()?,
            pbml: Some(regressor),
            config,
        })
    }
}

pub fn load_regressor(config: &Config, dir: &Path) -> Result<LensRegressor> {
    let path = dir.join("block3.pbml");
    let file = std::fs::File::open(&path).map_err(|e| Error::config(format!("run.model_dir: {}: {e}", path.display())))?;
    let rx = config.receiver()?;
    let model = BlockModel::load(std::io::BufReader::new(file), &config.net_spec()?, rx.grid_side())?;
    Ok(LensRegressor {
        model,
        bounds: config.bounds(),
        d_len: rx.d_len,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep: &'static str,
    pub sweep_value: f64,
    pub scheme: SchemeTag,
    /// Mean over poses of the capped union bound.
    pub ber_bound: f64,
    pub ber_simulated: Option<f64>,
    pub ci_halfwidth: f64,
    pub snr_db: f64,
    /// Bound evaluations summed over poses.
    pub evaluations: usize,
    pub wall_time_ms: f64,
}

/// Everything built from the configuration at one sweep point.
pub struct Link {
    pub room: RoomConfig,
    pub rx: ReceiverConfig,
    pub gsm: GsmConfig,
    pub codebook: GsmCodebook,
    pub evaluator: BoundEvaluator,
    pub bounds: LensBounds,
}

impl Link {
    pub fn from_config(c: &Config) -> Result<Link> {
        let gsm = c.gsm()?;
        let codebook = build_codebook(&gsm)?;
        Ok(Link {
            room: c.room()?,
            rx: c.receiver()?,
            evaluator: BoundEvaluator::new(&codebook)?,
            codebook,
            gsm,
            bounds: c.bounds(),
        })
    }

    pub fn model(&self, snr_db: f64) -> LinkModel<'_> {
        LinkModel {
            room: &self.room,
            rx: &self.rx,
            gsm: &self.gsm,
            codebook: &self.codebook,
            evaluator: &self.evaluator,
            noise: NoiseProtocol::TargetSnr(snr_db),
        }
    }
}

pub fn trajectory(c: &Config, n: usize, seed: u64) -> Result<Trajectory> {
    Ok(make_trajectory(&c.clothoid(), &c.ar()?, c.mobility.z, n, seed)?)
}

/// SplitMix64 mix of a master seed with a stream index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scheme_for<'a>(tag: SchemeTag, c: &Config, pbml: Option<&'a dyn LensPredictor>) -> Result<Scheme<'a>> {
    Ok(match tag {
        SchemeTag::Exhaustive => Scheme::Exhaustive(c.grid()),
        SchemeTag::Cls => Scheme::Cls,
        SchemeTag::Vulo => Scheme::Vulo,
        SchemeTag::Fixed => Scheme::Fixed(c.fixed_lens()),
        SchemeTag::Pbml => Scheme::Pbml(pbml.ok_or_else(|| Error::config("run.model_dir: no model loaded"))?),
    })
}

#[derive(Default)]
struct Acc {
    bound: f64,
    sim: f64,
    var: f64,
    evaluations: usize,
    ms: f64,
}

fn run_point(s: &Scenario, index: usize, value: f64) -> Result<Vec<ResultRow>> {
    let mut c = s.config.clone();
    c.apply_sweep(s.sweep, value)?;
    let link = Link::from_config(&c)?;
    let snr = c.run.snr_db;
    let model = link.model(snr);
    // Every point walks the same path so sweep curves are comparable.
    let traj = trajectory(&c, c.run.poses, c.run.seed)?;
    let poses: Vec<Pose> = traj.poses().copied().collect();
    let pbml = s.pbml.as_ref().map(|p| p as &dyn LensPredictor);
    let trials = c.run.trials;
    let mut acc: Vec<Acc> = s.schemes.iter().map(|_| Acc::default()).collect();
    for (k, pose) in poses.iter().enumerate() {
        for (a, &tag) in acc.iter_mut().zip(&s.schemes) {
            let t0 = Instant::now();
            let scheme = scheme_for(tag, &c, pbml)?;
            let r = solve_p1(&model, pose, &link.bounds, &scheme)?;
            a.bound += r.ber_bound.min(c.run.bound_cap);
            a.evaluations += r.evaluations;
            if trials > 0 {
                let h = model.channel(pose, &r.lens);
                let (p, hw) = match sigma_for_snr(&h, &link.codebook, &link.gsm, snr) {
                    Some(sigma) => {
                        let stream = derive_seed(derive_seed(c.run.seed, index as u64), k as u64);
                        let rep = monte_carlo_ber(&h, &link.codebook, &link.gsm.with_sigma(sigma), trials, stream)?;
                        (rep.simulated.unwrap_or(0.5), rep.ci_halfwidth)
                    }
                    // A dark receiver guesses every bit.
                    None => (0.5, 0.0),
                };
                a.sim += p;
                a.var += hw * hw;
            }
            a.ms += t0.elapsed().as_secs_f64() * 1e3;
        }
    }
    let n = poses.len() as f64;
    Ok(acc
        .into_iter()
        .zip(&s.schemes)
        .map(|(a, &tag)| ResultRow {
            scenario: c.run.name.clone(),
            sweep: s.sweep.name(),
            sweep_value: value,
            scheme: tag,
            ber_bound: a.bound / n,
            ber_simulated: (trials > 0).then(|| a.sim / n),
            ci_halfwidth: a.var.sqrt() / n,
            snr_db: snr,
            evaluations: a.evaluations,
            wall_time_ms: a.ms,
        })
        .collect())
}

/// Runs every sweep point; points run concurrently and come back in sweep
/// order. Deterministic for a given seed.
pub fn run_scenario(s: &Scenario) -> Result<Vec<ResultRow>> {
    let points: Vec<Result<Vec<ResultRow>>> = s
        .config
        .run
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| run_point(s, i, v))
        .collect();
    let mut rows = Vec::new();
    for p in points {
        rows.extend(p?);
    }
    Ok(rows)
}

pub const RESULTS_HEADER: &str = "scenario,sweep,sweep_value,scheme,ber_bound,ber_simulated,ci_halfwidth,snr_db,evaluations";

/// `# `-prefixed copy of the resolved configuration.
pub fn config_comment(c: &Config) -> String {
    let mut s = String::from("# resolved configuration\n");
    for line in c.to_toml().lines() {
        let _ = writeln!(s, "# {line}");
    }
    s
}

/// Results CSV: the configuration as a comment block, then one row per
/// (sweep point, scheme). Wall-clock times are left out so that repeated
/// runs are byte-identical; see [`write_timing_csv`].
pub fn write_results_csv<W: Write>(mut w: W, c: &Config, rows: &[ResultRow]) -> Result<()> {
    w.write_all(config_comment(c).as_bytes())?;
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:e},{},{:e},{},{}",
            r.scenario,
            r.sweep,
            r.sweep_value,
            r.scheme,
            r.ber_bound,
            r.ber_simulated.map(|v| format!("{v:e}")).unwrap_or_default(),
            r.ci_halfwidth,
            r.snr_db,
            r.evaluations
        )?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(mut w: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "sweep_value,scheme,wall_time_ms")?;
    for r in rows {
        writeln!(w, "{},{},{:.3}", r.sweep_value, r.scheme, r.wall_time_ms)?;
    }
    Ok(())
}
