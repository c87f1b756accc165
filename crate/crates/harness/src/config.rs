//! Run configuration. Every field defaults to the reference simulation setup, so
//! an empty file is a valid configuration. Angles are in degrees, lengths in
//! metres.

use std::path::{Path, PathBuf};

use lensvlc_core::dynamics::{ArParams, ClothoidParams};
use lensvlc_core::geometry::LensState;
use lensvlc_core::gsm::GsmConfig;
use lensvlc_core::optics::{Aperture, ReceiverConfig, RoomConfig, SpotModel};
use lensvlc_core::optimizers::{GridSpec, LensBounds, SchemeTag};
use lensvlc_neural::ops::ConvKind;
use lensvlc_neural::spec::{Conv2Mode, ConvSpec, DenseSpec, RecurrentSpec, TrainSpec};
use lensvlc_neural::NetSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub room: RoomSection,
    pub receiver: ReceiverSection,
    pub gsm: GsmSection,
    pub lens: LensSection,
    pub grid: GridSection,
    pub mobility: MobilitySection,
    pub orientation: OrientationSection,
    pub dataset: DatasetSection,
    pub network: NetworkSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub schemes: Vec<String>,
    /// Swept quantity: `snr_db`, `sigma_phi2`, `d_tx`, `n_t`, `n_r` or `d_rx`.
    pub sweep: String,
    pub values: Vec<f64>,
    /// Average SNR used when the sweep is over something else.
    pub snr_db: f64,
    /// Trajectory samples averaged per sweep point.
    pub poses: usize,
    /// Monte Carlo trials per pose; 0 reports the bound only.
    pub trials: u64,
    pub seed: u64,
    /// Per-pose bounds are capped here before averaging.
    pub bound_cap: f64,
    /// Directory holding `block3.pbml`, needed by the `pbml` scheme.
    pub model_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            name: "baseline".into(),
            schemes: ["exhaustive", "cls", "vulo", "none"].map(String::from).to_vec(),
            sweep: "snr_db".into(),
            values: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            snr_db: 30.0,
            poses: 200,
            trials: 0,
            seed: 1,
            bound_cap: 0.5,
            model_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSection {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub n_t: usize,
    pub d_tx: f64,
    pub d_ts: f64,
    pub led_height: f64,
    pub theta_half_deg: f64,
}

impl Default for RoomSection {
    fn default() -> Self {
        let r = RoomConfig::default();
        RoomSection {
            x_m: r.x_m,
            y_m: r.y_m,
            z_m: r.z_m,
            n_t: r.n_t,
            d_tx: r.d_tx,
            d_ts: r.d_ts,
            led_height: r.led_height,
            theta_half_deg: r.theta_half.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    pub n_r: usize,
    pub d_rs: f64,
    pub d_rx: f64,
    pub fov_deg: f64,
    pub responsivity: f64,
    pub k_eta: f64,
    pub n_l: f64,
    pub d_len: f64,
    /// `defocused` or `chief_ray`.
    pub spot_model: String,
    /// Constant aperture area in m²; unset means `π (k_η f)²`.
    pub aperture_area: Option<f64>,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        let r = ReceiverConfig::default();
        ReceiverSection {
            n_r: r.n_r,
            d_rs: r.d_rs,
            d_rx: r.d_rx,
            fov_deg: r.phi_fov.to_degrees(),
            responsivity: r.responsivity,
            k_eta: r.k_eta,
            n_l: r.n_l,
            d_len: r.d_len,
            spot_model: "defocused".into(),
            aperture_area: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsmSection {
    pub n_a: usize,
    pub m: usize,
    pub i_p: f64,
    pub alpha: f64,
    /// Noise level used where no SNR target applies.
    pub sigma: f64,
}

impl Default for GsmSection {
    fn default() -> Self {
        let g = GsmConfig::default();
        GsmSection {
            n_a: g.n_a,
            m: g.m,
            i_p: g.i_p,
            alpha: g.alpha,
            sigma: g.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensSection {
    pub f_min: f64,
    pub f_max: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    /// The lens used by the no-adjustment scheme.
    pub fixed_f: f64,
    pub fixed_theta_deg: f64,
    pub fixed_phi_deg: f64,
}

impl Default for LensSection {
    fn default() -> Self {
        let b = LensBounds::default();
        LensSection {
            f_min: b.f_min,
            f_max: b.f_max,
            theta_min_deg: b.theta_min.to_degrees(),
            theta_max_deg: b.theta_max.to_degrees(),
            phi_min_deg: b.phi_min.to_degrees(),
            phi_max_deg: b.phi_max.to_degrees(),
            fixed_f: 0.03,
            fixed_theta_deg: 0.0,
            fixed_phi_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_f: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub eps_ber: f64,
    pub max_refinements: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection {
            n_f: g.n_f,
            n_theta: g.n_theta,
            n_phi: g.n_phi,
            eps_ber: g.eps_ber,
            max_refinements: g.max_refinements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    pub x0: f64,
    pub y0: f64,
    pub theta0_deg: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub sigma_p2: f64,
    pub speed: f64,
    pub sample_time: f64,
    /// `[x_min, x_max, y_min, y_max]`.
    pub bounds: [f64; 4],
    /// Receiver height above the floor.
    pub z: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        let c = ClothoidParams::default();
        MobilitySection {
            x0: c.x0,
            y0: c.y0,
            theta0_deg: c.theta0.to_degrees(),
            kappa0: c.kappa0,
            kappa1: c.kappa1,
            sigma_p2: c.sigma_p2,
            speed: c.speed,
            sample_time: c.sample_time,
            bounds: c.bounds,
            z: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationSection {
    pub mean_phi_deg: f64,
    /// Variance of the polar angle in deg².
    pub sigma_phi2_deg2: f64,
    /// Coherence time (s).
    pub t_c: f64,
    /// Autocorrelation reached after one coherence time.
    pub rho_c: f64,
}

impl Default for OrientationSection {
    fn default() -> Self {
        OrientationSection {
            mean_phi_deg: 29.67,
            sigma_phi2_deg2: 100.0,
            t_c: 1e-3,
            rho_c: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub paths: usize,
    pub samples_per_path: usize,
    /// Slots averaged into each power matrix.
    pub n_ta: usize,
    /// Add receiver noise to the power samples.
    pub noise: bool,
    pub snr_db: f64,
    /// Exhaustive-search grid for the lens labels.
    pub label_grid: [usize; 3],
    pub label_refinements: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            paths: 50,
            samples_per_path: 200,
            n_ta: 10,
            noise: true,
            snr_db: 30.0,
            label_grid: [4, 6, 4],
            label_refinements: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n1: usize,
    pub k1: usize,
    pub m1: usize,
    pub n2: usize,
    pub k2: usize,
    pub m2: usize,
    pub nf1: usize,
    pub nf2: usize,
    /// `convolution` or `cross_correlation`.
    pub conv_kind: String,
    /// `fan_out` or `sum`.
    pub conv2_mode: String,
    pub n_i: usize,
    pub nl1: usize,
    pub nr1: usize,
    pub nl2: usize,
    pub nd1: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let s = NetSpec::default();
        NetworkSection {
            n1: s.conv.n1,
            k1: s.conv.k1,
            m1: s.conv.m1,
            n2: s.conv.n2,
            k2: s.conv.k2,
            m2: s.conv.m2,
            nf1: s.conv.nf1,
            nf2: s.conv.nf2,
            conv_kind: "convolution".into(),
            conv2_mode: "fan_out".into(),
            n_i: s.recurrent.n_i,
            nl1: s.recurrent.nl1,
            nr1: s.recurrent.nr1,
            nl2: s.recurrent.nl2,
            nd1: s.recurrent.nd1,
            d1: s.dense.d1,
            d2: s.dense.d2,
            d3: s.dense.d3,
            batch: s.train.batch,
            lr: s.train.lr,
            epochs: s.train.epochs,
            patience: s.train.patience,
        }
    }
}

/// The quantity a scenario sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SnrDb,
    SigmaPhi2,
    DTx,
    NT,
    NR,
    DRx,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SnrDb => "snr_db",
            SweepParam::SigmaPhi2 => "sigma_phi2",
            SweepParam::DTx => "d_tx",
            SweepParam::NT => "n_t",
            SweepParam::NR => "n_r",
            SweepParam::DRx => "d_rx",
        }
    }

    fn parse(s: &str) -> Result<SweepParam> {
        Ok(match s {
            "snr_db" => SweepParam::SnrDb,
            "sigma_phi2" => SweepParam::SigmaPhi2,
            "d_tx" => SweepParam::DTx,
            "n_t" => SweepParam::NT,
            "n_r" => SweepParam::NR,
            "d_rx" => SweepParam::DRx,
            other => return Err(Error::config(format!("run.sweep: unknown parameter {other:?}"))),
        })
    }
}

fn whole(v: f64, field: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::config(format!("run.values: {field} needs positive integers, got {v}")))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section, reporting the first failure with its field path.
    pub fn validate(&self) -> Result<()> {
        self.room()?.validate()?;
        let rx = self.receiver()?;
        rx.validate()?;
        self.gsm()?.validate()?;
        self.bounds().validate()?;
        self.grid().validate()?;
        self.clothoid().validate()?;
        self.ar()?.validate()?;
        self.schemes()?;
        self.sweep_param()?;
        if self.run.values.is_empty() {
            return Err(Error::config("run.values: sweep needs at least one value"));
        }
        if self.run.poses == 0 {
            return Err(Error::config("run.poses: must be at least 1"));
        }
        if !(self.run.bound_cap > 0.0) {
            return Err(Error::config("run.bound_cap: must be positive"));
        }
        if self.dataset.n_ta == 0 || self.dataset.samples_per_path == 0 {
            return Err(Error::config("dataset: n_ta and samples_per_path must be at least 1"));
        }
        let sweep = self.sweep_param()?;
        for &v in &self.run.values {
            let mut c = self.clone();
            c.apply_sweep(sweep, v)?;
            c.room()?.validate()?;
            c.receiver()?.validate()?;
        }
        self.net_spec()?.validate(rx.grid_side())?;
        Ok(())
    }

    pub fn schemes(&self) -> Result<Vec<SchemeTag>> {
        if self.run.schemes.is_empty() {
            return Err(Error::config("run.schemes: at least one scheme is required"));
        }
        self.run
            .schemes
            .iter()
            .map(|s| s.parse::<SchemeTag>().map_err(|_| Error::config(format!("run.schemes: unknown scheme {s:?}"))))
            .collect()
    }

    pub fn sweep_param(&self) -> Result<SweepParam> {
        SweepParam::parse(&self.run.sweep)
    }

    /// Copy of the configuration with one sweep value applied.
    pub fn apply_sweep(&mut self, p: SweepParam, v: f64) -> Result<()> {
        match p {
            SweepParam::SnrDb => self.run.snr_db = v,
            SweepParam::SigmaPhi2 => self.orientation.sigma_phi2_deg2 = v,
            SweepParam::DTx => self.room.d_tx = v,
            SweepParam::NT => self.room.n_t = whole(v, "n_t")?,
            SweepParam::NR => self.receiver.n_r = whole(v, "n_r")?,
            SweepParam::DRx => self.receiver.d_rx = v,
        }
        Ok(())
    }

    pub fn room(&self) -> Result<RoomConfig> {
        let r = &self.room;
        Ok(RoomConfig {
            x_m: r.x_m,
            y_m: r.y_m,
            z_m: r.z_m,
            n_t: r.n_t,
            d_tx: r.d_tx,
            d_ts: r.d_ts,
            led_height: r.led_height,
            theta_half: r.theta_half_deg.to_radians(),
        })
    }

    pub fn receiver(&self) -> Result<ReceiverConfig> {
        let r = &self.receiver;
        let spot_model = match r.spot_model.as_str() {
            "defocused" => SpotModel::Defocused,
            "chief_ray" => SpotModel::ChiefRay,
            other => return Err(Error::config(format!("receiver.spot_model: unknown model {other:?}"))),
        };
        Ok(ReceiverConfig {
            n_r: r.n_r,
            d_rs: r.d_rs,
            d_rx: r.d_rx,
            phi_fov: r.fov_deg.to_radians(),
            responsivity: r.responsivity,
            k_eta: r.k_eta,
            n_l: r.n_l,
            d_len: r.d_len,
            aperture: r.aperture_area.map_or(Aperture::FocalScaled, Aperture::Fixed),
            spot_model,
        })
    }

    pub fn gsm(&self) -> Result<GsmConfig> {
        let g = &self.gsm;
        Ok(GsmConfig {
            n_t: self.room.n_t,
            n_a: g.n_a,
            m: g.m,
            i_p: g.i_p,
            alpha: g.alpha,
            responsivity: self.receiver.responsivity,
            sigma: g.sigma,
        })
    }

    pub fn bounds(&self) -> LensBounds {
        let l = &self.lens;
        LensBounds {
            f_min: l.f_min,
            f_max: l.f_max,
            theta_min: l.theta_min_deg.to_radians(),
            theta_max: l.theta_max_deg.to_radians(),
            phi_min: l.phi_min_deg.to_radians(),
            phi_max: l.phi_max_deg.to_radians(),
        }
    }

    pub fn fixed_lens(&self) -> LensState {
        let l = &self.lens;
        LensState::from_degrees(l.fixed_f, l.fixed_theta_deg, l.fixed_phi_deg, self.receiver.d_len)
    }

    pub fn grid(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            n_f: g.n_f,
            n_theta: g.n_theta,
            n_phi: g.n_phi,
            eps_ber: g.eps_ber,
            max_refinements: g.max_refinements,
        }
    }

    pub fn label_grid(&self) -> GridSpec {
        let d = &self.dataset;
        GridSpec {
            n_f: d.label_grid[0],
            n_theta: d.label_grid[1],
            n_phi: d.label_grid[2],
            eps_ber: self.grid.eps_ber,
            max_refinements: d.label_refinements,
        }
    }

    pub fn clothoid(&self) -> ClothoidParams {
        let m = &self.mobility;
        ClothoidParams {
            x0: m.x0,
            y0: m.y0,
            theta0: m.theta0_deg.to_radians(),
            kappa0: m.kappa0,
            kappa1: m.kappa1,
            sigma_p2: m.sigma_p2,
            speed: m.speed,
            sample_time: m.sample_time,
            bounds: m.bounds,
        }
    }

    pub fn ar(&self) -> Result<ArParams> {
        let o = &self.orientation;
        Ok(ArParams::from_targets(
            o.mean_phi_deg.to_radians(),
            o.sigma_phi2_deg2 * (std::f64::consts::PI / 180.0).powi(2),
            self.mobility.sample_time,
            o.t_c,
            o.rho_c,
        )?)
    }

    pub fn net_spec(&self) -> Result<NetSpec> {
        let n = &self.network;
        let kind = match n.conv_kind.as_str() {
            "convolution" => ConvKind::Convolution,
            "cross_correlation" => ConvKind::CrossCorrelation,
            other => return Err(Error::config(format!("network.conv_kind: unknown kind {other:?}"))),
        };
        let mode = match n.conv2_mode.as_str() {
            "fan_out" => Conv2Mode::FanOut,
            "sum" => Conv2Mode::Sum,
            other => return Err(Error::config(format!("network.conv2_mode: unknown mode {other:?}"))),
        };
        if !(n.lr >= 0.0 && n.lr.is_finite()) || n.batch == 0 {
            return Err(Error::config("network: need lr >= 0 and batch >= 1"));
        }
        Ok(NetSpec {
            conv: ConvSpec {
                n1: n.n1,
                k1: n.k1,
                m1: n.m1,
                n2: n.n2,
                k2: n.k2,
                m2: n.m2,
                nf1: n.nf1,
                nf2: n.nf2,
                kind,
                mode,
            },
            recurrent: RecurrentSpec {
                n_i: n.n_i,
                nl1: n.nl1,
                nr1: n.nr1,
                nl2: n.nl2,
                nd1: n.nd1,
            },
            dense: DenseSpec {
                d1: n.d1,
                d2: n.d2,
                d3: n.d3,
            },
            train: TrainSpec {
                batch: n.batch,
                lr: n.lr,
                epochs: n.epochs,
                patience: n.patience,
            },
        })
    }
}
