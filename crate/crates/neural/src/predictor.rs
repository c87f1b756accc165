//! Trained blocks bundled with their feature scalers, their on-disk format,
//! and the glue that turns them into lens settings.

use std::collections::VecDeque;
use std::io::{Read, Write};

use lensvlc_core::geometry::{LensState, Pose, Vec3};
use lensvlc_core::optimizers::{LensBounds, LensPredictor};

use crate::blocks::{BlockId, Net, POSE_LEN};
use crate::error::{Error, Result};
use crate::params::{read_params, write_params, Params};
use crate::spec::NetSpec;
use crate::tensor::Tensor;
use crate::train::{Standardizer, Trained};

const SCALER_NAMES: [&str; 4] = ["scale.in.mean", "scale.in.std", "scale.out.mean", "scale.out.std"];

pub fn pose_features(pose: &Pose) -> [f64; POSE_LEN] {
    let p = pose.position;
    [p.x, p.y, p.z, pose.theta_r, pose.phi_r]
}

/// Inverse of [`pose_features`]; the polar angle is clamped into range.
pub fn pose_from_features(v: &[f64]) -> Result<Pose> {
    if v.len() != POSE_LEN {
        return Err(Error::Shape {
            what: "pose vector",
            expected: vec![POSE_LEN],
            got: vec![v.len()],
        });
    }
    let phi = v[4].clamp(0.0, std::f64::consts::FRAC_PI_2);
    Ok(Pose::new(Vec3::new(v[0], v[1], v[2]), v[3], phi)?)
}

#[derive(Debug, Clone)]
pub struct BlockModel {
    pub net: Net,
    pub params: Params,
    pub input_scaler: Standardizer,
    pub target_scaler: Standardizer,
}

impl BlockModel {
    pub fn from_trained(net: Net, t: Trained) -> BlockModel {
        BlockModel {
            net,
            params: t.params,
            input_scaler: t.input_scaler,
            target_scaler: t.target_scaler,
        }
    }

    /// Forward pass in raw units.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.net.forward(&self.params, &self.input_scaler.apply(x))?;
        Ok(self.target_scaler.invert(&y))
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mut all = self.params.clone();
        for (name, v) in SCALER_NAMES.iter().zip([
            &self.input_scaler.mean,
            &self.input_scaler.std,
            &self.target_scaler.mean,
            &self.target_scaler.std,
        ]) {
            all.names.push((*name).to_string());
            all.tensors.push(Tensor::vector(v.clone()));
        }
        write_params(w, self.net.id as u32, &all)
    }

    /// Reads a model written by [`BlockModel::save`] and checks it against
    /// the layout `spec` implies.
    pub fn load<R: Read>(r: R, spec: &NetSpec, side: usize) -> Result<BlockModel> {
        let (block, mut all) = read_params(r)?;
        let net = Net::new(BlockId::from_index(block)?, spec, side)?;
        if all.tensors.len() < SCALER_NAMES.len() {
            return Err(Error::Format("missing scaler tensors".into()));
        }
        let at = all.tensors.len() - SCALER_NAMES.len();
        let names = all.names.split_off(at);
        let mut scalers = all.tensors.split_off(at);
        if names.iter().zip(SCALER_NAMES).any(|(a, b)| a != b) {
            return Err(Error::Format("scaler tensors out of order".into()));
        }
        if !net.zero_params()?.same_layout(&all) {
            return Err(Error::Format("parameter layout does not match the network spec".into()));
        }
        let mut take = || scalers.remove(0).into_data();
        let (im, is, om, os) = (take(), take(), take(), take());
        if im.len() != net.input_len() || is.len() != net.input_len() || om.len() != net.output_len() || os.len() != net.output_len() {
            return Err(Error::Format("scaler length does not match the network".into()));
        }
        Ok(BlockModel {
            net,
            params: all,
            input_scaler: Standardizer { mean: im, std: is },
            target_scaler: Standardizer { mean: om, std: os },
        })
    }
}

/// The lens regressor as a drop-in scheme: pose in, lens out. Outputs are
/// clamped to `[0, 1]` before mapping back through the bounds.
#[derive(Debug, Clone)]
pub struct LensRegressor {
    pub model: BlockModel,
    pub bounds: LensBounds,
    pub d_len: f64,
}

impl LensRegressor {
    pub fn lens_for(&self, pose: &Pose) -> Result<LensState> {
        let u = self.model.predict(&pose_features(pose))?;
        Ok(self.bounds.denormalize([u[0], u[1], u[2]], self.d_len))
    }
}

impl LensPredictor for LensRegressor {
    fn predict_lens(&self, pose: &Pose) -> lensvlc_core::Result<LensState> {
        self.lens_for(pose).map_err(|e| lensvlc_core::Error::Predictor(e.to_string()))
    }
}

/// Full online chain: power map to pose estimate, a window of estimates to
/// the next pose, and that pose to a lens setting for the next slot.
#[derive(Debug, Clone)]
pub struct PbmlPipeline {
    pub estimator: BlockModel,
    pub predictor: BlockModel,
    pub regressor: LensRegressor,
    history: VecDeque<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineStep {
    pub estimate: Pose,
    /// `None` until the history window has filled.
    pub predicted: Option<Pose>,
    pub lens: Option<LensState>,
}

impl PbmlPipeline {
    pub fn new(estimator: BlockModel, predictor: BlockModel, regressor: LensRegressor) -> PbmlPipeline {
        PbmlPipeline {
            estimator,
            predictor,
            regressor,
            history: VecDeque::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.predictor.net.spec.recurrent.n_i
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn step(&mut self, power: &Tensor) -> Result<PipelineStep> {
        let est = self.estimator.predict(power.data())?;
        let estimate = pose_from_features(&est)?;
        self.history.push_back(est);
        while self.history.len() > self.window() {
            self.history.pop_front();
        }
        if self.history.len() < self.window() {
            return Ok(PipelineStep { estimate, predicted: None, lens: None });
        }
        let window: Vec<f64> = self.history.iter().flatten().copied().collect();
        let next = pose_from_features(&self.predictor.predict(&window)?)?;
        let lens = self.regressor.lens_for(&next)?;
        Ok(PipelineStep {
            estimate,
            predicted: Some(next),
            lens: Some(lens),
        })
    }
}
