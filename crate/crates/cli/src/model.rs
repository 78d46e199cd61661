//! The response behind every sample cloud. The pipeline only sees [`Model`],
//! so tests can substitute closed-form responses for the harvester.

use harvester_core::classify::{classify_motion, ClassifyOptions, MotionLabel};
use harvester_core::dynamics::{integrate, steady_mean_power_batch, HarvesterParams, IntegratorSettings};
use harvester_core::Result;
use rayon::prelude::*;

pub trait Model: Sync {
    /// Mean power at each point, in input order.
    fn mean_power(&self, points: &[HarvesterParams]) -> Vec<Result<f64>>;

    /// Motion regime at one point, when the model has dynamics.
    fn label(&self, _params: &HarvesterParams) -> Result<Option<MotionLabel>> {
        Ok(None)
    }
}

/// Direct integration of the harvester equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harvester {
    pub settings: IntegratorSettings,
    pub classify: ClassifyOptions,
}

/// Points handed to one worker; a multiple of the integrator lane width.
const CHUNK: usize = 32;

impl Model for Harvester {
    fn mean_power(&self, points: &[HarvesterParams]) -> Vec<Result<f64>> {
        points.par_chunks(CHUNK).flat_map_iter(|c| steady_mean_power_batch(c, &self.settings)).collect()
    }

    fn label(&self, params: &HarvesterParams) -> Result<Option<MotionLabel>> {
        let s = &self.settings;
        let traj = integrate(params, s.ic, s.t_end, s.dt)?.tail(s.transient_fraction);
        Ok(Some(classify_motion(&traj, params, &self.classify)?))
    }
}

/// A closed-form response `power = f(params)`.
pub struct FnModel<F>(pub F);

impl<F: Fn(&HarvesterParams) -> f64 + Sync> Model for FnModel<F> {
    fn mean_power(&self, points: &[HarvesterParams]) -> Vec<Result<f64>> {
        points.iter().map(|p| Ok((self.0)(p))).collect()
    }
}
