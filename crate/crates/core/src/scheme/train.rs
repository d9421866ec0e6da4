//! Desk-scale training of the scheme on the spatial objective alone.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::spatial_loss_on_tape;
use super::params::{SchemeConfig, SchemeParams};
use super::stages::{encode_scene_stub, forward_on_tape, SceneFeatures};
use crate::diff::{Tape, Tensor2, Var};
use crate::error::{Error, Result};
use crate::geometry::{Box3, Point3, PointCloud};
use crate::scene::SceneRecord;

/// Uniform samples inside every object box plus a floor layer spanning the scene bounds.
pub fn sample_scene_cloud(scene: &SceneRecord, n_points: usize, seed: u64) -> Result<PointCloud> {
    if scene.objects.is_empty() {
        return Err(Error::invalid(
            "cannot sample a cloud from a scene without objects",
        ));
    }
    let bounds = scene.bounds()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_part = n_points / (scene.objects.len() + 1);
    let mut points = Vec::with_capacity(n_points);
    let uniform_in = |lo: [f64; 3], hi: [f64; 3], rng: &mut ChaCha8Rng| {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = if hi[a] > lo[a] {
                rng.gen_range(lo[a]..hi[a])
            } else {
                lo[a]
            };
        }
        Point3::from_array(p)
    };
    for o in &scene.objects {
        for _ in 0..per_part {
            points.push(uniform_in(o.bbox.min(), o.bbox.max(), &mut rng));
        }
    }
    let floor_hi = [bounds.max[0], bounds.max[1], bounds.min[2]];
    while points.len() < n_points {
        points.push(uniform_in(bounds.min, floor_hi, &mut rng));
    }
    PointCloud::new(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: SchemeConfig,
    pub steps: usize,
    pub learning_rate: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Raw cloud size before the encoder subsamples it.
    pub cloud_points: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: SchemeConfig::toy(),
            steps: 500,
            learning_rate: 1e-2,
            alpha1: 1.0,
            alpha2: 1.0,
            cloud_points: 1024,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStep {
    pub step: usize,
    pub l_center: f64,
    pub l_psc: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    /// One entry per update (losses before the update) plus a final evaluation.
    pub steps: Vec<TrainStep>,
    pub params: SchemeParams,
    pub scene_diagonal: f64,
}

impl TrainTrace {
    pub fn initial(&self) -> &TrainStep {
        &self.steps[0]
    }

    pub fn last(&self) -> &TrainStep {
        self.steps.last().expect("trace is never empty")
    }
}

/// Plain gradient descent on `alpha1 * L_psc + alpha2 * L_center`, with targets
/// reassigned from the refined positions at every step.
pub fn train_toy(scene: &SceneRecord, cfg: &TrainConfig) -> Result<TrainTrace> {
    if scene.objects.len() < 2 {
        return Err(Error::invalid(
            "training needs a scene with at least 2 objects",
        ));
    }
    scene.validate()?;
    cfg.scheme.validate()?;
    let cloud = sample_scene_cloud(scene, cfg.cloud_points, cfg.seed)?;
    let features = encode_scene_stub(&cloud, &cfg.scheme)?;
    let objects = scene.boxes();
    let mut params = SchemeParams::init(&cfg.scheme, cfg.seed)?;
    let mut steps = Vec::with_capacity(cfg.steps + 1);

    for step in 0..=cfg.steps {
        let update = step < cfg.steps;
        let (record, grads) = loss_and_grads(&features, &objects, &params, cfg, update)
            .map_err(|e| at_step(e, step))?;
        if !record.total.is_finite() {
            return Err(Error::numeric(
                format!("train step {step}"),
                "non-finite loss",
            ));
        }
        steps.push(TrainStep { step, ..record });
        if let Some(grads) = grads {
            let mut leaves = params.flatten();
            for (leaf, g) in leaves.iter_mut().zip(&grads) {
                for (w, dw) in leaf.data_mut().iter_mut().zip(g.data()) {
                    *w -= cfg.learning_rate * dw;
                }
            }
            params = params.with_leaves(&leaves)?;
            if !params.is_finite() {
                return Err(Error::numeric(
                    format!("train step {step}"),
                    "parameters diverged",
                ));
            }
        }
    }
    Ok(TrainTrace {
        steps,
        params,
        scene_diagonal: scene.bounds()?.diagonal(),
    })
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric { op, detail } => {
            Error::numeric(format!("train step {step} ({op})"), detail)
        }
        other => other,
    }
}

fn loss_and_grads(
    features: &SceneFeatures,
    objects: &[Box3],
    params: &SchemeParams,
    cfg: &TrainConfig,
    want_grads: bool,
) -> Result<(TrainStep, Option<Vec<Tensor2>>)> {
    let mut tape = Tape::new();
    let vars: SchemeParams<Var> = params.map(&mut |_, t| tape.param(t.clone()));
    let fwd = forward_on_tape(&mut tape, features, &vars, &cfg.scheme, false)?;
    let loss = spatial_loss_on_tape(&mut tape, fwd.p_refined, objects, cfg.alpha1, cfg.alpha2)?;
    let record = TrainStep {
        step: 0,
        l_center: tape.value(loss.l_center).get(0, 0),
        l_psc: loss.l_psc.map_or(0.0, |v| tape.value(v).get(0, 0)),
        total: tape.value(loss.total).get(0, 0),
    };
    if !want_grads {
        return Ok((record, None));
    }
    tape.backward(loss.total)?;
    let grads = vars
        .leaves()
        .into_iter()
        .zip(params.leaves())
        .map(|(v, t)| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(t.rows(), t.cols()))
        })
        .collect();
    Ok((record, Some(grads)))
}
