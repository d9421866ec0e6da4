//! Center and pairwise-spatial-constraint losses, the weighted total, and
//! the whole-scheme gradient check.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{block_of, SchemeConfig, SchemeParams};
use super::stages::{forward_on_tape, points_to_rows, rows_to_points, SceneFeatures};
use crate::diff::{
    analytic_gradients, evaluate, probe_coordinate, within_bracket_budget, Tape, Tensor2, Var,
};
use crate::error::{Error, Result};
use crate::geometry::{nearest_object_centroid, Box3, Point3};
use crate::math;

fn check_pairing(pred: &[Point3], gt: &[Point3]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Mean Euclidean distance between paired points.
pub fn loss_center(pred: &[Point3], gt: &[Point3]) -> Result<f64> {
    check_pairing(pred, gt)?;
    if pred.is_empty() {
        return Err(Error::invalid("center loss over zero referents"));
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| p.dist(*g)).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PscLoss {
    pub value: f64,
    /// Set when there were fewer than two referents, so no pairs.
    pub degenerate: bool,
}

/// Mean over all unordered pairs of `|d_pred(i, j) - d_gt(i, j)|`.
pub fn loss_psc(pred: &[Point3], gt: &[Point3]) -> Result<PscLoss> {
    check_pairing(pred, gt)?;
    let m = pred.len();
    if m < 2 {
        return Ok(PscLoss {
            value: 0.0,
            degenerate: true,
        });
    }
    let mut sum = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            sum += math::abs(pred[i].dist(pred[j]) - gt[i].dist(gt[j]));
        }
    }
    Ok(PscLoss {
        value: sum / (m * (m - 1) / 2) as f64,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_llm: f64,
    pub l_psc: f64,
    pub l_center: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub total: f64,
}

/// `l_llm + alpha1 * l_psc + alpha2 * l_center`.
pub fn loss_total(
    l_llm: f64,
    l_psc: f64,
    l_center: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<LossBreakdown> {
    let named = [
        ("l_llm", l_llm),
        ("l_psc", l_psc),
        ("l_center", l_center),
        ("alpha1", alpha1),
        ("alpha2", alpha2),
    ];
    if let Some((name, v)) = named.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{name} must be finite and >= 0, got {v}"
        )));
    }
    Ok(LossBreakdown {
        l_llm,
        l_psc,
        l_center,
        alpha1,
        alpha2,
        total: l_llm + alpha1 * l_psc + alpha2 * l_center,
    })
}

/// Targets for each referent: the center of the nearest object.
pub fn nearest_centroid_targets(positions: &[Point3], objects: &[Box3]) -> Result<Vec<Point3>> {
    positions
        .iter()
        .map(|p| nearest_object_centroid(*p, objects).map(|(_, c)| c))
        .collect()
}

pub fn center_loss_on_tape(tape: &mut Tape, pred: Var, gt: &[Point3]) -> Result<Var> {
    let target = tape.constant(points_to_rows(gt));
    let diff = tape.sub(pred, target)?;
    let norms = tape.l2_norm_rows(diff)?;
    tape.mean(norms)
}

/// `None` when there are fewer than two referents.
pub fn psc_loss_on_tape(tape: &mut Tape, pred: Var, gt: &[Point3]) -> Result<Option<Var>> {
    let m = gt.len();
    if tape.value(pred).rows() != m {
        return Err(Error::invalid(
            "psc loss: prediction and target counts differ",
        ));
    }
    if m < 2 {
        return Ok(None);
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    // Pair-difference operator: row (i, j) has +1 at i and -1 at j.
    let mut op = Tensor2::zeros(pairs.len(), m);
    let mut gt_dist = Tensor2::zeros(pairs.len(), 1);
    for (r, &(i, j)) in pairs.iter().enumerate() {
        op.set(r, i, 1.0);
        op.set(r, j, -1.0);
        gt_dist.set(r, 0, gt[i].dist(gt[j]));
    }
    let op = tape.constant(op);
    let gt_dist = tape.constant(gt_dist);
    let deltas = tape.matmul(op, pred)?;
    let dist = tape.l2_norm_rows(deltas)?;
    let err = tape.sub(dist, gt_dist)?;
    let err = tape.abs(err)?;
    tape.mean(err).map(Some)
}

/// Loss vars for one step of the spatial objective.
pub struct SpatialLossVars {
    pub total: Var,
    pub l_center: Var,
    pub l_psc: Option<Var>,
    pub targets: Vec<Point3>,
}

/// `alpha1 * L_psc + alpha2 * L_center` with targets assigned from the current positions.
pub fn spatial_loss_on_tape(
    tape: &mut Tape,
    positions: Var,
    objects: &[Box3],
    alpha1: f64,
    alpha2: f64,
) -> Result<SpatialLossVars> {
    let targets = nearest_centroid_targets(&rows_to_points(tape.value(positions)), objects)?;
    let l_center = center_loss_on_tape(tape, positions, &targets)?;
    let l_psc = psc_loss_on_tape(tape, positions, &targets)?;
    let mut total = tape.scale(l_center, alpha2)?;
    if let Some(psc) = l_psc {
        let weighted = tape.scale(psc, alpha1)?;
        total = tape.add(total, weighted)?;
    }
    Ok(SpatialLossVars {
        total,
        l_center,
        l_psc,
        targets,
    })
}

/// Largest gradient discrepancy for one reporting block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockError {
    pub block: String,
    pub max_rel_error: f64,
    pub values: usize,
    /// Coordinates left out because a kink sits inside the difference window.
    pub bracketed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeGradReport {
    pub blocks: Vec<BlockError>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Central-difference check of every parameter of the full scheme, grouped by block.
///
/// The objective is the spatial loss on the refined positions plus a fixed
/// random linear probe of the visual prompt, so the projector is covered too.
/// Parameters are drawn with [`SchemeParams::random`] so no block sits at an
/// all-zero initialization.
pub fn grad_check_scheme(
    scene: &SceneFeatures,
    objects: &[Box3],
    cfg: &SchemeConfig,
    seed: u64,
    eps: f64,
    tol: f64,
) -> Result<SchemeGradReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
    }
    let params = SchemeParams::random(cfg, seed, 0.3)?;
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let probe = Tensor2::from_fn(cfg.n_referents, cfg.prompt_width, |_, _| {
        rng.gen_range(-1.0..1.0)
    });

    let mut objective = |tape: &mut Tape, leaves: &[Var]| -> Result<Var> {
        let mut it = leaves.iter();
        let vars = params.map(&mut |_, _| *it.next().expect("leaf count"));
        let fwd = forward_on_tape(tape, scene, &vars, cfg, true)?;
        let loss = spatial_loss_on_tape(tape, fwd.p_refined, objects, 1.0, 1.0)?;
        let prompt = fwd.prompt.expect("projector requested");
        let probe = tape.constant(probe.clone());
        let weighted = tape.mul(prompt, probe)?;
        let probe_term = tape.mean(weighted)?;
        tape.add(loss.total, probe_term)
    };

    let flat = params.flatten();
    let analytic = analytic_gradients(&flat, &mut objective)?;
    let f0 = evaluate(&flat, &mut objective)?;
    let mut work = flat.clone();
    let mut blocks: Vec<BlockError> = Vec::new();
    for (p, name) in names.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut bracketed = 0;
        for k in 0..flat[p].data().len() {
            let probe = probe_coordinate(
                &mut work,
                p,
                k,
                eps,
                tol,
                f0,
                analytic[p].data()[k],
                &mut objective,
            )?;
            if probe.bracketed {
                bracketed += 1;
            } else {
                worst = worst.max(probe.rel_error);
            }
        }
        let values = flat[p].data().len();
        let block = block_of(name);
        match blocks.last_mut() {
            Some(b) if b.block == block => {
                b.max_rel_error = b.max_rel_error.max(worst);
                b.values += values;
                b.bracketed += bracketed;
            }
            _ => blocks.push(BlockError {
                block: block.to_string(),
                max_rel_error: worst,
                values,
                bracketed,
            }),
        }
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    let bracketed = blocks.iter().map(|b| b.bracketed).sum();
    let values = blocks.iter().map(|b| b.values).sum();
    Ok(SchemeGradReport {
        blocks,
        max_rel_error,
        tol,
        passed: max_rel_error < tol && within_bracket_budget(bracketed, values),
    })
}
