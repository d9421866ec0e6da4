//! Forward stages of the referent pipeline.
//!
//! Each stage has a `*_on_tape` form that records onto a caller-owned [`Tape`]
//! (used for training and gradient checks) and a value-level wrapper that runs
//! it on a scratch tape with every parameter held constant.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Activation, Attention, Ffn, Linear, SchemeConfig, SchemeParams};
use crate::diff::{Tape, Tensor2, Var};
use crate::error::{Error, Result};
use crate::geometry::{
    ball_query, fps, knn_spatial_adjacency, FpsSeed, NeighborGroups, Point3, PointCloud,
    SpatialAdjacency,
};
use crate::math;

/// Encoded scene: `N x 3` positions and `N x d` features, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFeatures {
    positions: Tensor2,
    features: Tensor2,
}

impl SceneFeatures {
    pub fn new(positions: Tensor2, features: Tensor2) -> Result<Self> {
        if positions.cols() != 3 || positions.rows() != features.rows() || positions.rows() == 0 {
            return Err(Error::invalid(format!(
                "scene features need N x 3 positions and N x d features, got {:?} and {:?}",
                positions.shape(),
                features.shape()
            )));
        }
        Ok(SceneFeatures {
            positions,
            features,
        })
    }

    pub fn positions(&self) -> &Tensor2 {
        &self.positions
    }

    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    pub fn points(&self) -> Vec<Point3> {
        rows_to_points(&self.positions)
    }

    pub fn len(&self) -> usize {
        self.positions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }
}

/// Seeds drawn from the encoded scene by farthest point sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSet {
    pub positions: Tensor2,
    pub features: Tensor2,
    /// Row of each seed in the [`SceneFeatures`].
    pub source: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Intra,
    Gcn,
    Contextual,
    Refined,
}

/// Referent positions (`M x 3`) and features (`M x d`) at a given stage.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualReferentSet {
    pub positions: Tensor2,
    pub features: Tensor2,
    pub stage: Stage,
}

impl VisualReferentSet {
    pub fn new(positions: Tensor2, features: Tensor2, stage: Stage) -> Result<Self> {
        if positions.cols() != 3 || positions.rows() != features.rows() {
            return Err(Error::invalid(format!(
                "referents need M x 3 positions and M x d features, got {:?} and {:?}",
                positions.shape(),
                features.shape()
            )));
        }
        if !positions.is_finite() {
            return Err(Error::invalid("referent positions must be finite"));
        }
        Ok(VisualReferentSet {
            positions,
            features,
            stage,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<Point3> {
        rows_to_points(&self.positions)
    }

    fn expect_stage(&self, stage: Stage, op: &str) -> Result<()> {
        if self.stage != stage {
            return Err(Error::invalid(format!(
                "{op} expects {stage:?} referents, got {:?}",
                self.stage
            )));
        }
        Ok(())
    }
}

/// Projected referents for the language model, with positions carried alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualPrompt {
    pub rows: Tensor2,
    pub positions: Tensor2,
}

pub(crate) fn rows_to_points(t: &Tensor2) -> Vec<Point3> {
    (0..t.rows())
        .map(|r| Point3::new(t.get(r, 0), t.get(r, 1), t.get(r, 2)))
        .collect()
}

pub(crate) fn points_to_rows(points: &[Point3]) -> Tensor2 {
    Tensor2::from_fn(points.len(), 3, |r, c| points[r].to_array()[c])
}

/// Deterministic stand-in for a pretrained point encoder.
///
/// Subsamples `cfg.n_points` points with farthest point sampling and lifts
/// `(x, y, z, log(1 + local count))` through a seeded random projection
/// followed by a cosine, giving `cfg.feat_dim` features per point.
pub fn encode_scene_stub(cloud: &PointCloud, cfg: &SchemeConfig) -> Result<SceneFeatures> {
    if cloud.len() < cfg.n_points {
        return Err(Error::invalid(format!(
            "cloud has {} points, encoder needs {}",
            cloud.len(),
            cfg.n_points
        )));
    }
    let pts = cloud.points();
    let idx = fps(pts, cfg.n_points, FpsSeed::FarthestFromCentroid)?;
    let r2 = cfg.density_radius * cfg.density_radius;
    let d = cfg.feat_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.encoder_seed);
    let proj: Vec<[f64; 4]> = (0..d)
        .map(|_| core::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let phase: Vec<f64> = (0..d)
        .map(|_| rng.gen_range(0.0..core::f64::consts::TAU))
        .collect();

    let sampled: Vec<Point3> = idx.iter().map(|&i| pts[i]).collect();
    let positions = points_to_rows(&sampled);
    let mut features = Tensor2::zeros(sampled.len(), d);
    for (r, p) in sampled.iter().enumerate() {
        let count = pts.iter().filter(|q| q.dist_sq(*p) <= r2).count();
        let input = [p.x, p.y, p.z, math::ln(1.0 + count as f64)];
        for (c, (w, ph)) in proj.iter().zip(&phase).enumerate() {
            let z: f64 = w.iter().zip(&input).map(|(a, b)| a * b).sum();
            features.set(r, c, math::cos(z + ph));
        }
    }
    SceneFeatures::new(positions, features)
}

fn linear_on_tape(tape: &mut Tape, x: Var, l: &Linear<Var>) -> Result<Var> {
    let y = tape.matmul(x, l.weight)?;
    tape.add_row(y, l.bias)
}

pub(crate) fn ffn_on_tape(tape: &mut Tape, x: Var, f: &Ffn<Var>) -> Result<Var> {
    let h = linear_on_tape(tape, x, &f.hidden)?;
    let h = tape.relu(h)?;
    linear_on_tape(tape, h, &f.out)
}

/// Vars produced by the intra-referent stage.
pub struct IntraVars {
    pub seeds: SeedSet,
    pub p_vr: Var,
    pub f_vr: Var,
    pub groups: NeighborGroups,
}

/// Seeds by FPS, vote offsets, ball grouping around the voted positions, and
/// max-pooling of the lifted scene features of each group.
pub fn intra_on_tape(
    tape: &mut Tape,
    scene: &SceneFeatures,
    params: &SchemeParams<Var>,
    cfg: &SchemeConfig,
) -> Result<IntraVars> {
    let scene_points = scene.points();
    let source = fps(
        &scene_points,
        cfg.n_referents,
        FpsSeed::FarthestFromCentroid,
    )?;
    let seed_pos = Tensor2::from_fn(source.len(), 3, |r, c| scene.positions.get(source[r], c));
    let seed_feat = Tensor2::from_fn(source.len(), scene.feat_dim(), |r, c| {
        scene.features.get(source[r], c)
    });

    let f_enc = tape.constant(scene.features.clone());
    let f_seed = tape.constant(seed_feat.clone());
    let p_seed = tape.constant(seed_pos.clone());
    let offsets = ffn_on_tape(tape, f_seed, &params.vote)?;
    let p_vr = tape.add(p_seed, offsets)?;

    let voted = rows_to_points(tape.value(p_vr));
    let groups = ball_query(&voted, &scene_points, cfg.ball_radius, cfg.ball_max_k)?;
    let lifted = linear_on_tape(tape, f_enc, &params.lift)?;
    let lifted = tape.relu(lifted)?;
    let f_vr = tape.max_pool_groups(lifted, &groups)?;
    Ok(IntraVars {
        seeds: SeedSet {
            positions: seed_pos,
            features: seed_feat,
            source,
        },
        p_vr,
        f_vr,
        groups,
    })
}

/// `H <- act(Â H W)` for each layer weight.
pub fn gcn_on_tape(
    tape: &mut Tape,
    adjacency: &SpatialAdjacency,
    features: Var,
    weights: &[Var],
    activation: Activation,
) -> Result<Var> {
    let m = adjacency.size();
    let a = tape.constant(Tensor2::new(m, m, adjacency.matrix().to_vec())?);
    let mut h = features;
    for &w in weights {
        let ah = tape.matmul(a, h)?;
        h = tape.matmul(ah, w)?;
        if activation == Activation::Relu {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

/// Graph message passing over the k-NN proximity graph of referent positions.
pub fn inter_on_tape(
    tape: &mut Tape,
    p_vr: Var,
    f_vr: Var,
    params: &SchemeParams<Var>,
    k: usize,
    activation: Activation,
) -> Result<(Var, SpatialAdjacency)> {
    let adjacency = knn_spatial_adjacency(&rows_to_points(tape.value(p_vr)), k)?;
    let h = gcn_on_tape(tape, &adjacency, f_vr, &params.gcn, activation)?;
    Ok((h, adjacency))
}

/// Single-head scaled dot-product attention. Returns `(output, weights)`.
pub fn attention_on_tape(
    tape: &mut Tape,
    queries: Var,
    context: Var,
    a: &Attention<Var>,
) -> Result<(Var, Var)> {
    let q = tape.matmul(queries, a.query)?;
    let k = tape.matmul(context, a.key)?;
    let v = tape.matmul(context, a.value)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let width = tape.value(q).cols().max(1) as f64;
    let scores = tape.scale(scores, 1.0 / math::sqrt(width))?;
    let weights = tape.softmax_rows(scores)?;
    let mixed = tape.matmul(weights, v)?;
    let out = tape.matmul(mixed, a.output)?;
    Ok((out, weights))
}

/// Self-attention over referents then cross-attention into the scene, each
/// followed by a feed-forward net, all with residual connections.
pub fn contextual_on_tape(
    tape: &mut Tape,
    f_vr: Var,
    f_enc: Var,
    params: &SchemeParams<Var>,
    blocks: usize,
) -> Result<Var> {
    if blocks > params.blocks.len() {
        return Err(Error::invalid(format!(
            "{blocks} attention blocks requested, {} configured",
            params.blocks.len()
        )));
    }
    let mut x = f_vr;
    for block in &params.blocks[..blocks] {
        let (sa, _) = attention_on_tape(tape, x, x, &block.self_attn)?;
        x = tape.add(x, sa)?;
        let ff = ffn_on_tape(tape, x, &block.self_ffn)?;
        x = tape.add(x, ff)?;
        let (ca, _) = attention_on_tape(tape, x, f_enc, &block.cross_attn)?;
        x = tape.add(x, ca)?;
        let ff = ffn_on_tape(tape, x, &block.cross_ffn)?;
        x = tape.add(x, ff)?;
    }
    Ok(x)
}

pub fn refine_on_tape(
    tape: &mut Tape,
    p_vr: Var,
    f: Var,
    params: &SchemeParams<Var>,
) -> Result<Var> {
    let offsets = ffn_on_tape(tape, f, &params.refine)?;
    tape.add(p_vr, offsets)
}

/// `[f, p]` per row through the projector layers, relu between layers.
pub fn project_on_tape(tape: &mut Tape, f: Var, p: Var, params: &SchemeParams<Var>) -> Result<Var> {
    let mut x = tape.concat_cols(f, p)?;
    let last = params.projector.len().saturating_sub(1);
    for (i, layer) in params.projector.iter().enumerate() {
        x = linear_on_tape(tape, x, layer)?;
        if i < last {
            x = tape.relu(x)?;
        }
    }
    Ok(x)
}

/// Every intermediate of one full forward pass.
pub struct ForwardVars {
    pub seeds: SeedSet,
    pub groups: NeighborGroups,
    pub adjacency: SpatialAdjacency,
    pub f_enc: Var,
    pub p_vr: Var,
    pub f_vr: Var,
    pub f_gcn: Var,
    pub f_ctx: Var,
    pub p_refined: Var,
    /// Present only when the projector was run.
    pub prompt: Option<Var>,
}

/// Intra, inter, contextual and refine stages, optionally followed by the projector.
pub fn forward_on_tape(
    tape: &mut Tape,
    scene: &SceneFeatures,
    params: &SchemeParams<Var>,
    cfg: &SchemeConfig,
    with_projector: bool,
) -> Result<ForwardVars> {
    let intra = intra_on_tape(tape, scene, params, cfg)?;
    let (f_gcn, adjacency) = inter_on_tape(
        tape,
        intra.p_vr,
        intra.f_vr,
        params,
        cfg.graph_k,
        cfg.gcn_activation,
    )?;
    let f_enc = tape.constant(scene.features.clone());
    let f_ctx = contextual_on_tape(tape, f_gcn, f_enc, params, cfg.attn_blocks)?;
    let p_refined = refine_on_tape(tape, intra.p_vr, f_ctx, params)?;
    let prompt = if with_projector {
        Some(project_on_tape(tape, f_ctx, p_refined, params)?)
    } else {
        None
    };
    Ok(ForwardVars {
        seeds: intra.seeds,
        groups: intra.groups,
        adjacency,
        f_enc,
        p_vr: intra.p_vr,
        f_vr: intra.f_vr,
        f_gcn,
        f_ctx,
        p_refined,
        prompt,
    })
}

pub(crate) fn bind_constants(tape: &mut Tape, params: &SchemeParams) -> SchemeParams<Var> {
    params.map(&mut |_, t| tape.constant(t.clone()))
}

/// Intra-referent stage on concrete values. Also returns the seeds and groups.
pub fn intra_referent_detailed(
    scene: &SceneFeatures,
    params: &SchemeParams,
    cfg: &SchemeConfig,
) -> Result<(VisualReferentSet, SeedSet, NeighborGroups)> {
    let mut tape = Tape::new();
    let vars = bind_constants(&mut tape, params);
    let out = intra_on_tape(&mut tape, scene, &vars, cfg)?;
    let vr = VisualReferentSet::new(
        tape.value(out.p_vr).clone(),
        tape.value(out.f_vr).clone(),
        Stage::Intra,
    )?;
    Ok((vr, out.seeds, out.groups))
}

pub fn intra_referent(
    scene: &SceneFeatures,
    params: &SchemeParams,
    cfg: &SchemeConfig,
) -> Result<VisualReferentSet> {
    intra_referent_detailed(scene, params, cfg).map(|(vr, _, _)| vr)
}

pub fn inter_referent(
    vr: &VisualReferentSet,
    params: &SchemeParams,
    k: usize,
    activation: Activation,
) -> Result<VisualReferentSet> {
    vr.expect_stage(Stage::Intra, "inter_referent")?;
    if vr.len() < 2 {
        return Err(Error::invalid("inter_referent needs at least 2 referents"));
    }
    let mut tape = Tape::new();
    let vars = bind_constants(&mut tape, params);
    let p = tape.constant(vr.positions.clone());
    let f = tape.constant(vr.features.clone());
    let (h, _) = inter_on_tape(&mut tape, p, f, &vars, k, activation)?;
    VisualReferentSet::new(vr.positions.clone(), tape.value(h).clone(), Stage::Gcn)
}

pub fn contextual_interactions(
    vr: &VisualReferentSet,
    scene: &SceneFeatures,
    params: &SchemeParams,
    blocks: usize,
) -> Result<VisualReferentSet> {
    vr.expect_stage(Stage::Gcn, "contextual_interactions")?;
    if vr.features.cols() != scene.feat_dim() {
        return Err(Error::invalid(format!(
            "referent width {} differs from scene width {}",
            vr.features.cols(),
            scene.feat_dim()
        )));
    }
    let mut tape = Tape::new();
    let vars = bind_constants(&mut tape, params);
    let f = tape.constant(vr.features.clone());
    let f_enc = tape.constant(scene.features.clone());
    let x = contextual_on_tape(&mut tape, f, f_enc, &vars, blocks)?;
    VisualReferentSet::new(
        vr.positions.clone(),
        tape.value(x).clone(),
        Stage::Contextual,
    )
}

pub fn refine_location(vr: &VisualReferentSet, params: &SchemeParams) -> Result<VisualReferentSet> {
    vr.expect_stage(Stage::Contextual, "refine_location")?;
    let mut tape = Tape::new();
    let vars = bind_constants(&mut tape, params);
    let p = tape.constant(vr.positions.clone());
    let f = tape.constant(vr.features.clone());
    let refined = refine_on_tape(&mut tape, p, f, &vars)?;
    VisualReferentSet::new(
        tape.value(refined).clone(),
        vr.features.clone(),
        Stage::Refined,
    )
}

pub fn project_visual_prompt(
    vr: &VisualReferentSet,
    params: &SchemeParams,
) -> Result<VisualPrompt> {
    vr.expect_stage(Stage::Refined, "project_visual_prompt")?;
    let mut tape = Tape::new();
    let vars = bind_constants(&mut tape, params);
    let p = tape.constant(vr.positions.clone());
    let f = tape.constant(vr.features.clone());
    let rows = project_on_tape(&mut tape, f, p, &vars)?;
    Ok(VisualPrompt {
        rows: tape.value(rows).clone(),
        positions: vr.positions.clone(),
    })
}
