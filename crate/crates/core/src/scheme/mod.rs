//! Progressive spatial awareness over visual referents.
//!
//! Pipeline: [`encode_scene_stub`] -> [`intra_referent`] (FPS seeds, vote
//! offsets, ball grouping, pooled features) -> [`inter_referent`] (graph
//! convolution over a k-NN proximity graph) -> [`contextual_interactions`]
//! (self- and cross-attention blocks) -> [`refine_location`] ->
//! [`project_visual_prompt`]. Training uses the center and pairwise spatial
//! constraint losses against nearest-object centroids.

mod loss;
mod params;
mod stages;
mod train;

pub use loss::{
    center_loss_on_tape, grad_check_scheme, loss_center, loss_psc, loss_total,
    nearest_centroid_targets, psc_loss_on_tape, spatial_loss_on_tape, BlockError, LossBreakdown,
    PscLoss, SchemeGradReport, SpatialLossVars,
};
pub use params::{
    block_of, Activation, Attention, AttentionBlock, Ffn, Linear, SchemeConfig, SchemeParams,
};
pub use stages::{
    attention_on_tape, contextual_interactions, contextual_on_tape, encode_scene_stub,
    forward_on_tape, gcn_on_tape, inter_on_tape, inter_referent, intra_on_tape, intra_referent,
    intra_referent_detailed, project_on_tape, project_visual_prompt, refine_location,
    refine_on_tape, ForwardVars, IntraVars, SceneFeatures, SeedSet, Stage, VisualPrompt,
    VisualReferentSet,
};
pub use train::{sample_scene_cloud, train_toy, TrainConfig, TrainStep, TrainTrace};
