//! Model configuration and the parameter tree.
//!
//! The parameter structs are generic over their leaf type so the same tree
//! can hold concrete [`Tensor2`] values or tape handles ([`crate::diff::Var`]).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor2;
use crate::error::{Error, Result};
use crate::geometry::{DEFAULT_BALL_MAX_K, DEFAULT_BALL_RADIUS};
use crate::math;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// Shapes and hyper-parameters of one scheme instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Encoded scene points N.
    pub n_points: usize,
    /// Visual referents M.
    pub n_referents: usize,
    /// Feature width d.
    pub feat_dim: usize,
    pub gcn_layers: usize,
    pub gcn_activation: Activation,
    /// Neighbours per referent in the proximity graph.
    pub graph_k: usize,
    pub attn_blocks: usize,
    /// Hidden width of every feed-forward net.
    pub ffn_hidden: usize,
    pub projector_hidden: usize,
    pub prompt_width: usize,
    pub ball_radius: f64,
    pub ball_max_k: usize,
    /// Radius of the local-density channel of the stub encoder.
    pub density_radius: f64,
    pub encoder_seed: u64,
}

impl SchemeConfig {
    /// Desk-scale defaults: N=128, M=16, d=16, k=3.
    pub fn toy() -> Self {
        SchemeConfig {
            n_points: 128,
            n_referents: 16,
            feat_dim: 16,
            gcn_layers: 2,
            gcn_activation: Activation::Relu,
            graph_k: 3,
            attn_blocks: 2,
            ffn_hidden: 64,
            projector_hidden: 32,
            prompt_width: 32,
            ball_radius: DEFAULT_BALL_RADIUS,
            ball_max_k: DEFAULT_BALL_MAX_K,
            density_radius: DEFAULT_BALL_RADIUS,
            encoder_seed: 0x5eed,
        }
    }

    /// Full-size shapes: 1024 scene tokens of width 256, 256 referents, 4096-wide prompts.
    pub fn paper_scale() -> Self {
        SchemeConfig {
            n_points: 1024,
            n_referents: 256,
            feat_dim: 256,
            graph_k: 8,
            ffn_hidden: 1024,
            projector_hidden: 1024,
            prompt_width: 4096,
            ..SchemeConfig::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_referents == 0 || self.n_points < self.n_referents {
            return Err(Error::invalid(format!(
                "need 1 <= M <= N, got M = {} and N = {}",
                self.n_referents, self.n_points
            )));
        }
        if self.feat_dim == 0
            || self.ffn_hidden == 0
            || self.prompt_width == 0
            || self.projector_hidden == 0
        {
            return Err(Error::invalid(
                "feature, hidden and prompt widths must be positive",
            ));
        }
        if self.n_referents >= 2 && (self.graph_k == 0 || self.graph_k >= self.n_referents) {
            return Err(Error::invalid(format!(
                "graph k must satisfy 1 <= k < M = {}, got {}",
                self.n_referents, self.graph_k
            )));
        }
        if !(self.ball_radius > 0.0) || self.ball_max_k == 0 || !(self.density_radius > 0.0) {
            return Err(Error::invalid(
                "ball radius, max_k and density radius must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `in x out`.
    pub weight: T,
    /// `1 x out`.
    pub bias: T,
}

/// Two-layer position-wise feed-forward net: `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ffn<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

/// Single-head attention projections.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<T> {
    pub query: T,
    pub key: T,
    pub value: T,
    pub output: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock<T> {
    pub self_attn: Attention<T>,
    pub self_ffn: Ffn<T>,
    pub cross_attn: Attention<T>,
    pub cross_ffn: Ffn<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams<T = Tensor2> {
    /// Seed features to vote offsets (`d -> d -> 3`).
    pub vote: Ffn<T>,
    /// Shared lift applied to scene features before group pooling.
    pub lift: Linear<T>,
    /// One `d x d` weight per graph layer.
    pub gcn: Vec<T>,
    pub blocks: Vec<AttentionBlock<T>>,
    /// Referent features to location refinements (`d -> d -> 3`).
    pub refine: Ffn<T>,
    /// `(d + 3) -> hidden -> prompt` with relu between layers.
    pub projector: Vec<Linear<T>>,
}

type Visit<'a, 'f, T, U> = &'f mut dyn FnMut(&str, &'a T) -> U;

impl<T> Linear<T> {
    fn map<'a, U>(&'a self, name: &str, f: Visit<'a, '_, T, U>) -> Linear<U> {
        Linear {
            weight: f(&format!("{name}.weight"), &self.weight),
            bias: f(&format!("{name}.bias"), &self.bias),
        }
    }
}

impl<T> Ffn<T> {
    fn map<'a, U>(&'a self, name: &str, f: Visit<'a, '_, T, U>) -> Ffn<U> {
        Ffn {
            hidden: self.hidden.map(&format!("{name}.hidden"), f),
            out: self.out.map(&format!("{name}.out"), f),
        }
    }
}

impl<T> Attention<T> {
    fn map<'a, U>(&'a self, name: &str, f: Visit<'a, '_, T, U>) -> Attention<U> {
        Attention {
            query: f(&format!("{name}.query"), &self.query),
            key: f(&format!("{name}.key"), &self.key),
            value: f(&format!("{name}.value"), &self.value),
            output: f(&format!("{name}.output"), &self.output),
        }
    }
}

impl<T> AttentionBlock<T> {
    fn map<'a, U>(&'a self, name: &str, f: Visit<'a, '_, T, U>) -> AttentionBlock<U> {
        AttentionBlock {
            self_attn: self.self_attn.map(&format!("{name}.self_attn"), f),
            self_ffn: self.self_ffn.map(&format!("{name}.self_ffn"), f),
            cross_attn: self.cross_attn.map(&format!("{name}.cross_attn"), f),
            cross_ffn: self.cross_ffn.map(&format!("{name}.cross_ffn"), f),
        }
    }
}

impl<T> SchemeParams<T> {
    /// Rebuilds the tree leaf by leaf. Leaves are visited in a fixed order with dotted names.
    pub fn map<'a, U>(&'a self, f: &mut dyn FnMut(&str, &'a T) -> U) -> SchemeParams<U> {
        SchemeParams {
            vote: self.vote.map("vote", f),
            lift: self.lift.map("lift", f),
            gcn: self
                .gcn
                .iter()
                .enumerate()
                .map(|(i, w)| f(&format!("gcn.{i}.weight"), w))
                .collect(),
            blocks: self
                .blocks
                .iter()
                .enumerate()
                .map(|(i, b)| b.map(&format!("blocks.{i}"), f))
                .collect(),
            refine: self.refine.map("refine", f),
            projector: self
                .projector
                .iter()
                .enumerate()
                .map(|(i, l)| l.map(&format!("projector.{i}"), f))
                .collect(),
        }
    }

    /// Leaves with their dotted names, in visiting order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, t| out.push((name.to_string(), t)));
        out
    }

    pub fn leaves(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }
}

/// Reporting group of a leaf: `vote`, `lift`, `gcn.0`, `blocks.1`, `refine`, `projector`.
pub fn block_of(name: &str) -> &str {
    let mut parts = name.splitn(3, '.');
    let head = parts.next().unwrap_or(name);
    match head {
        "gcn" | "blocks" => {
            let idx_len = parts.next().map_or(0, str::len);
            &name[..head.len() + 1 + idx_len]
        }
        _ => head,
    }
}

impl SchemeParams<Tensor2> {
    /// Training initialization: uniform fan-scaled weights, zero biases, and zero
    /// output layers on both offset heads so referents start at their seed points.
    pub fn init(cfg: &SchemeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::shaped(cfg, &mut |rng_name, rows, cols| {
            if rng_name.ends_with(".bias") {
                return Tensor2::zeros(rows, cols);
            }
            let limit = math::sqrt(6.0 / (rows + cols) as f64);
            let gain = if rng_name.ends_with("attn.output") {
                0.5
            } else {
                1.0
            };
            Tensor2::from_fn(rows, cols, |_, _| gain * rng.gen_range(-limit..limit))
        });
        for head in [&mut p.vote.out, &mut p.refine.out] {
            head.weight = Tensor2::zeros(head.weight.rows(), head.weight.cols());
            head.bias = Tensor2::zeros(1, head.bias.cols());
        }
        Ok(p)
    }

    /// Every leaf (biases and offset heads included) drawn uniformly from `[-scale, scale]`.
    pub fn random(cfg: &SchemeConfig, seed: u64, scale: f64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::shaped(cfg, &mut |_, rows, cols| {
            Tensor2::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
        }))
    }

    /// Builds every leaf with its configured shape.
    fn shaped(cfg: &SchemeConfig, make: &mut dyn FnMut(&str, usize, usize) -> Tensor2) -> Self {
        let d = cfg.feat_dim;
        let h = cfg.ffn_hidden;
        let mut linear = |name: &str, i: usize, o: usize| Linear {
            weight: make(&format!("{name}.weight"), i, o),
            bias: make(&format!("{name}.bias"), 1, o),
        };
        let vote = Ffn {
            hidden: linear("vote.hidden", d, h),
            out: linear("vote.out", h, 3),
        };
        let lift = linear("lift", d, d);
        let refine = Ffn {
            hidden: linear("refine.hidden", d, h),
            out: linear("refine.out", h, 3),
        };
        let projector = alloc::vec![
            linear("projector.0", d + 3, cfg.projector_hidden),
            linear("projector.1", cfg.projector_hidden, cfg.prompt_width),
        ];
        let gcn = (0..cfg.gcn_layers)
            .map(|i| make(&format!("gcn.{i}.weight"), d, d))
            .collect();
        let blocks = (0..cfg.attn_blocks)
            .map(|i| {
                let mut attn = |kind: &str| Attention {
                    query: make(&format!("blocks.{i}.{kind}.query"), d, d),
                    key: make(&format!("blocks.{i}.{kind}.key"), d, d),
                    value: make(&format!("blocks.{i}.{kind}.value"), d, d),
                    output: make(&format!("blocks.{i}.{kind}.output"), d, d),
                };
                let self_attn = attn("self_attn");
                let cross_attn = attn("cross_attn");
                let mut ffn = |kind: &str| Ffn {
                    hidden: Linear {
                        weight: make(&format!("blocks.{i}.{kind}.hidden.weight"), d, h),
                        bias: make(&format!("blocks.{i}.{kind}.hidden.bias"), 1, h),
                    },
                    out: Linear {
                        weight: make(&format!("blocks.{i}.{kind}.out.weight"), h, d),
                        bias: make(&format!("blocks.{i}.{kind}.out.bias"), 1, d),
                    },
                };
                let self_ffn = ffn("self_ffn");
                let cross_ffn = ffn("cross_ffn");
                AttentionBlock {
                    self_attn,
                    self_ffn,
                    cross_attn,
                    cross_ffn,
                }
            })
            .collect();
        SchemeParams {
            vote,
            lift,
            gcn,
            blocks,
            refine,
            projector,
        }
    }

    /// Rebuilds parameters from named tensors, checking names and shapes against `cfg`.
    pub fn from_named(cfg: &SchemeConfig, mut tensors: BTreeMap<String, Tensor2>) -> Result<Self> {
        let template = Self::shaped(cfg, &mut |_, r, c| Tensor2::zeros(r, c));
        let mut missing = None;
        let mut bad_shape = None;
        let params = template.map(&mut |name, t| match tensors.remove(name) {
            Some(v) if v.shape() == t.shape() => v,
            Some(v) => {
                bad_shape.get_or_insert((name.to_string(), v.shape(), t.shape()));
                t.clone()
            }
            None => {
                missing.get_or_insert(name.to_string());
                t.clone()
            }
        });
        if let Some(name) = missing {
            return Err(Error::invalid(format!("missing tensor {name}")));
        }
        if let Some((name, got, want)) = bad_shape {
            return Err(Error::invalid(format!(
                "tensor {name} has shape {got:?}, expected {want:?}"
            )));
        }
        if let Some(name) = tensors.keys().next() {
            return Err(Error::invalid(format!("unexpected tensor {name}")));
        }
        Ok(params)
    }

    /// Leaves in visiting order, cloned.
    pub fn flatten(&self) -> Vec<Tensor2> {
        self.leaves().into_iter().cloned().collect()
    }

    /// Inverse of [`SchemeParams::flatten`], using `self` for structure.
    pub fn with_leaves(&self, leaves: &[Tensor2]) -> Result<Self> {
        let mut it = leaves.iter();
        let mut short = false;
        let p = self.map(&mut |_, t| match it.next() {
            Some(v) => v.clone(),
            None => {
                short = true;
                t.clone()
            }
        });
        if short || it.next().is_some() {
            return Err(Error::invalid(
                "leaf count does not match the parameter tree",
            ));
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.leaves().iter().all(|t| t.is_finite())
    }

    pub fn num_values(&self) -> usize {
        self.leaves().iter().map(|t| t.data().len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_blocks() {
        let p = SchemeParams::init(&SchemeConfig::toy(), 1).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "vote.hidden.weight");
        assert!(names.contains(&"blocks.1.cross_ffn.out.bias".to_string()));
        assert!(names.contains(&"gcn.1.weight".to_string()));
        assert_eq!(block_of("blocks.1.cross_ffn.out.bias"), "blocks.1");
        assert_eq!(block_of("gcn.0.weight"), "gcn.0");
        assert_eq!(block_of("refine.out.weight"), "refine");
        assert_eq!(block_of("projector.1.bias"), "projector");
    }

    #[test]
    fn offset_heads_start_at_zero() {
        let p = SchemeParams::init(&SchemeConfig::toy(), 1).unwrap();
        assert!(p.vote.out.weight.data().iter().all(|v| *v == 0.0));
        assert!(p.refine.out.bias.data().iter().all(|v| *v == 0.0));
        assert!(p.vote.hidden.weight.data().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn named_round_trip() {
        let cfg = SchemeConfig::toy();
        let p = SchemeParams::random(&cfg, 3, 0.5).unwrap();
        let map: BTreeMap<String, Tensor2> =
            p.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
        assert_eq!(SchemeParams::from_named(&cfg, map.clone()).unwrap(), p);

        let mut missing = map.clone();
        missing.remove("lift.bias");
        assert!(SchemeParams::from_named(&cfg, missing).is_err());
        let mut extra = map.clone();
        extra.insert("bogus".into(), Tensor2::zeros(1, 1));
        assert!(SchemeParams::from_named(&cfg, extra).is_err());
        let mut wrong = map;
        wrong.insert("lift.bias".into(), Tensor2::zeros(2, 2));
        assert!(SchemeParams::from_named(&cfg, wrong).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let p = SchemeParams::random(&SchemeConfig::toy(), 4, 1.0).unwrap();
        assert_eq!(p.with_leaves(&p.flatten()).unwrap(), p);
        assert!(p.with_leaves(&p.flatten()[1..]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SchemeConfig::toy();
        cfg.graph_k = cfg.n_referents;
        assert!(cfg.validate().is_err());
        let mut cfg = SchemeConfig::toy();
        cfg.n_points = 4;
        assert!(cfg.validate().is_err());
        SchemeConfig::paper_scale().validate().unwrap();
    }
}
