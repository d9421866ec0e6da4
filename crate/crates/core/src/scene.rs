//! Neutral scene records: annotated objects with metric boxes and descriptions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3, Point3};
use crate::math;

/// Fraction of the object union span added on every side when bounds are inferred.
pub const BOUNDS_PADDING: f64 = 0.05;

/// Smallest padding per side, so a flat axis still has a usable span.
pub const MIN_BOUNDS_PADDING: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub label: String,
    pub bbox: Box3,
    pub descriptions: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBounds {
    pub fn diagonal(&self) -> f64 {
        let d: f64 = (0..3)
            .map(|a| {
                let s = self.max[a] - self.min[a];
                s * s
            })
            .sum();
        math::sqrt(d)
    }

    /// Union of the boxes, padded by [`BOUNDS_PADDING`] of the span on each side
    /// (at least [`MIN_BOUNDS_PADDING`]).
    pub fn enclosing<'a>(boxes: impl IntoIterator<Item = &'a Box3>) -> Result<Self> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for b in boxes {
            any = true;
            let (lo, hi) = (b.min(), b.max());
            for a in 0..3 {
                min[a] = min[a].min(lo[a]);
                max[a] = max[a].max(hi[a]);
            }
        }
        if !any {
            return Err(Error::invalid("cannot infer bounds without objects"));
        }
        for a in 0..3 {
            let pad = (BOUNDS_PADDING * (max[a] - min[a])).max(MIN_BOUNDS_PADDING);
            min[a] -= pad;
            max[a] += pad;
        }
        Ok(SceneBounds { min, max })
    }

    fn contains_box(&self, b: &Box3) -> bool {
        const SLACK: f64 = 1e-9;
        let (lo, hi) = (b.min(), b.max());
        (0..3).all(|a| lo[a] >= self.min[a] - SLACK && hi[a] <= self.max[a] + SLACK)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<SceneBounds>,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<()> {
        if self.scene_id.is_empty() {
            return Err(Error::invalid("scene id must not be empty"));
        }
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if !seen.insert(o.object_id) {
                return Err(Error::invalid(format!(
                    "{}: duplicate object id {}",
                    self.scene_id, o.object_id
                )));
            }
            if o.descriptions.is_empty() {
                return Err(Error::invalid(format!(
                    "{}: object {} has no descriptions",
                    self.scene_id, o.object_id
                )));
            }
            o.bbox.validate()?;
        }
        if let Some(b) = &self.bounds {
            if (0..3).any(|a| !(b.max[a] > b.min[a])) {
                return Err(Error::invalid(format!(
                    "{}: degenerate bounds",
                    self.scene_id
                )));
            }
            if let Some(o) = self.objects.iter().find(|o| !b.contains_box(&o.bbox)) {
                return Err(Error::invalid(format!(
                    "{}: object {} lies outside the scene bounds",
                    self.scene_id, o.object_id
                )));
            }
        }
        Ok(())
    }

    /// Explicit bounds, or the padded union of the object boxes.
    pub fn bounds(&self) -> Result<SceneBounds> {
        match self.bounds {
            Some(b) => Ok(b),
            None => SceneBounds::enclosing(self.objects.iter().map(|o| &o.bbox)),
        }
    }

    pub fn object(&self, id: u32) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.object_id == id)
            .ok_or_else(|| Error::invalid(format!("{}: no object {id}", self.scene_id)))
    }

    pub fn boxes(&self) -> Vec<Box3> {
        self.objects.iter().map(|o| o.bbox).collect()
    }
}

const FURNITURE: &[(&str, [f64; 3])] = &[
    ("chair", [0.55, 0.55, 0.9]),
    ("table", [1.4, 0.8, 0.75]),
    ("cabinet", [0.6, 0.5, 1.6]),
    ("bed", [1.6, 2.0, 0.6]),
    ("sofa", [2.0, 0.9, 0.85]),
    ("desk", [1.2, 0.6, 0.75]),
    ("bookshelf", [0.9, 0.35, 1.9]),
    ("lamp", [0.35, 0.35, 1.5]),
    ("trash_can", [0.35, 0.35, 0.45]),
    ("refrigerator", [0.8, 0.7, 1.8]),
];

const COLORS: &[&str] = &["brown", "white", "black", "gray", "wooden", "blue"];

/// Seeded synthetic room: `n_objects` furniture boxes resting on the floor of a random room.
pub fn synthetic_room(scene_id: &str, n_objects: usize, seed: u64) -> Result<SceneRecord> {
    if n_objects == 0 {
        return Err(Error::invalid("a synthetic room needs at least one object"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = [rng.gen_range(4.0..8.0), rng.gen_range(4.0..8.0), 3.0];
    let mut objects = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let (label, base) = FURNITURE[rng.gen_range(0..FURNITURE.len())];
        let jitter = rng.gen_range(0.85..1.15);
        let extent = [base[0] * jitter, base[1] * jitter, base[2] * jitter];
        let center = Point3::new(
            rng.gen_range(extent[0] / 2.0..room[0] - extent[0] / 2.0),
            rng.gen_range(extent[1] / 2.0..room[1] - extent[1] / 2.0),
            extent[2] / 2.0,
        );
        let color = COLORS[rng.gen_range(0..COLORS.len())];
        let mut descriptions = Vec::new();
        descriptions.push(format!("this is a {color} {label}. it is in the room."));
        descriptions.push(format!("the {label} is {color} and stands on the floor."));
        if i > 0 {
            let other = objects_label(&objects, rng.gen_range(0..i));
            descriptions.push(format!("a {color} {label} placed near the {other}."));
        }
        descriptions.shuffle(&mut rng);
        objects.push(SceneObject {
            object_id: i as u32,
            label: label.to_string(),
            bbox: Box3::new(center, extent)?,
            descriptions,
        });
    }
    let scene = SceneRecord {
        scene_id: scene_id.to_string(),
        objects,
        bounds: Some(SceneBounds {
            min: [0.0; 3],
            max: room,
        }),
    };
    scene.validate()?;
    Ok(scene)
}

fn objects_label(objects: &[SceneObject], i: usize) -> &str {
    &objects[i].label
}

/// `n_scenes` synthetic rooms named `synth0000_00`, `synth0001_00`, ... with 3 to 12 objects each.
pub fn synthetic_corpus(n_scenes: usize, seed: u64) -> Result<Vec<SceneRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_scenes)
        .map(|i| {
            let n = rng.gen_range(3..=12);
            synthetic_room(&format!("synth{i:04}_00"), n, rng.gen())
        })
        .collect()
}
