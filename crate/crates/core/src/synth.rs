//! Instruction synthesis: distance measurement, object movement and object
//! placement samples over quantized scenes.
//!
//! Every sample carries its structured ground truth, and its answer string
//! parses back to exactly that payload with [`parse_answer`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{
    emit_center, emit_gap, emit_loc, fit_transform, parse_answer, AnswerItem, QuantBox,
    QuantTransform,
};
use crate::error::{Error, Result};
use crate::math;
use crate::scene::{SceneBounds, SceneObject, SceneRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Distance,
    Movement,
    Placement,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Distance, Task::Movement, Task::Placement];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Distance => "distance",
            Task::Movement => "movement",
            Task::Placement => "placement",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task {s:?}")))
    }
}

/// Movement direction. Right/left run along x, forward/backward along y, up/down along z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Right,
    Left,
    Forward,
    Backward,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Right,
        Direction::Left,
        Direction::Forward,
        Direction::Backward,
        Direction::Up,
        Direction::Down,
    ];

    pub fn axis(self) -> usize {
        match self {
            Direction::Right | Direction::Left => 0,
            Direction::Forward | Direction::Backward => 1,
            Direction::Up | Direction::Down => 2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Direction::Right | Direction::Forward | Direction::Up)
    }

    pub fn inverse(self) -> Direction {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Right => "right",
            Direction::Left => "left",
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Structured answer in grid units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Distance {
        box_a: QuantBox,
        box_b: QuantBox,
        gaps: [u8; 3],
    },
    Movement {
        original: QuantBox,
        moved: QuantBox,
        direction: Direction,
        magnitude: u8,
    },
    /// The masked object's full box; the answer only states its center.
    Placement { masked: QuantBox },
}

impl GroundTruth {
    pub fn task(&self) -> Task {
        match self {
            GroundTruth::Distance { .. } => Task::Distance,
            GroundTruth::Movement { .. } => Task::Movement,
            GroundTruth::Placement { .. } => Task::Placement,
        }
    }

    /// Items [`parse_answer`] must recover from the answer text, in order.
    pub fn expected_payload(&self) -> Vec<AnswerItem> {
        match *self {
            GroundTruth::Distance { box_a, box_b, gaps } => {
                let mut v = alloc::vec![
                    AnswerItem::Loc { bbox: box_a },
                    AnswerItem::Loc { bbox: box_b },
                ];
                v.extend(gaps.iter().map(|&value| AnswerItem::Gap { value }));
                v
            }
            GroundTruth::Movement {
                original, moved, ..
            } => alloc::vec![
                AnswerItem::Loc { bbox: original },
                AnswerItem::Loc { bbox: moved },
            ],
            GroundTruth::Placement { masked } => alloc::vec![AnswerItem::Center {
                center: masked.center
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Distance: `[a, b]`. Movement: `[moved]`. Placement: masked object first,
    /// then the rest of the sub-scene.
    pub object_ids: Vec<u32>,
    /// Seed of the per-sample generator.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub split: Split,
    pub task: Task,
    pub scene_id: String,
    pub question: String,
    pub answer: String,
    pub gt: GroundTruth,
    pub provenance: Provenance,
}

impl InstructionSample {
    fn new(
        scene_id: &str,
        question: String,
        answer: String,
        gt: GroundTruth,
        provenance: Provenance,
    ) -> Result<Self> {
        let task = gt.task();
        let sample = InstructionSample {
            id: format!("{scene_id}-{task}-{:016x}", provenance.seed),
            split: Split::Train,
            task,
            scene_id: scene_id.to_string(),
            question,
            answer,
            gt,
            provenance,
        };
        sample.check()?;
        Ok(sample)
    }

    /// The answer parses to exactly the ground-truth payload and the task tag agrees.
    pub fn check(&self) -> Result<()> {
        if self.task != self.gt.task() {
            return Err(Error::invalid(format!(
                "sample {}: task {} but {} ground truth",
                self.id,
                self.task,
                self.gt.task()
            )));
        }
        let parsed = parse_answer(&self.answer)?;
        if parsed.items != self.gt.expected_payload() {
            return Err(Error::invalid(format!(
                "sample {}: answer does not parse to its ground truth (labels must not contain tokens or bare triples)",
                self.id
            )));
        }
        Ok(())
    }
}

fn pick_description<'a>(o: &'a SceneObject, rng: &mut ChaCha8Rng) -> Result<&'a str> {
    if o.descriptions.is_empty() {
        return Err(Error::invalid(format!(
            "object {} has no description",
            o.object_id
        )));
    }
    Ok(&o.descriptions[rng.gen_range(0..o.descriptions.len())])
}

/// Question about the per-axis center gaps between objects `a` and `b`.
pub fn synth_distance(scene: &SceneRecord, a: u32, b: u32, seed: u64) -> Result<InstructionSample> {
    if a == b {
        return Err(Error::invalid("distance needs two different objects"));
    }
    let tf = fit_transform(scene)?;
    let (oa, ob) = (scene.object(a)?, scene.object(b)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let da = pick_description(oa, &mut rng)?;
    let db = pick_description(ob, &mut rng)?;
    let (qa, qb) = (tf.quantize_box(&oa.bbox), tf.quantize_box(&ob.bbox));
    let gaps: [u8; 3] = core::array::from_fn(|i| qa.center[i].abs_diff(qb.center[i]));
    let question = format!(
        "Object A is described as: '{da}' Object B is described as: '{db}' \
         Please provide the distance between Object A and Object B."
    );
    let answer = format!(
        "Object A is a {} located at {}. Object B is a {} located at {}. \
         The spatial distance from Object A to Object B on the x-axis is {} units, \
         on the y-axis is {} units, and on the z-axis is {} units.",
        oa.label,
        emit_loc(&qa),
        ob.label,
        emit_loc(&qb),
        emit_gap(gaps[0]),
        emit_gap(gaps[1]),
        emit_gap(gaps[2]),
    );
    InstructionSample::new(
        &scene.scene_id,
        question,
        answer,
        GroundTruth::Distance {
            box_a: qa,
            box_b: qb,
            gaps,
        },
        Provenance {
            object_ids: alloc::vec![a, b],
            seed,
        },
    )
}

/// Largest move along `direction` that keeps the box on the grid.
///
/// Uses the same one-unit rounding slack as [`QuantBox::within_grid`], so a
/// box that came off the quantizer can always be moved back where it was.
pub fn max_move(b: &QuantBox, direction: Direction) -> u8 {
    let a = direction.axis();
    let (c, e) = (i32::from(b.center[a]), i32::from(b.extent[a]));
    let room = if direction.is_positive() {
        ((512 - e - 2 * c) / 2).min(255 - c)
    } else {
        ((2 * c - e + 2) / 2).min(c)
    };
    room.clamp(0, 255) as u8
}

/// Applies a move in grid units, failing if the box would leave the grid.
pub fn apply_move(b: &QuantBox, direction: Direction, magnitude: u8) -> Result<QuantBox> {
    if magnitude == 0 {
        return Err(Error::invalid("movement magnitude must be at least 1"));
    }
    if magnitude > max_move(b, direction) {
        return Err(Error::invalid(format!(
            "moving {direction} by {magnitude} leaves the grid (at most {})",
            max_move(b, direction)
        )));
    }
    let mut moved = *b;
    let a = direction.axis();
    moved.center[a] = if direction.is_positive() {
        b.center[a] + magnitude
    } else {
        b.center[a] - magnitude
    };
    Ok(moved)
}

/// Instruction to move object `obj` by `magnitude` grid units.
pub fn synth_movement(
    scene: &SceneRecord,
    obj: u32,
    direction: Direction,
    magnitude: u8,
    seed: u64,
) -> Result<InstructionSample> {
    let tf = fit_transform(scene)?;
    let o = scene.object(obj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let desc = pick_description(o, &mut rng)?;
    let original = tf.quantize_box(&o.bbox);
    let moved = apply_move(&original, direction, magnitude)?;
    let question = format!(
        "Based on the provided description, '{desc}' Move the object that closely matches \
         this description {direction} by {magnitude} units, and then describe its new location."
    );
    let answer = format!(
        "It is a {} located at {}. Its location after moving {direction} by {magnitude} units is {}.",
        o.label,
        emit_loc(&original),
        emit_loc(&moved),
    );
    InstructionSample::new(
        &scene.scene_id,
        question,
        answer,
        GroundTruth::Movement {
            original,
            moved,
            direction,
            magnitude,
        },
        Provenance {
            object_ids: alloc::vec![obj],
            seed,
        },
    )
}

pub const MIN_MAGNITUDE: u8 = 10;
pub const MAX_MAGNITUDE: u8 = 150;

/// Movement with a magnitude drawn uniformly from the feasible part of
/// `[MIN_MAGNITUDE, MAX_MAGNITUDE]`.
pub fn synth_movement_random(
    scene: &SceneRecord,
    obj: u32,
    direction: Direction,
    seed: u64,
) -> Result<InstructionSample> {
    let tf = fit_transform(scene)?;
    let q = tf.quantize_box(&scene.object(obj)?.bbox);
    let hi = max_move(&q, direction).min(MAX_MAGNITUDE);
    if hi < MIN_MAGNITUDE {
        return Err(Error::invalid(format!(
            "object {obj} cannot move {direction} by at least {MIN_MAGNITUDE}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_676e);
    let magnitude = rng.gen_range(MIN_MAGNITUDE..=hi);
    synth_movement(scene, obj, direction, magnitude, seed)
}

pub const MIN_SUBSCENE: usize = 3;
pub const MAX_SUBSCENE: usize = 8;

/// A standalone group of 3 to 8 objects quantized on its own bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct SubScene {
    pub parent_scene_id: String,
    pub objects: Vec<SceneObject>,
    pub bounds: SceneBounds,
    pub transform: QuantTransform,
}

impl SubScene {
    /// Sub-scene with bounds inferred from its own objects.
    pub fn new(parent_scene_id: &str, objects: Vec<SceneObject>) -> Result<Self> {
        let bounds = SceneBounds::enclosing(objects.iter().map(|o| &o.bbox))?;
        Self::with_bounds(parent_scene_id, objects, bounds)
    }

    pub fn with_bounds(
        parent_scene_id: &str,
        objects: Vec<SceneObject>,
        bounds: SceneBounds,
    ) -> Result<Self> {
        if !(MIN_SUBSCENE..=MAX_SUBSCENE).contains(&objects.len()) {
            return Err(Error::invalid(format!(
                "a sub-scene holds {MIN_SUBSCENE} to {MAX_SUBSCENE} objects, got {}",
                objects.len()
            )));
        }
        let record = SceneRecord {
            scene_id: parent_scene_id.to_string(),
            objects,
            bounds: Some(bounds),
        };
        record.validate()?;
        Ok(SubScene {
            parent_scene_id: record.scene_id,
            objects: record.objects,
            bounds,
            transform: QuantTransform::from_bounds(&bounds)?,
        })
    }

    pub fn object_ids(&self) -> Vec<u32> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Indices of the objects nearest to `anchor` by center distance, anchor
/// first; ties go to the lower index.
pub fn nearest_members(scene: &SceneRecord, anchor: usize, size: usize) -> Vec<usize> {
    let c = scene.objects[anchor].bbox.center;
    let mut order: Vec<usize> = (0..scene.objects.len()).filter(|&i| i != anchor).collect();
    order.sort_by(|&i, &j| {
        let di = scene.objects[i].bbox.center.dist_sq(c);
        let dj = scene.objects[j].bbox.center.dist_sq(c);
        di.total_cmp(&dj).then(i.cmp(&j))
    });
    let mut members = alloc::vec![anchor];
    members.extend(order.into_iter().take(size.saturating_sub(1)));
    members
}

fn subscene_from(scene: &SceneRecord, members: &[usize]) -> Result<SubScene> {
    SubScene::new(
        &scene.scene_id,
        members.iter().map(|&i| scene.objects[i].clone()).collect(),
    )
}

/// Sub-scene of `size` objects: the anchor and its nearest neighbours.
pub fn subscene_around(scene: &SceneRecord, anchor_id: u32, size: usize) -> Result<SubScene> {
    let anchor = scene
        .objects
        .iter()
        .position(|o| o.object_id == anchor_id)
        .ok_or_else(|| {
            Error::invalid(format!("no object {anchor_id} in scene {}", scene.scene_id))
        })?;
    if size > scene.objects.len() {
        return Err(Error::invalid(format!(
            "sub-scene of {size} from a scene of {} objects",
            scene.objects.len()
        )));
    }
    subscene_from(scene, &nearest_members(scene, anchor, size))
}

/// `count` sub-scenes, each a random anchor plus its nearest objects, with the
/// size uniform in `[3, min(8, objects)]`.
pub fn extract_subscenes(scene: &SceneRecord, count: usize, seed: u64) -> Result<Vec<SubScene>> {
    let n = scene.objects.len();
    if n < MIN_SUBSCENE {
        return Err(Error::invalid(format!(
            "scene {} has {n} objects, sub-scenes need at least {MIN_SUBSCENE}",
            scene.scene_id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let anchor = rng.gen_range(0..n);
            let size = rng.gen_range(MIN_SUBSCENE..=n.min(MAX_SUBSCENE));
            subscene_from(scene, &nearest_members(scene, anchor, size))
        })
        .collect()
}

/// Placement sample with a uniformly chosen masked object.
pub fn synth_placement(sub: &SubScene, seed: u64) -> Result<InstructionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_736b);
    let masked = sub.objects[rng.gen_range(0..sub.len())].object_id;
    synth_placement_masked(sub, masked, seed)
}

/// Placement sample asking for the center of object `masked` given its size.
pub fn synth_placement_masked(sub: &SubScene, masked: u32, seed: u64) -> Result<InstructionSample> {
    let o = sub
        .objects
        .iter()
        .find(|o| o.object_id == masked)
        .ok_or_else(|| Error::invalid(format!("object {masked} is not in the sub-scene")))?;
    let q = sub.transform.quantize_box(&o.bbox);
    let [w, h, l] = q.extent;
    let question = format!(
        "Add a {} with size w:{w}, h:{h}, l:{l} to the current indoor scene, \
         and please output the center coordinates of the object.",
        o.label
    );
    let mut object_ids = alloc::vec![masked];
    object_ids.extend(sub.object_ids().into_iter().filter(|&id| id != masked));
    InstructionSample::new(
        &sub.parent_scene_id,
        question,
        emit_center(q.center),
        GroundTruth::Placement { masked: q },
        Provenance { object_ids, seed },
    )
}

/// Samples per split for one task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub train: usize,
    pub val: usize,
}

impl TaskCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
        }
    }
}

/// Per-task sample counts and the fraction of scenes held out for validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub distance: TaskCounts,
    pub movement: TaskCounts,
    pub placement: TaskCounts,
    pub val_fraction: f64,
}

/// Full-size counts per task: (train, val).
pub const FULL_COUNTS: [(Task, usize, usize); 3] = [
    (Task::Distance, 171_000, 2_000),
    (Task::Movement, 36_000, 9_000),
    (Task::Placement, 34_000, 9_000),
];

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

impl DatasetPlan {
    /// The full-size counts scaled by `scale` and rounded to the nearest sample.
    pub fn full_scale(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!(
                "scale must be positive, got {scale}"
            )));
        }
        let mut plan = DatasetPlan {
            distance: TaskCounts::default(),
            movement: TaskCounts::default(),
            placement: TaskCounts::default(),
            val_fraction: DEFAULT_VAL_FRACTION,
        };
        for (task, train, val) in FULL_COUNTS {
            *plan.counts_mut(task) = TaskCounts {
                train: round_count(train as f64 * scale),
                val: round_count(val as f64 * scale),
            };
        }
        Ok(plan)
    }

    /// Keeps only the listed tasks.
    pub fn restrict(mut self, tasks: &[Task]) -> Self {
        for t in Task::ALL {
            if !tasks.contains(&t) {
                *self.counts_mut(t) = TaskCounts::default();
            }
        }
        self
    }

    pub fn counts(&self, task: Task) -> TaskCounts {
        match task {
            Task::Distance => self.distance,
            Task::Movement => self.movement,
            Task::Placement => self.placement,
        }
    }

    pub fn counts_mut(&mut self, task: Task) -> &mut TaskCounts {
        match task {
            Task::Distance => &mut self.distance,
            Task::Movement => &mut self.movement,
            Task::Placement => &mut self.placement,
        }
    }

    fn needs(&self, split: Split) -> bool {
        Task::ALL.iter().any(|&t| self.counts(t).get(split) > 0)
    }
}

fn round_count(x: f64) -> usize {
    math::floor(x + 0.5) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<InstructionSample>,
    pub val: Vec<InstructionSample>,
    pub train_scenes: Vec<String>,
    pub val_scenes: Vec<String>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[InstructionSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    /// Sample count per (split, task).
    pub fn counts(&self) -> BTreeMap<(Split, Task), usize> {
        let mut out = BTreeMap::new();
        for split in [Split::Train, Split::Val] {
            for t in Task::ALL {
                out.insert((split, t), 0);
            }
            for s in self.split(split) {
                *out.entry((split, s.task)).or_insert(0) += 1;
            }
        }
        out
    }
}

/// 64-bit FNV-1a, used to derive independent generator seeds from names.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // Separator so ("ab", "c") and ("a", "bc") differ.
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Distinct things a scene can yield for one task.
#[derive(Clone, Debug)]
enum Candidate {
    Pair(u32, u32),
    Move(u32, Direction),
    Mask(Vec<usize>, u32),
}

fn candidates(scene: &SceneRecord, task: Task) -> Result<Vec<Candidate>> {
    let n = scene.objects.len();
    let ids: Vec<u32> = scene.objects.iter().map(|o| o.object_id).collect();
    Ok(match task {
        Task::Distance => ids
            .iter()
            .flat_map(|&a| {
                ids.iter()
                    .filter(move |&&b| b != a)
                    .map(move |&b| Candidate::Pair(a, b))
            })
            .collect(),
        Task::Movement => {
            let tf = fit_transform(scene)?;
            let mut out = Vec::new();
            for o in &scene.objects {
                let q = tf.quantize_box(&o.bbox);
                for d in Direction::ALL {
                    if max_move(&q, d) >= MIN_MAGNITUDE {
                        out.push(Candidate::Move(o.object_id, d));
                    }
                }
            }
            out
        }
        Task::Placement => {
            if n < MIN_SUBSCENE {
                return Ok(Vec::new());
            }
            let mut sets = BTreeSet::new();
            for anchor in 0..n {
                for size in MIN_SUBSCENE..=n.min(MAX_SUBSCENE) {
                    let mut m = nearest_members(scene, anchor, size);
                    m.sort_unstable();
                    sets.insert(m);
                }
            }
            let mut out = Vec::new();
            for members in sets {
                for &i in &members {
                    out.push(Candidate::Mask(members.clone(), ids[i]));
                }
            }
            out
        }
    })
}

fn realize(scene: &SceneRecord, c: &Candidate, seed: u64) -> Result<InstructionSample> {
    match c {
        Candidate::Pair(a, b) => synth_distance(scene, *a, *b, seed),
        Candidate::Move(o, d) => synth_movement_random(scene, *o, *d, seed),
        Candidate::Mask(members, masked) => {
            synth_placement_masked(&subscene_from(scene, members)?, *masked, seed)
        }
    }
}

/// Spreads `want` samples over scenes one at a time in order, skipping scenes
/// that have run out of candidates.
fn allocate(capacity: &[usize], want: usize) -> Option<Vec<usize>> {
    let total: usize = capacity.iter().sum();
    if total < want {
        return None;
    }
    let mut take = alloc::vec![0; capacity.len()];
    let mut left = want;
    while left > 0 {
        let open: Vec<usize> = (0..capacity.len())
            .filter(|&i| take[i] < capacity[i])
            .collect();
        // Whole rounds at once, then a partial round in scene order.
        let room = open
            .iter()
            .map(|&i| capacity[i] - take[i])
            .min()
            .unwrap_or(0);
        let rounds = (left / open.len()).min(room);
        if rounds > 0 {
            for &i in &open {
                take[i] += rounds;
            }
            left -= rounds * open.len();
        } else {
            for &i in open.iter().take(left) {
                take[i] += 1;
            }
            left = left.saturating_sub(open.len());
        }
    }
    Some(take)
}

/// Builds train and val splits over scene-disjoint pools.
///
/// Scenes are sorted by id, shuffled with `seed`, and the first
/// `round(val_fraction * n)` go to validation (at least one when the plan
/// asks for validation samples, and never all when it asks for training
/// samples). Each task's count is spread evenly over the eligible scenes of a
/// split; within a scene, distinct candidates are drawn without replacement
/// using a generator derived from `(seed, scene_id, task)`. Output order is
/// `(scene_id, task, index)`.
pub fn generate_dataset(scenes: &[SceneRecord], plan: &DatasetPlan, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&plan.val_fraction) {
        return Err(Error::invalid(format!(
            "val_fraction must be in [0, 1], got {}",
            plan.val_fraction
        )));
    }
    let mut sorted: Vec<&SceneRecord> = scenes.iter().collect();
    sorted.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].scene_id == w[1].scene_id) {
        return Err(Error::invalid(format!(
            "duplicate scene id {}",
            w[0].scene_id
        )));
    }
    for s in &sorted {
        s.validate()?;
    }
    let n = sorted.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x0073_706c_6974));
    let mut n_val = round_count(plan.val_fraction * n as f64);
    if plan.needs(Split::Val) {
        n_val = n_val.max(1);
    }
    if plan.needs(Split::Train) && n > 0 {
        n_val = n_val.min(n - 1);
    }
    let mut in_val = alloc::vec![false; n];
    for &i in order.iter().take(n_val) {
        in_val[i] = true;
    }

    let mut dataset = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        train_scenes: Vec::new(),
        val_scenes: Vec::new(),
    };
    for (i, s) in sorted.iter().enumerate() {
        let names = if in_val[i] {
            &mut dataset.val_scenes
        } else {
            &mut dataset.train_scenes
        };
        names.push(s.scene_id.clone());
    }

    for split in [Split::Train, Split::Val] {
        let pool: Vec<&SceneRecord> = sorted
            .iter()
            .enumerate()
            .filter(|(i, _)| in_val[*i] == (split == Split::Val))
            .map(|(_, s)| *s)
            .collect();
        // (scene index in pool, task) -> samples
        let mut per_scene: Vec<BTreeMap<Task, Vec<InstructionSample>>> =
            (0..pool.len()).map(|_| BTreeMap::new()).collect();
        for task in Task::ALL {
            let want = plan.counts(task).get(split);
            if want == 0 {
                continue;
            }
            let cands: Vec<Vec<Candidate>> = pool
                .iter()
                .map(|s| candidates(s, task))
                .collect::<Result<_>>()?;
            let capacity: Vec<usize> = cands.iter().map(Vec::len).collect();
            let take = allocate(&capacity, want).ok_or_else(|| {
                Error::invalid(format!(
                    "plan asks for {want} {task} samples in {}, but its {} scenes yield at most {}",
                    split.as_str(),
                    pool.len(),
                    capacity.iter().sum::<usize>()
                ))
            })?;
            for (si, scene) in pool.iter().enumerate() {
                if take[si] == 0 {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&[
                    &seed.to_le_bytes(),
                    scene.scene_id.as_bytes(),
                    task.as_str().as_bytes(),
                ]));
                let mut pick = cands[si].clone();
                pick.shuffle(&mut rng);
                let mut samples = Vec::with_capacity(take[si]);
                for (index, c) in pick.iter().take(take[si]).enumerate() {
                    let mut s = realize(scene, c, rng.gen())?;
                    s.id = format!("{}-{task}-{index:05}", scene.scene_id);
                    s.split = split;
                    samples.push(s);
                }
                per_scene[si].insert(task, samples);
            }
        }
        let out = if split == Split::Val {
            &mut dataset.val
        } else {
            &mut dataset.train
        };
        for by_task in per_scene {
            for (_, samples) in by_task {
                out.extend(samples);
            }
        }
    }
    Ok(dataset)
}

/// The three worked examples on `scene0011_00`, rebuilt on a scene whose
/// bounds make every listed grid value exact.
pub mod fixtures {
    use super::*;
    use crate::geometry::{Box3, Point3};

    pub const SCENE_ID: &str = "scene0011_00";

    /// Grid units per metre on x and y (span 5.1 m) and on z (span 2.55 m).
    const XY_SCALE: f64 = 50.0;
    const Z_SCALE: f64 = 100.0;

    pub const CABINETS: u32 = 0;
    pub const CHAIR_BY_RAIL: u32 = 1;
    pub const WINDOW_CABINET: u32 = 2;
    pub const PLACED_CHAIR: u32 = 3;

    pub fn bounds() -> SceneBounds {
        SceneBounds {
            min: [0.0; 3],
            max: [255.0 / XY_SCALE, 255.0 / XY_SCALE, 255.0 / Z_SCALE],
        }
    }

    fn grid_box(v: [f64; 6]) -> Box3 {
        let s = [XY_SCALE, XY_SCALE, Z_SCALE];
        Box3::new(
            Point3::new(v[0] / s[0], v[1] / s[1], v[2] / s[2]),
            [v[3] / s[0], v[4] / s[1], v[5] / s[2]],
        )
        .expect("fixture boxes are valid")
    }

    fn object(id: u32, label: &str, v: [f64; 6], description: &str) -> SceneObject {
        SceneObject {
            object_id: id,
            label: label.to_string(),
            bbox: grid_box(v),
            descriptions: alloc::vec![description.to_string()],
        }
    }

    pub fn scene() -> SceneRecord {
        SceneRecord {
            scene_id: SCENE_ID.to_string(),
            objects: alloc::vec![
                object(
                    CABINETS,
                    "kitchen_cabinets",
                    [198.0, 171.0, 47.0, 7.0, 96.0, 81.0],
                    "There is a set of bottom kitchen cabinets in the room. It has a microwave in the middle of it.",
                ),
                object(
                    CHAIR_BY_RAIL,
                    "chair",
                    [141.0, 110.0, 58.0, 21.0, 16.0, 96.0],
                    "You are looking for a chair on the side of the table facing the ovens. It will be the chair near the rail.",
                ),
                object(
                    WINDOW_CABINET,
                    "cabinet",
                    [209.0, 61.0, 160.0, 27.0, 32.0, 153.0],
                    "this is a brown cabinet, it sets along the wall, right next to a window.",
                ),
                object(
                    PLACED_CHAIR,
                    "chair",
                    [133.0, 80.0, 57.0, 27.0, 22.0, 96.0],
                    "a chair pulled out from the table.",
                ),
            ],
            bounds: Some(bounds()),
        }
    }

    /// Sub-scene around the placed chair, sharing the parent's bounds.
    pub fn placement_subscene() -> Result<SubScene> {
        let s = scene();
        SubScene::with_bounds(SCENE_ID, s.objects, bounds())
    }

    pub fn distance_sample() -> Result<InstructionSample> {
        synth_distance(&scene(), CABINETS, CHAIR_BY_RAIL, 0)
    }

    pub fn movement_sample() -> Result<InstructionSample> {
        synth_movement(&scene(), WINDOW_CABINET, Direction::Forward, 110, 0)
    }

    pub fn placement_sample() -> Result<InstructionSample> {
        synth_placement_masked(&placement_subscene()?, PLACED_CHAIR, 0)
    }

    pub fn all() -> Result<Vec<InstructionSample>> {
        Ok(alloc::vec![
            distance_sample()?,
            movement_sample()?,
            placement_sample()?
        ])
    }
}
