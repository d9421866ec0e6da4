//! Geometric scoring of answers: Acc@IoU, F1@IoU with optimal matching,
//! gated mARE on distance answers, and editing accuracy for movement and
//! placement.
//!
//! Boxes are compared in grid units. IoU is invariant under per-axis positive
//! scaling and translation, so this equals IoU of the dequantized metric boxes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{parse_answer, AnswerPayload};
use crate::error::{Error, Result};
use crate::geometry::{iou_aabb, Box3, Point3};
use crate::math;
use crate::synth::{GroundTruth, InstructionSample, Task};

fn check_threshold(k: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::invalid(format!(
            "IoU threshold must be in [0, 1], got {k}"
        )));
    }
    Ok(())
}

fn check_aligned(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "{a} predictions for {b} ground truths"
        )));
    }
    if a == 0 {
        return Err(Error::invalid("no samples to score"));
    }
    Ok(())
}

/// Fraction of samples whose predicted box reaches IoU `k`; a missing box is a miss.
pub fn acc_at_iou(preds: &[Option<Box3>], gts: &[Box3], k: f64) -> Result<f64> {
    check_threshold(k)?;
    check_aligned(preds.len(), gts.len())?;
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| p.is_some_and(|p| iou_aabb(&p, g) >= k))
        .count();
    Ok(hits as f64 / gts.len() as f64)
}

/// Size of a maximum one-to-one matching between predictions and ground
/// truths over pairs with IoU at least `k` (augmenting paths).
pub fn max_matching(preds: &[Box3], gts: &[Box3], k: f64) -> usize {
    let adj: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| {
            (0..gts.len())
                .filter(|&g| iou_aabb(p, &gts[g]) >= k)
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = alloc::vec![None; gts.len()];
    let mut matched = 0;
    for p in 0..preds.len() {
        let mut seen = alloc::vec![false; gts.len()];
        if augment(p, &adj, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    matched
}

fn augment(p: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &g in &adj[p] {
        if seen[g] {
            continue;
        }
        seen[g] = true;
        if owner[g].is_none_or(|q| augment(q, adj, owner, seen)) {
            owner[g] = Some(p);
            return true;
        }
    }
    false
}

/// F1 of one sample: `2 TP / (|pred| + |gt|)`, and 1 when both sets are empty.
pub fn f1_single(preds: &[Box3], gts: &[Box3], k: f64) -> f64 {
    if preds.is_empty() && gts.is_empty() {
        return 1.0;
    }
    let tp = max_matching(preds, gts, k);
    2.0 * tp as f64 / (preds.len() + gts.len()) as f64
}

/// Mean per-sample F1 under optimal matching at IoU `k`.
pub fn f1_at_iou(pred_sets: &[Vec<Box3>], gt_sets: &[Vec<Box3>], k: f64) -> Result<f64> {
    check_threshold(k)?;
    check_aligned(pred_sets.len(), gt_sets.len())?;
    let sum: f64 = pred_sets
        .iter()
        .zip(gt_sets)
        .map(|(p, g)| f1_single(p, g, k))
        .sum();
    Ok(sum / gt_sets.len() as f64)
}

/// What a distance answer localized and measured. Missing parts fail the gate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistancePrediction {
    pub box_a: Option<Box3>,
    pub box_b: Option<Box3>,
    pub gaps: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceTruth {
    pub box_a: Box3,
    pub box_b: Box3,
    pub gaps: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MareReport {
    /// Per-axis mean ARE over samples that pass the gate; `None` when none do.
    pub mare: Option<[f64; 3]>,
    pub gate_rate: f64,
    pub qualifying: usize,
    pub total: usize,
}

/// `|pred - gt| / max(gt, 1)`.
pub fn absolute_relative_error(pred: f64, gt: f64) -> f64 {
    math::abs(pred - gt) / gt.max(1.0)
}

/// Gated mARE: a sample counts only when both predicted boxes reach IoU `k`
/// against their ground truths and all three gaps are present.
pub fn mare_at_iou(
    preds: &[DistancePrediction],
    gts: &[DistanceTruth],
    k: f64,
) -> Result<MareReport> {
    check_threshold(k)?;
    check_aligned(preds.len(), gts.len())?;
    let mut sum = [0.0; 3];
    let mut qualifying = 0;
    for (p, g) in preds.iter().zip(gts) {
        let passes = |b: Option<Box3>, t: &Box3| b.is_some_and(|b| iou_aabb(&b, t) >= k);
        let Some(gaps) = p.gaps else { continue };
        if !(passes(p.box_a, &g.box_a) && passes(p.box_b, &g.box_b)) {
            continue;
        }
        qualifying += 1;
        for a in 0..3 {
            sum[a] += absolute_relative_error(gaps[a], g.gaps[a]);
        }
    }
    Ok(MareReport {
        mare: (qualifying > 0).then(|| sum.map(|s| s / qualifying as f64)),
        gate_rate: qualifying as f64 / gts.len() as f64,
        qualifying,
        total: gts.len(),
    })
}

/// Box a parsed answer proposes for an editing sample: the last loc for
/// movement, and the first bare center with the queried size for placement.
pub fn edited_box(gt: &GroundTruth, answer: Option<&AnswerPayload>) -> Option<Box3> {
    let answer = answer?;
    match gt {
        GroundTruth::Movement { .. } => answer.locs().last().map(|q| q.to_grid_box()),
        GroundTruth::Placement { masked } => answer.centers().next().map(|c| Box3 {
            center: Point3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2])),
            extent: masked.to_grid_box().extent,
        }),
        GroundTruth::Distance { .. } => None,
    }
}

/// Target box of an editing sample: the moved box or the masked box.
pub fn edited_target(gt: &GroundTruth) -> Option<Box3> {
    match gt {
        GroundTruth::Movement { moved, .. } => Some(moved.to_grid_box()),
        GroundTruth::Placement { masked } => Some(masked.to_grid_box()),
        GroundTruth::Distance { .. } => None,
    }
}

/// Fraction of movement or placement answers whose edited box reaches IoU `k`.
/// Unparseable answers (`None`) are misses.
pub fn editing_acc(
    task: Task,
    preds: &[Option<&AnswerPayload>],
    gts: &[GroundTruth],
    k: f64,
) -> Result<f64> {
    if task == Task::Distance {
        return Err(Error::invalid(
            "editing accuracy applies to movement and placement",
        ));
    }
    check_aligned(preds.len(), gts.len())?;
    let mut boxes = Vec::with_capacity(gts.len());
    let mut targets = Vec::with_capacity(gts.len());
    for (p, g) in preds.iter().zip(gts) {
        if g.task() != task {
            return Err(Error::invalid(format!(
                "{} ground truth in a {task} batch",
                g.task()
            )));
        }
        boxes.push(edited_box(g, *p));
        targets.push(edited_target(g).expect("editing task"));
    }
    acc_at_iou(&boxes, &targets, k)
}

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.25, 0.5];

/// Metric name to value, plus sample counts. Metrics with no eligible samples
/// are listed in `undefined` instead.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub undefined: BTreeSet<String>,
    pub counts: BTreeMap<String, usize>,
}

impl EvalReport {
    fn put(&mut self, name: String, value: Option<f64>) {
        match value {
            Some(v) => {
                self.metrics.insert(name, v);
            }
            None => {
                self.undefined.insert(name);
            }
        }
    }
}

pub fn metric_name(metric: &str, k: f64) -> String {
    format!("{metric}@{k}")
}

/// Scores answer texts keyed by sample id against a dataset.
///
/// - `acc@k`: every object a sample asks to localize (distance A and B, and
///   the original box of a movement) against the loc at the same position.
/// - `f1@k`: all locs of each distance or movement answer against its gt locs.
/// - `mare_{x,y,z}@k` and `mare_gate@k`: distance samples.
/// - `movement_acc@k`, `placement_acc@k`: [`editing_acc`].
///
/// Samples without a prediction, or whose answer fails to parse, score as
/// empty answers. A prediction for an unknown sample id is an error.
pub fn score_dataset(
    samples: &[InstructionSample],
    predictions: &BTreeMap<String, String>,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to score"));
    }
    if thresholds.is_empty() {
        return Err(Error::invalid("at least one IoU threshold is required"));
    }
    for &k in thresholds {
        check_threshold(k)?;
    }
    let known: BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    if known.len() != samples.len() {
        return Err(Error::invalid("sample ids must be unique"));
    }
    if let Some(id) = predictions.keys().find(|id| !known.contains(id.as_str())) {
        return Err(Error::invalid(format!(
            "prediction for unknown sample {id:?}"
        )));
    }

    let mut missing = 0;
    let mut unparseable = 0;
    let parsed: Vec<Option<AnswerPayload>> = samples
        .iter()
        .map(|s| match predictions.get(&s.id) {
            None => {
                missing += 1;
                None
            }
            Some(text) => parse_answer(text).inspect_err(|_| unparseable += 1).ok(),
        })
        .collect();

    let mut ground_pred = Vec::new();
    let mut ground_gt = Vec::new();
    let mut set_pred = Vec::new();
    let mut set_gt = Vec::new();
    let mut dist_pred = Vec::new();
    let mut dist_gt = Vec::new();
    let mut edit: BTreeMap<Task, (Vec<Option<&AnswerPayload>>, Vec<GroundTruth>)> = BTreeMap::new();
    let mut per_task: BTreeMap<Task, usize> = BTreeMap::new();

    for (s, p) in samples.iter().zip(&parsed) {
        *per_task.entry(s.gt.task()).or_insert(0) += 1;
        let locs: Vec<Box3> = p
            .as_ref()
            .map(|p| p.locs().map(|q| q.to_grid_box()).collect())
            .unwrap_or_default();
        match s.gt {
            GroundTruth::Distance { box_a, box_b, gaps } => {
                let (a, b) = (box_a.to_grid_box(), box_b.to_grid_box());
                ground_pred.extend([locs.first().copied(), locs.get(1).copied()]);
                ground_gt.extend([a, b]);
                set_pred.push(locs.clone());
                set_gt.push(alloc::vec![a, b]);
                let g: Vec<u8> = p.as_ref().map(|p| p.gaps().collect()).unwrap_or_default();
                dist_pred.push(DistancePrediction {
                    box_a: locs.first().copied(),
                    box_b: locs.get(1).copied(),
                    gaps: (g.len() >= 3).then(|| [g[0], g[1], g[2]].map(f64::from)),
                });
                dist_gt.push(DistanceTruth {
                    box_a: a,
                    box_b: b,
                    gaps: gaps.map(f64::from),
                });
            }
            GroundTruth::Movement {
                original, moved, ..
            } => {
                ground_pred.push(locs.first().copied());
                ground_gt.push(original.to_grid_box());
                set_pred.push(locs);
                set_gt.push(alloc::vec![original.to_grid_box(), moved.to_grid_box()]);
                let e = edit.entry(Task::Movement).or_default();
                e.0.push(p.as_ref());
                e.1.push(s.gt);
            }
            GroundTruth::Placement { .. } => {
                let e = edit.entry(Task::Placement).or_default();
                e.0.push(p.as_ref());
                e.1.push(s.gt);
            }
        }
    }

    let mut report = EvalReport::default();
    for &k in thresholds {
        let acc = (!ground_gt.is_empty())
            .then(|| acc_at_iou(&ground_pred, &ground_gt, k))
            .transpose()?;
        report.put(metric_name("acc", k), acc);
        let f1 = (!set_gt.is_empty())
            .then(|| f1_at_iou(&set_pred, &set_gt, k))
            .transpose()?;
        report.put(metric_name("f1", k), f1);
        if dist_gt.is_empty() {
            for m in ["mare_x", "mare_y", "mare_z", "mare_gate"] {
                report.put(metric_name(m, k), None);
            }
        } else {
            let r = mare_at_iou(&dist_pred, &dist_gt, k)?;
            for (a, m) in ["mare_x", "mare_y", "mare_z"].into_iter().enumerate() {
                report.put(metric_name(m, k), r.mare.map(|v| v[a]));
            }
            report.put(metric_name("mare_gate", k), Some(r.gate_rate));
            report
                .counts
                .insert(metric_name("mare_qualifying", k), r.qualifying);
        }
        for task in [Task::Movement, Task::Placement] {
            let name = metric_name(&format!("{task}_acc"), k);
            let value = match edit.get(&task) {
                Some((p, g)) => Some(editing_acc(task, p, g, k)?),
                None => None,
            };
            report.put(name, value);
        }
    }
    report.counts.insert("samples".into(), samples.len());
    report
        .counts
        .insert("predictions".into(), predictions.len());
    report.counts.insert("missing".into(), missing);
    report.counts.insert("unparseable".into(), unparseable);
    report
        .counts
        .insert("grounding_targets".into(), ground_gt.len());
    for t in Task::ALL {
        report.counts.insert(
            format!("{t}_samples"),
            per_task.get(&t).copied().unwrap_or(0),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{emit_center, emit_loc, QuantBox};
    use crate::synth::fixtures;
    use proptest::prelude::*;

    fn unit() -> Box3 {
        Box3::new(Point3::new(10.0, 10.0, 10.0), [1.0, 1.0, 1.0]).unwrap()
    }

    /// A box of x-extent `e` and its copy shifted by `s` on x: IoU `(e - s) / (e + s)`.
    fn shifted_pair(e: f64, s: f64) -> (Box3, Box3) {
        let a = Box3::new(Point3::new(50.0, 50.0, 50.0), [e, 1.0, 1.0]).unwrap();
        let b = Box3::new(Point3::new(50.0 + s, 50.0, 50.0), [e, 1.0, 1.0]).unwrap();
        (a, b)
    }

    #[test]
    fn acc_examples() {
        let gts = [unit(), unit()];
        assert_eq!(
            acc_at_iou(&[Some(unit()), Some(unit())], &gts, 0.9).unwrap(),
            1.0
        );
        assert_eq!(acc_at_iou(&[None, None], &gts, 0.0).unwrap(), 0.0);

        let pairs = [
            shifted_pair(4.0, 1.0),
            shifted_pair(13.0, 7.0),
            shifted_pair(1.0, 5.0),
            shifted_pair(3.0, 1.0),
        ];
        let ious: Vec<f64> = pairs.iter().map(|(a, b)| iou_aabb(a, b)).collect();
        assert_eq!(ious, [0.6, 0.3, 0.0, 0.5]);
        let preds: Vec<Option<Box3>> = pairs.iter().map(|p| Some(p.0)).collect();
        let gts: Vec<Box3> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(acc_at_iou(&preds, &gts, 0.5).unwrap(), 0.5);

        assert!(acc_at_iou(&[None], &gts, 0.5).is_err());
        assert!(acc_at_iou(&[], &[], 0.5).is_err());
        assert!(acc_at_iou(&preds, &gts, 1.5).is_err());
    }

    #[test]
    fn f1_examples() {
        let (a, b) = shifted_pair(4.0, 1.0);
        let far = Box3::new(Point3::new(200.0, 0.0, 0.0), [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            f1_at_iou(&[alloc::vec![a, far]], &[alloc::vec![a, far]], 0.5).unwrap(),
            1.0
        );
        assert_eq!(f1_at_iou(&[Vec::new()], &[Vec::new()], 0.5).unwrap(), 1.0);
        let f1 = f1_at_iou(&[alloc::vec![a]], &[alloc::vec![b, far]], 0.5).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_single(&[], &[a], 0.5), 0.0);
        assert_eq!(f1_single(&[a], &[], 0.5), 0.0);
    }

    #[test]
    fn matching_beats_greedy_order() {
        // p0 overlaps both gts, p1 only g0: greedy p0 -> g0 strands p1.
        let g0 = Box3::new(Point3::new(0.0, 0.0, 0.0), [2.0, 1.0, 1.0]).unwrap();
        let g1 = Box3::new(Point3::new(0.5, 0.0, 0.0), [2.0, 1.0, 1.0]).unwrap();
        let p0 = Box3::new(Point3::new(0.25, 0.0, 0.0), [2.0, 1.0, 1.0]).unwrap();
        let p1 = Box3::new(Point3::new(-0.25, 0.0, 0.0), [2.0, 1.0, 1.0]).unwrap();
        assert!(iou_aabb(&p1, &g1) < 0.6 && iou_aabb(&p1, &g0) >= 0.6);
        assert_eq!(max_matching(&[p0, p1], &[g0, g1], 0.6), 2);
    }

    fn dist_truth(gaps: [f64; 3]) -> DistanceTruth {
        let (a, b) = shifted_pair(4.0, 30.0);
        DistanceTruth {
            box_a: a,
            box_b: b,
            gaps,
        }
    }

    #[test]
    fn mare_examples() {
        let gt = dist_truth([57.0, 61.0, 11.0]);
        let exact = DistancePrediction {
            box_a: Some(gt.box_a),
            box_b: Some(gt.box_b),
            gaps: Some(gt.gaps),
        };
        let r = mare_at_iou(&[exact], &[gt], 0.5).unwrap();
        assert_eq!((r.mare, r.gate_rate), (Some([0.0; 3]), 1.0));

        let off = DistancePrediction {
            gaps: Some([50.0, 60.0, 10.0]),
            ..exact
        };
        let m = mare_at_iou(&[off], &[gt], 0.5).unwrap().mare.unwrap();
        assert_eq!(m, [7.0 / 57.0, 1.0 / 61.0, 1.0 / 11.0]);

        assert_eq!(absolute_relative_error(2.0, 0.0), 2.0);

        let no_b = DistancePrediction {
            box_b: None,
            ..exact
        };
        let no_gaps = DistancePrediction {
            gaps: None,
            ..exact
        };
        let r = mare_at_iou(&[exact, no_b, no_gaps, off], &[gt; 4], 0.5).unwrap();
        assert_eq!((r.qualifying, r.total, r.gate_rate), (2, 4, 0.5));
        assert_eq!(r.mare.unwrap()[0], 7.0 / 57.0 / 2.0);

        let r = mare_at_iou(&[no_b], &[gt], 0.5).unwrap();
        assert_eq!((r.mare, r.gate_rate), (None, 0.0));
    }

    fn placement_gt(center: [u8; 3], extent: [u8; 3]) -> GroundTruth {
        GroundTruth::Placement {
            masked: QuantBox::new(center, extent),
        }
    }

    #[test]
    fn editing_examples() {
        let gt = placement_gt([100, 100, 20], [10, 10, 10]);
        let exact = parse_answer(&emit_center([100, 100, 20])).unwrap();
        let off = parse_answer(&emit_center([111, 100, 20])).unwrap();
        assert_eq!(
            editing_acc(Task::Placement, &[Some(&exact)], &[gt], 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            editing_acc(Task::Placement, &[Some(&off)], &[gt], 0.01).unwrap(),
            0.0
        );
        assert_eq!(
            editing_acc(Task::Placement, &[None], &[gt], 0.0).unwrap(),
            0.0
        );

        // x-extent 4 shifted by 1: 0.6; 3 by 1: 0.5; 4 by 2: 1/3.
        let cases = [(4, 1), (3, 1), (4, 2)];
        let gts: Vec<GroundTruth> = cases
            .iter()
            .map(|&(e, _)| placement_gt([100, 100, 20], [e, 1, 1]))
            .collect();
        let answers: Vec<AnswerPayload> = cases
            .iter()
            .map(|&(_, s)| parse_answer(&emit_center([100 + s, 100, 20])).unwrap())
            .collect();
        let refs: Vec<Option<&AnswerPayload>> = answers.iter().map(Some).collect();
        assert_eq!(
            editing_acc(Task::Placement, &refs, &gts, 0.5).unwrap(),
            2.0 / 3.0
        );

        assert!(editing_acc(Task::Distance, &refs, &gts, 0.5).is_err());
        assert!(editing_acc(Task::Movement, &refs, &gts, 0.5).is_err());
    }

    #[test]
    fn movement_scores_the_last_loc() {
        let s = fixtures::movement_sample().unwrap();
        let GroundTruth::Movement {
            original, moved, ..
        } = s.gt
        else {
            unreachable!()
        };
        let both = parse_answer(&s.answer).unwrap();
        let only_original = parse_answer(&emit_loc(&original)).unwrap();
        let only_moved = parse_answer(&emit_loc(&moved)).unwrap();
        let acc =
            |p: &AnswerPayload| editing_acc(Task::Movement, &[Some(p)], &[s.gt], 0.5).unwrap();
        assert_eq!(acc(&both), 1.0);
        assert_eq!(acc(&only_moved), 1.0);
        assert_eq!(acc(&only_original), 0.0);
    }

    fn answers_of(samples: &[InstructionSample]) -> BTreeMap<String, String> {
        samples
            .iter()
            .map(|s| (s.id.clone(), s.answer.clone()))
            .collect()
    }

    #[test]
    fn own_answers_score_perfectly() {
        let samples = fixtures::all().unwrap();
        let r = score_dataset(&samples, &answers_of(&samples), &DEFAULT_THRESHOLDS).unwrap();
        for k in DEFAULT_THRESHOLDS {
            for m in ["acc", "f1", "mare_gate", "movement_acc", "placement_acc"] {
                assert_eq!(r.metrics[&metric_name(m, k)], 1.0, "{m}@{k}");
            }
            for m in ["mare_x", "mare_y", "mare_z"] {
                assert_eq!(r.metrics[&metric_name(m, k)], 0.0, "{m}@{k}");
            }
        }
        assert!(r.undefined.is_empty());
        assert_eq!(r.counts["samples"], 3);
        assert_eq!(r.counts["grounding_targets"], 3);
        assert_eq!(r.counts["missing"], 0);
    }

    #[test]
    fn missing_garbled_and_unknown_predictions() {
        let samples = fixtures::all().unwrap();
        let mut preds = answers_of(&samples);
        preds.remove(&samples[0].id);
        preds.insert(samples[1].id.clone(), "<loc>1, 2</loc>".into());
        let r = score_dataset(&samples, &preds, &[0.5]).unwrap();
        assert_eq!((r.counts["missing"], r.counts["unparseable"]), (1, 1));
        assert_eq!(r.metrics["acc@0.5"], 0.0);
        assert_eq!(r.metrics["mare_gate@0.5"], 0.0);
        assert!(r.undefined.contains("mare_x@0.5"));
        assert_eq!(r.metrics["movement_acc@0.5"], 0.0);
        assert_eq!(r.metrics["placement_acc@0.5"], 1.0);

        preds.insert("nope".into(), String::new());
        assert!(score_dataset(&samples, &preds, &[0.5]).is_err());
        assert!(score_dataset(&samples, &answers_of(&samples), &[]).is_err());
        assert!(score_dataset(&[], &BTreeMap::new(), &[0.5]).is_err());
    }

    #[test]
    fn metrics_for_absent_tasks_are_undefined() {
        let samples = alloc::vec![fixtures::placement_sample().unwrap()];
        let r = score_dataset(&samples, &answers_of(&samples), &[0.25]).unwrap();
        assert_eq!(r.metrics.keys().collect::<Vec<_>>(), ["placement_acc@0.25"]);
        assert!(r.undefined.contains("acc@0.25") && r.undefined.contains("f1@0.25"));
    }

    /// Best count of IoU >= k pairs over every injection of the smaller set into the larger.
    fn injection_oracle(preds: &[Box3], gts: &[Box3], k: f64) -> usize {
        fn go(small: &[Box3], large: &[Box3], used: &mut [bool], k: f64) -> usize {
            let Some((first, rest)) = small.split_first() else {
                return 0;
            };
            let mut best = 0;
            for j in 0..large.len() {
                if used[j] {
                    continue;
                }
                used[j] = true;
                let hit = usize::from(iou_aabb(first, &large[j]) >= k);
                best = best.max(hit + go(rest, large, used, k));
                used[j] = false;
            }
            best
        }
        let (small, large) = if preds.len() <= gts.len() {
            (preds, gts)
        } else {
            (gts, preds)
        };
        go(small, large, &mut alloc::vec![false; large.len()], k)
    }

    fn small_box() -> impl Strategy<Value = Box3> {
        (
            prop::array::uniform3(0u8..12),
            prop::array::uniform3(1u8..8),
        )
            .prop_map(|(c, e)| {
                Box3::new(
                    Point3::new(f64::from(c[0]), f64::from(c[1]), f64::from(c[2])),
                    [f64::from(e[0]), f64::from(e[1]), f64::from(e[2])],
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn matching_equals_injection_oracle(
            preds in prop::collection::vec(small_box(), 0..=6),
            gts in prop::collection::vec(small_box(), 0..=6),
            k in 0.05f64..0.9,
        ) {
            let tp = injection_oracle(&preds, &gts, k);
            prop_assert_eq!(max_matching(&preds, &gts, k), tp);
            let oracle_f1 = if preds.is_empty() && gts.is_empty() {
                1.0
            } else {
                2.0 * tp as f64 / (preds.len() + gts.len()) as f64
            };
            prop_assert_eq!(f1_single(&preds, &gts, k), oracle_f1);
        }

        #[test]
        fn metrics_ignore_sample_order(
            pairs in prop::collection::vec((small_box(), small_box()), 1..12),
            k in 0.0f64..1.0,
            rot in 0usize..12,
        ) {
            let preds: Vec<Option<Box3>> = pairs.iter().map(|p| Some(p.0)).collect();
            let gts: Vec<Box3> = pairs.iter().map(|p| p.1).collect();
            let r = rot % pairs.len();
            let mut p2 = preds.clone();
            let mut g2 = gts.clone();
            p2.rotate_left(r);
            g2.rotate_left(r);
            p2.reverse();
            g2.reverse();
            // Counts of hits are order-free; compare the exact hit counts.
            let n = pairs.len() as f64;
            prop_assert_eq!(
                (acc_at_iou(&preds, &gts, k).unwrap() * n).round(),
                (acc_at_iou(&p2, &g2, k).unwrap() * n).round()
            );
            let sets_p: Vec<Vec<Box3>> = pairs.iter().map(|p| alloc::vec![p.0]).collect();
            let sets_g: Vec<Vec<Box3>> = pairs.iter().map(|p| alloc::vec![p.1, p.0]).collect();
            let mut sp2 = sets_p.clone();
            let mut sg2 = sets_g.clone();
            sp2.rotate_left(r);
            sg2.rotate_left(r);
            let (a, b) = (f1_at_iou(&sets_p, &sets_g, k).unwrap(), f1_at_iou(&sp2, &sg2, k).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_monotone_in_k(
            pairs in prop::collection::vec((small_box(), small_box()), 1..12),
            k1 in 0.0f64..1.0,
            k2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let preds: Vec<Option<Box3>> = pairs.iter().map(|p| Some(p.0)).collect();
            let gts: Vec<Box3> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(acc_at_iou(&preds, &gts, hi).unwrap() <= acc_at_iou(&preds, &gts, lo).unwrap());

            let edits: Vec<GroundTruth> = pairs
                .iter()
                .map(|p| placement_gt(p.1.center.to_array().map(|v| v as u8), p.1.extent.map(|v| v as u8)))
                .collect();
            let answers: Vec<AnswerPayload> = pairs
                .iter()
                .map(|p| parse_answer(&emit_center(p.0.center.to_array().map(|v| v as u8))).unwrap())
                .collect();
            let refs: Vec<Option<&AnswerPayload>> = answers.iter().map(Some).collect();
            prop_assert!(
                editing_acc(Task::Placement, &refs, &edits, hi).unwrap()
                    <= editing_acc(Task::Placement, &refs, &edits, lo).unwrap()
            );
        }
    }
}
