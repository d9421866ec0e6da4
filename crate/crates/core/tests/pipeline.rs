//! Synthesis feeding the metric suite, in process.

use std::collections::BTreeMap;

use spatial3d_core::codec::{emit_gap, emit_loc, QuantBox};
use spatial3d_core::eval::{score_dataset, DEFAULT_THRESHOLDS};
use spatial3d_core::scene::synthetic_corpus;
use spatial3d_core::synth::{
    generate_dataset, DatasetPlan, GroundTruth, InstructionSample, Task, TaskCounts,
};

fn small_dataset() -> Vec<InstructionSample> {
    let scenes = synthetic_corpus(12, 4).unwrap();
    let plan = DatasetPlan {
        distance: TaskCounts { train: 60, val: 10 },
        movement: TaskCounts { train: 30, val: 10 },
        placement: TaskCounts { train: 30, val: 10 },
        val_fraction: 0.25,
    };
    let ds = generate_dataset(&scenes, &plan, 9).unwrap();
    ds.train.into_iter().chain(ds.val).collect()
}

fn gold(samples: &[InstructionSample]) -> BTreeMap<String, String> {
    samples
        .iter()
        .map(|s| (s.id.clone(), s.answer.clone()))
        .collect()
}

#[test]
fn gold_answers_score_perfectly() {
    let samples = small_dataset();
    assert_eq!(samples.len(), 150);
    let r = score_dataset(&samples, &gold(&samples), &DEFAULT_THRESHOLDS).unwrap();
    for (k, v) in &r.metrics {
        let want = if k.starts_with("mare_") && !k.starts_with("mare_gate") {
            0.0
        } else {
            1.0
        };
        assert_eq!(*v, want, "{k}");
    }
    assert!(r.undefined.is_empty());
}

#[test]
fn wrong_gaps_raise_mare_but_keep_the_gate() {
    let samples = small_dataset();
    let mut preds = gold(&samples);
    let mut expected_x = Vec::new();
    for s in &samples {
        if let GroundTruth::Distance { box_a, box_b, gaps } = s.gt {
            let off = gaps[0].saturating_add(5);
            expected_x.push(f64::from(off - gaps[0]) / f64::from(gaps[0]).max(1.0));
            let text = format!(
                "{} {} {}{}{}",
                emit_loc(&box_a),
                emit_loc(&box_b),
                emit_gap(off),
                emit_gap(gaps[1]),
                emit_gap(gaps[2])
            );
            preds.insert(s.id.clone(), text);
        }
    }
    let r = score_dataset(&samples, &preds, &[0.5]).unwrap();
    let mean = expected_x.iter().sum::<f64>() / expected_x.len() as f64;
    assert!((r.metrics["mare_x@0.5"] - mean).abs() < 1e-12);
    assert_eq!(r.metrics["mare_y@0.5"], 0.0);
    assert_eq!(r.metrics["mare_gate@0.5"], 1.0);
    assert_eq!(r.metrics["acc@0.5"], 1.0);
}

#[test]
fn displaced_boxes_fail_every_localization_metric() {
    let samples = small_dataset();
    let shove = |q: &QuantBox| {
        let mut q = *q;
        q.center[0] = if q.center[0] < 128 { 255 } else { 0 };
        q.extent = [1, 1, 1];
        emit_loc(&q)
    };
    let preds: BTreeMap<String, String> = samples
        .iter()
        .map(|s| {
            let text = match s.gt {
                GroundTruth::Distance { box_a, box_b, .. } => {
                    format!("{} {}", shove(&box_a), shove(&box_b))
                }
                GroundTruth::Movement {
                    original, moved, ..
                } => format!("{} {}", shove(&original), shove(&moved)),
                GroundTruth::Placement { masked } => {
                    // The scored box keeps the true size, so move by a full extent.
                    let (c, e) = (masked.center.map(u16::from), masked.extent.map(u16::from));
                    let mut p = c;
                    let a = (0..3)
                        .find(|&a| c[a] + e[a] <= 255 || c[a] >= e[a])
                        .expect("room on some axis");
                    p[a] = if c[a] + e[a] <= 255 {
                        c[a] + e[a]
                    } else {
                        c[a] - e[a]
                    };
                    format!("{}, {}, {}", p[0], p[1], p[2])
                }
            };
            (s.id.clone(), text)
        })
        .collect();
    let r = score_dataset(&samples, &preds, &[0.25]).unwrap();
    for m in ["acc", "f1", "mare_gate", "movement_acc", "placement_acc"] {
        assert_eq!(r.metrics[&format!("{m}@0.25")], 0.0, "{m}");
    }
    assert!(r.undefined.contains("mare_x@0.25"));
    assert_eq!(r.counts[&format!("{}_samples", Task::Distance)], 70);
}
