//! Analytic kernels against brute-force references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial3d_core::codec::{emit_loc, parse_loc, QuantBox, QuantTransform};
use spatial3d_core::geometry::{fps, iou_aabb, Box3, FpsSeed, Point3};

fn random_pair(rng: &mut ChaCha8Rng) -> (Box3, Box3) {
    let ext = |rng: &mut ChaCha8Rng| [0.2, 0.2, 0.2].map(|lo: f64| rng.gen_range(lo..2.0));
    let a = Box3::new(Point3::new(0.0, 0.0, 0.0), ext(rng)).unwrap();
    let c = Point3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    (a, Box3::new(c, ext(rng)).unwrap())
}

/// Uniform samples over the joint bounding box; IoU = hits in both / hits in either.
fn monte_carlo_iou(a: &Box3, b: &Box3, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let lo: Vec<f64> = (0..3).map(|i| a.min()[i].min(b.min()[i])).collect();
    let hi: Vec<f64> = (0..3).map(|i| a.max()[i].max(b.max()[i])).collect();
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..n {
        let p = Point3::new(
            rng.gen_range(lo[0]..hi[0]),
            rng.gen_range(lo[1]..hi[1]),
            rng.gen_range(lo[2]..hi[2]),
        );
        let (ia, ib) = (a.contains(p), b.contains(p));
        both += usize::from(ia && ib);
        either += usize::from(ia || ib);
    }
    both as f64 / either as f64
}

#[test]
fn iou_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut overlapping = 0;
    for _ in 0..30 {
        let (a, b) = random_pair(&mut rng);
        let exact = iou_aabb(&a, &b);
        overlapping += usize::from(exact > 0.0);
        let mc = monte_carlo_iou(&a, &b, 200_000, &mut rng);
        assert!((exact - mc).abs() < 1e-2, "{a:?} {b:?}: {exact} vs {mc}");
    }
    assert!(
        overlapping >= 15,
        "pairs should mostly overlap, got {overlapping}"
    );
}

/// Lexicographically smallest index sequence from `first` in which every pick
/// attains the largest min-distance to the points already picked.
fn exhaustive_greedy(points: &[Point3], m: usize, first: usize) -> Vec<usize> {
    fn min_d(points: &[Point3], chosen: &[usize], i: usize) -> f64 {
        chosen
            .iter()
            .map(|&c| points[i].dist_sq(points[c]))
            .fold(f64::INFINITY, f64::min)
    }
    fn search(points: &[Point3], m: usize, seq: &mut Vec<usize>) -> bool {
        if seq.len() == m {
            return true;
        }
        let free: Vec<usize> = (0..points.len()).filter(|i| !seq.contains(i)).collect();
        let best = free
            .iter()
            .map(|&i| min_d(points, seq, i))
            .fold(f64::NEG_INFINITY, f64::max);
        for i in free {
            if min_d(points, seq, i) == best {
                seq.push(i);
                if search(points, m, seq) {
                    return true;
                }
                seq.pop();
            }
        }
        false
    }
    let mut seq = vec![first];
    assert!(search(points, m, &mut seq));
    seq
}

#[test]
fn fps_matches_exhaustive_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    for n in 1..=10 {
        for trial in 0..20 {
            // Half the clouds sit on a coarse integer lattice to force distance ties.
            let points: Vec<Point3> = (0..n)
                .map(|_| {
                    let mut c = [0.0; 3];
                    for v in &mut c {
                        *v = if trial % 2 == 0 {
                            rng.gen_range(-1.0..1.0)
                        } else {
                            f64::from(rng.gen_range(0..3))
                        };
                    }
                    Point3::from_array(c)
                })
                .collect();
            for m in 1..=n.min(4) {
                for first in 0..n {
                    assert_eq!(
                        fps(&points, m, FpsSeed::Index(first)).unwrap(),
                        exhaustive_greedy(&points, m, first)
                    );
                    cases += 1;
                }
            }
        }
    }
    assert!(cases > 1000);
}

#[test]
fn codec_round_trips_100k_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100_000 {
        let q = QuantBox::new(rng.gen(), rng.gen());
        assert_eq!(parse_loc(&emit_loc(&q)).unwrap(), q);
    }
    for _ in 0..1000 {
        let lo = [(); 3].map(|_| rng.gen_range(-10.0..10.0));
        let hi = lo.map(|v| v + rng.gen_range(0.5..20.0));
        let t = QuantTransform::new(lo, hi).unwrap();
        for _ in 0..100 {
            let mut c = [0.0; 3];
            let mut e = [0.0; 3];
            for a in 0..3 {
                let x0 = rng.gen_range(lo[a]..hi[a]);
                let x1 = rng.gen_range(lo[a]..hi[a]);
                c[a] = 0.5 * (x0 + x1);
                e[a] = (x1 - x0).abs();
            }
            let b = Box3::new(Point3::from_array(c), e).unwrap();
            let back = t.dequantize_box(&t.quantize_box(&b));
            for a in 0..3 {
                let half = 0.5 * t.bin_width(a) * (1.0 + 1e-12);
                assert!((back.center.to_array()[a] - c[a]).abs() <= half);
                assert!((back.extent[a] - e[a]).abs() <= half);
            }
        }
    }
}
