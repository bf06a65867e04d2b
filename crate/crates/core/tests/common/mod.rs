//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use keypoint3d::eval::{Detection, GroundTruth};
use keypoint3d::geometry::{Box3D, DecodeStats};
use keypoint3d::synth::{generate_scene, oracle_pyramid, OracleFrame, OracleModel, Scene, SceneSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// KITTI yaw convention: local point `p` maps to `R_y(yaw) p + c`.
/// Membership test inverts the rotation, so no polygon code is involved.
fn bev_contains(b: &Box3D, x: f64, z: f64) -> bool {
    let [cx, _, cz] = b.center();
    let (s, c) = b.yaw().sin_cos();
    let (dx, dz) = (x - cx, z - cz);
    let lx = c * dx - s * dz;
    let lz = s * dx + c * dz;
    lx.abs() <= 0.5 * b.length() && lz.abs() <= 0.5 * b.width()
}

fn extent(boxes: [&Box3D; 2]) -> [(f64, f64); 3] {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for b in boxes {
        let [cx, cy, cz] = b.center();
        let r = 0.5 * b.length().hypot(b.width());
        let h = 0.5 * b.height();
        for (i, (l, u)) in [(cx - r, cx + r), (cy - h, cy + h), (cz - r, cz + r)]
            .into_iter()
            .enumerate()
        {
            lo[i] = lo[i].min(l);
            hi[i] = hi[i].max(u);
        }
    }
    [(lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2])]
}

/// 3D IoU by counting cell centers of an `n`^3 grid over the joint extent.
/// Boxes are vertical prisms, so the count factors into columns times rows.
pub fn voxel_iou_3d(a: &Box3D, b: &Box3D, n: usize) -> f64 {
    let [xr, yr, zr] = extent([a, b]);
    let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
    let (mut cols_a, mut cols_b, mut cols_ab) = (0u64, 0u64, 0u64);
    for i in 0..n {
        let x = at(xr, i);
        for k in 0..n {
            let z = at(zr, k);
            let (ia, ib) = (bev_contains(a, x, z), bev_contains(b, x, z));
            cols_a += ia as u64;
            cols_b += ib as u64;
            cols_ab += (ia && ib) as u64;
        }
    }
    let y_in = |bx: &Box3D, y: f64| (y - bx.center()[1]).abs() <= 0.5 * bx.height();
    let (mut rows_a, mut rows_b, mut rows_ab) = (0u64, 0u64, 0u64);
    for j in 0..n {
        let y = at(yr, j);
        let (ia, ib) = (y_in(a, y), y_in(b, y));
        rows_a += ia as u64;
        rows_b += ib as u64;
        rows_ab += (ia && ib) as u64;
    }
    let inter = (cols_ab * rows_ab) as f64;
    let union = (cols_a * rows_a + cols_b * rows_b) as f64 - inter;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Pair of boxes with substantial overlap in expectation.
pub fn random_box_pair(rng: &mut ChaCha8Rng) -> (Box3D, Box3D) {
    let one = |rng: &mut ChaCha8Rng, c: [f64; 3]| {
        Box3D::new(
            [
                c[0] + rng.random_range(-1.5..1.5),
                c[1] + rng.random_range(-0.5..0.5),
                c[2] + rng.random_range(-1.5..1.5),
            ],
            [
                rng.random_range(0.5..2.5),
                rng.random_range(0.5..2.5),
                rng.random_range(0.5..5.0),
            ],
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        )
        .unwrap()
    };
    let c = [rng.random_range(-10.0..10.0), 1.0, rng.random_range(5.0..40.0)];
    (one(rng, c), one(rng, c))
}

/// Greedy score-ordered matching of the detections scoring at least
/// `threshold`; every ground truth counts.
pub fn greedy_tp_fp(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou: impl Fn(&Box3D, &Box3D) -> f64,
    iou_threshold: f64,
    threshold: f64,
) -> (usize, usize) {
    let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].score >= threshold).collect();
    // stable sort keeps lower indices first among equal scores
    idx.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut used = vec![false; gts.len()];
    let (mut tp, mut fp) = (0, 0);
    for d in idx {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(&dets[d].box3d, &gt.box3d);
            if !used[g] && v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, _)) => {
                used[g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
    }
    (tp, fp)
}

/// R11 AP by enumerating every distinct score as a threshold and
/// rematching from scratch each time.
pub fn brute_force_r11(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou: impl Fn(&Box3D, &Box3D) -> f64 + Copy,
    iou_threshold: f64,
) -> f64 {
    let npos = gts.len();
    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.score).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pr: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let (tp, fp) = greedy_tp_fp(dets, gts, iou, iou_threshold, t);
            (tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        let p = pr
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    100.0 * sum / 11.0
}

pub fn zero_noise_scenes(seeds: std::ops::Range<u64>, n_objects: usize) -> Vec<(Scene, OracleFrame)> {
    let stats = DecodeStats::default();
    let model = OracleModel::default();
    seeds
        .map(|s| {
            let scene = generate_scene(&SceneSpec::with_seed(s, n_objects), &stats).unwrap();
            let frame = oracle_pyramid(&scene, &model).unwrap();
            (scene, frame)
        })
        .collect()
}

/// Real root of `a r^2 + b r + c = 0` in `[0, hi]` by bisection.
pub fn bisect_root(a: f64, b: f64, c: f64, hi: f64) -> f64 {
    let f = |r: f64| a * r * r + b * r + c;
    let (mut lo, mut hi) = (0.0, hi);
    assert!(f(lo).signum() != f(hi).signum());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == f(lo).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Writes `n` label files in varied but valid KITTI formatting: mixed
/// precision, optional scores, DontCare rows and stray blank lines.
#[allow(clippy::approx_constant)]
pub fn write_label_corpus(dir: &std::path::Path, n: u32, seed: u64) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(dir).unwrap();
    let kinds = ["Car", "Van", "Truck", "Pedestrian", "Cyclist", "Tram", "Misc"];
    for frame in 0..n {
        let mut text = String::new();
        let rows = rng.random_range(0..12);
        let scored = rng.random_bool(0.5);
        for _ in 0..rows {
            if rng.random_bool(0.15) {
                text.push_str(
                    "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10",
                );
            } else {
                let occluded = rng.random_range(0..4).to_string();
                let prec = rng.random_range(2..7);
                let mut f = |lo: f64, hi: f64| format!("{:.*}", prec, rng.random_range(lo..hi));
                let kind = kinds[(frame as usize + text.len()) % kinds.len()];
                let fields = [
                    f(0.0, 1.0),
                    occluded,
                    f(-3.14, 3.14),
                    f(0.0, 600.0),
                    f(0.0, 180.0),
                    f(600.0, 1240.0),
                    f(180.0, 370.0),
                    f(0.5, 4.0),
                    f(0.3, 3.0),
                    f(0.3, 12.0),
                    f(-30.0, 30.0),
                    f(-1.0, 3.0),
                    f(1.0, 80.0),
                    f(-3.14, 3.14),
                ];
                text.push_str(kind);
                for x in &fields {
                    text.push(' ');
                    text.push_str(x);
                }
                if scored {
                    text.push(' ');
                    text.push_str(&f(0.0, 1.0));
                }
            }
            text.push('\n');
        }
        if rng.random_bool(0.2) {
            text.push('\n');
        }
        std::fs::write(dir.join(format!("{frame:06}.txt")), text).unwrap();
    }
}

/// Seeded random partition of `0..total` into sets of the given sizes.
pub fn synthetic_split(train: usize, val: usize, seed: u64) -> (Vec<u32>, Vec<u32>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..(train + val) as u32).collect();
    ids.shuffle(&mut rng);
    let mut t = ids[..train].to_vec();
    let mut v = ids[train..].to_vec();
    t.sort_unstable();
    v.sort_unstable();
    (t, v)
}
