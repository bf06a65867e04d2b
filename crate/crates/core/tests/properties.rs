mod common;

use std::f64::consts::PI;

use keypoint3d::eval::{
    average_precision, match_frame, pr_curve, ApMode, DetOutcome, Detection, Difficulty, FrameMatch,
    GroundTruth, IouCriterion,
};
use keypoint3d::geometry::{
    decode_box, encode_box, iou_3d, iou_bev, Box3D, CameraCalib, DecodeStats, GridIndex,
};
use keypoint3d::heatmap::{encode_heatmap, gaussian_radius, topk, GaussianSpec, Heatmap, HeatmapShape};
use keypoint3d::heatmap::{Keypoint, KeypointSet};
use keypoint3d::kitti_io::{parse_label_file, serialize_label_file, KittiLabel};
use keypoint3d::litefpn::{
    gather_fuse, map_index, regress, FeatureMap, FeaturePyramid, IndexRounding, Level, Matrix, RegressionHead,
};
use keypoint3d::losses::{
    attention_loss, attention_weights_from, focal_loss_raw, l1_reg_loss, AttentionParams, FocalParams,
    LossBatch,
};
use proptest::prelude::*;

prop_compose! {
    fn any_box()(
        x in -20.0..20.0f64, y in -1.0..3.0f64, z in 2.0..60.0f64,
        h in 0.3..4.0f64, w in 0.3..4.0f64, l in 0.3..8.0f64,
        yaw in -PI..PI,
    ) -> Box3D {
        Box3D::new([x, y, z], [h, w, l], yaw).unwrap()
    }
}

prop_compose! {
    fn near_pair()(
        a in any_box(),
        dx in -2.0..2.0f64, dy in -0.5..0.5f64, dz in -2.0..2.0f64,
        h in 0.3..4.0f64, w in 0.3..4.0f64, l in 0.3..8.0f64,
        yaw in -PI..PI,
    ) -> (Box3D, Box3D) {
        let [x, y, z] = a.center();
        (a, Box3D::new([x + dx, y + dy, z + dz], [h, w, l], yaw).unwrap())
    }
}

prop_compose! {
    fn visible_box()(
        lateral in -0.7..0.7f64, y in 0.0..2.0f64, z in 8.0..50.0f64,
        h in 1.0..2.5f64, w in 1.2..2.2f64, l in 2.5..5.0f64,
        yaw in -PI..PI,
    ) -> Box3D {
        // |x| / z bounded so the center projects inside the image
        Box3D::new([lateral * z, y, z], [h, w, l], yaw).unwrap()
    }
}

fn rotate_about(b: &Box3D, pivot: [f64; 2], theta: f64) -> Box3D {
    let [x, y, z] = b.center();
    let (s, c) = theta.sin_cos();
    let (dx, dz) = (x - pivot[0], z - pivot[1]);
    let center = [pivot[0] + c * dx + s * dz, y, pivot[1] - s * dx + c * dz];
    Box3D::new(center, b.dims(), b.yaw() + theta).unwrap()
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded((a, b) in near_pair()) {
        let v = iou_3d(&a, &b);
        prop_assert_eq!(v, iou_3d(&b, &a));
        prop_assert_eq!(iou_bev(&a, &b), iou_bev(&b, &a));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((0.0..=1.0).contains(&iou_bev(&a, &b)));
    }

    #[test]
    fn self_iou_is_one(a in any_box()) {
        prop_assert_eq!(iou_3d(&a, &a), 1.0);
        prop_assert_eq!(iou_bev(&a, &a), 1.0);
    }

    #[test]
    fn iou_translation_invariant((a, b) in near_pair(), t in prop::array::uniform3(-50.0..50.0f64)) {
        let d = (iou_3d(&a, &b) - iou_3d(&a.translated(t), &b.translated(t))).abs();
        prop_assert!(d < 1e-9, "diff {}", d);
    }

    #[test]
    fn bev_iou_rotation_invariant((a, b) in near_pair(), theta in -PI..PI) {
        let pivot = [a.center()[0], a.center()[2]];
        let d = (iou_bev(&a, &b) - iou_bev(&rotate_about(&a, pivot, theta), &rotate_about(&b, pivot, theta))).abs();
        prop_assert!(d < 1e-6, "diff {}", d);
    }

    #[test]
    fn decode_inverts_encode(b in visible_box()) {
        let calib = CameraCalib::kitti_reference();
        let stats = DecodeStats::default();
        let (kp, tau) = encode_box(&b, 0, &calib, &stats).unwrap();
        let d = decode_box(&tau, kp, 0, &calib, &stats).unwrap();
        for i in 0..3 {
            prop_assert!((d.center()[i] - b.center()[i]).abs() < 1e-6);
            prop_assert!((d.dims()[i] - b.dims()[i]).abs() < 1e-6 * b.dims()[i]);
        }
        let dyaw = keypoint3d::geometry::angle_diff(d.yaw(), b.yaw()).abs();
        prop_assert!(dyaw < 1e-9);
    }

    #[test]
    fn radius_matches_bisection(h in 2.0..300.0f64, w in 2.0..300.0f64, o in 0.05..0.95f64) {
        let r1 = common::bisect_root(1.0, -(h + w), w * h * (1.0 - o) / (1.0 + o), 0.5 * (h + w));
        let r2 = common::bisect_root(4.0, -2.0 * (h + w), (1.0 - o) * w * h, 0.25 * (h + w));
        let r3 = common::bisect_root(4.0 * o, 2.0 * o * (h + w), (o - 1.0) * w * h, h + w);
        let oracle = r1.min(r2).min(r3);
        prop_assert!((gaussian_radius(h, w, o) - oracle).abs() < 1e-9 * (1.0 + oracle));
    }

    #[test]
    fn heatmap_bounded_and_peaked(
        pts in prop::collection::vec((0usize..24, 0usize..16, 0usize..2, 0.3..4.0f64), 0..8)
    ) {
        let shape = HeatmapShape::new(16, 24, 2).unwrap();
        let specs: Vec<_> = pts.iter().map(|&(u, v, c, s)| GaussianSpec::new(GridIndex::new(u, v), s, c)).collect();
        let map = encode_heatmap(&specs, shape).unwrap();
        prop_assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
        for s in &specs {
            prop_assert_eq!(map.get(s.class, s.center.u, s.center.v), Some(1.0));
        }
        let mut rev = specs.clone();
        rev.reverse();
        prop_assert_eq!(encode_heatmap(&rev, shape).unwrap(), map);
    }

    #[test]
    fn topk_is_sorted_local_maxima(vals in prop::collection::vec(0.0..1.0f64, 2 * 9 * 11), k in 1usize..40) {
        let shape = HeatmapShape::new(9, 11, 2).unwrap();
        let map = Heatmap::from_values(shape, vals).unwrap();
        let set = topk(&map, k);
        prop_assert!(set.len() <= k);
        let s = set.as_slice();
        for w in s.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for kp in s {
            let (u, v) = (kp.index.u as i64, kp.index.v as i64);
            for dv in -1..=1 {
                for du in -1..=1 {
                    if let Some(n) = map.get(kp.class, (u + du).max(0) as usize, (v + dv).max(0) as usize) {
                        prop_assert!(kp.score >= n);
                    }
                }
            }
        }
    }

    #[test]
    fn floor_mapping_composes(u in 0usize..1_000_000, v in 0usize..1_000_000) {
        let i = GridIndex::new(u, v);
        let e = map_index(i, Level::Eighth, IndexRounding::Floor);
        let twice = map_index(e, Level::Eighth, IndexRounding::Floor);
        prop_assert_eq!(twice, map_index(i, Level::Sixteenth, IndexRounding::Floor));
    }

    #[test]
    fn attention_weights_sum_and_shift(
        pairs in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..64),
        beta in 0.0..2.0f64,
        shift in -0.5..0.5f64,
    ) {
        let p = AttentionParams { beta };
        let (scores, ious): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let w = attention_weights_from(&scores, &ious, p);
        let n = w.len() as f64;
        prop_assert!((w.iter().sum::<f64>() - n).abs() < 1e-9);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let w2 = attention_weights_from(&shifted, &ious, p);
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_monotone(
        pairs in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 2..32),
        idx in any::<prop::sample::Index>(),
        bump in 0.01..0.5f64,
    ) {
        let p = AttentionParams { beta: 0.5 };
        let (scores, ious): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let i = idx.index(scores.len());
        let base = attention_weights_from(&scores, &ious, p)[i];
        let mut s2 = scores.clone();
        s2[i] += bump;
        prop_assert!(attention_weights_from(&s2, &ious, p)[i] > base);
        let mut i2 = ious.clone();
        i2[i] = (i2[i] + bump).min(1.0);
        if i2[i] > ious[i] {
            prop_assert!(attention_weights_from(&scores, &i2, p)[i] < base);
        }
    }

    #[test]
    fn unit_weights_reduce_to_l1(
        n in 1usize..20,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let targets: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let batch = LossBatch::regression_only(8, preds, targets).unwrap();
        let a = attention_loss(&batch, &vec![1.0; n]).unwrap();
        let b = l1_reg_loss(&batch);
        prop_assert!((a.value - b.value).abs() <= 1e-15 * b.value.abs().max(f64::MIN_POSITIVE));
        prop_assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn focal_non_negative(
        vals in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..100),
        n in 1usize..5,
    ) {
        let (pred, mut gt): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        gt[0] = 1.0;
        let l = focal_loss_raw(&pred, &gt, FocalParams::default(), n).unwrap();
        prop_assert!(l.value >= 0.0);
    }

    #[test]
    fn regress_is_affine(
        seed in any::<u64>(),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (e1, e2, w) = (m(5, 12), m(5, 12), m(12, 3));
        let head = RegressionHead::new(w, vec![0.3, -0.7, 1.1]).unwrap();
        let mix: Vec<f64> = e1.as_slice().iter().zip(e2.as_slice()).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = regress(&Matrix::from_vec(5, 12, mix).unwrap(), &head).unwrap();
        let (r1, r2) = (regress(&e1, &head).unwrap(), regress(&e2, &head).unwrap());
        for i in 0..5 {
            for k in 0..3 {
                let rhs = alpha * r1.get(i, k) + beta * r2.get(i, k) - (alpha + beta - 1.0) * head.bias()[k];
                prop_assert!((lhs.get(i, k) - rhs).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gather_is_order_equivariant(
        pts in prop::collection::vec((0usize..20, 0usize..12), 1..10),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        use rand::seq::SliceRandom;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut level = |h: usize, w: usize| {
            FeatureMap::from_vec(h, w, 3, (0..h * w * 3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let pyr = FeaturePyramid::new(level(12, 20), level(6, 10), level(3, 5)).unwrap();
        let kps: Vec<Keypoint> = pts.iter().map(|&(u, v)| Keypoint { class: 0, index: GridIndex::new(u, v), score: 1.0 }).collect();
        let base = gather_fuse(&pyr, &KeypointSet::from_ordered(kps.clone())).unwrap();
        let mut perm: Vec<usize> = (0..kps.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled = KeypointSet::from_ordered(perm.iter().map(|&i| kps[i]).collect());
        let out = gather_fuse(&pyr, &shuffled).unwrap();
        for (row, &i) in perm.iter().enumerate() {
            prop_assert_eq!(out.row(row), base.row(i));
        }
    }
}

fn gt(b: Box3D) -> GroundTruth {
    GroundTruth {
        box3d: b,
        class: "Car".into(),
        bbox_height: 60.0,
        occlusion: 0,
        truncation: 0.0,
        frame: 0,
    }
}

fn det(b: Box3D, score: f64) -> Detection {
    Detection {
        box3d: b,
        class: "Car".into(),
        score,
        frame: 0,
    }
}

fn ap_of(frames: &[FrameMatch]) -> f64 {
    average_precision(&pr_curve(frames), ApMode::R11).unwrap()
}

prop_compose! {
    fn eval_instance()(
        gts in prop::collection::vec(any_box(), 1..6),
        jitter in prop::collection::vec((0usize..6, -0.3..0.3f64, 0.0..1.0f64), 0..12),
        extra in prop::collection::vec((any_box(), 0.0..1.0f64), 0..4),
    ) -> (Vec<GroundTruth>, Vec<Detection>) {
        let mut dets: Vec<Detection> = jitter.iter().map(|&(g, dx, s)| {
            let b = gts[g % gts.len()];
            det(b.translated([dx, 0.0, dx]), s)
        }).collect();
        dets.extend(extra.into_iter().map(|(b, s)| det(b, s)));
        (gts.into_iter().map(gt).collect(), dets)
    }
}

proptest! {
    #[test]
    fn ap_in_range_and_fp_never_helps((gts, dets) in eval_instance(), fp_score in 0.0..1.0f64) {
        let run = |d: &[Detection]| {
            let m = match_frame(d, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
            ap_of(&[m])
        };
        let ap = run(&dets);
        prop_assert!((0.0..=100.0).contains(&ap));
        // far from every ground truth, so necessarily a false positive
        let mut more = dets.clone();
        more.push(det(Box3D::new([500.0, 0.0, 500.0], [1.5, 1.6, 3.9], 0.0).unwrap(), fp_score));
        prop_assert!(run(&more) <= ap);
    }

    #[test]
    fn new_true_positive_never_hurts((gts, dets) in eval_instance(), score in 0.0..1.0f64) {
        let m = match_frame(&dets, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
        let ap = ap_of(std::slice::from_ref(&m));
        if let Some(g) = m.ground_truths.iter().position(|o| *o == keypoint3d::eval::GtOutcome::Missed) {
            let mut more = dets.clone();
            more.push(det(gts[g].box3d, score));
            let m2 = match_frame(&more, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
            prop_assert!(ap_of(&[m2]) >= ap);
        }
    }

    #[test]
    fn r11_matches_brute_force((gts, dets) in eval_instance()) {
        let m = match_frame(&dets, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
        let oracle = common::brute_force_r11(&dets, &gts, iou_3d, 0.5);
        prop_assert_eq!(ap_of(&[m]), oracle);
    }

    #[test]
    fn self_evaluation_is_perfect(boxes in prop::collection::vec(any_box(), 1..8), thr in 0.05..1.0f64) {
        let gts: Vec<_> = boxes.iter().copied().map(gt).collect();
        let dets: Vec<_> = boxes.iter().enumerate().map(|(i, b)| det(*b, 1.0 - i as f64 * 0.01)).collect();
        let m = match_frame(&dets, &gts, IouCriterion::ThreeD, thr, Difficulty::Easy);
        prop_assert_eq!(ap_of(&[m]), 100.0);
    }

    #[test]
    fn detection_order_does_not_matter((gts, dets) in eval_instance(), seed in any::<u64>()) {
        use rand::SeedableRng;
        use rand::seq::SliceRandom;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..dets.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Detection> = perm.iter().map(|&i| dets[i].clone()).collect();
        let a = match_frame(&dets, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
        let b = match_frame(&shuffled, &gts, IouCriterion::ThreeD, 0.5, Difficulty::Hard);
        let tp = |m: &FrameMatch| m.detections.iter().filter(|o| **o == DetOutcome::TruePositive).count();
        prop_assert_eq!(tp(&a), tp(&b));
        prop_assert_eq!(ap_of(&[a]), ap_of(&[b]));
    }

    #[test]
    fn label_round_trip_is_idempotent(
        rows in prop::collection::vec((
            prop::sample::select(vec!["Car", "Pedestrian", "Cyclist", "Van", "DontCare"]),
            0.0..1.0f64, 0i32..4, -PI..PI,
            prop::array::uniform4(0.0..1200.0f64),
            prop::array::uniform3(0.5..5.0f64),
            prop::array::uniform3(-40.0..60.0f64),
            -PI..PI,
            prop::option::of(0.0..1.0f64),
        ), 0..10)
    ) {
        let labels: Vec<KittiLabel> = rows.into_iter().map(|(k, t, o, a, bb, d, l, r, s)| KittiLabel {
            kind: k.to_string(), truncated: t, occluded: o, alpha: a, bbox: bb,
            dimensions: d, location: l, rotation_y: r, score: s,
        }).collect();
        let once = parse_label_file(&serialize_label_file(&labels)).unwrap();
        let twice = parse_label_file(&serialize_label_file(&once)).unwrap();
        prop_assert_eq!(once.len(), labels.len());
        prop_assert_eq!(once, twice);
    }
}
