//! Synthetic scenes and an oracle feature backbone.
//!
//! The oracle plants each object's regression tuple in the 1/4-level feature
//! vector at its keypoint, scaled per channel by a power of two, so that a
//! known linear head (`planted_head`) recovers the tuple bit for bit. All
//! other feature values are random context. Optional Gaussian noise is
//! added on top of every feature, and the predicted heatmap degrades each
//! object's peak according to how much that noise corrupts its tuple.
//!
//! Everything is a deterministic function of the scene seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::eval::{match_frame, Detection, Difficulty, FrameMatch, GroundTruth, IouCriterion};
use crate::geometry::{
    decode_box, encode_box, iou_3d, normalize_angle, Box3D, CameraCalib, DecodeStats, GridIndex,
    RegressionTuple, TAU_LEN,
};
use crate::heatmap::{
    encode_heatmap, gaussian_radius, sample_scores, sigma_from_radius, topk, GaussianSpec, Heatmap,
    HeatmapShape, Keypoint, KeypointSet, DEFAULT_MIN_OVERLAP,
};
use crate::kitti_io::{image_bbox, KittiLabel};
use crate::litefpn::{gather_fuse, regress, FeatureMap, FeaturePyramid, Matrix, RegressionHead};
use crate::losses::{attention_loss, attention_weights, l1_reg_loss, AttentionParams, LossBatch};

const MAX_RETRIES: usize = 1000;
const DIVERGENCE_LIMIT: f64 = 1e6;

// Independent random streams derived from the scene seed.
const STREAM_SCENE: u64 = 0;
const STREAM_CONTEXT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SCORE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_objects: usize,
    /// Camera depth range of object centers (m).
    pub depth_range: (f64, f64),
    /// Lateral range of object centers (m).
    pub lateral_range: (f64, f64),
    /// Relative jitter applied to the class mean dimensions.
    pub dims_jitter: f64,
    /// Input image `(height, width)` in pixels.
    pub image_size: (usize, usize),
    /// Height of the camera above the ground plane (m).
    pub camera_height: f64,
    pub calib: CameraCalib,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 6,
            depth_range: (6.0, 40.0),
            lateral_range: (-12.0, 12.0),
            dims_jitter: 0.1,
            image_size: (384, 1280),
            camera_height: 1.65,
            calib: CameraCalib::kitti_reference(),
        }
    }
}

impl SceneSpec {
    pub fn with_seed(seed: u64, n_objects: usize) -> Self {
        Self {
            seed,
            n_objects,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_range = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a < b;
        if !ok_range(self.depth_range) || self.depth_range.0 <= 0.0 {
            return Err(Error::InvalidArgument(
                "depth range must be positive and non-empty".into(),
            ));
        }
        if !ok_range(self.lateral_range) {
            return Err(Error::InvalidArgument("lateral range must be non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.dims_jitter) {
            return Err(Error::InvalidArgument("dims jitter must be in [0, 1)".into()));
        }
        if self.image_size.0 < 16 || self.image_size.1 < 16 {
            return Err(Error::InvalidArgument("image must be at least 16x16".into()));
        }
        Ok(())
    }

    /// Output grid of the detection head for this image size.
    pub fn grid_shape(&self, classes: usize) -> Result<HeatmapShape> {
        HeatmapShape::new(self.image_size.0 / 4, self.image_size.1 / 4, classes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub box3d: Box3D,
    pub class: usize,
    /// Image box `(left, top, right, bottom)` clipped to the image.
    pub bbox: [f64; 4],
    /// Fraction of the unclipped image box outside the image.
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub objects: Vec<SceneObject>,
    pub calib: CameraCalib,
    pub image_size: (usize, usize),
}

impl Scene {
    pub fn ground_truths(&self, frame: u32, class_names: &[String]) -> Vec<GroundTruth> {
        self.objects
            .iter()
            .map(|o| GroundTruth {
                box3d: o.box3d,
                class: class_names[o.class].clone(),
                bbox_height: o.bbox[3] - o.bbox[1],
                occlusion: 0,
                truncation: o.truncation,
                frame,
            })
            .collect()
    }

    pub fn labels(&self, class_names: &[String]) -> Vec<KittiLabel> {
        self.objects
            .iter()
            .map(|o| {
                let [x, _, z] = o.box3d.center();
                let alpha = normalize_angle(o.box3d.yaw() - x.atan2(z));
                let mut l = KittiLabel::from_box(&class_names[o.class], &o.box3d, o.bbox, alpha, None);
                l.truncated = o.truncation;
                l
            })
            .collect()
    }
}

fn clip_bbox(raw: [f64; 4], (h, w): (usize, usize)) -> ([f64; 4], f64) {
    let (wf, hf) = (w as f64 - 1.0, h as f64 - 1.0);
    let clipped = [
        raw[0].clamp(0.0, wf),
        raw[1].clamp(0.0, hf),
        raw[2].clamp(0.0, wf),
        raw[3].clamp(0.0, hf),
    ];
    let area = |b: [f64; 4]| (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let full = area(raw);
    let truncation = if full > 0.0 {
        (1.0 - area(clipped) / full).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (clipped, truncation)
}

/// Random scene whose object centers all project inside the output grid,
/// with distinct keypoints and non-overlapping footprints.
pub fn generate_scene(spec: &SceneSpec, stats: &DecodeStats) -> Result<Scene> {
    spec.validate()?;
    let mut rng = stream(spec.seed, STREAM_SCENE);
    let grid = spec.grid_shape(stats.num_classes())?;
    let mut objects: Vec<SceneObject> = Vec::with_capacity(spec.n_objects);
    let mut keypoints: Vec<GridIndex> = Vec::with_capacity(spec.n_objects);
    for _ in 0..spec.n_objects {
        let mut placed = false;
        for _ in 0..MAX_RETRIES {
            let class = rng.random_range(0..stats.num_classes());
            let mean = stats.mean_dims(class)?;
            let dims = mean.map(|m| m * (1.0 + spec.dims_jitter * rng.random_range(-1.0..=1.0)));
            let z = rng.random_range(spec.depth_range.0..spec.depth_range.1);
            let x = rng.random_range(spec.lateral_range.0..spec.lateral_range.1);
            let y = spec.camera_height - 0.5 * dims[0] + rng.random_range(-0.1..0.1);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let b = Box3D::new([x, y, z], dims, yaw)?;
            let Ok((kp, _)) = encode_box(&b, class, &spec.calib, stats) else {
                continue;
            };
            if kp.u >= grid.width || kp.v >= grid.height || keypoints.contains(&kp) {
                continue;
            }
            if objects
                .iter()
                .any(|o| crate::geometry::iou_bev(&o.box3d, &b) > 0.0)
            {
                continue;
            }
            let Ok(raw) = image_bbox(&b, &spec.calib) else {
                continue;
            };
            let (bbox, truncation) = clip_bbox(raw, spec.image_size);
            keypoints.push(kp);
            objects.push(SceneObject {
                box3d: b,
                class,
                bbox,
                truncation,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::RetriesExhausted(MAX_RETRIES));
        }
    }
    Ok(Scene {
        seed: spec.seed,
        objects,
        calib: spec.calib,
        image_size: spec.image_size,
    })
}

/// Oracle backbone configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    /// Channels per pyramid level; at least the tuple length.
    pub channels: usize,
    /// Standard deviation of the Gaussian noise added to every feature.
    pub feature_noise: f64,
    /// Score drop per unit L1 corruption of the regression tuple.
    pub score_slope: f64,
    /// Standard deviation of the random score perturbation.
    pub score_jitter: f64,
    /// Standard deviation of the random context features.
    pub context_scale: f64,
    pub min_overlap: f64,
    pub stats: DecodeStats,
}

impl Default for OracleModel {
    fn default() -> Self {
        Self {
            channels: TAU_LEN,
            feature_noise: 0.0,
            score_slope: 0.5,
            score_jitter: 0.0,
            context_scale: 1.0,
            min_overlap: DEFAULT_MIN_OVERLAP,
            stats: DecodeStats::default(),
        }
    }
}

/// Per-channel power-of-two scale of the planted tuple, chosen so every
/// channel has a comparable spread.
const PLANT_SCALE: [f64; TAU_LEN] = [1.0, 2.0, 2.0, 8.0, 8.0, 8.0, 1.0, 1.0];

impl OracleModel {
    pub fn classes(&self) -> usize {
        self.stats.num_classes()
    }

    /// Fused-embedding width `3D`.
    pub fn embedding_width(&self) -> usize {
        3 * self.channels
    }

    /// Head that reads the planted tuple out of the 1/4-level block.
    pub fn planted_head(&self) -> RegressionHead {
        let mut head = RegressionHead::zeros(self.embedding_width(), TAU_LEN);
        for (k, scale) in PLANT_SCALE.iter().enumerate() {
            head.weights_mut().set(k, k, 1.0 / scale);
        }
        head
    }

    fn validate(&self) -> Result<()> {
        if self.channels < TAU_LEN {
            return Err(Error::InvalidArgument(format!(
                "oracle needs at least {TAU_LEN} channels, got {}",
                self.channels
            )));
        }
        if !(self.feature_noise >= 0.0) || !(self.context_scale >= 0.0) || !(self.score_jitter >= 0.0) {
            return Err(Error::InvalidArgument("noise scales must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ground-truth keypoint of one object in an oracle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTarget {
    pub object: usize,
    pub class: usize,
    pub keypoint: GridIndex,
    pub tau: RegressionTuple,
    pub box3d: Box3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleFrame {
    pub gt_heatmap: Heatmap,
    pub pred_heatmap: Heatmap,
    pub pyramid: FeaturePyramid,
    pub targets: Vec<GtTarget>,
    /// Predicted peak score of each target.
    pub scores: Vec<f64>,
    pub warnings: Vec<String>,
}

fn random_level(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize, scale: f64) -> FeatureMap {
    let data = (0..h * w * d).map(|_| scale * normal(rng)).collect();
    FeatureMap::from_vec(h, w, d, data).expect("sized by construction")
}

fn object_sigma(bbox: [f64; 4], min_overlap: f64) -> f64 {
    let h = ((bbox[3] - bbox[1]) / 4.0).max(1.0);
    let w = ((bbox[2] - bbox[0]) / 4.0).max(1.0);
    sigma_from_radius(gaussian_radius(h, w, min_overlap))
}

/// Builds heatmaps and a feature pyramid for `scene`.
pub fn oracle_pyramid(scene: &Scene, model: &OracleModel) -> Result<OracleFrame> {
    model.validate()?;
    let shape = HeatmapShape::new(scene.image_size.0 / 4, scene.image_size.1 / 4, model.classes())?;
    let (h, w, d) = (shape.height, shape.width, model.channels);

    let mut ctx = stream(scene.seed, STREAM_CONTEXT);
    let quarter = random_level(&mut ctx, h, w, d, model.context_scale);
    let eighth = random_level(&mut ctx, h.div_ceil(2), w.div_ceil(2), d, model.context_scale);
    let sixteenth = random_level(&mut ctx, h.div_ceil(4), w.div_ceil(4), d, model.context_scale);
    let mut pyramid = FeaturePyramid::new(quarter, eighth, sixteenth)?;

    // nearest objects claim contested keypoints
    let mut order: Vec<usize> = (0..scene.objects.len()).collect();
    order.sort_by(|&a, &b| {
        let za = scene.objects[a].box3d.center()[2];
        let zb = scene.objects[b].box3d.center()[2];
        za.total_cmp(&zb).then(a.cmp(&b))
    });
    let mut targets: Vec<GtTarget> = Vec::new();
    let mut warnings = Vec::new();
    for idx in order {
        let obj = &scene.objects[idx];
        let (kp, tau) = encode_box(&obj.box3d, obj.class, &scene.calib, &model.stats)?;
        if kp.u >= w || kp.v >= h {
            return Err(Error::OutOfBounds(format!(
                "object {idx} keypoint ({}, {}) outside {w}x{h} grid",
                kp.u, kp.v
            )));
        }
        if let Some(t) = targets.iter().find(|t| t.keypoint == kp) {
            warnings.push(format!(
                "object {idx} shares keypoint ({}, {}) with nearer object {}; dropped",
                kp.u, kp.v, t.object
            ));
            continue;
        }
        let px = pyramid
            .level_mut(crate::litefpn::Level::Quarter)
            .pixel_mut(kp)
            .expect("checked above");
        for k in 0..TAU_LEN {
            px[k] = tau.0[k] * PLANT_SCALE[k];
        }
        targets.push(GtTarget {
            object: idx,
            class: obj.class,
            keypoint: kp,
            tau,
            box3d: obj.box3d,
        });
    }
    targets.sort_by_key(|t| t.object);

    let clean_taus = if model.feature_noise > 0.0 {
        Some(readout(&pyramid, &targets, &model.planted_head())?)
    } else {
        None
    };
    let mut noise = stream(scene.seed, STREAM_NOISE);
    for level in crate::litefpn::Level::ALL {
        for v in pyramid.level_mut(level).as_mut_slice() {
            *v += model.feature_noise * normal(&mut noise);
        }
    }

    let mut score_rng = stream(scene.seed, STREAM_SCORE);
    let mut scores = Vec::with_capacity(targets.len());
    let noisy_taus = match clean_taus {
        Some(_) => Some(readout(&pyramid, &targets, &model.planted_head())?),
        None => None,
    };
    for (i, _) in targets.iter().enumerate() {
        let corruption = match (&clean_taus, &noisy_taus) {
            (Some(c), Some(n)) => c
                .row(i)
                .iter()
                .zip(n.row(i))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>(),
            _ => 0.0,
        };
        let jitter = normal(&mut score_rng);
        let s = 1.0 - model.score_slope * corruption + model.score_jitter * jitter;
        scores.push(s.clamp(0.0, 1.0));
    }

    let mut gt_specs = Vec::with_capacity(targets.len());
    let mut pred_specs = Vec::with_capacity(targets.len());
    for (t, s) in targets.iter().zip(&scores) {
        let sigma = object_sigma(scene.objects[t.object].bbox, model.min_overlap);
        let spec = GaussianSpec::new(t.keypoint, sigma, t.class);
        gt_specs.push(spec);
        pred_specs.push(GaussianSpec {
            amplitude: *s,
            ..spec
        });
    }
    Ok(OracleFrame {
        gt_heatmap: encode_heatmap(&gt_specs, shape)?,
        pred_heatmap: encode_heatmap(&pred_specs, shape)?,
        pyramid,
        targets,
        scores,
        warnings,
    })
}

fn readout(pyramid: &FeaturePyramid, targets: &[GtTarget], head: &RegressionHead) -> Result<Matrix> {
    let set = gt_keypoints(targets);
    regress(&gather_fuse(pyramid, &set)?, head)
}

fn gt_keypoints(targets: &[GtTarget]) -> KeypointSet {
    KeypointSet::from_ordered(
        targets
            .iter()
            .map(|t| Keypoint {
                class: t.class,
                index: t.keypoint,
                score: 1.0,
            })
            .collect(),
    )
}

/// Regression tuples read out at the ground-truth keypoints of `frame`.
pub fn readout_at_targets(frame: &OracleFrame, head: &RegressionHead) -> Result<Matrix> {
    readout(&frame.pyramid, &frame.targets, head)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub stats: DecodeStats,
    pub class_names: Vec<String>,
    /// Candidates must score strictly above this.
    pub min_score: f64,
    pub criterion: IouCriterion,
    pub iou_threshold: f64,
    pub difficulty: Difficulty,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: crate::heatmap::DEFAULT_TOP_K,
            stats: DecodeStats::default(),
            class_names: vec!["Car".into()],
            min_score: 0.0,
            criterion: IouCriterion::ThreeD,
            iou_threshold: 0.7,
            difficulty: Difficulty::Moderate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub detections: Vec<Detection>,
    /// Keypoint behind each detection.
    pub keypoints: Vec<Keypoint>,
    /// Candidates whose tuple did not decode to a valid box.
    pub dropped: usize,
    pub frame_match: FrameMatch,
}

/// top-K -> index mapping + gather -> linear head -> decode -> match.
pub fn run_pipeline(
    scene: &Scene,
    frame: &OracleFrame,
    head: &RegressionHead,
    cfg: &PipelineConfig,
    frame_id: u32,
) -> Result<PipelineOutput> {
    let proposals = topk(&frame.pred_heatmap, cfg.k);
    let kept = KeypointSet::from_ordered(
        proposals
            .iter()
            .copied()
            .filter(|k| k.score > cfg.min_score)
            .collect(),
    );
    let embedding = gather_fuse(&frame.pyramid, &kept)?;
    let taus = regress(&embedding, head)?;
    let mut detections = Vec::with_capacity(kept.len());
    let mut keypoints = Vec::with_capacity(kept.len());
    let mut dropped = 0;
    for (i, kp) in kept.iter().enumerate() {
        let tau = RegressionTuple::from_slice(taus.row(i))?;
        match decode_box(&tau, kp.index, kp.class, &scene.calib, &cfg.stats) {
            Ok(b) => {
                detections.push(Detection {
                    box3d: b,
                    class: cfg.class_names[kp.class].clone(),
                    score: kp.score,
                    frame: frame_id,
                });
                keypoints.push(*kp);
            }
            Err(_) => dropped += 1,
        }
    }
    let gts = scene.ground_truths(frame_id, &cfg.class_names);
    let frame_match = match_frame(
        &detections,
        &gts,
        cfg.criterion,
        cfg.iou_threshold,
        cfg.difficulty,
    );
    Ok(PipelineOutput {
        detections,
        keypoints,
        dropped,
        frame_match,
    })
}

/// Ground-truth keypoint samples used to fit the regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    embeddings: Matrix,
    targets: Vec<f64>,
    scores: Vec<f64>,
    boxes: Vec<Box3D>,
    keypoints: Vec<GridIndex>,
    classes: Vec<usize>,
    calibs: Vec<CameraCalib>,
}

impl TrainingSet {
    pub fn from_frames(items: &[(&Scene, &OracleFrame)]) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut set = TrainingSet {
            embeddings: Matrix::zeros(0, 0),
            targets: Vec::new(),
            scores: Vec::new(),
            boxes: Vec::new(),
            keypoints: Vec::new(),
            classes: Vec::new(),
            calibs: Vec::new(),
        };
        let mut width = 0;
        for (scene, frame) in items {
            let kps = gt_keypoints(&frame.targets);
            let emb = gather_fuse(&frame.pyramid, &kps)?;
            width = emb.cols();
            let positions: Vec<(usize, GridIndex)> =
                frame.targets.iter().map(|t| (t.class, t.keypoint)).collect();
            set.scores.extend(sample_scores(&frame.pred_heatmap, &positions)?);
            for (i, t) in frame.targets.iter().enumerate() {
                rows.push(emb.row(i).to_vec());
                set.targets.extend_from_slice(&t.tau.0);
                set.boxes.push(t.box3d);
                set.keypoints.push(t.keypoint);
                set.classes.push(t.class);
                set.calibs.push(scene.calib);
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("training set has no keypoints".into()));
        }
        set.embeddings = Matrix::from_rows(&rows, width)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// One fused embedding row per keypoint.
    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// 3D IoU of each decoded prediction with its ground-truth box; 0 where
    /// the prediction does not decode.
    pub fn ious(&self, predictions: &Matrix, stats: &DecodeStats) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                RegressionTuple::from_slice(predictions.row(i))
                    .and_then(|tau| {
                        decode_box(&tau, self.keypoints[i], self.classes[i], &self.calibs[i], stats)
                    })
                    .map(|b| iou_3d(&b, &self.boxes[i]))
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionLossKind {
    L1,
    Attention(AttentionParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Initial step size.
    pub step: f64,
    /// Per-epoch multiplicative step decay.
    pub decay: f64,
    pub loss: RegressionLossKind,
    pub stats: DecodeStats,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            step: 1.0,
            decay: 0.95,
            loss: RegressionLossKind::L1,
            stats: DecodeStats::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub loss: f64,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    pub fn max_abs(&self) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Regression loss of `head` on `set` and its gradient with respect to the
/// head parameters. Attention weights are treated as constants.
pub fn head_gradient(
    set: &TrainingSet,
    head: &RegressionHead,
    loss: RegressionLossKind,
    stats: &DecodeStats,
) -> Result<HeadGradient> {
    let preds = regress(&set.embeddings, head)?;
    let r = head.outputs();
    let out = match loss {
        RegressionLossKind::L1 => {
            let batch = LossBatch::regression_only(r, preds.as_slice().to_vec(), set.targets.clone())?;
            l1_reg_loss(&batch)
        }
        RegressionLossKind::Attention(params) => {
            let ious = set.ious(&preds, stats);
            let batch = LossBatch::new(
                r,
                preds.as_slice().to_vec(),
                set.targets.clone(),
                set.scores.clone(),
                ious,
            )?;
            let weights = attention_weights(&batch, params);
            attention_loss(&batch, &weights)?
        }
    };
    let inputs = head.inputs();
    let mut gw = Matrix::zeros(inputs, r);
    let mut gb = vec![0.0; r];
    for i in 0..set.len() {
        let e = set.embeddings.row(i);
        let g = &out.grad[i * r..(i + 1) * r];
        for (k, gk) in g.iter().enumerate() {
            gb[k] += gk;
        }
        for (j, ej) in e.iter().enumerate() {
            let row = gw.row_mut(j);
            for (k, gk) in g.iter().enumerate() {
                row[k] += ej * gk;
            }
        }
    }
    Ok(HeadGradient {
        loss: out.value,
        weights: gw,
        bias: gb,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: RegressionHead,
    /// Loss at the start of every epoch.
    pub loss_trace: Vec<f64>,
}

/// Subgradient descent on the linear head with a geometrically decaying
/// step; features stay fixed.
pub fn toy_train(set: &TrainingSet, init: RegressionHead, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if !(cfg.step > 0.0) || !(cfg.decay > 0.0 && cfg.decay <= 1.0) {
        return Err(Error::InvalidArgument(
            "step must be > 0 and decay in (0, 1]".into(),
        ));
    }
    let mut head = init;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = cfg.step;
    for _ in 0..cfg.epochs {
        let g = head_gradient(set, &head, cfg.loss, &cfg.stats)?;
        if !g.loss.is_finite() || g.loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged(g.loss));
        }
        trace.push(g.loss);
        for (w, dw) in head
            .weights_mut()
            .as_mut_slice()
            .iter_mut()
            .zip(g.weights.as_slice())
        {
            *w -= step * dw;
        }
        for (b, db) in head.bias_mut().iter_mut().zip(&g.bias) {
            *b -= step * db;
        }
        step *= cfg.decay;
    }
    Ok(TrainOutcome {
        head,
        loss_trace: trace,
    })
}
