//! KITTI-protocol evaluation: difficulty strata, greedy matching and
//! interpolated average precision.
//!
//! Every distinct detection score is used as a threshold, so the PR curve is
//! exact rather than subsampled at 41 points as in the official devkit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, iou_bev, Box3D};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    pub class: String,
    pub score: f64,
    pub frame: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub box3d: Box3D,
    pub class: String,
    /// Height of the 2D image box in pixels.
    pub bbox_height: f64,
    pub occlusion: i32,
    pub truncation: f64,
    pub frame: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    /// Strata are cumulative: an easy object also counts for moderate and hard.
    pub fn counts_for(self, stratum: Difficulty) -> bool {
        self != Difficulty::Ignored && stratum != Difficulty::Ignored && self <= stratum
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        })
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::InvalidArgument(format!("unknown difficulty {other:?}"))),
        }
    }
}

/// `(min height px, max occlusion, max truncation)` per stratum.
const DIFFICULTY_LIMITS: [(Difficulty, f64, i32, f64); 3] = [
    (Difficulty::Easy, 40.0, 0, 0.15),
    (Difficulty::Moderate, 25.0, 1, 0.30),
    (Difficulty::Hard, 25.0, 2, 0.50),
];

/// Easiest stratum the object qualifies for.
pub fn difficulty_of(gt: &GroundTruth) -> Difficulty {
    for (level, min_h, max_occ, max_trunc) in DIFFICULTY_LIMITS {
        if gt.bbox_height >= min_h && (0..=max_occ).contains(&gt.occlusion) && gt.truncation <= max_trunc {
            return level;
        }
    }
    Difficulty::Ignored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouCriterion {
    #[serde(rename = "3d")]
    ThreeD,
    Bev,
}

impl IouCriterion {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouCriterion::ThreeD => iou_3d(a, b),
            IouCriterion::Bev => iou_bev(a, b),
        }
    }
}

impl fmt::Display for IouCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IouCriterion::ThreeD => "3d",
            IouCriterion::Bev => "bev",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ApMode {
    R11,
    R40,
}

impl ApMode {
    pub fn recall_points(self) -> Vec<f64> {
        match self {
            ApMode::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ApMode::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }
}

impl fmt::Display for ApMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApMode::R11 => "R11",
            ApMode::R40 => "R40",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetOutcome {
    TruePositive,
    FalsePositive,
    /// Matched an object outside the evaluated stratum; not counted.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtOutcome {
    Matched,
    Missed,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// Outcome per input detection, in input order.
    pub detections: Vec<DetOutcome>,
    /// Outcome per input ground truth, in input order.
    pub ground_truths: Vec<GtOutcome>,
    /// Scores of the detections, in input order.
    pub scores: Vec<f64>,
}

impl FrameMatch {
    pub fn num_positives(&self) -> usize {
        self.ground_truths
            .iter()
            .filter(|g| **g != GtOutcome::Ignored)
            .count()
    }
}

/// Greedy score-ordered matching within one frame and class.
///
/// Detections are visited by descending score (lower input index first on
/// ties). Each takes the unmatched stratum object with the highest IoU at or
/// above `threshold`; failing that, an unmatched out-of-stratum object
/// absorbs it without penalty; otherwise it is a false positive.
pub fn match_frame(
    dets: &[Detection],
    gts: &[GroundTruth],
    criterion: IouCriterion,
    threshold: f64,
    stratum: Difficulty,
) -> FrameMatch {
    let counted: Vec<bool> = gts.iter().map(|g| difficulty_of(g).counts_for(stratum)).collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    let mut taken = vec![false; gts.len()];
    let mut det_out = vec![DetOutcome::FalsePositive; dets.len()];
    for &d in &order {
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = criterion.iou(&dets[d].box3d, &gt.box3d);
            if iou < threshold {
                continue;
            }
            let slot = if counted[g] { 0 } else { 1 };
            if best[slot].is_none_or(|(_, b)| iou > b) {
                best[slot] = Some((g, iou));
            }
        }
        if let Some((g, _)) = best[0] {
            taken[g] = true;
            det_out[d] = DetOutcome::TruePositive;
        } else if let Some((g, _)) = best[1] {
            taken[g] = true;
            det_out[d] = DetOutcome::Ignored;
        }
    }
    let gt_out = (0..gts.len())
        .map(|g| match (counted[g], taken[g]) {
            (false, _) => GtOutcome::Ignored,
            (true, true) => GtOutcome::Matched,
            (true, false) => GtOutcome::Missed,
        })
        .collect();
    FrameMatch {
        detections: det_out,
        ground_truths: gt_out,
        scores: dets.iter().map(|d| d.score).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Exact PR curve: one point per distinct detection score, recall
/// non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub num_positives: usize,
    pub points: Vec<PrPoint>,
}

/// Pools counted detections of all frames into a PR curve.
pub fn pr_curve(frames: &[FrameMatch]) -> PrCurve {
    let num_positives: usize = frames.iter().map(FrameMatch::num_positives).sum();
    let mut scored: Vec<(f64, bool)> = frames
        .iter()
        .flat_map(|f| {
            f.detections
                .iter()
                .zip(&f.scores)
                .filter(|(o, _)| **o != DetOutcome::Ignored)
                .map(|(o, s)| (*s, *o == DetOutcome::TruePositive))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = if num_positives == 0 {
            0.0
        } else {
            tp as f64 / num_positives as f64
        };
        points.push(PrPoint {
            threshold,
            recall,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    PrCurve {
        num_positives,
        points,
    }
}

/// Interpolated AP in percent.
pub fn average_precision(curve: &PrCurve, mode: ApMode) -> Result<f64> {
    if curve.num_positives == 0 {
        return Err(Error::EmptyStratum);
    }
    // suffix maximum of precision over recall >= r
    let mut interp = vec![0.0; curve.points.len()];
    let mut running: f64 = 0.0;
    for (i, p) in curve.points.iter().enumerate().rev() {
        running = running.max(p.precision);
        interp[i] = running;
    }
    let recall_points = mode.recall_points();
    let mut sum = 0.0;
    for r in &recall_points {
        let first = curve.points.partition_point(|p| p.recall < *r);
        if first < interp.len() {
            sum += interp[first];
        }
    }
    Ok(100.0 * sum / recall_points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class: String,
    pub difficulty: Difficulty,
    pub criterion: IouCriterion,
    pub iou_threshold: f64,
    pub mode: ApMode,
    pub ap: f64,
    pub pr_curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub class: String,
    pub difficulty: Difficulty,
    pub criterion: IouCriterion,
    pub iou_threshold: f64,
    pub mode: ApMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            class: "Car".into(),
            difficulty: Difficulty::Moderate,
            criterion: IouCriterion::ThreeD,
            iou_threshold: 0.7,
            mode: ApMode::R11,
        }
    }
}

/// Matches every frame (ordered by frame id) for the configured class and
/// computes the report.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut frames: BTreeMap<u32, (Vec<Detection>, Vec<GroundTruth>)> = BTreeMap::new();
    for d in dets.iter().filter(|d| d.class == cfg.class) {
        frames.entry(d.frame).or_default().0.push(d.clone());
    }
    for g in gts.iter().filter(|g| g.class == cfg.class) {
        frames.entry(g.frame).or_default().1.push(g.clone());
    }
    let matches: Vec<FrameMatch> = frames
        .values()
        .map(|(d, g)| match_frame(d, g, cfg.criterion, cfg.iou_threshold, cfg.difficulty))
        .collect();
    let curve = pr_curve(&matches);
    let ap = average_precision(&curve, cfg.mode)?;
    Ok(EvalReport {
        class: cfg.class.clone(),
        difficulty: cfg.difficulty,
        criterion: cfg.criterion,
        iou_threshold: cfg.iou_threshold,
        mode: cfg.mode,
        ap,
        pr_curve: curve,
    })
}

/// Writes `threshold,recall,precision` rows.
pub fn write_pr_csv(curve: &PrCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in &curve.points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
