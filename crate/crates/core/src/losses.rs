//! Training objectives: penalty-reduced focal loss on the heatmap, L1
//! regression loss, the attention-weighted regression loss and the total
//! loss. Every loss returns its value together with the analytic gradient
//! with respect to the predictions.
//!
//! All reductions are plain sequential sums so results are reproducible.

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const FOCAL_CLAMP: f64 = 1e-7;

/// Attention coefficient used with the projected-3D-center (SMOKE-style) head.
pub const BETA_ATTN_SMOKE: f64 = 0.5;
/// Attention coefficient used with the 2D-center (CenterNet-style) head.
pub const BETA_ATTN_CENTERNET: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionParams {
    pub beta: f64,
}

impl Default for AttentionParams {
    fn default() -> Self {
        Self {
            beta: BETA_ATTN_SMOKE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Loss value plus gradient with respect to the flattened predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Per-keypoint regression data for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    tuple_len: usize,
    predictions: Vec<f64>,
    targets: Vec<f64>,
    scores: Vec<f64>,
    ious: Vec<f64>,
}

impl LossBatch {
    /// `predictions` and `targets` hold `N` rows of `tuple_len` values each;
    /// `scores` and `ious` hold `N` values in `[0, 1]`.
    pub fn new(
        tuple_len: usize,
        predictions: Vec<f64>,
        targets: Vec<f64>,
        scores: Vec<f64>,
        ious: Vec<f64>,
    ) -> Result<Self> {
        let n = scores.len();
        if n == 0 {
            return Err(Error::InvalidArgument("loss batch needs N >= 1".into()));
        }
        if tuple_len == 0
            || predictions.len() != n * tuple_len
            || targets.len() != n * tuple_len
            || ious.len() != n
        {
            return Err(Error::ShapeMismatch(format!(
                "batch of {n} keypoints x {tuple_len}: got {} predictions, {} targets, {} ious",
                predictions.len(),
                targets.len(),
                ious.len()
            )));
        }
        if scores.iter().chain(&ious).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(
                "scores and IoUs must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            tuple_len,
            predictions,
            targets,
            scores,
            ious,
        })
    }

    /// Regression-only batch with unit scores and IoUs.
    pub fn regression_only(tuple_len: usize, predictions: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        let n = predictions.len().checked_div(tuple_len).unwrap_or(0);
        Self::new(tuple_len, predictions, targets, vec![1.0; n], vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn tuple_len(&self) -> usize {
        self.tuple_len
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ious(&self) -> &[f64] {
        &self.ious
    }

    /// Same batch with different predictions (used by gradient checks).
    pub fn with_predictions(&self, predictions: Vec<f64>) -> Result<Self> {
        if predictions.len() != self.predictions.len() {
            return Err(Error::ShapeMismatch("prediction length changed".into()));
        }
        Ok(Self {
            predictions,
            ..self.clone()
        })
    }

    /// `l_reg_i = |tau'_i - tau_i|_1` per keypoint.
    pub fn per_keypoint_l1(&self) -> Vec<f64> {
        self.predictions
            .chunks_exact(self.tuple_len)
            .zip(self.targets.chunks_exact(self.tuple_len))
            .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum())
            .collect()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Penalty-reduced pixel-wise focal loss, normalized by the keypoint count
/// `n`. Pixels with ground truth exactly 1 are positives.
pub fn focal_loss(pred: &Heatmap, gt: &Heatmap, params: FocalParams, n: usize) -> Result<LossGrad> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("focal loss needs N >= 1".into()));
    }
    focal_loss_raw(pred.values(), gt.values(), params, n)
}

/// Slice form of [`focal_loss`]; `pred` may lie outside `[0, 1]` and is
/// clamped, with zero gradient where the clamp is active.
pub fn focal_loss_raw(pred: &[f64], gt: &[f64], params: FocalParams, n: usize) -> Result<LossGrad> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            gt.len()
        )));
    }
    let FocalParams { alpha, beta } = params;
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&raw, &y) in pred.iter().zip(gt) {
        let p = raw.clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
        let active = p == raw;
        let (term, dterm) = if y == 1.0 {
            let q = 1.0 - p;
            let t = q.powf(alpha) * p.ln();
            let d = -alpha * q.powf(alpha - 1.0) * p.ln() + q.powf(alpha) / p;
            (t, d)
        } else {
            let neg = (1.0 - y).powf(beta);
            let l = (1.0 - p).ln();
            let t = neg * p.powf(alpha) * l;
            let d = neg * (alpha * p.powf(alpha - 1.0) * l - p.powf(alpha) / (1.0 - p));
            (t, d)
        };
        total += term;
        grad.push(if active { -scale * dterm } else { 0.0 });
    }
    Ok(LossGrad {
        value: -scale * total,
        grad,
    })
}

/// `(1/N) * sum_i |tau'_i - tau_i|_1` with its sign-pattern gradient.
pub fn l1_reg_loss(batch: &LossBatch) -> LossGrad {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for l in batch.per_keypoint_l1() {
        total += l;
    }
    let grad = batch
        .predictions
        .iter()
        .zip(&batch.targets)
        .map(|(p, t)| sign(p - t) / n)
        .collect();
    LossGrad {
        value: total / n,
        grad,
    }
}

/// Softmax of `P_i + beta * (1 - IoU_i)` scaled so the weights sum to `N`.
pub fn attention_weights(batch: &LossBatch, params: AttentionParams) -> Vec<f64> {
    attention_weights_from(&batch.scores, &batch.ious, params)
}

pub fn attention_weights_from(scores: &[f64], ious: &[f64], params: AttentionParams) -> Vec<f64> {
    let logits: Vec<f64> = scores
        .iter()
        .zip(ious)
        .map(|(p, iou)| p + params.beta * (1.0 - iou))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let mut sum = 0.0;
    for e in &exps {
        sum += e;
    }
    let n = exps.len() as f64;
    exps.iter().map(|e| e * n / sum).collect()
}

/// `(1/N) * sum_i w_i * l_reg_i`; weights are constants.
pub fn attention_loss(batch: &LossBatch, weights: &[f64]) -> Result<LossGrad> {
    if weights.len() != batch.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} keypoints",
            weights.len(),
            batch.len()
        )));
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    for (w, l) in weights.iter().zip(batch.per_keypoint_l1()) {
        total += w * l;
    }
    let r = batch.tuple_len;
    let grad = batch
        .predictions
        .iter()
        .zip(&batch.targets)
        .enumerate()
        .map(|(k, (p, t))| weights[k / r] * sign(p - t) / n)
        .collect();
    Ok(LossGrad {
        value: total / n,
        grad,
    })
}

/// `L = L_k + lambda * L_reg`.
pub fn total_loss(keypoint_loss: f64, regression_loss: f64, weights: LossWeights) -> f64 {
    keypoint_loss + weights.lambda * regression_loss
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max_k |g_fd - g| / max(1, |g|)`.
    pub max_rel_error: f64,
    /// Coordinate where the maximum occurred.
    pub worst_index: usize,
}

/// Compares the analytic gradient of `loss` at `point` against central
/// differences with step `h`.
pub fn gradcheck<F>(loss: F, point: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<LossGrad>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let analytic = loss(point)?;
    if analytic.grad.len() != point.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient has {} entries for {} parameters",
            analytic.grad.len(),
            point.len()
        )));
    }
    let mut probe = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
    };
    for k in 0..point.len() {
        probe[k] = point[k] + h;
        let plus = loss(&probe)?.value;
        probe[k] = point[k] - h;
        let minus = loss(&probe)?.value;
        probe[k] = point[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFiniteLoss(k));
        }
        let fd = (plus - minus) / (2.0 * h);
        let g = analytic.grad[k];
        let rel = (fd - g).abs() / g.abs().max(1.0);
        if rel > report.max_rel_error || rel.is_nan() {
            report = GradCheckReport {
                max_rel_error: rel,
                worst_index: k,
            };
        }
    }
    Ok(report)
}
