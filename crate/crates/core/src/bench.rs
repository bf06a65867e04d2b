//! Dense versus sparse regression cost: closed-form FLOP counts and a
//! single-threaded wall-clock comparison.
//!
//! One multiply plus one add counts as two operations. The dense path runs
//! a 1×1 convolution with `D` inputs over the whole 1/4-resolution map; the
//! sparse path gathers `K` fused `3D` embeddings and applies the linear head.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::GridIndex;
use crate::heatmap::{Keypoint, KeypointSet};
use crate::litefpn::{
    dense_regress, dense_regress_then_gather, gather_fuse, regress, FeatureMap, FeaturePyramid, Matrix,
    RegressionHead,
};

/// Tolerance of the sparse/dense correctness gate.
pub const GATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub outputs: usize,
    pub k: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            height: 384,
            width: 1280,
            channels: 64,
            outputs: 8,
            k: 100,
            repetitions: 30,
            warmup: 3,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(Error::InvalidArgument("input must be at least 16x16".into()));
        }
        if self.channels == 0 || self.outputs == 0 {
            return Err(Error::InvalidArgument(
                "channels and outputs must be positive".into(),
            ));
        }
        if self.repetitions < 10 {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 repetitions, got {}",
                self.repetitions
            )));
        }
        Ok(())
    }

    fn grid(&self) -> (usize, usize) {
        (self.height / 4, self.width / 4)
    }
}

pub fn flops_dense(cfg: &BenchConfig) -> u64 {
    let (h, w) = cfg.grid();
    2 * (h * w * cfg.channels * cfg.outputs) as u64
}

pub fn flops_sparse(cfg: &BenchConfig) -> u64 {
    2 * (cfg.k * 3 * cfg.channels * cfg.outputs) as u64
}

/// Feature values read by the gather step.
pub fn gather_touches(cfg: &BenchConfig) -> u64 {
    (cfg.k * 3 * cfg.channels) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl TimingStats {
    /// Nearest-rank percentiles of `samples` (seconds).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no timing samples".into()));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| s[((q * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        Ok(Self {
            median: pick(0.5),
            p10: pick(0.1),
            p90: pick(0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub flops_dense: u64,
    pub flops_sparse: u64,
    /// `flops_dense / flops_sparse`; infinite when `K = 0`.
    pub flop_ratio: f64,
    pub gather_touches: u64,
    pub gate_max_diff: f64,
    pub dense: TimingStats,
    pub sparse: TimingStats,
    /// Ratio of median wall times, dense over sparse.
    pub speedup: f64,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "config: H={} W={} D={} R={} K={} reps={}",
            c.height, c.width, c.channels, c.outputs, c.k, c.repetitions
        )?;
        writeln!(
            f,
            "flops: dense={} sparse={} ratio={}",
            self.flops_dense, self.flops_sparse, self.flop_ratio
        )?;
        writeln!(f, "gate: max |diff| = {:e}", self.gate_max_diff)?;
        writeln!(
            f,
            "dense:  median {:.3e} s (p10 {:.3e}, p90 {:.3e})",
            self.dense.median, self.dense.p10, self.dense.p90
        )?;
        writeln!(
            f,
            "sparse: median {:.3e} s (p10 {:.3e}, p90 {:.3e})",
            self.sparse.median, self.sparse.p10, self.sparse.p90
        )?;
        write!(f, "speedup: {:.1}x", self.speedup)
    }
}

struct Workload {
    pyramid: FeaturePyramid,
    keypoints: KeypointSet,
    dense_head: RegressionHead,
    fused_head: RegressionHead,
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap {
    let data = (0..h * w * d).map(|_| StandardNormal.sample(rng)).collect();
    FeatureMap::from_vec(h, w, d, data).expect("sized by construction")
}

fn workload(cfg: &BenchConfig) -> Result<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (h, w) = cfg.grid();
    let d = cfg.channels;
    let quarter = random_map(&mut rng, h, w, d);
    let eighth = random_map(&mut rng, h.div_ceil(2), w.div_ceil(2), d);
    let sixteenth = random_map(&mut rng, h.div_ceil(4), w.div_ceil(4), d);
    let pyramid = FeaturePyramid::new(quarter, eighth, sixteenth)?;
    let keypoints = KeypointSet::from_ordered(
        (0..cfg.k)
            .map(|_| Keypoint {
                class: 0,
                index: GridIndex::new(rng.random_range(0..w), rng.random_range(0..h)),
                score: 1.0,
            })
            .collect(),
    );
    let wdata: Vec<f64> = (0..d * cfg.outputs)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let bias: Vec<f64> = (0..cfg.outputs)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let dense_head = RegressionHead::new(Matrix::from_vec(d, cfg.outputs, wdata.clone())?, bias.clone())?;
    // coarse rows are random too; the gate uses a copy with them zeroed
    let mut fused = wdata;
    fused.extend((0..2 * d * cfg.outputs).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    let fused_head = RegressionHead::new(Matrix::from_vec(3 * d, cfg.outputs, fused)?, bias)?;
    Ok(Workload {
        pyramid,
        keypoints,
        dense_head,
        fused_head,
    })
}

/// Largest difference between the sparse path (with the coarse head rows
/// zeroed) and dense regression followed by a gather.
fn gate(work: &Workload) -> Result<f64> {
    let mut head = work.fused_head.clone();
    let d = work.dense_head.inputs();
    for r in d..3 * d {
        head.weights_mut().row_mut(r).fill(0.0);
    }
    let sparse = regress(&gather_fuse(&work.pyramid, &work.keypoints)?, &head)?;
    let dense = dense_regress_then_gather(
        work.pyramid.level(crate::litefpn::Level::Quarter),
        &work.dense_head,
        &work.keypoints.indices(),
    )?;
    Ok(sparse.max_abs_diff(&dense))
}

fn time<F: FnMut()>(mut f: F, warmup: usize, reps: usize) -> Result<TimingStats> {
    for _ in 0..warmup {
        f();
    }
    let samples: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64().max(1e-9)
        })
        .collect();
    TimingStats::from_samples(&samples)
}

/// Runs the correctness gate, then times both paths.
pub fn time_compare(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let work = workload(cfg)?;
    let diff = gate(&work)?;
    if !(diff <= GATE_TOLERANCE) {
        return Err(Error::CorrectnessGate(diff));
    }
    let quarter = work.pyramid.level(crate::litefpn::Level::Quarter);
    let dense = time(
        || {
            black_box(dense_regress(black_box(quarter), &work.dense_head).expect("validated"));
        },
        cfg.warmup,
        cfg.repetitions,
    )?;
    let sparse = time(
        || {
            let emb = gather_fuse(black_box(&work.pyramid), &work.keypoints).expect("validated");
            black_box(regress(&emb, &work.fused_head).expect("validated"));
        },
        cfg.warmup,
        cfg.repetitions,
    )?;
    let (fd, fs) = (flops_dense(cfg), flops_sparse(cfg));
    Ok(BenchReport {
        config: cfg.clone(),
        flops_dense: fd,
        flops_sparse: fs,
        flop_ratio: fd as f64 / fs as f64,
        gather_touches: gather_touches(cfg),
        gate_max_diff: diff,
        dense,
        sparse,
        speedup: dense.median / sparse.median,
    })
}

#[derive(Serialize)]
struct CsvRow {
    height: usize,
    width: usize,
    channels: usize,
    outputs: usize,
    k: usize,
    repetitions: usize,
    flops_dense: u64,
    flops_sparse: u64,
    flop_ratio: f64,
    gather_touches: u64,
    gate_max_diff: f64,
    dense_median_s: f64,
    dense_p10_s: f64,
    dense_p90_s: f64,
    sparse_median_s: f64,
    sparse_p10_s: f64,
    sparse_p90_s: f64,
    speedup: f64,
}

pub fn write_csv<W: std::io::Write>(reports: &[BenchReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        let c = &r.config;
        w.serialize(CsvRow {
            height: c.height,
            width: c.width,
            channels: c.channels,
            outputs: c.outputs,
            k: c.k,
            repetitions: c.repetitions,
            flops_dense: r.flops_dense,
            flops_sparse: r.flops_sparse,
            flop_ratio: r.flop_ratio,
            gather_touches: r.gather_touches,
            gate_max_diff: r.gate_max_diff,
            dense_median_s: r.dense.median,
            dense_p10_s: r.dense.p10,
            dense_p90_s: r.dense.p90,
            sparse_median_s: r.sparse.median,
            sparse_p10_s: r.sparse.p10,
            sparse_p90_s: r.sparse.p90,
            speedup: r.speedup,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
