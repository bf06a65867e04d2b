//! `kp3d`: evaluation, benchmarking, synthetic demos and gradient checks.
//!
//! Exit codes: 0 ok, 1 other failure, 2 missing input, 3 parse error,
//! 4 bench gate or speed assertion, 5 gradient check, 64 usage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use keypoint3d::bench::{self, BenchConfig};
use keypoint3d::error::Error;
use keypoint3d::eval::{self, ApMode, Detection, Difficulty, EvalConfig, GroundTruth, IouCriterion};
use keypoint3d::geometry::{normalize_angle, DecodeStats};
use keypoint3d::kitti_io::{self, KittiLabel};
use keypoint3d::litefpn::RegressionHead;
use keypoint3d::losses::{
    attention_loss, attention_weights_from, focal_loss_raw, gradcheck, l1_reg_loss, AttentionParams,
    FocalParams, LossBatch, LossGrad,
};
use keypoint3d::plot::{render_bev_svg, BevView};
use keypoint3d::synth::{
    generate_scene, oracle_pyramid, run_pipeline, toy_train, OracleFrame, OracleModel, PipelineConfig,
    RegressionLossKind, Scene, SceneSpec, TrainConfig, TrainingSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE_ROOT_VAR: &str = "KP3D_FIXTURE_ROOT";

#[derive(Parser)]
#[command(
    name = "kp3d",
    version,
    about = "Keypoint-based monocular 3D detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate KITTI-format detections against ground truth.
    Eval(EvalArgs),
    /// Time dense versus sparse regression.
    Bench(BenchArgs),
    /// Run the synthetic pipeline end to end and emit labels, a report and plots.
    Demo(DemoArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    #[value(name = "3d")]
    ThreeD,
    Bev,
}

impl From<CriterionArg> for IouCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::ThreeD => IouCriterion::ThreeD,
            CriterionArg::Bev => IouCriterion::Bev,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    R11,
    R40,
}

impl From<ModeArg> for ApMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::R11 => ApMode::R11,
            ModeArg::R40 => ApMode::R40,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Easy,
    Moderate,
    Hard,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Self {
        match d {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Moderate => Difficulty::Moderate,
            DifficultyArg::Hard => Difficulty::Hard,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LossArg {
    L1,
    Attention,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum HeadArg {
    /// Fit the head with subgradient descent from zero.
    Trained,
    /// Use the exact readout head of the synthetic model.
    Planted,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Directory of ground-truth label files.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of detection label files, one per ground-truth frame.
    #[arg(long)]
    det: PathBuf,
    #[arg(long, value_enum, default_value = "3d")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = 0.7)]
    iou: f64,
    #[arg(long, value_enum, default_value = "r11")]
    mode: ModeArg,
    #[arg(long, default_value = "Car")]
    class: String,
    #[arg(long, value_enum, default_value = "moderate")]
    difficulty: DifficultyArg,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional precision/recall CSV.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 384)]
    height: usize,
    #[arg(long, default_value_t = 1280)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 8)]
    outputs: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Required dense/sparse median ratio.
    #[arg(long, default_value_t = 10.0)]
    min_speedup: f64,
    /// Report timings without enforcing the speedup threshold.
    #[arg(long)]
    no_assert: bool,
}

#[derive(clap::Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of evaluation scenes.
    #[arg(long, default_value_t = 8)]
    n_scenes: usize,
    /// Number of training scenes for the head.
    #[arg(long, default_value_t = 50)]
    train_scenes: usize,
    #[arg(long, default_value_t = 8)]
    objects: usize,
    /// Standard deviation of the feature noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "l1")]
    loss: LossArg,
    #[arg(long, default_value_t = keypoint3d::losses::BETA_ATTN_SMOKE)]
    beta_attn: f64,
    #[arg(long, value_enum, default_value = "trained")]
    head: HeadArg,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip the sign of the attention gradient to exercise failure reporting.
    #[arg(long, hide = true)]
    inject_wrong_sign: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::MissingFrame { .. } => 2,
            Error::FieldCount { .. }
            | Error::InvalidField { .. }
            | Error::CalibFormat(_)
            | Error::SplitFormat(_)
            | Error::InvalidBox(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::CorrectnessGate(_) => 4,
            Error::InvalidArgument(_) => 64,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Relative input paths are taken from the fixture root when it is set.
fn input_path(p: &Path) -> PathBuf {
    match std::env::var_os(FIXTURE_ROOT_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Produces `path` through a sibling temp file and a rename.
fn write_atomic_with(path: &Path, write: impl FnOnce(&Path) -> Result<(), Failure>) -> CmdResult {
    let name = path
        .file_name()
        .ok_or_else(|| Failure::new(64, format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    if let Err(f) = write(&tmp) {
        let _ = fs::remove_file(&tmp);
        return Err(f);
    }
    fs::rename(&tmp, path).map_err(|e| Failure::new(1, format!("rename {}: {e}", path.display())))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult {
    write_atomic_with(path, |tmp| {
        fs::write(tmp, bytes).map_err(|e| Failure::new(1, format!("write {}: {e}", tmp.display())))
    })
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::new(1, format!("create {}: {e}", dir.display())))
}

fn require_dir(p: &Path) -> CmdResult {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Failure::new(2, format!("no such directory: {}", p.display())))
    }
}

fn to_json(value: &impl serde::Serialize) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::new(1, e.to_string()))
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let gt_dir = input_path(&a.gt);
    let det_dir = input_path(&a.det);
    require_dir(&gt_dir)?;
    require_dir(&det_dir)?;

    let gt_frames = kitti_io::load_label_dir(&gt_dir)?;
    let det_ids = kitti_io::list_frames(&det_dir)?;
    for (id, _) in &gt_frames {
        if det_ids.binary_search(id).is_err() {
            return Err(Error::MissingFrame {
                frame: *id,
                dir: det_dir,
            }
            .into());
        }
    }
    if let Some(id) = det_ids
        .iter()
        .find(|id| gt_frames.binary_search_by_key(id, |(g, _)| g).is_err())
    {
        return Err(Error::MissingFrame {
            frame: *id,
            dir: gt_dir,
        }
        .into());
    }

    let gts: Vec<GroundTruth> = gt_frames
        .iter()
        .flat_map(|(id, labels)| labels.iter().filter_map(move |l| l.to_ground_truth(*id)))
        .collect();
    let mut dets: Vec<Detection> = Vec::new();
    for (id, labels) in kitti_io::load_label_dir(&det_dir)? {
        for l in labels.iter().filter(|l| !l.is_dont_care()) {
            dets.push(l.to_detection(id)?);
        }
    }

    let cfg = EvalConfig {
        class: a.class,
        difficulty: a.difficulty.into(),
        criterion: a.criterion.into(),
        iou_threshold: a.iou,
        mode: a.mode.into(),
    };
    let report = eval::evaluate(&dets, &gts, &cfg)?;
    let json = to_json(&report)?;
    match &a.out {
        Some(path) => {
            write_atomic(path, json.as_bytes())?;
            println!(
                "{} {:?} AP = {:.4} over {} frames",
                report.class,
                report.difficulty,
                report.ap,
                gt_frames.len()
            );
        }
        None => print!("{json}"),
    }
    if let Some(path) = &a.pr_csv {
        write_atomic_with(path, |tmp| Ok(eval::write_pr_csv(&report.pr_curve, tmp)?))?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        height: a.height,
        width: a.width,
        channels: a.channels,
        outputs: a.outputs,
        k: a.k,
        repetitions: a.reps,
        warmup: a.warmup,
        seed: a.seed,
    };
    let report = bench::time_compare(&cfg)?;
    let mut csv = Vec::new();
    bench::write_csv(std::slice::from_ref(&report), &mut csv)?;
    match &a.out {
        Some(path) => {
            write_atomic(path, &csv)?;
            println!("{report}");
        }
        None => {
            eprintln!("{report}");
            print!("{}", String::from_utf8_lossy(&csv));
        }
    }
    if !a.no_assert && !(report.speedup >= a.min_speedup) {
        return Err(Failure::new(
            4,
            format!(
                "speedup {:.2}x is below the required {:.2}x",
                report.speedup, a.min_speedup
            ),
        ));
    }
    Ok(())
}

fn build_frames(
    seeds: std::ops::Range<u64>,
    objects: usize,
    model: &OracleModel,
) -> Result<Vec<(Scene, OracleFrame)>, Failure> {
    let seeds: Vec<u64> = seeds.collect();
    // scenes are independent, so build them on scoped threads and keep seed order
    let results: Vec<keypoint3d::error::Result<(Scene, OracleFrame)>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let scene = generate_scene(&SceneSpec::with_seed(seed, objects), &model.stats)?;
                    let frame = oracle_pyramid(&scene, model)?;
                    Ok((scene, frame))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scene worker panicked"))
            .collect()
    });
    results.into_iter().map(|r| r.map_err(Failure::from)).collect()
}

fn detection_labels(dets: &[Detection], scene: &Scene) -> Vec<KittiLabel> {
    dets.iter()
        .map(|d| {
            let [x, _, z] = d.box3d.center();
            let alpha = normalize_angle(d.box3d.yaw() - x.atan2(z));
            let bbox = kitti_io::image_bbox(&d.box3d, &scene.calib).unwrap_or([0.0; 4]);
            KittiLabel::from_box(&d.class, &d.box3d, bbox, alpha, Some(d.score))
        })
        .collect()
}

fn cmd_demo(a: DemoArgs) -> CmdResult {
    if !(a.noise >= 0.0) {
        return Err(Failure::new(64, "--noise must be non-negative"));
    }
    let model = OracleModel {
        feature_noise: a.noise,
        ..OracleModel::default()
    };
    let stats = DecodeStats::default();
    let loss = match a.loss {
        LossArg::L1 => RegressionLossKind::L1,
        LossArg::Attention => RegressionLossKind::Attention(AttentionParams { beta: a.beta_attn }),
    };

    // evaluation scenes use seeds seed.., training scenes follow them
    let eval_end = a.seed + a.n_scenes as u64;
    let frames = build_frames(a.seed..eval_end, a.objects, &model)?;

    let (head, loss_trace) = match a.head {
        HeadArg::Planted => (model.planted_head(), Vec::new()),
        HeadArg::Trained => {
            let train = build_frames(eval_end..eval_end + a.train_scenes as u64, a.objects, &model)?;
            let refs: Vec<(&Scene, &OracleFrame)> = train.iter().map(|(s, f)| (s, f)).collect();
            let set = TrainingSet::from_frames(&refs)?;
            let cfg = TrainConfig {
                epochs: a.epochs,
                loss,
                stats: stats.clone(),
                ..TrainConfig::default()
            };
            let init = RegressionHead::zeros(model.embedding_width(), model.planted_head().outputs());
            let outcome = toy_train(&set, init, &cfg)?;
            (outcome.head, outcome.loss_trace)
        }
    };

    let pipe = PipelineConfig {
        k: a.k,
        stats: stats.clone(),
        ..PipelineConfig::default()
    };
    let gt_dir = a.out.join("gt");
    let det_dir = a.out.join("det");
    let plot_dir = a.out.join("plots");
    for d in [&gt_dir, &det_dir, &plot_dir] {
        create_dir(d)?;
    }

    let mut all_dets = Vec::new();
    let mut all_gts = Vec::new();
    let mut dropped = 0;
    let mut warnings = Vec::new();
    for (i, (scene, frame)) in frames.iter().enumerate() {
        let id = i as u32;
        let out = run_pipeline(scene, frame, &head, &pipe, id)?;
        dropped += out.dropped;
        warnings.extend(frame.warnings.iter().map(|w| format!("frame {id:06}: {w}")));

        let gt_labels = scene.labels(&pipe.class_names);
        let det_labels = detection_labels(&out.detections, scene);
        let name = format!("{id:06}");
        write_atomic(
            &gt_dir.join(format!("{name}.txt")),
            kitti_io::serialize_label_file(&gt_labels).as_bytes(),
        )?;
        write_atomic(
            &det_dir.join(format!("{name}.txt")),
            kitti_io::serialize_label_file(&det_labels).as_bytes(),
        )?;

        let gt_boxes: Vec<_> = scene.objects.iter().map(|o| o.box3d).collect();
        let det_boxes: Vec<_> = out.detections.iter().map(|d| (d.box3d, d.score)).collect();
        let svg = render_bev_svg(&gt_boxes, &det_boxes, &BevView::default());
        write_atomic(&plot_dir.join(format!("{name}.svg")), svg.as_bytes())?;

        all_gts.extend(scene.ground_truths(id, &pipe.class_names));
        all_dets.extend(out.detections);
    }

    let eval_cfg = EvalConfig {
        criterion: pipe.criterion,
        iou_threshold: pipe.iou_threshold,
        difficulty: pipe.difficulty,
        ..EvalConfig::default()
    };
    let report = eval::evaluate(&all_dets, &all_gts, &eval_cfg)?;
    let summary = serde_json::json!({
        "seed": a.seed,
        "scenes": a.n_scenes,
        "objects_per_scene": a.objects,
        "noise": a.noise,
        "loss": match a.loss { LossArg::L1 => "l1", LossArg::Attention => "attention" },
        "beta_attn": a.beta_attn,
        "head": match a.head { HeadArg::Trained => "trained", HeadArg::Planted => "planted" },
        "epochs": loss_trace.len(),
        "final_train_loss": loss_trace.last(),
        "detections": all_dets.len(),
        "ground_truths": all_gts.len(),
        "dropped": dropped,
        "warnings": warnings,
        "eval": report,
    });
    write_atomic(&a.out.join("report.json"), to_json(&summary)?.as_bytes())?;
    println!(
        "demo: {} scenes, {} detections, {} ground truths, AP = {:.4}",
        a.n_scenes,
        all_dets.len(),
        all_gts.len(),
        report.ap
    );
    Ok(())
}

fn negate(mut g: LossGrad) -> LossGrad {
    g.grad.iter_mut().for_each(|v| *v = -*v);
    g
}

/// Targets and a probe point whose residuals stay clear of the L1 kink.
fn regression_point(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let targets: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let point = targets
        .iter()
        .map(|t| {
            let off = rng.random_range(0.01..1.0);
            if rng.random_bool(0.5) {
                t + off
            } else {
                t - off
            }
        })
        .collect();
    (targets, point)
}

fn cmd_gradcheck(a: GradcheckArgs) -> CmdResult {
    if !(a.step > 0.0) {
        return Err(Failure::new(64, "--step must be positive"));
    }
    println!(
        "gradcheck: trials={} step={:e} tolerance={:e} seed={}",
        a.trials, a.step, a.tolerance, a.seed
    );
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst = [0.0_f64; 3];
    let names = ["focal", "l1", "attention"];
    let check = |which: usize, trial: u64, rep: keypoint3d::losses::GradCheckReport, worst: &mut [f64; 3]| {
        worst[which] = worst[which].max(rep.max_rel_error);
        if rep.max_rel_error < a.tolerance {
            Ok(())
        } else {
            println!(
                "FAIL loss={} trial={} coordinate={} rel_err={:.3e}",
                names[which], trial, rep.worst_index, rep.max_rel_error
            );
            Err(Failure::new(
                5,
                format!(
                    "{} gradient mismatch at coordinate {} (trial {trial}, rel err {:.3e})",
                    names[which], rep.worst_index, rep.max_rel_error
                ),
            ))
        }
    };
    for trial in 0..a.trials {
        let len = 2 * 8 * 8;
        let gt: Vec<f64> = (0..len)
            .map(|i| {
                if i % 37 == 0 {
                    1.0
                } else {
                    rng.random_range(0.0..0.99)
                }
            })
            .collect();
        let n_pos = gt.iter().filter(|v| **v == 1.0).count();
        let point: Vec<f64> = (0..len).map(|_| rng.random_range(0.02..0.98)).collect();
        let rep = gradcheck(
            |p| focal_loss_raw(p, &gt, FocalParams::default(), n_pos),
            &point,
            a.step,
        )?;
        check(0, trial, rep, &mut worst)?;

        let n = rng.random_range(1..=16);
        let (targets, point) = regression_point(&mut rng, n);
        let l1 = |p: &[f64]| {
            Ok(l1_reg_loss(&LossBatch::regression_only(
                8,
                p.to_vec(),
                targets.clone(),
            )?))
        };
        check(1, trial, gradcheck(l1, &point, a.step)?, &mut worst)?;

        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ious: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w = attention_weights_from(&scores, &ious, AttentionParams::default());
        let attn = |p: &[f64]| {
            let b = LossBatch::new(8, p.to_vec(), targets.clone(), scores.clone(), ious.clone())?;
            let g = attention_loss(&b, &w)?;
            Ok(if a.inject_wrong_sign { negate(g) } else { g })
        };
        check(2, trial, gradcheck(attn, &point, a.step)?, &mut worst)?;
    }
    for (name, w) in names.iter().zip(worst) {
        println!("{name}: max rel err {w:.3e} ok");
    }
    println!("gradcheck: all {} trials passed", a.trials);
    Ok(())
}
