//! Command-line front end. Every command reads only the paths it is given and
//! writes only its declared outputs; summaries go to stdout, diagnostics to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use spatial3d_core::codec::{
    emit_center, emit_gap, emit_loc, fit_transform, parse_answer, parse_loc, AnswerItem,
};
use spatial3d_core::eval::{score_dataset, EvalReport, DEFAULT_THRESHOLDS};
use spatial3d_core::scene::{synthetic_corpus, synthetic_room, SceneRecord};
use spatial3d_core::scheme::{
    encode_scene_stub, grad_check_scheme, sample_scene_cloud, train_toy, SchemeConfig,
    SchemeGradReport, TrainConfig, TrainTrace,
};
use spatial3d_core::synth::{
    fixtures, generate_dataset, DatasetPlan, InstructionSample, Task, DEFAULT_VAL_FRACTION,
};

use crate::error::CliError;
use crate::formats::{self, DatasetFiles};
use crate::{checkpoint, report};

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "spatial3d",
    version,
    about = "Spatial referent toolkit: dataset synthesis, scoring and checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded corpus of synthetic rooms as scene JSON Lines.
    Scenes(ScenesArgs),
    /// Write the worked-example scene and its three samples.
    Fixtures(FixturesArgs),
    /// Synthesize a distance / movement / placement dataset from scenes.
    Synth(SynthArgs),
    /// Export the gold answers of a sample file as a predictions file.
    Answers(AnswersArgs),
    /// Score predictions against samples.
    Eval(EvalArgs),
    /// Check that every answer round-trips through the token codec.
    Codec(CodecArgs),
    /// Finite-difference check of every parameter block of the scheme.
    Gradcheck(GradcheckArgs),
    /// Fit the scheme to one room with the spatial losses.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Args)]
pub struct ScenesArgs {
    #[arg(long, default_value_t = 60)]
    pub count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub scenes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    /// Output directory for train.jsonl, val.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Fraction of the full-size per-task counts.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_delimiter = ',', default_values_t = Task::ALL)]
    pub tasks: Vec<Task>,
    #[arg(long, default_value_t = DEFAULT_VAL_FRACTION)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct AnswersArgs {
    /// Sample JSON Lines file or dataset directory.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Sample JSON Lines file or dataset directory.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// IoU threshold; repeat for several. Defaults to 0.25 and 0.5.
    #[arg(long = "iou")]
    pub iou: Vec<f64>,
    /// Text report path; the JSON report goes next to it with a `.json` extension.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    /// Sample JSON Lines file or dataset directory.
    #[arg(long)]
    pub samples: PathBuf,
    /// Scenes whose object boxes are also pushed through quantize / dequantize.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub referents: usize,
    #[arg(long, default_value_t = 32)]
    pub points: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Directory for trace.csv and checkpoint.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on a scene from this file instead of a synthetic room.
    #[arg(long, requires = "scene_id")]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub scene_id: Option<String>,
    /// Objects in the synthetic room.
    #[arg(long, default_value_t = 5)]
    pub objects: usize,
    #[arg(long, default_value_t = 0)]
    pub room_seed: u64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Scenes(a) => cmd_scenes(&a),
        Command::Fixtures(a) => cmd_fixtures(&a),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Answers(a) => cmd_answers(&a),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Codec(a) => cmd_codec(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a).map(|_| ()),
        Command::TrainToy(a) => cmd_train_toy(&a).map(|_| ()),
    }
}

fn stdout_line(s: &str) -> Result<(), CliError> {
    writeln!(std::io::stdout(), "{s}").map_err(CliError::internal)
}

fn require_dir_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::validation(format!(
            "output directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

pub fn cmd_scenes(a: &ScenesArgs) -> Result<(), CliError> {
    require_dir_parent(&a.out)?;
    let scenes = synthetic_corpus(a.count, a.seed)?;
    formats::write_output(&a.out, &formats::to_jsonl(&scenes)?)?;
    stdout_line(&format!(
        "wrote {} scenes to {}",
        scenes.len(),
        a.out.display()
    ))
}

pub fn cmd_fixtures(a: &FixturesArgs) -> Result<(), CliError> {
    require_dir_parent(&a.samples)?;
    if let Some(p) = &a.scenes {
        require_dir_parent(p)?;
    }
    let samples = fixtures::all()?;
    formats::write_output(&a.samples, &formats::to_jsonl(&samples)?)?;
    if let Some(p) = &a.scenes {
        formats::write_output(p, &formats::to_jsonl(&[fixtures::scene()])?)?;
    }
    stdout_line(&format!("wrote {} fixture samples", samples.len()))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<DatasetFiles, CliError> {
    if a.tasks.is_empty() {
        return Err(CliError::validation("--tasks must name at least one task"));
    }
    let scenes = formats::read_scenes(&a.scenes)?;
    let mut plan = DatasetPlan::full_scale(a.scale)?.restrict(&a.tasks);
    plan.val_fraction = a.val_fraction;
    let ds = generate_dataset(&scenes, &plan, a.seed)?;
    let files = formats::encode_dataset(&ds, &plan, a.seed)?;
    formats::write_dataset(&a.out, &files)?;
    let m = &files.manifest;
    for (split, per_task) in &m.counts {
        let parts: Vec<String> = per_task.iter().map(|(t, n)| format!("{t}={n}")).collect();
        stdout_line(&format!("{split}: {}", parts.join(" ")))?;
    }
    stdout_line(&format!("content_hash: {}", m.content_hash))?;
    Ok(files)
}

pub fn cmd_answers(a: &AnswersArgs) -> Result<(), CliError> {
    require_dir_parent(&a.out)?;
    let samples = formats::read_samples(&a.gt)?;
    let preds = formats::gold_predictions(&samples);
    formats::write_output(&a.out, &formats::to_jsonl(&preds)?)?;
    stdout_line(&format!("wrote {} predictions", preds.len()))
}

/// Path of the JSON report written next to a text report.
pub fn json_report_path(report: &Path) -> Result<PathBuf, CliError> {
    if report.extension().is_some_and(|e| e == "json") {
        return Err(CliError::validation(
            "--report names the text report; its JSON twin gets the .json extension",
        ));
    }
    Ok(report.with_extension("json"))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalReport, CliError> {
    let json_path = json_report_path(&a.report)?;
    require_dir_parent(&a.report)?;
    let thresholds = if a.iou.is_empty() {
        DEFAULT_THRESHOLDS.to_vec()
    } else {
        a.iou.clone()
    };
    let samples = formats::read_samples(&a.gt)?;
    let preds = formats::read_predictions(&a.pred)?;
    let r = score_dataset(&samples, &preds, &thresholds)?;
    let text = report::to_text(&r);
    formats::write_output(&a.report, text.as_bytes())?;
    formats::write_output(&json_path, report::to_json(&r).as_bytes())?;
    for line in text.lines().filter(|l| !l.starts_with("count.")) {
        stdout_line(line)?;
    }
    Ok(r)
}

/// Codec violations for one sample: its answer must parse to its ground
/// truth, and every parsed item must re-emit and re-parse unchanged.
pub fn codec_violations(s: &InstructionSample) -> Vec<String> {
    let mut out = Vec::new();
    if let Err(e) = s.check() {
        out.push(format!("{}: {e}", s.id));
    }
    let Ok(payload) = parse_answer(&s.answer) else {
        return out;
    };
    for item in &payload.items {
        let ok = match item {
            AnswerItem::Loc { bbox } => parse_loc(&emit_loc(bbox)).ok() == Some(*bbox),
            AnswerItem::Gap { value } => {
                parse_answer(&emit_gap(*value)).ok().map(|p| p.items) == Some(vec![*item])
            }
            AnswerItem::Center { center } => {
                parse_answer(&emit_center(*center)).ok().map(|p| p.items) == Some(vec![*item])
            }
        };
        if !ok {
            out.push(format!("{}: {item:?} does not survive emit/parse", s.id));
        }
    }
    out
}

/// Metric round trip of every object box: centers and extents must come back
/// within half a quantization bin per axis.
pub fn scene_codec_violations(scene: &SceneRecord) -> Result<Vec<String>, CliError> {
    let t = fit_transform(scene)?;
    let mut out = Vec::new();
    for o in &scene.objects {
        let q = t.quantize_box(&o.bbox);
        let back = t.dequantize_box(&q);
        let c0 = o.bbox.center.to_array();
        let c1 = back.center.to_array();
        for a in 0..3 {
            let half = 0.5 * t.bin_width(a) * (1.0 + 1e-9);
            if (c0[a] - c1[a]).abs() > half || (o.bbox.extent[a] - back.extent[a]).abs() > half {
                out.push(format!(
                    "{} object {}: axis {a} off by more than half a bin",
                    scene.scene_id, o.object_id
                ));
            }
        }
    }
    Ok(out)
}

pub fn cmd_codec(a: &CodecArgs) -> Result<(), CliError> {
    let samples = formats::read_samples(&a.samples)?;
    let scenes = a
        .scenes
        .as_deref()
        .map(formats::read_scenes)
        .transpose()?
        .unwrap_or_default();
    let mut violations: Vec<String> = samples.iter().flat_map(codec_violations).collect();
    let mut objects = 0;
    for s in &scenes {
        objects += s.objects.len();
        violations.extend(scene_codec_violations(s)?);
    }
    for v in &violations {
        eprintln!("{v}");
    }
    stdout_line(&format!(
        "checked {} samples and {objects} scene objects: {} violations",
        samples.len(),
        violations.len()
    ))?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{} codec violations",
            violations.len()
        )))
    }
}

pub fn gradcheck_config(a: &GradcheckArgs) -> SchemeConfig {
    SchemeConfig {
        n_points: a.points,
        n_referents: a.referents,
        feat_dim: a.dim,
        ..SchemeConfig::toy()
    }
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<SchemeGradReport, CliError> {
    let cfg = gradcheck_config(a);
    cfg.validate()?;
    let room = synthetic_room("gradcheck0000_00", 5, a.seed)?;
    let cloud = sample_scene_cloud(&room, 4 * cfg.n_points, a.seed)?;
    let features = encode_scene_stub(&cloud, &cfg)?;
    let r = grad_check_scheme(&features, &room.boxes(), &cfg, a.seed, a.eps, a.tol)?;
    stdout_line("block\tmax_rel_error\tvalues\tbracketed")?;
    for b in &r.blocks {
        stdout_line(&format!(
            "{}\t{:.3e}\t{}\t{}",
            b.block, b.max_rel_error, b.values, b.bracketed
        ))?;
    }
    let verdict = if r.passed { "PASS" } else { "FAIL" };
    stdout_line(&format!(
        "max_rel_error {:.3e} tol {:.1e} {verdict}",
        r.max_rel_error, r.tol
    ))?;
    if !r.passed {
        return Err(CliError::validation(format!(
            "gradient check failed: max relative error {:.3e} (tolerance {:.1e})",
            r.max_rel_error, r.tol
        )));
    }
    Ok(r)
}

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

pub fn trace_csv(trace: &TrainTrace) -> String {
    let mut out = String::from("step,l_center,l_psc,total\n");
    for s in &trace.steps {
        out.push_str(&format!(
            "{},{:?},{:?},{:?}\n",
            s.step, s.l_center, s.l_psc, s.total
        ));
    }
    out
}

pub fn cmd_train_toy(a: &TrainToyArgs) -> Result<TrainTrace, CliError> {
    let scene = match (&a.scenes, &a.scene_id) {
        (Some(path), Some(id)) => formats::read_scenes(path)?
            .into_iter()
            .find(|s| &s.scene_id == id)
            .ok_or_else(|| CliError::validation(format!("{}: no scene {id}", path.display())))?,
        _ => synthetic_room("toy0000_00", a.objects, a.room_seed)?,
    };
    if a.lr <= 0.0 || !a.lr.is_finite() {
        return Err(CliError::validation(format!(
            "--lr must be positive, got {}",
            a.lr
        )));
    }
    let cfg = TrainConfig {
        steps: a.steps,
        learning_rate: a.lr,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let trace = train_toy(&scene, &cfg)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", a.out.display())))?;
    formats::write_output(&a.out.join(TRACE_FILE), trace_csv(&trace).as_bytes())?;
    let ckpt = checkpoint::encode(&cfg.scheme, &trace.params)?;
    formats::write_output(&a.out.join(CHECKPOINT_FILE), ckpt.as_bytes())?;
    let (first, last) = (trace.initial(), trace.last());
    stdout_line(&format!(
        "l_center {:.4} -> {:.4} (diagonal {:.4}); l_psc {:.4} -> {:.4}",
        first.l_center, last.l_center, trace.scene_diagonal, first.l_psc, last.l_psc
    ))?;
    Ok(trace)
}
