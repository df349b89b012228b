//! Command-line front end. Each subcommand is a pure function of the
//! configuration file and its input artifacts.
//!
//! Artifact layout under the output directory:
//!
//! ```text
//! data/      labeled.csv unlabeled.csv videos.csv
//! spatial/   teacher.ckpt student.ckpt log.csv [teacher|student]_step{N}.ckpt
//! temporal/  features.csv frame_labels.csv temporal.ckpt loss.csv
//! predict/   predictions.csv predictions_spatial.csv
//! eval/      metrics.json metrics_smoothed.json
//! ablation/  ablation.csv summary.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::autodiff::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evalpost::{ablation, evaluate_tracks, PredictionTrack};
use crate::gradcheck::{run_gradcheck, GradcheckOptions};
use crate::pipeline;
use crate::spatial::{write_log, SpatialState};
use crate::synthdata::{io, VideoSequence};
use crate::table;
use crate::temporal::{extract_features, read_label_column, read_predictions, write_feature_store, write_predictions};

#[derive(Debug, Parser)]
#[command(name = "fer-ssl", version, about = "Semi-supervised frame-level expression classification on synthetic data")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `paths.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Frozen student followed by the temporal encoder.
    Temporal,
    /// Per-frame student predictions.
    Spatial,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the labeled, unlabeled and video datasets.
    GenData,
    /// Run teacher/student pretraining on the generated data.
    TrainSpatial,
    /// Extract frozen student features and train the temporal encoder.
    TrainTemporal,
    /// Predict frame labels for the held-out videos.
    Predict {
        #[arg(long, value_enum, default_value_t = Model::Temporal)]
        model: Model,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against gold labels.
    Evaluate {
        /// Apply sliding-window smoothing to the predictions first.
        #[arg(long)]
        smooth: bool,
        /// Gold file with `video_id,frame_idx,y`; defaults to the held-out videos.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Prediction file with `video_id,frame_idx,pred`.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Metrics JSON destination.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run the five-row ablation over several seeds.
    Ablate,
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, hide = true)]
        inject_sign_bug: Option<String>,
    },
}

/// Process exit status for an error: 2 for broken internal invariants,
/// 1 for everything a user can cause.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Invariant(_) | Error::NonScalarLoss(_) | Error::StructureMismatch(_) | Error::UnknownParam(_) => 2,
        _ => 1,
    }
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn data(&self, file: &str) -> PathBuf {
        self.root.join("data").join(file)
    }

    fn spatial(&self, file: &str) -> PathBuf {
        self.root.join("spatial").join(file)
    }

    fn temporal(&self, file: &str) -> PathBuf {
        self.root.join("temporal").join(file)
    }

    fn predict(&self, file: &str) -> PathBuf {
        self.root.join("predict").join(file)
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    }
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Executes the parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut impl std::io::Write) -> Result<()> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        return write!(out, "{}", cfg.to_toml()).map_err(|e| Error::io("<stdout>", e));
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given; see --help".into()));
    };
    let layout = Layout { root: cfg.paths.out_dir.clone() };
    let say = |out: &mut dyn std::io::Write, lines: Vec<String>| -> Result<()> {
        lines.iter().try_for_each(|l| writeln!(out, "{}", l)).map_err(|e| Error::io("<stdout>", e))
    };
    if let Command::Gradcheck { instances, inject_sign_bug } = command {
        let (lines, result) = gradcheck(&cfg, *instances, inject_sign_bug.clone())?;
        say(out, lines)?;
        return result;
    }
    let lines = dispatch(command, &cfg, &layout)?;
    say(out, lines)
}

fn dispatch(command: &Command, cfg: &RunConfig, layout: &Layout) -> Result<Vec<String>> {
    match command {
        Command::GenData => gen_data(cfg, layout),
        Command::TrainSpatial => train_spatial(cfg, layout),
        Command::TrainTemporal => train_temporal(cfg, layout),
        Command::Predict { model, output } => predict(cfg, layout, *model, output.as_deref()),
        Command::Evaluate { smooth, gold, pred, metrics } => {
            evaluate(cfg, layout, *smooth, gold.as_deref(), pred.as_deref(), metrics.as_deref())
        }
        Command::Ablate => ablate(cfg, layout),
        Command::Gradcheck { .. } => unreachable!("handled by run"),
    }
}

fn class_counts(labels: impl Iterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    labels.for_each(|y| counts[y] += 1);
    counts
}

fn gen_data(cfg: &RunConfig, layout: &Layout) -> Result<Vec<String>> {
    layout.dir("data")?;
    let bench = pipeline::generate(cfg, cfg.seed)?;
    let mut videos = bench.train_videos;
    videos.extend(bench.test_videos);
    io::write_labeled(&layout.data("labeled.csv"), &bench.labeled)?;
    io::write_unlabeled(&layout.data("unlabeled.csv"), &bench.unlabeled.samples)?;
    io::write_videos(&layout.data("videos.csv"), &videos)?;

    let c = cfg.synth.num_classes;
    let fmt = |counts: Vec<usize>| counts.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ");
    Ok(vec![
        format!("labeled: {} rows, per-class {}", bench.labeled.len(), fmt(class_counts(bench.labeled.iter().map(|s| s.y), c))),
        format!(
            "unlabeled: {} rows, per-class (hidden) {}",
            bench.unlabeled.samples.len(),
            fmt(class_counts(bench.unlabeled.hidden_labels.iter().copied(), c))
        ),
        format!(
            "videos: {} videos, {} frames, per-class {}",
            videos.len(),
            videos.iter().map(|v| v.frames.len()).sum::<usize>(),
            fmt(class_counts(videos.iter().flat_map(|v| v.gold_labels.iter().copied()), c))
        ),
    ])
}

fn train_spatial(cfg: &RunConfig, layout: &Layout) -> Result<Vec<String>> {
    let labeled = io::read_labeled(&layout.data("labeled.csv"))?;
    let unlabeled = io::read_unlabeled(&layout.data("unlabeled.csv"))?;
    layout.dir("spatial")?;
    let every = cfg.spatial.checkpoint_every;
    let save_step = |state: &SpatialState| -> Result<()> {
        checkpoint::save(&state.teacher, &layout.spatial(&format!("teacher_step{}.ckpt", state.step)))?;
        checkpoint::save(&state.student, &layout.spatial(&format!("student_step{}.ckpt", state.step)))
    };
    let run = pipeline::run_spatial(cfg, cfg.seed, &labeled, &unlabeled, |s| if every > 0 { save_step(s) } else { Ok(()) })?;
    checkpoint::save(&run.teacher, &layout.spatial("teacher.ckpt"))?;
    checkpoint::save(&run.student, &layout.spatial("student.ckpt"))?;
    write_log(&layout.spatial("log.csv"), &run.log)?;
    let mut lines = vec![format!("spatial: {} steps", run.log.len())];
    if let Some(last) = run.log.last() {
        lines.push(format!("final l_u {:.6} l_s {:.6} f {:.6e}", last.l_u, last.l_s, last.f));
    }
    lines.push(format!("student fingerprint {}", checkpoint::fingerprint(&run.student)));
    Ok(lines)
}

/// All generated videos split into (train, test).
fn read_split(cfg: &RunConfig, layout: &Layout) -> Result<(Vec<VideoSequence>, Vec<VideoSequence>)> {
    let mut videos = io::read_videos(&layout.data("videos.csv"))?;
    let test = pipeline::split_test_videos(&mut videos, cfg.eval.test_videos);
    Ok((videos, test))
}

fn train_temporal(cfg: &RunConfig, layout: &Layout) -> Result<Vec<String>> {
    let student_path = layout.spatial("student.ckpt");
    let before = fs::read(&student_path).map_err(|e| Error::io(&student_path, e))?;
    let student = checkpoint::load(&student_path)?;
    let (train, test) = read_split(cfg, layout)?;
    layout.dir("temporal")?;

    let mut all = train.clone();
    all.extend(test);
    let store = extract_features(&student, &all)?;
    write_feature_store(&store, &layout.temporal("features.csv"), &layout.temporal("frame_labels.csv"))?;

    let run = pipeline::run_temporal(cfg, cfg.seed, &student, &train)?;
    checkpoint::save(&run.params, &layout.temporal("temporal.ckpt"))?;
    table::write(
        &layout.temporal("loss.csv"),
        &table::header(&["step", "loss"]),
        run.losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), table::fmt_f64(*l)]),
    )?;

    // The student is frozen: its parameters and checkpoint must be untouched.
    let after = fs::read(&student_path).map_err(|e| Error::io(&student_path, e))?;
    if after != before || checkpoint::encode(&student) != before {
        return Err(Error::Invariant("student checkpoint changed during the temporal phase".into()));
    }
    let tail = run.losses.len().min(50);
    let recent = run.losses[run.losses.len() - tail..].iter().sum::<f64>() / tail.max(1) as f64;
    Ok(vec![
        format!("temporal: {} steps on {} training videos", run.losses.len(), train.len()),
        format!("mean loss over last {} steps {:.6}", tail, recent),
        format!("student fingerprint {} (unchanged)", checkpoint::fingerprint(&student)),
    ])
}

fn predict(cfg: &RunConfig, layout: &Layout, model: Model, output: Option<&Path>) -> Result<Vec<String>> {
    let student = checkpoint::load(&layout.spatial("student.ckpt"))?;
    let (_, test) = read_split(cfg, layout)?;
    let (tracks, default) = match model {
        Model::Temporal => {
            let temporal = checkpoint::load(&layout.temporal("temporal.ckpt"))?;
            (pipeline::predict_temporal(cfg, &student, &temporal, &test)?, "predictions.csv")
        }
        Model::Spatial => (pipeline::predict_spatial(&student, &test)?, "predictions_spatial.csv"),
    };
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| layout.predict(default));
    ensure_parent(&path)?;
    write_predictions(&path, &tracks)?;
    Ok(vec![format!("predicted {} frames in {} videos -> {}", tracks.iter().map(|t| t.preds.len()).sum::<usize>(), tracks.len(), path.display())])
}

fn evaluate(
    cfg: &RunConfig,
    layout: &Layout,
    smooth: bool,
    gold: Option<&Path>,
    pred: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<Vec<String>> {
    let gold: Vec<PredictionTrack> = match gold {
        Some(p) => read_label_column(p, "y")?,
        None => pipeline::gold_tracks(&read_split(cfg, layout)?.1),
    };
    let pred_path = pred.map(Path::to_path_buf).unwrap_or_else(|| layout.predict("predictions.csv"));
    let mut tracks = read_predictions(&pred_path)?;
    if smooth {
        tracks = pipeline::smooth_all(cfg, &tracks)?;
    }
    let report = evaluate_tracks(&gold, &tracks, cfg.synth.num_classes)?;
    let name = if smooth { "metrics_smoothed.json" } else { "metrics.json" };
    let path = metrics.map(Path::to_path_buf).unwrap_or_else(|| layout.root.join("eval").join(name));
    ensure_parent(&path)?;
    report.write(&path)?;
    Ok(vec![format!("macro_f1 {:.6}{} -> {}", report.macro_f1, if smooth { " (smoothed)" } else { "" }, path.display())])
}

fn ablate(cfg: &RunConfig, layout: &Layout) -> Result<Vec<String>> {
    let dir = layout.dir("ablation")?;
    let t = ablation::ablation_harness(cfg)?;
    t.write_csv(&dir.join("ablation.csv"))?;
    t.write_summary_csv(&dir.join("summary.csv"))?;
    let n = t.seeds.len();
    let mut lines: Vec<String> =
        t.summary().iter().map(|r| format!("{:<24} mean {:.4}  sd {:.4}", r.row, r.mean, r.stddev)).collect();
    lines.push(format!("ssl > baseline in {}/{} seeds", t.wins(1, 0), n));
    lines.push(format!("ssl_temporal > ssl in {}/{} seeds", t.wins(3, 1), n));
    lines.push(format!("ssl_temporal > ssl_enlarged in {}/{} seeds", t.wins(3, 2), n));
    Ok(lines)
}

/// The report lines, plus the verdict as a separate result so the report is
/// printed even when checks fail.
fn gradcheck(cfg: &RunConfig, instances: usize, inject_sign_bug: Option<String>) -> Result<(Vec<String>, Result<()>)> {
    let report = run_gradcheck(&GradcheckOptions { instances, seed: cfg.seed, inject_sign_bug })?;
    let mut lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{:<24} {:>4} instances  worst {:.3e}  {}", c.name, c.instances, c.worst, if c.passed() { "ok" } else { "FAIL" }))
        .collect();
    lines.push(format!("worst relative error {:.3e}", report.worst()));
    let verdict = if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
        Err(Error::Invariant(format!("gradient check failed: {}", names.join(", "))))
    };
    Ok((lines, verdict))
}
