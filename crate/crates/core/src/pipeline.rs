//! End-to-end orchestration shared by the CLI and the ablation harness.
//! Every function is a pure function of the configuration and master seed.

use crate::autodiff::ParamSet;
use crate::config::RunConfig;
use crate::error::Result;
use crate::evalpost::{evaluate_tracks, sliding_window_smooth, MetricsReport, PredictionTrack};
use crate::nets;
use crate::seed::Stream;
use crate::spatial::{train_spatial, train_supervised, SpatialData, SpatialRun, SpatialState};
use crate::synthdata::{gen_labeled, gen_unlabeled, gen_videos, LabeledSample, SynthConfig, UnlabeledPool, UnlabeledSample, VideoSequence};
use crate::temporal::{extract_features, make_clips, predict_features, predict_frames, predict_probe, train_probe, TemporalRun};

/// Synthetic generator settings under `master` for one seeded stream.
pub fn synth_config(cfg: &RunConfig, master: u64, stream: Stream) -> SynthConfig {
    SynthConfig { seed: stream.seed(master), prototype_seed: Stream::Prototypes.seed(master), ..cfg.synth.clone() }
}

pub struct Benchmark {
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: UnlabeledPool,
    pub train_videos: Vec<VideoSequence>,
    pub test_videos: Vec<VideoSequence>,
}

pub fn generate(cfg: &RunConfig, master: u64) -> Result<Benchmark> {
    let labeled = gen_labeled(&synth_config(cfg, master, Stream::Labeled))?;
    let unlabeled = gen_unlabeled(&synth_config(cfg, master, Stream::Unlabeled))?;
    let mut train_videos = gen_videos(&synth_config(cfg, master, Stream::Videos))?;
    let test_videos = split_test_videos(&mut train_videos, cfg.eval.test_videos);
    Ok(Benchmark { labeled, unlabeled, train_videos, test_videos })
}

/// Splits off the last `count` videos as the held-out test set.
pub fn split_test_videos(videos: &mut Vec<VideoSequence>, count: usize) -> Vec<VideoSequence> {
    let keep = videos.len().saturating_sub(count);
    videos.split_off(keep)
}

/// Labeled pool `factor` times larger; the original pool is its prefix.
pub fn enlarged_labeled(cfg: &RunConfig, master: u64, factor: usize) -> Result<Vec<LabeledSample>> {
    let mut synth = synth_config(cfg, master, Stream::Labeled);
    synth.labeled_count *= factor;
    gen_labeled(&synth)
}

/// Labeled-domain samples disjoint from training draws, for frame-level
/// scoring: drawn at the video frame noise so they match what is evaluated.
pub fn heldout_labeled(cfg: &RunConfig, master: u64) -> Result<Vec<LabeledSample>> {
    let mut synth = synth_config(cfg, master, Stream::HeldOut);
    synth.labeled_count = cfg.eval.heldout_count;
    synth.sample_noise = cfg.synth.video.frame_noise_sigma;
    gen_labeled(&synth)
}

pub fn run_spatial(
    cfg: &RunConfig,
    master: u64,
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    on_checkpoint: impl FnMut(&SpatialState) -> Result<()>,
) -> Result<SpatialRun> {
    let hyper = cfg.spatial.with_seed(Stream::SpatialLoop.seed(master));
    let state = SpatialState::init(&hyper, &cfg.network, master)?;
    let data = SpatialData { labeled, unlabeled, num_classes: cfg.synth.num_classes };
    train_spatial(state, &data, &hyper, on_checkpoint)
}

pub fn run_baseline(cfg: &RunConfig, master: u64, labeled: &[LabeledSample]) -> Result<ParamSet> {
    train_supervised(&cfg.network, labeled, &cfg.spatial, master)
}

pub fn run_temporal(cfg: &RunConfig, master: u64, student: &ParamSet, videos: &[VideoSequence]) -> Result<TemporalRun> {
    let store = extract_features(student, videos)?;
    let hyper = cfg.temporal_train.with_seed(Stream::TemporalLoop.seed(master));
    let clips = make_clips(&store, hyper.clip_len, hyper.stride)?;
    let model = cfg.temporal.with_seed(Stream::TemporalInit.seed(master));
    let init = nets::init_temporal_model(&model, cfg.network.feature_dim(), cfg.network.num_classes)?;
    crate::temporal::train_temporal(init, &clips, &model, &hyper)
}

pub fn predict_temporal(
    cfg: &RunConfig,
    student: &ParamSet,
    temporal: &ParamSet,
    videos: &[VideoSequence],
) -> Result<Vec<PredictionTrack>> {
    let store = extract_features(student, videos)?;
    store.videos.iter().map(|v| predict_features(temporal, v, &cfg.temporal, &cfg.temporal_train)).collect()
}

/// Linear probe on the frozen student's features of `videos`.
pub fn run_probe(cfg: &RunConfig, master: u64, student: &ParamSet, videos: &[VideoSequence]) -> Result<ParamSet> {
    let store = extract_features(student, videos)?;
    train_probe(&store, cfg.network.num_classes, &cfg.temporal_train.with_seed(Stream::Probe.seed(master)))
}

pub fn predict_probed(student: &ParamSet, probe: &ParamSet, videos: &[VideoSequence]) -> Result<Vec<PredictionTrack>> {
    extract_features(student, videos)?.videos.iter().map(|v| predict_probe(probe, v)).collect()
}

pub fn predict_spatial(network: &ParamSet, videos: &[VideoSequence]) -> Result<Vec<PredictionTrack>> {
    videos.iter().map(|v| predict_frames(network, v)).collect()
}

pub fn smooth_all(cfg: &RunConfig, tracks: &[PredictionTrack]) -> Result<Vec<PredictionTrack>> {
    tracks.iter().map(|t| sliding_window_smooth(t, cfg.eval.window, cfg.eval.stride)).collect()
}

pub fn gold_tracks(videos: &[VideoSequence]) -> Vec<PredictionTrack> {
    videos.iter().map(|v| PredictionTrack { video_id: v.video_id.clone(), preds: v.gold_labels.clone() }).collect()
}

pub fn score(cfg: &RunConfig, videos: &[VideoSequence], tracks: &[PredictionTrack]) -> Result<MetricsReport> {
    evaluate_tracks(&gold_tracks(videos), tracks, cfg.synth.num_classes)
}
