//! Temporal refinement over frozen per-frame student features: the video is
//! cut into fixed-length clips, a self-attention encoder with a fresh
//! frame-level head is trained on them, and per-frame predictions are read
//! back off the clips.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sgd_step, ParamSet, SgdState, Tape, Targets, Tensor};
use crate::error::{Error, Result};
use crate::evalpost::PredictionTrack;
use crate::nets::{self, argmax, TemporalConfig};
use crate::synthdata::VideoSequence;
use crate::table::{self, fmt_f64, numbered_header};

#[derive(Clone, Debug, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    /// One backbone feature vector per source frame.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl VideoFeatures {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    pub videos: Vec<VideoFeatures>,
}

impl FeatureStore {
    /// Feature width, or `None` when no video has frames.
    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.iter().find_map(|v| v.features.first().map(Vec::len))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub video_id: String,
    pub start_frame: usize,
    /// `clip_len × F`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// False on padded positions.
    pub valid_mask: Vec<bool>,
}

fn frame_matrix(frames: &[Vec<f64>]) -> Result<Tensor> {
    Tensor::from_rows(frames)
}

/// Per-frame backbone features of the frozen student.
pub fn extract_features(student: &ParamSet, videos: &[VideoSequence]) -> Result<FeatureStore> {
    let mut out = Vec::with_capacity(videos.len());
    for v in videos {
        let features = if v.frames.is_empty() {
            Vec::new()
        } else {
            nets::backbone_forward(student, &frame_matrix(&v.frames)?)?
                .rows()
                .map(<[f64]>::to_vec)
                .collect()
        };
        out.push(VideoFeatures { video_id: v.video_id.clone(), features, labels: v.gold_labels.clone() });
    }
    Ok(FeatureStore { videos: out })
}

/// Clip start frames for a video of `n` frames: `0, s, 2s, ...` until a clip
/// reaches the last frame.
pub fn clip_starts(n: usize, clip_len: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s < n {
        starts.push(s);
        if s + clip_len >= n {
            break;
        }
        s += stride;
    }
    starts
}

fn check_tiling(clip_len: usize, stride: usize) -> Result<()> {
    if clip_len < 1 || stride < 1 {
        return Err(Error::Config("clip_len and stride must be >= 1".into()));
    }
    if stride > clip_len {
        return Err(Error::Config(format!("stride {} exceeds clip_len {}: frames would be skipped", stride, clip_len)));
    }
    Ok(())
}

/// Clips of exactly `clip_len` frames covering every frame; the tail is padded
/// by repeating the last frame, with the padding masked out.
pub fn make_clips_for(video: &VideoFeatures, clip_len: usize, stride: usize) -> Result<Vec<Clip>> {
    check_tiling(clip_len, stride)?;
    let n = video.len();
    clip_starts(n, clip_len, stride)
        .into_iter()
        .map(|start| {
            let idx: Vec<usize> = (start..start + clip_len).map(|i| i.min(n - 1)).collect();
            let rows: Vec<&Vec<f64>> = idx.iter().map(|&i| &video.features[i]).collect();
            Ok(Clip {
                video_id: video.video_id.clone(),
                start_frame: start,
                features: Tensor::from_rows(&rows)?,
                labels: idx.iter().map(|&i| video.labels[i]).collect(),
                valid_mask: (start..start + clip_len).map(|i| i < n).collect(),
            })
        })
        .collect()
}

pub fn make_clips(store: &FeatureStore, clip_len: usize, stride: usize) -> Result<Vec<Clip>> {
    check_tiling(clip_len, stride)?;
    let mut clips = Vec::new();
    for v in &store.videos {
        clips.extend(make_clips_for(v, clip_len, stride)?);
    }
    Ok(clips)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalHyper {
    pub lr: f64,
    pub min_lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub clip_len: usize,
    /// Clip stride at training time.
    pub stride: usize,
    /// Clip stride at prediction time; overlapping logits are averaged.
    pub predict_stride: usize,
    /// Learning rate of the per-frame linear probe.
    pub probe_lr: f64,
    pub probe_batch: usize,
    /// Seeds the per-epoch clip order.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TemporalHyper {
    fn default() -> Self {
        TemporalHyper {
            lr: 1e-3,
            min_lr: 0.0,
            momentum: 0.9,
            epochs: 20,
            clip_len: 64,
            stride: 64,
            predict_stride: 64,
            probe_lr: 1e-2,
            probe_batch: 64,
            seed: 0,
        }
    }
}

impl TemporalHyper {
    pub fn validate(&self, model: &TemporalConfig) -> Result<()> {
        check_tiling(self.clip_len, self.stride)?;
        check_tiling(self.clip_len, self.predict_stride)?;
        if self.clip_len > model.max_clip_len {
            return Err(Error::ClipTooLong { len: self.clip_len, max: model.max_clip_len });
        }
        if !(self.lr > 0.0 && self.probe_lr > 0.0) || self.probe_batch < 1 {
            return Err(Error::Config("temporal_train learning rates must be > 0 and probe_batch >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TemporalHyper { seed, ..self.clone() }
    }
}

/// Masked mean cross-entropy of the temporal model on one clip, with its gradient.
pub fn clip_loss(params: &ParamSet, clip: &Clip, model: &TemporalConfig) -> Result<(f64, crate::autodiff::Gradient)> {
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let x = tape.constant(clip.features.clone());
    let z = nets::temporal_logits(&mut tape, &bound, x, &clip.valid_mask, model)?;
    let weights = clip.valid_mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let loss = tape.cross_entropy(z, Targets::Indices(clip.labels.clone()), Some(weights))?;
    Ok((tape.value(loss).item()?, tape.backward(loss)?))
}

pub struct TemporalRun {
    pub params: ParamSet,
    /// Loss before each step.
    pub losses: Vec<f64>,
}

/// One clip per step, clip order reshuffled each epoch, cosine-annealed SGD
/// over `epochs · clips.len()` steps.
pub fn train_temporal(
    mut params: ParamSet,
    clips: &[Clip],
    model: &TemporalConfig,
    hyper: &TemporalHyper,
) -> Result<TemporalRun> {
    let total = hyper.epochs * clips.len();
    let mut opt = SgdState::new(hyper.lr, hyper.min_lr.min(hyper.lr), total, hyper.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut losses = Vec::with_capacity(total);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (l, g) = clip_loss(&params, &clips[i], model)?;
            losses.push(l);
            sgd_step(&mut params, &g, &mut opt)?;
        }
    }
    Ok(TemporalRun { params, losses })
}

fn average_clip_logits(
    video: &VideoFeatures,
    hyper: &TemporalHyper,
    mut logits_of: impl FnMut(&Clip) -> Result<Tensor>,
) -> Result<Vec<usize>> {
    let n = video.len();
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for clip in make_clips_for(video, hyper.clip_len, hyper.predict_stride)? {
        let z = logits_of(&clip)?;
        for (k, valid) in clip.valid_mask.iter().enumerate() {
            if !valid {
                continue;
            }
            let f = clip.start_frame + k;
            let row = z.row(k);
            if sums[f].is_empty() {
                sums[f] = vec![0.0; row.len()];
            }
            sums[f].iter_mut().zip(row).for_each(|(s, v)| *s += v);
            counts[f] += 1;
        }
    }
    // Averaging does not change the argmax; the sum is compared directly.
    debug_assert!(counts.iter().all(|&c| c >= 1));
    Ok(sums.iter().map(|s| argmax(s)).collect())
}

/// Per-frame predictions of the temporal model for one video's features.
pub fn predict_features(
    temporal: &ParamSet,
    video: &VideoFeatures,
    model: &TemporalConfig,
    hyper: &TemporalHyper,
) -> Result<PredictionTrack> {
    let preds = average_clip_logits(video, hyper, |clip| {
        let mut tape = Tape::new();
        let bound = tape.bind(temporal);
        let x = tape.constant(clip.features.clone());
        let z = nets::temporal_logits(&mut tape, &bound, x, &clip.valid_mask, model)?;
        Ok(tape.value(z).clone())
    })?;
    Ok(PredictionTrack { video_id: video.video_id.clone(), preds })
}

/// Frozen student features followed by the temporal model; exactly one
/// prediction per source frame.
pub fn predict_video(
    student: &ParamSet,
    temporal: &ParamSet,
    video: &VideoSequence,
    model: &TemporalConfig,
    hyper: &TemporalHyper,
) -> Result<PredictionTrack> {
    let store = extract_features(student, std::slice::from_ref(video))?;
    predict_features(temporal, &store.videos[0], model, hyper)
}

/// Per-frame predictions of the spatial network alone.
pub fn predict_frames(network: &ParamSet, video: &VideoSequence) -> Result<PredictionTrack> {
    let preds = if video.frames.is_empty() {
        Vec::new()
    } else {
        nets::predict_logits(network, &frame_matrix(&video.frames)?)?.rows().map(argmax).collect()
    };
    Ok(PredictionTrack { video_id: video.video_id.clone(), preds })
}

/// Fresh linear classifier over frozen features, trained with uniform frame
/// minibatches for `epochs` passes worth of frames.
pub fn train_probe(store: &FeatureStore, num_classes: usize, hyper: &TemporalHyper) -> Result<ParamSet> {
    let dim = store.feature_dim().ok_or(Error::Empty("feature store"))?;
    let frames: Vec<(&Vec<f64>, usize)> = store
        .videos
        .iter()
        .flat_map(|v| v.features.iter().zip(v.labels.iter().copied()))
        .collect();
    let mut params = ParamSet::new();
    params.insert("head.w", Tensor::zeros(&[dim, num_classes]));
    params.insert("head.b", Tensor::zeros(&[num_classes]));
    let steps = (hyper.epochs * frames.len()).div_ceil(hyper.probe_batch);
    let mut opt = SgdState::new(hyper.probe_lr, hyper.min_lr.min(hyper.probe_lr), steps, hyper.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut cursor = order.len();
    for _ in 0..steps {
        let mut batch = Vec::with_capacity(hyper.probe_batch);
        while batch.len() < hyper.probe_batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(frames[order[cursor]]);
            cursor += 1;
        }
        let x = Tensor::from_rows(&batch.iter().map(|b| b.0).collect::<Vec<_>>())?;
        let y = batch.iter().map(|b| b.1).collect();
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let xv = tape.constant(x);
        let z = nets::head(&mut tape, &bound, xv)?;
        let loss = tape.cross_entropy(z, Targets::Indices(y), None)?;
        let g = tape.backward(loss)?;
        sgd_step(&mut params, &g, &mut opt)?;
    }
    Ok(params)
}

pub fn predict_probe(probe: &ParamSet, video: &VideoFeatures) -> Result<PredictionTrack> {
    let preds = if video.is_empty() {
        Vec::new()
    } else {
        nets::classify(probe, &frame_matrix(&video.features)?)?.rows().map(argmax).collect()
    };
    Ok(PredictionTrack { video_id: video.video_id.clone(), preds })
}

// ---- files ----

/// Writes `video_id,frame_idx,g0..` to `features` and `video_id,frame_idx,y` to `labels`.
pub fn write_feature_store(store: &FeatureStore, features: &Path, labels: &Path) -> Result<()> {
    let dim = store.feature_dim().unwrap_or(0);
    table::write(
        features,
        &numbered_header(&["video_id", "frame_idx"], "g", dim),
        store.videos.iter().flat_map(|v| {
            v.features.iter().enumerate().map(move |(i, f)| {
                [v.video_id.clone(), i.to_string()].into_iter().chain(f.iter().map(|&x| fmt_f64(x))).collect::<Vec<_>>()
            })
        }),
    )?;
    table::write(
        labels,
        &table::header(&["video_id", "frame_idx", "y"]),
        store.videos.iter().flat_map(|v| {
            v.labels.iter().enumerate().map(move |(i, y)| vec![v.video_id.clone(), i.to_string(), y.to_string()])
        }),
    )
}

/// Rows of `(video_id, frame_idx, fields...)` grouped by video in file order,
/// with frame indices required to run `0, 1, 2, ...` within each video.
/// Rows of one video: source line and the selected fields.
type FrameRows = Vec<(usize, Vec<String>)>;

fn read_framewise(path: &Path, value_cols: &dyn Fn(&table::Table) -> Result<Vec<usize>>) -> Result<Vec<(String, FrameRows)>> {
    let t = table::read(path)?;
    let vc = t.require(path, "video_id")?;
    let ic = t.require(path, "frame_idx")?;
    let cols = value_cols(&t)?;
    let mut out: Vec<(String, FrameRows)> = Vec::new();
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    for (line, row) in &t.rows {
        let id = &row[vc];
        let idx: usize = table::parse(path, *line, "frame_idx", &row[ic])?;
        let fields = (*line, cols.iter().map(|&c| row[c].clone()).collect());
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: *line, msg };
        match out.last_mut() {
            Some((last, rows)) if last == id => {
                if idx != rows.len() {
                    return Err(err(format!("frame_idx {} where {} was expected", idx, rows.len())));
                }
                rows.push(fields);
            }
            _ => {
                if seen.insert(id.clone(), ()).is_some() {
                    return Err(err(format!("rows of video `{}` are not contiguous", id)));
                }
                if idx != 0 {
                    return Err(err(format!("video `{}` starts at frame_idx {}", id, idx)));
                }
                out.push((id.clone(), vec![fields]));
            }
        }
    }
    Ok(out)
}

/// Line just past the last row, for errors about missing trailing data.
fn end_line(groups: &[(String, FrameRows)]) -> usize {
    groups.last().and_then(|g| g.1.last()).map_or(2, |r| r.0 + 1)
}

pub fn read_feature_store(features: &Path, labels: &Path) -> Result<FeatureStore> {
    let feats = read_framewise(features, &|t| t.numbered(features, "g"))?;
    let labs = read_framewise(labels, &|t| Ok(vec![t.require(labels, "y")?]))?;
    if let Some(k) = (0..feats.len().max(labs.len()))
        .find(|&k| match (feats.get(k), labs.get(k)) {
            (Some(a), Some(b)) => a.0 != b.0 || a.1.len() != b.1.len(),
            _ => true,
        })
    {
        let line = labs.get(k).map_or(end_line(&labs), |v| v.1[0].0);
        return Err(Error::Parse {
            path: labels.to_path_buf(),
            line,
            msg: format!("labels do not match the frames of {}", features.display()),
        });
    }
    let mut videos = Vec::with_capacity(feats.len());
    for ((id, rows), (_, lrows)) in feats.into_iter().zip(labs) {
        let features = rows
            .iter()
            .map(|(line, r)| r.iter().map(|v| table::parse(features, *line, "g", v)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let labels_v =
            lrows.iter().map(|(line, r)| table::parse(labels, *line, "y", &r[0])).collect::<Result<Vec<usize>>>()?;
        videos.push(VideoFeatures { video_id: id, features, labels: labels_v });
    }
    Ok(FeatureStore { videos })
}

pub fn write_predictions(path: &Path, tracks: &[PredictionTrack]) -> Result<()> {
    let header = table::header(&["video_id", "frame_idx", "pred"]);
    table::write(
        path,
        &header,
        tracks.iter().flat_map(|t| {
            t.preds.iter().enumerate().map(move |(i, p)| vec![t.video_id.clone(), i.to_string(), p.to_string()])
        }),
    )
}

/// Reads any CSV with `video_id,frame_idx` and the named label column.
pub fn read_label_column(path: &Path, column: &str) -> Result<Vec<PredictionTrack>> {
    let groups = read_framewise(path, &|t| Ok(vec![t.require(path, column)?]))?;
    groups
        .into_iter()
        .map(|(id, rows)| {
            let preds = rows.iter().map(|(line, r)| table::parse(path, *line, column, &r[0])).collect::<Result<Vec<usize>>>()?;
            Ok(PredictionTrack { video_id: id, preds })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionTrack>> {
    read_label_column(path, "pred")
}
