//! Seeded synthetic stand-ins for the labeled expression corpus, the
//! unlabeled domain-shifted face pool and labeled video sequences, plus the
//! balanced sampler and the two augmentation strengths.

mod augment;
pub mod io;

pub use augment::{strong_augment, weak_augment, AugmentConfig};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Frames on each side of a segment boundary blended between prototypes.
pub const CROSSFADE_FRAMES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainShift {
    /// Offset of the unlabeled pool's mean along a fixed random unit direction.
    pub magnitude: f64,
    /// Multiplier on the unlabeled pool's noise standard deviation.
    pub cov_scale: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        DomainShift { magnitude: 1.0, cov_scale: 1.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    pub mean_segment_len: f64,
    pub frame_noise_sigma: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            num_videos: 36,
            frames_per_video: 480,
            mean_segment_len: 120.0,
            frame_noise_sigma: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Explicit class prior; empty means geometric decay at `prior_decay`.
    pub class_prior: Vec<f64>,
    pub prior_decay: f64,
    pub labeled_count: usize,
    pub unlabeled_count: usize,
    /// Standard deviation of the class prototype coordinates.
    pub prototype_scale: f64,
    /// Standard deviation of per-sample noise around a prototype.
    pub sample_noise: f64,
    pub domain_shift: DomainShift,
    pub video: VideoConfig,
    /// Seeds the per-sample draws.
    #[serde(skip)]
    pub seed: u64,
    /// Seeds the class prototypes and the shift direction, shared by every
    /// generator that must agree on the class geometry.
    #[serde(skip)]
    pub prototype_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 8,
            feature_dim: 16,
            class_prior: Vec::new(),
            prior_decay: 0.6,
            labeled_count: 400,
            unlabeled_count: 4000,
            prototype_scale: 0.8,
            sample_noise: 1.0,
            domain_shift: DomainShift::default(),
            video: VideoConfig::default(),
            seed: 0,
            prototype_seed: 0,
        }
    }
}

/// `decay^k` for `k = 0..C`, normalized.
pub fn geometric_prior(num_classes: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..num_classes).map(|k| decay.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

impl SynthConfig {
    pub fn prior(&self) -> Vec<f64> {
        if self.class_prior.is_empty() {
            geometric_prior(self.num_classes, self.prior_decay)
        } else {
            self.class_prior.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.feature_dim < 1 {
            return Err(Error::Config("synth needs num_classes >= 2 and feature_dim >= 1".into()));
        }
        let prior = self.prior();
        if prior.len() != self.num_classes {
            return Err(Error::Config(format!(
                "synth.class_prior has {} entries for {} classes",
                prior.len(),
                self.num_classes
            )));
        }
        if prior.iter().any(|&p| p.is_nan() || p < 0.0) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("synth.class_prior must be non-negative and sum to 1".into()));
        }
        if self.video.mean_segment_len.is_nan() || self.video.mean_segment_len < 1.0 {
            return Err(Error::Config("synth.video.mean_segment_len must be >= 1".into()));
        }
        if self.sample_noise < 0.0 || self.video.frame_noise_sigma < 0.0 || self.domain_shift.cov_scale < 0.0 {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SynthConfig { seed, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledSample {
    pub x: Vec<f64>,
}

/// Unlabeled pool. `hidden_labels` exist for post-hoc analysis only and are
/// never written to the unlabeled file or handed to training.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledPool {
    pub samples: Vec<UnlabeledSample>,
    pub hidden_labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub video_id: String,
    pub frames: Vec<Vec<f64>>,
    pub gold_labels: Vec<usize>,
}

/// Class geometry shared by all generators of one benchmark.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub prototypes: Vec<Vec<f64>>,
    pub shift_direction: Vec<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

pub fn geometry(config: &SynthConfig) -> Geometry {
    let mut rng = rng_for(config.prototype_seed, 0);
    let prototypes = (0..config.num_classes)
        .map(|_| normal_vec(&mut rng, config.feature_dim, config.prototype_scale))
        .collect();
    let mut dir = normal_vec(&mut rng, config.feature_dim, 1.0);
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    Geometry { prototypes, shift_direction: dir }
}

fn class_sampler(prior: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(prior).map_err(|e| Error::Config(format!("class prior: {}", e)))
}

/// Draws `(class, features)` for item `i` with optional shift.
fn draw_item(
    config: &SynthConfig,
    geo: &Geometry,
    classes: &WeightedIndex<f64>,
    i: usize,
    shift: Option<&DomainShift>,
) -> (usize, Vec<f64>) {
    let mut rng = rng_for(config.seed, i as u64);
    let y = classes.sample(&mut rng);
    let noise_scale = config.sample_noise * shift.map_or(1.0, |s| s.cov_scale);
    let noise = normal_vec(&mut rng, config.feature_dim, noise_scale);
    let offset = shift.map_or(0.0, |s| s.magnitude);
    let x = geo.prototypes[y]
        .iter()
        .zip(&noise)
        .zip(&geo.shift_direction)
        .map(|((p, n), d)| p + offset * d + n)
        .collect();
    (y, x)
}

pub fn gen_labeled(config: &SynthConfig) -> Result<Vec<LabeledSample>> {
    config.validate()?;
    let geo = geometry(config);
    let classes = class_sampler(&config.prior())?;
    Ok((0..config.labeled_count)
        .map(|i| {
            let (y, x) = draw_item(config, &geo, &classes, i, None);
            LabeledSample { x, y }
        })
        .collect())
}

/// Same mixture as [`gen_labeled`], displaced and rescaled per `domain_shift`.
pub fn gen_unlabeled(config: &SynthConfig) -> Result<UnlabeledPool> {
    config.validate()?;
    let geo = geometry(config);
    let classes = class_sampler(&config.prior())?;
    let mut samples = Vec::with_capacity(config.unlabeled_count);
    let mut hidden_labels = Vec::with_capacity(config.unlabeled_count);
    for i in 0..config.unlabeled_count {
        let (y, x) = draw_item(config, &geo, &classes, i, Some(&config.domain_shift));
        samples.push(UnlabeledSample { x });
        hidden_labels.push(y);
    }
    Ok(UnlabeledPool { samples, hidden_labels })
}

/// Piecewise-constant label track with geometric segment lengths; adjacent
/// segments always differ in class when the prior allows it.
fn segment_track(rng: &mut ChaCha8Rng, len: usize, mean: f64, prior: &[f64]) -> Result<Vec<usize>> {
    let lengths = Geometric::new(1.0 / mean).map_err(|e| Error::Config(format!("segment length: {}", e)))?;
    let any = class_sampler(prior)?;
    let mut labels = Vec::with_capacity(len);
    let mut class = any.sample(rng);
    while labels.len() < len {
        let seg = 1u64.saturating_add(lengths.sample(rng));
        let take = (len - labels.len()).min(seg.min(len as u64) as usize);
        labels.extend(std::iter::repeat_n(class, take));
        let mut w = prior.to_vec();
        w[class] = 0.0;
        class = match WeightedIndex::new(&w) {
            Ok(d) => d.sample(rng),
            Err(_) => class,
        };
    }
    Ok(labels)
}

/// Per-frame means: the segment prototype, linearly blended toward the
/// next segment's prototype over the frames straddling each boundary.
fn frame_means(labels: &[usize], prototypes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = labels.iter().map(|&y| prototypes[y].clone()).collect();
    let n = labels.len();
    let half = CROSSFADE_FRAMES / 2;
    let mut seg_start = 0;
    let boundaries: Vec<usize> = (1..n).filter(|&b| labels[b] != labels[b - 1]).collect();
    for (k, &b) in boundaries.iter().enumerate() {
        let seg_end = boundaries.get(k + 1).copied().unwrap_or(n);
        let (from, to) = (labels[b - 1], labels[b]);
        for j in 0..CROSSFADE_FRAMES {
            let Some(f) = (b + j).checked_sub(half) else { continue };
            let inside = if j < half { f >= seg_start } else { f < seg_end };
            if f >= n || !inside {
                continue;
            }
            let alpha = (j + 1) as f64 / (CROSSFADE_FRAMES + 1) as f64;
            means[f] = prototypes[from]
                .iter()
                .zip(&prototypes[to])
                .map(|(a, c)| (1.0 - alpha) * a + alpha * c)
                .collect();
        }
        seg_start = b;
    }
    means
}

pub fn gen_videos(config: &SynthConfig) -> Result<Vec<VideoSequence>> {
    config.validate()?;
    let geo = geometry(config);
    let prior = config.prior();
    let v = &config.video;
    let mut videos = Vec::with_capacity(v.num_videos);
    for idx in 0..v.num_videos {
        let mut rng = rng_for(config.seed, idx as u64);
        let labels = segment_track(&mut rng, v.frames_per_video.max(1), v.mean_segment_len, &prior)?;
        let frames = frame_means(&labels, &geo.prototypes)
            .into_iter()
            .map(|m| {
                let noise = normal_vec(&mut rng, config.feature_dim, v.frame_noise_sigma);
                m.iter().zip(noise).map(|(a, b)| a + b).collect()
            })
            .collect();
        videos.push(VideoSequence {
            video_id: format!("vid{:05}", idx),
            frames,
            gold_labels: labels,
        });
    }
    Ok(videos)
}

/// Exactly `n_per_class` samples of every class, shuffled. Classes with
/// fewer than `n_per_class` samples are drawn with replacement.
pub fn smp_balanced(
    data: &[LabeledSample],
    num_classes: usize,
    n_per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<LabeledSample>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, s) in data.iter().enumerate() {
        if s.y >= num_classes {
            return Err(Error::TargetOutOfRange { target: s.y, classes: num_classes });
        }
        by_class[s.y].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::MissingClass(c));
    }
    let mut picked = Vec::with_capacity(num_classes * n_per_class);
    for members in &by_class {
        if members.len() >= n_per_class {
            picked.extend(index::sample(rng, members.len(), n_per_class).into_iter().map(|k| members[k]));
        } else {
            picked.extend((0..n_per_class).map(|_| members[rng.random_range(0..members.len())]));
        }
    }
    picked.shuffle(rng);
    Ok(picked.into_iter().map(|i| data[i].clone()).collect())
}
