//! Label-track smoothing, F1 metrics and the ablation harness.

pub mod ablation;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame class predictions for one video.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionTrack {
    pub video_id: String,
    pub preds: Vec<usize>,
}

/// Window start positions: `0, stride, 2·stride, ...` until a window reaches
/// the end of the track.
fn window_starts(n: usize, window: usize, stride: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(0);
    std::iter::from_fn(move || {
        let s = next.filter(|&s| s < n)?;
        next = if s + window >= n { None } else { Some(s + stride) };
        Some(s)
    })
}

/// Unique most frequent label of `labels`, or `None` on a frequency tie.
fn unique_mode(labels: &[usize]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = *counts.values().max()?;
    let mut top = counts.iter().filter(|(_, &c)| c == best);
    let (&label, _) = top.next()?;
    top.next().is_none().then_some(label)
}

/// Assigns each window's modal label to all of its frames. Modes are taken
/// from the input track; a tied window keeps its frames' input labels. With
/// overlapping windows a later window overwrites an earlier one.
pub fn sliding_window_smooth(track: &PredictionTrack, window: usize, stride: usize) -> Result<PredictionTrack> {
    if window < 1 || stride < 1 {
        return Err(Error::Config("smoothing window and stride must be >= 1".into()));
    }
    let src = &track.preds;
    let mut out = src.clone();
    for start in window_starts(src.len(), window, stride) {
        let end = (start + window).min(src.len());
        let span = &src[start..end];
        match unique_mode(span) {
            Some(m) => out[start..end].iter_mut().for_each(|p| *p = m),
            None => out[start..end].copy_from_slice(span),
        }
    }
    Ok(PredictionTrack { video_id: track.video_id.clone(), preds: out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the class occurs in neither gold nor predictions; such
    /// classes are left out of the macro average.
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    /// `confusion[gold][pred]` frame counts.
    pub confusion: Vec<Vec<u64>>,
    /// Gold frame count per class.
    pub support: Vec<u64>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

fn check_lengths(gold: &[usize], pred: &[usize]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::shape("macro_f1", format!("{} gold labels but {} predictions", gold.len(), pred.len())));
    }
    Ok(())
}

/// One-vs-rest `(tp, fp, fn)` for class `c`.
fn counts(gold: &[usize], pred: &[usize], c: usize) -> (u64, u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fne = 0;
    for (&g, &p) in gold.iter().zip(pred) {
        match (g == c, p == c) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fne += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fne)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn scores(gold: &[usize], pred: &[usize], c: usize) -> ClassScores {
    let (tp, fp, fne) = counts(gold, pred, c);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fne);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassScores { class: c, precision, recall, f1, included: tp + fp + fne > 0 }
}

/// One-vs-rest F1 of class `c`; 0 when precision and recall are both 0.
pub fn per_class_f1(gold: &[usize], pred: &[usize], c: usize) -> Result<f64> {
    check_lengths(gold, pred)?;
    Ok(scores(gold, pred, c).f1)
}

/// Mean F1 over the classes that occur in gold or predictions.
pub fn macro_f1(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<MetricsReport> {
    check_lengths(gold, pred)?;
    if gold.is_empty() {
        return Err(Error::Empty("no frames to score"));
    }
    if let Some(&bad) = gold.iter().chain(pred).find(|&&l| l >= num_classes) {
        return Err(Error::TargetOutOfRange { target: bad, classes: num_classes });
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&g, &p) in gold.iter().zip(pred) {
        confusion[g][p] += 1;
    }
    let support = confusion.iter().map(|r| r.iter().sum()).collect();
    let per_class: Vec<ClassScores> = (0..num_classes).map(|c| scores(gold, pred, c)).collect();
    let included: Vec<f64> = per_class.iter().filter(|s| s.included).map(|s| s.f1).collect();
    let macro_f1 = included.iter().sum::<f64>() / included.len() as f64;
    Ok(MetricsReport { macro_f1, per_class, confusion, support })
}

/// Pairs gold and predicted tracks by video id and scores all frames together.
pub fn evaluate_tracks(gold: &[PredictionTrack], pred: &[PredictionTrack], num_classes: usize) -> Result<MetricsReport> {
    let by_id: BTreeMap<&str, &PredictionTrack> = pred.iter().map(|t| (t.video_id.as_str(), t)).collect();
    if by_id.len() != pred.len() {
        return Err(Error::Config("duplicate video id among predictions".into()));
    }
    let mut g_all = Vec::new();
    let mut p_all = Vec::new();
    for g in gold {
        let p = by_id
            .get(g.video_id.as_str())
            .ok_or_else(|| Error::Config(format!("no predictions for video `{}`", g.video_id)))?;
        if p.preds.len() != g.preds.len() {
            return Err(Error::shape(
                "evaluate",
                format!("video `{}`: {} gold frames, {} predictions", g.video_id, g.preds.len(), p.preds.len()),
            ));
        }
        g_all.extend_from_slice(&g.preds);
        p_all.extend_from_slice(&p.preds);
    }
    if gold.len() != pred.len() {
        return Err(Error::Config(format!("{} predicted videos but {} gold videos", pred.len(), gold.len())));
    }
    macro_f1(&g_all, &p_all, num_classes)
}
