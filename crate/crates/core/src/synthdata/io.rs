//! CSV files for labeled, unlabeled and video datasets. They double as the
//! ingestion path for real pre-extracted features.
//!
//! * labeled: `y,f0,...,f{D-1}`
//! * unlabeled: `f0,...,f{D-1}`
//! * videos: `video_id,frame_idx,y,f0,...,f{D-1}`, sorted by `(video_id, frame_idx)`

use std::path::Path;

use super::{LabeledSample, UnlabeledSample, VideoSequence};
use crate::error::{Error, Result};
use crate::table::{self, fmt_f64, numbered_header};

fn dim_of<'a>(mut rows: impl Iterator<Item = &'a Vec<f64>>) -> usize {
    rows.next().map_or(0, Vec::len)
}

pub fn write_labeled(path: &Path, data: &[LabeledSample]) -> Result<()> {
    let d = dim_of(data.iter().map(|s| &s.x));
    let header = numbered_header(&["y"], "f", d);
    table::write(
        path,
        &header,
        data.iter().map(|s| std::iter::once(s.y.to_string()).chain(s.x.iter().map(|&v| fmt_f64(v))).collect::<Vec<_>>()),
    )
}

pub fn write_unlabeled(path: &Path, data: &[UnlabeledSample]) -> Result<()> {
    let d = dim_of(data.iter().map(|s| &s.x));
    let header = numbered_header(&[], "f", d);
    table::write(path, &header, data.iter().map(|s| s.x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>()))
}

pub fn write_videos(path: &Path, videos: &[VideoSequence]) -> Result<()> {
    let d = dim_of(videos.iter().flat_map(|v| v.frames.iter()));
    let header = numbered_header(&["video_id", "frame_idx", "y"], "f", d);
    let rows = videos.iter().flat_map(|v| {
        v.frames.iter().zip(&v.gold_labels).enumerate().map(move |(i, (f, y))| {
            [v.video_id.clone(), i.to_string(), y.to_string()]
                .into_iter()
                .chain(f.iter().map(|&x| fmt_f64(x)))
                .collect::<Vec<_>>()
        })
    });
    table::write(path, &header, rows)
}

fn features(path: &Path, line: usize, row: &[String], cols: &[usize]) -> Result<Vec<f64>> {
    cols.iter().enumerate().map(|(k, &c)| table::parse(path, line, &format!("f{}", k), &row[c])).collect()
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledSample>> {
    let t = table::read(path)?;
    let yc = t.require(path, "y")?;
    let fc = t.numbered(path, "f")?;
    t.rows
        .iter()
        .map(|(line, row)| {
            Ok(LabeledSample {
                y: table::parse(path, *line, "y", &row[yc])?,
                x: features(path, *line, row, &fc)?,
            })
        })
        .collect()
}

pub fn read_unlabeled(path: &Path) -> Result<Vec<UnlabeledSample>> {
    let t = table::read(path)?;
    let fc = t.numbered(path, "f")?;
    t.rows
        .iter()
        .map(|(line, row)| Ok(UnlabeledSample { x: features(path, *line, row, &fc)? }))
        .collect()
}

pub fn read_videos(path: &Path) -> Result<Vec<VideoSequence>> {
    let t = table::read(path)?;
    let vc = t.require(path, "video_id")?;
    let ic = t.require(path, "frame_idx")?;
    let yc = t.require(path, "y")?;
    let fc = t.numbered(path, "f")?;
    let mut videos: Vec<VideoSequence> = Vec::new();
    for (line, row) in &t.rows {
        let id = &row[vc];
        let idx: usize = table::parse(path, *line, "frame_idx", &row[ic])?;
        let y: usize = table::parse(path, *line, "y", &row[yc])?;
        let x = features(path, *line, row, &fc)?;
        let out_of_order = |msg: String| Error::Parse { path: path.to_path_buf(), line: *line, msg };
        match videos.last_mut() {
            Some(v) if &v.video_id == id => {
                if idx != v.frames.len() {
                    return Err(out_of_order(format!("frame_idx {} where {} was expected", idx, v.frames.len())));
                }
                v.frames.push(x);
                v.gold_labels.push(y);
            }
            last => {
                if let Some(prev) = last {
                    if prev.video_id.as_str() > id.as_str() {
                        return Err(out_of_order(format!("video `{}` after `{}`: rows must be sorted", id, prev.video_id)));
                    }
                }
                if idx != 0 {
                    return Err(out_of_order(format!("video `{}` starts at frame_idx {}", id, idx)));
                }
                videos.push(VideoSequence { video_id: id.clone(), frames: vec![x], gold_labels: vec![y] });
            }
        }
    }
    Ok(videos)
}
