//! Five-row ablation over seeds: supervised baseline, semi-supervised
//! student, student trained with an enlarged labeled pool, temporal model on
//! that student, and the temporal model's smoothed output. Every row is
//! scored per frame on the held-out test videos.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;
use crate::pipeline;
use crate::table;

pub const ROWS: [&str; 5] = ["baseline", "ssl", "ssl_enlarged", "ssl_temporal", "ssl_temporal_smoothed"];

#[derive(Clone, Debug, PartialEq)]
pub struct SeedScores {
    pub seed: u64,
    /// Macro-F1 per row, in [`ROWS`] order.
    pub macro_f1: [f64; 5],
}

/// All five rows for one master seed.
pub fn ablation_seed(cfg: &RunConfig, seed: u64) -> Result<SeedScores> {
    let bench = pipeline::generate(cfg, seed)?;
    let test = &bench.test_videos;
    let f1 = |tracks: &[_]| pipeline::score(cfg, test, tracks).map(|r| r.macro_f1);

    let baseline = pipeline::run_baseline(cfg, seed, &bench.labeled)?;
    let a = f1(&pipeline::predict_spatial(&baseline, test)?)?;

    let ssl = pipeline::run_spatial(cfg, seed, &bench.labeled, &bench.unlabeled.samples, |_| Ok(()))?;
    let b = f1(&pipeline::predict_spatial(&ssl.student, test)?)?;

    let enlarged = pipeline::enlarged_labeled(cfg, seed, cfg.eval.enlarge_factor)?;
    let ssl_big = pipeline::run_spatial(cfg, seed, &enlarged, &bench.unlabeled.samples, |_| Ok(()))?;
    let c = f1(&pipeline::predict_spatial(&ssl_big.student, test)?)?;

    let temporal = pipeline::run_temporal(cfg, seed, &ssl_big.student, &bench.train_videos)?;
    let tracks = pipeline::predict_temporal(cfg, &ssl_big.student, &temporal.params, test)?;
    let d = f1(&tracks)?;
    let e = f1(&pipeline::smooth_all(cfg, &tracks)?)?;

    Ok(SeedScores { seed, macro_f1: [a, b, c, d, e] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<SeedScores>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowSummary {
    pub row: &'static str,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub stddev: f64,
}

impl AblationTable {
    pub fn column(&self, row: usize) -> Vec<f64> {
        self.seeds.iter().map(|s| s.macro_f1[row]).collect()
    }

    pub fn summary(&self) -> Vec<RowSummary> {
        ROWS.iter()
            .enumerate()
            .map(|(i, &row)| {
                let v = self.column(i);
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                RowSummary { row, mean, stddev: var.sqrt() }
            })
            .collect()
    }

    /// Seeds on which row `hi` scores at least row `lo`.
    pub fn wins(&self, hi: usize, lo: usize) -> usize {
        self.seeds.iter().filter(|s| s.macro_f1[hi] >= s.macro_f1[lo]).count()
    }

    /// `row,seed,macro_f1`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        table::write(
            path,
            &table::header(&["row", "seed", "macro_f1"]),
            ROWS.iter().enumerate().flat_map(|(i, row)| {
                self.seeds
                    .iter()
                    .map(move |s| vec![row.to_string(), s.seed.to_string(), table::fmt_f64(s.macro_f1[i])])
            }),
        )
    }

    /// `row,mean,stddev`.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        table::write(
            path,
            &table::header(&["row", "mean", "stddev"]),
            self.summary().into_iter().map(|r| vec![r.row.to_string(), table::fmt_f64(r.mean), table::fmt_f64(r.stddev)]),
        )
    }
}

/// Runs every row for seeds `cfg.seed, cfg.seed + 1, ...`.
///
/// Seeds share no state, so each runs on its own thread; results are joined
/// in seed order, keeping the table independent of scheduling.
pub fn ablation_harness(cfg: &RunConfig) -> Result<AblationTable> {
    let seeds = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.eval.ablation_seeds as u64)
            .map(|k| scope.spawn(move || ablation_seed(cfg, cfg.seed.wrapping_add(k))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(AblationTable { seeds })
}
