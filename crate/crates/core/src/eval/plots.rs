//! Reductions behind the score-vs-traffic scatter and the score histogram.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Evaluation summary for one sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorResult {
    pub sector: String,
    /// Total entries per evaluated day.
    pub daily_entries: Vec<f64>,
    pub raw_score: f64,
    pub balanced_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub sector: String,
    pub avg_daily_count: f64,
    pub raw_score: f64,
    pub balanced_score: f64,
}

pub fn score_scatter(results: &[SectorResult]) -> Vec<ScatterRow> {
    results
        .iter()
        .map(|r| {
            let avg = if r.daily_entries.is_empty() {
                0.0
            } else {
                r.daily_entries.iter().sum::<f64>() / r.daily_entries.len() as f64
            };
            ScatterRow {
                sector: r.sector.clone(),
                avg_daily_count: avg,
                raw_score: r.raw_score,
                balanced_score: r.balanced_score,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` uniform edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

/// Scores outside [0, 1] land in the nearest end bin; 1.0 lands in the last.
pub fn score_histogram(scores: &[f64], bins: usize) -> Result<Histogram, EvalError> {
    if bins == 0 {
        return Err(EvalError::BadBinCount);
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let i = (s * bins as f64).floor();
        let i = if i.is_nan() { 0 } else { (i.max(0.0) as usize).min(bins - 1) };
        counts[i] += 1;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(Histogram {
        edges,
        counts,
        mean,
    })
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], mut out: W) -> io::Result<()> {
    writeln!(out, "sector,avg_daily_count,raw_score,balanced_score")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.sector, r.avg_daily_count, r.raw_score, r.balanced_score
        )?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, mut out: W) -> io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,count")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(out, "{},{},{}", h.edges[i], h.edges[i + 1], c)?;
    }
    Ok(())
}
