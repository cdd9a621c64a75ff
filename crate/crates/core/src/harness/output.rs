//! CSV and JSON outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::MetricsRow;
use super::Evaluation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardCurveRow {
    pub episode: u64,
    pub mean_reward: f64,
    /// Mean over the last `window` episodes, or all so far.
    pub smoothed_reward: f64,
}

pub fn reward_curve(rewards: &[f64], window: usize) -> Vec<RewardCurveRow> {
    let window = window.max(1);
    let mut sum = 0.0;
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            sum += r;
            if i >= window {
                sum -= rewards[i - window];
            }
            // Recompute the window exactly now and then to keep rounding from
            // drifting.
            if i % 1024 == 1023 {
                sum = rewards[(i + 1).saturating_sub(window)..=i].iter().sum();
            }
            RewardCurveRow {
                episode: i as u64,
                mean_reward: r,
                smoothed_reward: sum / (i + 1).min(window) as f64,
            }
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_reward_curve(path: &Path, rows: &[RewardCurveRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: String,
    pub rows: usize,
    /// Means over every metrics row.
    pub mean_se: f64,
    pub mean_thr: f64,
    pub mean_prb_util: f64,
    pub mean_interference: f64,
    /// Means over the rows of optimized cells.
    pub target_rows: usize,
    pub target_mean_se: f64,
    pub target_mean_thr: f64,
    pub target_mean_prb_util: f64,
    pub target_mean_interference: f64,
    pub mean_reward: f64,
    /// Digest over every channel draw of the run.
    pub channel_digest: String,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Aggregates metrics rows; the result depends on the rows only.
pub fn summarize(agent: &str, rows: &[MetricsRow], channel_digests: &[u64]) -> Summary {
    let target: Vec<&MetricsRow> = rows.iter().filter(|r| r.target).collect();
    let mut digest = crate::rng::Digest::default();
    for &d in channel_digests {
        digest.push_f64(f64::from_bits(d));
    }
    Summary {
        agent: agent.to_string(),
        rows: rows.len(),
        mean_se: mean(rows.iter().map(|r| r.mean_se)),
        mean_thr: mean(rows.iter().map(|r| r.mean_thr)),
        mean_prb_util: mean(rows.iter().map(|r| r.prb_util)),
        mean_interference: mean(rows.iter().map(|r| r.cell_interference)),
        target_rows: target.len(),
        target_mean_se: mean(target.iter().map(|r| r.mean_se)),
        target_mean_thr: mean(target.iter().map(|r| r.mean_thr)),
        target_mean_prb_util: mean(target.iter().map(|r| r.prb_util)),
        target_mean_interference: mean(target.iter().map(|r| r.cell_interference)),
        mean_reward: mean(target.iter().filter_map(|r| r.reward)),
        channel_digest: format!("{:016x}", digest.value()),
    }
}

#[derive(Debug, Serialize)]
struct CdfRow {
    value: f64,
    cdf: f64,
}

/// Sorted samples with their empirical CDF `i / n`.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

fn write_cdf(path: &Path, samples: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    for (value, cdf) in empirical_cdf(samples) {
        w.serialize(CdfRow { value, cdf })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCellRow {
    pub pci: usize,
    pub mean_se: f64,
    pub mean_thr: f64,
    pub mean_prb_util: f64,
    pub mean_interference: f64,
    pub target_steps: usize,
}

pub fn per_cell(rows: &[MetricsRow], num_cells: usize) -> Vec<PerCellRow> {
    (0..num_cells)
        .map(|pci| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.pci == pci).collect();
            PerCellRow {
                pci,
                mean_se: mean(mine.iter().map(|r| r.mean_se)),
                mean_thr: mean(mine.iter().map(|r| r.mean_thr)),
                mean_prb_util: mean(mine.iter().map(|r| r.prb_util)),
                mean_interference: mean(mine.iter().map(|r| r.cell_interference)),
                target_steps: mine.iter().filter(|r| r.target).count(),
            }
        })
        .collect()
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes `metrics.csv`, `cdf_se.csv`, `cdf_thr.csv`, `per_cell_se.csv` and
/// `summary.json`.
pub fn write_evaluation(dir: &Path, ev: &Evaluation, num_cells: usize) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    write_metrics(&dir.join("metrics.csv"), &ev.rows)?;
    write_cdf(&dir.join("cdf_se.csv"), &ev.ue_se)?;
    write_cdf(&dir.join("cdf_thr.csv"), &ev.ue_thr)?;
    let mut w = writer(&dir.join("per_cell_se.csv"))?;
    for r in per_cell(&ev.rows, num_cells) {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = summarize(&ev.agent, &ev.rows, &ev.channel_digests);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: String,
    pub agent: String,
    /// Agent subtracted in a delta row.
    pub baseline: String,
    pub mean_se: f64,
    pub mean_thr: f64,
    pub mean_prb_util: f64,
    pub mean_interference: f64,
    pub mean_reward: f64,
}

pub fn comparison_rows(summaries: &[Summary]) -> Result<Vec<ComparisonRow>> {
    let find = |name: &str| {
        summaries
            .iter()
            .find(|s| s.agent == name)
            .ok_or_else(|| Error::State(format!("comparison lacks agent {name}")))
    };
    let mut rows: Vec<ComparisonRow> = summaries
        .iter()
        .map(|s| ComparisonRow {
            kind: "summary".into(),
            agent: s.agent.clone(),
            baseline: String::new(),
            mean_se: s.mean_se,
            mean_thr: s.mean_thr,
            mean_prb_util: s.mean_prb_util,
            mean_interference: s.mean_interference,
            mean_reward: s.mean_reward,
        })
        .collect();
    for (a, b) in [
        ("inter_a2c", "follow_pmi"),
        ("a2c", "follow_pmi"),
        ("inter_a2c", "a2c"),
    ] {
        let (x, y) = (find(a)?, find(b)?);
        rows.push(ComparisonRow {
            kind: "delta".into(),
            agent: a.into(),
            baseline: b.into(),
            mean_se: x.mean_se - y.mean_se,
            mean_thr: x.mean_thr - y.mean_thr,
            mean_prb_util: x.mean_prb_util - y.mean_prb_util,
            mean_interference: x.mean_interference - y.mean_interference,
            mean_reward: x.mean_reward - y.mean_reward,
        });
    }
    Ok(rows)
}

pub fn write_comparison(path: &Path, summaries: &[Summary]) -> Result<()> {
    let mut w = writer(path)?;
    for r in comparison_rows(summaries)? {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
