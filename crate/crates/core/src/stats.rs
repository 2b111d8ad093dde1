//! Aggregate statistics over run records with bootstrap confidence intervals.
//!
//! Each run contributes one final score (mean extrinsic return over the last
//! 10% of its logged intervals). Returns lie in `[0, 1]`, so scores are used
//! unnormalized and the optimality gap is measured against 1.0.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::record::{RunRecord, RunStatus};
use crate::rng::SplitMix64;

/// Fraction of logged intervals that make up the final-score window.
pub const FINAL_FRACTION: f64 = 0.1;
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_RESAMPLE_SEED: u64 = 0xB007;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Interquartile mean: drop `⌊n/4⌋` scores from each end, average the rest.
pub fn iqm(xs: &[f64]) -> f64 {
    let v = sorted(xs);
    let cut = v.len() / 4;
    mean(&v[cut..v.len() - cut])
}

/// Mean shortfall from a score of 1.0.
pub fn optimality_gap(xs: &[f64]) -> f64 {
    xs.iter().map(|x| 1.0 - x.min(1.0)).sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: Interval,
    pub median: Interval,
    pub iqm: Interval,
    pub optimality_gap: Interval,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

type Statistic = fn(&[f64]) -> f64;
const STATISTICS: [Statistic; 4] = [mean, median, iqm, optimality_gap];

/// Percentile-bootstrap summary. `strata` are resampled independently (with
/// replacement, same size) and pooled before each statistic is evaluated.
/// Intervals are widened to include the point estimate if needed.
pub fn bootstrap(strata: &[Vec<f64>], resamples: usize, confidence: f64, rng: &mut SplitMix64) -> Result<Summary> {
    if strata.iter().any(|s| s.is_empty()) || strata.is_empty() {
        return Err(invalid("bootstrap needs non-empty strata"));
    }
    if resamples < 1 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("bootstrap needs resamples ≥ 1 and confidence in (0, 1)"));
    }
    let pooled: Vec<f64> = strata.iter().flatten().copied().collect();
    let mut draws: [Vec<f64>; 4] = Default::default();
    let mut sample = Vec::with_capacity(pooled.len());
    for _ in 0..resamples {
        sample.clear();
        for s in strata {
            for _ in 0..s.len() {
                sample.push(s[rng.below(s.len())]);
            }
        }
        for (d, f) in draws.iter_mut().zip(STATISTICS) {
            d.push(f(&sample));
        }
    }
    let tail = (1.0 - confidence) / 2.0;
    let mut out = [Interval {
        point: 0.0,
        lower: 0.0,
        upper: 0.0,
    }; 4];
    for ((o, d), f) in out.iter_mut().zip(&mut draws).zip(STATISTICS) {
        d.sort_by(f64::total_cmp);
        let point = f(&pooled);
        o.point = point;
        o.lower = quantile(d, tail).min(point);
        o.upper = quantile(d, 1.0 - tail).max(point);
    }
    Ok(Summary {
        mean: out[0],
        median: out[1],
        iqm: out[2],
        optimality_gap: out[3],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub label: String,
    pub env: String,
    pub seeds: Vec<u64>,
    /// Final scores in seed order.
    pub scores: Vec<f64>,
    pub failed_runs: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelReport {
    pub label: String,
    pub envs: Vec<String>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub final_window: String,
    pub optimality_gap_reference: f64,
    pub resamples: usize,
    pub confidence: f64,
    pub resample_seed: u64,
    pub strata: Vec<StratumReport>,
    /// Per label, pooled over envs with resampling stratified by env.
    pub labels: Vec<LabelReport>,
}

impl AggregateReport {
    pub fn stratum(&self, label: &str, env: &str) -> Option<&StratumReport> {
        self.strata.iter().find(|s| s.label == label && s.env == env)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<24} {:<28} {:>5} {:>22} {:>22} {:>22}\n",
            "label", "env", "runs", "mean [ci]", "iqm [ci]", "gap [ci]"
        );
        let f = |i: &Interval| format!("{:.3} [{:.3},{:.3}]", i.point, i.lower, i.upper);
        for s in &self.strata {
            out.push_str(&format!(
                "{:<24} {:<28} {:>5} {:>22} {:>22} {:>22}\n",
                s.label,
                s.env,
                s.scores.len(),
                f(&s.summary.mean),
                f(&s.summary.iqm),
                f(&s.summary.optimality_gap)
            ));
        }
        out
    }
}

/// Completed `(seed, score)` pairs and the number of failed runs.
type Group = (Vec<(u64, f64)>, usize);

/// Groups completed records by `(label, env)` and summarizes each group.
/// Every group needs at least two completed runs. Record order does not
/// affect the result.
pub fn aggregate(
    records: &[RunRecord],
    resamples: usize,
    confidence: f64,
    resample_seed: u64,
) -> Result<AggregateReport> {
    if records.is_empty() {
        return Err(invalid("no records to aggregate"));
    }
    let mut groups: BTreeMap<(String, String), Group> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.label().to_string(), r.env().to_string())).or_default();
        match (r.status, r.final_score(FINAL_FRACTION)) {
            (RunStatus::Completed, Some(score)) => entry.0.push((r.seed, score)),
            _ => entry.1 += 1,
        }
    }
    let mut strata = Vec::new();
    for (k, ((label, env), (mut runs, failed))) in groups.into_iter().enumerate() {
        if runs.len() < 2 {
            return Err(invalid(format!(
                "stratum ({label}, {env}) has {} completed runs; need at least 2",
                runs.len()
            )));
        }
        runs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let scores: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let mut rng = SplitMix64::stream(resample_seed, k as u64);
        let summary = bootstrap(std::slice::from_ref(&scores), resamples, confidence, &mut rng)?;
        strata.push(StratumReport {
            label,
            env,
            seeds: runs.iter().map(|r| r.0).collect(),
            scores,
            failed_runs: failed,
            summary,
        });
    }
    let mut by_label: BTreeMap<&str, Vec<&StratumReport>> = BTreeMap::new();
    for s in &strata {
        by_label.entry(&s.label).or_default().push(s);
    }
    let mut labels = Vec::new();
    for (k, (label, group)) in by_label.into_iter().enumerate() {
        let data: Vec<Vec<f64>> = group.iter().map(|s| s.scores.clone()).collect();
        let mut rng = SplitMix64::stream(resample_seed, 0x1_0000 + k as u64);
        labels.push(LabelReport {
            label: label.to_string(),
            envs: group.iter().map(|s| s.env.clone()).collect(),
            summary: bootstrap(&data, resamples, confidence, &mut rng)?,
        });
    }
    Ok(AggregateReport {
        final_window: format!(
            "mean episode_return_mean over the last {}% of logged intervals",
            FINAL_FRACTION * 100.0
        ),
        optimality_gap_reference: 1.0,
        resamples,
        confidence,
        resample_seed,
        strata,
        labels,
    })
}
