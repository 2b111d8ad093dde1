//! Rank-1 tracker vs. recomputing the inverse at every step.

use std::time::Instant;

use serde::Serialize;

use crate::ellipse::{add_outer, invert_dense, EllipticalTracker};
use crate::error::{invalid, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub dim: usize,
    pub steps: usize,
    pub repeats: usize,
    pub rank1_updates_per_sec: f64,
    pub naive_updates_per_sec: f64,
    pub speedup: f64,
    /// Largest bonus difference between the two paths over all repeats.
    pub max_bonus_diff: f64,
}

fn features(dim: usize, steps: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let s = 1.0 / (dim as f64).sqrt();
    (0..steps)
        .map(|_| (0..dim).map(|_| rng.normal() * s).collect())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Minimum wall time per measurement; short streams are replayed until it
/// is reached so that small dimensions are not dominated by timer noise.
const MIN_MEASURE_SECS: f64 = 0.05;

/// Runs `pass` until at least [`MIN_MEASURE_SECS`] have elapsed and returns
/// seconds per pass along with the last pass's output.
fn time_per_pass<T>(mut pass: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let mut passes = 0u32;
    loop {
        let out = pass()?;
        passes += 1;
        let t = start.elapsed().as_secs_f64();
        if t >= MIN_MEASURE_SECS {
            return Ok((t / passes as f64, out));
        }
    }
}

fn rank1_pass(stream: &[Vec<f64>], dim: usize, ridge: f64) -> Result<Vec<f64>> {
    let mut tracker = EllipticalTracker::new(dim, ridge)?;
    stream.iter().map(|phi| tracker.update(phi)).collect()
}

fn naive_pass(stream: &[Vec<f64>], dim: usize, ridge: f64) -> Result<Vec<f64>> {
    let mut c = vec![0.0; dim * dim];
    for i in 0..dim {
        c[i * dim + i] = ridge;
    }
    let mut inv = invert_dense(c.clone(), dim)?;
    let mut out = Vec::with_capacity(stream.len());
    for phi in stream {
        let mut b = 0.0;
        for i in 0..dim {
            let row = &inv[i * dim..(i + 1) * dim];
            b += phi[i] * row.iter().zip(phi).map(|(a, p)| a * p).sum::<f64>();
        }
        out.push(b.max(0.0));
        add_outer(&mut c, phi);
        inv = invert_dense(c.clone(), dim)?;
    }
    Ok(out)
}

/// Times `bonus + update` over the same feature stream on both paths. The
/// naive path keeps `C` and re-inverts it by Gauss-Jordan after every update.
pub fn bench_ellipse(dim: usize, steps: usize, repeats: usize, ridge: f64) -> Result<BenchReport> {
    if dim < 2 || steps < 10 || repeats < 1 {
        return Err(invalid("bench needs dim ≥ 2, steps ≥ 10, repeats ≥ 1"));
    }
    let mut rank1_t = Vec::with_capacity(repeats);
    let mut naive_t = Vec::with_capacity(repeats);
    let mut worst: f64 = 0.0;
    for r in 0..repeats {
        let stream = features(dim, steps, 0xBE7C + r as u64);
        let (tr, fast) = time_per_pass(|| rank1_pass(&stream, dim, ridge))?;
        let (tn, slow) = time_per_pass(|| naive_pass(&stream, dim, ridge))?;
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
        rank1_t.push(tr);
        naive_t.push(tn);
    }
    let (tr, tn) = (median(rank1_t).max(1e-12), median(naive_t).max(1e-12));
    Ok(BenchReport {
        dim,
        steps,
        repeats,
        rank1_updates_per_sec: steps as f64 / tr,
        naive_updates_per_sec: steps as f64 / tn,
        speedup: tn / tr,
        max_bonus_diff: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dim_paths_agree() {
        let r = bench_ellipse(2, 50, 2, 0.1).unwrap();
        assert!(r.max_bonus_diff <= 1e-9, "{}", r.max_bonus_diff);
        assert!(r.speedup > 0.0);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(bench_ellipse(1, 50, 1, 0.1).is_err());
        assert!(bench_ellipse(4, 5, 1, 0.1).is_err());
    }
}
