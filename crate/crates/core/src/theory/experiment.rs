use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bandit::{LinearBanditState, Policy};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub dims: Vec<usize>,
    /// Rounds `k = rounds_per_dim · d`.
    pub rounds_per_dim: usize,
    pub sigma: f64,
    pub m: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            dims: vec![4, 8, 16, 32],
            rounds_per_dim: 40,
            sigma: 0.5,
            m: 1.0,
            replicates: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub policy: Policy,
    pub d: usize,
    pub k: usize,
    pub replicate: usize,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ErrorRow>,
    /// Mean error per dimension, in `dims` order.
    pub greedy_mean: Vec<f64>,
    pub random_mean: Vec<f64>,
    /// Least-squares slopes of log mean error against log d.
    pub greedy_slope: f64,
    pub random_slope: f64,
    pub slope_difference: f64,
    /// Random over greedy mean error per dimension.
    pub ratios: Vec<f64>,
    pub ratio_spearman: f64,
}

/// Runs one policy for `rounds` rounds from `state`, returning the error
/// after each round listed in `checkpoints` (ascending). Noise for round `k`
/// comes from the stream `keys ++ [1, k]` and random designs from
/// `keys ++ [2, k]`, so two policies given the same keys see the same noise.
pub fn run_policy(
    mut state: LinearBanditState,
    policy: Policy,
    rounds: usize,
    checkpoints: &[usize],
    seed: u64,
    keys: &[u64],
) -> Result<Vec<f64>> {
    let key = |tag: u64, k: usize| {
        let mut v = keys.to_vec();
        v.extend([tag, k as u64]);
        v
    };
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    while next.peek().is_some_and(|&&c| c == 0) {
        out.push(state.error()?);
        next.next();
    }
    for k in 1..=rounds {
        let theta = match policy {
            Policy::Greedy => state.select_greedy()?,
            Policy::Random => state.select_random(&mut stream(seed, &key(2, k))),
        };
        state.observe(&theta, &mut stream(seed, &key(1, k)))?;
        while next.peek().is_some_and(|&&c| c == k) {
            out.push(state.error()?);
            next.next();
        }
    }
    Ok(out)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            r[p] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Greedy and random design on shared `(Ψ, z*, noise)` per replicate, for
/// every dimension in the config.
pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.dims.len() < 2 || cfg.dims.contains(&0) || cfg.replicates == 0 || cfg.rounds_per_dim == 0 {
        return Err(Error::validation("need at least two positive dims, replicates >= 1 and rounds >= 1"));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&d| (0..cfg.replicates).map(move |r| (d, r)))
        .collect();
    let per_job: Vec<Vec<ErrorRow>> = jobs
        .par_iter()
        .map(|&(d, rep)| {
            let keys = [purpose::THEORY, d as u64, rep as u64];
            let mut init = stream(cfg.seed, &[purpose::THEORY, d as u64, rep as u64, 0]);
            let state = LinearBanditState::random(d, cfg.m, cfg.sigma, &mut init)?;
            let k = cfg.rounds_per_dim * d;
            [Policy::Greedy, Policy::Random]
                .into_iter()
                .map(|policy| {
                    let err = run_policy(state.clone(), policy, k, &[k], cfg.seed, &keys)?[0];
                    Ok(ErrorRow {
                        policy,
                        d,
                        k,
                        replicate: rep,
                        error: err,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ErrorRow> = per_job.into_iter().flatten().collect();
    let mean = |p: Policy, d: usize| {
        let v: Vec<f64> = rows.iter().filter(|r| r.policy == p && r.d == d).map(|r| r.error).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let greedy_mean: Vec<f64> = cfg.dims.iter().map(|&d| mean(Policy::Greedy, d)).collect();
    let random_mean: Vec<f64> = cfg.dims.iter().map(|&d| mean(Policy::Random, d)).collect();
    let logd: Vec<f64> = cfg.dims.iter().map(|&d| (d as f64).ln()).collect();
    let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let greedy_slope = fit_slope(&logd, &ln(&greedy_mean));
    let random_slope = fit_slope(&logd, &ln(&random_mean));
    let ratios: Vec<f64> = random_mean.iter().zip(&greedy_mean).map(|(r, g)| r / g).collect();
    let dims_f: Vec<f64> = cfg.dims.iter().map(|&d| d as f64).collect();
    Ok(ScalingReport {
        rows,
        ratio_spearman: spearman(&dims_f, &ratios),
        greedy_mean,
        random_mean,
        greedy_slope,
        random_slope,
        slope_difference: random_slope - greedy_slope,
        ratios,
    })
}

pub const THEORY_CSV_HEADER: [&str; 5] = ["policy", "d", "k", "replicate", "error"];

pub fn write_theory_csv<W: Write>(out: W, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(THEORY_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.to_string(),
            r.d.to_string(),
            r.k.to_string(),
            r.replicate.to_string(),
            format!("{:e}", r.error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone_and_ties() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 5.0, 1.0]), vec![2.5, 2.5, 1.0]);
    }
}
