use std::collections::BinaryHeap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::rng::from_seed;

const JITTER: f64 = 1e-12;

/// Static kd-tree over row-major points, built by median splits.
struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    order: Vec<usize>,
}

struct Far(f64, usize);

impl PartialEq for Far {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Far {}

impl PartialOrd for Far {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Far {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [f64], dim: usize) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        Self::split(points, dim, &mut order, 0);
        KdTree { points, dim, order }
    }

    fn split(points: &[f64], dim: usize, idx: &mut [usize], depth: usize) {
        if idx.len() <= 1 {
            return;
        }
        let axis = depth % dim;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| points[a * dim + axis].total_cmp(&points[b * dim + axis]));
        let (lo, hi) = idx.split_at_mut(mid);
        Self::split(points, dim, lo, depth + 1);
        Self::split(points, dim, &mut hi[1..], depth + 1);
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Squared distance from point `i` to its `k`-th nearest other point.
    fn kth_distance2(&self, i: usize, k: usize) -> f64 {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.order.len(), 0, i, k, &mut heap);
        heap.peek().map_or(f64::INFINITY, |f| f.0)
    }

    fn search(&self, lo: usize, hi: usize, depth: usize, q: usize, k: usize, heap: &mut BinaryHeap<Far>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.order[mid];
        let axis = depth % self.dim;
        if p != q {
            let d2: f64 = self.point(p).iter().zip(self.point(q)).map(|(a, b)| (a - b) * (a - b)).sum();
            if heap.len() < k {
                heap.push(Far(d2, p));
            } else if d2 < heap.peek().unwrap().0 {
                heap.pop();
                heap.push(Far(d2, p));
            }
        }
        let delta = self.point(q)[axis] - self.point(p)[axis];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, depth + 1, q, k, heap);
        if heap.len() < k || delta * delta < heap.peek().unwrap().0 {
            self.search(far.0, far.1, depth + 1, q, k, heap);
        }
    }
}

/// Distance from every point to its `k`-th nearest neighbor (Euclidean).
pub fn kth_neighbor_distances(points: &[f64], dim: usize, k: usize) -> Vec<f64> {
    let n = points.len() / dim;
    if dim == 1 {
        let mut sorted: Vec<(f64, usize)> = points.iter().copied().zip(0..).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = vec![0.0; n];
        let mut cand = Vec::with_capacity(2 * k);
        for (pos, &(v, i)) in sorted.iter().enumerate() {
            cand.clear();
            let lo = pos.saturating_sub(k);
            let hi = (pos + k + 1).min(n);
            cand.extend(sorted[lo..hi].iter().enumerate().filter(|(j, _)| lo + j != pos).map(|(_, s)| (s.0 - v).abs()));
            cand.select_nth_unstable_by(k - 1, f64::total_cmp);
            out[i] = cand[k - 1];
        }
        out
    } else {
        let tree = KdTree::build(points, dim);
        (0..n).map(|i| tree.kth_distance2(i, k).sqrt()).collect()
    }
}

/// Log-volume of the Euclidean ball of unit diameter in `d` dimensions.
fn log_unit_diameter_ball(d: usize) -> f64 {
    let d = d as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(1.0 + 0.5 * d) - d * std::f64::consts::LN_2
}

/// Kozachenko–Leonenko differential entropy from `n × dim` row-major
/// samples: `−ψ(k) + ψ(n) + ln c_d + (d/n) Σ ln ε_i`, with `ε_i` twice the
/// distance to the `k`-th neighbor and `c_d` the volume of the ball of
/// diameter one. Coincident points get a tiny deterministic jitter.
pub fn kozachenko_leonenko_entropy(samples: &[f64], dim: usize, k: usize) -> Result<f64> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::shape("kozachenko_leonenko", format!("{} values for dimension {dim}", samples.len())));
    }
    let n = samples.len() / dim;
    if k == 0 || n <= k {
        return Err(Error::validation(format!("need n > k >= 1, got n = {n}, k = {k}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite sample"));
    }
    let mut dist = kth_neighbor_distances(samples, dim, k);
    if dist.iter().any(|d| *d <= 0.0) {
        let mut rng = from_seed(0x6b6c);
        let jittered: Vec<f64> = samples
            .iter()
            .map(|v| v + JITTER * (1.0 + v.abs()) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        dist = kth_neighbor_distances(&jittered, dim, k);
        if dist.iter().any(|d| *d <= 0.0) {
            return Err(Error::numerical("duplicate points survive jitter"));
        }
    }
    let mean_log = dist.iter().map(|r| (2.0 * r).ln()).sum::<f64>() / n as f64;
    Ok(-digamma(k as f64) + digamma(n as f64) + log_unit_diameter_ball(dim) + dim as f64 * mean_log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(points: &[f64], dim: usize, k: usize) -> Vec<f64> {
        let n = points.len() / dim;
        (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        (0..dim)
                            .map(|c| (points[i * dim + c] - points[j * dim + c]).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    }

    #[test]
    fn neighbor_search_matches_brute_force() {
        let mut rng = from_seed(4);
        for dim in [1, 2, 3] {
            let pts: Vec<f64> = (0..300 * dim).map(|_| rng.random::<f64>()).collect();
            for k in [1, 3] {
                assert_eq!(kth_neighbor_distances(&pts, dim, k), brute(&pts, dim, k));
            }
        }
    }

    #[test]
    fn ball_volume_constants() {
        assert!((log_unit_diameter_ball(1) - 0.0).abs() < 1e-12);
        assert!((log_unit_diameter_ball(2) - (std::f64::consts::PI / 4.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(kozachenko_leonenko_entropy(&[0.0, 1.0, 2.0], 1, 3).is_err());
    }

    #[test]
    fn duplicates_are_jittered() {
        let v = vec![0.5; 10];
        assert!(kozachenko_leonenko_entropy(&v, 1, 1).unwrap().is_finite());
    }
}
