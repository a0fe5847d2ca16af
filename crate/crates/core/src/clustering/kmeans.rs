use super::{assign_with_repair, check_k, plus_plus_seeds, ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeding on equal-length series. The trace
/// holds the within-cluster sum of squares after every centroid update.
pub fn kmeans(series: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = series.len();
    check_k(n, k)?;
    let len = series[0].len();
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(Error::dim("kmeans series length", len, bad.len()));
    }
    let mut rng = rng_from(seed);
    let seeds = plus_plus_seeds(n, k, |i, j| sq_dist(&series[i], &series[j]), &mut rng);
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| series[i].clone()).collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (new, _) = assign_with_repair(
            n,
            k,
            |i, c| sq_dist(&series[i], &centroids[c]),
            |_, _| {},
        );
        let changed = new != labels;
        labels = new;
        centroids = means(series, &labels, k);
        trace.push(objective(series, &labels, &centroids));
        if !changed {
            break;
        }
    }
    Ok(ClusterAssignment {
        method: ClusterMethod::Kmeans,
        labels,
        k,
        centroids: Some(centroids),
        objective_trace: trace,
    })
}

fn means(series: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let len = series[0].len();
    let mut sums = vec![vec![0.0; len]; k];
    let mut counts = vec![0usize; k];
    for (s, &l) in series.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    for (sum, c) in sums.iter_mut().zip(counts) {
        sum.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

/// Within-cluster sum of squared Euclidean distances.
pub fn objective(series: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    series.iter().zip(labels).map(|(s, &l)| sq_dist(s, &centroids[l])).sum()
}
