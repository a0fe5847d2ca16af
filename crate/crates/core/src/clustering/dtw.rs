use super::{assign_with_repair, check_k, plus_plus_seeds, ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use crate::rng::rng_from;

fn cost_matrix(x: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
    let (n, m) = (x.len(), y.len());
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let c = (x[i - 1] - y[j - 1]).powi(2);
            d[i][j] = c + d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
        }
    }
    d
}

/// Square root of the minimal summed squared difference along a warping path.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("dtw series"));
    }
    Ok(cost_matrix(x, y)[x.len()][y.len()].sqrt())
}

/// Optimal warping path as `(i, j)` index pairs from `(0, 0)` to the ends.
pub fn dtw_path(x: &[f64], y: &[f64]) -> Result<Vec<(usize, usize)>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("dtw series"));
    }
    let d = cost_matrix(x, y);
    let (mut i, mut j) = (x.len(), y.len());
    let mut path = vec![(i - 1, j - 1)];
    while (i, j) != (1, 1) {
        let diag = d[i - 1][j - 1];
        let up = d[i - 1][j];
        let left = d[i][j - 1];
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i - 1, j - 1));
    }
    path.reverse();
    Ok(path)
}

/// One barycenter-averaging pass: every centroid point becomes the mean of
/// the member points warped onto it. Keeps the centroid length.
pub fn dba_update(centroid: &[f64], members: &[&[f64]]) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Ok(centroid.to_vec());
    }
    let mut sum = vec![0.0; centroid.len()];
    let mut count = vec![0usize; centroid.len()];
    for m in members {
        for (ci, mi) in dtw_path(centroid, m)? {
            sum[ci] += m[mi];
            count[ci] += 1;
        }
    }
    Ok(sum.iter().zip(count).map(|(s, c)| s / c as f64).collect())
}

const DBA_PASSES: usize = 5;

/// k-means under dynamic time warping with barycenter-averaged centroids.
/// Series may differ in length. The trace holds the summed squared DTW
/// distance to the updated centroids after every iteration.
pub fn tskmeans(series: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = series.len();
    check_k(n, k)?;
    if series.iter().any(Vec::is_empty) {
        return Err(Error::Empty("tskmeans series"));
    }
    let d2 = |a: &[f64], b: &[f64]| cost_matrix(a, b)[a.len()][b.len()];
    let mut rng = rng_from(seed);
    let seeds = plus_plus_seeds(n, k, |i, j| d2(&series[i], &series[j]), &mut rng);
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| series[i].clone()).collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut reseeds = Vec::new();
        let (new, _) = assign_with_repair(n, k, |i, c| d2(&series[i], &centroids[c]), |c, i| reseeds.push((c, i)));
        for (c, i) in reseeds {
            centroids[c] = series[i].clone();
        }
        let changed = new != labels;
        labels = new;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = (0..n).filter(|&i| labels[i] == c).map(|i| series[i].as_slice()).collect();
            for _ in 0..DBA_PASSES {
                *centroid = dba_update(centroid, &members)?;
            }
        }
        trace.push((0..n).map(|i| d2(&series[i], &centroids[labels[i]])).sum());
        if !changed {
            break;
        }
    }
    Ok(ClusterAssignment {
        method: ClusterMethod::TsKmeans,
        labels,
        k,
        centroids: Some(centroids),
        objective_trace: trace,
    })
}
