use nalgebra::{DMatrix, SymmetricEigen};

use super::{assign_with_repair, check_k, plus_plus_seeds, ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use crate::nn::dot;
use crate::rng::rng_from;

/// Zero mean, unit population standard deviation; constant series become zeros.
pub fn z_normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Shape-based distance and the shift `s` at which `y[i − s]` best matches
/// `x[i]` (positions outside `y` count as zero).
pub fn sbd_aligned(x: &[f64], y: &[f64]) -> Result<(f64, isize)> {
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidArgument("shape-based distance of a zero-norm series".into()));
    }
    let (lx, ly) = (x.len() as isize, y.len() as isize);
    let mut best = (f64::NEG_INFINITY, 0isize);
    for s in -(ly - 1)..lx {
        let lo = s.max(0);
        let hi = lx.min(ly + s);
        let cc: f64 = (lo..hi).map(|i| x[i as usize] * y[(i - s) as usize]).sum();
        if cc > best.0 {
            best = (cc, s);
        }
    }
    let d = 1.0 - best.0 / (nx * ny);
    Ok((d.clamp(0.0, 2.0), best.1))
}

/// `1 − max_s CC_s(x, y) / (‖x‖‖y‖)` over all zero-padded shifts.
pub fn sbd(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(sbd_aligned(x, y)?.0)
}

/// Zero-norm curves carry no shape; treat them as uncorrelated with anything.
fn sbd_or_uncorrelated(x: &[f64], y: &[f64]) -> f64 {
    sbd(x, y).unwrap_or(1.0)
}

fn shift(y: &[f64], s: isize, len: usize) -> Vec<f64> {
    (0..len as isize)
        .map(|i| {
            let j = i - s;
            if j >= 0 && (j as usize) < y.len() {
                y[j as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Centroid of equal-length members: each is aligned to `reference`,
/// z-normalized, and the unit eigenvector of the largest eigenvalue of
/// `Qᵀ S Q` is taken, signed to correlate positively with the members.
pub fn shape_extract(members: &[&[f64]], reference: &[f64]) -> Vec<f64> {
    let len = reference.len();
    let aligned: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            let a = match sbd_aligned(reference, m) {
                Ok((_, s)) => shift(m, s, len),
                Err(_) => m.to_vec(),
            };
            z_normalize(&a)
        })
        .collect();
    let mut s = DMatrix::<f64>::zeros(len, len);
    for a in &aligned {
        for i in 0..len {
            for j in 0..len {
                s[(i, j)] += a[i] * a[j];
            }
        }
    }
    if s.iter().all(|v| *v == 0.0) {
        return vec![0.0; len];
    }
    let q = DMatrix::<f64>::identity(len, len) - DMatrix::<f64>::from_element(len, len, 1.0 / len as f64);
    let m = q.transpose() * s * &q;
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.imax();
    let mut c: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let agreement: f64 = aligned.iter().map(|a| dot(&c, a)).sum();
    if agreement < 0.0 {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    c
}

/// k-shape: z-normalized, zero-padded series clustered by alternating SBD
/// assignment and shape extraction. The trace holds the summed SBD to the
/// updated centroids after every iteration.
pub fn kshape(series: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = series.len();
    check_k(n, k)?;
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("kshape series"));
    }
    let xs: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let mut z = z_normalize(s);
            z.resize(len, 0.0);
            z
        })
        .collect();
    let mut rng = rng_from(seed);
    let seeds = plus_plus_seeds(n, k, |i, j| sbd_or_uncorrelated(&xs[i], &xs[j]), &mut rng);
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| xs[i].clone()).collect();
    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut reseeds = Vec::new();
        let (new, _) = assign_with_repair(
            n,
            k,
            |i, c| sbd_or_uncorrelated(&centroids[c], &xs[i]),
            |c, i| reseeds.push((c, i)),
        );
        for (c, i) in reseeds {
            centroids[c] = xs[i].clone();
        }
        let changed = new != labels;
        labels = new;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&[f64]> = (0..n).filter(|&i| labels[i] == c).map(|i| xs[i].as_slice()).collect();
            *centroid = shape_extract(&members, centroid);
        }
        trace.push((0..n).map(|i| sbd_or_uncorrelated(&centroids[labels[i]], &xs[i])).sum());
        if !changed {
            break;
        }
    }
    Ok(ClusterAssignment {
        method: ClusterMethod::Kshape,
        labels,
        k,
        centroids: Some(centroids),
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::tests::{canonical, two_partitions};
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Direct enumeration: every shift, explicit zero padding.
    fn sbd_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() + y.len();
        let mut best = f64::NEG_INFINITY;
        for s in 0..n {
            let mut padded = vec![0.0; 2 * n];
            for (i, v) in y.iter().enumerate() {
                padded[s + i] = *v;
            }
            let cc: f64 = x.iter().enumerate().map(|(i, v)| v * padded[i + y.len()]).sum();
            best = best.max(cc);
        }
        1.0 - best / (norm(x) * norm(y))
    }

    #[test]
    fn spot_values() {
        let x = [1.0, 3.0, -2.0, 0.5];
        assert!(sbd(&x, &x).unwrap().abs() < 1e-15);
        // Exact anti-correlation is only reachable when no other shift overlaps.
        assert_eq!(sbd(&[1.0], &[-1.0]).unwrap(), 2.0);
        assert_eq!(sbd(&[3.0], &[-0.5]).unwrap(), 2.0);
        assert!((sbd(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() - (1.0 + 3.0 / 14.0)).abs() < 1e-15);
        let pulse = [0.0, 1.0, 0.0, 0.0, 0.0];
        let shifted = [0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(sbd(&pulse, &shifted).unwrap().abs() < 1e-15);
        assert!(sbd(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matches_shift_enumeration() {
        let mut rng = rng_from(11);
        for _ in 0..50 {
            let x: Vec<f64> = (0..rng.gen_range(1..9)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..rng.gen_range(1..9)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!((sbd(&x, &y).unwrap() - sbd_oracle(&x, &y).clamp(0.0, 2.0)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(x in prop::collection::vec(-5.0f64..5.0, 1..10),
                                 y in prop::collection::vec(-5.0f64..5.0, 1..10)) {
            prop_assume!(norm(&x) > 1e-6 && norm(&y) > 1e-6);
            let a = sbd(&x, &y).unwrap();
            let b = sbd(&y, &x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&a));
        }

        #[test]
        fn scale_invariant(x in prop::collection::vec(-5.0f64..5.0, 2..10), c in 0.1f64..10.0) {
            prop_assume!(norm(&x) > 1e-6);
            let y: Vec<f64> = x.iter().map(|v| v * c).collect();
            prop_assert!(sbd(&x, &y).unwrap() < 1e-12);
        }
    }

    fn bump(len: usize, at: usize, width: f64) -> Vec<f64> {
        (0..len).map(|t| (-((t as f64 - at as f64) / width).powi(2)).exp()).collect()
    }

    fn ramp(len: usize, up: bool) -> Vec<f64> {
        (0..len).map(|t| if up { t as f64 } else { (len - t) as f64 }).collect()
    }

    /// Within-cluster sum of pairwise SBD over z-normalized series.
    fn pairwise_cost(xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut c = 0.0;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                if labels[i] == labels[j] {
                    c += sbd(&z_normalize(&xs[i]), &z_normalize(&xs[j])).unwrap();
                }
            }
        }
        c
    }

    #[test]
    fn k1_centroid_has_unit_norm() {
        let s = vec![bump(10, 3, 1.5), bump(10, 5, 1.5), bump(10, 6, 1.5)];
        let a = kshape(&s, 1, 20, 0).unwrap();
        assert_eq!(a.partition(), vec![vec![0, 1, 2]]);
        let c = &a.centroids.unwrap()[0];
        assert!((norm(c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separates_shapes_regardless_of_shift() {
        let mut hits = 0;
        for seed in 0..20 {
            let mut rng = rng_from(seed + 100);
            let mut s = Vec::new();
            let mut truth = Vec::new();
            for i in 0..8 {
                let noise: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.02..0.02)).collect();
                let base = if i % 2 == 0 { bump(16, rng.gen_range(4..12), 1.5) } else { ramp(16, true).iter().map(|v| v / 16.0).collect() };
                s.push(base.iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<_>>());
                truth.push(i % 2);
            }
            let a = kshape(&s, 2, 50, seed).unwrap();
            let best = two_partitions(8)
                .min_by(|a, b| pairwise_cost(&s, a).total_cmp(&pairwise_cost(&s, b)))
                .unwrap();
            if a.partition() == canonical(&best) && a.partition() == canonical(&truth) {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn amplitude_scaling_does_not_change_assignment() {
        let s = vec![bump(12, 3, 1.0), bump(12, 8, 1.0), ramp(12, true), ramp(12, false), bump(12, 5, 1.0)];
        let scaled: Vec<Vec<f64>> = s.iter().enumerate().map(|(i, x)| x.iter().map(|v| v * (i as f64 + 0.5) * 7.0).collect()).collect();
        let a = kshape(&s, 2, 30, 4).unwrap();
        let b = kshape(&scaled, 2, 30, 4).unwrap();
        assert_eq!(a.partition(), b.partition());
    }

    #[test]
    fn unequal_lengths_and_flat_series() {
        let s = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.0], vec![2.0; 4], vec![1.0, 2.0, 3.0, 4.0, 5.0]];
        let a = kshape(&s, 2, 30, 0).unwrap();
        a.validate().unwrap();
        assert!(kshape(&s, 5, 30, 0).is_err());
    }
}
