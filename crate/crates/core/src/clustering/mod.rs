//! Partitioning regions into training pools.

mod dtw;
mod kmeans;
mod shape;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use dtw::{dba_update, dtw, dtw_path, tskmeans};
pub use kmeans::kmeans;
pub use shape::{kshape, sbd, sbd_aligned, shape_extract, z_normalize};

use crate::error::{Error, Result};
use crate::panel::{minmax_scale, RegionId, WeeklyPanel, CF};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Vanilla,
    Geo,
    Kmeans,
    TsKmeans,
    Kshape,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 5] = [
        ClusterMethod::Vanilla,
        ClusterMethod::Geo,
        ClusterMethod::Kmeans,
        ClusterMethod::TsKmeans,
        ClusterMethod::Kshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::Vanilla => "vanilla",
            ClusterMethod::Geo => "geo",
            ClusterMethod::Kmeans => "kmeans",
            ClusterMethod::TsKmeans => "tskmeans",
            ClusterMethod::Kshape => "kshape",
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClusterMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown clustering method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub method: ClusterMethod,
    /// Cluster id per region, dense in `[0, k)`.
    pub labels: Vec<usize>,
    pub k: usize,
    pub centroids: Option<Vec<Vec<f64>>>,
    /// Objective after each iteration (iterative methods only).
    pub objective_trace: Vec<f64>,
}

impl ClusterAssignment {
    /// One singleton cluster per region.
    pub fn vanilla(n: usize) -> Self {
        ClusterAssignment {
            method: ClusterMethod::Vanilla,
            labels: (0..n).collect(),
            k: n,
            centroids: None,
            objective_trace: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Region indices per cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (r, &c) in self.labels.iter().enumerate() {
            out[c].push(r);
        }
        out
    }

    pub fn members_of(&self, region: usize) -> Vec<usize> {
        let c = self.labels[region];
        (0..self.labels.len()).filter(|&r| self.labels[r] == c).collect()
    }

    /// Canonical form of the partition, independent of label numbering.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut p: Vec<Vec<usize>> = self.clusters().into_iter().filter(|c| !c.is_empty()).collect();
        p.sort();
        p
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.k];
        for &l in &self.labels {
            if l >= self.k {
                return Err(Error::InvalidArgument(format!("cluster id {l} outside [0, {})", self.k)));
            }
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("cluster ids are not dense".into()));
        }
        Ok(())
    }
}

/// One cluster per distinct parent code; ids follow the sorted parent codes.
pub fn geo_cluster(regions: &[RegionId]) -> Result<ClusterAssignment> {
    let parents = regions
        .iter()
        .map(|r| {
            r.parent
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument(format!("region {} has no parent code", r.code)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: BTreeMap<&str, usize> = {
        let mut sorted = parents.clone();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.into_iter().enumerate().map(|(i, p)| (p, i)).collect()
    };
    Ok(ClusterAssignment {
        method: ClusterMethod::Geo,
        labels: parents.iter().map(|p| ids[p]).collect(),
        k: ids.len(),
        centroids: None,
        objective_trace: Vec::new(),
    })
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("series set"));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {n}]")));
    }
    Ok(())
}

/// k-means++ style seeding under an arbitrary distance: returns the indices of
/// `k` distinct seed series.
pub(crate) fn plus_plus_seeds(n: usize, k: usize, dist: impl Fn(usize, usize) -> f64, rng: &mut Rng) -> Vec<usize> {
    let mut seeds = vec![rng.gen_range(0..n)];
    let mut best: Vec<f64> = (0..n).map(|i| dist(i, seeds[0])).collect();
    while seeds.len() < k {
        let total: f64 = (0..n).filter(|i| !seeds.contains(i)).map(|i| best[i]).sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for i in (0..n).filter(|i| !seeds.contains(i)) {
                pick = Some(i);
                if u < best[i] {
                    break;
                }
                u -= best[i];
            }
            pick.unwrap()
        } else {
            // All remaining points coincide with a seed.
            let rest: Vec<usize> = (0..n).filter(|i| !seeds.contains(i)).collect();
            rest[rng.gen_range(0..rest.len())]
        };
        seeds.push(next);
        for i in 0..n {
            best[i] = best[i].min(dist(i, next));
        }
    }
    seeds
}

/// Assigns every point to its nearest centroid (ties to the lowest id), then
/// repairs empty clusters by moving in the point farthest from its centroid.
/// Returns the labels and each point's distance to its centroid.
pub(crate) fn assign_with_repair(
    n: usize,
    k: usize,
    dist: impl Fn(usize, usize) -> f64,
    mut reseed: impl FnMut(usize, usize),
) -> (Vec<usize>, Vec<f64>) {
    let mut labels = vec![0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (mut bc, mut bd) = (0, f64::INFINITY);
        for c in 0..k {
            let v = dist(i, c);
            if v < bd {
                bd = v;
                bc = c;
            }
        }
        labels[i] = bc;
        d[i] = bd;
    }
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let far = (0..n)
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| d[a].total_cmp(&d[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a cluster with two members");
        reseed(empty, far);
        labels[far] = empty;
        d[far] = 0.0;
    }
    (labels, d)
}

/// Min-max scaled CF curves of every region over the panel's span.
pub fn scaled_case_curves(panel: &WeeklyPanel) -> Result<Vec<Vec<f64>>> {
    let f = panel.feature_index(CF)?;
    (0..panel.num_regions())
        .map(|r| minmax_scale(&panel.series(r, f)))
        .collect()
}

/// Clusters the regions of a training panel. `k` is capped at the number of
/// regions.
pub fn cluster_panel(panel: &WeeklyPanel, method: ClusterMethod, k: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = panel.num_regions();
    let k = k.min(n);
    match method {
        ClusterMethod::Vanilla => Ok(ClusterAssignment::vanilla(n)),
        ClusterMethod::Geo => geo_cluster(panel.regions()),
        ClusterMethod::Kmeans => kmeans(&scaled_case_curves(panel)?, k, max_iter, seed),
        ClusterMethod::TsKmeans => tskmeans(&scaled_case_curves(panel)?, k, max_iter, seed),
        ClusterMethod::Kshape => kshape(&scaled_case_curves(panel)?, k, max_iter, seed),
    }
}

/// CSV export: `region,method,cluster_id`.
pub fn write_assignment_csv<W: Write>(out: W, regions: &[RegionId], a: &ClusterAssignment) -> Result<()> {
    if regions.len() != a.labels.len() {
        return Err(Error::dim("assignment regions", regions.len(), a.labels.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "method", "cluster_id"])?;
    for (r, l) in regions.iter().zip(&a.labels) {
        w.write_record([r.code.as_str(), a.method.name(), &l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
