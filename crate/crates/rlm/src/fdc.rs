//! Density-peaks clustering (Rodriguez-Laio style): cutoff selection,
//! densities, separation distances, center selection by the rho*delta
//! product, outlier detection, and single-pass assignment in density order.
//!
//! Every tie is broken deterministically by lower index: density ranks treat
//! the lower index as strictly denser, nearest-higher-density neighbors and
//! center selection prefer the lower index. Runs are therefore reproducible
//! bit-for-bit regardless of internal parallelism.

use rayon::prelude::*;

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// Outlier density threshold on the normalized rho scale (fewer than 0.1% of
/// points are neighbors).
pub const OUTLIER_RHO: f64 = 0.001;

/// Default neighbor fraction for the cutoff distance (the 1-2% rule).
pub const DEFAULT_NEIGHBOR_FRACTION: f64 = 0.015;

/// Cutoff distance plus a degeneracy flag (all off-diagonal distances equal).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcSelection {
    pub value: f64,
    pub degenerate: bool,
}

/// Per-element decision-graph quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionGraph {
    /// Neighbor count normalized by (n-1), in [0,1].
    pub rho: Vec<f64>,
    /// Distance to the nearest element of higher density (largest distance
    /// for the global density maximum).
    pub delta: Vec<f64>,
    /// Index of that nearest higher-density element; `None` only for the
    /// global density maximum.
    pub nhd: Vec<Option<usize>>,
}

impl DecisionGraph {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// rho*delta products used for center selection.
    pub fn gamma(&self) -> Vec<f64> {
        self.rho
            .iter()
            .zip(&self.delta)
            .map(|(r, d)| r * d)
            .collect()
    }
}

/// Final partition: seeds (centers then outliers) and the per-element
/// cluster id, which equals the seed's position in `centers ++ outliers`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterResult {
    pub centers: Vec<usize>,
    pub outliers: Vec<usize>,
    pub assignment: Vec<usize>,
    pub k_effective: usize,
}

/// Selects the cutoff distance as the `neighbor_fraction` quantile of the
/// pooled off-diagonal distances (q-th smallest with q = round(fraction*M),
/// M = n(n-1)/2), so the mean neighbor count is about fraction*n.
pub fn select_dc(d: &DistanceMatrix, neighbor_fraction: f64) -> Result<DcSelection> {
    let n = d.n();
    if n < 2 {
        return Err(Error::InvalidParam("select_dc needs n >= 2".into()));
    }
    if !(0.0..1.0).contains(&neighbor_fraction) || neighbor_fraction == 0.0 {
        return Err(Error::InvalidParam(format!(
            "neighbor_fraction must lie in (0,1), got {neighbor_fraction}"
        )));
    }
    let mut pool = d.pooled_off_diagonal();
    pool.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let degenerate = pool.first() == pool.last();
    let q = ((neighbor_fraction * pool.len() as f64).round() as usize).max(1);
    let q = q.min(pool.len());
    Ok(DcSelection {
        value: pool[q - 1],
        degenerate,
    })
}

/// Normalized density: the fraction of the other elements strictly closer
/// than the cutoff.
pub fn compute_density(d: &DistanceMatrix, d_c: f64) -> Vec<f64> {
    let n = d.n();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let count = (0..n).filter(|&j| j != i && d.get(i, j) < d_c).count();
            count as f64 / (n - 1) as f64
        })
        .collect()
}

/// Whether element `a` has strictly higher effective density than `b`
/// (ties broken by lower index).
#[inline]
fn denser(rho: &[f64], a: usize, b: usize) -> bool {
    rho[a] > rho[b] || (rho[a] == rho[b] && a < b)
}

/// Distance to the nearest higher-density element per the decision-graph
/// rules; the unique effective-density maximum takes its largest distance
/// and has no neighbor.
pub fn compute_delta(d: &DistanceMatrix, rho: &[f64]) -> DecisionGraph {
    let n = d.n();
    assert_eq!(rho.len(), n, "rho must come from the same matrix");
    if n == 1 {
        return DecisionGraph {
            rho: rho.to_vec(),
            delta: vec![0.0],
            nhd: vec![None],
        };
    }
    let results: Vec<(f64, Option<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if j == i || !denser(rho, j, i) {
                    continue;
                }
                let dij = d.get(i, j);
                best = match best {
                    None => Some((dij, j)),
                    Some((bd, bj)) if dij < bd || (dij == bd && j < bj) => Some((dij, j)),
                    keep => keep,
                };
            }
            match best {
                Some((dist, j)) => (dist, Some(j)),
                // the global effective-density maximum
                None => {
                    let dmax = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| d.get(i, j))
                        .fold(0.0f64, f64::max);
                    (dmax, None)
                }
            }
        })
        .collect();
    let (delta, nhd) = results.into_iter().unzip();
    DecisionGraph {
        rho: rho.to_vec(),
        delta,
        nhd,
    }
}

/// Indices of the `nc` largest rho*delta products, ties broken by larger
/// delta then lower index. The result is in that ranking order.
pub fn select_centers(g: &DecisionGraph, nc: usize) -> Result<Vec<usize>> {
    let n = g.len();
    if nc == 0 || nc > n {
        return Err(Error::InvalidParam(format!(
            "nc must lie in [1, {n}], got {nc}"
        )));
    }
    let gamma = g.gamma();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        gamma[b]
            .partial_cmp(&gamma[a])
            .unwrap()
            .then(g.delta[b].partial_cmp(&g.delta[a]).unwrap())
            .then(a.cmp(&b))
    });
    order.truncate(nc);
    Ok(order)
}

/// Non-center elements that are both extremely low-density (normalized rho
/// below [`OUTLIER_RHO`]) and further from denser points than the average
/// center separation. Each seeds its own singleton cluster.
pub fn detect_outliers(g: &DecisionGraph, centers: &[usize]) -> Vec<usize> {
    let mean_center_delta = centers.iter().map(|&c| g.delta[c]).sum::<f64>() / centers.len() as f64;
    (0..g.len())
        .filter(|i| {
            !centers.contains(i) && g.rho[*i] < OUTLIER_RHO && g.delta[*i] > mean_center_delta
        })
        .collect()
}

/// Assigns every element to a cluster. Seeds (centers, then outliers) take
/// cluster ids equal to their position; the rest are processed in decreasing
/// effective-density order and inherit the cluster of their nearest
/// higher-density neighbor. If the global density maximum is not a seed it
/// joins its nearest seed's cluster (tie by lower element index).
pub fn assign(
    g: &DecisionGraph,
    centers: &[usize],
    outliers: &[usize],
    d: &DistanceMatrix,
) -> Result<ClusterResult> {
    let n = g.len();
    if centers.is_empty() && outliers.is_empty() {
        return Err(Error::InvalidParam("no seeds to assign to".into()));
    }
    const UNASSIGNED: usize = usize::MAX;
    let mut assignment = vec![UNASSIGNED; n];
    let seeds: Vec<usize> = centers.iter().chain(outliers.iter()).copied().collect();
    for (cid, &s) in seeds.iter().enumerate() {
        assignment[s] = cid;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.rho[b].partial_cmp(&g.rho[a]).unwrap().then(a.cmp(&b)));
    for &i in &order {
        if assignment[i] != UNASSIGNED {
            continue;
        }
        assignment[i] = match g.nhd[i] {
            Some(j) => assignment[j],
            None => {
                let nearest = seeds
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        d.get(i, a)
                            .partial_cmp(&d.get(i, b))
                            .unwrap()
                            .then(a.cmp(&b))
                    })
                    .expect("seeds non-empty");
                assignment[nearest]
            }
        };
        debug_assert_ne!(assignment[i], UNASSIGNED, "nhd processed before its chain");
    }
    Ok(ClusterResult {
        centers: centers.to_vec(),
        outliers: outliers.to_vec(),
        assignment,
        k_effective: seeds.len(),
    })
}

/// The whole pipeline on one distance matrix: cutoff, densities, decision
/// graph, centers, outliers, assignment.
pub fn cluster(
    d: &DistanceMatrix,
    nc: usize,
    neighbor_fraction: f64,
) -> Result<(DecisionGraph, ClusterResult)> {
    let n = d.n();
    if n == 0 {
        return Err(Error::InvalidParam("empty distance matrix".into()));
    }
    if n == 1 {
        if nc != 1 {
            return Err(Error::InvalidParam(format!(
                "nc must be 1 for n = 1, got {nc}"
            )));
        }
        let g = DecisionGraph {
            rho: vec![0.0],
            delta: vec![0.0],
            nhd: vec![None],
        };
        let res = ClusterResult {
            centers: vec![0],
            outliers: vec![],
            assignment: vec![0],
            k_effective: 1,
        };
        return Ok((g, res));
    }
    let dc = select_dc(d, neighbor_fraction)?;
    let rho = compute_density(d, dc.value);
    let g = compute_delta(d, &rho);
    let centers = select_centers(&g, nc)?;
    let outliers = detect_outliers(&g, &centers);
    let result = assign(&g, &centers, &outliers, d)?;
    Ok((g, result))
}
