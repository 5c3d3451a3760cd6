//! Pairwise distances between load models, measured on their post-fault
//! response curves, plus the parameter-space baseline.
//!
//! The PFR distance is a plain sum of squared sample differences over all
//! scenarios (no square root, no dt weighting, no sample-count
//! normalization), so values are squared distances. The cutoff selection in
//! the clustering stage is quantile-based, which absorbs any monotone
//! rescaling; nothing downstream needs the triangle inequality.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::load_model::CompositeLoadModel;
use crate::pfr::PfrBundle;

/// Dense symmetric distance matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds from raw row-major values, validating the invariants
    /// (symmetry, zero diagonal, finite non-negative entries).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Parse(format!(
                "distance matrix needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let m = DistanceMatrix { n, values };
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(Error::Parse(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let d = m.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Parse(format!("invalid distance at ({i},{j}): {d}")));
                }
                if d != m.get(j, i) {
                    return Err(Error::Parse(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Row-major backing slice.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All off-diagonal distances, each unordered pair once.
    pub fn pooled_off_diagonal(&self) -> Vec<f64> {
        let mut pool = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                pool.push(self.get(i, j));
            }
        }
        pool
    }
}

/// Squared-L2 distance between two PFR bundles (sum over scenarios and
/// samples of squared P and Q differences).
pub fn pfr_distance(a: &PfrBundle, b: &PfrBundle) -> Result<f64> {
    a.grid_compatible(b)?;
    let mut acc = 0.0;
    for (ca, cb) in a.curves.iter().zip(&b.curves) {
        for k in 0..ca.p_values.len() {
            let dp = ca.p_values[k] - cb.p_values[k];
            let dq = ca.q_values[k] - cb.q_values[k];
            acc += dp * dp + dq * dq;
        }
    }
    Ok(acc)
}

/// Pairwise PFR distances over a model set. Only the upper triangle is
/// computed and mirrored; rows are evaluated in parallel but every entry is
/// an independent sequential sum, so the result does not depend on the
/// worker count.
pub fn build_distance_matrix(bundles: &[PfrBundle]) -> Result<DistanceMatrix> {
    let n = bundles.len();
    for (i, b) in bundles.iter().enumerate().skip(1) {
        bundles[0]
            .grid_compatible(b)
            .map_err(|e| Error::GridMismatch(format!("bundles 0 and {i} incompatible: {e}")))?;
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| pfr_distance(&bundles[i], &bundles[j]).expect("grids pre-checked"))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Euclidean distance between raw parameter vectors [p, Pas, Prs, Pd].
pub fn parameter_distance(a: &CompositeLoadModel, b: &CompositeLoadModel) -> f64 {
    euclidean(&a.parameter_vector(), &b.parameter_vector())
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise Euclidean distances over arbitrary parameter vectors.
pub fn build_parameter_matrix(vectors: &[Vec<f64>]) -> DistanceMatrix {
    let n = vectors.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&vectors[i], &vectors[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfr::PfrCurve;

    fn bundle(series: &[(Vec<f64>, Vec<f64>)]) -> PfrBundle {
        PfrBundle {
            curves: series
                .iter()
                .map(|(p, q)| PfrCurve {
                    times: (0..p.len()).map(|k| k as f64 * 0.01).collect(),
                    p_values: p.clone(),
                    q_values: q.clone(),
                })
                .collect(),
        }
    }

    fn random_bundle(rng: &mut impl rand::Rng, h: usize, len: usize) -> PfrBundle {
        let series: Vec<_> = (0..h)
            .map(|_| {
                (
                    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        bundle(&series)
    }

    #[test]
    fn identical_bundles_have_zero_distance() {
        let a = bundle(&[(vec![1.0, 2.0], vec![0.5, 0.5])]);
        assert_eq!(pfr_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_sums_squares() {
        // 0.1 pu offset in P over 500 samples of one scenario -> 5.0.
        let p: Vec<f64> = vec![1.0; 500];
        let q: Vec<f64> = vec![0.3; 500];
        let a = bundle(&[(p.clone(), q.clone())]);
        let p2: Vec<f64> = p.iter().map(|x| x + 0.1).collect();
        let b = bundle(&[(p2, q)]);
        let d = pfr_distance(&a, &b).unwrap();
        assert!((d - 5.0).abs() < 1e-9, "d = {d}");
    }

    #[test]
    fn distance_is_symmetric_on_random_bundles() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_bundle(&mut rng, 2, 40);
            let b = random_bundle(&mut rng, 2, 40);
            assert_eq!(pfr_distance(&a, &b).unwrap(), pfr_distance(&b, &a).unwrap());
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let a = bundle(&[(vec![1.0, 2.0], vec![0.0, 0.0])]);
        let b = bundle(&[(vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0])]);
        assert!(matches!(pfr_distance(&a, &b), Err(Error::GridMismatch(_))));
        let c = bundle(&[
            (vec![1.0, 2.0], vec![0.0, 0.0]),
            (vec![1.0, 2.0], vec![0.0, 0.0]),
        ]);
        assert!(matches!(pfr_distance(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn matrix_matches_naive_double_loop() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let bundles: Vec<_> = (0..5).map(|_| random_bundle(&mut rng, 3, 25)).collect();
        let m = build_distance_matrix(&bundles).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j {
                    0.0
                } else {
                    pfr_distance(&bundles[i], &bundles[j]).unwrap()
                };
                assert_eq!(m.get(i, j), expect);
            }
        }
    }

    #[test]
    fn duplicate_bundle_collapses() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut bundles: Vec<_> = (0..4).map(|_| random_bundle(&mut rng, 1, 20)).collect();
        bundles.push(bundles[0].clone());
        let m = build_distance_matrix(&bundles).unwrap();
        assert_eq!(m.get(0, 4), 0.0);
        for j in 0..5 {
            assert_eq!(m.get(0, j), m.get(4, j));
        }
    }

    #[test]
    fn single_bundle_gives_zero_matrix() {
        let a = bundle(&[(vec![1.0], vec![1.0])]);
        let m = build_distance_matrix(&[a]).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn scaling_both_bundles_scales_distance_quadratically() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = random_bundle(&mut rng, 2, 30);
        let b = random_bundle(&mut rng, 2, 30);
        let scale = |bu: &PfrBundle, c: f64| PfrBundle {
            curves: bu
                .curves
                .iter()
                .map(|cv| PfrCurve {
                    times: cv.times.clone(),
                    p_values: cv.p_values.iter().map(|x| c * x).collect(),
                    q_values: cv.q_values.iter().map(|x| c * x).collect(),
                })
                .collect(),
        };
        let d1 = pfr_distance(&a, &b).unwrap();
        let d2 = pfr_distance(&scale(&a, 3.0), &scale(&b, 3.0)).unwrap();
        assert!((d2 - 9.0 * d1).abs() < 1e-9 * d2.max(1.0));
    }

    #[test]
    fn parameter_distance_cases() {
        let m = CompositeLoadModel {
            dyn_proportion: 0.5,
            active_static: crate::load_model::ZipParams {
                z_coeff: 0.2,
                i_coeff: 0.3,
                p_coeff: 0.5,
            },
            reactive_static: crate::load_model::ZipParams {
                z_coeff: 0.1,
                i_coeff: 0.4,
                p_coeff: 0.5,
            },
            motor: crate::load_model::MotorParams {
                x_open: 2.5,
                x_transient: 0.2,
                t_open: 1.0,
                inertia: 1.0,
                torque_mech: 0.5,
                omega_sync: crate::load_model::OMEGA_SYNC_60HZ,
            },
            nominal_p: 1.0,
            nominal_q: 0.3,
        };
        assert_eq!(parameter_distance(&m, &m), 0.0);
        let mut shifted = m.clone();
        shifted.dyn_proportion += 0.1;
        assert!((parameter_distance(&m, &shifted) - 0.1).abs() < 1e-12);
        // random pair against a hand-rolled sqrt of sum of squares
        let mut other = m.clone();
        other.motor.x_open = 3.0;
        other.active_static.z_coeff = 0.25;
        let va = m.parameter_vector();
        let vb = other.parameter_vector();
        let expect = va
            .iter()
            .zip(&vb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert_eq!(parameter_distance(&m, &other), expect);
    }
}
