//! Small unsupervised routines: Lloyd k-means over flat row-major data and a
//! power-iteration principal axis.
//!
//! Codebook fitting and key derivation both sit on top of these. Every entry
//! point is deterministic given its arguments: nearest-centroid ties break
//! toward the lowest index, and any randomness comes from a caller-provided
//! seed.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// How the initial centroids are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Deterministic spread: the first centre is the point farthest from the
    /// data mean, each later centre the point farthest from all chosen ones.
    FarthestFirst,
    /// k-means++ sampling driven by a seeded generator.
    PlusPlus { seed: u64 },
    /// Caller-provided starting centroids, row-major `k * dim`.
    Explicit { centroids: Vec<f64> },
}

/// Result of a k-means fit on `n` points of dimension `dim`.
#[derive(Debug, Clone)]
pub struct Clustering {
    /// Row-major `k * dim` centroid matrix.
    pub centroids: Vec<f64>,
    pub dim: usize,
    pub k: usize,
    /// Index of the owning centroid for each input point, consistent with
    /// the returned `centroids`.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances under `assignments`.
    pub inertia: f64,
}

fn point_count(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::Empty("clustering input"));
    }
    if data.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "data length {} is not a multiple of dimension {dim}",
            data.len()
        )));
    }
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "clustering input",
            step: pos,
        });
    }
    Ok(data.len() / dim)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the centroid closest to `point`.
///
/// Ties break toward the lowest index. `centroids` is row-major with rows of
/// length `dim`; shapes are the caller's responsibility on this hot path.
pub fn nearest(centroids: &[f64], dim: usize, point: &[f64]) -> (usize, f64) {
    debug_assert!(dim > 0 && point.len() == dim && centroids.len() % dim == 0);
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, row) in centroids.chunks_exact(dim).enumerate() {
        let d = dist2(row, point);
        // Strict comparison keeps the lowest index on exact ties.
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn init_farthest_first(data: &[f64], dim: usize, n: usize, k: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centroids = Vec::with_capacity(k * dim);
    // min over chosen centroids of squared distance, per point
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut target = &mean[..];
    for _ in 0..k {
        let mut pick = 0usize;
        let mut pick_d = f64::NEG_INFINITY;
        for (i, row) in data.chunks_exact(dim).enumerate() {
            let d = dist2(row, target).min(min_d2[i]);
            if d > pick_d {
                pick_d = d;
                pick = i;
            }
        }
        let row = &data[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(row);
        for (i, point) in data.chunks_exact(dim).enumerate() {
            min_d2[i] = min_d2[i].min(dist2(point, row));
        }
        target = &centroids[centroids.len() - dim..];
        // After the first pick the running min_d2 already includes `target`,
        // so the distance-to-mean term never dominates again.
    }
    centroids
}

fn init_plus_plus(data: &[f64], dim: usize, n: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = data
        .chunks_exact(dim)
        .map(|row| dist2(row, &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All mass sits on already-chosen points; any pick is as good.
            rng.random_range(0..n)
        };
        let row = &data[pick * dim..(pick + 1) * dim];
        centroids.extend_from_slice(row);
        for (i, point) in data.chunks_exact(dim).enumerate() {
            d2[i] = d2[i].min(dist2(point, row));
        }
    }
    centroids
}

/// Lloyd k-means with deterministic tie-breaking and empty-cluster repair.
///
/// Runs `iters` assign/update rounds from the chosen initialisation, then one
/// final assignment pass so the reported `assignments` and `inertia` match
/// the returned centroids. A cluster that loses all of its points is reseeded
/// to the point currently worst represented by its own centroid, which keeps
/// the within-cluster sum of squares non-increasing across rounds.
pub fn kmeans(data: &[f64], dim: usize, k: usize, iters: usize, init: Init) -> Result<Clustering> {
    let n = point_count(data, dim)?;
    if k == 0 {
        return Err(Error::Config("cluster count must be positive".into()));
    }
    if k > n {
        return Err(Error::Degenerate(format!(
            "cannot place {k} clusters on {n} points"
        )));
    }
    let mut centroids = match init {
        Init::FarthestFirst => init_farthest_first(data, dim, n, k),
        Init::PlusPlus { seed } => init_plus_plus(data, dim, n, k, seed),
        Init::Explicit { centroids } => {
            if centroids.len() != k * dim {
                return Err(Error::Shape(format!(
                    "explicit init has {} values, expected {}",
                    centroids.len(),
                    k * dim
                )));
            }
            if let Some(pos) = centroids.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "explicit init centroids",
                    step: pos,
                });
            }
            centroids
        }
    };
    let mut assign = vec![0usize; n];
    let mut point_d2 = vec![0.0f64; n];
    for _ in 0..iters {
        for (i, row) in data.chunks_exact(dim).enumerate() {
            let (j, d) = nearest(&centroids, dim, row);
            assign[i] = j;
            point_d2[i] = d;
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, row) in data.chunks_exact(dim).enumerate() {
            let j = assign[i];
            counts[j] += 1;
            for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids[j * dim..(j + 1) * dim]
                    .iter_mut()
                    .zip(&sums[j * dim..(j + 1) * dim])
                {
                    *c = s * inv;
                }
            }
        }
        // Repair empty clusters in ascending index order, each taking the
        // point with the largest current assignment cost.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut worst = 0usize;
            let mut worst_d = f64::NEG_INFINITY;
            for (i, &d) in point_d2.iter().enumerate() {
                if d > worst_d {
                    worst_d = d;
                    worst = i;
                }
            }
            centroids[j * dim..(j + 1) * dim]
                .copy_from_slice(&data[worst * dim..(worst + 1) * dim]);
            // Claimed: its old cost no longer counts for later repairs.
            point_d2[worst] = -1.0;
        }
    }
    let mut inertia = 0.0;
    for (i, row) in data.chunks_exact(dim).enumerate() {
        let (j, d) = nearest(&centroids, dim, row);
        assign[i] = j;
        inertia += d;
    }
    Ok(Clustering {
        centroids,
        dim,
        k,
        assignments: assign,
        inertia,
    })
}

/// Apply the lowest-index-positive sign convention in place.
///
/// The component with the largest magnitude is made positive, so a direction
/// and its negation normalise to the same vector.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut lead = 0usize;
    let mut lead_abs = f64::NEG_INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > lead_abs {
            lead_abs = x.abs();
            lead = i;
        }
    }
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Leading eigenvector of the population covariance of `data`, unit norm.
///
/// Power iteration on the materialised covariance matrix, started from a
/// seeded Gaussian vector and run for `iters` rounds. The sign convention
/// makes the largest-magnitude component positive. Fails on constant data,
/// where the covariance has no direction to report.
pub fn principal_axis(data: &[f64], dim: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    let n = point_count(data, dim)?;
    if iters == 0 {
        return Err(Error::Config("power iteration needs at least one round".into()));
    }
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Population covariance; dim is small enough to hold densely.
    let mut cov = vec![0.0; dim * dim];
    let mut centred = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (c, (x, m)) in centred.iter_mut().zip(row.iter().zip(&mean)) {
            *c = x - m;
        }
        for (r, &cr) in centred.iter().enumerate() {
            let out = &mut cov[r * dim..(r + 1) * dim];
            for (o, &cc) in out.iter_mut().zip(&centred) {
                *o += cr * cc;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for c in &mut cov {
        *c *= inv_n;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    let mut next = vec![0.0; dim];
    for step in 0..iters {
        for (r, slot) in next.iter_mut().enumerate() {
            *slot = cov[r * dim..(r + 1) * dim]
                .iter()
                .zip(&v)
                .map(|(c, x)| c * x)
                .sum();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "power iteration",
                step,
            });
        }
        if norm < 1e-300 {
            return Err(Error::Degenerate(
                "covariance has no dominant direction (constant input?)".into(),
            ));
        }
        for (slot, x) in v.iter_mut().zip(&next) {
            *slot = x / norm;
        }
    }
    fix_sign(&mut v);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blob(rng: &mut ChaCha8Rng, centre: &[f64], spread: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count * centre.len());
        for _ in 0..count {
            for &c in centre {
                let e: f64 = StandardNormal.sample(rng);
                out.push(c + spread * e);
            }
        }
        out
    }

    #[test]
    fn two_blobs_are_recovered_by_both_inits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = blob(&mut rng, &[-3.0, 0.0, 1.0], 0.05, 40);
        data.extend(blob(&mut rng, &[3.0, 1.0, -2.0], 0.05, 40));
        for init in [Init::FarthestFirst, Init::PlusPlus { seed: 11 }] {
            let fit = kmeans(&data, 3, 2, 25, init.clone()).unwrap();
            let mut found = [false, false];
            for row in fit.centroids.chunks_exact(3) {
                if dist2(row, &[-3.0, 0.0, 1.0]) < 0.01 {
                    found[0] = true;
                }
                if dist2(row, &[3.0, 1.0, -2.0]) < 0.01 {
                    found[1] = true;
                }
            }
            assert!(found[0] && found[1], "init {init:?} missed a blob");
            let first = fit.assignments[0];
            assert!(fit.assignments[..40].iter().all(|&a| a == first));
            assert!(fit.assignments[40..].iter().all(|&a| a != first));
        }
    }

    #[test]
    fn explicit_init_is_honoured_and_validated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut data = blob(&mut rng, &[-3.0, 0.0, 1.0], 0.05, 40);
        data.extend(blob(&mut rng, &[3.0, 1.0, -2.0], 0.05, 40));
        // Starting from the true means, one round already converges and the
        // centroid order matches the init order.
        let init = Init::Explicit {
            centroids: vec![-3.0, 0.0, 1.0, 3.0, 1.0, -2.0],
        };
        let fit = kmeans(&data, 3, 2, 25, init).unwrap();
        assert!(dist2(&fit.centroids[..3], &[-3.0, 0.0, 1.0]) < 0.01);
        assert!(dist2(&fit.centroids[3..], &[3.0, 1.0, -2.0]) < 0.01);
        assert!(fit.assignments[..40].iter().all(|&a| a == 0));
        assert!(fit.assignments[40..].iter().all(|&a| a == 1));
        let short = Init::Explicit {
            centroids: vec![0.0; 5],
        };
        assert!(matches!(
            kmeans(&data, 3, 2, 25, short),
            Err(Error::Shape(_))
        ));
        let bad = Init::Explicit {
            centroids: vec![0.0, f64::NAN, 0.0, 1.0, 1.0, 1.0],
        };
        assert!(matches!(
            kmeans(&data, 3, 2, 25, bad),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn k_equal_one_returns_the_mean() {
        let data = [1.0, 2.0, 3.0, 5.0, -1.0, 0.5];
        let fit = kmeans(&data, 2, 1, 5, Init::FarthestFirst).unwrap();
        let mean = [(1.0 + 3.0 - 1.0) / 3.0, (2.0 + 5.0 + 0.5) / 3.0];
        assert!((fit.centroids[0] - mean[0]).abs() < 1e-12);
        assert!((fit.centroids[1] - mean[1]).abs() < 1e-12);
    }

    #[test]
    fn nearest_ties_break_to_lowest_index() {
        // Two identical centroids, then a third farther away.
        let centroids = [1.0, 1.0, 1.0, 1.0, 9.0, 9.0];
        let (j, d) = nearest(&centroids, 2, &[1.0, 2.0]);
        assert_eq!(j, 0);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_duplicate_data_still_terminates() {
        // Two distinct locations, three clusters: one stays empty and the
        // repair rule has nothing better than a duplicate point to offer.
        let mut data = Vec::new();
        for _ in 0..5 {
            data.extend_from_slice(&[0.0, 0.0]);
            data.extend_from_slice(&[4.0, 4.0]);
        }
        let fit = kmeans(&data, 2, 3, 10, Init::FarthestFirst).unwrap();
        assert_eq!(fit.centroids.len(), 6);
        assert!(fit.centroids.iter().all(|c| c.is_finite()));
        assert!(fit.inertia < 1e-12);
    }

    #[test]
    fn more_points_than_clusters_is_required() {
        let data = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            kmeans(&data, 2, 3, 5, Init::FarthestFirst),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            kmeans(&data, 3, 1, 5, Init::FarthestFirst),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            kmeans(&[], 2, 1, 5, Init::FarthestFirst),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            kmeans(&[0.0, f64::NAN], 2, 1, 5, Init::FarthestFirst),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn same_seed_reproduces_the_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = blob(&mut rng, &[0.0; 4], 1.0, 64);
        let a = kmeans(&data, 4, 8, 25, Init::PlusPlus { seed: 5 }).unwrap();
        let b = kmeans(&data, 4, 8, 25, Init::PlusPlus { seed: 5 }).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn principal_axis_matches_closed_form_in_two_dims() {
        // Correlated 2-d cloud; compare against the analytic eigenvector of
        // the 2x2 population covariance.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut data = Vec::new();
        for _ in 0..500 {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            data.push(3.0 * a + 0.4 * b);
            data.push(1.5 * a - 0.2 * b);
        }
        let n = data.len() as f64 / 2.0;
        let mx = data.iter().step_by(2).sum::<f64>() / n;
        let my = data.iter().skip(1).step_by(2).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for pair in data.chunks_exact(2) {
            let (dx, dy) = (pair[0] - mx, pair[1] - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
        let lam = 0.5 * (sxx + syy + ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt());
        let ev = {
            let mut e = [sxy, lam - sxx];
            let norm = (e[0] * e[0] + e[1] * e[1]).sqrt();
            e[0] /= norm;
            e[1] /= norm;
            e
        };
        let axis = principal_axis(&data, 2, 200, 1).unwrap();
        let dot = (axis[0] * ev[0] + axis[1] * ev[1]).abs();
        assert!(dot > 1.0 - 1e-10, "|cos| = {dot}");
        let norm: f64 = axis.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_axis_sign_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut data = Vec::new();
        for _ in 0..200 {
            let a: f64 = StandardNormal.sample(&mut rng);
            data.extend_from_slice(&[-2.0 * a, 0.3 * a, a]);
        }
        let axis = principal_axis(&data, 3, 200, 2).unwrap();
        // Dominant direction is (-2, 0.3, 1)/norm; the sign rule flips it so
        // the largest-magnitude slot is positive.
        assert!(axis[0] > 0.0);
        let other = principal_axis(&data, 3, 200, 99).unwrap();
        for (a, b) in axis.iter().zip(&other) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_data_has_no_axis() {
        let data = vec![1.0; 30];
        assert!(matches!(
            principal_axis(&data, 3, 50, 0),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn lloyd_inertia_never_increases_with_more_rounds(
            seed in 0u64..1000,
            n in 6usize..40,
            k in 1usize..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n * 3)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    4.0 * e
                })
                .collect();
            let k = k.min(n);
            let short = kmeans(&data, 3, k, 1, Init::PlusPlus { seed }).unwrap();
            let long = kmeans(&data, 3, k, 20, Init::PlusPlus { seed }).unwrap();
            prop_assert!(long.inertia <= short.inertia + 1e-9);
            prop_assert!(long.assignments.iter().all(|&a| a < k));
        }
    }
}
