//! Seeded Lloyd k-means with k-means++ seeding.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub seed: u64,
    pub max_iter: usize,
    /// Independent k-means++ starts; the lowest inertia wins.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iter: 300,
            restarts: 10,
        }
    }
}

/// Clusters the rows of `points`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_with(
        points,
        k,
        &KMeansOptions {
            seed,
            ..KMeansOptions::default()
        },
    )
}

pub fn kmeans_with(points: &DMatrix<f64>, k: usize, opts: &KMeansOptions) -> Result<ClusterAssignment> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("cluster count must be at least 1".into()));
    }
    if n < k {
        return Err(Error::TooFewPoints { points: n, clusters: k });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "k-means points",
            index: points.iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    let rows: Vec<Vec<f64>> = points.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Run> = None;
    for _ in 0..opts.restarts.max(1) {
        let run = lloyd(&rows, k, opts.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(ClusterAssignment {
        labels: relabel(&best.labels, k),
        k,
        inertia: best.inertia,
        seed: opts.seed,
        iterations: best.iterations,
    })
}

#[derive(Debug)]
struct Run {
    labels: Vec<usize>,
    inertia: f64,
    iterations: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // rounding can land on a zero-weight tail entry
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).expect("total is positive");
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(rows: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize]) {
    for (label, r) in labels.iter_mut().zip(rows) {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(r, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        *label = best.1;
    }
}

fn means(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(r).for_each(|(s, v)| *s += v);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

fn inertia(rows: &[Vec<f64>], labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, &centers[l]))
        .sum()
}

/// Gives every empty cluster the point farthest from its center in the
/// cluster with the largest inertia that can spare one.
fn repair_empty(rows: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let centers = means(rows, labels, k);
        let mut cluster_inertia = vec![0.0; k];
        for (r, &l) in rows.iter().zip(labels.iter()) {
            cluster_inertia[l] += sq_dist(r, &centers[l]);
        }
        let donor = (0..k)
            .filter(|&c| counts[c] >= 2)
            .max_by(|&a, &b| {
                cluster_inertia[a]
                    .total_cmp(&cluster_inertia[b])
                    .then(counts[a].cmp(&counts[b]))
                    .then(b.cmp(&a))
            })
            .expect("n >= k leaves a cluster with two members");
        let far = (0..rows.len())
            .filter(|&i| labels[i] == donor)
            .max_by(|&a, &b| {
                sq_dist(&rows[a], &centers[donor])
                    .total_cmp(&sq_dist(&rows[b], &centers[donor]))
                    .then(b.cmp(&a))
            })
            .expect("donor is nonempty");
        labels[far] = empty;
    }
}

fn lloyd(rows: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut ChaCha8Rng) -> Run {
    let mut centers = plus_plus(rows, k, rng);
    let mut labels = vec![0; rows.len()];
    assign(rows, &centers, &mut labels);
    repair_empty(rows, &mut labels, k);
    centers = means(rows, &labels, k);
    let mut history = vec![inertia(rows, &labels, &centers)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut next = labels.clone();
        assign(rows, &centers, &mut next);
        repair_empty(rows, &mut next, k);
        if next == labels {
            break;
        }
        labels = next;
        centers = means(rows, &labels, k);
        history.push(inertia(rows, &labels, &centers));
    }
    Run {
        inertia: *history.last().expect("history is nonempty"),
        labels,
        iterations,
        history,
    }
}

/// Renumbers clusters in order of first appearance.
fn relabel(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
    }

    #[test]
    fn pairs_are_grouped_for_any_seed() {
        let pts = matrix(&[[0.0, 0.0], [0.0, 0.1], [10.0, 10.0], [10.0, 10.1]]);
        for seed in 0..20 {
            let a = kmeans(&pts, 2, seed).unwrap();
            assert_eq!(a.labels, vec![0, 0, 1, 1]);
            assert!((a.inertia - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts = matrix(&[[0.0, 1.0], [2.0, 3.0], [5.0, -1.0], [4.0, 4.0], [9.0, 0.0]]);
        let a = kmeans(&pts, 5, 3).unwrap();
        assert_eq!(a.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(a.inertia, 0.0);
    }

    #[test]
    fn identical_points_terminate() {
        let pts = matrix(&[[1.0, 1.0]; 6]);
        let a = kmeans(&pts, 2, 11).unwrap();
        assert_eq!(a.sizes().iter().filter(|&&c| c > 0).count(), 2);
        assert_eq!(a.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let pts = matrix(&[[0.0, 0.0]]);
        assert!(matches!(
            kmeans(&pts, 2, 0),
            Err(Error::TooFewPoints { points: 1, clusters: 2 })
        ));
    }

    proptest! {
        #[test]
        fn lloyd_is_monotone_and_ends_at_fixpoint(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
            k in 1usize..5,
            seed in any::<u64>(),
        ) {
            prop_assume!(raw.len() >= k);
            let rows: Vec<Vec<f64>> = raw.iter().map(|&(x, y)| vec![x, y]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = lloyd(&rows, k, 300, &mut rng);
            for w in run.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            let mut counts = vec![0; k];
            run.labels.iter().for_each(|&l| counts[l] += 1);
            prop_assert!(counts.iter().all(|&c| c > 0));
            if run.iterations < 300 {
                let centers = means(&rows, &run.labels, k);
                let mut again = run.labels.clone();
                assign(&rows, &centers, &mut again);
                repair_empty(&rows, &mut again, k);
                prop_assert_eq!(again, run.labels);
            }
        }

        #[test]
        fn deterministic_per_seed(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..30),
            seed in any::<u64>(),
        ) {
            let pts = DMatrix::from_fn(raw.len(), 2, |i, j| if j == 0 { raw[i].0 } else { raw[i].1 });
            prop_assert_eq!(kmeans(&pts, 3, seed).unwrap(), kmeans(&pts, 3, seed).unwrap());
        }
    }
}
