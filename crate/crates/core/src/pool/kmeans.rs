//! Seeded k-means (k-means++ init, Lloyd iterations) over embedding vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::draw_index;

pub const MAX_LLOYD_ITERATIONS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Clusters `points` into exactly `k` non-empty groups.
///
/// Returns one label per point. Labels are renumbered in order of first
/// appearance so the output is canonical for a given seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Config("k-means needs at least one point".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cluster count {k} must be between 1 and the number of points ({n})"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Invariant("k-means points have mixed dimensions".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    fill_empty(points, &mut labels, &mut centers);

    for _ in 0..MAX_LLOYD_ITERATIONS {
        centers = recompute_centers(points, &labels, k, dim);
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        fill_empty(points, &mut next, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(canonical(&labels))
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let next = if d2.iter().sum::<f64>() > 0.0 {
            draw_index(&d2, rng)
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn recompute_centers(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

/// Moves the point farthest from its center (taken from a cluster with more
/// than one member) into each empty cluster.
fn fill_empty(points: &[Vec<f64>], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centers[labels[a]]);
                let db = sq_dist(&points[b], &centers[labels[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with spare members");
        labels[far] = empty;
        centers[empty] = points[far].clone();
    }
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Groups item indices by label, clusters ordered by label.
pub fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}
