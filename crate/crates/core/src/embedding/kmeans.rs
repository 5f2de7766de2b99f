use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{EmbeddingError, FeatureVector};

pub const KMEANS_MAX_ITERATIONS: usize = 100;

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster SSE after each Lloyd iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn validate<V: AsRef<[f64]>>(vectors: &[V], k: usize) -> Result<usize, EmbeddingError> {
    if k < 1 || k > vectors.len() {
        return Err(EmbeddingError::InvalidArgument(format!(
            "k must be in 1..={} (got {k})",
            vectors.len()
        )));
    }
    let dim = vectors[0].as_ref().len();
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                left: dim,
                right: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::InvalidVector("non-finite value".into()));
        }
    }
    Ok(dim)
}

/// k-means++ seeding: first centre uniform, later ones with probability
/// proportional to squared distance from the nearest chosen centre.
fn init_plus_plus<V: AsRef<[f64]>>(vectors: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v.as_ref(), vectors[chosen[0]].as_ref()))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Fewer distinct points than k: fall back to the first unused index.
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(pick);
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v.as_ref(), vectors[pick].as_ref()));
        }
    }
    chosen
        .into_iter()
        .map(|i| vectors[i].as_ref().to_vec())
        .collect()
}

/// Moves, for every empty cluster, the point farthest from its centroid
/// (taken only from clusters with more than one member) into it.
fn repair_empty<V: AsRef<[f64]>>(
    vectors: &[V],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, v) in vectors.iter().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let d = sq_dist(v.as_ref(), &centroids[assignments[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("an empty cluster implies a cluster with two or more members");
        assignments[i] = empty;
        centroids[empty] = vectors[i].as_ref().to_vec();
    }
}

fn means<V: AsRef<[f64]>>(
    vectors: &[V],
    assignments: &[usize],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(v.as_ref()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|x| *x /= c as f64);
    }
    sums
}

fn sse<V: AsRef<[f64]>>(vectors: &[V], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    vectors
        .iter()
        .zip(assignments)
        .map(|(v, &a)| sq_dist(v.as_ref(), &centroids[a]))
        .sum()
}

/// Lloyd's algorithm with seeded k-means++ initialization. Stops when an
/// iteration changes no assignment or after [`KMEANS_MAX_ITERATIONS`].
/// Distance ties go to the lower centroid index.
pub fn kmeans<V: AsRef<[f64]>>(
    vectors: &[V],
    k: usize,
    seed: u64,
) -> Result<KMeansResult, EmbeddingError> {
    let dim = validate(vectors, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(vectors, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut sse_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = vectors
            .iter()
            .map(|v| nearest(v.as_ref(), &centroids).0)
            .collect();
        repair_empty(vectors, &mut next, &mut centroids);
        let changed = next != assignments;
        assignments = next;
        centroids = means(vectors, &assignments, k, dim);
        sse_history.push(sse(vectors, &assignments, &centroids));
        if !changed {
            converged = true;
            break;
        }
    }

    Ok(KMeansResult {
        assignments,
        centroids,
        sse_history,
        iterations,
        converged,
    })
}

/// One index per cluster: the member closest to its centroid (ties to the
/// lower index), ordered by cluster.
pub fn representative_sample<V: AsRef<[f64]>>(
    vectors: &[V],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, EmbeddingError> {
    let result = kmeans(vectors, k, seed)?;
    Ok((0..k)
        .map(|j| {
            let centroid = &result.centroids[j];
            let mut best: Option<(usize, f64)> = None;
            for i in result.members(j) {
                let d = sq_dist(vectors[i].as_ref(), centroid);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            best.expect("clusters are never empty").0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn four_points() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 10.0],
            vec![10.0, 11.0],
        ]
    }

    fn partition(assign: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let k = assign.iter().max().unwrap() + 1;
        (0..k)
            .map(|c| (0..assign.len()).filter(|&i| assign[i] == c).collect())
            .collect()
    }

    /// Exhaustive search over all assignments of n points to exactly k
    /// non-empty clusters.
    fn brute_force_best(points: &[Vec<f64>], k: usize) -> (f64, BTreeSet<BTreeSet<usize>>) {
        let n = points.len();
        let mut best = (f64::INFINITY, BTreeSet::new());
        let total = k.pow(n as u32);
        for code in 0..total {
            let assign: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
            if (0..k).any(|c| !assign.contains(&c)) {
                continue;
            }
            let dim = points[0].len();
            let cs = means(points, &assign, k, dim);
            let s = sse(points, &assign, &cs);
            if s < best.0 - 1e-12 {
                best = (s, partition(&assign));
            }
        }
        best
    }

    #[test]
    fn four_point_fixture_matches_brute_force() {
        let pts = four_points();
        let (best_sse, best_part) = brute_force_best(&pts, 2);
        assert_eq!(
            best_part,
            [BTreeSet::from([0, 1]), BTreeSet::from([2, 3])].into()
        );
        assert_eq!(best_sse, 1.0);
        for seed in 0..20 {
            let r = kmeans(&pts, 2, seed).unwrap();
            assert_eq!(partition(&r.assignments), best_part, "seed {seed}");
            assert_eq!(r.sse(), best_sse);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_sse() {
        let pts = four_points();
        let r = kmeans(&pts, 4, 3).unwrap();
        assert_eq!(r.sse(), 0.0);
        assert_eq!(r.assignments.iter().collect::<BTreeSet<_>>().len(), 4);
        let mut idx = representative_sample(&pts, 4, 3).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_points_with_large_k() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![2.0]];
        let r = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(r.assignments.iter().collect::<BTreeSet<_>>().len(), 3);
    }

    #[test]
    fn representative_per_cluster() {
        let pts = four_points();
        let idx = representative_sample(&pts, 2, 11).unwrap();
        let firsts: BTreeSet<bool> = idx.iter().map(|&i| i < 2).collect();
        assert_eq!(firsts.len(), 2);
    }

    #[test]
    fn single_cluster_picks_point_nearest_mean() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.2], vec![9.0]];
        // Mean is 3.05; brute force nearest is index 2.
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
        let oracle = (0..4)
            .min_by(|&a, &b| {
                (pts[a][0] - mean)
                    .abs()
                    .total_cmp(&(pts[b][0] - mean).abs())
            })
            .unwrap();
        assert_eq!(representative_sample(&pts, 1, 5).unwrap(), vec![oracle]);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = four_points();
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&pts, 5, 0).is_err());
    }
}
