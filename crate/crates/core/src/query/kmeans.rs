//! Seeded k-means++ followed by a fixed number of Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QueryError;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn kmeans(points: &[Vec<f64>], k: usize, iterations: usize, seed: u64) -> Result<Vec<Vec<f64>>, QueryError> {
    if k == 0 || k > points.len() {
        return Err(QueryError::TooFewSamples {
            have: points.len(),
            need: k.max(1),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..iterations {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let n = nearest(&centroids, p);
            changed |= *a != n;
            *a = n;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
            // An emptied cluster keeps its previous centroid.
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
    }
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_blobs_split_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for centre in [-10.0, 10.0] {
            for _ in 0..50 {
                pts.push(vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            }
        }
        let c = kmeans(&pts, 2, 25, 3).unwrap();
        let first = nearest(&c, &pts[0]);
        assert!(pts[..50].iter().all(|p| nearest(&c, p) == first));
        assert!(pts[50..].iter().all(|p| nearest(&c, p) != first));
        assert_eq!(c, kmeans(&pts, 2, 25, 3).unwrap());
    }

    #[test]
    fn k_larger_than_data_fails() {
        assert!(kmeans(&[vec![0.0]], 2, 25, 0).is_err());
    }

    #[test]
    fn duplicate_points_do_not_panic() {
        let pts = vec![vec![1.0, 1.0]; 10];
        assert_eq!(kmeans(&pts, 3, 25, 0).unwrap().len(), 3);
    }
}
