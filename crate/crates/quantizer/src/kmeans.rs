use larm_core::embedding::squared_distance;
use larm_core::Rng;
use larm_nnkit::Matrix;

use crate::{QuantError, Result};

/// Lloyd iterations stop once the relative inertia change drops below this.
pub const REL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Inertia after every assignment step, starting with the k-means++ seeds.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Index of the nearest row of `centroids`; ties go to the smallest index.
pub fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.row_iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = points.row_iter().map(|p| squared_distance(p, points.row(first))).collect();
    for j in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            // Guard against landing on a zero-weight tail through rounding.
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.below(n)
        };
        centroids.row_mut(j).copy_from_slice(points.row(pick));
        for (i, p) in points.row_iter().enumerate() {
            dist[i] = dist[i].min(squared_distance(p, points.row(pick)));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, assignments: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let (j, d) = nearest(centroids, p);
        assignments[i] = j;
        dist[i] = d;
        inertia += d;
    }
    inertia
}

/// K-means with k-means++ seeding and Lloyd updates. A cluster left empty
/// is re-seeded at the point currently farthest from its centroid.
pub fn kmeans(points: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 || n == 0 || k > n {
        return Err(QuantError::InvalidK { k, n });
    }
    let d = points.cols();
    let mut rng = Rng::new(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignments = vec![0; n];
    let mut dist = vec![0.0; n];
    let mut history = vec![assign(points, &centroids, &mut assignments, &mut dist)];

    for _ in 0..max_iters {
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, p) in points.row_iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, v) in sums.row_mut(assignments[i]).iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *c = s * inv;
                }
            } else {
                let far = farthest(&dist);
                centroids.row_mut(j).copy_from_slice(points.row(far));
                dist[far] = 0.0;
            }
        }
        let prev = *history.last().expect("non-empty history");
        let inertia = assign(points, &centroids, &mut assignments, &mut dist);
        history.push(inertia);
        if prev <= 0.0 || (prev - inertia) / prev < REL_TOLERANCE {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        inertia_history: history,
    })
}

fn farthest(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d > dist[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64]) -> Matrix {
        Matrix::new(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn two_clusters_on_a_line() {
        let km = kmeans(&column(&[0.0, 1.0, 10.0, 11.0]), 2, 50, 3).unwrap();
        let mut c = km.centroids.into_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![0.5, 10.5]);
        assert_eq!(*km.inertia_history.last().unwrap(), 1.0);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let pts = column(&[3.0, -1.0, 7.5, 2.0]);
        let km = kmeans(&pts, 4, 10, 1).unwrap();
        assert_eq!(km.inertia(), 0.0);
        let mut c = km.centroids.into_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![-1.0, 2.0, 3.0, 7.5]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0], vec![-1.0, 4.0]]);
        let km = kmeans(&pts, 1, 10, 9).unwrap();
        assert!((km.centroids.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((km.centroids.get(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_k() {
        let pts = column(&[1.0, 2.0]);
        assert!(matches!(kmeans(&pts, 0, 5, 0), Err(QuantError::InvalidK { k: 0, n: 2 })));
        assert!(matches!(kmeans(&pts, 3, 5, 0), Err(QuantError::InvalidK { k: 3, n: 2 })));
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let pts = column(&[5.0, 5.0, 5.0, 5.0]);
        let km = kmeans(&pts, 3, 10, 2).unwrap();
        assert_eq!(km.inertia(), 0.0);
        assert!(km.centroids.is_finite());
    }
}
