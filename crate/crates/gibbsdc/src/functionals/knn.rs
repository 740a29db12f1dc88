//! k-nearest-neighbor graph scores.
//!
//! The kNN graph is symmetric: `{x, y}` is an edge when either point is
//! among the other's `k` nearest. The per-point score is one half of the
//! total length of incident edges, with the convention that patterns with
//! fewer than `k + 1` points score infinite.

use super::ScoreValue;
use crate::geometry::{NeighborGrid, Point};

/// Symmetric kNN edge set, with the k-th neighbor distance per point.
#[derive(Clone, Debug)]
pub struct KnnGraph {
    /// deduplicated edges `(i, j, length)` with `i < j`
    pub edges: Vec<(u32, u32, f64)>,
    /// k-th nearest-neighbor distance per point (`inf` when fewer than k others)
    pub kth_dist: Vec<f64>,
    k: usize,
    n: usize,
}

impl KnnGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Half the total length of edges incident to `i`, or `Infinite` when the
    /// pattern has at most `k` points.
    pub fn score(&self, i: usize) -> ScoreValue {
        if self.n <= self.k {
            return ScoreValue::Infinite;
        }
        let mut acc = 0.0;
        for &(a, b, len) in &self.edges {
            if a as usize == i || b as usize == i {
                acc += len;
            }
        }
        ScoreValue::Finite(acc / 2.0)
    }

    /// Per-point half-incident-length scores in one pass.
    pub fn scores(&self) -> Vec<ScoreValue> {
        if self.n <= self.k {
            return vec![ScoreValue::Infinite; self.n];
        }
        let mut acc = vec![0.0; self.n];
        for &(a, b, len) in &self.edges {
            acc[a as usize] += len;
            acc[b as usize] += len;
        }
        acc.into_iter()
            .map(|v| ScoreValue::Finite(v / 2.0))
            .collect()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// The `k` nearest neighbors of every point, exact via an expanding grid
/// search: the radius grows until the k-th candidate provably beats every
/// unexplored point.
fn knn_lists<const D: usize>(pts: &[Point<D>], k: usize) -> Vec<Vec<(u32, f64)>> {
    let n = pts.len();
    if n <= 1 || k == 0 {
        return vec![Vec::new(); n];
    }
    let kk = k.min(n - 1);
    let mut bbox_vol = 1.0f64;
    let (mut lo, mut hi) = (*pts[0].coords(), *pts[0].coords());
    for p in pts {
        for i in 0..D {
            lo[i] = lo[i].min(p.coords()[i]);
            hi[i] = hi[i].max(p.coords()[i]);
        }
    }
    let mut diam = 0.0f64;
    for i in 0..D {
        bbox_vol *= (hi[i] - lo[i]).max(1e-12);
        diam += (hi[i] - lo[i]).powi(2);
    }
    let diam = diam.sqrt().max(1e-12);
    // the diameter floor keeps the stencil bounded for degenerate
    // (near-lower-dimensional) patterns
    let cell = (bbox_vol * (kk as f64) / n as f64)
        .powf(1.0 / D as f64)
        .max(diam / 64.0);
    let grid = NeighborGrid::from_points(cell, pts);
    let mut out = Vec::with_capacity(n);
    for (i, p) in pts.iter().enumerate() {
        let mut r = cell;
        let mut found: Vec<(u32, f64)>;
        loop {
            let mut cands: Vec<(u32, f64)> = Vec::new();
            grid.for_each_within(p, r, |j, q| {
                if j as usize != i {
                    cands.push((j, q.dist(p)));
                }
            });
            if cands.len() >= kk {
                cands.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                if cands[kk - 1].1 <= r {
                    cands.truncate(kk);
                    found = cands;
                    break;
                }
            }
            if r > 2.0 * diam {
                cands.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
                cands.truncate(kk);
                found = cands;
                break;
            }
            r *= 1.7;
        }
        out.push(std::mem::take(&mut found));
    }
    out
}

/// Build the symmetric kNN graph.
pub fn knn_graph<const D: usize>(pts: &[Point<D>], k: usize) -> KnnGraph {
    let n = pts.len();
    let lists = knn_lists(pts, k);
    let mut kth_dist = vec![f64::INFINITY; n];
    for (i, l) in lists.iter().enumerate() {
        if l.len() >= k && k >= 1 {
            kth_dist[i] = l[k - 1].1;
        }
    }
    let mut edges: Vec<(u32, u32, f64)> = Vec::new();
    for (i, l) in lists.iter().enumerate() {
        for &(j, d) in l {
            let (a, b) = if (i as u32) < j {
                (i as u32, j)
            } else {
                (j, i as u32)
            };
            edges.push((a, b, d));
        }
    }
    edges.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    KnnGraph {
        edges,
        kth_dist,
        k,
        n,
    }
}

/// Index of `x` inside `pts` by exact coordinate match.
pub(crate) fn index_of<const D: usize>(pts: &[Point<D>], x: &Point<D>) -> Option<usize> {
    pts.iter().position(|p| p == x)
}

/// kNN score of a single point of the pattern.
pub fn knn_score<const D: usize>(pts: &[Point<D>], x: &Point<D>, k: usize) -> Option<ScoreValue> {
    let i = index_of(pts, x)?;
    Some(knn_graph(pts, k).score(i))
}

/// Indicator that the k-th nearest-neighbor distance of `x` in `pts` is at
/// least `a`. Fewer than `k` other points count as an infinite distance.
pub fn knn_large_edge<const D: usize>(
    pts: &[Point<D>],
    x: &Point<D>,
    k: usize,
    a: f64,
) -> Option<u8> {
    let i = index_of(pts, x)?;
    let mut dists: Vec<f64> = pts
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| p.dist(x))
        .collect();
    if dists.len() < k {
        return Some(1);
    }
    dists.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Some(u8::from(dists[k - 1] >= a))
}

/// The implemented stabilization radius of the kNN score at `x`: the
/// smallest radius from a doubling sweep at which the score computed on the
/// clipped pattern agrees with the full-pattern score and stays in agreement
/// one doubling later. Falls back to the pattern diameter, which always
/// stabilizes.
pub fn knn_stabilization_radius<const D: usize>(
    pts: &[Point<D>],
    x: &Point<D>,
    k: usize,
) -> Option<f64> {
    let i = index_of(pts, x)?;
    let full = knn_graph(pts, k).score(i);
    let mut diam = 0.0f64;
    for p in pts {
        diam = diam.max(p.dist(x));
    }
    if pts.len() <= k + 1 {
        return Some(diam);
    }
    let mut dists: Vec<f64> = pts.iter().map(|p| p.dist(x)).collect();
    dists.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let base = dists[k.min(dists.len() - 1)].max(diam * 1e-9);
    let clip_score = |r: f64| -> Option<ScoreValue> {
        let clipped: Vec<Point<D>> = pts.iter().copied().filter(|p| p.dist(x) <= r).collect();
        let ci = index_of(&clipped, x)?;
        Some(knn_graph(&clipped, k).score(ci))
    };
    let mut r = 2.0 * base;
    while r < diam {
        if clip_score(r) == Some(full) && clip_score(2.0 * r) == Some(full) {
            return Some(r);
        }
        r *= 2.0;
    }
    Some(diam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn collinear_middle_point() {
        let pts = vec![
            Point::new([0.0, 0.0]),
            Point::new([1.0, 0.0]),
            Point::new([2.0, 0.0]),
        ];
        // k=1: edges (0,1) and (1,2); the middle point touches both
        let s = knn_score(&pts, &pts[1], 1).unwrap();
        assert_eq!(s, ScoreValue::Finite(1.0));
    }

    #[test]
    fn too_few_points_is_infinite() {
        let pts = vec![Point::new([0.0, 0.0]), Point::new([1.0, 0.0])];
        assert_eq!(knn_score(&pts, &pts[0], 2).unwrap(), ScoreValue::Infinite);
    }

    #[test]
    fn scores_sum_to_total_edge_length_brute_force() {
        let mut rng = crate::StreamKey::root(31).child(&[1]).rng();
        let pts: Vec<Point<2>> = (0..50)
            .map(|_| Point::new([rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0]))
            .collect();
        let k = 4;
        let g = knn_graph(&pts, k);
        let total_from_scores: f64 = g
            .scores()
            .iter()
            .map(|s| match s {
                ScoreValue::Finite(v) => *v,
                ScoreValue::Infinite => panic!("finite expected"),
            })
            .sum();

        // brute-force all-pairs oracle
        let mut edges = std::collections::BTreeSet::new();
        for i in 0..pts.len() {
            let mut d: Vec<(usize, f64)> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| (j, pts[i].dist(&pts[j])))
                .collect();
            d.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            for &(j, _) in d.iter().take(k) {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        let total_brute: f64 = edges.iter().map(|&(i, j)| pts[i].dist(&pts[j])).sum();
        assert!(
            (total_from_scores - total_brute).abs() < 1e-12,
            "{total_from_scores} vs {total_brute}"
        );
        assert_eq!(g.edges.len(), edges.len());
    }

    #[test]
    fn large_edge_indicator_cases() {
        let pts = vec![Point::new([0.0, 0.0]), Point::new([2.0, 0.0])];
        assert_eq!(knn_large_edge(&pts, &pts[0], 1, 1.0), Some(1));
        assert_eq!(knn_large_edge(&pts, &pts[1], 1, 1.0), Some(1));
        let dense: Vec<Point<2>> = (0..8)
            .map(|i| Point::new([0.1 * i as f64, 0.0]))
            .collect();
        assert_eq!(knn_large_edge(&dense, &dense[3], 1, 1.0), Some(0));
        // fewer than k others
        let lone = vec![Point::new([0.0, 0.0])];
        assert_eq!(knn_large_edge(&lone, &lone[0], 1, 1.0), Some(1));
    }

    #[test]
    fn large_edge_matches_sort_oracle_and_is_monotone() {
        let mut rng = crate::StreamKey::root(32).child(&[2]).rng();
        let mut pts: Vec<Point<2>> = (0..40)
            .map(|_| Point::new([rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]))
            .collect();
        let (k, a) = (3, 0.4);
        for i in 0..pts.len() {
            let got = knn_large_edge(&pts, &pts[i].clone(), k, a).unwrap();
            let mut d: Vec<f64> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| pts[j].dist(&pts[i]))
                .collect();
            d.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let want = u8::from(d[k - 1] >= a);
            assert_eq!(got, want);
        }
        // monotone decreasing under insertion
        let x = pts[0];
        let before = knn_large_edge(&pts, &x, k, a).unwrap();
        pts.push(Point::new([x.coords()[0] + 0.01, x.coords()[1]]));
        let after = knn_large_edge(&pts, &x, k, a).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn stabilization_radius_clips_faithfully() {
        let mut rng = crate::StreamKey::root(33).child(&[3]).rng();
        let pts: Vec<Point<2>> = (0..120)
            .map(|_| Point::new([rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0]))
            .collect();
        let k = 4;
        for i in (0..pts.len()).step_by(7) {
            let x = pts[i];
            let r = knn_stabilization_radius(&pts, &x, k).unwrap();
            let clipped: Vec<Point<2>> = pts.iter().copied().filter(|p| p.dist(&x) <= r).collect();
            let ci = index_of(&clipped, &x).unwrap();
            let full = knn_graph(&pts, k).score(i);
            assert_eq!(knn_graph(&clipped, k).score(ci), full);
        }
    }
}
