//! Total edge length of the Euclidean minimum spanning tree.

use super::delaunay::delaunay_edges;
use crate::geometry::Point;
use crate::percolation::UnionFind;

/// Above this size the planar path switches from all-pairs Kruskal to
/// Kruskal over Delaunay edges (which contain the EMST).
const ALL_PAIRS_LIMIT: usize = 2_000;

fn kruskal<const D: usize>(pts: &[Point<D>], mut edges: Vec<(u32, u32)>) -> f64 {
    // ties broken by the lexicographic edge key; almost surely irrelevant
    edges.sort_by(|&(a0, b0), &(a1, b1)| {
        let d0 = pts[a0 as usize].dist_sq(&pts[b0 as usize]);
        let d1 = pts[a1 as usize].dist_sq(&pts[b1 as usize]);
        d0.partial_cmp(&d1)
            .unwrap()
            .then(a0.cmp(&a1))
            .then(b0.cmp(&b1))
    });
    let mut uf = UnionFind::new(pts.len());
    let mut total = 0.0;
    let mut used = 0;
    for (a, b) in edges {
        if uf.union(a, b) {
            total += pts[a as usize].dist(&pts[b as usize]);
            used += 1;
            if used + 1 == pts.len() {
                break;
            }
        }
    }
    total
}

/// Total MST edge length (0 for empty and singleton patterns).
pub fn mst_total_length<const D: usize>(pts: &[Point<D>]) -> f64 {
    let n = pts.len();
    if n <= 1 {
        return 0.0;
    }
    if D == 2 && n > ALL_PAIRS_LIMIT {
        let pts2: Vec<Point<2>> = pts
            .iter()
            .map(|p| Point::new([p.coords()[0], p.coords()[1]]))
            .collect();
        let edges = delaunay_edges(&pts2);
        return kruskal(&pts2, edges);
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n as u32 {
        for j in 0..i {
            edges.push((j, i));
        }
    }
    kruskal(pts, edges)
}

/// Maximum vertex degree of the MST (diagnostic; 0 for patterns with fewer
/// than two points).
pub fn mst_max_degree<const D: usize>(pts: &[Point<D>]) -> usize {
    let n = pts.len();
    if n <= 1 {
        return 0;
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n as u32 {
        for j in 0..i {
            edges.push((j, i));
        }
    }
    edges.sort_by(|&(a0, b0), &(a1, b1)| {
        let d0 = pts[a0 as usize].dist_sq(&pts[b0 as usize]);
        let d1 = pts[a1 as usize].dist_sq(&pts[b1 as usize]);
        d0.partial_cmp(&d1)
            .unwrap()
            .then(a0.cmp(&a1))
            .then(b0.cmp(&b1))
    });
    let mut uf = UnionFind::new(n);
    let mut deg = vec![0usize; n];
    for (a, b) in edges {
        if uf.union(a, b) {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
    }
    deg.into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn two_points() {
        let pts = vec![Point::new([0.0, 0.0]), Point::new([3.0, 4.0])];
        assert!((mst_total_length(&pts) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_equally_spaced() {
        let h = 0.7;
        let pts: Vec<Point<2>> = (0..9).map(|i| Point::new([h * i as f64, 0.0])).collect();
        assert!((mst_total_length(&pts) - 8.0 * h).abs() < 1e-12);
    }

    /// Exhaustive spanning-tree oracle via Pruefer sequences (n^{n-2} trees).
    fn exhaustive_mst(pts: &[Point<2>]) -> f64 {
        let n = pts.len();
        assert!((2..=8).contains(&n));
        let mut best = f64::INFINITY;
        let seqs = (n as u64).pow(n as u32 - 2);
        for code in 0..seqs {
            // decode Pruefer sequence
            let mut seq = Vec::with_capacity(n - 2);
            let mut c = code;
            for _ in 0..n - 2 {
                seq.push((c % n as u64) as usize);
                c /= n as u64;
            }
            let mut degree = vec![1usize; n];
            for &s in &seq {
                degree[s] += 1;
            }
            let mut total = 0.0;
            let mut deg = degree.clone();
            let mut used = vec![false; n];
            for &s in &seq {
                let leaf = (0..n).find(|&v| deg[v] == 1 && !used[v]).unwrap();
                total += pts[leaf].dist(&pts[s]);
                used[leaf] = true;
                deg[s] -= 1;
                deg[leaf] -= 1;
            }
            let rest: Vec<usize> = (0..n).filter(|&v| !used[v] && deg[v] == 1).collect();
            total += pts[rest[0]].dist(&pts[rest[1]]);
            if total < best {
                best = total;
            }
        }
        best
    }

    #[test]
    fn kruskal_matches_exhaustive_enumeration() {
        let mut rng = crate::StreamKey::root(51).child(&[1]).rng();
        for _ in 0..25 {
            let pts: Vec<Point<2>> = (0..7)
                .map(|_| Point::new([rng.random::<f64>(), rng.random::<f64>()]))
                .collect();
            let got = mst_total_length(&pts);
            let want = exhaustive_mst(&pts);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn delaunay_path_matches_all_pairs() {
        let mut rng = crate::StreamKey::root(52).child(&[2]).rng();
        let pts: Vec<Point<2>> = (0..400)
            .map(|_| Point::new([rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0]))
            .collect();
        let brute = mst_total_length(&pts);
        let edges = delaunay_edges(&pts);
        let via_delaunay = kruskal(&pts, edges);
        assert!(
            (brute - via_delaunay).abs() < 1e-9,
            "{brute} vs {via_delaunay}"
        );
    }

    #[test]
    fn planar_degree_bound() {
        let mut rng = crate::StreamKey::root(53).child(&[3]).rng();
        for trial in 0..10 {
            let pts: Vec<Point<2>> = (0..150)
                .map(|_| Point::new([rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0]))
                .collect();
            let d = mst_max_degree(&pts);
            assert!(d <= 6, "trial {trial}: degree {d} above the planar bound");
        }
    }

    #[test]
    fn removal_difference_within_rewiring_bound() {
        // |H(phi) - H(phi \ Q_{z,m})| is controlled by the rewiring bound
        // d_max * #(phi ∩ Q_{z,m}) * (2L + sqrt(d) m) + sqrt(d) K * #(phi ∩ Q_{z,m}),
        // with L the longest crossing MST edge and K the smallest box around z
        // capturing a point outside Q_{z,m}; all measured on the realization.
        use crate::geometry::{Aabb, PointPattern, Region};
        use rand::Rng;
        let mut rng = crate::StreamKey::root(55).child(&[5]).rng();
        for trial in 0..10 {
            let pts: Vec<Point<2>> = (0..120)
                .map(|_| Point::new([rng.random::<f64>() * 8.0, rng.random::<f64>() * 8.0]))
                .collect();
            let z = [4.0 + 0.1 * trial as f64, 4.0];
            let m = 2.0;
            let bx = Aabb::new([z[0] - m / 2.0, z[1] - m / 2.0], [z[0] + m / 2.0, z[1] + m / 2.0]);
            let inside: Vec<Point<2>> = pts.iter().copied().filter(|p| bx.contains(p)).collect();
            if inside.is_empty() {
                continue;
            }
            let outside: Vec<Point<2>> = pts.iter().copied().filter(|p| !bx.contains(p)).collect();
            let h_full = mst_total_length(&pts);
            let h_out = mst_total_length(&outside);

            // K: smallest k >= m with a point of phi \ Q_{z,m} inside Q_{z,k}
            let k_zm = outside
                .iter()
                .map(|p| 2.0 * (p.coords()[0] - z[0]).abs().max((p.coords()[1] - z[1]).abs()))
                .fold(f64::INFINITY, f64::min)
                .max(m);
            // L: longest full-MST edge with exactly one endpoint inside
            let full_pat = PointPattern::new(pts.clone()).unwrap();
            let _ = &full_pat;
            let mut edges = Vec::new();
            for i in 0..pts.len() as u32 {
                for j in 0..i {
                    edges.push((j, i));
                }
            }
            edges.sort_by(|&(a0, b0), &(a1, b1)| {
                pts[a0 as usize]
                    .dist_sq(&pts[b0 as usize])
                    .partial_cmp(&pts[a1 as usize].dist_sq(&pts[b1 as usize]))
                    .unwrap()
                    .then(a0.cmp(&a1))
                    .then(b0.cmp(&b1))
            });
            let mut uf = crate::percolation::UnionFind::new(pts.len());
            let mut l_max = 0.0f64;
            for (a, b) in edges {
                if uf.union(a, b) {
                    let cross = bx.contains(&pts[a as usize]) != bx.contains(&pts[b as usize]);
                    if cross {
                        l_max = l_max.max(pts[a as usize].dist(&pts[b as usize]));
                    }
                }
            }
            let d_max = 6.0;
            let sqrt_d = 2.0f64.sqrt();
            let count = inside.len() as f64;
            let bound =
                d_max * count * (2.0 * l_max + sqrt_d * m) + sqrt_d * k_zm * count;
            let diff = (h_full - h_out).abs();
            assert!(
                diff <= bound + 1e-9,
                "trial {trial}: |{h_full} - {h_out}| = {diff} > bound {bound}"
            );
            let q = Region::Box(bx);
            let _ = q;
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = crate::StreamKey::root(54).child(&[4]).rng();
        let pts: Vec<Point<2>> = (0..60)
            .map(|_| Point::new([rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let shifted: Vec<Point<2>> = pts.iter().map(|p| p.translate(&[5.5, -2.25])).collect();
        assert!((mst_total_length(&pts) - mst_total_length(&shifted)).abs() < 1e-9);
    }
}
