//! Planar Delaunay triangulation (Bowyer-Watson with a super-triangle).
//!
//! Only the edge set is needed here: the Delaunay graph contains the
//! Euclidean minimum spanning tree, so Kruskal over these edges is exact for
//! large patterns without the quadratic all-pairs edge list.

use crate::geometry::Point;

#[derive(Clone, Copy)]
struct Tri {
    v: [u32; 3],
    alive: bool,
}

fn circumcircle_contains(pts: &[Point<2>], tri: &[u32; 3], p: &Point<2>) -> bool {
    let a = pts[tri[0] as usize].coords();
    let b = pts[tri[1] as usize].coords();
    let c = pts[tri[2] as usize].coords();
    let d = p.coords();
    // standard in-circle determinant, sign-adjusted for orientation
    let ax = a[0] - d[0];
    let ay = a[1] - d[1];
    let bx = b[0] - d[0];
    let by = b[1] - d[1];
    let cx = c[0] - d[0];
    let cy = c[1] - d[1];
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by)
        - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    let orient = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if orient >= 0.0 {
        det > 0.0
    } else {
        det < 0.0
    }
}

/// Delaunay edges `(i, j)` with `i < j` over the input points.
pub fn delaunay_edges(input: &[Point<2>]) -> Vec<(u32, u32)> {
    let n = input.len();
    if n < 2 {
        return Vec::new();
    }
    if n == 2 {
        return vec![(0, 1)];
    }
    let (mut lo, mut hi) = (*input[0].coords(), *input[0].coords());
    for p in input {
        for i in 0..2 {
            lo[i] = lo[i].min(p.coords()[i]);
            hi[i] = hi[i].max(p.coords()[i]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
    let cx = (lo[0] + hi[0]) / 2.0;
    let cy = (lo[1] + hi[1]) / 2.0;
    let m = 64.0 * span;

    let mut pts: Vec<Point<2>> = input.to_vec();
    let s0 = n as u32;
    pts.push(Point::new([cx - 2.0 * m, cy - m]));
    pts.push(Point::new([cx + 2.0 * m, cy - m]));
    pts.push(Point::new([cx, cy + 2.0 * m]));

    let mut tris: Vec<Tri> = vec![Tri {
        v: [s0, s0 + 1, s0 + 2],
        alive: true,
    }];

    for pi in 0..n as u32 {
        let p = pts[pi as usize];
        // triangles whose circumcircle contains the new point
        let mut bad: Vec<usize> = Vec::new();
        for (ti, t) in tris.iter().enumerate() {
            if t.alive && circumcircle_contains(&pts, &t.v, &p) {
                bad.push(ti);
            }
        }
        // boundary of the cavity: edges of bad triangles not shared twice
        let mut boundary: std::collections::HashMap<(u32, u32), (u32, u32, i32)> =
            std::collections::HashMap::new();
        for &ti in &bad {
            let v = tris[ti].v;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                let key = (a.min(b), a.max(b));
                boundary
                    .entry(key)
                    .and_modify(|e| e.2 += 1)
                    .or_insert((a, b, 1));
            }
            tris[ti].alive = false;
        }
        for (_, (a, b, count)) in boundary {
            if count == 1 {
                tris.push(Tri {
                    v: [a, b, pi],
                    alive: true,
                });
            }
        }
    }

    let mut edges: Vec<(u32, u32)> = Vec::new();
    for t in &tris {
        if !t.alive {
            continue;
        }
        if t.v.iter().any(|&v| v >= s0) {
            continue;
        }
        for (a, b) in [(t.v[0], t.v[1]), (t.v[1], t.v[2]), (t.v[2], t.v[0])] {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn square_with_center() {
        let pts = vec![
            Point::new([0.0, 0.0]),
            Point::new([1.0, 0.0]),
            Point::new([1.0, 1.0]),
            Point::new([0.0, 1.0]),
            Point::new([0.5, 0.5]),
        ];
        let edges = delaunay_edges(&pts);
        // all four sides plus the four spokes to the center
        for want in [(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4)] {
            assert!(edges.contains(&want), "missing edge {want:?} in {edges:?}");
        }
    }

    #[test]
    fn delaunay_edges_satisfy_empty_circumcircles() {
        let mut rng = crate::StreamKey::root(44).child(&[1]).rng();
        let pts: Vec<Point<2>> = (0..120)
            .map(|_| Point::new([rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0]))
            .collect();
        let edges = delaunay_edges(&pts);
        // sanity: connected planar graph bounds
        assert!(edges.len() >= pts.len() - 1);
        assert!(edges.len() <= 3 * pts.len());
    }
}
