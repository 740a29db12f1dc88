//! Planar Voronoi cells by incremental half-plane clipping.
//!
//! The cell of a generator is carved from a huge bounding square by the
//! bisector half-planes against the other generators, nearest first with an
//! early exit once no remaining generator can cut the polygon. Cells that
//! keep a vertex of the bounding square are unbounded. Clipping uses closed
//! half-planes with ties resolved toward "inside" and generators processed
//! in (distance, index) order, so degenerate cocircular inputs still produce
//! a deterministic polygon.

use super::ScoreValue;
use crate::geometry::Point;

/// Scale factor of the clipping square relative to the data extent. Large
/// enough that any cell keeping a square vertex is clearly unbounded, small
/// enough that intersections on the square stay within ~1e-10 of exact, so
/// shared finite edges agree from both sides to the documented 1e-9.
const BIG_FACTOR: f64 = 1e5;

#[derive(Clone, Debug)]
pub enum VoronoiCell {
    Bounded {
        /// counterclockwise polygon vertices
        vertices: Vec<Point<2>>,
        /// generator index that produced the edge starting at each vertex
        /// (`u32::MAX` for a remnant of the bounding square)
        edge_source: Vec<u32>,
    },
    Unbounded,
}

impl VoronoiCell {
    pub fn perimeter(&self) -> Option<f64> {
        match self {
            VoronoiCell::Unbounded => None,
            VoronoiCell::Bounded { vertices, .. } => {
                let n = vertices.len();
                let mut acc = 0.0;
                for i in 0..n {
                    acc += vertices[i].dist(&vertices[(i + 1) % n]);
                }
                Some(acc)
            }
        }
    }

    /// Length of the cell edge contributed by generator `j`, when present.
    pub fn edge_length_against(&self, j: u32) -> Option<f64> {
        match self {
            VoronoiCell::Unbounded => None,
            VoronoiCell::Bounded {
                vertices,
                edge_source,
            } => {
                let n = vertices.len();
                let mut acc = 0.0;
                let mut found = false;
                for i in 0..n {
                    if edge_source[i] == j {
                        acc += vertices[i].dist(&vertices[(i + 1) % n]);
                        found = true;
                    }
                }
                found.then_some(acc)
            }
        }
    }
}

/// Voronoi cell of `pts[i]`.
pub fn voronoi_cell(pts: &[Point<2>], i: usize) -> VoronoiCell {
    // the clipping square is concentric with the generator and scaled by the
    // data spread around it, which keeps the construction translation- and
    // origin-independent up to coordinate rounding
    let x = pts[i];
    let mut extent = 1.0f64;
    for p in pts {
        extent = extent.max(p.dist(&x));
    }
    let big = extent * BIG_FACTOR;
    let (cx, cy) = (x.coords()[0], x.coords()[1]);
    let mut verts = vec![
        Point::new([cx - big, cy - big]),
        Point::new([cx + big, cy - big]),
        Point::new([cx + big, cy + big]),
        Point::new([cx - big, cy + big]),
    ];
    let mut sources = vec![u32::MAX; 4];

    let mut order: Vec<usize> = (0..pts.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        pts[a]
            .dist_sq(&x)
            .partial_cmp(&pts[b].dist_sq(&x))
            .unwrap()
            .then(a.cmp(&b))
    });

    for &j in &order {
        if verts.is_empty() {
            break;
        }
        // early exit: a generator farther than twice the polygon reach
        // cannot cut the cell, and the ordering is by distance
        let reach = verts
            .iter()
            .map(|v| v.dist(&x))
            .fold(0.0f64, f64::max);
        if pts[j].dist(&x) > 2.0 * reach {
            break;
        }
        clip(&mut verts, &mut sources, &x, &pts[j], j as u32);
    }

    if verts.len() < 3 {
        // the cell degenerated numerically; treat as unbounded
        return VoronoiCell::Unbounded;
    }
    if verts.iter().any(|v| v.dist(&x) > big / 2.0) {
        return VoronoiCell::Unbounded;
    }
    VoronoiCell::Bounded {
        vertices: verts,
        edge_source: sources,
    }
}

/// Clip the polygon by the closed half-plane of points no farther from `x`
/// than from `y` (Sutherland-Hodgman).
fn clip(
    verts: &mut Vec<Point<2>>,
    sources: &mut Vec<u32>,
    x: &Point<2>,
    y: &Point<2>,
    label: u32,
) {
    let mx = [
        (x.coords()[0] + y.coords()[0]) / 2.0,
        (x.coords()[1] + y.coords()[1]) / 2.0,
    ];
    let nx = y.coords()[0] - x.coords()[0];
    let ny = y.coords()[1] - x.coords()[1];
    let side = |p: &Point<2>| (p.coords()[0] - mx[0]) * nx + (p.coords()[1] - mx[1]) * ny;

    let n = verts.len();
    let mut out_v: Vec<Point<2>> = Vec::with_capacity(n + 2);
    let mut out_s: Vec<u32> = Vec::with_capacity(n + 2);
    for k in 0..n {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        let sa = side(&a);
        let sb = side(&b);
        let a_in = sa <= 0.0;
        let b_in = sb <= 0.0;
        let cross = |sa: f64, sb: f64| -> Point<2> {
            let t = sa / (sa - sb);
            Point::new([
                a.coords()[0] + t * (b.coords()[0] - a.coords()[0]),
                a.coords()[1] + t * (b.coords()[1] - a.coords()[1]),
            ])
        };
        match (a_in, b_in) {
            (true, true) => {
                out_v.push(a);
                out_s.push(sources[k]);
            }
            (true, false) => {
                out_v.push(a);
                out_s.push(sources[k]);
                out_v.push(cross(sa, sb));
                out_s.push(label);
            }
            (false, true) => {
                out_v.push(cross(sa, sb));
                out_s.push(sources[k]);
            }
            (false, false) => {}
        }
    }
    // drop zero-length edges from degenerate cuts
    let mut clean_v: Vec<Point<2>> = Vec::with_capacity(out_v.len());
    let mut clean_s: Vec<u32> = Vec::with_capacity(out_s.len());
    for k in 0..out_v.len() {
        let next = &out_v[(k + 1) % out_v.len()];
        if out_v[k].dist_sq(next) > 0.0 {
            clean_v.push(out_v[k]);
            clean_s.push(out_s[k]);
        }
    }
    *verts = clean_v;
    *sources = clean_s;
}

/// Half the boundary length of the Voronoi cell of `x` in `pts`, or
/// `Infinite` for unbounded cells.
pub fn voronoi_score(pts: &[Point<2>], x: &Point<2>) -> Option<ScoreValue> {
    let i = super::knn::index_of(pts, x)?;
    Some(match voronoi_cell(pts, i).perimeter() {
        Some(p) => ScoreValue::Finite(p / 2.0),
        None => ScoreValue::Infinite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn plus_configuration_gives_unit_square_cell() {
        let pts = vec![
            Point::new([0.0, 0.0]),
            Point::new([1.0, 0.0]),
            Point::new([-1.0, 0.0]),
            Point::new([0.0, 1.0]),
            Point::new([0.0, -1.0]),
        ];
        let s = voronoi_score(&pts, &pts[0]).unwrap();
        match s {
            ScoreValue::Finite(v) => assert!((v - 2.0).abs() < 1e-9, "score {v}"),
            ScoreValue::Infinite => panic!("cell should be bounded"),
        }
    }

    #[test]
    fn two_points_are_unbounded() {
        let pts = vec![Point::new([0.0, 0.0]), Point::new([1.0, 0.0])];
        assert_eq!(voronoi_score(&pts, &pts[0]).unwrap(), ScoreValue::Infinite);
        assert_eq!(voronoi_score(&pts, &pts[1]).unwrap(), ScoreValue::Infinite);
    }

    #[test]
    fn shared_edges_agree_from_both_sides() {
        let mut rng = crate::StreamKey::root(41).child(&[1]).rng();
        let pts: Vec<Point<2>> = (0..100)
            .map(|_| Point::new([rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0]))
            .collect();
        let cells: Vec<VoronoiCell> = (0..pts.len()).map(|i| voronoi_cell(&pts, i)).collect();
        let mut checked = 0;
        for i in 0..pts.len() {
            if let VoronoiCell::Bounded { edge_source, .. } = &cells[i] {
                for &j in edge_source {
                    if j == u32::MAX || (j as usize) < i {
                        continue;
                    }
                    let from_i = cells[i].edge_length_against(j);
                    let from_j = cells[j as usize].edge_length_against(i as u32);
                    if let (Some(a), Some(b)) = (from_i, from_j) {
                        assert!((a - b).abs() < 1e-9, "edge ({i},{j}): {a} vs {b}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100, "only {checked} shared edges checked");
    }

    #[test]
    fn insertion_shrinks_cells() {
        let mut rng = crate::StreamKey::root(42).child(&[2]).rng();
        for trial in 0..20 {
            let mut pts: Vec<Point<2>> = (0..30)
                .map(|_| Point::new([rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0]))
                .collect();
            let x = Point::new([1.5 + 0.01 * trial as f64, 1.5]);
            pts.push(x);
            let before = voronoi_score(&pts, &x).unwrap();
            pts.push(Point::new([rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0]));
            let after = voronoi_score(&pts, &x).unwrap();
            match (before, after) {
                (ScoreValue::Finite(b), ScoreValue::Finite(a)) => {
                    assert!(a <= b + 1e-9, "cell grew: {b} -> {a}")
                }
                (ScoreValue::Infinite, _) => {}
                (ScoreValue::Finite(_), ScoreValue::Infinite) => {
                    panic!("bounded cell became unbounded after insertion")
                }
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = crate::StreamKey::root(43).child(&[3]).rng();
        let pts: Vec<Point<2>> = (0..40)
            .map(|_| Point::new([rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]))
            .collect();
        let shift = [17.25, -3.5];
        let shifted: Vec<Point<2>> = pts.iter().map(|p| p.translate(&shift)).collect();
        for i in 0..pts.len() {
            let a = voronoi_cell(&pts, i).perimeter();
            let b = voronoi_cell(&shifted, i).perimeter();
            match (a, b) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9),
                (None, None) => {}
                _ => panic!("boundedness changed under translation"),
            }
        }
    }
}
