//! Persistent Betti numbers of the Čech filtration.
//!
//! `beta_q^{r,s}` is the rank of the map on q-th homology induced by growing
//! the ball radius from `r` to `s`. Degree 0 reduces to counting components
//! of the union of `s`-balls (every such component already contains an
//! `r`-component, so the map on components is onto and the count does not
//! depend on `r`). Degree 1 is computed in the plane from the 2-skeleton of
//! the Čech complex truncated at `s` by column reduction of the boundary
//! matrix over Z/2: the surviving 1-cycles born at values `<= r` are exactly
//! the classes alive from `r` to `s`.

use crate::geometry::{NeighborGrid, Point, PointPattern};
use crate::percolation::boolean_clusters;
use crate::{Error, Result};

/// Number of connected components of the union of closed `s`-balls.
pub fn betti0_count<const D: usize>(pts: &[Point<D>], s: f64) -> usize {
    if pts.is_empty() {
        return 0;
    }
    if s <= 0.0 {
        return pts.len();
    }
    let pattern = PointPattern::new(pts.to_vec()).expect("simple pattern");
    boolean_clusters(&pattern, 2.0 * s).n_clusters()
}

/// Čech filtration value of a triple: the radius of its minimum enclosing
/// ball (circumradius when the circumcenter lies inside the triangle, half
/// the longest edge otherwise).
pub fn cech_triangle_value(a: &Point<2>, b: &Point<2>, c: &Point<2>) -> f64 {
    let la = b.dist(c);
    let lb = a.dist(c);
    let lc = a.dist(b);
    let longest = la.max(lb).max(lc);
    // obtuse (or right) triangles are covered by the diametral ball of the
    // longest edge
    let sq = |x: f64| x * x;
    let acute = sq(la) + sq(lb) > sq(lc) + 1e-300
        && sq(lb) + sq(lc) > sq(la)
        && sq(la) + sq(lc) > sq(lb);
    if !acute {
        return longest / 2.0;
    }
    let area2 = {
        let ux = b.coords()[0] - a.coords()[0];
        let uy = b.coords()[1] - a.coords()[1];
        let vx = c.coords()[0] - a.coords()[0];
        let vy = c.coords()[1] - a.coords()[1];
        (ux * vy - uy * vx).abs()
    };
    la * lb * lc / (2.0 * area2)
}

#[derive(Clone, Debug)]
struct Simplex {
    value: f64,
    /// 0, 1, or 2
    dim: u8,
    verts: [u32; 3],
}

/// Persistent Betti number `beta_q^{r,s}` for `q ∈ {0, 1}`; `q = 1` requires
/// the plane.
pub fn persistent_betti<const D: usize>(
    pts: &[Point<D>],
    q: usize,
    r: f64,
    s: f64,
) -> Result<usize> {
    if !(0.0..).contains(&r) || r > s {
        return Err(Error::invalid("need 0 <= r <= s"));
    }
    match q {
        0 => Ok(betti0_count(pts, s)),
        1 => {
            if D != 2 {
                return Err(Error::invalid("beta_1 is implemented for d = 2 only"));
            }
            let pts2: Vec<Point<2>> = pts
                .iter()
                .map(|p| Point::new([p.coords()[0], p.coords()[1]]))
                .collect();
            Ok(betti1_plane(&pts2, r, s))
        }
        _ => Err(Error::invalid("persistent Betti supports q ∈ {0, 1}")),
    }
}

fn build_complex(pts: &[Point<2>], s: f64) -> Vec<Simplex> {
    let n = pts.len();
    let mut simplices: Vec<Simplex> = Vec::with_capacity(4 * n);
    for i in 0..n as u32 {
        simplices.push(Simplex {
            value: 0.0,
            dim: 0,
            verts: [i, 0, 0],
        });
    }
    // edges within 2s via the neighbor grid
    let grid = NeighborGrid::from_points((2.0 * s).max(1e-12), pts);
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        grid.for_each_within(p, 2.0 * s, |j, _| {
            if (j as usize) < i {
                edges.push((j, i as u32));
            }
        });
    }
    edges.sort_unstable();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        let value = pts[a as usize].dist(&pts[b as usize]) / 2.0;
        if value <= s {
            simplices.push(Simplex {
                value,
                dim: 1,
                verts: [a, b, 0],
            });
            adjacency[a as usize].push(b);
        }
    }
    // triangles: common neighbors of each retained edge
    for sx in simplices.clone() {
        if sx.dim != 1 {
            continue;
        }
        let (a, b) = (sx.verts[0], sx.verts[1]);
        for &c in &adjacency[a as usize] {
            if c > b && adjacency[b as usize].contains(&c) {
                let value = cech_triangle_value(
                    &pts[a as usize],
                    &pts[b as usize],
                    &pts[c as usize],
                );
                if value <= s {
                    simplices.push(Simplex {
                        value,
                        dim: 2,
                        verts: [a, b, c],
                    });
                }
            }
        }
    }
    simplices.sort_by(|x, y| {
        x.value
            .partial_cmp(&y.value)
            .unwrap()
            .then(x.dim.cmp(&y.dim))
            .then(x.verts.cmp(&y.verts))
    });
    simplices
}

fn betti1_plane(pts: &[Point<2>], r: f64, s: f64) -> usize {
    let simplices = build_complex(pts, s);
    let m = simplices.len();
    // position lookup for faces
    let mut edge_pos: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
    let mut vert_pos: Vec<u32> = vec![0; pts.len()];
    for (pos, sx) in simplices.iter().enumerate() {
        match sx.dim {
            0 => vert_pos[sx.verts[0] as usize] = pos as u32,
            1 => {
                edge_pos.insert((sx.verts[0], sx.verts[1]), pos as u32);
            }
            _ => {}
        }
    }
    // boundary columns as sorted position lists
    let mut columns: Vec<Vec<u32>> = Vec::with_capacity(m);
    for sx in &simplices {
        let mut col = match sx.dim {
            0 => Vec::new(),
            1 => vec![
                vert_pos[sx.verts[0] as usize],
                vert_pos[sx.verts[1] as usize],
            ],
            _ => {
                let [a, b, c] = sx.verts;
                vec![
                    edge_pos[&(a, b)],
                    edge_pos[&(a.min(c), a.max(c))],
                    edge_pos[&(b.min(c), b.max(c))],
                ]
            }
        };
        col.sort_unstable();
        columns.push(col);
    }
    // standard Z/2 column reduction
    let mut low_to_col: Vec<Option<u32>> = vec![None; m];
    let mut killed_edge = vec![false; m];
    let mut positive = vec![false; m];
    for j in 0..m {
        let mut col = std::mem::take(&mut columns[j]);
        while let Some(&low) = col.last() {
            match low_to_col[low as usize] {
                Some(pivot) => col = sym_diff(&col, &columns[pivot as usize]),
                None => break,
            }
        }
        if let Some(&low) = col.last() {
            low_to_col[low as usize] = Some(j as u32);
            if simplices[j].dim == 2 {
                killed_edge[low as usize] = true;
            }
        } else {
            positive[j] = true;
        }
        columns[j] = col;
    }
    // surviving 1-cycles born no later than r
    (0..m)
        .filter(|&j| {
            simplices[j].dim == 1 && positive[j] && !killed_edge[j] && simplices[j].value <= r
        })
        .count()
}

fn sym_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}
