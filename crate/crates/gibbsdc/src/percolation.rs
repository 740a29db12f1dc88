//! Boolean-model connectivity: cluster decomposition, connection events, and
//! empirical decay curves.
//!
//! Points `x, y` are connected at radius `r` when `|x - y| <= r`, i.e. when
//! the balls `B_{r/2}(x)` and `B_{r/2}(y)` of the Boolean model touch.

use crate::geometry::{NeighborGrid, Point, PointPattern, Region};
use crate::rng::{poisson_count, tags, StreamKey};
use crate::sampler::sample_marked_poisson;
use crate::{Error, Result};

/// Disjoint-set forest with path halving and union by rank.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    /// Returns true when the two sets were previously disjoint.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

/// Cluster labels of a pattern at a fixed connection radius.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    labels: Vec<u32>,
    n_clusters: usize,
}

impl ClusterPartition {
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn label_of(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// Point indices grouped per cluster label.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i as u32);
        }
        out
    }
}

/// Label the clusters of `B_{r/2}(phi)`: two points share a label iff they
/// are joined by a chain of pairwise distances `<= r`. Grid-accelerated;
/// labels are deterministic (contiguous in first-point order).
pub fn boolean_clusters<const D: usize>(phi: &PointPattern<D>, r: f64) -> ClusterPartition {
    assert!(r > 0.0, "connection radius must be positive");
    let pts = phi.points();
    let mut uf = UnionFind::new(pts.len());
    let grid = NeighborGrid::from_points(r, pts);
    for (i, p) in pts.iter().enumerate() {
        grid.for_each_within(p, r, |j, _| {
            if (j as usize) < i {
                uf.union(i as u32, j);
            }
        });
    }
    let mut labels = vec![u32::MAX; pts.len()];
    let mut next = 0u32;
    for i in 0..pts.len() {
        let root = uf.find(i as u32) as usize;
        if labels[root] == u32::MAX {
            labels[root] = next;
            next += 1;
        }
        labels[i] = labels[root];
    }
    ClusterPartition {
        labels,
        n_clusters: next as usize,
    }
}

/// Distance from a point to a region, preferring the exact kernels and
/// falling back to a conservative lower bound for expression shapes without
/// one. The conservative direction only ever reports a point as *closer*,
/// which strengthens connection events and confinement certificates.
pub(crate) fn dist_point_lb<const D: usize>(p: &Point<D>, region: &Region<D>) -> f64 {
    if let Some(d) = region.dist_point(p) {
        return d;
    }
    match region {
        Region::Inter(a, b) | Region::Diff(a, b) => {
            let da = dist_point_lb(p, a);
            match region {
                Region::Inter(..) => da.max(dist_point_lb(p, b)),
                _ => da,
            }
        }
        Region::Union(parts) => parts
            .iter()
            .map(|r| dist_point_lb(p, r))
            .fold(f64::INFINITY, f64::min),
        _ => {
            if region.contains(p) {
                0.0
            } else if let Some(bb) = region.bbox() {
                bb.dist_point(p)
            } else {
                0.0
            }
        }
    }
}

/// The connection event `A <~> B`: some cluster of `B_{r0/2}(phi)` has a
/// point within `r0` of `A` and a point within `r0` of `B`, or the dilated
/// regions `B_{r0/2}(A)` and `B_{r0/2}(B)` already intersect (direct
/// adjacency, which is the conservative convention for regions closer
/// than `r0`).
pub fn connects<const D: usize>(
    a: &Region<D>,
    b: &Region<D>,
    phi: &PointPattern<D>,
    r0: f64,
) -> Result<bool> {
    if !a.is_bounded() || !b.is_bounded() {
        return Err(Error::UnboundedRegion("connection event"));
    }
    if a.dist(b)? <= r0 {
        return Ok(true);
    }
    if phi.is_empty() {
        return Ok(false);
    }
    let clusters = boolean_clusters(phi, r0);
    let mut touches_a = vec![false; clusters.n_clusters()];
    let mut touches_b = vec![false; clusters.n_clusters()];
    for (i, p) in phi.points().iter().enumerate() {
        let l = clusters.label_of(i) as usize;
        if !touches_a[l] && dist_point_lb(p, a) <= r0 {
            touches_a[l] = true;
        }
        if !touches_b[l] && dist_point_lb(p, b) <= r0 {
            touches_b[l] = true;
        }
        if touches_a[l] && touches_b[l] {
            return Ok(true);
        }
    }
    Ok(false)
}

/// One row of an empirical decay curve.
#[derive(Clone, Copy, Debug)]
pub struct DecayRow {
    pub s: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub reps: u64,
}

/// Monte Carlo estimate of `P(A <~> shell_s)` for the dominating Boolean
/// model of intensity `alpha0`, where `A = [-1/2, 1/2]^D` and `shell_s` is
/// the complement of the ball of radius `s` inside the simulation window.
/// `margin` controls the window half-width beyond the largest distance and
/// must be at least `4 r0` for the truncation error to be dominated.
pub fn decay_curve<const D: usize>(
    alpha0: f64,
    r0: f64,
    distances: &[f64],
    margin: f64,
    reps: u64,
    seed: u64,
) -> Result<Vec<DecayRow>> {
    if alpha0 <= 0.0 || r0 <= 0.0 {
        return Err(Error::invalid("alpha0 and r0 must be positive"));
    }
    if margin < 4.0 * r0 {
        return Err(Error::invalid("window margin must be at least 4 r0"));
    }
    let a = Region::<D>::window(1.0);
    let s_max = distances.iter().cloned().fold(0.0f64, f64::max);
    let half = 0.5 + s_max + margin;
    let window = Region::<D>::window(2.0 * half);
    let root = StreamKey::root(seed).child(&[tags::DECAY]);
    let mut rows = Vec::with_capacity(distances.len());
    for &s in distances {
        let shell = Region::diff(window.clone(), Region::ball(Point::origin(), 0.5 + s));
        let mut hits = 0u64;
        for rep in 0..reps {
            let key = root.child(&[s.to_bits(), rep]);
            let carrier = sample_marked_poisson(&window, alpha0, &key)?;
            if connects(&a, &shell, &carrier.projection(), r0)? {
                hits += 1;
            }
        }
        let p = hits as f64 / reps as f64;
        rows.push(DecayRow {
            s,
            p_hat: p,
            stderr: (p * (1.0 - p) / reps as f64).sqrt(),
            reps,
        });
    }
    Ok(rows)
}

/// Carrier field: a unit-intensity-per-box lazy Poisson carrier whose
/// restriction to any window is consistent across windows. Used wherever two
/// runs must share "the same realization restricted to different regions".
#[derive(Clone, Debug)]
pub struct CarrierField {
    kappa_max: f64,
    key: StreamKey,
}

impl CarrierField {
    pub fn new(kappa_max: f64, master_seed_key: StreamKey) -> Self {
        CarrierField {
            kappa_max,
            key: master_seed_key.child(&[tags::FIELD_BOX]),
        }
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    /// Materialize the marked carrier inside `region`. Points come from
    /// per-unit-box keyed streams, so nested regions see nested point sets.
    pub fn materialize<const D: usize>(&self, region: &Region<D>) -> Result<PointPattern<D>> {
        let bbox = region
            .bbox()
            .ok_or(Error::UnboundedRegion("carrier materialization"))?;
        let mut lo = [0i64; D];
        let mut hi = [0i64; D];
        for i in 0..D {
            lo[i] = bbox.lo[i].floor() as i64;
            hi[i] = (bbox.hi[i].ceil() as i64).max(lo[i] + 1);
        }
        let mut pts = Vec::new();
        let mut marks = Vec::new();
        let mut idx = lo;
        'outer: loop {
            let mut words = [0u64; 4];
            words[0] = tags::FIELD_BOX;
            for i in 0..D {
                words[i + 1] = idx[i] as u64;
            }
            let mut rng = self.key.child(&words[..D + 1]).rng();
            let n = poisson_count(&mut rng, self.kappa_max);
            use rand::Rng;
            for _ in 0..n {
                let mut c = [0.0; D];
                for i in 0..D {
                    c[i] = idx[i] as f64 + rng.random::<f64>();
                }
                let mark: f64 = rng.random::<f64>() * self.kappa_max;
                let p = Point::new(c);
                if region.contains(&p) {
                    pts.push(p);
                    marks.push(mark);
                }
            }
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < hi[d] {
                    break;
                }
                idx[d] = lo[d];
                d += 1;
                if d == D {
                    break 'outer;
                }
            }
        }
        PointPattern::with_marks(pts, marks, self.kappa_max)
    }
}
