//! Points, patterns, regions, and order maps.
//!
//! Everything here is immutable after construction and safe to share across
//! replicate workers.

mod order;
mod region;

pub use order::{order_sort, sorted_indices, OrderMap};
pub use region::{Region, RegionPredicate};

use crate::{Error, Result};

/// A point in `D`-dimensional Euclidean space (`D` is 2 or 3 throughout).
#[derive(Clone, Copy, PartialEq)]
pub struct Point<const D: usize>([f64; D]);

impl<const D: usize> Point<D> {
    pub fn new(coords: [f64; D]) -> Self {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Point(coords)
    }

    pub fn origin() -> Self {
        Point([0.0; D])
    }

    #[inline]
    pub fn coords(&self) -> &[f64; D] {
        &self.0
    }

    #[inline]
    pub fn dist(&self, other: &Point<D>) -> f64 {
        self.dist_sq(other).sqrt()
    }

    #[inline]
    pub fn dist_sq(&self, other: &Point<D>) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let d = self.0[i] - other.0[i];
            s += d * d;
        }
        s
    }

    /// Sup-norm distance from the origin.
    #[inline]
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn translate(&self, shift: &[f64; D]) -> Self {
        let mut c = self.0;
        for i in 0..D {
            c[i] += shift[i];
        }
        Point(c)
    }

    /// Total order on coordinate tuples; used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Point<D>) -> std::cmp::Ordering {
        for i in 0..D {
            match self.0[i].partial_cmp(&other.0[i]).expect("finite coords") {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl<const D: usize> std::fmt::Debug for Point<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Axis-aligned box, closed on both sides.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<const D: usize> {
    pub lo: [f64; D],
    pub hi: [f64; D],
}

impl<const D: usize> Aabb<D> {
    pub fn new(lo: [f64; D], hi: [f64; D]) -> Self {
        Aabb { lo, hi }
    }

    /// The cube `[-n/2, n/2]^D`.
    pub fn centered(n: f64) -> Self {
        Aabb {
            lo: [-n / 2.0; D],
            hi: [n / 2.0; D],
        }
    }

    pub fn around(center: &Point<D>, radius: f64) -> Self {
        let mut lo = *center.coords();
        let mut hi = *center.coords();
        for i in 0..D {
            lo[i] -= radius;
            hi[i] += radius;
        }
        Aabb { lo, hi }
    }

    #[inline]
    pub fn contains(&self, p: &Point<D>) -> bool {
        (0..D).all(|i| p.coords()[i] >= self.lo[i] && p.coords()[i] <= self.hi[i])
    }

    pub fn is_empty(&self) -> bool {
        (0..D).any(|i| self.lo[i] > self.hi[i])
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..D).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn intersect(&self, other: &Aabb<D>) -> Aabb<D> {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..D {
            lo[i] = lo[i].max(other.lo[i]);
            hi[i] = hi[i].min(other.hi[i]);
        }
        Aabb { lo, hi }
    }

    pub fn hull(&self, other: &Aabb<D>) -> Aabb<D> {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for i in 0..D {
            lo[i] = lo[i].min(other.lo[i]);
            hi[i] = hi[i].max(other.hi[i]);
        }
        Aabb { lo, hi }
    }

    /// Exact distance from a point to the box.
    pub fn dist_point(&self, p: &Point<D>) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let c = p.coords()[i];
            let d = if c < self.lo[i] {
                self.lo[i] - c
            } else if c > self.hi[i] {
                c - self.hi[i]
            } else {
                0.0
            };
            s += d * d;
        }
        s.sqrt()
    }

    /// Distance from an interior point to the box complement (0 outside).
    pub fn dist_to_complement(&self, p: &Point<D>) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        let mut m = f64::INFINITY;
        for i in 0..D {
            m = m.min(p.coords()[i] - self.lo[i]);
            m = m.min(self.hi[i] - p.coords()[i]);
        }
        m
    }

    pub fn diameter(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..D)
            .map(|i| (self.hi[i] - self.lo[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Volume of the unit ball in `D` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("dimension {d} not supported"),
    }
}

/// A finite simple point configuration, optionally carrying marks in
/// `[0, bound]` (the thinning marks of the dominated Poisson carrier).
#[derive(Clone, Debug, PartialEq)]
pub struct PointPattern<const D: usize> {
    points: Vec<Point<D>>,
    marks: Option<Vec<f64>>,
}

impl<const D: usize> PointPattern<D> {
    /// Build an unmarked pattern. Duplicate coordinates are an error: the
    /// toolkit works on simple configurations and a duplicate signals a bug
    /// or a degenerate input.
    pub fn new(points: Vec<Point<D>>) -> Result<Self> {
        check_simple(&points)?;
        Ok(PointPattern {
            points,
            marks: None,
        })
    }

    pub fn empty() -> Self {
        PointPattern {
            points: Vec::new(),
            marks: None,
        }
    }

    /// Build a marked pattern; every mark must lie in `[0, bound]`.
    pub fn with_marks(points: Vec<Point<D>>, marks: Vec<f64>, bound: f64) -> Result<Self> {
        if points.len() != marks.len() {
            return Err(Error::MarkLength {
                points: points.len(),
                marks: marks.len(),
            });
        }
        for (i, &m) in marks.iter().enumerate() {
            if !(0.0..=bound).contains(&m) {
                return Err(Error::MarkOutOfRange {
                    index: i,
                    value: m,
                    bound,
                });
            }
        }
        check_simple(&points)?;
        Ok(PointPattern {
            points,
            marks: Some(marks),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<D>] {
        &self.points
    }

    pub fn marks(&self) -> Option<&[f64]> {
        self.marks.as_deref()
    }

    /// Drop marks, keeping only locations.
    pub fn projection(&self) -> PointPattern<D> {
        PointPattern {
            points: self.points.clone(),
            marks: None,
        }
    }

    /// Restriction to a region, preserving marks.
    pub fn restrict(&self, region: &Region<D>) -> PointPattern<D> {
        let mut points = Vec::new();
        let mut marks = self.marks.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if region.contains(p) {
                points.push(*p);
                if let (Some(ms), Some(src)) = (marks.as_mut(), self.marks.as_ref()) {
                    ms.push(src[i]);
                }
            }
        }
        PointPattern { points, marks }
    }

    pub fn translate(&self, shift: &[f64; D]) -> PointPattern<D> {
        PointPattern {
            points: self.points.iter().map(|p| p.translate(shift)).collect(),
            marks: self.marks.clone(),
        }
    }

    /// Union of two disjoint patterns (marks dropped).
    pub fn union(&self, other: &PointPattern<D>) -> Result<PointPattern<D>> {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        PointPattern::new(points)
    }

    /// Serialize as CSV rows `x,y[,z][,mark]` at full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = ["x", "y", "z"][..D].to_vec();
        if self.marks.is_some() {
            header.push("mark");
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            let mut fields: Vec<String> =
                p.coords().iter().map(|c| format!("{c:.16e}")).collect();
            if let Some(ms) = &self.marks {
                fields.push(format!("{:.16e}", ms[i]));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse the CSV format produced by [`PointPattern::to_csv`],
    /// skipping `#` comment lines (output-file provenance headers).
    pub fn from_csv(text: &str) -> Result<PointPattern<D>> {
        let mut lines = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty point CSV"))?;
        let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
        let has_mark = cols.last() == Some(&"mark");
        let want = D + usize::from(has_mark);
        if cols.len() != want {
            return Err(Error::invalid(format!(
                "point CSV has {} columns, expected {want} for d={D}",
                cols.len()
            )));
        }
        let mut points = Vec::new();
        let mut marks = Vec::new();
        for (ln, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != want {
                return Err(Error::invalid(format!("bad field count at data row {ln}")));
            }
            let mut c = [0.0; D];
            for i in 0..D {
                c[i] = fields[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad number at data row {ln}")))?;
            }
            points.push(Point::new(c));
            if has_mark {
                marks.push(
                    fields[D]
                        .trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad mark at data row {ln}")))?,
                );
            }
        }
        if has_mark {
            PointPattern::with_marks(points, marks, f64::INFINITY)
        } else {
            PointPattern::new(points)
        }
    }
}

fn check_simple<const D: usize>(points: &[Point<D>]) -> Result<()> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].lex_cmp(&points[b]));
    for w in idx.windows(2) {
        if points[w[0]].lex_cmp(&points[w[1]]) == std::cmp::Ordering::Equal {
            return Err(Error::DuplicatePoint(w[1].max(w[0])));
        }
    }
    Ok(())
}

/// Uniform hash grid over point indices for fixed-radius neighbor queries.
#[derive(Clone, Debug)]
pub struct NeighborGrid<const D: usize> {
    cell: f64,
    map: std::collections::HashMap<[i64; D], Vec<u32>>,
    points: Vec<Point<D>>,
}

impl<const D: usize> NeighborGrid<D> {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0);
        NeighborGrid {
            cell,
            map: std::collections::HashMap::new(),
            points: Vec::new(),
        }
    }

    pub fn from_points(cell: f64, pts: &[Point<D>]) -> Self {
        let mut g = Self::new(cell);
        for p in pts {
            g.insert(*p);
        }
        g
    }

    fn key(&self, p: &Point<D>) -> [i64; D] {
        let mut k = [0i64; D];
        for i in 0..D {
            k[i] = (p.coords()[i] / self.cell).floor() as i64;
        }
        k
    }

    pub fn insert(&mut self, p: Point<D>) -> u32 {
        let id = self.points.len() as u32;
        let k = self.key(&p);
        self.map.entry(k).or_default().push(id);
        self.points.push(p);
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<D>] {
        &self.points
    }

    /// Visit all stored points within `r` of `x`. The stencil widens with
    /// `r / cell`; when it would dwarf the point count the query degrades to
    /// a linear scan, which is then the cheaper exact option anyway.
    pub fn for_each_within(&self, x: &Point<D>, r: f64, mut f: impl FnMut(u32, &Point<D>)) {
        let reach = (r / self.cell).ceil() as i64;
        let r2 = r * r;
        let cells = (2 * reach + 1).pow(D as u32) as usize;
        if cells > 8 * self.points.len() + 64 {
            for (id, p) in self.points.iter().enumerate() {
                if p.dist_sq(x) <= r2 {
                    f(id as u32, p);
                }
            }
            return;
        }
        let center = self.key(x);
        let mut offs = [0i64; D];
        self.visit_cells(&center, reach, &mut offs, 0, &mut |key| {
            if let Some(ids) = self.map.get(key) {
                for &id in ids {
                    let p = &self.points[id as usize];
                    if p.dist_sq(x) <= r2 {
                        f(id, p);
                    }
                }
            }
        });
    }

    fn visit_cells(
        &self,
        center: &[i64; D],
        reach: i64,
        offs: &mut [i64; D],
        dim: usize,
        f: &mut impl FnMut(&[i64; D]),
    ) {
        if dim == D {
            let mut key = *center;
            for i in 0..D {
                key[i] += offs[i];
            }
            f(&key);
            return;
        }
        for o in -reach..=reach {
            offs[dim] = o;
            self.visit_cells(center, reach, offs, dim + 1, f);
        }
    }
}

/// Layered read-only view over several point sources; used to pass
/// "boundary plus retained so far plus local recursion points" to the
/// conditional-intensity evaluator without copying.
#[derive(Clone, Copy)]
pub struct PointView<'a, const D: usize> {
    base: Option<&'a PointView<'a, D>>,
    grid: Option<&'a NeighborGrid<D>>,
    slice: &'a [Point<D>],
}

impl<'a, const D: usize> PointView<'a, D> {
    pub fn new(slice: &'a [Point<D>]) -> Self {
        PointView {
            base: None,
            grid: None,
            slice,
        }
    }

    pub fn of_grid(grid: &'a NeighborGrid<D>) -> Self {
        PointView {
            base: None,
            grid: Some(grid),
            slice: &[],
        }
    }

    pub fn layer(&'a self, slice: &'a [Point<D>]) -> PointView<'a, D> {
        PointView {
            base: Some(self),
            grid: None,
            slice,
        }
    }

    pub fn layer_grid(&'a self, grid: &'a NeighborGrid<D>) -> PointView<'a, D> {
        PointView {
            base: Some(self),
            grid: Some(grid),
            slice: &[],
        }
    }

    /// Visit all points of the view within `r` of `x`.
    pub fn for_each_within(&self, x: &Point<D>, r: f64, f: &mut impl FnMut(&Point<D>)) {
        if let Some(g) = self.grid {
            g.for_each_within(x, r, |_, p| f(p));
        }
        let r2 = r * r;
        for p in self.slice {
            if p.dist_sq(x) <= r2 {
                f(p);
            }
        }
        if let Some(b) = self.base {
            b.for_each_within(x, r, f);
        }
    }

    pub fn collect_within(&self, x: &Point<D>, r: f64) -> Vec<Point<D>> {
        let mut out = Vec::new();
        self.for_each_within(x, r, &mut |p| out.push(*p));
        out
    }
}
