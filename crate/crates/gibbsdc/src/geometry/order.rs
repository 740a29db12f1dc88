//! Order maps: the measurable orderings that drive sequential thinning.
//!
//! An order map plays the role of the map `iota` in the thinning algorithms:
//! it induces a total order on almost every realization. Built-in rules have
//! Lebesgue-null level sets by construction; a realized tie between distinct
//! points therefore signals a degenerate input and is reported as an error by
//! the sorting entry points.

use super::{Point, PointPattern, Region};
use crate::{Error, Result};
use std::cmp::Ordering;
use std::sync::Arc;

/// Ordering rule on `D`-dimensional points.
#[derive(Clone)]
pub enum OrderMap<const D: usize> {
    /// Order by Euclidean distance to a reference point (level sets are
    /// spheres). `DistanceTo(origin)` is the default radial order.
    DistanceTo(Point<D>),
    /// Coordinate-lexicographic order. There is no real-valued key, but the
    /// order relation is total and ties occur only at duplicated points.
    /// Downward-closed cuts are half-space-like slices.
    Lex,
    /// Custom real-valued key. The caller asserts null level sets.
    Key(Arc<dyn Fn(&Point<D>) -> f64 + Send + Sync>),
    /// Two-phase refinement: everything in `first` precedes everything
    /// outside it; `base` orders within each phase. Used for the
    /// "explore this zone before the rest" orderings of the couplings.
    TwoPhase {
        first: Box<Region<D>>,
        base: Box<OrderMap<D>>,
    },
}

impl<const D: usize> std::fmt::Debug for OrderMap<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderMap::DistanceTo(p) => write!(f, "DistanceTo{p:?}"),
            OrderMap::Lex => write!(f, "Lex"),
            OrderMap::Key(_) => write!(f, "Key(..)"),
            OrderMap::TwoPhase { base, .. } => write!(f, "TwoPhase{{.., {base:?}}}"),
        }
    }
}

impl<const D: usize> OrderMap<D> {
    pub fn radial() -> Self {
        OrderMap::DistanceTo(Point::origin())
    }

    /// Compare two points under this order.
    pub fn cmp(&self, a: &Point<D>, b: &Point<D>) -> Ordering {
        match self {
            OrderMap::DistanceTo(c) => a
                .dist_sq(c)
                .partial_cmp(&b.dist_sq(c))
                .expect("finite coords"),
            OrderMap::Lex => a.lex_cmp(b),
            OrderMap::Key(f) => f(a).partial_cmp(&f(b)).expect("finite key"),
            OrderMap::TwoPhase { first, base } => {
                let pa = !first.contains(a);
                let pb = !first.contains(b);
                pa.cmp(&pb).then_with(|| base.cmp(a, b))
            }
        }
    }

    /// The strict upper slice `{ y : y > pivot }` as a region.
    pub fn after(&self, pivot: &Point<D>) -> Region<D> {
        Region::OrderSlice {
            order: Box::new(self.clone()),
            pivot: *pivot,
            above: true,
        }
    }

    /// The inclusive lower slice `{ y : y <= pivot }` as a region
    /// (a downward-closed cut through the pivot).
    pub fn upto(&self, pivot: &Point<D>) -> Region<D> {
        Region::OrderSlice {
            order: Box::new(self.clone()),
            pivot: *pivot,
            above: false,
        }
    }
}

/// Sort a pattern ascending under `iota`. Realized ties between distinct
/// points are an error (they have probability zero for continuous samples
/// under the built-in rules).
pub fn order_sort<const D: usize>(
    pattern: &PointPattern<D>,
    iota: &OrderMap<D>,
) -> Result<PointPattern<D>> {
    let idx = sorted_indices(pattern.points(), iota)?;
    let points = idx.iter().map(|&i| pattern.points()[i]).collect();
    match pattern.marks() {
        Some(ms) => {
            let marks = idx.iter().map(|&i| ms[i]).collect();
            PointPattern::with_marks(points, marks, f64::INFINITY)
        }
        None => PointPattern::new(points),
    }
}

/// Indices of `points` in ascending `iota` order, erroring on ties.
pub fn sorted_indices<const D: usize>(
    points: &[Point<D>],
    iota: &OrderMap<D>,
) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| iota.cmp(&points[a], &points[b]));
    for w in idx.windows(2) {
        if iota.cmp(&points[w[0]], &points[w[1]]) == Ordering::Equal {
            return Err(Error::OrderTie);
        }
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_order_sorts_by_distance() {
        let pat = PointPattern::new(vec![
            Point::new([2.0, 0.0]),
            Point::new([1.0, 0.0]),
            Point::new([3.0, 0.0]),
        ])
        .unwrap();
        let sorted = order_sort(&pat, &OrderMap::radial()).unwrap();
        let xs: Vec<f64> = sorted.points().iter().map(|p| p.coords()[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_pattern_sorts() {
        let pat = PointPattern::<2>::empty();
        assert!(order_sort(&pat, &OrderMap::radial()).unwrap().is_empty());
    }

    #[test]
    fn ties_are_errors() {
        // distinct points, equal distance to origin
        let pat = PointPattern::new(vec![Point::new([1.0, 0.0]), Point::new([0.0, 1.0])]).unwrap();
        assert!(matches!(
            order_sort(&pat, &OrderMap::radial()),
            Err(Error::OrderTie)
        ));
    }

    #[test]
    fn lex_matches_insertion_sort_oracle() {
        // independent oracle: hand-rolled insertion sort on tuples
        let mut rng = crate::StreamKey::root(3).child(&[1]).rng();
        use rand::Rng;
        let pts: Vec<Point<2>> = (0..100)
            .map(|_| Point::new([rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let pat = PointPattern::new(pts.clone()).unwrap();
        let sorted = order_sort(&pat, &OrderMap::Lex).unwrap();

        let mut oracle: Vec<Point<2>> = Vec::new();
        for p in &pts {
            let mut at = oracle.len();
            for (i, q) in oracle.iter().enumerate() {
                if p.lex_cmp(q) == Ordering::Less {
                    at = i;
                    break;
                }
            }
            oracle.insert(at, *p);
        }
        assert_eq!(sorted.points(), &oracle[..]);
    }

    #[test]
    fn order_sort_is_idempotent_and_permutation_invariant() {
        let mut rng = crate::StreamKey::root(4).child(&[2]).rng();
        use rand::Rng;
        let pts: Vec<Point<2>> = (0..50)
            .map(|_| Point::new([rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>()]))
            .collect();
        let iota = OrderMap::radial();
        let sorted = order_sort(&PointPattern::new(pts.clone()).unwrap(), &iota).unwrap();
        let twice = order_sort(&sorted, &iota).unwrap();
        assert_eq!(sorted.points(), twice.points());

        let mut shuffled = pts;
        shuffled.reverse();
        shuffled.swap(0, 10);
        let sorted2 = order_sort(&PointPattern::new(shuffled).unwrap(), &iota).unwrap();
        assert_eq!(sorted.points(), sorted2.points());
    }
}
