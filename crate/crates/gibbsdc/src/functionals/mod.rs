//! Geometric score functions and pattern functionals: kNN lengths and large
//! edges, Voronoi cell perimeters, MST total length, and persistent Betti
//! numbers, plus windowed score sums and the add-one cost operator.

pub mod betti;
pub mod delaunay;
pub mod knn;
pub mod mst;
pub mod voronoi;

pub use betti::{betti0_count, cech_triangle_value, persistent_betti};
pub use knn::{knn_graph, knn_large_edge, knn_score, knn_stabilization_radius, KnnGraph};
pub use mst::{mst_max_degree, mst_total_length};
pub use voronoi::{voronoi_cell, voronoi_score, VoronoiCell};

use crate::geometry::{Point, PointPattern, Region};
use crate::{Error, Result};

/// A per-point score value; infinite scores are values, not panics, and are
/// surfaced as flagged errors by the summing entry points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScoreValue {
    Finite(f64),
    Infinite,
}

impl ScoreValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ScoreValue::Finite(v) => Some(v),
            ScoreValue::Infinite => None,
        }
    }
}

/// The functional kinds exposed by the toolkit.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreSpec {
    /// half of the total kNN edge length incident to each point
    KnnLength { k: usize },
    /// indicator that the k-th neighbor distance is at least `a`
    KnnLargeEdge { k: usize, a: f64 },
    /// half of the Voronoi cell boundary length (d = 2)
    VoronoiPerimeter,
    /// total MST edge length of the windowed pattern (whole-pattern)
    MstTotal,
    /// persistent Betti number of the windowed pattern (whole-pattern)
    Betti { q: usize, r: f64, s: f64 },
}

impl ScoreSpec {
    /// Whether this is a per-point score (summable) or a whole-pattern
    /// functional evaluated on `phi ∩ Q` directly.
    pub fn is_per_point(&self) -> bool {
        matches!(
            self,
            ScoreSpec::KnnLength { .. }
                | ScoreSpec::KnnLargeEdge { .. }
                | ScoreSpec::VoronoiPerimeter
        )
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ScoreSpec::KnnLength { k } | ScoreSpec::KnnLargeEdge { k, .. } => {
                if *k == 0 {
                    return Err(Error::invalid("k must be >= 1"));
                }
            }
            ScoreSpec::VoronoiPerimeter => {
                if dim != 2 {
                    return Err(Error::invalid("voronoi scores require d = 2"));
                }
            }
            ScoreSpec::MstTotal => {}
            ScoreSpec::Betti { q, r, s } => {
                if *q > 1 {
                    return Err(Error::invalid("betti supports q ∈ {0, 1}"));
                }
                if *q == 1 && dim != 2 {
                    return Err(Error::invalid("beta_1 requires d = 2"));
                }
                if !(0.0 <= *r && r <= s) {
                    return Err(Error::invalid("need 0 <= r <= s"));
                }
            }
        }
        if let ScoreSpec::KnnLargeEdge { a, .. } = self {
            if *a <= 0.0 {
                return Err(Error::invalid("a must be positive"));
            }
        }
        Ok(())
    }

    /// Parse the CLI syntax, e.g. `knn-length:k=4`, `knn-large:k=4,a=1.0`,
    /// `voronoi`, `mst`, `betti:q=1,r=0.5,s=0.8`.
    pub fn parse(text: &str) -> Result<ScoreSpec> {
        let (head, args) = match text.split_once(':') {
            Some((h, a)) => (h, a),
            None => (text, ""),
        };
        let mut kv = std::collections::HashMap::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad spec argument '{part}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get_f = |kv: &std::collections::HashMap<String, String>, k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| Error::invalid(format!("spec needs '{k}='")))?
                .parse()
                .map_err(|_| Error::invalid(format!("bad number for '{k}'")))
        };
        let spec = match head {
            "knn-length" => ScoreSpec::KnnLength {
                k: get_f(&kv, "k")? as usize,
            },
            "knn-large" => ScoreSpec::KnnLargeEdge {
                k: get_f(&kv, "k")? as usize,
                a: get_f(&kv, "a")?,
            },
            "voronoi" => ScoreSpec::VoronoiPerimeter,
            "mst" => ScoreSpec::MstTotal,
            "betti" => ScoreSpec::Betti {
                q: get_f(&kv, "q")? as usize,
                r: get_f(&kv, "r")?,
                s: get_f(&kv, "s")?,
            },
            other => return Err(Error::invalid(format!("unknown functional '{other}'"))),
        };
        Ok(spec)
    }
}

impl std::fmt::Display for ScoreSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoreSpec::KnnLength { k } => write!(f, "knn-length:k={k}"),
            ScoreSpec::KnnLargeEdge { k, a } => write!(f, "knn-large:k={k},a={a}"),
            ScoreSpec::VoronoiPerimeter => write!(f, "voronoi"),
            ScoreSpec::MstTotal => write!(f, "mst"),
            ScoreSpec::Betti { q, r, s } => write!(f, "betti:q={q},r={r},s={s}"),
        }
    }
}

/// Which configuration the per-point scores see.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `g(x, phi)` summed over `x ∈ phi ∩ Q`: the pattern must have been
    /// sampled on an enlarged window so boundary scores stabilize.
    Full,
    /// `g(x, phi ∩ Q)` summed over `x ∈ phi ∩ Q`: only the windowed pattern
    /// is observed.
    Restricted,
}

fn per_point_scores<const D: usize>(spec: &ScoreSpec, pts: &[Point<D>]) -> Result<Vec<ScoreValue>> {
    match spec {
        ScoreSpec::KnnLength { k } => Ok(knn_graph(pts, *k).scores()),
        ScoreSpec::KnnLargeEdge { k, a } => Ok(pts
            .iter()
            .map(|x| match knn_large_edge(pts, x, *k, *a) {
                Some(v) => ScoreValue::Finite(v as f64),
                None => ScoreValue::Finite(1.0),
            })
            .collect()),
        ScoreSpec::VoronoiPerimeter => {
            if D != 2 {
                return Err(Error::invalid("voronoi scores require d = 2"));
            }
            let pts2: Vec<Point<2>> = pts
                .iter()
                .map(|p| Point::new([p.coords()[0], p.coords()[1]]))
                .collect();
            Ok((0..pts2.len())
                .map(|i| match voronoi_cell(&pts2, i).perimeter() {
                    Some(p) => ScoreValue::Finite(p / 2.0),
                    None => ScoreValue::Infinite,
                })
                .collect())
        }
        _ => Err(Error::invalid("not a per-point score")),
    }
}

/// Windowed score sum `H = sum_{x ∈ phi ∩ Q} g(x, ·)` for per-point specs,
/// or the whole-pattern functional `H(phi ∩ Q)` for `mst` and `betti`.
/// An infinite per-point score is an error carrying the offending point.
pub fn score_sum<const D: usize>(
    phi: &PointPattern<D>,
    spec: &ScoreSpec,
    q: &Region<D>,
    variant: Variant,
) -> Result<f64> {
    spec.validate(D)?;
    if !spec.is_per_point() {
        let windowed = phi.restrict(q);
        return match spec {
            ScoreSpec::MstTotal => Ok(mst_total_length(windowed.points())),
            ScoreSpec::Betti { q: qq, r, s } => {
                Ok(persistent_betti(windowed.points(), *qq, *r, *s)? as f64)
            }
            _ => unreachable!(),
        };
    }
    let eval_pts: Vec<Point<D>> = match variant {
        Variant::Full => phi.points().to_vec(),
        Variant::Restricted => phi.restrict(q).points().to_vec(),
    };
    let scores = per_point_scores(spec, &eval_pts)?;
    let mut acc = 0.0;
    for (p, sv) in eval_pts.iter().zip(&scores) {
        if !q.contains(p) {
            continue;
        }
        match sv {
            ScoreValue::Finite(v) => acc += v,
            ScoreValue::Infinite => return Err(Error::InfiniteScore(format!("{p:?}"))),
        }
    }
    Ok(acc)
}

/// A whole-pattern functional whose add-one cost can be evaluated.
#[derive(Clone, Debug)]
pub enum Functional<const D: usize> {
    /// point count (the simplest score sum)
    Count,
    /// windowed score sum of a spec
    Windowed {
        spec: ScoreSpec,
        q: Region<D>,
        variant: Variant,
    },
}

impl<const D: usize> Functional<D> {
    pub fn eval(&self, phi: &PointPattern<D>) -> Result<f64> {
        match self {
            Functional::Count => Ok(phi.len() as f64),
            Functional::Windowed { spec, q, variant } => score_sum(phi, spec, q, *variant),
        }
    }
}

/// The add-one cost `(D_y H)(phi) = H(phi ∪ {y}) - H(phi)`.
pub fn add_one_cost<const D: usize>(
    functional: &Functional<D>,
    phi: &PointPattern<D>,
    y: &Point<D>,
) -> Result<f64> {
    let mut pts = phi.points().to_vec();
    pts.push(*y);
    let augmented = PointPattern::new(pts)?;
    Ok(functional.eval(&augmented)? - functional.eval(phi)?)
}

/// Audit for the `Full` variant: per point of `phi ∩ Q`, if the full and
/// restricted scores differ, the implemented kNN stabilization ball of the
/// point must cross the window boundary. Returns the offending points.
pub fn knn_stabilization_audit<const D: usize>(
    phi: &PointPattern<D>,
    q: &Region<D>,
    k: usize,
) -> Result<Vec<Point<D>>> {
    let full_pts = phi.points();
    let restricted = phi.restrict(q);
    let g_full = knn_graph(full_pts, k);
    let g_res = knn_graph(restricted.points(), k);
    let mut offenders = Vec::new();
    for (i, p) in full_pts.iter().enumerate() {
        if !q.contains(p) {
            continue;
        }
        let ri = restricted
            .points()
            .iter()
            .position(|rp| rp == p)
            .expect("restriction keeps windowed points");
        if g_full.score(i) != g_res.score(ri) {
            let r = knn_stabilization_radius(full_pts, p, k)
                .ok_or_else(|| Error::invalid("point not in pattern"))?;
            // does B_r(p) stay inside Q? exact for the box/ball windows used
            // in practice, conservative otherwise
            let to_boundary = match q {
                Region::Box(b) => b.dist_to_complement(p),
                Region::Ball { center, radius } => (radius - p.dist(center)).max(0.0),
                _ => 0.0,
            };
            if to_boundary >= r {
                offenders.push(*p);
            }
        }
    }
    Ok(offenders)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use rand::Rng;

    #[test]
    fn empty_pattern_sums_to_zero() {
        let q = Region::<2>::window(2.0);
        for spec in [
            ScoreSpec::KnnLength { k: 3 },
            ScoreSpec::MstTotal,
            ScoreSpec::Betti {
                q: 0,
                r: 0.1,
                s: 0.2,
            },
        ] {
            assert_eq!(
                score_sum(&PointPattern::empty(), &spec, &q, Variant::Restricted).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn mst_entry_point_is_windowed_total_length() {
        let mut rng = crate::StreamKey::root(81).child(&[1]).rng();
        let pts: Vec<Point<2>> = (0..60)
            .map(|_| {
                Point::new([rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0])
            })
            .collect();
        let phi = PointPattern::new(pts).unwrap();
        let q = Region::window(2.0);
        let h = score_sum(&phi, &ScoreSpec::MstTotal, &q, Variant::Restricted).unwrap();
        assert!((h - mst_total_length(phi.restrict(&q).points())).abs() < 1e-12);
    }

    #[test]
    fn infinite_scores_are_flagged_errors() {
        let phi = PointPattern::new(vec![Point::new([0.0, 0.0]), Point::new([0.5, 0.0])]).unwrap();
        let q = Region::window(4.0);
        let r = score_sum(&phi, &ScoreSpec::VoronoiPerimeter, &q, Variant::Restricted);
        assert!(matches!(r, Err(Error::InfiniteScore(_))));
        let r2 = score_sum(&phi, &ScoreSpec::KnnLength { k: 3 }, &q, Variant::Restricted);
        assert!(matches!(r2, Err(Error::InfiniteScore(_))));
    }

    #[test]
    fn add_one_cost_of_count_is_one() {
        let mut rng = crate::StreamKey::root(82).child(&[2]).rng();
        let pts: Vec<Point<2>> = (0..10)
            .map(|_| Point::new([rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let phi = PointPattern::new(pts).unwrap();
        let c = add_one_cost(&Functional::Count, &phi, &Point::new([5.0, 5.0])).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn mst_add_one_cost_within_diameter_bound() {
        // inserting y at distance t from the pattern raises the MST length by
        // at most t plus the trivial bound diam(A) * phi(A) on the rewiring
        let mut rng = crate::StreamKey::root(83).child(&[3]).rng();
        let pts: Vec<Point<2>> = (0..30)
            .map(|_| Point::new([rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let phi = PointPattern::new(pts.clone()).unwrap();
        let q = Region::window(40.0);
        let f = Functional::Windowed {
            spec: ScoreSpec::MstTotal,
            q,
            variant: Variant::Restricted,
        };
        let y = Point::new([5.0, 5.0]);
        let t = pts.iter().map(|p| p.dist(&y)).fold(f64::INFINITY, f64::min);
        let cost = add_one_cost(&f, &phi, &y).unwrap();
        let diam = 2.0f64.sqrt();
        assert!(cost <= t + diam * pts.len() as f64 + 1e-9);
        assert!(cost > 0.0);
    }

    #[test]
    fn betti0_add_one_cost_merges_components() {
        let pts = vec![Point::new([0.0, 0.0]), Point::new([2.0, 0.0])];
        let phi = PointPattern::new(pts).unwrap();
        let q = Region::window(10.0);
        let f = Functional::Windowed {
            spec: ScoreSpec::Betti {
                q: 0,
                r: 0.0,
                s: 0.55,
            },
            q,
            variant: Variant::Restricted,
        };
        // bridging point merges the two components: cost -1
        let c = add_one_cost(&f, &phi, &Point::new([1.0, 0.0])).unwrap();
        assert_eq!(c, -1.0);
    }

    #[test]
    fn full_vs_restricted_differ_only_near_boundary() {
        let mut rng = crate::StreamKey::root(84).child(&[4]).rng();
        for trial in 0..10 {
            let pts: Vec<Point<2>> = (0..200)
                .map(|_| {
                    Point::new([
                        rng.random::<f64>() * 8.0 - 4.0,
                        rng.random::<f64>() * 8.0 - 4.0,
                    ])
                })
                .collect();
            let phi = PointPattern::new(pts).unwrap();
            let q = Region::window(4.0);
            let offenders = knn_stabilization_audit(&phi, &q, 4).unwrap();
            assert!(
                offenders.is_empty(),
                "trial {trial}: interior point with boundary-crossing score {offenders:?}"
            );
        }
    }

    #[test]
    fn spec_parsing_round_trips() {
        for text in [
            "knn-length:k=4",
            "knn-large:k=4,a=1",
            "voronoi",
            "mst",
            "betti:q=1,r=0.5,s=0.8",
        ] {
            let spec = ScoreSpec::parse(text).unwrap();
            let again = ScoreSpec::parse(&spec.to_string()).unwrap();
            assert_eq!(spec, again);
        }
        assert!(ScoreSpec::parse("nope").is_err());
        assert!(ScoreSpec::parse("betti:q=3,r=0.1,s=0.2")
            .unwrap()
            .validate(2)
            .is_err());
    }

    #[test]
    fn translation_invariance_of_sums() {
        let mut rng = crate::StreamKey::root(85).child(&[5]).rng();
        let pts: Vec<Point<2>> = (0..80)
            .map(|_| {
                Point::new([rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0])
            })
            .collect();
        let phi = PointPattern::new(pts).unwrap();
        let shift = [11.0, -7.5];
        let phi_t = phi.translate(&shift);
        let q = Region::window(3.0);
        let q_t = Region::rect(
            [-1.5 + shift[0], -1.5 + shift[1]],
            [1.5 + shift[0], 1.5 + shift[1]],
        );
        for spec in [
            ScoreSpec::KnnLength { k: 3 },
            ScoreSpec::KnnLargeEdge { k: 2, a: 0.3 },
            ScoreSpec::MstTotal,
            ScoreSpec::Betti {
                q: 1,
                r: 0.2,
                s: 0.35,
            },
        ] {
            let a = score_sum(&phi, &spec, &q, Variant::Restricted).unwrap();
            let b = score_sum(&phi_t, &spec, &q_t, Variant::Restricted).unwrap();
            assert!((a - b).abs() < 1e-9, "{spec}: {a} vs {b}");
        }
    }
}
