//! Papangelou conditional-intensity evaluators.
//!
//! All four model kinds share the contract `0 <= kappa(x, phi) <= kappa_max`
//! and the finite interaction range `kappa(x, phi) = kappa(x, phi ∩ B_r0(x))`.
//! The mark space and every dominating Poisson intensity in the toolkit use
//! `kappa_max`, which for the area-interaction model exceeds `alpha0`.

use crate::geometry::{unit_ball_volume, Point, PointPattern, PointView};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Poisson,
    Strauss { beta: f64 },
    /// Strauss with infinite repulsion; kept as its own kind so no
    /// floating-point infinity enters the arithmetic.
    HardSphere,
    AreaInteraction { gamma: f64, grid_resolution: f64 },
}

/// An immutable conditional-intensity evaluator with declared range `r0` and
/// domination bound `kappa_max`.
#[derive(Clone, Debug)]
pub struct InteractionModel<const D: usize> {
    kind: ModelKind,
    alpha0: f64,
    r0: f64,
    kappa_max: f64,
}

impl<const D: usize> InteractionModel<D> {
    pub fn poisson(alpha0: f64, r0: f64) -> Result<Self> {
        Self::new(ModelKind::Poisson, alpha0, r0)
    }

    pub fn strauss(alpha0: f64, r0: f64, beta: f64) -> Result<Self> {
        Self::new(ModelKind::Strauss { beta }, alpha0, r0)
    }

    pub fn hard_sphere(alpha0: f64, r0: f64) -> Result<Self> {
        Self::new(ModelKind::HardSphere, alpha0, r0)
    }

    pub fn area_interaction(alpha0: f64, r0: f64, gamma: f64, grid_resolution: f64) -> Result<Self> {
        Self::new(
            ModelKind::AreaInteraction {
                gamma,
                grid_resolution,
            },
            alpha0,
            r0,
        )
    }

    pub fn new(kind: ModelKind, alpha0: f64, r0: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::invalid("alpha0 must be positive and finite"));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::invalid("r0 must be positive and finite"));
        }
        let kappa_max = match &kind {
            ModelKind::Poisson | ModelKind::HardSphere => alpha0,
            ModelKind::Strauss { beta } => {
                if !(*beta >= 0.0) {
                    return Err(Error::invalid("strauss beta must be >= 0"));
                }
                alpha0
            }
            ModelKind::AreaInteraction {
                gamma,
                grid_resolution,
            } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::invalid("area-interaction gamma must lie in (0, 1]"));
                }
                if !(*grid_resolution > 0.0 && *grid_resolution < r0) {
                    return Err(Error::invalid("grid_resolution must lie in (0, r0)"));
                }
                // kappa = alpha0 * gamma^{-V} with V the uncovered grid measure
                // of B_{r0/2}(x). Each counted cell is disjoint and fits inside
                // B_{r0/2 + res*sqrt(D)/2}(x), so the area bound below
                // dominates every grid value of V; it sits within O(res) of
                // the analytic bound alpha0 * gamma^{-omega_D (r0/2)^D}.
                let pad = grid_resolution * (D as f64).sqrt() / 2.0;
                let v_sup = unit_ball_volume(D) * (r0 / 2.0 + pad).powi(D as i32);
                alpha0 * gamma.powf(-v_sup)
            }
        };
        Ok(InteractionModel {
            kind,
            alpha0,
            r0,
            kappa_max,
        })
    }

    /// Raise the domination bound above the computed supremum of `kappa`.
    /// Any upper bound keeps the embedding valid; a strictly larger bound is
    /// occasionally useful (independent-thinning reductions, shared carriers
    /// across models).
    pub fn with_domination_bound(mut self, bound: f64) -> Result<Self> {
        if bound < self.kappa_max {
            return Err(Error::invalid(format!(
                "domination bound {bound} below the model supremum {}",
                self.kappa_max
            )));
        }
        self.kappa_max = bound;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Domination bound: `kappa <= kappa_max` everywhere. The thinning mark
    /// space is `[0, kappa_max]` and every dominating Poisson carrier has
    /// this intensity.
    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    /// True when `kappa` does not depend on the configuration at all.
    pub(crate) fn configuration_free(&self) -> bool {
        matches!(self.kind, ModelKind::Poisson)
            || matches!(self.kind, ModelKind::Strauss { beta } if beta == 0.0)
    }

    /// Conditional intensity `kappa(x, phi)`. The evaluator filters `phi` by
    /// the interaction range itself, so passing any superset of the true
    /// neighborhood is fine. `x` must not be a point of `phi`.
    pub fn kappa(&self, x: &Point<D>, phi: &PointPattern<D>) -> f64 {
        self.kappa_view(x, &PointView::new(phi.points()))
    }

    /// As [`kappa`](Self::kappa) on a layered point view.
    pub fn kappa_view(&self, x: &Point<D>, phi: &PointView<'_, D>) -> f64 {
        match &self.kind {
            ModelKind::Poisson => self.alpha0,
            ModelKind::Strauss { beta } => {
                let mut n = 0u32;
                phi.for_each_within(x, self.r0, &mut |_| n += 1);
                self.alpha0 * (-beta * n as f64).exp()
            }
            ModelKind::HardSphere => {
                let mut n = 0u32;
                phi.for_each_within(x, self.r0, &mut |_| n += 1);
                if n > 0 {
                    0.0
                } else {
                    self.alpha0
                }
            }
            ModelKind::AreaInteraction {
                gamma,
                grid_resolution,
            } => {
                let neighbors = phi.collect_within(x, self.r0);
                let v = self.uncovered_grid_measure(x, &neighbors, *grid_resolution);
                self.alpha0 * gamma.powf(-v)
            }
        }
    }

    /// Uncovered measure of `B_{r0/2}(x)`: the grid measure of the part of
    /// the ball not covered by the balls `B_{r0/2}(y)`, `y` a neighbor.
    /// Cells come from the global lattice `res * Z^D` (midpoint rule), which
    /// keeps the induced energy additive and hence the configuration density
    /// exactly enumeration-order invariant.
    fn uncovered_grid_measure(&self, x: &Point<D>, neighbors: &[Point<D>], res: f64) -> f64 {
        let r = self.r0 / 2.0;
        let r2 = r * r;
        let mut lo = [0i64; D];
        let mut hi = [0i64; D];
        for i in 0..D {
            lo[i] = ((x.coords()[i] - r) / res).floor() as i64;
            hi[i] = ((x.coords()[i] + r) / res).ceil() as i64;
        }
        let mut idx = lo;
        let mut count = 0u64;
        'outer: loop {
            let mut c = [0.0; D];
            for i in 0..D {
                c[i] = (idx[i] as f64 + 0.5) * res;
            }
            let mid = Point::new(c);
            if mid.dist_sq(x) <= r2 && neighbors.iter().all(|y| mid.dist_sq(y) > r2) {
                count += 1;
            }
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] <= hi[d] {
                    break;
                }
                idx[d] = lo[d];
                d += 1;
                if d == D {
                    break 'outer;
                }
            }
        }
        count as f64 * res.powi(D as i32)
    }

    /// Unnormalized Gibbs density `e^{-J(phi, psi)}` of a finite
    /// configuration `phi` with boundary `psi`, computed as the telescoping
    /// product of conditional intensities over an enumeration of `phi`.
    /// The value is enumeration-order invariant; `phi` and `psi` must be
    /// disjoint.
    pub fn configuration_density(&self, phi: &PointPattern<D>, psi: &PointPattern<D>) -> f64 {
        let mut density = 1.0;
        let pts = phi.points();
        let psi_view = PointView::new(psi.points());
        for (i, x) in pts.iter().enumerate() {
            let view = psi_view.layer(&pts[..i]);
            density *= self.kappa_view(x, &view);
            if density == 0.0 {
                return 0.0;
            }
        }
        density
    }
}
