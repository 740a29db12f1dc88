//! Retention thresholds for the Poisson-embedding thinning.
//!
//! The threshold `p(x, Q, psi') = kappa(x, psi') * Z_{Q_{(x,inf)}}(psi' ∪ {x})
//! / Z_{Q_{(x,inf)}}(psi')` is a ratio of partition functions that no finite
//! computation evaluates directly. Telescoping the local energies turns the
//! ratio into the conditional expectation
//!
//! ```text
//!     p(x, Q, psi') = E[ kappa(x, X(R, psi') ∪ psi') ],   R = Q_{(x, inf)},
//! ```
//!
//! so a single exact sample `Y ~ X(R, psi')` yields the unbiased estimator
//! `kappa(x, Y ∪ psi')`. Because the thinning mark `u` is independent of `Y`,
//! thresholding `u` against the estimator realizes a Bernoulli decision with
//! exactly the probability `p / kappa_max`; the sampled process keeps the
//! exact Gibbs law.
//!
//! Only `Y ∩ B_{r0}(x)` enters the estimator, and that restriction is
//! produced lazily: a fresh keyed carrier is drawn on `R ∩ B_{r0}(x)` and
//! thinned under an ordering that puts this ball first, recursing for each
//! fresh candidate. In the subcritical regime (`kappa_max * |B_{r0}| < 1`)
//! the recursion is a subcritical branching process with O(1) expected work,
//! independent of the window size. A work budget guards super-critical
//! parameter choices.

use crate::geometry::{Aabb, OrderMap, Point, PointPattern, PointView, Region};
use crate::models::InteractionModel;
use crate::rng::{poisson_count, tags, StreamKey};
use crate::{Error, Result};
use rand::Rng;
use std::cell::Cell;

/// How retention thresholds are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetentionMode {
    /// One draw of the unbiased single-sample estimator with an exactly
    /// sampled remainder restriction. The output law is exact.
    ExactRecursive,
    /// Average of `M >= 1` independent estimator draws per decision.
    PluginEstimate(u32),
    /// Plain `kappa(x, psi')`; exact only when the remainder cannot
    /// influence the threshold, so it demands a provably empty remainder
    /// (or one that misses `B_{r0}(x)` entirely, where the ratio cancels).
    TerminalOnly,
}

/// Work budget for the retention recursion (counts local exploration nodes).
#[derive(Clone, Copy, Debug)]
pub struct RetentionBudget {
    pub max_work: u64,
}

impl Default for RetentionBudget {
    fn default() -> Self {
        RetentionBudget {
            max_work: 20_000_000,
        }
    }
}

pub(crate) struct RetentionEngine<'a, const D: usize> {
    model: &'a InteractionModel<D>,
    max_work: u64,
    work: Cell<u64>,
}

impl<'a, const D: usize> RetentionEngine<'a, D> {
    pub fn new(model: &'a InteractionModel<D>, budget: &RetentionBudget) -> Self {
        RetentionEngine {
            model,
            max_work: budget.max_work,
            work: Cell::new(0),
        }
    }

    pub fn work_used(&self) -> u64 {
        self.work.get()
    }

    fn spend(&self) -> Result<()> {
        let w = self.work.get() + 1;
        if w > self.max_work {
            return Err(Error::RetentionBudget(self.max_work));
        }
        self.work.set(w);
        Ok(())
    }

    /// Evaluate the threshold for candidate `x` under the given mode.
    /// `key` is the per-candidate key; plugin draws derive children from it.
    pub fn threshold(
        &self,
        x: &Point<D>,
        remainder: &Region<D>,
        boundary: &PointView<'_, D>,
        mode: RetentionMode,
        key: &StreamKey,
    ) -> Result<f64> {
        let p = match mode {
            RetentionMode::ExactRecursive => self.draw(x, remainder, boundary, key)?,
            RetentionMode::PluginEstimate(m) => {
                if m == 0 {
                    return Err(Error::invalid("plugin_estimate needs M >= 1"));
                }
                let mut acc = 0.0;
                for j in 0..m {
                    acc += self.draw(x, remainder, boundary, &key.child(&[tags::PLUGIN, j as u64]))?;
                }
                acc / m as f64
            }
            RetentionMode::TerminalOnly => {
                if self.terminal_geometry(x, remainder) {
                    self.model.kappa_view(x, boundary)
                } else {
                    return Err(Error::TerminalRemainder);
                }
            }
        };
        debug_assert!(
            (0.0..=self.model.kappa_max() * (1.0 + 1e-12)).contains(&p),
            "threshold {p} outside [0, kappa_max]"
        );
        Ok(p)
    }

    /// True when the remainder provably cannot meet `B_{r0}(x)`, so the
    /// partition-function ratio cancels exactly.
    fn terminal_geometry(&self, x: &Point<D>, remainder: &Region<D>) -> bool {
        if remainder.is_provably_empty() {
            return true;
        }
        match remainder.bbox() {
            Some(bb) => bb.intersect(&Aabb::around(x, self.model.r0())).is_empty(),
            None => false,
        }
    }

    /// One estimator draw `kappa(x, Y ∪ psi')`.
    fn draw(
        &self,
        x: &Point<D>,
        remainder: &Region<D>,
        boundary: &PointView<'_, D>,
        key: &StreamKey,
    ) -> Result<f64> {
        if self.model.configuration_free() {
            return Ok(self.model.kappa_view(x, boundary));
        }
        let k_boundary = self.model.kappa_view(x, boundary);
        // every built-in kappa is monotone nonincreasing in the
        // configuration, so a vanishing boundary value is final
        if k_boundary == 0.0 {
            return Ok(0.0);
        }
        if self.terminal_geometry(x, remainder) {
            return Ok(k_boundary);
        }
        let local = self.local_sample(x, remainder, boundary, key)?;
        let view = boundary.layer(&local);
        Ok(self.model.kappa_view(x, &view))
    }

    /// Exact sample of `X(remainder, psi') ∩ B_{r0}(x)`, materialized
    /// lazily: thin a fresh keyed carrier on `remainder ∩ B_{r0}(x)` under
    /// the two-phase ordering that explores this ball (by distance to `x`)
    /// before the rest of the remainder.
    fn local_sample(
        &self,
        x: &Point<D>,
        remainder: &Region<D>,
        boundary: &PointView<'_, D>,
        key: &StreamKey,
    ) -> Result<Vec<Point<D>>> {
        self.spend()?;
        let r0 = self.model.r0();
        let kmax = self.model.kappa_max();
        let rem_bb = remainder
            .bbox()
            .ok_or(Error::UnboundedRegion("retention remainder"))?;
        let bb = rem_bb.intersect(&Aabb::around(x, r0));
        let mut rng = key.child(&[tags::AUX_CARRIER]).rng();
        let n = poisson_count(&mut rng, kmax * bb.volume());
        let mut cands: Vec<(Point<D>, f64)> = Vec::new();
        for _ in 0..n {
            let mut c = [0.0; D];
            for i in 0..D {
                c[i] = bb.lo[i] + rng.random::<f64>() * (bb.hi[i] - bb.lo[i]);
            }
            let mark = rng.random::<f64>() * kmax;
            let p = Point::new(c);
            if p.dist(x) <= r0 && remainder.contains(&p) {
                cands.push((p, mark));
            }
        }
        if cands.is_empty() {
            return Ok(Vec::new());
        }
        cands.sort_by(|a, b| {
            a.0.dist_sq(x)
                .partial_cmp(&b.0.dist_sq(x))
                .expect("finite coords")
        });
        for w in cands.windows(2) {
            if w[0].0.dist_sq(x) == w[1].0.dist_sq(x) {
                return Err(Error::OrderTie);
            }
        }
        let iota = OrderMap::TwoPhase {
            first: Box::new(Region::ball(*x, r0)),
            base: Box::new(OrderMap::DistanceTo(*x)),
        };
        let mut kept: Vec<Point<D>> = Vec::new();
        for (y, u) in &cands {
            let rem_y = Region::inter(remainder.clone(), iota.after(y));
            let p_hat = {
                let view = boundary.layer(&kept);
                self.draw(y, &rem_y, &view, &key.child_point(tags::RETENTION, y))?
            };
            if *u <= p_hat {
                kept.push(*y);
            }
        }
        Ok(kept)
    }
}

/// Evaluate (one draw of) the retention threshold `p(x, remainder, psi')`.
///
/// In `ExactRecursive` mode the returned value is the unbiased single-sample
/// estimator; used inside thinning it realizes the exact Bernoulli retention
/// law because the mark is independent of the estimator draw. The
/// `TerminalOnly` mode requires a remainder that provably cannot influence
/// the threshold and then returns `kappa(x, psi')` exactly.
pub fn retention_probability<const D: usize>(
    model: &InteractionModel<D>,
    x: &Point<D>,
    remainder: &Region<D>,
    psi_prime: &PointPattern<D>,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<f64> {
    for p in psi_prime.points() {
        if p == x {
            return Err(Error::invalid("x must not belong to psi'"));
        }
        if remainder.contains(p) {
            return Err(Error::invalid(
                "psi' must not contain points of the remainder",
            ));
        }
    }
    if !remainder.is_bounded() {
        return Err(Error::UnboundedRegion("retention remainder"));
    }
    let engine = RetentionEngine::new(model, budget);
    let view = PointView::new(psi_prime.points());
    engine.threshold(x, remainder, &view, mode, &key.child_point(tags::RETENTION, x))
}
