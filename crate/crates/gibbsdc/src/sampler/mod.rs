//! Samplers: the dominating marked Poisson process, an exact rejection
//! oracle built directly on the Gibbs density, the standard Poisson-embedding
//! thinning, and the GNZ balance diagnostic.

mod retention;
mod thinning;

pub use retention::{retention_probability, RetentionBudget, RetentionMode};
pub use thinning::standard_thinning;

pub(crate) use retention::RetentionEngine;

use crate::geometry::{Point, PointPattern, PointView, Region};
use crate::models::InteractionModel;
use crate::rng::{poisson_count, tags, StreamKey};
use crate::{Error, Result};
use rand::Rng;

/// Sample the dominating marked Poisson process on a bounded region:
/// point count `Poisson(kappa_max * |Q|)`, locations i.i.d. uniform on `Q`,
/// marks i.i.d. uniform on `[0, kappa_max]`.
pub fn sample_marked_poisson<const D: usize>(
    q: &Region<D>,
    kappa_max: f64,
    key: &StreamKey,
) -> Result<PointPattern<D>> {
    let bbox = q.bbox().ok_or(Error::UnboundedRegion("Poisson sampling"))?;
    let mut rng = key.child(&[tags::MARKED_POISSON]).rng();
    let n = poisson_count(&mut rng, kappa_max * bbox.volume());
    let mut pts = Vec::new();
    let mut marks = Vec::new();
    for _ in 0..n {
        let mut c = [0.0; D];
        for i in 0..D {
            c[i] = bbox.lo[i] + rng.random::<f64>() * (bbox.hi[i] - bbox.lo[i]);
        }
        let mark = rng.random::<f64>() * kappa_max;
        let p = Point::new(c);
        if q.contains(&p) {
            pts.push(p);
            marks.push(mark);
        }
    }
    PointPattern::with_marks(pts, marks, kappa_max)
}

/// Default iteration budget for the rejection sampler: a generous multiple
/// of the expected `e^{kappa_max |Q|}` iterations.
pub fn rejection_budget_hint(kappa_max: f64, volume: f64) -> u64 {
    let expected = (kappa_max * volume).exp();
    (200.0 * expected).clamp(1_000.0, 1e9) as u64
}

/// Exact sample of the finite-volume Gibbs process `X(Q, psi)` by rejection:
/// propose a Poisson(kappa_max) configuration and accept with probability
/// `density / kappa_max^n <= 1`. The expected number of iterations is at most
/// `e^{kappa_max |Q|}`, so this is the small-window oracle.
pub fn rejection_sample_gibbs<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    psi: &PointPattern<D>,
    key: &StreamKey,
    max_iterations: u64,
) -> Result<PointPattern<D>> {
    for p in psi.points() {
        if q.contains(p) {
            return Err(Error::invalid(
                "boundary conditions must lie outside the sampling window",
            ));
        }
    }
    let kmax = model.kappa_max();
    for iter in 0..max_iterations {
        let proposal = sample_marked_poisson(q, kmax, &key.child(&[tags::REJECTION, iter]))?;
        let phi = proposal.projection();
        let density = model.configuration_density(&phi, psi);
        let ratio = density / kmax.powi(phi.len() as i32);
        debug_assert!(ratio <= 1.0 + 1e-12);
        let mut rng = key.child(&[tags::REJECTION, iter, 1]).rng();
        if rng.random::<f64>() <= ratio {
            return Ok(phi);
        }
    }
    Err(Error::RejectionBudget(max_iterations))
}

/// Two-sided GNZ balance estimate.
#[derive(Clone, Copy, Debug)]
pub struct GnzBalance {
    /// Monte Carlo estimate of `E[sum_{X_i} f(X_i, X)]`.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Monte Carlo estimate of `E[int_Q f(x, X ∪ {x}) kappa(x, X ∪ psi) dx]`.
    pub rhs: f64,
    pub rhs_se: f64,
    pub reps: u64,
}

impl GnzBalance {
    /// |lhs - rhs| in units of the combined standard error.
    pub fn discrepancy_sigmas(&self) -> f64 {
        let se = (self.lhs_se * self.lhs_se + self.rhs_se * self.rhs_se).sqrt();
        if se == 0.0 {
            if self.lhs == self.rhs {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.lhs - self.rhs).abs() / se
        }
    }
}

/// Estimate both sides of the GNZ equation for a bounded test score `f`.
/// Replicates are exact rejection samples of `X(Q, psi)`; the right-hand
/// integral is estimated by uniform draws on `Q`.
pub fn gnz_balance<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    psi: &PointPattern<D>,
    f: &(dyn Fn(&Point<D>, &PointPattern<D>) -> f64 + Sync),
    reps: u64,
    key: &StreamKey,
) -> Result<GnzBalance> {
    let volume = q.measure(1e-4)?;
    let bbox = q.bbox().ok_or(Error::UnboundedRegion("GNZ window"))?;
    let budget = rejection_budget_hint(model.kappa_max(), volume);
    let mut lhs_vals = Vec::with_capacity(reps as usize);
    let mut rhs_vals = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        let rep_key = key.child(&[tags::GNZ, rep]);
        let x_pat = rejection_sample_gibbs(model, q, psi, &rep_key.child(&[0]), budget)?;
        let lhs: f64 = x_pat.points().iter().map(|p| f(p, &x_pat)).sum();
        lhs_vals.push(lhs);

        // one uniform integration node per replicate
        let mut rng = rep_key.child(&[1]).rng();
        let x = loop {
            let mut c = [0.0; D];
            for i in 0..D {
                c[i] = bbox.lo[i] + rng.random::<f64>() * (bbox.hi[i] - bbox.lo[i]);
            }
            let p = Point::new(c);
            if q.contains(&p) {
                break p;
            }
        };
        let mut aug_pts = x_pat.points().to_vec();
        aug_pts.push(x);
        let augmented = PointPattern::new(aug_pts)?;
        let psi_view = PointView::new(psi.points());
        let view = psi_view.layer(x_pat.points());
        let kappa = model.kappa_view(&x, &view);
        rhs_vals.push(volume * f(&x, &augmented) * kappa);
    }
    let stats = |vals: &[f64]| {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (lhs, lhs_se) = stats(&lhs_vals);
    let (rhs, rhs_se) = stats(&rhs_vals);
    Ok(GnzBalance {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        reps,
    })
}
