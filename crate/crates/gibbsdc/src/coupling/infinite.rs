//! Window consistency and infinite-volume approximation.
//!
//! The radial coupling explores a window outside-in, so on the event that no
//! Boolean cluster connects a bounded set `A` to the complement of the
//! shrunken window `Q_{n - 4 r0}`, the thinning near `A` is already decided
//! by the carrier inside the core that any larger window shares. Restricted
//! to `A`, the outputs on nested windows then agree per realization, which
//! yields an exact sample of the infinite-volume process on `A` once the
//! no-crossing certificate holds.

use super::{radial_coupling, CouplingRun, GridAnchors};
use crate::geometry::{PointPattern, Region};
use crate::models::InteractionModel;
use crate::percolation::{connects, CarrierField};
use crate::sampler::{RetentionBudget, RetentionMode};
use crate::{Error, Result, StreamKey};

/// The no-crossing certificate `{A not<~> Q_{n-4r0}^c}` evaluated on the
/// realized carrier restricted to `Q_n`. Points beyond `Q_n` cannot change
/// the event because any crossing chain already touches the frame.
pub fn stabilization_event<const D: usize>(
    a: &Region<D>,
    n: f64,
    carrier_in_window: &PointPattern<D>,
    r0: f64,
) -> Result<bool> {
    let frame = Region::diff(Region::<D>::window(n + 4.0 * r0), Region::window(n - 4.0 * r0));
    Ok(!connects(a, &frame, &carrier_in_window.projection(), r0)?)
}

fn window_in<const D: usize>(n: f64, u: Option<&Region<D>>) -> Region<D> {
    match u {
        Some(u) => Region::inter(Region::window(n), u.clone()),
        None => Region::window(n),
    }
}

/// Complement of the window, materialized as a frame wide enough for every
/// distance test the coupling performs.
fn complement_frame<const D: usize>(n: f64, r0: f64) -> Region<D> {
    Region::diff(Region::window(n + 16.0 * r0), Region::window(n))
}

/// Result of a paired consistency run on windows `Q_n ⊆ Q_m`.
#[derive(Clone, Copy, Debug)]
pub struct ConsistencyOutcome {
    /// no-crossing certificate `{A not<~> Q_{n-4r0}^c}` on the smaller window
    pub event_holds: bool,
    /// outputs restricted to `A` are identical point sets
    pub equal_on_a: bool,
}

impl ConsistencyOutcome {
    /// The consistency claim: the certificate forces equality.
    pub fn implication_ok(&self) -> bool {
        !self.event_holds || self.equal_on_a
    }

    /// Certificate and equality both realized.
    pub fn holds(&self) -> bool {
        self.event_holds && self.equal_on_a
    }
}

/// Run the radial coupling on `Q_n ∩ U` and `Q_m ∩ U` (`n <= m`) with the
/// same carrier field and keyed randomness and compare the outputs on `A`.
#[allow(clippy::too_many_arguments)]
pub fn radial_consistency_check<const D: usize>(
    model: &InteractionModel<D>,
    u: Option<&Region<D>>,
    psi: &PointPattern<D>,
    a: &Region<D>,
    n: f64,
    m: f64,
    field: &CarrierField,
    anchors: &GridAnchors,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<ConsistencyOutcome> {
    if n > m {
        return Err(Error::invalid("consistency check needs n <= m"));
    }
    let r0 = model.r0();
    let q_n = window_in(n, u);
    let q_m = window_in(m, u);
    let carrier_m = field.materialize(&q_m)?;
    let carrier_n = carrier_m.restrict(&q_n);
    let run_n = radial_coupling(
        model,
        &q_n,
        &complement_frame(n, r0),
        psi,
        &carrier_n,
        anchors,
        mode,
        key,
        budget,
    )?;
    let run_m = radial_coupling(
        model,
        &q_m,
        &complement_frame(m, r0),
        psi,
        &carrier_m,
        anchors,
        mode,
        key,
        budget,
    )?;
    let event_holds = stabilization_event(a, n, &carrier_n, r0)?;
    let mut on_a_n = run_n.output.restrict(a).points().to_vec();
    let mut on_a_m = run_m.output.restrict(a).points().to_vec();
    on_a_n.sort_by(|x, y| x.lex_cmp(y));
    on_a_m.sort_by(|x, y| x.lex_cmp(y));
    Ok(ConsistencyOutcome {
        event_holds,
        equal_on_a: on_a_n == on_a_m,
    })
}

/// A sample of the infinite-volume process restricted to `A`, together with
/// the certified window size.
#[derive(Clone, Debug)]
pub struct InfiniteVolumeSample<const D: usize> {
    pub pattern: PointPattern<D>,
    /// window size at which the no-crossing certificate held
    pub n_star: f64,
    /// full output on the certified window (before restriction to `A`)
    pub window_output: PointPattern<D>,
}

/// Sample the infinite-volume Gibbs process restricted to the bounded set
/// `A`: grow the window until the no-crossing certificate holds for the
/// realized carrier, then return the radial-coupling output on `A` at that
/// window. By the consistency of the radial thinning the restriction is
/// then stable under every further enlargement.
#[allow(clippy::too_many_arguments)]
pub fn infinite_volume_approx<const D: usize>(
    model: &InteractionModel<D>,
    a: &Region<D>,
    psi: &PointPattern<D>,
    u: Option<&Region<D>>,
    n_max: f64,
    field: &CarrierField,
    anchors: &GridAnchors,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<InfiniteVolumeSample<D>> {
    let r0 = model.r0();
    let a_bb = a.bbox().ok_or(Error::UnboundedRegion("target set A"))?;
    let a_reach = (0..D)
        .map(|i| a_bb.lo[i].abs().max(a_bb.hi[i].abs()))
        .fold(0.0f64, f64::max);
    let mut n = (2.0 * a_reach + 10.0 * r0).ceil();
    loop {
        if n > n_max {
            return Err(Error::NoCertificate(n_max));
        }
        let q_n = window_in(n, u);
        let carrier = field.materialize(&q_n)?;
        if stabilization_event(a, n, &carrier, r0)? {
            let run: CouplingRun<D> = radial_coupling(
                model,
                &q_n,
                &complement_frame(n, r0),
                psi,
                &carrier,
                anchors,
                mode,
                key,
                budget,
            )?;
            return Ok(InfiniteVolumeSample {
                pattern: run.output.restrict(a),
                n_star: n,
                window_output: run.output,
            });
        }
        n += 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn consistency_implication_on_small_windows() {
        let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
        let anchors = GridAnchors::for_range::<2>(0.3);
        let a = Region::rect([-1.0, -1.0], [1.0, 1.0]);
        let mut events = 0;
        for seed in 0..40u64 {
            let field = CarrierField::new(1.0, StreamKey::root(seed));
            let out = radial_consistency_check(
                &model,
                None,
                &PointPattern::empty(),
                &a,
                5.0,
                7.0,
                &field,
                &anchors,
                RetentionMode::ExactRecursive,
                &StreamKey::root(seed).child(&[3]),
                &RetentionBudget::default(),
            )
            .unwrap();
            assert!(out.implication_ok(), "seed {seed}");
            if out.event_holds {
                events += 1;
            }
        }
        assert!(events > 0);
    }

    #[test]
    fn trivial_equal_windows() {
        let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
        let anchors = GridAnchors::for_range::<2>(0.3);
        let a = Region::rect([-1.0, -1.0], [1.0, 1.0]);
        let field = CarrierField::new(1.0, StreamKey::root(5));
        let out = radial_consistency_check(
            &model,
            None,
            &PointPattern::empty(),
            &a,
            6.0,
            6.0,
            &field,
            &anchors,
            RetentionMode::ExactRecursive,
            &StreamKey::root(5).child(&[3]),
            &RetentionBudget::default(),
        )
        .unwrap();
        assert!(out.equal_on_a);
    }

    #[test]
    fn infinite_volume_poisson_is_mark_thinning() {
        // for the Poisson model the radial output is the whole carrier, so
        // the infinite-volume restriction equals the carrier on A
        let model = InteractionModel::<2>::poisson(1.0, 0.3).unwrap();
        let anchors = GridAnchors::for_range::<2>(0.3);
        let a = Region::ball(Point::new([0.2, -0.1]), 0.8);
        let field = CarrierField::new(1.0, StreamKey::root(8));
        let sample = infinite_volume_approx(
            &model,
            &a,
            &PointPattern::empty(),
            None,
            40.0,
            &field,
            &anchors,
            RetentionMode::ExactRecursive,
            &StreamKey::root(8).child(&[4]),
            &RetentionBudget::default(),
        )
        .unwrap();
        let carrier = field
            .materialize(&Region::<2>::window(sample.n_star))
            .unwrap();
        let mut want = carrier.restrict(&a).projection().points().to_vec();
        let mut got = sample.pattern.points().to_vec();
        want.sort_by(|x, y| x.lex_cmp(y));
        got.sort_by(|x, y| x.lex_cmp(y));
        assert_eq!(got, want);
    }

    #[test]
    fn certificate_budget_error() {
        let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
        let anchors = GridAnchors::for_range::<2>(0.3);
        let a = Region::rect([-1.0, -1.0], [1.0, 1.0]);
        let field = CarrierField::new(1.0, StreamKey::root(9));
        let r = infinite_volume_approx(
            &model,
            &a,
            &PointPattern::empty(),
            None,
            1.0, // unattainably small budget
            &field,
            &anchors,
            RetentionMode::ExactRecursive,
            &StreamKey::root(9).child(&[4]),
            &RetentionBudget::default(),
        );
        assert!(matches!(r, Err(Error::NoCertificate(_))));
    }
}
