use gibbsdc::coupling::{coupling_pair, CouplingAlgo, GridAnchors};
use gibbsdc::geometry::{Point, PointPattern, Region};
use gibbsdc::models::InteractionModel;
use gibbsdc::sampler::{sample_marked_poisson, RetentionBudget, RetentionMode};
use gibbsdc::StreamKey;

#[test]
#[ignore]
fn micro_radial_pair_cost() {
    let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
    let a_hi = 1.0;
    let s = 4.0;
    let margin = 5.2;
    let q = Region::diff(
        Region::rect([-margin, -margin], [a_hi + s + 1.0 + margin, 1.0 + margin]),
        Region::rect([a_hi + s, 0.0], [a_hi + s + 1.0, 1.0]),
    );
    let b = Region::rect([a_hi + s, 0.0], [a_hi + s + 1.0, 1.0]);
    let anchors = GridAnchors::for_range::<2>(0.3);
    let psi_b = PointPattern::new(vec![Point::new([5.2, 0.5])]).unwrap();
    let t0 = std::time::Instant::now();
    let mut total_pts = 0;
    for rep in 0..20u64 {
        let key = StreamKey::root(1000 + rep);
        let carrier = sample_marked_poisson(&q, 1.0, &key.child(&[1])).unwrap();
        total_pts += carrier.len();
        let pair = coupling_pair(
            CouplingAlgo::Radial,
            &model, &q, &b,
            &PointPattern::empty(), &psi_b,
            &carrier, &anchors,
            RetentionMode::ExactRecursive,
            &key.child(&[2]),
            &RetentionBudget::default(),
        ).unwrap();
        assert!(pair.confinement_ok);
    }
    println!("20 paired reps in {:?} ({} carrier pts total)", t0.elapsed(), total_pts);
}
