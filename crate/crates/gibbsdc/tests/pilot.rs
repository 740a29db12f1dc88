//! Scratch pilots (ignored): magnitude checks for experiment configurations.
use gibbsdc::harness::disagreement_decay_experiment;
use gibbsdc::models::InteractionModel;
use gibbsdc::geometry::Region;

#[test]
#[ignore]
fn pilot_decay_magnitudes() {
    let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
    let a = Region::rect([0.0, 0.0], [1.0, 1.0]);
    let t0 = std::time::Instant::now();
    let rows = disagreement_decay_experiment(&model, &a, &[1.0, 2.0, 3.0, 4.0], 5.2, 10_000, 7, 1).unwrap();
    for r in &rows {
        println!(
            "s={} p_disagree={:.5} (se {:.5})  p_connect={:.5} (se {:.5}) dominance={}",
            r.dist, r.p_disagree, r.se_disagree, r.p_connect, r.se_connect, r.dominance_exact
        );
    }
    println!("elapsed {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn pilot_clt_trend() {
    use gibbsdc::functionals::{ScoreSpec, Variant};
    use gibbsdc::harness::{ks_distance, replicate_functional, standardize, variance_scaling, SamplingRoute};
    let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
    let t0 = std::time::Instant::now();
    let table = replicate_functional(
        &model,
        &ScoreSpec::KnnLength { k: 4 },
        Variant::Restricted,
        &[10.0, 20.0, 40.0],
        1000,
        7,
        SamplingRoute::InfiniteVolume,
        1,
    )
    .unwrap();
    println!("sampling elapsed {:?}", t0.elapsed());
    for row in variance_scaling::<2>(&table) {
        let z = standardize(&table.values_for(row.n)).unwrap();
        println!(
            "n={} mean={:.3} normvar={:.5} relchange={:.4} KS={:.4} excluded={}",
            row.n, row.mean, row.normalized_variance, row.relative_change,
            ks_distance(&z), row.excluded
        );
    }
    println!("total elapsed {:?}", t0.elapsed());
}
