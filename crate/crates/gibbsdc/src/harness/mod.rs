//! Monte Carlo experiment engine: replicate generation across window sizes,
//! variance scaling, studentized normality checks, and the paired
//! disagreement/connection decay experiment.

mod ks;

pub use ks::{erf, erfc, ks_distance, ks_distance_to, normal_cdf};

use crate::coupling::{infinite_volume_approx, CouplingAlgo, GridAnchors};
use crate::functionals::{score_sum, ScoreSpec, Variant};
use crate::geometry::{Point, PointPattern, Region};
use crate::models::InteractionModel;
use crate::percolation::{connects, CarrierField};
use crate::rng::{tags, StreamKey};
use crate::sampler::{
    rejection_budget_hint, rejection_sample_gibbs, sample_marked_poisson, standard_thinning,
    RetentionBudget, RetentionMode,
};
use crate::{Error, Result};
use rayon::prelude::*;

/// How replicates of the Gibbs process are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingRoute {
    /// exact rejection (small windows; cost grows like e^{kappa_max |Q|})
    Rejection,
    /// exact infinite-volume restriction via the certified radial coupling
    InfiniteVolume,
    /// plugin-estimated thinning with M draws per decision (large windows)
    ThinningPlugin(u32),
    /// rejection when `kappa_max |Q_n|` is small, infinite-volume otherwise
    Auto,
}

impl SamplingRoute {
    fn resolve<const D: usize>(self, kappa_max: f64, n: f64) -> SamplingRoute {
        match self {
            SamplingRoute::Auto => {
                if kappa_max * n.powi(D as i32) <= 8.0 {
                    SamplingRoute::Rejection
                } else {
                    SamplingRoute::InfiniteVolume
                }
            }
            other => other,
        }
    }
}

/// One replicate result.
#[derive(Clone, Debug)]
pub struct ExperimentRow {
    pub n: f64,
    pub rep: u64,
    pub value: f64,
    /// failure flag: flagged rows are excluded from aggregates
    pub flag: Option<String>,
}

/// Replicate-indexed results of a functional experiment.
#[derive(Clone, Debug)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub master_seed: u64,
    pub spec: ScoreSpec,
    pub n_list: Vec<f64>,
}

impl ExperimentTable {
    /// Unflagged values for a window size.
    pub fn values_for(&self, n: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.flag.is_none())
            .map(|r| r.value)
            .collect()
    }

    pub fn excluded_for(&self, n: f64) -> usize {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.flag.is_some())
            .count()
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Effective worker count: an explicit request wins, otherwise the
/// `GIBBSDC_THREADS` environment variable, otherwise 1.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("GIBBSDC_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1)
}

fn run_pool<T: Send>(workers: usize, job: impl Fn() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(job)
}

/// Sample one replicate of the Gibbs process on `Q_n` and evaluate the
/// functional. Window sizes and replicate indices enter only through the
/// stream key, so results are independent of scheduling.
fn one_replicate<const D: usize>(
    model: &InteractionModel<D>,
    spec: &ScoreSpec,
    variant: Variant,
    n: f64,
    rep: u64,
    master_seed: u64,
    route: SamplingRoute,
) -> ExperimentRow {
    let key = StreamKey::root(master_seed).child(&[tags::REPLICATE, n.to_bits(), rep]);
    let q = Region::<D>::window(n);
    let sample: Result<PointPattern<D>> = match route.resolve::<D>(model.kappa_max(), n) {
        SamplingRoute::Rejection => {
            let budget = rejection_budget_hint(model.kappa_max(), n.powi(D as i32));
            rejection_sample_gibbs(model, &q, &PointPattern::empty(), &key, budget)
        }
        SamplingRoute::InfiniteVolume => {
            let field = CarrierField::new(model.kappa_max(), key.child(&[tags::CARRIER]));
            let anchors = GridAnchors::for_range::<D>(model.r0());
            infinite_volume_approx(
                model,
                &q,
                &PointPattern::empty(),
                None,
                n + 40.0 * model.r0() + 20.0,
                &field,
                &anchors,
                RetentionMode::ExactRecursive,
                &key,
                &RetentionBudget::default(),
            )
            .map(|s| s.pattern)
        }
        SamplingRoute::ThinningPlugin(m) => {
            let carrier = sample_marked_poisson(&q, model.kappa_max(), &key.child(&[tags::CARRIER]))
                .expect("bounded window");
            standard_thinning(
                model,
                &q,
                &PointPattern::empty(),
                &crate::geometry::OrderMap::radial(),
                &carrier,
                RetentionMode::PluginEstimate(m),
                &key,
                &RetentionBudget::default(),
            )
        }
        SamplingRoute::Auto => unreachable!("resolved above"),
    };
    match sample.and_then(|pat| score_sum(&pat, spec, &q, variant)) {
        Ok(value) => ExperimentRow {
            n,
            rep,
            value,
            flag: None,
        },
        Err(Error::InfiniteScore(p)) => ExperimentRow {
            n,
            rep,
            value: f64::NAN,
            flag: Some(format!("infinite-score at {p}")),
        },
        Err(Error::RejectionBudget(_)) | Err(Error::RetentionBudget(_)) | Err(Error::NoCertificate(_)) => {
            ExperimentRow {
                n,
                rep,
                value: f64::NAN,
                flag: Some("budget-exceeded".into()),
            }
        }
        Err(e) => panic!("replicate ({n}, {rep}) failed fatally: {e}"),
    }
}

/// Drive `reps` replicates of a functional over each window size. Failures
/// become flagged rows; everything else is deterministic in
/// `(config, master_seed)` regardless of the worker count.
pub fn replicate_functional<const D: usize>(
    model: &InteractionModel<D>,
    spec: &ScoreSpec,
    variant: Variant,
    n_list: &[f64],
    reps: u64,
    master_seed: u64,
    route: SamplingRoute,
    workers: usize,
) -> Result<ExperimentTable> {
    spec.validate(D)?;
    let mut rows = Vec::with_capacity(n_list.len() * reps as usize);
    for &n in n_list {
        let mut batch: Vec<ExperimentRow> = run_pool(workers, || {
            (0..reps)
                .into_par_iter()
                .map(|rep| one_replicate(model, spec, variant, n, rep, master_seed, route))
                .collect()
        });
        batch.sort_by_key(|r| r.rep);
        rows.extend(batch);
    }
    Ok(ExperimentTable {
        rows,
        master_seed,
        spec: spec.clone(),
        n_list: n_list.to_vec(),
    })
}

/// Normalized variance per window size with successive relative changes.
#[derive(Clone, Copy, Debug)]
pub struct ScalingRow {
    pub n: f64,
    pub mean: f64,
    pub normalized_variance: f64,
    /// |v_k - v_{k-1}| / v_{k-1}; 0 for the first row
    pub relative_change: f64,
    pub included: usize,
    pub excluded: usize,
}

/// The `|Q_n|^{-1} Var` stabilization diagnostic.
pub fn variance_scaling<const D: usize>(table: &ExperimentTable) -> Vec<ScalingRow> {
    let mut out: Vec<ScalingRow> = Vec::new();
    for &n in &table.n_list {
        let values = table.values_for(n);
        let (mean, var) = mean_var(&values);
        let nv = var / n.powi(D as i32);
        let rel = match out.last() {
            Some(prev) if prev.normalized_variance > 0.0 => {
                (nv - prev.normalized_variance).abs() / prev.normalized_variance
            }
            _ => 0.0,
        };
        out.push(ScalingRow {
            n,
            mean,
            normalized_variance: nv,
            relative_change: rel,
            included: values.len(),
            excluded: table.excluded_for(n),
        });
    }
    out
}

/// Studentize the values of one window size: `(v - mean) / sd`.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::invalid("need at least two values"));
    }
    let (mean, var) = mean_var(values);
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// One distance row of the disagreement/connection decay experiment.
#[derive(Clone, Copy, Debug)]
pub struct DisagreementRow {
    pub dist: f64,
    pub p_disagree: f64,
    pub se_disagree: f64,
    pub p_connect: f64,
    pub se_connect: f64,
    pub reps: u64,
    /// disagreement-on-A implied connection on every single realization
    pub dominance_exact: bool,
}

/// Paired radial couplings with a boundary perturbation on a unit box at
/// each distance from `A`, reporting the empirical disagreement-on-A
/// probability next to the percolation bound estimate. Both indicators are
/// evaluated on the same carrier, so the dominance
/// `p_disagree <= p_connect` holds row-wise by construction (and is
/// asserted per realization).
pub fn disagreement_decay_experiment<const D: usize>(
    model: &InteractionModel<D>,
    a: &Region<D>,
    distances: &[f64],
    margin: f64,
    reps: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<DisagreementRow>> {
    let r0 = model.r0();
    if margin < distances.iter().cloned().fold(0.0, f64::max) + 4.0 * r0 {
        return Err(Error::invalid(
            "window margin must be at least max distance + 4 r0",
        ));
    }
    let a_bb = a.bbox().ok_or(Error::UnboundedRegion("test region A"))?;
    let anchors = GridAnchors::for_range::<D>(r0);
    let mut rows = Vec::with_capacity(distances.len());
    for &s in distances {
        // unit box at distance s from A along the first axis
        let mut b_lo = a_bb.lo;
        let mut b_hi = a_bb.hi;
        b_lo[0] = a_bb.hi[0] + s;
        b_hi[0] = a_bb.hi[0] + s + 1.0;
        for i in 1..D {
            b_hi[i] = b_lo[i] + 1.0;
        }
        let b = Region::Box(crate::geometry::Aabb::new(b_lo, b_hi));
        // simulation window: hull of A and B padded by the margin, with B
        // carved out of it (B stays boundary territory)
        let hull = a_bb.hull(&b.bbox().unwrap());
        let mut w_lo = hull.lo;
        let mut w_hi = hull.hi;
        for i in 0..D {
            w_lo[i] -= margin;
            w_hi[i] += margin;
        }
        let q = Region::diff(
            Region::Box(crate::geometry::Aabb::new(w_lo, w_hi)),
            b.clone(),
        );
        // perturbation: a grid of boundary points inside B
        let mut psi_pts = Vec::new();
        for ix in 0..3 {
            for iy in 0..3usize {
                let mut c = [0.0; D];
                c[0] = b_lo[0] + 0.1 + 0.4 * ix as f64;
                if D >= 2 {
                    c[1] = b_lo[1] + 0.1 + 0.4 * iy as f64;
                }
                for item in c.iter_mut().skip(2) {
                    *item = (b_lo[2] + b_hi[2]) / 2.0;
                }
                psi_pts.push(Point::new(c));
            }
        }
        psi_pts.dedup_by(|x, y| x == y);
        let psi_b = PointPattern::new(psi_pts)?;

        let q_bbox = q.bbox().expect("bounded decay window");
        let aset = anchors.ordered::<D>(&q_bbox, r0);
        let results: Vec<Result<(bool, bool, bool)>> = run_pool(workers, || {
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let key = StreamKey::root(master_seed).child(&[tags::DECAY, s.to_bits(), rep]);
                    let carrier =
                        sample_marked_poisson(&q, model.kappa_max(), &key.child(&[tags::CARRIER]))?;
                    let pair = crate::coupling::coupling_pair_prepared(
                        CouplingAlgo::Radial,
                        model,
                        &q,
                        &b,
                        &PointPattern::empty(),
                        &psi_b,
                        &carrier,
                        Some(&aset),
                        RetentionMode::ExactRecursive,
                        &key,
                        &RetentionBudget::default(),
                    )?;
                    let mut on_a_1 = pair.output_a.restrict(a).points().to_vec();
                    let mut on_a_2 = pair.output_b.restrict(a).points().to_vec();
                    on_a_1.sort_by(|x, y| x.lex_cmp(y));
                    on_a_2.sort_by(|x, y| x.lex_cmp(y));
                    let disagree = on_a_1 != on_a_2;
                    let connect = connects(a, &b, &carrier.projection(), r0)?;
                    Ok((disagree, connect, pair.confinement_ok))
                })
                .collect()
        });
        let mut d_hits = 0u64;
        let mut c_hits = 0u64;
        let mut dominance = true;
        for r in results {
            let (d, c, conf) = r?;
            if d {
                d_hits += 1;
            }
            if c {
                c_hits += 1;
            }
            if !conf || (d && !c) {
                dominance = false;
            }
        }
        let pd = d_hits as f64 / reps as f64;
        let pc = c_hits as f64 / reps as f64;
        rows.push(DisagreementRow {
            dist: s,
            p_disagree: pd,
            se_disagree: (pd * (1.0 - pd) / reps as f64).sqrt(),
            p_connect: pc,
            se_connect: (pc * (1.0 - pc) / reps as f64).sqrt(),
            reps,
            dominance_exact: dominance,
        });
    }
    Ok(rows)
}

/// Weighted least squares of `log p` on distance over the rows with
/// positive estimates: returns `(slope, intercept, r_squared, points_used)`.
pub fn log_decay_fit(rows: &[(f64, f64)]) -> (f64, f64, f64, usize) {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|&(s, p)| (s, p.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return (0.0, 0.0, 0.0, n);
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let nf = n as f64;
    let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
    let intercept = (sy - slope * sx) / nf;
    let mean_y = sy / nf;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replicate_table() {
        let model = InteractionModel::<2>::poisson(1.0, 0.3).unwrap();
        let t = replicate_functional(
            &model,
            &ScoreSpec::MstTotal,
            Variant::Restricted,
            &[1.0],
            1,
            7,
            SamplingRoute::Rejection,
            1,
        )
        .unwrap();
        assert_eq!(t.rows.len(), 1);
    }

    #[test]
    fn poisson_count_moments_via_betti_zero_at_tiny_scale() {
        // at s below the minimal gap, beta_0 counts points, so the table
        // reproduces Poisson count moments: mean = var = alpha0 |Q_n|
        let model = InteractionModel::<2>::poisson(1.0, 0.3).unwrap();
        let n = 2.0;
        let t = replicate_functional(
            &model,
            &ScoreSpec::Betti {
                q: 0,
                r: 0.0,
                s: 1e-9,
            },
            Variant::Restricted,
            &[n],
            4_000,
            11,
            SamplingRoute::Rejection,
            1,
        )
        .unwrap();
        let values = t.values_for(n);
        let (mean, var) = mean_var(&values);
        let lam = n * n;
        let se_mean = (lam / values.len() as f64).sqrt();
        assert!((mean - lam).abs() < 4.0 * se_mean, "mean {mean}");
        assert!((var - lam).abs() < 0.15 * lam, "var {var}");
        let scaling = variance_scaling::<2>(&t);
        assert!((scaling[0].normalized_variance - 1.0).abs() < 0.15);
    }

    #[test]
    fn standardized_samples_have_zero_mean_unit_sd() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64) * 0.37 + 2.0).collect();
        let z = standardize(&values).unwrap();
        let (m, v) = mean_var(&z);
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
        // affine invariance
        let affine: Vec<f64> = values.iter().map(|v| 3.0 * v - 11.0).collect();
        let z2 = standardize(&affine).unwrap();
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(matches!(
            standardize(&vec![1.0; 10]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn constant_functional_scales_to_zero() {
        let rows = vec![
            ExperimentRow {
                n: 2.0,
                rep: 0,
                value: 5.0,
                flag: None,
            },
            ExperimentRow {
                n: 2.0,
                rep: 1,
                value: 5.0,
                flag: None,
            },
        ];
        let t = ExperimentTable {
            rows,
            master_seed: 0,
            spec: ScoreSpec::MstTotal,
            n_list: vec![2.0],
        };
        assert_eq!(variance_scaling::<2>(&t)[0].normalized_variance, 0.0);
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
        let run = |workers| {
            replicate_functional(
                &model,
                &ScoreSpec::MstTotal,
                Variant::Restricted,
                &[1.0, 2.0],
                50,
                13,
                SamplingRoute::Rejection,
                workers,
            )
            .unwrap()
        };
        let a = run(1);
        let b = run(4);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.n, rb.n);
            assert_eq!(ra.rep, rb.rep);
            assert!(ra.value == rb.value || (ra.value.is_nan() && rb.value.is_nan()));
        }
    }

    #[test]
    fn decay_rows_dominate_and_control_arm_is_exact_zero() {
        let model = InteractionModel::<2>::hard_sphere(1.0, 0.3).unwrap();
        let a = Region::rect([0.0, 0.0], [1.0, 1.0]);
        let rows =
            disagreement_decay_experiment(&model, &a, &[0.5, 1.5], 2.8, 150, 17, 1).unwrap();
        for row in &rows {
            assert!(row.dominance_exact);
            assert!(row.p_disagree <= row.p_connect);
        }
        assert!(rows[0].p_connect > rows[1].p_connect - 0.1);
    }

    #[test]
    fn log_fit_recovers_exponential_decay() {
        let rows: Vec<(f64, f64)> = (1..=4)
            .map(|k| (k as f64, (-1.3 * k as f64).exp() * 0.8))
            .collect();
        let (slope, _, r2, used) = log_decay_fit(&rows);
        assert_eq!(used, 4);
        assert!((slope + 1.3).abs() < 1e-9);
        assert!(r2 > 0.999999);
    }
}
