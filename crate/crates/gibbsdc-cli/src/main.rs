//! Command-line driver: sampling, couplings, percolation decay curves,
//! functional evaluation, and the CLT experiment harness.
//!
//! Exit codes: 0 success, 2 validation/configuration errors, 3 exhausted
//! simulation budgets. Every output file starts with a comment header
//! carrying the tool version, the effective configuration, and the master
//! seed; rerunning a command with the same configuration byte-reproduces
//! its artifacts. `GIBBSDC_THREADS` caps the replicate worker count.

mod config;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use config::{provenance_header, RunConfig};
use gibbsdc::coupling::{coupling_pair, CouplingAlgo, GridAnchors};
use gibbsdc::functionals::{score_sum, ScoreSpec, Variant};
use gibbsdc::geometry::{Aabb, OrderMap, Point, PointPattern, Region};
use gibbsdc::harness::{
    ks_distance, mean_var, replicate_functional, standardize, variance_scaling, worker_count,
    SamplingRoute,
};
use gibbsdc::models::InteractionModel;
use gibbsdc::percolation::decay_curve;
use gibbsdc::rng::tags;
use gibbsdc::sampler::{
    rejection_budget_hint, rejection_sample_gibbs, sample_marked_poisson, standard_thinning,
    RetentionBudget, RetentionMode,
};
use gibbsdc::{Error, StreamKey};
use std::io::Write;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gibbsdc", version, about = "Gibbs point process simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// plain-text key=value config file; flags override file values
    #[arg(long)]
    config: Option<String>,
    /// model kind: poisson|strauss|hard_sphere|area
    #[arg(long)]
    model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r0: Option<String>,
    /// Strauss interaction strength
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// area-interaction parameter in (0, 1]
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// area-estimation grid step (default r0/200)
    #[arg(long, allow_hyphen_values = true)]
    grid_resolution: Option<String>,
    /// ambient dimension, 2 or 3
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one Gibbs sample and write it as CSV
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// window size n for Q_n = [-n/2, n/2]^d
        #[arg(long)]
        window: Option<String>,
        /// rejection | thinning-exact | thinning-plugin:<M>
        #[arg(long)]
        mode: Option<String>,
        /// boundary conditions: a point CSV path, or "none"
        #[arg(long)]
        boundary: Option<String>,
    },
    /// Paired disagreement coupling with a boundary perturbation
    Couple {
        #[command(flatten)]
        common: CommonArgs,
        /// radial | cluster
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        window: Option<String>,
        /// perturbation box "x0,y0,x1,y1" (6 coordinates in d = 3)
        #[arg(long)]
        perturb_box: Option<String>,
        #[arg(long)]
        reps: Option<String>,
    },
    /// Empirical connection-decay curve of the dominating Boolean model
    Percolation {
        #[command(flatten)]
        common: CommonArgs,
        /// comma-separated shell distances
        #[arg(long)]
        distances: Option<String>,
        #[arg(long)]
        reps: Option<String>,
    },
    /// Evaluate a functional on a point CSV
    Functional {
        #[command(flatten)]
        common: CommonArgs,
        /// knn-length:k=4 | knn-large:k=4,a=1.0 | voronoi | mst | betti:q=1,r=0.5,s=0.8
        #[arg(long = "spec")]
        functional: Option<String>,
        /// input point CSV
        #[arg(long = "in")]
        input: Option<String>,
        #[arg(long)]
        window: Option<String>,
        /// full | restricted
        #[arg(long)]
        variant: Option<String>,
    },
    /// Replicated CLT experiment over growing windows
    Clt {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        functional: Option<String>,
        /// comma-separated window sizes
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        reps: Option<String>,
        /// rejection | infinite-volume | thinning-plugin:<M> | auto
        #[arg(long)]
        route: Option<String>,
        /// full | restricted (default restricted)
        #[arg(long)]
        variant: Option<String>,
        /// human-readable report path
        #[arg(long)]
        report: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let budget = e.downcast_ref::<Error>().is_some_and(|ge| {
                matches!(
                    ge,
                    Error::RejectionBudget(_) | Error::RetentionBudget(_) | Error::NoCertificate(_)
                )
            });
            if budget {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn merge_common(cfg: &mut RunConfig, c: &CommonArgs) {
    cfg.set_flag("model", c.model.clone());
    cfg.set_flag("alpha0", c.alpha0.clone());
    cfg.set_flag("r0", c.r0.clone());
    cfg.set_flag("beta", c.beta.clone());
    cfg.set_flag("gamma", c.gamma.clone());
    cfg.set_flag("grid_resolution", c.grid_resolution.clone());
    cfg.set_flag("dim", c.dim.clone());
    cfg.set_flag("seed", c.seed.clone());
    cfg.set_flag("out", c.out.clone());
}

fn build_model<const D: usize>(cfg: &RunConfig) -> anyhow::Result<InteractionModel<D>> {
    let alpha0 = cfg.require_f64("alpha0")?;
    let r0 = cfg.require_f64("r0")?;
    let kind = cfg.require("model")?;
    let model = match kind {
        "poisson" => InteractionModel::poisson(alpha0, r0),
        "strauss" => InteractionModel::strauss(alpha0, r0, cfg.require_f64("beta")?),
        "hard_sphere" => InteractionModel::hard_sphere(alpha0, r0),
        "area" => InteractionModel::area_interaction(
            alpha0,
            r0,
            cfg.require_f64("gamma")?,
            cfg.f64_or("grid_resolution", r0 / 200.0)?,
        ),
        other => bail!("unknown model '{other}' (poisson|strauss|hard_sphere|area)"),
    };
    model.map_err(Into::into)
}

fn dim_of(cfg: &RunConfig) -> anyhow::Result<usize> {
    let d = cfg.f64_or("dim", 2.0)? as usize;
    if d != 2 && d != 3 {
        bail!("dim must be 2 or 3");
    }
    Ok(d)
}

fn parse_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number '{t}' in list"))
        })
        .collect()
}

fn write_artifact(path: &str, content: &str) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("creating {path}"))?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample {
            common,
            window,
            mode,
            boundary,
        } => {
            let mut cfg = RunConfig::from_file(common.config.as_deref())?;
            merge_common(&mut cfg, &common);
            cfg.set_flag("window", window);
            cfg.set_flag("mode", mode);
            cfg.set_flag("boundary", boundary);
            match dim_of(&cfg)? {
                2 => cmd_sample::<2>(&cfg),
                _ => cmd_sample::<3>(&cfg),
            }
        }
        Command::Couple {
            common,
            algo,
            window,
            perturb_box,
            reps,
        } => {
            let mut cfg = RunConfig::from_file(common.config.as_deref())?;
            merge_common(&mut cfg, &common);
            cfg.set_flag("algo", algo);
            cfg.set_flag("window", window);
            cfg.set_flag("perturb_box", perturb_box);
            cfg.set_flag("reps", reps);
            match dim_of(&cfg)? {
                2 => cmd_couple::<2>(&cfg),
                _ => cmd_couple::<3>(&cfg),
            }
        }
        Command::Percolation {
            common,
            distances,
            reps,
        } => {
            let mut cfg = RunConfig::from_file(common.config.as_deref())?;
            merge_common(&mut cfg, &common);
            cfg.set_flag("distances", distances);
            cfg.set_flag("reps", reps);
            match dim_of(&cfg)? {
                2 => cmd_percolation::<2>(&cfg),
                _ => cmd_percolation::<3>(&cfg),
            }
        }
        Command::Functional {
            common,
            functional,
            input,
            window,
            variant,
        } => {
            let mut cfg = RunConfig::from_file(common.config.as_deref())?;
            merge_common(&mut cfg, &common);
            cfg.set_flag("functional", functional);
            cfg.set_flag("in", input);
            cfg.set_flag("window", window);
            cfg.set_flag("variant", variant);
            match dim_of(&cfg)? {
                2 => cmd_functional::<2>(&cfg),
                _ => cmd_functional::<3>(&cfg),
            }
        }
        Command::Clt {
            common,
            functional,
            n,
            reps,
            route,
            variant,
            report,
        } => {
            let mut cfg = RunConfig::from_file(common.config.as_deref())?;
            merge_common(&mut cfg, &common);
            cfg.set_flag("functional", functional);
            cfg.set_flag("n", n);
            cfg.set_flag("reps", reps);
            cfg.set_flag("route", route);
            cfg.set_flag("variant", variant);
            cfg.set_flag("report", report);
            match dim_of(&cfg)? {
                2 => cmd_clt::<2>(&cfg),
                _ => cmd_clt::<3>(&cfg),
            }
        }
    }
}

fn parse_variant(cfg: &RunConfig) -> anyhow::Result<Variant> {
    match cfg.get("variant").unwrap_or("restricted") {
        "full" => Ok(Variant::Full),
        "restricted" => Ok(Variant::Restricted),
        other => bail!("unknown variant '{other}' (full|restricted)"),
    }
}

fn load_boundary<const D: usize>(cfg: &RunConfig) -> anyhow::Result<PointPattern<D>> {
    match cfg.get("boundary") {
        None | Some("none") => Ok(PointPattern::empty()),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading boundary {path}"))?;
            Ok(PointPattern::from_csv(&text)?)
        }
    }
}

fn cmd_sample<const D: usize>(cfg: &RunConfig) -> anyhow::Result<()> {
    let model = build_model::<D>(cfg)?;
    let n = cfg.require_f64("window")?;
    if n <= 0.0 {
        bail!("window must be positive");
    }
    let seed = cfg.require_u64("seed")?;
    let q = Region::<D>::window(n);
    let psi = load_boundary::<D>(cfg)?;
    let key = StreamKey::root(seed);
    let mode = cfg.get("mode").unwrap_or("rejection");
    let pattern = match mode {
        "rejection" => {
            let budget = rejection_budget_hint(model.kappa_max(), n.powi(D as i32));
            rejection_sample_gibbs(&model, &q, &psi, &key, budget)?
        }
        m if m == "thinning-exact" || m.starts_with("thinning-plugin") => {
            let retention = if m == "thinning-exact" {
                RetentionMode::ExactRecursive
            } else {
                let count: u32 = m
                    .strip_prefix("thinning-plugin:")
                    .context("thinning-plugin needs :<M>")?
                    .parse()
                    .context("bad plugin sample count")?;
                RetentionMode::PluginEstimate(count)
            };
            let carrier =
                sample_marked_poisson(&q, model.kappa_max(), &key.child(&[tags::CARRIER]))?;
            standard_thinning(
                &model,
                &q,
                &psi,
                &OrderMap::radial(),
                &carrier,
                retention,
                &key,
                &RetentionBudget::default(),
            )?
        }
        other => bail!("unknown mode '{other}'"),
    };
    let out = cfg.require("out")?;
    let body = format!("{}{}", provenance_header(cfg, seed), pattern.to_csv());
    write_artifact(out, &body)?;
    println!("wrote {} points to {}", pattern.len(), out);
    Ok(())
}

fn parse_box<const D: usize>(text: &str) -> anyhow::Result<Region<D>> {
    let coords = parse_list(text)?;
    if coords.len() != 2 * D {
        bail!("perturb_box needs {} coordinates for d = {D}", 2 * D);
    }
    let mut lo = [0.0; D];
    let mut hi = [0.0; D];
    for i in 0..D {
        lo[i] = coords[i];
        hi[i] = coords[D + i];
        if lo[i] >= hi[i] {
            bail!("perturb_box has empty extent on axis {i}");
        }
    }
    Ok(Region::Box(Aabb::new(lo, hi)))
}

fn cmd_couple<const D: usize>(cfg: &RunConfig) -> anyhow::Result<()> {
    let model = build_model::<D>(cfg)?;
    let n = cfg.require_f64("window")?;
    let seed = cfg.require_u64("seed")?;
    let reps = cfg.require_u64("reps")?;
    let q = Region::<D>::window(n);
    let b = parse_box::<D>(cfg.require("perturb_box")?)?;
    if let Some(bb) = b.bbox() {
        if Region::<D>::window(n).contains(&Point::new(bb.lo)) {
            bail!("perturb_box must lie outside the window");
        }
    }
    let algo = match cfg.require("algo")? {
        "radial" => CouplingAlgo::Radial,
        "cluster" => CouplingAlgo::Cluster,
        other => bail!("unknown algo '{other}' (radial|cluster)"),
    };
    // perturbation: empty boundary versus a single point at the box center
    let bb = b.bbox().expect("box is bounded");
    let mut center = [0.0; D];
    for i in 0..D {
        center[i] = (bb.lo[i] + bb.hi[i]) / 2.0;
    }
    let psi_b = PointPattern::new(vec![Point::new(center)])?;
    let anchors = GridAnchors::for_range::<D>(model.r0());
    let root = StreamKey::root(seed);

    let mut csv = String::from("rep,cluster_id,agrees,dist_to_B\n");
    let mut disagreements = 0u64;
    for rep in 0..reps {
        let key = root.child(&[tags::REPLICATE, rep]);
        let carrier =
            sample_marked_poisson(&q, model.kappa_max(), &key.child(&[tags::CARRIER]))?;
        let pair = coupling_pair(
            algo,
            &model,
            &q,
            &b,
            &PointPattern::empty(),
            &psi_b,
            &carrier,
            &anchors,
            RetentionMode::ExactRecursive,
            &key,
            &RetentionBudget::default(),
        )?;
        if !pair.confinement_ok {
            bail!("confinement certificate violated at rep {rep} (this is a bug)");
        }
        if pair.any_disagreement() {
            disagreements += 1;
        }
        for cl in 0..pair.clusters.n_clusters() {
            csv.push_str(&format!(
                "{},{},{},{:.6e}\n",
                rep,
                cl,
                u8::from(!pair.disagree[cl]),
                pair.dist_to_b[cl]
            ));
        }
    }
    let out = cfg.require("out")?;
    write_artifact(out, &format!("{}{}", provenance_header(cfg, seed), csv))?;
    println!(
        "{} reps, {} with disagreement, trace in {}",
        reps, disagreements, out
    );
    Ok(())
}

fn cmd_percolation<const D: usize>(cfg: &RunConfig) -> anyhow::Result<()> {
    let alpha0 = cfg.require_f64("alpha0")?;
    let r0 = cfg.require_f64("r0")?;
    if r0 <= 0.0 {
        bail!("r0 must be positive");
    }
    let seed = cfg.require_u64("seed")?;
    let reps = cfg.require_u64("reps")?;
    let distances = parse_list(cfg.require("distances")?)?;
    let margin = distances.iter().cloned().fold(0.0f64, f64::max) + 4.0 * r0;
    let rows = decay_curve::<D>(alpha0, r0, &distances, margin, reps, seed)?;
    let mut csv = String::from("s,p_hat,stderr,reps\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{:.6e},{:.6e},{}\n",
            row.s, row.p_hat, row.stderr, row.reps
        ));
    }
    let out = cfg.require("out")?;
    write_artifact(out, &format!("{}{}", provenance_header(cfg, seed), csv))?;
    println!("decay curve over {} distances in {}", rows.len(), out);
    Ok(())
}

fn cmd_functional<const D: usize>(cfg: &RunConfig) -> anyhow::Result<()> {
    let spec = ScoreSpec::parse(cfg.require("functional")?)?;
    spec.validate(D)?;
    let n = cfg.require_f64("window")?;
    let variant = parse_variant(cfg)?;
    let text = std::fs::read_to_string(cfg.require("in")?)
        .with_context(|| "reading input point CSV")?;
    let phi = PointPattern::<D>::from_csv(&text)?;
    let value = score_sum(&phi, &spec, &Region::window(n), variant)?;
    println!("{spec} over Q_{n}: {value:.17e}");
    if let Some(out) = cfg.get("out") {
        write_artifact(
            out,
            &format!(
                "{}functional,window,variant,value\n{},{},{:?},{:.17e}\n",
                provenance_header(cfg, 0),
                spec,
                n,
                variant,
                value
            ),
        )?;
    }
    Ok(())
}

fn parse_route(cfg: &RunConfig) -> anyhow::Result<SamplingRoute> {
    Ok(match cfg.get("route").unwrap_or("auto") {
        "auto" => SamplingRoute::Auto,
        "rejection" => SamplingRoute::Rejection,
        "infinite-volume" => SamplingRoute::InfiniteVolume,
        m if m.starts_with("thinning-plugin:") => {
            let count: u32 = m
                .strip_prefix("thinning-plugin:")
                .unwrap()
                .parse()
                .context("bad plugin sample count")?;
            SamplingRoute::ThinningPlugin(count)
        }
        other => bail!("unknown route '{other}'"),
    })
}

fn cmd_clt<const D: usize>(cfg: &RunConfig) -> anyhow::Result<()> {
    let model = build_model::<D>(cfg)?;
    let spec = ScoreSpec::parse(cfg.require("functional")?)?;
    spec.validate(D)?;
    let n_list = parse_list(cfg.require("n")?)?;
    let reps = cfg.require_u64("reps")?;
    let seed = cfg.require_u64("seed")?;
    let route = parse_route(cfg)?;
    let variant = parse_variant(cfg)?;
    let workers = worker_count(None);
    let table = replicate_functional(&model, &spec, variant, &n_list, reps, seed, route, workers)?;

    let mut csv = String::from("n,rep,value,flag\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{},{:.17e},{}\n",
            row.n,
            row.rep,
            row.value,
            row.flag.as_deref().unwrap_or("")
        ));
    }
    let out = cfg.require("out")?;
    write_artifact(out, &format!("{}{}", provenance_header(cfg, seed), csv))?;

    let scaling = variance_scaling::<D>(&table);
    let mut report = provenance_header(cfg, seed);
    report.push_str("n,included,excluded,mean,normalized_variance,relative_change,ks\n");
    for row in &scaling {
        let values = table.values_for(row.n);
        let ks = standardize(&values)
            .map(|z| format!("{:.6}", ks_distance(&z)))
            .unwrap_or_else(|_| "nan".into());
        report.push_str(&format!(
            "{},{},{},{:.6},{:.6e},{:.4},{}\n",
            row.n, row.included, row.excluded, row.mean, row.normalized_variance,
            row.relative_change, ks
        ));
    }
    {
        // sanity echo of the raw moments, useful when eyeballing reports
        let last = *n_list.last().expect("nonempty n list");
        let (m, v) = mean_var(&table.values_for(last));
        report.push_str(&format!("# largest window: mean={m:.6} variance={v:.6}\n"));
    }
    let report_path = cfg.require("report")?;
    write_artifact(report_path, &report)?;
    println!("table in {out}, report in {report_path}");
    Ok(())
}
