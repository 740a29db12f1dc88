//! Stopping-set exploration and disagreement couplings.
//!
//! Both couplings thin the same marked carrier under an exploration schedule
//! that is determined by the carrier alone (a stopping-set scheme), so two
//! runs with boundary conditions differing only on a set `B` walk through
//! identical stopping sets and consume identical keyed randomness wherever
//! the explored sub-configurations coincide. Disagreement is then confined
//! to the Boolean clusters of the carrier whose `r0/2`-dilation meets
//! `B_{r0/2}(B)`, per realization and not merely in distribution.
//!
//! The exploration state is an append-only log of chunks, each a ball, a
//! padded region, or a global order cut, with purely local membership
//! conditions. The union of the first `t` chunks is the explored region
//! after step `t`; the unexplored remainder is exposed to the retention
//! engine as an ordinary region.

mod infinite;

pub use infinite::{
    infinite_volume_approx, radial_consistency_check, stabilization_event, ConsistencyOutcome,
    InfiniteVolumeSample,
};

use crate::geometry::{
    Aabb, NeighborGrid, OrderMap, Point, PointPattern, PointView, Region, RegionPredicate,
};
use crate::models::InteractionModel;
use crate::percolation::{boolean_clusters, dist_point_lb, ClusterPartition};
use crate::rng::tags;
use crate::sampler::{RetentionBudget, RetentionEngine, RetentionMode};
use crate::{Error, Result, StreamKey};
use std::sync::{Arc, Mutex};

enum Chunk<const D: usize> {
    /// `{z : |z - center| <= radius}`; full exploration steps use
    /// `radius = r0`, prefix slices stop at the decided carrier point.
    Ball { center: Point<D>, radius: f64 },
    /// ball clipped to the start set `B_{r0}(B)` (radial stage A)
    BallInPad { center: Point<D>, radius: f64 },
    /// `{z : dist(z, region) <= pad}` (the `B_{r0}(B)` start set).
    Pad { region: Region<D>, pad: f64 },
    /// Downward-closed global cut `{z : z <= pivot}` under the log's order.
    GlobalUpto { pivot: Point<D> },
    /// Everything (final cluster-coupling step).
    All,
}

struct LogInner<const D: usize> {
    chunks: Vec<Chunk<D>>,
    /// dense grid over ball-chunk centers, cell width r0, spanning the
    /// window bbox padded by one ball radius
    grid: Vec<Vec<u32>>,
    grid_lo: [f64; D],
    grid_dims: [usize; D],
    /// indices of non-ball chunks (few)
    others: Vec<u32>,
    cell: f64,
    iota0: OrderMap<D>,
    /// geometry of the perturbation set for clipped chunks
    pad_region: Option<(Region<D>, f64)>,
}

impl<const D: usize> LogInner<D> {
    #[inline]
    fn cell_index(&self, p: &Point<D>) -> usize {
        let mut idx = 0usize;
        for i in 0..D {
            let k = ((p.coords()[i] - self.grid_lo[i]) / self.cell).floor();
            let k = (k as isize).clamp(0, self.grid_dims[i] as isize - 1) as usize;
            idx = idx * self.grid_dims[i] + k;
        }
        idx
    }
}

#[derive(Clone)]
pub(crate) struct ExplorationLog<const D: usize> {
    inner: Arc<Mutex<LogInner<D>>>,
}

impl<const D: usize> ExplorationLog<D> {
    fn new(
        r0: f64,
        iota0: OrderMap<D>,
        pad_region: Option<(Region<D>, f64)>,
        bbox: &Aabb<D>,
    ) -> Self {
        let mut grid_lo = [0.0; D];
        let mut grid_dims = [0usize; D];
        let mut cells = 1usize;
        for i in 0..D {
            grid_lo[i] = bbox.lo[i] - 2.0 * r0;
            let extent = bbox.hi[i] - bbox.lo[i] + 4.0 * r0;
            grid_dims[i] = ((extent / r0).ceil() as usize).max(1);
            cells *= grid_dims[i];
        }
        ExplorationLog {
            inner: Arc::new(Mutex::new(LogInner {
                chunks: Vec::new(),
                grid: vec![Vec::new(); cells],
                grid_lo,
                grid_dims,
                others: Vec::new(),
                cell: r0,
                iota0,
                pad_region,
            })),
        }
    }

    fn len(&self) -> usize {
        self.inner.lock().unwrap().chunks.len()
    }

    fn push(&self, chunk: Chunk<D>) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let id = inner.chunks.len() as u32;
        match &chunk {
            Chunk::Ball { center, .. } | Chunk::BallInPad { center, .. } => {
                let ci = inner.cell_index(center);
                inner.grid[ci].push(id);
            }
            _ => inner.others.push(id),
        }
        inner.chunks.push(chunk);
        inner.chunks.len()
    }

    /// Is `z` covered by one of the first `upto` chunks?
    fn covered(&self, z: &Point<D>, upto: usize) -> bool {
        let inner = self.inner.lock().unwrap();
        for &oi in &inner.others {
            if (oi as usize) < upto && chunk_covers(&inner, &inner.chunks[oi as usize], z) {
                return true;
            }
        }
        let mut base = [0isize; D];
        for i in 0..D {
            base[i] = ((z.coords()[i] - inner.grid_lo[i]) / inner.cell).floor() as isize;
        }
        let mut offs = [0isize; D];
        covered_scan(&inner, z, upto, &base, &mut offs, 0)
    }
}

fn covered_scan<const D: usize>(
    inner: &LogInner<D>,
    z: &Point<D>,
    upto: usize,
    base: &[isize; D],
    offs: &mut [isize; D],
    dim: usize,
) -> bool {
    if dim == D {
        let mut flat = 0usize;
        for i in 0..D {
            let k = base[i] + offs[i];
            if k < 0 || k >= inner.grid_dims[i] as isize {
                return false;
            }
            flat = flat * inner.grid_dims[i] + k as usize;
        }
        for &id in &inner.grid[flat] {
            if (id as usize) < upto && chunk_covers(inner, &inner.chunks[id as usize], z) {
                return true;
            }
        }
        return false;
    }
    for o in -1..=1 {
        offs[dim] = o;
        if covered_scan(inner, z, upto, base, offs, dim + 1) {
            return true;
        }
    }
    false
}

fn chunk_covers<const D: usize>(inner: &LogInner<D>, chunk: &Chunk<D>, z: &Point<D>) -> bool {
    match chunk {
        Chunk::Ball { center, radius } => z.dist_sq(center) <= radius * radius,
        Chunk::BallInPad { center, radius } => {
            if z.dist_sq(center) > radius * radius {
                return false;
            }
            let (region, pad) = inner.pad_region.as_ref().expect("clipped chunk needs a pad");
            dist_point_lb(z, region) <= *pad
        }
        Chunk::Pad { region, pad } => dist_point_lb(z, region) <= *pad,
        Chunk::GlobalUpto { pivot } => inner.iota0.cmp(z, pivot) != std::cmp::Ordering::Greater,
        Chunk::All => true,
    }
}

/// The unexplored remainder `Q \ S_t` as a region predicate.
struct Unexplored<const D: usize> {
    q: Region<D>,
    log: ExplorationLog<D>,
    upto: usize,
}

impl<const D: usize> RegionPredicate<D> for Unexplored<D> {
    fn contains(&self, p: &Point<D>) -> bool {
        self.q.contains(p) && !self.log.covered(p, self.upto)
    }

    fn bbox(&self) -> Option<Aabb<D>> {
        self.q.bbox()
    }

    fn describe(&self) -> &'static str {
        "unexplored remainder"
    }
}

/// Lattice anchors `delta Z^D`, ordered outside-in: descending sup-norm,
/// lexicographic within a shell. The spacing default keeps the cube
/// `Q_{2 delta}` inside `B_{r0}`, so anchors `r0`-cover space.
#[derive(Clone, Copy, Debug)]
pub struct GridAnchors {
    pub delta: f64,
}

impl GridAnchors {
    pub fn for_range<const D: usize>(r0: f64) -> Self {
        GridAnchors {
            delta: r0 / (2.0 * (D as f64).sqrt()),
        }
    }

    /// All anchors whose `r0`-ball meets `bbox`, in processing order, with
    /// a dense lattice lookup for occupancy marking.
    pub(crate) fn ordered<const D: usize>(&self, bbox: &Aabb<D>, r0: f64) -> AnchorSet<D> {
        let mut k_lo = [0i64; D];
        let mut dims = [0usize; D];
        let mut cells = 1usize;
        for i in 0..D {
            k_lo[i] = ((bbox.lo[i] - r0) / self.delta).floor() as i64;
            let k_hi = ((bbox.hi[i] + r0) / self.delta).ceil() as i64;
            dims[i] = (k_hi - k_lo[i] + 1) as usize;
            cells *= dims[i];
        }
        let mut pts = Vec::new();
        let mut lattice: Vec<([i64; D], u32)> = Vec::new();
        let mut idx = k_lo;
        let mut dims_hi = [0i64; D];
        for i in 0..D {
            dims_hi[i] = k_lo[i] + dims[i] as i64 - 1;
        }
        'outer: loop {
            let mut c = [0.0; D];
            for i in 0..D {
                c[i] = idx[i] as f64 * self.delta;
            }
            let p = Point::new(c);
            if bbox.dist_point(&p) <= r0 {
                lattice.push((idx, pts.len() as u32));
                pts.push(p);
            }
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] <= dims_hi[d] {
                    break;
                }
                idx[d] = k_lo[d];
                d += 1;
                if d == D {
                    break 'outer;
                }
            }
        }
        // outside-in order: descending sup-norm, lexicographic within shells
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let keys: Vec<f64> = pts.iter().map(|p| p.sup_norm()).collect();
        order.sort_unstable_by(|&a, &b| {
            keys[b as usize]
                .partial_cmp(&keys[a as usize])
                .expect("finite coords")
                .then_with(|| pts[a as usize].lex_cmp(&pts[b as usize]))
        });
        let mut rank = vec![0u32; pts.len()];
        for (r, &orig) in order.iter().enumerate() {
            rank[orig as usize] = r as u32;
        }
        let sorted_pts: Vec<Point<D>> = order.iter().map(|&i| pts[i as usize]).collect();
        let mut lattice_to_idx = vec![u32::MAX; cells];
        for (k, orig) in lattice {
            let mut flat = 0usize;
            for i in 0..D {
                flat = flat * dims[i] + (k[i] - k_lo[i]) as usize;
            }
            lattice_to_idx[flat] = rank[orig as usize];
        }
        AnchorSet {
            pts: sorted_pts,
            k_lo,
            dims,
            lattice_to_idx,
            delta: self.delta,
        }
    }
}

/// Ordered anchor list with a dense lattice index.
pub(crate) struct AnchorSet<const D: usize> {
    pts: Vec<Point<D>>,
    k_lo: [i64; D],
    dims: [usize; D],
    lattice_to_idx: Vec<u32>,
    delta: f64,
}

impl<const D: usize> AnchorSet<D> {
    /// Per-anchor flag: does any carrier point lie within `r0` of it?
    fn occupancy(&self, carrier: &[Point<D>], r0: f64) -> Vec<bool> {
        let mut occ = vec![false; self.pts.len()];
        let r2 = r0 * r0;
        for p in carrier {
            let mut lo = [0i64; D];
            let mut hi = [0i64; D];
            for i in 0..D {
                lo[i] = (((p.coords()[i] - r0) / self.delta).ceil() as i64).max(self.k_lo[i]);
                hi[i] = (((p.coords()[i] + r0) / self.delta).floor() as i64)
                    .min(self.k_lo[i] + self.dims[i] as i64 - 1);
            }
            if (0..D).any(|i| lo[i] > hi[i]) {
                continue;
            }
            let mut idx = lo;
            'outer: loop {
                let mut flat = 0usize;
                let mut c = [0.0; D];
                for i in 0..D {
                    flat = flat * self.dims[i] + (idx[i] - self.k_lo[i]) as usize;
                    c[i] = idx[i] as f64 * self.delta;
                }
                let a = self.lattice_to_idx[flat];
                if a != u32::MAX && Point::new(c).dist_sq(p) <= r2 {
                    occ[a as usize] = true;
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
        }
        occ
    }
}

/// One exploration step of a coupling run.
#[derive(Clone, Copy, Debug)]
pub struct StepRecord<const D: usize> {
    /// start point of the step (anchor or carrier point)
    pub start: Point<D>,
    pub from_anchor: bool,
    /// carrier index decided at this step, if any
    pub candidate: Option<u32>,
    /// exploration group (one per anchor-seeded cluster walk)
    pub group: u32,
}

/// Trace of one coupling run: per-step records plus per-carrier decisions.
#[derive(Clone, Debug)]
pub struct StoppingTrace<const D: usize> {
    pub steps: Vec<StepRecord<D>>,
    /// retention decision per carrier index
    pub decided: Vec<bool>,
    pub retention_work: u64,
}

/// Output of a single-boundary coupling run.
#[derive(Clone)]
pub struct CouplingRun<const D: usize> {
    pub output: PointPattern<D>,
    pub trace: StoppingTrace<D>,
    pub(crate) log: ExplorationLog<D>,
}

impl<const D: usize> CouplingRun<D> {
    /// Was `z` explored by the end of the run? The stopping sets must cover
    /// the whole window at termination; exposed for the trace invariants.
    pub fn explored(&self, z: &Point<D>) -> bool {
        self.log.covered(z, usize::MAX)
    }
}

fn validate_carrier<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
) -> Result<()> {
    let marks = carrier
        .marks()
        .ok_or_else(|| Error::invalid("coupling carrier must be marked"))?;
    let kmax = model.kappa_max();
    for (i, (p, &m)) in carrier.points().iter().zip(marks).enumerate() {
        if !q.contains(p) {
            return Err(Error::invalid(format!(
                "carrier point {i} lies outside the window"
            )));
        }
        if !(0.0..=kmax).contains(&m) {
            return Err(Error::MarkOutOfRange {
                index: i,
                value: m,
                bound: kmax,
            });
        }
    }
    for p in psi.points() {
        if q.contains(p) {
            return Err(Error::invalid(
                "boundary conditions must lie outside the window",
            ));
        }
    }
    Ok(())
}

/// Radial disagreement coupling `T^rad_{Q,B,psi}` applied to a marked
/// carrier. Explores one Boolean cluster at a time from lattice anchors,
/// starting with everything within `r0` of `B`; every exploration step
/// contains at most one carrier point and is a subset of an `r0`-ball.
#[allow(clippy::too_many_arguments)]
pub fn radial_coupling<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    b: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
    anchors: &GridAnchors,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<CouplingRun<D>> {
    let r0 = model.r0();
    let bbox = q.bbox().ok_or(Error::UnboundedRegion("coupling window"))?;
    let aset = anchors.ordered::<D>(&bbox, r0);
    radial_coupling_prepared(model, q, b, psi, carrier, &aset, mode, key, budget, true)
}

/// Radial coupling over a pre-built anchor set; `record_steps` disables the
/// per-step trace for hot Monte Carlo loops.
#[allow(clippy::too_many_arguments)]
pub(crate) fn radial_coupling_prepared<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    b: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
    aset: &AnchorSet<D>,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
    record_steps: bool,
) -> Result<CouplingRun<D>> {
    validate_carrier(model, q, psi, carrier)?;
    let r0 = model.r0();
    let bbox = q.bbox().ok_or(Error::UnboundedRegion("coupling window"))?;
    let occupied = aset.occupancy(carrier.points(), r0);
    let all = &aset.pts;

    let log = ExplorationLog::new(r0, OrderMap::radial(), Some((b.clone(), r0)), &bbox);
    let engine = RetentionEngine::new(model, budget);
    let carrier_grid = NeighborGrid::from_points(r0.max(1e-9), carrier.points());
    let marks = carrier.marks().expect("validated");
    let mut decided: Vec<Option<bool>> = vec![None; carrier.len()];
    let mut retained_grid = NeighborGrid::new(r0.max(1e-9));
    let mut steps: Vec<StepRecord<D>> = Vec::new();
    let mut group = 0u32;

    // stage A: explore B_{r0}(B) ∩ Q first, with every step clipped to that
    // set. All candidates decided here are within r0 of B, hence in flagged
    // clusters; afterwards no remainder contains territory within r0 of B,
    // which is what keeps psi ∩ B invisible to every later threshold,
    // including the auxiliary retention recursion.
    let near_b = |v: &Point<D>| dist_point_lb(v, b) <= 2.0 * r0;
    let mut seeds: Vec<u32> = Vec::new();
    for (ai, v) in all.iter().enumerate().filter(|(_, v)| near_b(v)) {
        if !occupied[ai] {
            log.push(Chunk::BallInPad {
                center: *v,
                radius: r0,
            });
            if record_steps {
                steps.push(StepRecord {
                    start: *v,
                    from_anchor: true,
                    candidate: None,
                    group,
                });
            }
            group += 1;
            continue;
        }
        loop {
            let t = log.len();
            let mut best: Option<(u32, f64)> = None;
            let mut tie = false;
            carrier_grid.for_each_within(v, r0, |idx, p| {
                if decided[idx as usize].is_none()
                    && dist_point_lb(p, b) <= r0
                    && !log.covered(p, t)
                {
                    let d = p.dist_sq(v);
                    match best {
                        None => best = Some((idx, d)),
                        Some((_, bd)) => {
                            if d == bd {
                                tie = true;
                            } else if d < bd {
                                best = Some((idx, d));
                            }
                        }
                    }
                }
            });
            if tie {
                return Err(Error::OrderTie);
            }
            match best {
                None => {
                    log.push(Chunk::BallInPad {
                        center: *v,
                        radius: r0,
                    });
                    if record_steps {
                        steps.push(StepRecord {
                            start: *v,
                            from_anchor: true,
                            candidate: None,
                            group,
                        });
                    }
                    break;
                }
                Some((idx, dist_sq)) => {
                    log.push(Chunk::BallInPad {
                        center: *v,
                        radius: dist_sq.sqrt(),
                    });
                    decide_candidate(
                        model,
                        q,
                        psi,
                        carrier,
                        marks,
                        &log,
                        &engine,
                        key,
                        idx,
                        &mut decided,
                        &mut retained_grid,
                        mode,
                    )?;
                    if record_steps {
                        steps.push(StepRecord {
                            start: *v,
                            from_anchor: true,
                            candidate: Some(idx),
                            group,
                        });
                    }
                    seeds.push(idx);
                }
            }
        }
        group += 1;
    }
    log.push(Chunk::Pad {
        region: b.clone(),
        pad: r0,
    });

    // continuations: finish the flagged clusters from the stage-A points
    for idx in seeds {
        explore_group(
            model,
            q,
            psi,
            carrier,
            &carrier_grid,
            marks,
            &log,
            &engine,
            key,
            carrier.points()[idx as usize],
            false,
            group,
            &mut decided,
            &mut retained_grid,
            &mut steps,
            mode,
            record_steps,
        )?;
        group += 1;
    }

    // stage B: full outside-in anchor sweep (revisits stage-A anchors for
    // the unclipped parts of their balls)
    for (ai, v) in all.iter().enumerate() {
        if !occupied[ai] {
            log.push(Chunk::Ball {
                center: *v,
                radius: r0,
            });
            if record_steps {
                steps.push(StepRecord {
                    start: *v,
                    from_anchor: true,
                    candidate: None,
                    group,
                });
            }
            group += 1;
            continue;
        }
        explore_group(
            model,
            q,
            psi,
            carrier,
            &carrier_grid,
            marks,
            &log,
            &engine,
            key,
            *v,
            true,
            group,
            &mut decided,
            &mut retained_grid,
            &mut steps,
            mode,
            record_steps,
        )?;
        group += 1;
    }
    if let Some(i) = decided.iter().position(|d| d.is_none()) {
        return Err(Error::invalid(format!(
            "carrier point {i} left undecided (anchor coverage bug)"
        )));
    }
    let output = PointPattern::new(
        (0..carrier.len())
            .filter(|&i| decided[i] == Some(true))
            .map(|i| carrier.points()[i])
            .collect(),
    )?;
    Ok(CouplingRun {
        output,
        trace: StoppingTrace {
            steps,
            decided: decided.into_iter().map(|d| d.unwrap()).collect(),
            retention_work: engine.work_used(),
        },
        log,
    })
}

#[allow(clippy::too_many_arguments)]
fn decide_candidate<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
    marks: &[f64],
    log: &ExplorationLog<D>,
    engine: &RetentionEngine<'_, D>,
    key: &StreamKey,
    idx: u32,
    decided: &mut [Option<bool>],
    retained_grid: &mut NeighborGrid<D>,
    mode: RetentionMode,
) -> Result<bool> {
    let _ = model;
    let x = carrier.points()[idx as usize];
    let u = marks[idx as usize];
    let remainder = Region::Custom(Arc::new(Unexplored {
        q: q.clone(),
        log: log.clone(),
        upto: log.len(),
    }));
    let keep = {
        let psi_view = PointView::new(psi.points());
        let view = psi_view.layer_grid(retained_grid);
        let p = engine.threshold(
            &x,
            &remainder,
            &view,
            mode,
            &key.child_point(tags::RETENTION, &x),
        )?;
        u <= p
    };
    decided[idx as usize] = Some(keep);
    if keep {
        retained_grid.insert(x);
    }
    Ok(keep)
}

#[allow(clippy::too_many_arguments)]
fn explore_group<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
    carrier_grid: &NeighborGrid<D>,
    marks: &[f64],
    log: &ExplorationLog<D>,
    engine: &RetentionEngine<'_, D>,
    key: &StreamKey,
    seed: Point<D>,
    seed_is_anchor: bool,
    group: u32,
    decided: &mut [Option<bool>],
    retained_grid: &mut NeighborGrid<D>,
    steps: &mut Vec<StepRecord<D>>,
    mode: RetentionMode,
    record_steps: bool,
) -> Result<()> {
    let r0 = model.r0();
    // center queue: the seed plus every carrier point discovered in this
    // group; a center is done once its full r0-ball has been explored
    let mut centers: Vec<(Point<D>, bool, bool)> = vec![(seed, false, seed_is_anchor)];
    loop {
        let Some(ci) = centers.iter().position(|&(_, done, _)| !done) else {
            return Ok(());
        };
        let (c, _, from_anchor) = centers[ci];
        let t = log.len();
        // iota-smallest undecided carrier point in B_{r0}(c) \ S_t, where
        // iota within the step is the distance to the step's start point
        let mut best: Option<(u32, f64)> = None;
        let mut tie = false;
        carrier_grid.for_each_within(&c, r0, |idx, p| {
            if decided[idx as usize].is_none() && !log.covered(p, t) {
                let d = p.dist_sq(&c);
                match best {
                    None => best = Some((idx, d)),
                    Some((_, bd)) => {
                        if d == bd {
                            tie = true;
                        } else if d < bd {
                            best = Some((idx, d));
                        }
                    }
                }
            }
        });
        if tie {
            return Err(Error::OrderTie);
        }
        match best {
            None => {
                log.push(Chunk::Ball {
                    center: c,
                    radius: r0,
                });
                if record_steps {
                    steps.push(StepRecord {
                        start: c,
                        from_anchor,
                        candidate: None,
                        group,
                    });
                }
                centers[ci].1 = true;
            }
            Some((idx, dist_sq)) => {
                let x = carrier.points()[idx as usize];
                // prefix slice of the ball up to (and including) the point
                log.push(Chunk::Ball {
                    center: c,
                    radius: dist_sq.sqrt(),
                });
                decide_candidate(
                    model,
                    q,
                    psi,
                    carrier,
                    marks,
                    log,
                    engine,
                    key,
                    idx,
                    decided,
                    retained_grid,
                    mode,
                )?;
                if record_steps {
                    steps.push(StepRecord {
                        start: c,
                        from_anchor,
                        candidate: Some(idx),
                        group,
                    });
                }
                centers.push((x, false, false));
            }
        }
    }
}

/// Cluster-based disagreement coupling `T^dc_{Q,psi}` with start set
/// `B_{r0}(B) ∩ Q`: grows by `B_{r0}(carrier ∩ S_n)`, jumping to the
/// iota-smallest unexplored carrier point when the growth saturates.
pub fn cluster_coupling_run<const D: usize>(
    model: &InteractionModel<D>,
    q: &Region<D>,
    b: &Region<D>,
    psi: &PointPattern<D>,
    carrier: &PointPattern<D>,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<CouplingRun<D>> {
    validate_carrier(model, q, psi, carrier)?;
    let r0 = model.r0();
    let start = Region::dilation(b.clone(), r0)?;
    let iota0 = OrderMap::TwoPhase {
        first: Box::new(start.clone()),
        base: Box::new(OrderMap::radial()),
    };
    let log = ExplorationLog::new(r0, iota0.clone(), None, &q.bbox().ok_or(Error::UnboundedRegion("coupling window"))?);
    let engine = RetentionEngine::new(model, budget);
    let marks = carrier.marks().expect("validated");
    let mut decided: Vec<Option<bool>> = vec![None; carrier.len()];
    let mut retained_grid = NeighborGrid::new(r0.max(1e-9));
    let mut steps: Vec<StepRecord<D>> = Vec::new();

    macro_rules! decide {
        ($idx:expr, $remainder:expr) => {{
            let idx: u32 = $idx;
            let x = carrier.points()[idx as usize];
            let u = marks[idx as usize];
            let keep = {
                let psi_view = PointView::new(psi.points());
                let view = psi_view.layer_grid(&retained_grid);
                let p = engine.threshold(
                    &x,
                    &$remainder,
                    &view,
                    mode,
                    &key.child_point(tags::RETENTION, &x),
                )?;
                u <= p
            };
            decided[idx as usize] = Some(keep);
            if keep {
                retained_grid.insert(x);
            }
        }};
    }

    // step 1: thin everything inside S_1 = B_{r0}(B) ∩ Q under iota0
    let mut first: Vec<u32> = (0..carrier.len() as u32)
        .filter(|&i| start.contains(&carrier.points()[i as usize]))
        .collect();
    sort_by_order(&mut first, carrier, &iota0)?;
    for &idx in &first {
        let x = carrier.points()[idx as usize];
        let remainder = Region::inter(q.clone(), iota0.after(&x));
        decide!(idx, remainder);
        steps.push(StepRecord {
            start: x,
            from_anchor: false,
            candidate: Some(idx),
            group: 0,
        });
    }
    log.push(Chunk::Pad {
        region: b.clone(),
        pad: r0,
    });

    // growth loop: frontier = decided carrier points whose balls are not yet
    // part of the explored set
    let mut frontier: Vec<u32> = first;
    let mut group = 1u32;
    loop {
        if frontier.is_empty() {
            // jump to the iota0-smallest undecided carrier point
            let mut jump: Option<u32> = None;
            for i in 0..carrier.len() as u32 {
                if decided[i as usize].is_none() {
                    jump = match jump {
                        None => Some(i),
                        Some(j) => {
                            match iota0
                                .cmp(&carrier.points()[i as usize], &carrier.points()[j as usize])
                            {
                                std::cmp::Ordering::Less => Some(i),
                                std::cmp::Ordering::Equal => return Err(Error::OrderTie),
                                _ => Some(j),
                            }
                        }
                    };
                }
            }
            match jump {
                None => {
                    log.push(Chunk::All);
                    break;
                }
                Some(idx) => {
                    let x = carrier.points()[idx as usize];
                    log.push(Chunk::GlobalUpto { pivot: x });
                    let remainder = Region::Custom(Arc::new(Unexplored {
                        q: q.clone(),
                        log: log.clone(),
                        upto: log.len(),
                    }));
                    decide!(idx, remainder);
                    steps.push(StepRecord {
                        start: x,
                        from_anchor: false,
                        candidate: Some(idx),
                        group,
                    });
                    frontier = vec![idx];
                    group += 1;
                }
            }
            continue;
        }
        // grow by B_{r0}(frontier): decide the zone's carrier points, then
        // absorb the zone into the explored set
        let t = log.len();
        let zone_balls: Vec<Region<D>> = frontier
            .iter()
            .map(|&i| Region::ball(carrier.points()[i as usize], r0))
            .collect();
        let zone = Region::Union(zone_balls);
        let iota_n = OrderMap::TwoPhase {
            first: Box::new(zone.clone()),
            base: Box::new(iota0.clone()),
        };
        let mut zone_cands: Vec<u32> = (0..carrier.len() as u32)
            .filter(|&i| {
                decided[i as usize].is_none() && zone.contains(&carrier.points()[i as usize])
            })
            .collect();
        sort_by_order(&mut zone_cands, carrier, &iota_n)?;
        for &idx in &zone_cands {
            let x = carrier.points()[idx as usize];
            let unexplored = Region::Custom(Arc::new(Unexplored {
                q: q.clone(),
                log: log.clone(),
                upto: t,
            }));
            let remainder = Region::inter(unexplored, iota_n.after(&x));
            decide!(idx, remainder);
            steps.push(StepRecord {
                start: x,
                from_anchor: false,
                candidate: Some(idx),
                group,
            });
        }
        for &i in &frontier {
            log.push(Chunk::Ball {
                center: carrier.points()[i as usize],
                radius: r0,
            });
        }
        frontier = zone_cands;
    }

    let output = PointPattern::new(
        (0..carrier.len())
            .filter(|&i| decided[i] == Some(true))
            .map(|i| carrier.points()[i])
            .collect(),
    )?;
    Ok(CouplingRun {
        output,
        trace: StoppingTrace {
            steps,
            decided: decided.into_iter().map(|d| d.unwrap()).collect(),
            retention_work: engine.work_used(),
        },
        log,
    })
}

fn sort_by_order<const D: usize>(
    idx: &mut [u32],
    carrier: &PointPattern<D>,
    order: &OrderMap<D>,
) -> Result<()> {
    idx.sort_by(|&a, &b| order.cmp(&carrier.points()[a as usize], &carrier.points()[b as usize]));
    for w in idx.windows(2) {
        if order.cmp(
            &carrier.points()[w[0] as usize],
            &carrier.points()[w[1] as usize],
        ) == std::cmp::Ordering::Equal
        {
            return Err(Error::OrderTie);
        }
    }
    Ok(())
}

/// Which coupling algorithm a paired run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingAlgo {
    Radial,
    Cluster,
}

/// Outcome of a paired run under boundary conditions differing only on `B`.
#[derive(Clone, Debug)]
pub struct PairOutcome<const D: usize> {
    pub output_a: PointPattern<D>,
    pub output_b: PointPattern<D>,
    pub clusters: ClusterPartition,
    /// per cluster: does it meet `B_{r0/2}(B)`?
    pub flagged: Vec<bool>,
    /// per cluster: do the two outputs disagree on it?
    pub disagree: Vec<bool>,
    /// per cluster: distance from the cluster to `B`
    pub dist_to_b: Vec<f64>,
    /// disagreement confined to flagged clusters (the certificate)
    pub confinement_ok: bool,
}

impl<const D: usize> PairOutcome<D> {
    pub fn any_disagreement(&self) -> bool {
        self.disagree.iter().any(|&d| d)
    }
}

/// Run a disagreement coupling for the pair `(psi, psi')`, sharing the
/// carrier and all keyed randomness, and assemble the per-cluster
/// confinement certificate.
#[allow(clippy::too_many_arguments)]
pub fn coupling_pair<const D: usize>(
    algo: CouplingAlgo,
    model: &InteractionModel<D>,
    q: &Region<D>,
    b: &Region<D>,
    psi_a: &PointPattern<D>,
    psi_b: &PointPattern<D>,
    carrier: &PointPattern<D>,
    anchors: &GridAnchors,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<PairOutcome<D>> {
    let aset = match algo {
        CouplingAlgo::Radial => {
            let bbox = q.bbox().ok_or(Error::UnboundedRegion("coupling window"))?;
            Some(anchors.ordered::<D>(&bbox, model.r0()))
        }
        CouplingAlgo::Cluster => None,
    };
    coupling_pair_prepared(
        algo,
        model,
        q,
        b,
        psi_a,
        psi_b,
        carrier,
        aset.as_ref(),
        mode,
        key,
        budget,
    )
}

/// As [`coupling_pair`] with a shared pre-built anchor set (radial only).
#[allow(clippy::too_many_arguments)]
pub(crate) fn coupling_pair_prepared<const D: usize>(
    algo: CouplingAlgo,
    model: &InteractionModel<D>,
    q: &Region<D>,
    b: &Region<D>,
    psi_a: &PointPattern<D>,
    psi_b: &PointPattern<D>,
    carrier: &PointPattern<D>,
    aset: Option<&AnchorSet<D>>,
    mode: RetentionMode,
    key: &StreamKey,
    budget: &RetentionBudget,
) -> Result<PairOutcome<D>> {
    let run = |psi: &PointPattern<D>| -> Result<CouplingRun<D>> {
        match algo {
            CouplingAlgo::Radial => radial_coupling_prepared(
                model,
                q,
                b,
                psi,
                carrier,
                aset.expect("radial pair needs an anchor set"),
                mode,
                key,
                budget,
                false,
            ),
            CouplingAlgo::Cluster => {
                cluster_coupling_run(model, q, b, psi, carrier, mode, key, budget)
            }
        }
    };
    let run_a = run(psi_a)?;
    let run_b = run(psi_b)?;
    let r0 = model.r0();
    let clusters = boolean_clusters(&carrier.projection(), r0);
    let ncl = clusters.n_clusters();
    let mut flagged = vec![false; ncl];
    let mut dist_to_b = vec![f64::INFINITY; ncl];
    for (i, p) in carrier.points().iter().enumerate() {
        let l = clusters.label_of(i) as usize;
        let d = dist_point_lb(p, b);
        if d < dist_to_b[l] {
            dist_to_b[l] = d;
        }
        if d <= r0 {
            flagged[l] = true;
        }
    }
    let mut disagree = vec![false; ncl];
    for (i, (&da, &db)) in run_a
        .trace
        .decided
        .iter()
        .zip(&run_b.trace.decided)
        .enumerate()
    {
        if da != db {
            disagree[clusters.label_of(i) as usize] = true;
        }
    }
    let confinement_ok = disagree.iter().zip(&flagged).all(|(&d, &f)| !d || f);
    Ok(PairOutcome {
        output_a: run_a.output,
        output_b: run_b.output,
        clusters,
        flagged,
        disagree,
        dist_to_b,
        confinement_ok,
    })
}
