//! Empirical stochastic branch-and-bound driver.
//!
//! Each iteration splits the current best subregion (generically into equal
//! slabs, or adaptively along a fitted regression tree), samples the new
//! subregions and the remaining ones, simulates, re-estimates the empirical
//! bounds and moves to the subregion with the highest bound.
//!
//! Everything runs in the maximization sense of [`ProblemDefinition`];
//! reported incumbent values are converted back with `to_display`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use crate::archive::SampleArchive;
use crate::error::{EsbbError, Result};
use crate::problem::{IntegerPoint, ProblemDefinition};
use crate::region::{DimensionRule, Partition, RegionId, RegionIdAllocator, Subregion};
use crate::sampling::{sample_region, Purpose, RandomStream, StreamLineage, WalkConfig};
use crate::tree::{axis_features, fit_adaptive, make_cluster_features, tree_to_partition, SplitFeature, TrainingSample, TreeConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum StrategyChoice {
    Generic { omega: usize, dimension: DimensionRule },
    AdaptiveParallel(TreeConfig),
    AdaptiveHyperplane { tree: TreeConfig, clusters: Vec<Vec<usize>> },
}

impl StrategyChoice {
    pub fn label(&self) -> &'static str {
        match self {
            StrategyChoice::Generic { .. } => "generic",
            StrategyChoice::AdaptiveParallel(_) => "parallel",
            StrategyChoice::AdaptiveHyperplane { .. } => "hyperplane",
        }
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self, StrategyChoice::Generic { .. })
    }
}

/// How `nu_r_total` is spent on the subregions created by a split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NewRegionBudget {
    /// Split the total equally, larger shares to earlier subregions.
    #[default]
    SplitTotal,
    /// Every new subregion gets `nu_r_total` samples.
    PerRegion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n0: usize,
    pub nu_r_total: usize,
    pub nu_o: usize,
    pub dn_first: u64,
    pub dn_again: u64,
    pub max_iterations: usize,
    pub strategy: StrategyChoice,
    pub warm_start: Option<IntegerPoint>,
    pub master_seed: u64,
    pub run_index: u64,
    /// Mixed into every stream after the initial pool, so arms sharing a seed
    /// start from the same pool and then diverge.
    pub arm_salt: u64,
    pub new_region_budget: NewRegionBudget,
    pub walk: WalkConfig,
    pub max_total_replications: Option<u64>,
    pub time_limit: Option<Duration>,
    /// Runs the exhaustive state audit after every iteration.
    pub audit: bool,
}

impl RunConfig {
    pub fn new(strategy: StrategyChoice) -> Self {
        RunConfig {
            n0: 10,
            nu_r_total: 10,
            nu_o: 5,
            dn_first: 10,
            dn_again: 2,
            max_iterations: 40,
            strategy,
            warm_start: None,
            master_seed: 0,
            run_index: 0,
            arm_salt: 0,
            new_region_budget: NewRegionBudget::SplitTotal,
            walk: WalkConfig::default(),
            max_total_replications: None,
            time_limit: None,
            audit: false,
        }
    }

    pub fn validate(&self, problem: &ProblemDefinition) -> Result<()> {
        let counts = [
            ("n0", self.n0 as u64),
            ("nu_r_total", self.nu_r_total as u64),
            ("nu_o", self.nu_o as u64),
            ("dn_first", self.dn_first),
            ("dn_again", self.dn_again),
            ("max_iterations", self.max_iterations as u64),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(EsbbError::InvalidArgument(format!("{name} must be >= 1")));
        }
        match &self.strategy {
            StrategyChoice::Generic { omega, .. } if *omega < 2 => {
                return Err(EsbbError::InvalidArgument(format!("omega must be >= 2, got {omega}")));
            }
            StrategyChoice::Generic { .. } => {}
            StrategyChoice::AdaptiveParallel(t) | StrategyChoice::AdaptiveHyperplane { tree: t, .. } => {
                TreeConfig::new(t.max_depth, t.min_leaf, t.restarts)?;
            }
        }
        if let StrategyChoice::AdaptiveHyperplane { clusters, .. } = &self.strategy {
            make_cluster_features(clusters, problem.dimension())?;
        }
        if let Some(w) = &self.warm_start {
            if !problem.is_feasible(w)? {
                return Err(EsbbError::InvalidArgument(format!("warm start ({w}) is infeasible")));
            }
        }
        Ok(())
    }

    fn stream(&self, iteration: u64, purpose: Purpose) -> RandomStream {
        RandomStream::new(StreamLineage::new(
            self.master_seed,
            self.run_index,
            iteration,
            purpose.tag() | (self.arm_salt << 16),
        ))
    }

    /// Streams for the initial pool ignore the arm salt.
    fn shared_stream(&self, purpose: Purpose) -> RandomStream {
        RandomStream::new(StreamLineage::new(self.master_seed, self.run_index, 0, purpose.tag()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionEvent {
    None,
    Generic,
    Adaptive,
    Fallback,
}

impl PartitionEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionEvent::None => "none",
            PartitionEvent::Generic => "generic",
            PartitionEvent::Adaptive => "adaptive",
            PartitionEvent::Fallback => "fallback",
        }
    }
}

impl fmt::Display for PartitionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub incumbent: IntegerPoint,
    /// Incumbent cumulative mean in the problem's reporting sense.
    pub incumbent_mean: f64,
    pub incumbent_n: u64,
    pub n_regions: usize,
    pub total_sim_calls: u64,
    pub event: PartitionEvent,
}

/// Result of splitting the best subregion; not yet committed to the state.
#[derive(Clone, Debug)]
pub struct PartitionOutcome {
    pub children: Vec<Subregion>,
    pub event: PartitionEvent,
}

/// Empirical bound: the largest cumulative mean among archived points in the
/// region, `-inf` when none lies inside.
pub fn estimate_bound(region: &Subregion, archive: &SampleArchive, problem: &ProblemDefinition) -> f64 {
    archive
        .points_in(region, problem)
        .into_iter()
        .map(|(_, m, _)| m)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spreads `nu_o` samples over `bounds`. Half (rounded up) goes by rank
/// weight `m - rank + 1` among regions with a finite bound, rounded by
/// largest remainder; the rest is handed out one at a time uniformly over all
/// regions. Returns one entry per input region, in input order.
pub fn allocate_samples(bounds: &[(RegionId, f64)], nu_o: u64, stream: &mut RandomStream) -> Vec<(RegionId, u64)> {
    let mut theta: Vec<(RegionId, u64)> = bounds.iter().map(|&(id, _)| (id, 0)).collect();
    if bounds.is_empty() {
        return theta;
    }
    let mut ranked: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].1.is_finite()).collect();
    ranked.sort_by(|&a, &b| bounds[b].1.total_cmp(&bounds[a].1).then(bounds[a].0.cmp(&bounds[b].0)));
    let m = ranked.len() as u64;
    let ranked_share = if m == 0 { 0 } else { nu_o.div_ceil(2) };
    if ranked_share > 0 {
        let total_weight = m * (m + 1) / 2;
        let mut remainders = Vec::with_capacity(ranked.len());
        let mut given = 0;
        for (rank, &i) in ranked.iter().enumerate() {
            let w = m - rank as u64;
            let q = ranked_share * w;
            theta[i].1 += q / total_weight;
            given += q / total_weight;
            remainders.push((q % total_weight, rank, i));
        }
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, _, i) in remainders.iter().take((ranked_share - given) as usize) {
            theta[i].1 += 1;
        }
    }
    for _ in ranked_share..nu_o {
        theta[stream.index(bounds.len())].1 += 1;
    }
    theta
}

/// Highest bound wins; ties go to fewer archived replications, then the lower
/// id. Entries are `(id, bound, replications inside)`.
pub fn select_best(candidates: &[(RegionId, f64, u64)]) -> Option<RegionId> {
    candidates
        .iter()
        .min_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|c| c.0)
}

/// Largest-remainder equal split of `total` into `parts` shares, earlier
/// shares larger.
pub fn equal_shares(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

#[derive(Clone, Debug)]
pub struct EsbbState {
    k: u64,
    regions: BTreeMap<RegionId, Subregion>,
    best: RegionId,
    archive: SampleArchive,
    training: Vec<IntegerPoint>,
    pending: Vec<(RegionId, u64)>,
    bounds: BTreeMap<RegionId, f64>,
    trace: Vec<IterationRecord>,
    ids: RegionIdAllocator,
    owner: BTreeMap<IntegerPoint, RegionId>,
    members: BTreeMap<RegionId, Vec<IntegerPoint>>,
    features: Vec<SplitFeature>,
    root: Subregion,
    sim_calls: u64,
    draws: u64,
    bound_violations: u64,
}

impl EsbbState {
    /// Samples the initial pool (plus the warm start), simulates each point
    /// `dn_first` times and makes the root region the best region.
    pub fn initialize(problem: &ProblemDefinition, cfg: &RunConfig) -> Result<Self> {
        cfg.validate(problem)?;
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(problem, &mut ids);
        let features = match &cfg.strategy {
            StrategyChoice::Generic { .. } => Vec::new(),
            StrategyChoice::AdaptiveParallel(_) => axis_features(problem.dimension()),
            StrategyChoice::AdaptiveHyperplane { clusters, .. } => {
                let mut f = axis_features(problem.dimension());
                f.extend(make_cluster_features(clusters, problem.dimension())?);
                f
            }
        };
        let mut state = EsbbState {
            k: 0,
            regions: BTreeMap::from([(root.id(), root.clone())]),
            best: root.id(),
            archive: SampleArchive::new(),
            training: Vec::new(),
            pending: Vec::new(),
            bounds: BTreeMap::new(),
            trace: Vec::new(),
            ids,
            owner: BTreeMap::new(),
            members: BTreeMap::from([(root.id(), Vec::new())]),
            features,
            root: root.clone(),
            sim_calls: 0,
            draws: 0,
            bound_violations: 0,
        };
        let mut pool_stream = cfg.shared_stream(Purpose::InitialPool);
        let mut pool = sample_region(&root, problem, cfg.n0, &state.archive, &mut pool_stream, &cfg.walk)?;
        pool.extend(cfg.warm_start.iter().cloned());
        let sampled: Vec<(RegionId, IntegerPoint)> = pool.into_iter().map(|p| (root.id(), p)).collect();
        let mut sim_stream = cfg.shared_stream(Purpose::InitialSimulation);
        state.simulate(problem, cfg, &sampled, &mut sim_stream)?;
        state.refresh_bounds();
        state.training = state.members[&root.id()].clone();
        state.training.sort();
        state.push_record(problem, PartitionEvent::None)?;
        Ok(state)
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    /// Current partition, in region-id order.
    pub fn partition(&self) -> Vec<&Subregion> {
        self.regions.values().collect()
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn best(&self) -> &Subregion {
        &self.regions[&self.best]
    }

    pub fn archive(&self) -> &SampleArchive {
        &self.archive
    }

    /// Training set: archived points inside the best region, sorted.
    pub fn training_points(&self) -> &[IntegerPoint] {
        &self.training
    }

    pub fn pending_allocation(&self) -> &[(RegionId, u64)] {
        &self.pending
    }

    pub fn bound(&self, id: RegionId) -> Option<f64> {
        self.bounds.get(&id).copied()
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn sim_calls(&self) -> u64 {
        self.sim_calls
    }

    /// Solutions sampled so far, counted with multiplicity.
    pub fn sampled_solutions(&self) -> u64 {
        self.draws
    }

    /// Splits in which the children's best bound differed from the parent's.
    pub fn bound_violations(&self) -> u64 {
        self.bound_violations
    }

    fn training_samples(&self) -> Result<Vec<TrainingSample>> {
        self.training
            .iter()
            .map(|p| Ok(TrainingSample::new(p.clone(), self.archive.cumulative_mean(p)?, &self.features)))
            .collect()
    }

    /// Splits the best region according to the strategy. A singleton best
    /// region is left as is.
    pub fn partition_step(
        &mut self,
        problem: &ProblemDefinition,
        cfg: &RunConfig,
        stream: &mut RandomStream,
    ) -> Result<PartitionOutcome> {
        let best = self.regions[&self.best].clone();
        if best.is_singleton(problem) {
            return Ok(PartitionOutcome { children: Vec::new(), event: PartitionEvent::None });
        }
        let generic = |state: &mut EsbbState, dim: usize, omega: usize| {
            best.split_box_equal(problem, dim, omega, &mut state.ids, &state.training).map(Partition::into_members)
        };
        let (children, event) = match &cfg.strategy {
            StrategyChoice::Generic { omega, dimension } => {
                let dim = match dimension {
                    DimensionRule::Longest => best.longest_dimension(),
                    DimensionRule::Random => best.random_dimension(stream),
                };
                (generic(self, dim, *omega)?, PartitionEvent::Generic)
            }
            StrategyChoice::AdaptiveParallel(tree_cfg) | StrategyChoice::AdaptiveHyperplane { tree: tree_cfg, .. } => {
                let samples = self.training_samples()?;
                let tree = fit_adaptive(&samples, &self.features, tree_cfg, stream)?;
                if tree.is_single_leaf() {
                    (generic(self, best.longest_dimension(), 2)?, PartitionEvent::Fallback)
                } else {
                    let p = tree_to_partition(&tree, &best, problem, &samples, &self.features, &mut self.ids)?;
                    (p.into_members(), PartitionEvent::Adaptive)
                }
            }
        };
        Ok(PartitionOutcome { children, event })
    }

    /// Replaces the best region by `children` and moves its points over.
    /// Counts a violation when the children's best bound differs from the
    /// parent's.
    fn commit_split(&mut self, problem: &ProblemDefinition, children: Vec<Subregion>) -> Result<()> {
        let parent = self.best;
        let parent_bound = self.bounds.get(&parent).copied().unwrap_or(f64::NEG_INFINITY);
        self.regions.remove(&parent);
        self.bounds.remove(&parent);
        let points = self.members.remove(&parent).unwrap_or_default();
        for c in &children {
            self.members.insert(c.id(), Vec::new());
        }
        for p in points {
            let home = children
                .iter()
                .find(|c| c.contains_coords(problem, p.coords()))
                .ok_or_else(|| EsbbError::Internal(format!("point ({p}) of region {parent} fell outside every child")))?;
            self.owner.insert(p.clone(), home.id());
            self.members.get_mut(&home.id()).expect("inserted above").push(p);
        }
        for c in children {
            self.regions.insert(c.id(), c);
        }
        let child_ids: Vec<RegionId> = self.members.keys().copied().filter(|id| !self.bounds.contains_key(id)).collect();
        let mut child_max = f64::NEG_INFINITY;
        for id in child_ids {
            let b = self.region_bound(id);
            child_max = child_max.max(b);
            self.bounds.insert(id, b);
        }
        if child_max != parent_bound {
            self.bound_violations += 1;
        }
        Ok(())
    }

    fn region_bound(&self, id: RegionId) -> f64 {
        self.members[&id]
            .iter()
            .map(|p| self.archive.get(p).expect("owned points are archived").mean())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn region_replications(&self, id: RegionId) -> u64 {
        self.members[&id].iter().map(|p| self.archive.get(p).map_or(0, |r| r.n)).sum()
    }

    fn refresh_bounds(&mut self) {
        self.bounds = self.regions.keys().map(|&id| (id, self.region_bound(id))).collect();
    }

    /// Simulates every sampled point per the replication plan and files new
    /// points under the region they were drawn from.
    fn simulate(
        &mut self,
        problem: &ProblemDefinition,
        cfg: &RunConfig,
        sampled: &[(RegionId, IntegerPoint)],
        stream: &mut RandomStream,
    ) -> Result<()> {
        let points: Vec<IntegerPoint> = sampled.iter().map(|(_, p)| p.clone()).collect();
        let plan = self.archive.replication_plan(&points, cfg.dn_first, cfg.dn_again);
        self.draws += points.len() as u64;
        for (region, p) in sampled {
            if !self.owner.contains_key(p) {
                self.owner.insert(p.clone(), *region);
                self.members.get_mut(region).expect("sampled region exists").push(p.clone());
            }
        }
        let iteration = self.k;
        for (p, reps) in plan {
            let obs = (0..reps).map(|_| problem.evaluate(&p, stream)).collect::<Result<Vec<f64>>>()?;
            self.sim_calls += reps;
            self.archive.record(p, &obs, iteration)?;
        }
        Ok(())
    }

    fn push_record(&mut self, problem: &ProblemDefinition, event: PartitionEvent) -> Result<()> {
        let (incumbent, mean) = self.archive.incumbent()?;
        let n = self.archive.get(&incumbent).map_or(0, |r| r.n);
        self.trace.push(IterationRecord {
            iteration: self.k,
            incumbent,
            incumbent_mean: problem.to_display(mean),
            incumbent_n: n,
            n_regions: self.regions.len(),
            total_sim_calls: self.sim_calls,
            event,
        });
        Ok(())
    }

    /// One full iteration: split, sample, simulate, bound, allocate, select.
    pub fn iterate(&mut self, problem: &ProblemDefinition, cfg: &RunConfig) -> Result<()> {
        let step = self.k + 1;
        let mut partition_stream = cfg.stream(step, Purpose::Partition);
        let outcome = self.partition_step(problem, cfg, &mut partition_stream)?;
        let event = outcome.event;
        let new_ids: Vec<RegionId> = outcome.children.iter().map(Subregion::id).collect();
        let new_budget: Vec<(RegionId, usize)> = if new_ids.is_empty() {
            vec![(self.best, cfg.nu_r_total)]
        } else {
            self.commit_split(problem, outcome.children)?;
            let shares = match cfg.new_region_budget {
                NewRegionBudget::SplitTotal => equal_shares(cfg.nu_r_total, new_ids.len()),
                NewRegionBudget::PerRegion => vec![cfg.nu_r_total; new_ids.len()],
            };
            new_ids.iter().copied().zip(shares).collect()
        };

        let mut sample_stream = cfg.stream(step, Purpose::Sampling);
        let mut sampled: Vec<(RegionId, IntegerPoint)> = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        let budget = new_budget.into_iter().chain(pending.into_iter().map(|(id, n)| (id, n as usize)));
        for (id, count) in budget {
            if count == 0 {
                continue;
            }
            let region = &self.regions[&id];
            match sample_region(region, problem, count, &self.archive, &mut sample_stream, &cfg.walk) {
                Ok(points) => sampled.extend(points.into_iter().map(|p| (id, p))),
                Err(EsbbError::RegionEmpty(_)) => {}
                Err(e) => return Err(e),
            }
        }
        self.k = step;
        let mut sim_stream = cfg.stream(step, Purpose::Simulation);
        self.simulate(problem, cfg, &sampled, &mut sim_stream)?;

        self.refresh_bounds();
        let candidates: Vec<(RegionId, f64, u64)> =
            self.bounds.iter().map(|(&id, &b)| (id, b, self.region_replications(id))).collect();
        self.best = select_best(&candidates).ok_or_else(|| EsbbError::Internal("empty partition".into()))?;
        let others: Vec<(RegionId, f64)> =
            self.bounds.iter().filter(|(&id, _)| id != self.best).map(|(&id, &b)| (id, b)).collect();
        let mut alloc_stream = cfg.stream(step, Purpose::Allocation);
        self.pending = allocate_samples(&others, cfg.nu_o as u64, &mut alloc_stream);
        self.training = self.members[&self.best].clone();
        self.training.sort();
        self.push_record(problem, event)?;
        if cfg.audit {
            self.audit(problem)?;
        }
        Ok(())
    }

    /// Exhaustive consistency check of the state. Enumerates the feasible set
    /// when it has at most 4096 points; otherwise checks witnesses and
    /// archived-point ownership only.
    pub fn audit(&self, problem: &ProblemDefinition) -> Result<()> {
        let fail = |msg: String| Err(EsbbError::Internal(msg));
        if !self.regions.contains_key(&self.best) {
            return fail("best region is not in the partition".into());
        }
        let partition = Partition::new(self.regions.values().cloned().collect(), None);
        match problem.enumerate_feasible(crate::region::ENUMERATION_BUDGET as usize)? {
            crate::problem::Enumeration::Complete(_) => partition.verify_tiling(problem, &self.root)?,
            crate::problem::Enumeration::ExceedsLimit => {
                for r in self.regions.values() {
                    if let Some(w) = r.witness() {
                        if !r.contains(problem, w)? {
                            return fail(format!("witness of region {} lies outside it", r.id()));
                        }
                    }
                }
            }
        }
        for (p, _) in self.archive.iter() {
            let inside: Vec<RegionId> =
                self.regions.values().filter(|r| r.contains_coords(problem, p.coords())).map(Subregion::id).collect();
            if inside.len() != 1 || self.owner.get(p) != Some(&inside[0]) {
                return fail(format!("archived point ({p}) is owned inconsistently: {inside:?}"));
            }
        }
        let mut psi: Vec<IntegerPoint> =
            self.archive.points_in(&self.regions[&self.best], problem).into_iter().map(|(p, _, _)| p).collect();
        psi.sort();
        if psi != self.training {
            return fail("training set differs from the archived points of the best region".into());
        }
        for (&id, &b) in &self.bounds {
            let direct = estimate_bound(&self.regions[&id], &self.archive, problem);
            if direct != b {
                return fail(format!("bound of region {id} is stale: {b} vs {direct}"));
            }
        }
        if self.sim_calls != self.archive.total_replications() {
            return fail(format!(
                "simulator calls {} differ from archived replications {}",
                self.sim_calls,
                self.archive.total_replications()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub strategy: String,
    pub trace: Vec<IterationRecord>,
    pub final_point: IntegerPoint,
    /// Final cumulative mean in the reporting sense.
    pub final_mean: f64,
    pub final_n: u64,
    /// Oracle calls counted by the problem during this run.
    pub oracle_calls: u64,
    pub archive_replications: u64,
    /// Sampled solutions counted with multiplicity.
    pub sampled_solutions: u64,
    pub distinct_points: usize,
    pub bound_violations: u64,
    pub final_regions: usize,
    pub archive: SampleArchive,
}

pub const TRACE_HEADER: &str =
    "run_id,iteration,incumbent_coords,incumbent_mean,incumbent_n,n_regions,total_sim_calls,partition_event";

impl RunResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W, run_id: &str) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.trace {
            writeln!(
                out,
                "{run_id},{},{},{},{},{},{},{}",
                r.iteration, r.incumbent, r.incumbent_mean, r.incumbent_n, r.n_regions, r.total_sim_calls, r.event
            )?;
        }
        Ok(())
    }

    pub fn trace_csv(&self, run_id: &str) -> String {
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf, run_id).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Initializes and iterates until the iteration cap (or an optional
/// replication or time cap). The answer is the archived point with the
/// highest cumulative mean.
pub fn run(problem: &ProblemDefinition, cfg: &RunConfig) -> Result<RunResult> {
    let started = Instant::now();
    let calls_before = problem.call_count();
    let mut state = EsbbState::initialize(problem, cfg)?;
    for _ in 0..cfg.max_iterations {
        if cfg.max_total_replications.is_some_and(|cap| state.sim_calls >= cap)
            || cfg.time_limit.is_some_and(|limit| started.elapsed() >= limit)
        {
            break;
        }
        state.iterate(problem, cfg)?;
    }
    let (final_point, mean) = state.archive.incumbent()?;
    let final_n = state.archive.get(&final_point).map_or(0, |r| r.n);
    Ok(RunResult {
        strategy: cfg.strategy.label().to_string(),
        final_mean: problem.to_display(mean),
        final_point,
        final_n,
        oracle_calls: problem.call_count() - calls_before,
        archive_replications: state.archive.total_replications(),
        sampled_solutions: state.draws,
        distinct_points: state.archive.len(),
        bound_violations: state.bound_violations,
        final_regions: state.regions.len(),
        trace: state.trace,
        archive: state.archive,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::problem::{FnOracle, GriewankLatticeProblem};

    fn toy_1d() -> ProblemDefinition {
        ProblemDefinition::new("toy", vec![0], vec![9], vec![], false, Arc::new(FnOracle::new(|x| -((x[0] - 6) as f64).powi(2))))
            .unwrap()
    }

    fn generic() -> StrategyChoice {
        StrategyChoice::Generic { omega: 2, dimension: DimensionRule::Longest }
    }

    #[test]
    fn initialize_counts() {
        let problem = GriewankLatticeProblem::centered(0.01).into_problem("g").unwrap();
        let cfg = RunConfig::new(generic());
        let state = EsbbState::initialize(&problem, &cfg).unwrap();
        assert!(state.archive().len() <= 10);
        assert_eq!(state.archive().total_replications(), 100);
        assert_eq!(state.trace().len(), 1);
        assert_eq!(state.training_points().len(), state.archive().len());
        state.audit(&problem).unwrap();
    }

    #[test]
    fn warm_start_is_archived() {
        let problem = toy_1d();
        let mut cfg = RunConfig::new(generic());
        cfg.warm_start = Some(IntegerPoint::new(vec![6]));
        let state = EsbbState::initialize(&problem, &cfg).unwrap();
        assert!(state.archive().get(&IntegerPoint::new(vec![6])).unwrap().n >= 10);
        cfg.warm_start = Some(IntegerPoint::new(vec![12]));
        assert!(matches!(EsbbState::initialize(&problem, &cfg), Err(EsbbError::InvalidArgument(_))));
    }

    #[test]
    fn bound_cases() {
        let problem = toy_1d();
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let mut a = SampleArchive::new();
        assert_eq!(estimate_bound(&root, &a, &problem), f64::NEG_INFINITY);
        a.record(IntegerPoint::new(vec![1]), &[2.5], 0).unwrap();
        a.record(IntegerPoint::new(vec![2]), &[7.1], 0).unwrap();
        assert_eq!(estimate_bound(&root, &a, &problem), 7.1);
    }

    #[test]
    fn allocation_examples() {
        let mut s = RandomStream::from_seed(1);
        assert!(allocate_samples(&[], 5, &mut s).is_empty());
        assert_eq!(allocate_samples(&[(RegionId(3), 1.0)], 5, &mut s), vec![(RegionId(3), 5)]);
        // the ranked half of 6 is 3 slots at weights 2/3 and 1/3
        let t = allocate_samples(&[(RegionId(1), 0.5), (RegionId(2), 9.0)], 6, &mut s);
        assert_eq!(t.iter().map(|x| x.1).sum::<u64>(), 6);
        let mut s2 = RandomStream::from_seed(1);
        let t_det = allocate_samples(&[(RegionId(1), 0.5), (RegionId(2), 9.0)], 3, &mut s2);
        // nu_o = 3 puts 2 slots in the ranked half: weights 2/3,1/3 -> 4/3, 2/3 -> (1,1)
        assert_eq!(t_det.iter().map(|x| x.1).sum::<u64>(), 3);
        let t = allocate_samples(&[(RegionId(1), f64::NEG_INFINITY), (RegionId(2), 1.0)], 2, &mut s);
        assert!(t[1].1 >= 1);
        let t = allocate_samples(&[(RegionId(1), f64::NEG_INFINITY)], 4, &mut s);
        assert_eq!(t, vec![(RegionId(1), 4)]);
    }

    #[test]
    fn ranked_half_exact() {
        // only the ranked half is spent when nu_o = 1
        let mut s = RandomStream::from_seed(0);
        let t = allocate_samples(&[(RegionId(1), 0.0), (RegionId(2), 5.0), (RegionId(3), 1.0)], 1, &mut s);
        assert_eq!(t, vec![(RegionId(1), 0), (RegionId(2), 1), (RegionId(3), 0)]);
        // 4 ranked slots over weights 3,2,1: quotas 2, 1.33, 0.67 -> 2,1,1
        let t = allocate_samples(&[(RegionId(1), 0.0), (RegionId(2), 5.0), (RegionId(3), 1.0)], 7, &mut s);
        assert_eq!(t.iter().map(|x| x.1).sum::<u64>(), 7);
    }

    #[test]
    fn selection_ties() {
        let c = [(RegionId(4), 1.0, 10), (RegionId(2), 1.0, 10), (RegionId(7), 1.0, 3), (RegionId(1), 0.5, 0)];
        assert_eq!(select_best(&c), Some(RegionId(7)));
        let c = [(RegionId(4), 1.0, 10), (RegionId(2), 1.0, 10)];
        assert_eq!(select_best(&c), Some(RegionId(2)));
        assert_eq!(select_best(&[(RegionId(5), f64::NEG_INFINITY, 0), (RegionId(6), -3.0, 1)]), Some(RegionId(6)));
    }

    #[test]
    fn shares() {
        assert_eq!(equal_shares(10, 2), vec![5, 5]);
        assert_eq!(equal_shares(10, 3), vec![4, 3, 3]);
        assert_eq!(equal_shares(10, 4), vec![3, 3, 2, 2]);
        assert!(equal_shares(5, 0).is_empty());
    }

    #[test]
    fn noiseless_toy_finds_optimum() {
        let problem = toy_1d();
        let mut cfg = RunConfig::new(generic());
        cfg.max_iterations = 30;
        cfg.audit = true;
        for seed in 0..5 {
            cfg.master_seed = seed;
            let r = run(&problem, &cfg).unwrap();
            assert_eq!(r.final_point, IntegerPoint::new(vec![6]));
            assert_eq!(r.trace.len(), 31);
            assert_eq!(r.bound_violations, 0);
        }
    }

    #[test]
    fn trace_grows_by_one() {
        let problem = toy_1d();
        let cfg = RunConfig::new(StrategyChoice::AdaptiveParallel(TreeConfig::default()));
        let mut state = EsbbState::initialize(&problem, &cfg).unwrap();
        for i in 0..5 {
            state.iterate(&problem, &cfg).unwrap();
            assert_eq!(state.trace().len(), i + 2);
            state.audit(&problem).unwrap();
        }
    }

    #[test]
    fn singleton_best_keeps_partition() {
        let problem =
            ProblemDefinition::new("one", vec![0], vec![0], vec![], false, Arc::new(FnOracle::new(|_| 1.0))).unwrap();
        let cfg = RunConfig::new(generic());
        let mut state = EsbbState::initialize(&problem, &cfg).unwrap();
        state.iterate(&problem, &cfg).unwrap();
        assert_eq!(state.region_count(), 1);
        assert_eq!(state.trace().last().unwrap().event, PartitionEvent::None);
    }

    #[test]
    fn adaptive_split_separates_label_groups() {
        let problem = ProblemDefinition::new(
            "step",
            vec![0],
            vec![3],
            vec![],
            false,
            Arc::new(FnOracle::new(|x| if x[0] < 2 { 0.0 } else { 10.0 })),
        )
        .unwrap();
        let mut cfg = RunConfig::new(StrategyChoice::AdaptiveParallel(TreeConfig::new(1, 1, 1).unwrap()));
        cfg.n0 = 40;
        let mut state = EsbbState::initialize(&problem, &cfg).unwrap();
        assert_eq!(state.training_points().len(), 4);
        let outcome = state.partition_step(&problem, &cfg, &mut RandomStream::from_seed(0)).unwrap();
        assert_eq!(outcome.event, PartitionEvent::Adaptive);
        let ranges: Vec<(i64, i64)> = outcome.children.iter().map(|c| (c.lower()[0], c.upper()[0])).collect();
        assert_eq!(ranges, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn adaptive_falls_back_on_tiny_training_set() {
        let problem = toy_1d();
        let mut cfg = RunConfig::new(StrategyChoice::AdaptiveParallel(TreeConfig::default()));
        cfg.n0 = 1;
        let mut state = EsbbState::initialize(&problem, &cfg).unwrap();
        assert_eq!(state.training_points().len(), 1);
        let outcome = state.partition_step(&problem, &cfg, &mut RandomStream::from_seed(0)).unwrap();
        assert_eq!(outcome.event, PartitionEvent::Fallback);
        assert_eq!(outcome.children.len(), 2);
    }

    #[test]
    fn runs_are_deterministic_and_conserve_budget() {
        let problem = GriewankLatticeProblem::centered(0.01).into_problem("g").unwrap();
        let mut cfg = RunConfig::new(StrategyChoice::AdaptiveParallel(TreeConfig::default()));
        cfg.master_seed = 42;
        let a = run(&problem.fork(), &cfg).unwrap();
        let b = run(&problem.fork(), &cfg).unwrap();
        assert_eq!(a.trace_csv("r0"), b.trace_csv("r0"));
        assert_eq!(a.oracle_calls, a.archive_replications);
        assert_eq!(a.bound_violations, 0);
        cfg.arm_salt = 1;
        let c = run(&problem.fork(), &cfg).unwrap();
        assert_eq!(a.trace[0], c.trace[0]);
    }

    #[test]
    fn griewank_sampling_fraction() {
        let problem = GriewankLatticeProblem::centered(0.01).into_problem("g").unwrap();
        let mut cfg = RunConfig::new(generic());
        cfg.master_seed = 7;
        let r = run(&problem, &cfg).unwrap();
        assert!(r.distinct_points <= r.sampled_solutions as usize);
        assert!((300..=700).contains(&r.distinct_points), "{} distinct of {} draws", r.distinct_points, r.sampled_solutions);
    }

    #[test]
    fn trace_csv_format() {
        let problem = toy_1d();
        let mut cfg = RunConfig::new(generic());
        cfg.max_iterations = 1;
        let r = run(&problem, &cfg).unwrap();
        let csv = r.trace_csv("x");
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!((row[0], row[1], row[7]), ("x", "0", "none"));
        assert_eq!(lines.next().unwrap().split(',').nth(7), Some("generic"));
    }

    #[test]
    fn invalid_configs() {
        let problem = toy_1d();
        let mut cfg = RunConfig::new(StrategyChoice::Generic { omega: 1, dimension: DimensionRule::Longest });
        assert!(cfg.validate(&problem).is_err());
        cfg.strategy = generic();
        cfg.nu_o = 0;
        assert!(cfg.validate(&problem).is_err());
        cfg.nu_o = 1;
        cfg.strategy = StrategyChoice::AdaptiveHyperplane { tree: TreeConfig::default(), clusters: vec![vec![4]] };
        assert!(cfg.validate(&problem).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn allocation_conserves(bounds in prop::collection::vec(prop::option::of(-10.0f64..10.0), 1..12), nu_o in 1u64..40, seed in 0u64..1000) {
            let bounds: Vec<(RegionId, f64)> = bounds
                .into_iter()
                .enumerate()
                .map(|(i, b)| (RegionId(i as u64), b.unwrap_or(f64::NEG_INFINITY)))
                .collect();
            let t = allocate_samples(&bounds, nu_o, &mut RandomStream::from_seed(seed));
            prop_assert_eq!(t.iter().map(|x| x.1).sum::<u64>(), nu_o);
            prop_assert_eq!(t.len(), bounds.len());
        }
    }
}
