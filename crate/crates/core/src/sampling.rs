//! Uniform sampling of feasible points inside a subregion.
//!
//! Box-shaped regions use per-coordinate uniform draws with rejection against
//! the problem constraints. Regions carrying hyperplane cuts use a
//! coordinate-direction hit-and-run walk on the integer lattice, started from
//! a point already known to lie in the region.

use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::archive::SampleArchive;
use crate::error::{EsbbError, Result};
use crate::problem::{IntegerPoint, ProblemDefinition, Relation};
use crate::region::Subregion;

/// Identity of a random stream. Equal lineages produce equal draw sequences;
/// distinct lineages key distinct ChaCha streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamLineage {
    pub master_seed: u64,
    pub run_index: u64,
    pub iteration: u64,
    pub purpose: u64,
}

impl StreamLineage {
    pub fn new(master_seed: u64, run_index: u64, iteration: u64, purpose: u64) -> Self {
        StreamLineage { master_seed, run_index, iteration, purpose }
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.master_seed, self.run_index, self.iteration, self.purpose])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }
}

/// What a stream is used for inside one iteration of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    InitialPool,
    InitialSimulation,
    Partition,
    Sampling,
    Simulation,
    Allocation,
    PostEvaluation,
    Other(u32),
}

impl Purpose {
    pub fn tag(self) -> u64 {
        match self {
            Purpose::InitialPool => 1,
            Purpose::InitialSimulation => 2,
            Purpose::Partition => 3,
            Purpose::Sampling => 4,
            Purpose::Simulation => 5,
            Purpose::Allocation => 6,
            Purpose::PostEvaluation => 7,
            Purpose::Other(n) => 1000 + u64::from(n),
        }
    }
}

/// Deterministic random stream keyed by its lineage.
#[derive(Clone, Debug)]
pub struct RandomStream {
    lineage: StreamLineage,
    rng: ChaCha12Rng,
}

impl RandomStream {
    pub fn new(lineage: StreamLineage) -> Self {
        RandomStream { lineage, rng: ChaCha12Rng::from_seed(lineage.key()) }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(StreamLineage::new(seed, 0, 0, 0))
    }

    pub fn lineage(&self) -> StreamLineage {
        self.lineage
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.random_range(lo..=hi)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkConfig {
    /// Hit-and-run steps per returned point; `None` means `20·p`.
    pub warmup_steps: Option<usize>,
    /// Consecutive rejected box draws before giving up on rejection sampling.
    pub max_rejections: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { warmup_steps: None, max_rejections: 10_000 }
    }
}

impl WalkConfig {
    pub fn steps(&self, dim: usize) -> usize {
        self.warmup_steps.unwrap_or(20 * dim).max(1)
    }
}

/// Pilot draws used to estimate the box acceptance rate of a cut region.
const PILOT_DRAWS: usize = 100;
/// Minimum pilot acceptance for using rejection sampling on a cut region.
const PILOT_ACCEPTANCE: f64 = 0.05;

fn draw_in_box(region: &Subregion, stream: &mut RandomStream, out: &mut [i64]) {
    for (i, x) in out.iter_mut().enumerate() {
        *x = stream.uniform_int(region.lower()[i], region.upper()[i]);
    }
}

/// `count` independent uniform draws (with replacement) from the region by
/// box sampling plus rejection. When one draw needs more than
/// `max_rejections` attempts the remaining points come from hit-and-run
/// started at the region witness.
pub fn sample_uniform_box(
    region: &Subregion,
    problem: &ProblemDefinition,
    count: usize,
    stream: &mut RandomStream,
    cfg: &WalkConfig,
) -> Result<Vec<IntegerPoint>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    if region.lower().iter().zip(region.upper()).any(|(l, u)| l > u) {
        return Err(EsbbError::RegionEmpty(region.id()));
    }
    let mut x = region.lower().to_vec();
    while out.len() < count {
        let mut accepted = false;
        for _ in 0..=cfg.max_rejections {
            draw_in_box(region, stream, &mut x);
            if region.contains_coords(problem, &x) {
                accepted = true;
                break;
            }
        }
        if !accepted {
            let start = region.witness().cloned().ok_or(EsbbError::RegionEmpty(region.id()))?;
            while out.len() < count {
                out.push(sample_hit_and_run(region, problem, &start, stream, cfg)?);
            }
            break;
        }
        out.push(IntegerPoint::new(x.clone()));
    }
    Ok(out)
}

/// Feasible integer interval for coordinate `dim` with the other coordinates
/// of `x` held fixed. `x` must be feasible.
fn line_interval(region: &Subregion, problem: &ProblemDefinition, x: &mut [i64], dim: usize) -> (i64, i64) {
    let current = x[dim];
    let mut lo = region.lower()[dim];
    let mut hi = region.upper()[dim];
    for ineq in region.cuts().iter().chain(problem.constraints()) {
        let a = ineq.coefficients()[dim];
        if a == 0.0 {
            continue;
        }
        let rest = ineq.lhs(x) - a * current as f64;
        let t = (ineq.bound() - rest) / a;
        if !t.is_finite() {
            continue;
        }
        let t = t.clamp(-9.0e15, 9.0e15);
        match (ineq.relation(), a > 0.0) {
            (Relation::Less, true) => hi = hi.min(t.ceil() as i64 - 1),
            (Relation::LessEq, true) => hi = hi.min(t.floor() as i64),
            (Relation::GreaterEq, true) => lo = lo.max(t.ceil() as i64),
            (Relation::Less, false) => lo = lo.max(t.floor() as i64 + 1),
            (Relation::LessEq, false) => lo = lo.max(t.ceil() as i64),
            (Relation::GreaterEq, false) => hi = hi.min(t.floor() as i64),
        }
    }
    lo = lo.min(current);
    hi = hi.max(current);
    // Rounding in the division above can be off by one; settle the endpoints
    // with the exact membership test. The feasible set on a line is an interval.
    let ok = |t: i64, x: &mut [i64]| {
        x[dim] = t;
        let r = region.contains_coords(problem, x);
        x[dim] = current;
        r
    };
    while lo < current && !ok(lo, x) {
        lo += 1;
    }
    while hi > current && !ok(hi, x) {
        hi -= 1;
    }
    while lo > region.lower()[dim] && ok(lo - 1, x) {
        lo -= 1;
    }
    while hi < region.upper()[dim] && ok(hi + 1, x) {
        hi += 1;
    }
    (lo, hi)
}

/// Coordinate-direction hit-and-run on the lattice points of the region.
/// Each step picks a coordinate uniformly, then jumps to a uniform point of
/// the feasible integer interval through the current position along it.
pub fn sample_hit_and_run(
    region: &Subregion,
    problem: &ProblemDefinition,
    start: &IntegerPoint,
    stream: &mut RandomStream,
    cfg: &WalkConfig,
) -> Result<IntegerPoint> {
    walk(region, problem, start, stream, cfg, |_| {})
}

fn walk<F>(
    region: &Subregion,
    problem: &ProblemDefinition,
    start: &IntegerPoint,
    stream: &mut RandomStream,
    cfg: &WalkConfig,
    mut visit: F,
) -> Result<IntegerPoint>
where
    F: FnMut(&[i64]),
{
    if !region.contains(problem, start)? {
        return Err(EsbbError::ContractViolation(format!(
            "hit-and-run start ({start}) is outside region {}",
            region.id()
        )));
    }
    let mut x = start.coords().to_vec();
    let p = x.len();
    for _ in 0..cfg.steps(p) {
        let dim = stream.index(p);
        let (lo, hi) = line_interval(region, problem, &mut x, dim);
        x[dim] = stream.uniform_int(lo, hi);
        visit(&x);
    }
    Ok(IntegerPoint::new(x))
}

/// Samples `count` points from a region, dispatching on its shape.
///
/// Pure boxes use [`sample_uniform_box`]. Cut regions run a 100-draw pilot
/// and use rejection sampling when more than 5% of box draws land inside,
/// otherwise one hit-and-run walk per point, each started from a uniformly
/// chosen archived point in the region (or the region witness).
pub fn sample_region(
    region: &Subregion,
    problem: &ProblemDefinition,
    count: usize,
    archive: &SampleArchive,
    stream: &mut RandomStream,
    cfg: &WalkConfig,
) -> Result<Vec<IntegerPoint>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if region.is_pure_box() {
        return sample_uniform_box(region, problem, count, stream, cfg);
    }
    let mut x = region.lower().to_vec();
    let mut hits = 0;
    for _ in 0..PILOT_DRAWS {
        draw_in_box(region, stream, &mut x);
        if region.contains_coords(problem, &x) {
            hits += 1;
        }
    }
    if hits as f64 / PILOT_DRAWS as f64 > PILOT_ACCEPTANCE {
        return sample_uniform_box(region, problem, count, stream, cfg);
    }
    let mut starts: Vec<IntegerPoint> = archive.points_in(region, problem).into_iter().map(|(p, _, _)| p).collect();
    if starts.is_empty() {
        starts.push(region.witness().cloned().ok_or(EsbbError::RegionEmpty(region.id()))?);
    }
    (0..count)
        .map(|_| {
            let start = &starts[stream.index(starts.len())];
            sample_hit_and_run(region, problem, start, stream, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::problem::{FnOracle, LinearInequality};
    use crate::region::{RegionId, RegionIdAllocator};
    use crate::stats::chi_square_uniform_p_value;

    fn boxed(lower: Vec<i64>, upper: Vec<i64>) -> ProblemDefinition {
        ProblemDefinition::new("box", lower, upper, vec![], false, Arc::new(FnOracle::new(|_| 0.0))).unwrap()
    }

    fn triangle_region(problem: &ProblemDefinition) -> Subregion {
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(problem, &mut ids);
        let (left, _) = root.apply_cut(problem, &[1.0, 1.0], 4.0, &mut ids).unwrap();
        let mut left = left;
        left.set_witness(problem, IntegerPoint::new(vec![0, 0])).unwrap();
        left
    }

    fn counts(points: &[IntegerPoint], support: &[IntegerPoint]) -> Vec<u64> {
        let mut map: BTreeMap<&IntegerPoint, u64> = support.iter().map(|p| (p, 0)).collect();
        for p in points {
            *map.get_mut(p).expect("sample outside support") += 1;
        }
        map.into_values().collect()
    }

    #[test]
    fn box_sampler_membership_and_zero_count() {
        let problem = boxed(vec![0, 0], vec![1, 1]);
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let mut s = RandomStream::from_seed(1);
        let pts = sample_uniform_box(&root, &problem, 4, &mut s, &WalkConfig::default()).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|p| p.coords().iter().all(|&c| c == 0 || c == 1)));
        assert!(sample_uniform_box(&root, &problem, 0, &mut s, &WalkConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn box_sampler_is_uniform() {
        let problem = boxed(vec![0, 0], vec![9, 9]);
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let mut s = RandomStream::from_seed(2);
        let pts = sample_uniform_box(&root, &problem, 100_000, &mut s, &WalkConfig::default()).unwrap();
        let support = problem.enumerate_feasible(1000).unwrap().points().unwrap();
        let p = chi_square_uniform_p_value(&counts(&pts, &support));
        assert!(p > 0.001, "chi-square p = {p}");
    }

    #[test]
    fn hit_and_run_single_point_region_stays_put() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = Subregion::new(RegionId(9), None, vec![2, 1], vec![2, 1], vec![]).unwrap();
        let start = IntegerPoint::new(vec![2, 1]);
        let mut s = RandomStream::from_seed(3);
        let cfg = WalkConfig { warmup_steps: Some(25), ..WalkConfig::default() };
        assert_eq!(sample_hit_and_run(&region, &problem, &start, &mut s, &cfg).unwrap(), start);
    }

    #[test]
    fn hit_and_run_rejects_outside_start() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = triangle_region(&problem);
        let mut s = RandomStream::from_seed(3);
        let err = sample_hit_and_run(&region, &problem, &IntegerPoint::new(vec![3, 3]), &mut s, &WalkConfig::default());
        assert!(matches!(err, Err(EsbbError::ContractViolation(_))));
    }

    #[test]
    fn hit_and_run_never_leaves_region() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = triangle_region(&problem);
        let mut s = RandomStream::from_seed(4);
        let cfg = WalkConfig { warmup_steps: Some(500), ..WalkConfig::default() };
        let mut visited = 0;
        walk(&region, &problem, &IntegerPoint::new(vec![0, 0]), &mut s, &cfg, |x| {
            assert!(region.contains_coords(&problem, x));
            visited += 1;
        })
        .unwrap();
        assert_eq!(visited, 500);
    }

    #[test]
    fn hit_and_run_is_uniform_on_triangle() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = triangle_region(&problem);
        let support = region.enumerate(&problem, 100).points().unwrap();
        assert_eq!(support.len(), 10);
        let cfg = WalkConfig { warmup_steps: Some(40), ..WalkConfig::default() };
        let mut s = RandomStream::from_seed(5);
        let start = IntegerPoint::new(vec![0, 0]);
        let pts: Vec<IntegerPoint> = (0..50_000)
            .map(|_| sample_hit_and_run(&region, &problem, &start, &mut s, &cfg).unwrap())
            .collect();
        let p = chi_square_uniform_p_value(&counts(&pts, &support));
        assert!(p > 0.001, "chi-square p = {p}");
    }

    #[test]
    fn line_interval_matches_brute_force() {
        let problem = ProblemDefinition::new(
            "poly",
            vec![-5, -5, -5],
            vec![5, 5, 5],
            vec![LinearInequality::new(vec![0.3, -1.7, 2.1], 2.2, Relation::LessEq).unwrap()],
            false,
            Arc::new(FnOracle::new(|_| 0.0)),
        )
        .unwrap();
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let (region, _) = root.apply_cut(&problem, &[-0.7, 1.1, 0.9], 1.3, &mut ids).unwrap();
        let all = region.enumerate(&problem, 2000).points().unwrap();
        for x in all.iter().step_by(7) {
            for dim in 0..3 {
                let mut xs = x.coords().to_vec();
                let (lo, hi) = line_interval(&region, &problem, &mut xs, dim);
                assert_eq!(xs, x.coords());
                let brute: Vec<i64> = (-5..=5)
                    .filter(|&t| {
                        let mut y = xs.clone();
                        y[dim] = t;
                        region.contains_coords(&problem, &y)
                    })
                    .collect();
                assert_eq!((lo, hi), (brute[0], *brute.last().unwrap()));
                assert_eq!(brute.len() as i64, hi - lo + 1);
            }
        }
    }

    #[test]
    fn dispatch_pure_box_matches_box_sampler() {
        let problem = boxed(vec![0, 0], vec![9, 9]);
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let archive = SampleArchive::new();
        let cfg = WalkConfig::default();
        let a = sample_region(&root, &problem, 20, &archive, &mut RandomStream::from_seed(8), &cfg).unwrap();
        let b = sample_uniform_box(&root, &problem, 20, &mut RandomStream::from_seed(8), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dispatch_tight_cut_region_walks_from_archived_point() {
        // x0 + x1 < 1 on [0,40]^2 keeps 1 of 1681 box points: pilot fails.
        let problem = boxed(vec![0, 0], vec![40, 40]);
        let mut ids = RegionIdAllocator::new();
        let root = Subregion::root(&problem, &mut ids);
        let (region, _) = root.apply_cut(&problem, &[1.0, 1.0], 1.0, &mut ids).unwrap();
        let mut archive = SampleArchive::new();
        archive.record(IntegerPoint::new(vec![0, 0]), &[1.0], 0).unwrap();
        archive.record(IntegerPoint::new(vec![5, 5]), &[1.0], 0).unwrap();
        let pts = sample_region(&region, &problem, 5, &archive, &mut RandomStream::from_seed(9), &WalkConfig::default())
            .unwrap();
        assert_eq!(pts, vec![IntegerPoint::new(vec![0, 0]); 5]);
    }

    #[test]
    fn dispatch_cut_region_points_are_members() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = triangle_region(&problem);
        let support = region.enumerate(&problem, 100).points().unwrap();
        let pts = sample_region(&region, &problem, 5, &SampleArchive::new(), &mut RandomStream::from_seed(10), &WalkConfig::default())
            .unwrap();
        assert_eq!(pts.len(), 5);
        assert!(pts.iter().all(|p| support.contains(p)));
    }

    #[test]
    fn empty_region_without_witness_errors() {
        let problem = boxed(vec![0, 0], vec![40, 40]);
        let cut = LinearInequality::new(vec![1.0, 1.0], 0.0, Relation::Less).unwrap();
        let region = Subregion::new(RegionId(3), None, vec![0, 0], vec![40, 40], vec![cut]).unwrap();
        let err = sample_region(&region, &problem, 2, &SampleArchive::new(), &mut RandomStream::from_seed(1), &WalkConfig::default());
        assert_eq!(err, Err(EsbbError::RegionEmpty(RegionId(3))));
    }

    #[test]
    fn identical_lineage_gives_identical_samples() {
        let problem = boxed(vec![0, 0], vec![3, 3]);
        let region = triangle_region(&problem);
        let lineage = StreamLineage::new(42, 3, 7, Purpose::Sampling.tag());
        let cfg = WalkConfig::default();
        let a = sample_region(&region, &problem, 30, &SampleArchive::new(), &mut RandomStream::new(lineage), &cfg).unwrap();
        let b = sample_region(&region, &problem, 30, &SampleArchive::new(), &mut RandomStream::new(lineage), &cfg).unwrap();
        assert_eq!(a, b);
        let other = StreamLineage::new(42, 3, 8, Purpose::Sampling.tag());
        let c = sample_region(&region, &problem, 30, &SampleArchive::new(), &mut RandomStream::new(other), &cfg).unwrap();
        assert_ne!(a, c);
    }
}
