//! Discrete simulation-optimization problems: a finite integer feasible
//! region described by box bounds plus linear inequalities, and a stochastic
//! oracle returning noisy observations of the objective.
//!
//! Internally every problem is a maximization. Minimization problems (the
//! Griewank benchmarks) negate their observations at the oracle boundary and
//! record that fact so reports can flip the sign back.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{check_dimension, EsbbError, Result};
use crate::sampling::RandomStream;

/// A decision vector on the integer lattice.
///
/// Ordering is lexicographic on the coordinates, which is also the canonical
/// key used by the sample archive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntegerPoint(Vec<i64>);

impl IntegerPoint {
    pub fn new(coords: Vec<i64>) -> Self {
        IntegerPoint(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<i64> {
        self.0
    }
}

impl From<Vec<i64>> for IntegerPoint {
    fn from(coords: Vec<i64>) -> Self {
        IntegerPoint(coords)
    }
}

impl fmt::Display for IntegerPoint {
    /// Semicolon-joined coordinates, as used in the CSV traces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    /// `a·x < b`
    Less,
    /// `a·x >= b`
    GreaterEq,
    /// `a·x <= b`
    LessEq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Less => "<",
            Relation::GreaterEq => ">=",
            Relation::LessEq => "<=",
        }
    }
}

/// `a·x (rel) b` over integer points.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearInequality {
    coefficients: Vec<f64>,
    bound: f64,
    relation: Relation,
}

impl LinearInequality {
    pub fn new(coefficients: Vec<f64>, bound: f64, relation: Relation) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(EsbbError::InvalidArgument("inequality has no coefficients".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) || !bound.is_finite() {
            return Err(EsbbError::InvalidArgument("inequality has non-finite terms".into()));
        }
        if coefficients.iter().all(|&c| c == 0.0) {
            return Err(EsbbError::InvalidArgument("all inequality coefficients are zero".into()));
        }
        Ok(LinearInequality { coefficients, bound, relation })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// `a·x`, accumulated in coordinate order so that complementary cuts
    /// always see the same value.
    pub fn lhs(&self, coords: &[i64]) -> f64 {
        self.coefficients
            .iter()
            .zip(coords)
            .fold(0.0, |acc, (a, &x)| acc + a * x as f64)
    }

    pub fn holds(&self, coords: &[i64]) -> bool {
        self.relation_holds(self.lhs(coords))
    }

    pub(crate) fn relation_holds(&self, lhs: f64) -> bool {
        match self.relation {
            Relation::Less => lhs < self.bound,
            Relation::GreaterEq => lhs >= self.bound,
            Relation::LessEq => lhs <= self.bound,
        }
    }

    /// Index of the single unit coefficient when the inequality is a plain
    /// bound on one coordinate.
    pub fn axis_index(&self) -> Option<usize> {
        let mut axis = None;
        for (i, &c) in self.coefficients.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if c != 1.0 || axis.is_some() {
                return None;
            }
            axis = Some(i);
        }
        axis
    }
}

impl fmt::Display for LinearInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.coefficients.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "] {} {}", self.relation.symbol(), self.bound)
    }
}

/// Stochastic simulator behind a problem. Observations are in the canonical
/// maximization sense and must be a pure function of (point, stream state).
pub trait Oracle: Send + Sync + fmt::Debug {
    fn observe(&self, point: &IntegerPoint, stream: &mut RandomStream) -> f64;

    /// Noise-free expectation of `observe`, when it is known in closed form.
    fn expected(&self, _point: &IntegerPoint) -> Option<f64> {
        None
    }
}

/// Result of a bounded exhaustive enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Enumeration {
    Complete(Vec<IntegerPoint>),
    ExceedsLimit,
}

impl Enumeration {
    pub fn points(self) -> Option<Vec<IntegerPoint>> {
        match self {
            Enumeration::Complete(points) => Some(points),
            Enumeration::ExceedsLimit => None,
        }
    }
}

/// Lexicographic walk over an integer box, keeping points accepted by `keep`.
/// Stops with `ExceedsLimit` once `limit + 1` points have been accepted.
pub(crate) fn enumerate_box<F>(lower: &[i64], upper: &[i64], limit: usize, mut keep: F) -> Enumeration
where
    F: FnMut(&[i64]) -> bool,
{
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Enumeration::Complete(Vec::new());
    }
    let mut out = Vec::new();
    let mut cur = lower.to_vec();
    loop {
        if keep(&cur) {
            if out.len() == limit {
                return Enumeration::ExceedsLimit;
            }
            out.push(IntegerPoint::new(cur.clone()));
        }
        // odometer, last coordinate fastest
        let mut d = cur.len();
        loop {
            if d == 0 {
                return Enumeration::Complete(out);
            }
            d -= 1;
            if cur[d] < upper[d] {
                cur[d] += 1;
                break;
            }
            cur[d] = lower[d];
        }
    }
}

/// Number of lattice points in a box, saturating.
pub(crate) fn box_volume(lower: &[i64], upper: &[i64]) -> u128 {
    lower.iter().zip(upper).fold(1u128, |acc, (&l, &u)| {
        if u < l {
            0
        } else {
            acc.saturating_mul((u - l + 1) as u128)
        }
    })
}

/// A discrete SO problem: `max E[Y(x)]` over the integer points of a box that
/// satisfy every linear constraint.
#[derive(Debug)]
pub struct ProblemDefinition {
    name: String,
    lower: Vec<i64>,
    upper: Vec<i64>,
    constraints: Vec<LinearInequality>,
    negated: bool,
    oracle: Arc<dyn Oracle>,
    reference_point: IntegerPoint,
    calls: AtomicU64,
}

impl ProblemDefinition {
    /// Builds a problem. `negated` records that the user-facing objective is a
    /// minimization whose observations the oracle already negates.
    pub fn new(
        name: impl Into<String>,
        lower: Vec<i64>,
        upper: Vec<i64>,
        constraints: Vec<LinearInequality>,
        negated: bool,
        oracle: Arc<dyn Oracle>,
    ) -> Result<Self> {
        if lower.is_empty() {
            return Err(EsbbError::InvalidArgument("problem dimension must be positive".into()));
        }
        check_dimension(lower.len(), upper.len())?;
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(EsbbError::InvalidArgument(format!(
                "lower bound {} exceeds upper bound {} in dimension {i}",
                lower[i], upper[i]
            )));
        }
        for c in &constraints {
            check_dimension(lower.len(), c.dim())?;
        }
        let reference_point = find_feasible_point(&lower, &upper, &constraints).ok_or_else(|| {
            EsbbError::InvalidArgument("no feasible point found for the problem".into())
        })?;
        Ok(ProblemDefinition {
            name: name.into(),
            lower,
            upper,
            constraints,
            negated,
            oracle,
            reference_point,
            calls: AtomicU64::new(0),
        })
    }

    /// Same problem with its own simulator-call counter starting at zero.
    pub fn fork(&self) -> Self {
        ProblemDefinition {
            name: self.name.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            constraints: self.constraints.clone(),
            negated: self.negated,
            oracle: Arc::clone(&self.oracle),
            reference_point: self.reference_point.clone(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn constraints(&self) -> &[LinearInequality] {
        &self.constraints
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    /// A feasible point found at construction.
    pub fn reference_point(&self) -> &IntegerPoint {
        &self.reference_point
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn is_feasible(&self, point: &IntegerPoint) -> Result<bool> {
        check_dimension(self.dimension(), point.dim())?;
        Ok(self.is_feasible_coords(point.coords()))
    }

    pub(crate) fn is_feasible_coords(&self, coords: &[i64]) -> bool {
        in_box(&self.lower, &self.upper, coords) && self.constraints.iter().all(|c| c.holds(coords))
    }

    /// One stochastic observation of the objective (canonical sense).
    /// Simulating an infeasible point is a hard error.
    pub fn evaluate(&self, point: &IntegerPoint, stream: &mut RandomStream) -> Result<f64> {
        if !self.is_feasible(point)? {
            return Err(EsbbError::ContractViolation(format!(
                "simulation requested at infeasible point ({point})"
            )));
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.oracle.observe(point, stream))
    }

    /// Noise-free objective in the canonical sense, if the oracle knows it.
    /// Does not count as a simulator call.
    pub fn expected_value(&self, point: &IntegerPoint) -> Option<f64> {
        self.oracle.expected(point)
    }

    /// Converts a canonical (maximization) value to the user-facing sense.
    pub fn to_display(&self, canonical: f64) -> f64 {
        if self.negated {
            -canonical + 0.0
        } else {
            canonical
        }
    }

    /// All feasible points in lexicographic order, or `ExceedsLimit`.
    pub fn enumerate_feasible(&self, limit: usize) -> Result<Enumeration> {
        if limit == 0 {
            return Err(EsbbError::InvalidArgument("enumeration limit must be at least 1".into()));
        }
        let constraints = &self.constraints;
        Ok(enumerate_box(&self.lower, &self.upper, limit, |x| {
            constraints.iter().all(|c| c.holds(x))
        }))
    }
}

pub(crate) fn in_box(lower: &[i64], upper: &[i64], coords: &[i64]) -> bool {
    coords.len() == lower.len()
        && coords
            .iter()
            .zip(lower.iter().zip(upper))
            .all(|(x, (l, u))| l <= x && x <= u)
}

/// Corners, centre, then a seeded random search, then bounded enumeration.
fn find_feasible_point(lower: &[i64], upper: &[i64], constraints: &[LinearInequality]) -> Option<IntegerPoint> {
    let ok = |x: &[i64]| constraints.iter().all(|c| c.holds(x));
    let centre: Vec<i64> = lower.iter().zip(upper).map(|(l, u)| l + (u - l) / 2).collect();
    for candidate in [lower.to_vec(), upper.to_vec(), centre] {
        if ok(&candidate) {
            return Some(IntegerPoint::new(candidate));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = vec![0i64; lower.len()];
    for _ in 0..10_000 {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.random_range(lower[i]..=upper[i]);
        }
        if ok(&x) {
            return Some(IntegerPoint::new(x));
        }
    }
    enumerate_box(lower, upper, 1, ok).points().and_then(|mut v| v.pop())
}

/// `1 + Σ x_i²/4000 − Π cos(x_i/√i)` with 1-based `i`.
pub fn griewank_value(coords: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut prod = 1.0;
    for (i, &x) in coords.iter().enumerate() {
        sum += x * x / 4000.0;
        prod *= (x / ((i + 1) as f64).sqrt()).cos();
    }
    1.0 + sum - prod
}

/// Griewank function sampled on a regular lattice over a real box.
///
/// Lattice indices are stored as integers aligned with the origin, so the
/// domain `[-5, 5]` with 101 points per axis becomes indices `-50..=50` and
/// index 0 is the real coordinate 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GriewankLatticeProblem {
    pub domain_low: Vec<f64>,
    pub domain_high: Vec<f64>,
    pub lattice_points_per_dim: usize,
    pub noise_sigma: f64,
}

impl GriewankLatticeProblem {
    pub fn centered(noise_sigma: f64) -> Self {
        GriewankLatticeProblem {
            domain_low: vec![-5.0, -5.0],
            domain_high: vec![5.0, 5.0],
            lattice_points_per_dim: 101,
            noise_sigma,
        }
    }

    pub fn shifted(noise_sigma: f64) -> Self {
        GriewankLatticeProblem {
            domain_low: vec![-1.0, -1.0],
            domain_high: vec![9.0, 9.0],
            lattice_points_per_dim: 101,
            noise_sigma,
        }
    }

    fn validate(&self) -> Result<()> {
        check_dimension(self.domain_low.len(), self.domain_high.len())?;
        if self.domain_low.is_empty() {
            return Err(EsbbError::InvalidArgument("Griewank domain is empty".into()));
        }
        if self.lattice_points_per_dim < 2 {
            return Err(EsbbError::InvalidArgument("need at least 2 lattice points per axis".into()));
        }
        if self.domain_low.iter().zip(&self.domain_high).any(|(l, h)| !(l < h)) {
            return Err(EsbbError::InvalidArgument("Griewank domain bounds must satisfy low < high".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(EsbbError::InvalidArgument("noise sigma must be non-negative".into()));
        }
        Ok(())
    }

    fn axes(&self) -> Vec<LatticeAxis> {
        let intervals = (self.lattice_points_per_dim - 1) as f64;
        self.domain_low
            .iter()
            .zip(&self.domain_high)
            .map(|(&low, &high)| {
                let step = (high - low) / intervals;
                let first = (low / step).round() as i64;
                let mut offset = low - first as f64 * step;
                if offset.abs() < 1e-9 * step {
                    offset = 0.0;
                }
                LatticeAxis { first, last: first + intervals as i64, step, offset }
            })
            .collect()
    }

    /// Integer bounds of the lattice indices.
    pub fn index_bounds(&self) -> (Vec<i64>, Vec<i64>) {
        let axes = self.axes();
        (axes.iter().map(|a| a.first).collect(), axes.iter().map(|a| a.last).collect())
    }

    pub fn to_real(&self, point: &IntegerPoint) -> Vec<f64> {
        self.axes().iter().zip(point.coords()).map(|(a, &z)| a.real(z)).collect()
    }

    /// Lattice point closest to the real origin (the global minimizer when it
    /// lies in the domain).
    pub fn origin_index(&self) -> IntegerPoint {
        let axes = self.axes();
        IntegerPoint::new(
            axes.iter()
                .map(|a| ((-a.offset / a.step).round() as i64).clamp(a.first, a.last))
                .collect(),
        )
    }

    pub fn true_value(&self, point: &IntegerPoint) -> f64 {
        griewank_value(&self.to_real(point))
    }

    pub fn into_problem(self, name: impl Into<String>) -> Result<ProblemDefinition> {
        self.validate()?;
        let (lower, upper) = self.index_bounds();
        let oracle = GriewankOracle { axes: self.axes(), sigma: self.noise_sigma };
        ProblemDefinition::new(name, lower, upper, Vec::new(), true, Arc::new(oracle))
    }
}

#[derive(Clone, Copy, Debug)]
struct LatticeAxis {
    first: i64,
    last: i64,
    step: f64,
    offset: f64,
}

impl LatticeAxis {
    fn real(&self, z: i64) -> f64 {
        z as f64 * self.step + self.offset
    }
}

#[derive(Debug)]
struct GriewankOracle {
    axes: Vec<LatticeAxis>,
    sigma: f64,
}

impl GriewankOracle {
    fn value(&self, point: &IntegerPoint) -> f64 {
        let real: Vec<f64> = self.axes.iter().zip(point.coords()).map(|(a, &z)| a.real(z)).collect();
        griewank_value(&real)
    }
}

impl Oracle for GriewankOracle {
    fn observe(&self, point: &IntegerPoint, stream: &mut RandomStream) -> f64 {
        let noise = if self.sigma > 0.0 {
            let z: f64 = StandardNormal.sample(stream);
            self.sigma * z
        } else {
            0.0
        };
        -(self.value(point) + noise) + 0.0
    }

    fn expected(&self, point: &IntegerPoint) -> Option<f64> {
        Some(-self.value(point) + 0.0)
    }
}

/// Analytic fleet-assignment stand-in: stations grouped in overlapping
/// clusters, each cluster with Poisson demand served up to the cluster's total
/// supply.
///
/// Observation: `Σ_j r_j·min(Σ_{i∈C_j} x_i, d_j) − Σ_i c_i·x_i` with a fresh
/// `d_j ~ Poisson(λ_j)` per replication. Feasible region:
/// `0 <= x_i <= capacity_i` and `Σ x_i <= total_fleet`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFleetProblem {
    pub capacities: Vec<i64>,
    pub total_fleet: i64,
    pub costs: Vec<f64>,
    pub clusters: Vec<Vec<usize>>,
    pub cluster_rates: Vec<f64>,
    pub revenue_per_serve: Vec<f64>,
}

/// Parameters of the generated station geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct FleetGeometry {
    pub stations: usize,
    pub capacity: i64,
    pub total_fleet: i64,
    /// Side of the square the stations are scattered in.
    pub area: f64,
    /// Stations within this distance of a centre station form its cluster.
    pub radius: f64,
    /// Mean demand per station in a cluster, before `demand_scale`.
    pub demand_per_station: f64,
    pub demand_scale: f64,
    pub revenue: f64,
    pub cost_low: f64,
    pub cost_high: f64,
    pub seed: u64,
}

impl Default for FleetGeometry {
    fn default() -> Self {
        FleetGeometry {
            stations: 23,
            capacity: 16,
            total_fleet: 211,
            area: 4.0,
            radius: 1.5,
            demand_per_station: 8.0,
            demand_scale: 2.0,
            revenue: 10.0,
            cost_low: 1.0,
            cost_high: 4.0,
            seed: 23,
        }
    }
}

impl SyntheticFleetProblem {
    pub fn new(
        capacities: Vec<i64>,
        total_fleet: i64,
        costs: Vec<f64>,
        clusters: Vec<Vec<usize>>,
        cluster_rates: Vec<f64>,
        revenue_per_serve: Vec<f64>,
    ) -> Result<Self> {
        let p = capacities.len();
        if p == 0 {
            return Err(EsbbError::InvalidArgument("fleet problem needs at least one station".into()));
        }
        check_dimension(p, costs.len())?;
        check_dimension(clusters.len(), cluster_rates.len())?;
        check_dimension(clusters.len(), revenue_per_serve.len())?;
        if capacities.iter().any(|&c| c < 0) || total_fleet < 0 {
            return Err(EsbbError::InvalidArgument("capacities and fleet size must be non-negative".into()));
        }
        if cluster_rates.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(EsbbError::InvalidArgument("cluster demand rates must be finite and >= 0".into()));
        }
        let mut covered = vec![false; p];
        for c in &clusters {
            if c.is_empty() {
                return Err(EsbbError::InvalidArgument("empty station cluster".into()));
            }
            for &i in c {
                if i >= p {
                    return Err(EsbbError::InvalidArgument(format!("cluster references station {i} >= {p}")));
                }
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|&c| !c) {
            return Err(EsbbError::InvalidArgument(format!("station {i} belongs to no cluster")));
        }
        Ok(SyntheticFleetProblem { capacities, total_fleet, costs, clusters, cluster_rates, revenue_per_serve })
    }

    /// Stations scattered uniformly in a square; one cluster per station made
    /// of all stations within `radius` of it, duplicates removed.
    pub fn from_geometry(geometry: &FleetGeometry) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(geometry.seed);
        let p = geometry.stations;
        let positions: Vec<(f64, f64)> = (0..p)
            .map(|_| (rng.random::<f64>() * geometry.area, rng.random::<f64>() * geometry.area))
            .collect();
        let costs: Vec<f64> = (0..p)
            .map(|_| geometry.cost_low + rng.random::<f64>() * (geometry.cost_high - geometry.cost_low))
            .collect();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &(cx, cy) in &positions {
            let members: Vec<usize> = positions
                .iter()
                .enumerate()
                .filter(|(_, &(x, y))| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= geometry.radius)
                .map(|(k, _)| k)
                .collect();
            if !clusters.contains(&members) {
                clusters.push(members);
            }
        }
        let rates = clusters
            .iter()
            .map(|c| c.len() as f64 * geometry.demand_per_station * geometry.demand_scale)
            .collect();
        let revenue = vec![geometry.revenue; clusters.len()];
        SyntheticFleetProblem::new(vec![geometry.capacity; p], geometry.total_fleet, costs, clusters, rates, revenue)
    }

    pub fn stations(&self) -> usize {
        self.capacities.len()
    }

    fn cluster_supply(&self, coords: &[i64], j: usize) -> i64 {
        self.clusters[j].iter().map(|&i| coords[i]).sum()
    }

    fn cost(&self, coords: &[i64]) -> f64 {
        self.costs.iter().zip(coords).map(|(c, &x)| c * x as f64).sum()
    }

    /// Exact expected objective.
    pub fn expected_profit(&self, coords: &[i64]) -> f64 {
        let revenue: f64 = (0..self.clusters.len())
            .map(|j| {
                let supply = self.cluster_supply(coords, j);
                self.revenue_per_serve[j] * expected_min_poisson(supply, self.cluster_rates[j])
            })
            .sum();
        revenue - self.cost(coords)
    }

    /// The fleet spread as evenly as capacities allow, lower station indices
    /// first. Used as the warm start.
    pub fn even_assignment(&self) -> IntegerPoint {
        let p = self.stations();
        let mut x = vec![0i64; p];
        let mut left = self.total_fleet;
        while left > 0 {
            let open: Vec<usize> = (0..p).filter(|&i| x[i] < self.capacities[i]).collect();
            if open.is_empty() {
                break;
            }
            let share = (left / open.len() as i64).max(1);
            for i in open {
                if left == 0 {
                    break;
                }
                let add = share.min(self.capacities[i] - x[i]).min(left);
                x[i] += add;
                left -= add;
            }
        }
        IntegerPoint::new(x)
    }

    pub fn into_problem(self, name: impl Into<String>) -> Result<ProblemDefinition> {
        let p = self.stations();
        let lower = vec![0; p];
        let upper = self.capacities.clone();
        let fleet = LinearInequality::new(vec![1.0; p], self.total_fleet as f64, Relation::LessEq)?;
        ProblemDefinition::new(name, lower, upper, vec![fleet], false, Arc::new(self))
    }
}

/// `E[min(s, D)]` for `D ~ Poisson(rate)`, i.e. `Σ_{k<s} P(D > k)`.
fn expected_min_poisson(supply: i64, rate: f64) -> f64 {
    if supply <= 0 || rate <= 0.0 {
        return 0.0;
    }
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    let mut total = 0.0;
    for k in 0..supply {
        total += (1.0 - cdf).max(0.0);
        pmf *= rate / (k + 1) as f64;
        cdf += pmf;
    }
    total
}

impl Oracle for SyntheticFleetProblem {
    fn observe(&self, point: &IntegerPoint, stream: &mut RandomStream) -> f64 {
        let coords = point.coords();
        let mut revenue = 0.0;
        for j in 0..self.clusters.len() {
            let rate = self.cluster_rates[j];
            let demand = if rate > 0.0 {
                Poisson::new(rate).map(|d| d.sample(stream)).unwrap_or(0.0)
            } else {
                0.0
            };
            let served = (self.cluster_supply(coords, j) as f64).min(demand);
            revenue += self.revenue_per_serve[j] * served;
        }
        revenue - self.cost(coords)
    }

    fn expected(&self, point: &IntegerPoint) -> Option<f64> {
        Some(self.expected_profit(point.coords()))
    }
}

/// Deterministic objective given as a closure, for tests and toy problems.
pub struct FnOracle<F> {
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[i64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnOracle { f }
    }
}

impl<F> fmt::Debug for FnOracle<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnOracle")
    }
}

impl<F> Oracle for FnOracle<F>
where
    F: Fn(&[i64]) -> f64 + Send + Sync,
{
    fn observe(&self, point: &IntegerPoint, _stream: &mut RandomStream) -> f64 {
        (self.f)(point.coords())
    }

    fn expected(&self, point: &IntegerPoint) -> Option<f64> {
        Some((self.f)(point.coords()))
    }
}
