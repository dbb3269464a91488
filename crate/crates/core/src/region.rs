//! Subregions of the feasible set (integer boxes intersected with linear
//! cuts), partitions of a subregion, and the equal-split baseline strategy.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dimension, EsbbError, Result};
use crate::problem::{box_volume, enumerate_box, in_box, Enumeration, IntegerPoint, LinearInequality, ProblemDefinition, Relation};

/// Largest box (in lattice points) that is ever enumerated exhaustively.
pub const ENUMERATION_BUDGET: u128 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u64);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Hands out fresh region ids within one run.
#[derive(Debug, Default, Clone)]
pub struct RegionIdAllocator {
    next: u64,
}

impl RegionIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> RegionId {
        let id = RegionId(self.next);
        self.next += 1;
        id
    }
}

/// How the generic strategy picks the dimension to split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimensionRule {
    Longest,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subregion {
    id: RegionId,
    parent_id: Option<RegionId>,
    lower: Vec<i64>,
    upper: Vec<i64>,
    cuts: Vec<LinearInequality>,
    witness: Option<IntegerPoint>,
}

impl Subregion {
    /// The whole feasible region.
    pub fn root(problem: &ProblemDefinition, ids: &mut RegionIdAllocator) -> Self {
        Subregion {
            id: ids.fresh(),
            parent_id: None,
            lower: problem.lower().to_vec(),
            upper: problem.upper().to_vec(),
            cuts: Vec::new(),
            witness: Some(problem.reference_point().clone()),
        }
    }

    pub fn new(
        id: RegionId,
        parent_id: Option<RegionId>,
        lower: Vec<i64>,
        upper: Vec<i64>,
        cuts: Vec<LinearInequality>,
    ) -> Result<Self> {
        check_dimension(lower.len(), upper.len())?;
        for c in &cuts {
            check_dimension(lower.len(), c.dim())?;
        }
        Ok(Subregion { id, parent_id, lower, upper, cuts, witness: None })
    }

    pub fn id(&self) -> RegionId {
        self.id
    }

    pub fn parent_id(&self) -> Option<RegionId> {
        self.parent_id
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn cuts(&self) -> &[LinearInequality] {
        &self.cuts
    }

    pub fn witness(&self) -> Option<&IntegerPoint> {
        self.witness.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// No stored hyperplane cuts.
    pub fn is_pure_box(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Sets the witness, which must lie in the region.
    pub fn set_witness(&mut self, problem: &ProblemDefinition, point: IntegerPoint) -> Result<()> {
        if !self.contains(problem, &point)? {
            return Err(EsbbError::Internal(format!("witness ({point}) is outside region {}", self.id)));
        }
        self.witness = Some(point);
        Ok(())
    }

    pub fn contains(&self, problem: &ProblemDefinition, point: &IntegerPoint) -> Result<bool> {
        check_dimension(self.dim(), point.dim())?;
        Ok(self.contains_coords(problem, point.coords()))
    }

    pub(crate) fn contains_coords(&self, problem: &ProblemDefinition, coords: &[i64]) -> bool {
        in_box(&self.lower, &self.upper, coords)
            && self.cuts.iter().all(|c| c.holds(coords))
            && problem.constraints().iter().all(|c| c.holds(coords))
    }

    /// Number of distinct integer values per dimension, minus one.
    pub fn widths(&self) -> Vec<i64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn box_volume(&self) -> u128 {
        box_volume(&self.lower, &self.upper)
    }

    /// Feasible points of the region in lexicographic order.
    pub fn enumerate(&self, problem: &ProblemDefinition, limit: usize) -> Enumeration {
        enumerate_box(&self.lower, &self.upper, limit, |x| {
            self.cuts.iter().all(|c| c.holds(x)) && problem.constraints().iter().all(|c| c.holds(x))
        })
    }

    /// Exactly one feasible point? Conservative (`false`) when the box is too
    /// large to enumerate.
    pub fn is_singleton(&self, problem: &ProblemDefinition) -> bool {
        if self.widths().iter().all(|&w| w == 0) {
            return true;
        }
        if self.box_volume() > ENUMERATION_BUDGET {
            return false;
        }
        matches!(self.enumerate(problem, 1), Enumeration::Complete(ref v) if v.len() == 1)
    }

    /// Widest box dimension, lowest index on ties.
    pub fn longest_dimension(&self) -> usize {
        let widths = self.widths();
        let mut best = 0;
        for (i, &w) in widths.iter().enumerate() {
            if w > widths[best] {
                best = i;
            }
        }
        best
    }

    /// Uniformly random dimension among those with more than one value.
    pub fn random_dimension<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let splittable: Vec<usize> = self.widths().iter().enumerate().filter(|(_, &w)| w > 0).map(|(i, _)| i).collect();
        if splittable.is_empty() {
            0
        } else {
            splittable[rng.random_range(0..splittable.len())]
        }
    }

    /// Splits into `a·x < threshold` (left) and `a·x >= threshold` (right).
    ///
    /// A cut on a single coordinate with unit coefficient tightens the child
    /// boxes instead of being stored. The parent's witness is kept by the
    /// child that contains it.
    pub fn apply_cut(
        &self,
        problem: &ProblemDefinition,
        coefficients: &[f64],
        threshold: f64,
        ids: &mut RegionIdAllocator,
    ) -> Result<(Subregion, Subregion)> {
        check_dimension(self.dim(), coefficients.len())?;
        let less = LinearInequality::new(coefficients.to_vec(), threshold, Relation::Less)?;
        let mut left = self.child(ids.fresh());
        let mut right = self.child(ids.fresh());
        match less.axis_index() {
            Some(axis) => {
                // integer x: x < t  <=>  x <= ceil(t) - 1
                let first_right = threshold.ceil().clamp(i64::MIN as f64 / 2.0, i64::MAX as f64 / 2.0) as i64;
                left.upper[axis] = left.upper[axis].min(first_right - 1);
                right.lower[axis] = right.lower[axis].max(first_right);
            }
            None => {
                let greater = LinearInequality::new(coefficients.to_vec(), threshold, Relation::GreaterEq)?;
                left.cuts.push(less);
                right.cuts.push(greater);
            }
        }
        for child in [&mut left, &mut right] {
            if let Some(w) = &self.witness {
                if child.contains_coords(problem, w.coords()) {
                    child.witness = Some(w.clone());
                }
            }
        }
        Ok((left, right))
    }

    fn child(&self, id: RegionId) -> Subregion {
        Subregion {
            id,
            parent_id: Some(self.id),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            cuts: self.cuts.clone(),
            witness: None,
        }
    }

    /// Cuts the box into `omega` consecutive slabs along `dim` (fewer when the
    /// dimension has fewer distinct values). Slab sizes differ by at most one,
    /// larger slabs first. Stored cuts are inherited.
    ///
    /// `known_points` (typically archived samples) are tried first as slab
    /// witnesses. Slabs proven empty by enumeration are dropped.
    pub fn split_box_equal(
        &self,
        problem: &ProblemDefinition,
        dim: usize,
        omega: usize,
        ids: &mut RegionIdAllocator,
        known_points: &[IntegerPoint],
    ) -> Result<Partition> {
        if omega < 2 {
            return Err(EsbbError::InvalidArgument(format!("omega must be at least 2, got {omega}")));
        }
        if dim >= self.dim() {
            return Err(EsbbError::InvalidArgument(format!("split dimension {dim} out of range")));
        }
        let values = (self.upper[dim] - self.lower[dim] + 1).max(0) as u64;
        let slabs = values.min(omega as u64);
        let mut members = Vec::with_capacity(slabs as usize);
        let mut start = self.lower[dim];
        for s in 0..slabs {
            let size = (values / slabs + u64::from(s < values % slabs)) as i64;
            let mut slab = self.child(ids.fresh());
            slab.lower[dim] = start;
            slab.upper[dim] = start + size - 1;
            start += size;
            match slab.find_witness(problem, known_points, self.witness.as_ref()) {
                WitnessSearch::Found(w) => slab.witness = Some(w),
                WitnessSearch::ProvenEmpty => continue,
                WitnessSearch::Unknown => {}
            }
            members.push(slab);
        }
        Ok(Partition { members, origin: Some(self.id) })
    }

    /// Looks for a feasible point of the region: known points, the clamped
    /// parent witness, box corners, random draws, then enumeration.
    pub(crate) fn find_witness(
        &self,
        problem: &ProblemDefinition,
        known_points: &[IntegerPoint],
        hint: Option<&IntegerPoint>,
    ) -> WitnessSearch {
        if let Some(w) = &self.witness {
            if self.contains_coords(problem, w.coords()) {
                return WitnessSearch::Found(w.clone());
            }
        }
        if let Some(p) = known_points.iter().find(|p| self.contains_coords(problem, p.coords())) {
            return WitnessSearch::Found(p.clone());
        }
        let mut candidates = vec![self.lower.clone(), self.upper.clone()];
        if let Some(h) = hint {
            candidates.insert(
                0,
                h.coords().iter().zip(self.lower.iter().zip(&self.upper)).map(|(&x, (&l, &u))| x.clamp(l, u)).collect(),
            );
        }
        for c in candidates {
            if self.contains_coords(problem, &c) {
                return WitnessSearch::Found(IntegerPoint::new(c));
            }
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return WitnessSearch::ProvenEmpty;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9 ^ self.id.0);
        let mut x = self.lower.clone();
        for _ in 0..1000 {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = rng.random_range(self.lower[i]..=self.upper[i]);
            }
            if self.contains_coords(problem, &x) {
                return WitnessSearch::Found(IntegerPoint::new(x));
            }
        }
        if self.box_volume() <= ENUMERATION_BUDGET {
            return match self.enumerate(problem, 1) {
                Enumeration::Complete(v) if v.is_empty() => WitnessSearch::ProvenEmpty,
                Enumeration::Complete(mut v) => WitnessSearch::Found(v.remove(0)),
                Enumeration::ExceedsLimit => WitnessSearch::Unknown,
            };
        }
        WitnessSearch::Unknown
    }

    /// One-line text form used in run traces:
    /// `region <id> <parent|-> <l0>..<u0>;<l1>..<u1> <cut>|<cut>` where a cut
    /// is `c0,c1,...<op><bound>` and `-` marks an empty cut list.
    pub fn to_trace_line(&self) -> String {
        let parent = self.parent_id.map_or_else(|| "-".to_string(), |p| p.to_string());
        let bounds: Vec<String> = self.lower.iter().zip(&self.upper).map(|(l, u)| format!("{l}..{u}")).collect();
        let cuts: Vec<String> = self
            .cuts
            .iter()
            .map(|c| {
                let coeffs: Vec<String> = c.coefficients().iter().map(|a| a.to_string()).collect();
                format!("{}{}{}", coeffs.join(","), c.relation().symbol(), c.bound())
            })
            .collect();
        let cuts = if cuts.is_empty() { "-".to_string() } else { cuts.join("|") };
        format!("region {} {} {} {}", self.id, parent, bounds.join(";"), cuts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum WitnessSearch {
    Found(IntegerPoint),
    ProvenEmpty,
    Unknown,
}

/// A set of subregions replacing the subregion `origin`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    members: Vec<Subregion>,
    origin: Option<RegionId>,
}

impl Partition {
    pub fn new(members: Vec<Subregion>, origin: Option<RegionId>) -> Self {
        Partition { members, origin }
    }

    pub fn members(&self) -> &[Subregion] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Subregion> {
        self.members
    }

    pub fn origin(&self) -> Option<RegionId> {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Exhaustive check that the members tile `parent`: every feasible point
    /// of the parent is in exactly one member, no member has points outside
    /// the parent, and every witness lies in its member. Only usable when the
    /// parent box is small enough to enumerate.
    pub fn verify_tiling(&self, problem: &ProblemDefinition, parent: &Subregion) -> Result<()> {
        for m in &self.members {
            match &m.witness {
                Some(w) if m.contains_coords(problem, w.coords()) => {}
                Some(w) => return Err(EsbbError::Internal(format!("witness ({w}) outside region {}", m.id))),
                None => return Err(EsbbError::Internal(format!("region {} has no witness", m.id))),
            }
        }
        let limit = ENUMERATION_BUDGET as usize;
        let parent_points = parent
            .enumerate(problem, limit)
            .points()
            .ok_or_else(|| EsbbError::InvalidArgument("parent region too large to verify".into()))?;
        for x in &parent_points {
            let owners = self.members.iter().filter(|m| m.contains_coords(problem, x.coords())).count();
            if owners != 1 {
                return Err(EsbbError::Internal(format!("point ({x}) lies in {owners} members")));
            }
        }
        let member_total: usize = self
            .members
            .iter()
            .map(|m| m.enumerate(problem, limit).points().map_or(usize::MAX, |v| v.len()))
            .fold(0usize, |a, b| a.saturating_add(b));
        if member_total != parent_points.len() {
            return Err(EsbbError::Internal(format!(
                "members hold {member_total} points, parent holds {}",
                parent_points.len()
            )));
        }
        Ok(())
    }
}
