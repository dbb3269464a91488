//! The set of simulated points with their replication counts and running
//! moments.

use std::collections::BTreeMap;
use std::io::{self, Write};

use crate::error::{EsbbError, Result};
use crate::problem::{IntegerPoint, ProblemDefinition};
use crate::region::Subregion;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub first_iteration: u64,
    /// Raw observations, kept only when the archive runs in debug mode.
    pub raw: Option<Vec<f64>>,
}

impl ObservationRecord {
    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance from the stored moments, clamped at zero.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SampleArchive {
    records: BTreeMap<IntegerPoint, ObservationRecord>,
    total_replications: u64,
    keep_raw: bool,
}

impl SampleArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Archive that also retains every raw observation.
    pub fn with_raw_trace() -> Self {
        SampleArchive { keep_raw: true, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_replications(&self) -> u64 {
        self.total_replications
    }

    pub fn contains(&self, point: &IntegerPoint) -> bool {
        self.records.contains_key(point)
    }

    pub fn get(&self, point: &IntegerPoint) -> Option<&ObservationRecord> {
        self.records.get(point)
    }

    /// Records in lexicographic point order.
    pub fn iter(&self) -> impl Iterator<Item = (&IntegerPoint, &ObservationRecord)> {
        self.records.iter()
    }

    pub fn record(&mut self, point: IntegerPoint, observations: &[f64], iteration: u64) -> Result<()> {
        if observations.is_empty() {
            return Err(EsbbError::InvalidArgument("record needs at least one observation".into()));
        }
        let keep_raw = self.keep_raw;
        let rec = self.records.entry(point).or_insert_with(|| ObservationRecord {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
            first_iteration: iteration,
            raw: keep_raw.then(Vec::new),
        });
        for &y in observations {
            rec.n += 1;
            rec.sum += y;
            rec.sum_sq += y * y;
        }
        if let Some(raw) = rec.raw.as_mut() {
            raw.extend_from_slice(observations);
        }
        self.total_replications += observations.len() as u64;
        Ok(())
    }

    pub fn cumulative_mean(&self, point: &IntegerPoint) -> Result<f64> {
        self.records
            .get(point)
            .map(ObservationRecord::mean)
            .ok_or_else(|| EsbbError::NotFound(format!("point ({point}) is not archived")))
    }

    /// Replications owed to each distinct sampled point: `dn_first` for a
    /// point not yet archived, `dn_again` otherwise, multiplied by how often
    /// the point occurs in `sampled`. First-occurrence order is kept.
    pub fn replication_plan(&self, sampled: &[IntegerPoint], dn_first: u64, dn_again: u64) -> Vec<(IntegerPoint, u64)> {
        let mut plan: Vec<(IntegerPoint, u64)> = Vec::new();
        let mut slot: BTreeMap<&IntegerPoint, usize> = BTreeMap::new();
        for p in sampled {
            let inc = if self.records.contains_key(p) { dn_again } else { dn_first };
            match slot.get(p) {
                Some(&i) => plan[i].1 += inc,
                None => {
                    slot.insert(p, plan.len());
                    plan.push((p.clone(), inc));
                }
            }
        }
        plan
    }

    /// Archived points inside the region as `(point, mean, n)`.
    pub fn points_in(&self, region: &Subregion, problem: &ProblemDefinition) -> Vec<(IntegerPoint, f64, u64)> {
        self.records
            .iter()
            .filter(|(p, _)| region.contains_coords(problem, p.coords()))
            .map(|(p, r)| (p.clone(), r.mean(), r.n))
            .collect()
    }

    /// Point with the highest cumulative mean; ties go to the larger `n`, then
    /// the lexicographically smaller point.
    pub fn incumbent(&self) -> Result<(IntegerPoint, f64)> {
        let mut best: Option<(&IntegerPoint, &ObservationRecord)> = None;
        for (p, r) in &self.records {
            best = match best {
                None => Some((p, r)),
                Some((bp, br)) => {
                    let (m, bm) = (r.mean(), br.mean());
                    // BTreeMap order visits smaller points first, so only a
                    // strict improvement replaces the current best.
                    if m > bm || (m == bm && r.n > br.n) {
                        Some((p, r))
                    } else {
                        Some((bp, br))
                    }
                }
            };
        }
        best.map(|(p, r)| (p.clone(), r.mean()))
            .ok_or_else(|| EsbbError::NotFound("archive is empty".into()))
    }

    /// CSV dump: `x_0..x_{p-1},n,mean,variance,first_iteration`.
    pub fn write_csv<W: Write>(&self, mut out: W, dimension: usize) -> io::Result<()> {
        let header: Vec<String> = (0..dimension).map(|i| format!("x_{i}")).collect();
        writeln!(out, "{},n,mean,variance,first_iteration", header.join(","))?;
        for (p, r) in &self.records {
            let coords: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{},{},{},{}", coords.join(","), r.n, r.mean(), r.variance(), r.first_iteration)?;
        }
        Ok(())
    }
}
