//! Empirical stochastic branch-and-bound for discrete simulation
//! optimization, with regression-tree partitioning of the best subregion.

pub mod archive;
pub mod error;
pub mod esbb;
pub mod problem;
pub mod region;
pub mod sampling;
pub mod stats;
pub mod tree;

pub use archive::{ObservationRecord, SampleArchive};
pub use error::{EsbbError, Result};
pub use esbb::{run, EsbbState, IterationRecord, NewRegionBudget, PartitionEvent, RunConfig, RunResult, StrategyChoice};
pub use problem::{
    FleetGeometry, GriewankLatticeProblem, IntegerPoint, LinearInequality, Oracle, ProblemDefinition, Relation,
    SyntheticFleetProblem,
};
pub use region::{DimensionRule, Partition, RegionId, RegionIdAllocator, Subregion};
pub use sampling::{Purpose, RandomStream, StreamLineage, WalkConfig};
pub use tree::{RegressionTree, SplitFeature, TrainingSample, TreeConfig};
