//! Building and executing experiments.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use esbb_core::stats::one_sample_t_test;
use esbb_core::{
    run, DimensionRule, EsbbError, FleetGeometry, GriewankLatticeProblem, IntegerPoint, ProblemDefinition, Purpose,
    RandomStream, RunConfig, RunResult, StrategyChoice, StreamLineage, SyntheticFleetProblem,
};
use rayon::prelude::*;

use crate::config::{ProblemKind, Settings, StrategyName};
use crate::BenchError;

/// A concrete problem plus what the harness knows about it.
#[derive(Debug)]
pub struct BuiltProblem {
    pub problem: ProblemDefinition,
    /// Known optimum and its value in the reporting sense.
    pub optimum: Option<(IntegerPoint, f64)>,
    pub clusters: Vec<Vec<usize>>,
    pub warm_start: Option<IntegerPoint>,
}

impl Clone for BuiltProblem {
    fn clone(&self) -> Self {
        BuiltProblem {
            problem: self.problem.fork(),
            optimum: self.optimum.clone(),
            clusters: self.clusters.clone(),
            warm_start: self.warm_start.clone(),
        }
    }
}

impl BuiltProblem {
    pub fn griewank(domain: GriewankLatticeProblem, name: &str) -> Result<Self, EsbbError> {
        let optimum = domain.origin_index();
        let value = domain.true_value(&optimum);
        Ok(BuiltProblem {
            problem: domain.into_problem(name)?,
            optimum: Some((optimum, value)),
            clusters: Vec::new(),
            warm_start: None,
        })
    }

    pub fn fleet(geometry: &FleetGeometry, name: &str, warm_start: bool) -> Result<Self, EsbbError> {
        let fleet = SyntheticFleetProblem::from_geometry(geometry)?;
        let clusters = fleet.clusters.clone();
        let warm = warm_start.then(|| fleet.even_assignment());
        Ok(BuiltProblem { problem: fleet.into_problem(name)?, optimum: None, clusters, warm_start: warm })
    }

    /// Noise-free value in the reporting sense.
    pub fn true_value(&self, point: &IntegerPoint) -> Option<f64> {
        self.problem.expected_value(point).map(|v| self.problem.to_display(v))
    }

    /// Whether smaller reported values are better.
    pub fn minimizes(&self) -> bool {
        self.problem.is_negated()
    }
}

#[derive(Clone, Debug)]
pub struct Arm {
    pub name: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub name: String,
    pub problem_label: String,
    pub problem: BuiltProblem,
    pub arms: Vec<Arm>,
    pub runs_per_arm: usize,
    pub post_eval_replications: usize,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

fn arm_salt(strategy: StrategyName) -> u64 {
    match strategy {
        StrategyName::Generic => 1,
        StrategyName::Parallel => 2,
        StrategyName::Hyperplane => 3,
    }
}

impl ExperimentSpec {
    pub fn from_settings(s: &Settings) -> Result<Self, BenchError> {
        s.validate()?;
        let problem = match s.problem {
            ProblemKind::GriewankCentered => {
                BuiltProblem::griewank(GriewankLatticeProblem::centered(s.noise_sigma), s.problem.as_str())?
            }
            ProblemKind::GriewankShifted => {
                BuiltProblem::griewank(GriewankLatticeProblem::shifted(s.noise_sigma), s.problem.as_str())?
            }
            ProblemKind::Fleet => BuiltProblem::fleet(&s.geometry, s.problem.as_str(), s.warm_start)?,
        };
        let mut arms = Vec::new();
        for &name in &s.strategies {
            let strategy = match name {
                StrategyName::Generic => StrategyChoice::Generic { omega: s.omega, dimension: DimensionRule::Longest },
                StrategyName::Parallel => StrategyChoice::AdaptiveParallel(s.tree),
                StrategyName::Hyperplane => {
                    StrategyChoice::AdaptiveHyperplane { tree: s.tree, clusters: problem.clusters.clone() }
                }
            };
            let mut cfg = RunConfig::new(strategy);
            cfg.n0 = s.n0;
            cfg.nu_o = s.nu_o;
            cfg.nu_r_total = s.nu_r_total;
            cfg.dn_first = s.dn_first;
            cfg.dn_again = s.dn_again;
            cfg.max_iterations = s.iterations;
            cfg.warm_start = problem.warm_start.clone();
            cfg.master_seed = s.seed;
            cfg.arm_salt = arm_salt(name);
            cfg.validate(&problem.problem)?;
            arms.push(Arm { name: name.as_str().to_string(), config: cfg });
        }
        Ok(ExperimentSpec {
            name: s.name.clone(),
            problem_label: s.problem.as_str().to_string(),
            problem,
            arms,
            runs_per_arm: s.runs,
            post_eval_replications: s.post_eval_replications,
            master_seed: s.seed,
            out_dir: s.out.clone(),
            svg: s.svg,
        })
    }
}

/// One finished run with its post-evaluation.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub arm: usize,
    pub run: usize,
    pub result: RunResult,
    /// Noise-free value of the final point, reporting sense.
    pub true_final: Option<f64>,
    /// Fresh replications of the final point, reporting sense.
    pub post_eval: Vec<f64>,
}

impl RunRecord {
    pub fn run_id(&self, arm_name: &str) -> String {
        format!("{arm_name}-{:03}", self.run)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    /// Indexed by arm, then run.
    pub runs: Vec<Vec<RunRecord>>,
    pub elapsed: Duration,
}

/// Fresh replications of each solution, in the reporting sense.
pub fn post_evaluate(
    problem: &ProblemDefinition,
    solutions: &[IntegerPoint],
    reps: usize,
    stream: &mut RandomStream,
) -> Result<Vec<Vec<f64>>, EsbbError> {
    if reps < 2 {
        return Err(EsbbError::InvalidArgument(format!("post-evaluation needs >= 2 replications, got {reps}")));
    }
    solutions
        .iter()
        .map(|x| {
            if !problem.is_feasible(x)? {
                return Err(EsbbError::InvalidArgument(format!("cannot post-evaluate infeasible point ({x})")));
            }
            (0..reps).map(|_| problem.evaluate(x, stream).map(|v| problem.to_display(v))).collect()
        })
        .collect()
}

/// `(exact, indifferent)`: runs ending exactly at the optimum, and runs whose
/// post-evaluation mean a two-sided one-sample t-test at 0.05 does not
/// separate from the optimal value.
pub fn hit_rate(
    finals: &[IntegerPoint],
    post_eval: &[Vec<f64>],
    optimum: &IntegerPoint,
    optimal_value: f64,
) -> Result<(usize, usize), EsbbError> {
    if finals.len() != post_eval.len() {
        return Err(EsbbError::InvalidArgument("one post-evaluation sample per final solution is required".into()));
    }
    let exact = finals.iter().filter(|x| *x == optimum).count();
    let mut indifferent = 0;
    for sample in post_eval {
        if one_sample_t_test(sample, optimal_value)? >= 0.05 {
            indifferent += 1;
        }
    }
    Ok((exact, indifferent))
}

fn post_eval_stream(cfg: &RunConfig) -> RandomStream {
    RandomStream::new(StreamLineage::new(
        cfg.master_seed,
        cfg.run_index,
        0,
        Purpose::PostEvaluation.tag() | (cfg.arm_salt << 16),
    ))
}

/// Runs every (arm, run) pair, in parallel, and post-evaluates the finals.
/// Results are ordered by arm, then run index.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentResults, BenchError> {
    if spec.runs_per_arm == 0 {
        return Err(EsbbError::InvalidArgument("runs_per_arm must be >= 1".into()).into());
    }
    let started = Instant::now();
    let jobs: Vec<(usize, usize)> =
        (0..spec.arms.len()).flat_map(|a| (0..spec.runs_per_arm).map(move |r| (a, r))).collect();
    let records = jobs
        .into_par_iter()
        .map(|(a, r)| {
            let mut cfg = spec.arms[a].config.clone();
            cfg.run_index = r as u64;
            let problem = spec.problem.problem.fork();
            let result = run(&problem, &cfg)?;
            let mut stream = post_eval_stream(&cfg);
            let post_eval = post_evaluate(
                &problem,
                std::slice::from_ref(&result.final_point),
                spec.post_eval_replications,
                &mut stream,
            )?
            .pop()
            .unwrap_or_default();
            let true_final = spec.problem.true_value(&result.final_point);
            Ok(RunRecord { arm: a, run: r, result, true_final, post_eval })
        })
        .collect::<Result<Vec<_>, EsbbError>>()?;
    let mut runs: Vec<Vec<RunRecord>> = vec![Vec::new(); spec.arms.len()];
    for rec in records {
        runs[rec.arm].push(rec);
    }
    Ok(ExperimentResults { spec: spec.clone(), runs, elapsed: started.elapsed() })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use esbb_core::problem::FnOracle;

    use super::*;

    fn small(runs: usize) -> ExperimentSpec {
        let mut s = Settings::builtin("griewank-centered").unwrap();
        s.runs = runs;
        s.iterations = 8;
        s.post_eval_replications = 10;
        ExperimentSpec::from_settings(&s).unwrap()
    }

    #[test]
    fn post_evaluate_shapes() {
        let spec = small(1);
        let x = spec.problem.optimum.clone().unwrap().0;
        let mut stream = RandomStream::from_seed(1);
        let out = post_evaluate(&spec.problem.problem, &vec![x.clone(); 15], 50, &mut stream).unwrap();
        assert_eq!(out.len(), 15);
        assert!(out.iter().all(|s| s.len() == 50));
        assert!(post_evaluate(&spec.problem.problem, std::slice::from_ref(&x), 1, &mut stream).is_err());
        let outside = IntegerPoint::new(vec![1000, 0]);
        assert!(matches!(
            post_evaluate(&spec.problem.problem, &[outside], 5, &mut stream),
            Err(EsbbError::InvalidArgument(_))
        ));
    }

    #[test]
    fn post_evaluate_noiseless_is_constant() {
        let problem = ProblemDefinition::new(
            "toy",
            vec![0],
            vec![5],
            vec![],
            false,
            Arc::new(FnOracle::new(|x: &[i64]| x[0] as f64 * 2.0)),
        )
        .unwrap();
        let mut stream = RandomStream::from_seed(3);
        let out = post_evaluate(&problem, &[IntegerPoint::new(vec![3])], 50, &mut stream).unwrap();
        assert!(out[0].iter().all(|&v| v == 6.0));
    }

    #[test]
    fn post_evaluation_matches_archive_mean() {
        let spec = small(4);
        let res = execute(&spec).unwrap();
        let sigma = 0.01;
        for rec in res.runs.iter().flatten() {
            let m = rec.post_eval.iter().sum::<f64>() / rec.post_eval.len() as f64;
            let truth = rec.true_final.unwrap();
            assert!((m - truth).abs() <= 4.0 * sigma / (rec.post_eval.len() as f64).sqrt());
            let archived = rec.result.final_mean;
            let n = rec.result.final_n as f64;
            assert!((archived - truth).abs() <= 6.0 * sigma / n.sqrt() + 1e-12);
        }
    }

    #[test]
    fn hit_rate_counts() {
        let opt = IntegerPoint::new(vec![0, 0]);
        let finals = vec![opt.clone(); 3];
        let samples = vec![vec![0.0, 0.01, -0.01]; 3];
        assert_eq!(hit_rate(&finals, &samples, &opt, 0.0).unwrap(), (3, 3));
        let finals = vec![opt.clone(), IntegerPoint::new(vec![1, 0])];
        let samples = vec![vec![0.0, 0.01, -0.01], vec![5.0, 5.01, 4.99]];
        assert_eq!(hit_rate(&finals, &samples, &opt, 0.0).unwrap(), (1, 1));
        assert!(hit_rate(&finals, &samples[..1], &opt, 0.0).is_err());
    }

    #[test]
    fn arms_share_initial_pool() {
        let mut s = Settings::builtin("fleet-high").unwrap();
        s.runs = 2;
        s.iterations = 2;
        s.tree.restarts = 2;
        s.post_eval_replications = 2;
        let res = execute(&ExperimentSpec::from_settings(&s).unwrap()).unwrap();
        for r in 0..2 {
            let pools: Vec<BTreeSet<IntegerPoint>> = res
                .runs
                .iter()
                .map(|arm| {
                    arm[r].result.archive.iter().filter(|(_, o)| o.first_iteration == 0).map(|(x, _)| x.clone()).collect()
                })
                .collect();
            assert!(pools.windows(2).all(|w| w[0] == w[1]));
            assert!(pools[0].contains(res.spec.problem.warm_start.as_ref().unwrap()));
        }
    }

    #[test]
    fn results_are_ordered_and_deterministic() {
        let spec = small(3);
        let a = execute(&spec).unwrap();
        let b = execute(&spec).unwrap();
        for (arm_a, arm_b) in a.runs.iter().zip(&b.runs) {
            for (i, (x, y)) in arm_a.iter().zip(arm_b).enumerate() {
                assert_eq!(x.run, i);
                assert_eq!(x.result.trace_csv("r"), y.result.trace_csv("r"));
                assert_eq!(x.post_eval, y.post_eval);
            }
        }
    }
}
