//! Aggregation across runs and the files written for an experiment.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use esbb_core::stats::{mean, mean_ci, sample_variance, welch_one_sided};
use esbb_core::{EsbbError, IntegerPoint};

use crate::experiment::{hit_rate, ExperimentResults};
use crate::svg;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    pub mean: f64,
    /// Half width of the 95% t interval over runs; NaN with a single run.
    pub half_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub name: String,
    pub runs: usize,
    pub mean_final_estimate: f64,
    pub mean_final_true: Option<f64>,
    pub sd_final_true: Option<f64>,
    pub mean_post_eval: f64,
    pub mean_sim_calls: f64,
    pub exact_hits: Option<usize>,
    pub indifferent_hits: Option<usize>,
}

/// One-sided Welch p-values, entry `[i][j]` testing run `i` of `row_arm`
/// better than run `j` of `col_arm` on their post-evaluation samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PValueMatrix {
    pub row_arm: String,
    pub col_arm: String,
    pub values: Vec<Vec<f64>>,
}

/// Welch test of `better` over `worse` on the pooled final true values.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmComparison {
    pub better: String,
    pub worse: String,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReport {
    pub experiment: String,
    pub problem: String,
    pub runs_per_arm: usize,
    pub post_eval_replications: usize,
    pub optimum: Option<(IntegerPoint, f64)>,
    pub minimizes: bool,
    pub arms: Vec<ArmSummary>,
    pub curves: Vec<Vec<CurvePoint>>,
    pub matrices: Vec<PValueMatrix>,
    pub comparisons: Vec<ArmComparison>,
}

/// p-value for "`row` is better than `col`".
pub fn p_better(row: &[f64], col: &[f64], minimizes: bool) -> Result<f64, EsbbError> {
    let r = if minimizes { welch_one_sided(row, col)? } else { welch_one_sided(col, row)? };
    Ok(r.p_value_one_sided)
}

fn curve(traces: &[&[esbb_core::IterationRecord]]) -> Result<Vec<CurvePoint>, EsbbError> {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let values: Vec<f64> = traces.iter().filter_map(|t| t.get(i)).map(|r| r.incumbent_mean).collect();
        let iteration = traces.iter().find_map(|t| t.get(i)).map_or(i as u64, |r| r.iteration);
        let (m, h) = if values.len() >= 2 { mean_ci(&values, 0.95)? } else { (mean(&values), f64::NAN) };
        out.push(CurvePoint { iteration, mean: m, half_width: h });
    }
    Ok(out)
}

impl AggregateReport {
    pub fn build(results: &ExperimentResults) -> Result<Self, EsbbError> {
        let spec = &results.spec;
        let minimizes = spec.problem.minimizes();
        let mut arms = Vec::new();
        let mut curves = Vec::new();
        for (a, runs) in results.runs.iter().enumerate() {
            let traces: Vec<&[esbb_core::IterationRecord]> = runs.iter().map(|r| r.result.trace.as_slice()).collect();
            curves.push(curve(&traces)?);
            let finals: Vec<IntegerPoint> = runs.iter().map(|r| r.result.final_point.clone()).collect();
            let post: Vec<Vec<f64>> = runs.iter().map(|r| r.post_eval.clone()).collect();
            let truths: Option<Vec<f64>> = runs.iter().map(|r| r.true_final).collect();
            let hits = match &spec.problem.optimum {
                Some((x, v)) => Some(hit_rate(&finals, &post, x, *v)?),
                None => None,
            };
            arms.push(ArmSummary {
                name: spec.arms[a].name.clone(),
                runs: runs.len(),
                mean_final_estimate: mean(&runs.iter().map(|r| r.result.final_mean).collect::<Vec<_>>()),
                mean_final_true: truths.as_ref().map(|t| mean(t)),
                sd_final_true: truths.as_ref().filter(|t| t.len() >= 2).map(|t| sample_variance(t).sqrt()),
                mean_post_eval: mean(&post.iter().map(|p| mean(p)).collect::<Vec<_>>()),
                mean_sim_calls: mean(&runs.iter().map(|r| r.result.oracle_calls as f64).collect::<Vec<_>>()),
                exact_hits: hits.map(|h| h.0),
                indifferent_hits: hits.map(|h| h.1),
            });
        }
        let mut matrices = Vec::new();
        let mut comparisons = Vec::new();
        for col in 0..results.runs.len() {
            for row in col + 1..results.runs.len() {
                let values = results.runs[row]
                    .iter()
                    .map(|r| {
                        results.runs[col].iter().map(|c| p_better(&r.post_eval, &c.post_eval, minimizes)).collect()
                    })
                    .collect::<Result<Vec<Vec<f64>>, _>>()?;
                matrices.push(PValueMatrix {
                    row_arm: spec.arms[row].name.clone(),
                    col_arm: spec.arms[col].name.clone(),
                    values,
                });
                let pooled = |a: usize| -> Vec<f64> {
                    results.runs[a]
                        .iter()
                        .map(|r| r.true_final.unwrap_or_else(|| mean(&r.post_eval)))
                        .collect()
                };
                if results.runs[row].len() >= 2 && results.runs[col].len() >= 2 {
                    comparisons.push(ArmComparison {
                        better: spec.arms[row].name.clone(),
                        worse: spec.arms[col].name.clone(),
                        p_value: p_better(&pooled(row), &pooled(col), minimizes)?,
                    });
                }
            }
        }
        Ok(AggregateReport {
            experiment: spec.name.clone(),
            problem: spec.problem_label.clone(),
            runs_per_arm: spec.runs_per_arm,
            post_eval_replications: spec.post_eval_replications,
            optimum: spec.problem.optimum.clone(),
            minimizes,
            arms,
            curves,
            matrices,
            comparisons,
        })
    }

    pub fn aggregate_csv(&self) -> String {
        let mut s = String::from("iteration,arm,mean_incumbent,ci_half_width\n");
        for (arm, curve) in self.arms.iter().zip(&self.curves) {
            for p in curve {
                let _ = writeln!(s, "{},{},{},{}", p.iteration, arm.name, p.mean, p.half_width);
            }
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.experiment);
        let _ = writeln!(
            s,
            "problem: {} ({})",
            self.problem,
            if self.minimizes { "minimize" } else { "maximize" }
        );
        let _ = writeln!(
            s,
            "runs per arm: {}, post-evaluation replications: {}",
            self.runs_per_arm, self.post_eval_replications
        );
        if let Some((x, v)) = &self.optimum {
            let _ = writeln!(s, "optimum: ({x}) value {v:.6}");
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<12}{:>6}{:>16}{:>16}{:>14}{:>16}{:>12}{:>14}",
            "arm", "runs", "final_estimate", "final_true", "final_true_sd", "post_eval_mean", "exact_hits", "indiff_hits"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        let hits = |h: Option<usize>, n: usize| h.map_or("-".to_string(), |h| format!("{h}/{n}"));
        for a in &self.arms {
            let _ = writeln!(
                s,
                "{:<12}{:>6}{:>16.6}{:>16}{:>14}{:>16.6}{:>12}{:>14}",
                a.name,
                a.runs,
                a.mean_final_estimate,
                opt(a.mean_final_true),
                opt(a.sd_final_true),
                a.mean_post_eval,
                hits(a.exact_hits, a.runs),
                hits(a.indifferent_hits, a.runs)
            );
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "one-sided Welch test on final true values");
            for c in &self.comparisons {
                let _ = writeln!(s, "  {} better than {}: p = {:.6}", c.better, c.worse, c.p_value);
            }
        }
        for m in &self.matrices {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "p-values of one-sided Welch tests on post-evaluation samples: {} run (row) better than {} run (column)",
                m.row_arm, m.col_arm
            );
            let cols = m.values.first().map_or(0, Vec::len);
            let _ = write!(s, "{:>6}", "");
            for j in 0..cols {
                let _ = write!(s, "{:>8}", j + 1);
            }
            let _ = writeln!(s);
            for (i, row) in m.values.iter().enumerate() {
                let _ = write!(s, "{:>6}", i + 1);
                for p in row {
                    let _ = write!(s, "{p:>8.4}");
                }
                let _ = writeln!(s);
            }
        }
        s
    }
}

/// Writes traces, the aggregate CSV, the summary and (optionally) the SVG
/// into `<out_dir>/<experiment name>/`. Returns the written paths.
pub fn write_outputs(results: &ExperimentResults, report: &AggregateReport) -> io::Result<Vec<PathBuf>> {
    let spec = &results.spec;
    let dir = spec.out_dir.join(&spec.name);
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, body: &str| -> io::Result<()> {
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    for (a, runs) in results.runs.iter().enumerate() {
        let name = &spec.arms[a].name;
        for rec in runs {
            let id = rec.run_id(name);
            put(traces.join(format!("{id}.csv")), &rec.result.trace_csv(&id))?;
        }
    }
    put(dir.join("aggregate.csv"), &report.aggregate_csv())?;
    put(dir.join("summary.txt"), &report.summary_text())?;
    if spec.svg {
        let series: Vec<(&str, &[CurvePoint])> =
            report.arms.iter().zip(&report.curves).map(|(a, c)| (a.name.as_str(), c.as_slice())).collect();
        let title = format!("{}: mean incumbent value with 95% band", spec.name);
        put(dir.join(format!("{}.svg", spec.name)), &svg::line_plot(&title, &series))?;
    }
    Ok(written)
}

/// Files under `dir`, recursively, as sorted relative paths.
pub fn list_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap_or(&path).to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Settings;
    use crate::experiment::{execute, ExperimentSpec};

    fn results() -> ExperimentResults {
        let mut s = Settings::builtin("griewank-shifted").unwrap();
        s.runs = 4;
        s.iterations = 6;
        s.post_eval_replications = 5;
        execute(&ExperimentSpec::from_settings(&s).unwrap()).unwrap()
    }

    #[test]
    fn curves_are_exact_means_of_traces() {
        let res = results();
        let report = AggregateReport::build(&res).unwrap();
        let csv = report.aggregate_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,arm,mean_incumbent,ci_half_width"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 2 * 7);
        for row in rows {
            let it: usize = row[0].parse().unwrap();
            let arm = res.spec.arms.iter().position(|a| a.name == row[1]).unwrap();
            let from_traces: Vec<f64> = res.runs[arm]
                .iter()
                .map(|r| {
                    let csv = r.result.trace_csv("x");
                    let line = csv.lines().nth(it + 1).unwrap().to_string();
                    line.split(',').nth(3).unwrap().parse::<f64>().unwrap()
                })
                .collect();
            let m: f64 = row[2].parse().unwrap();
            assert_eq!(m, mean(&from_traces));
            let h: f64 = row[3].parse().unwrap();
            assert_eq!(h, mean_ci(&from_traces, 0.95).unwrap().1);
        }
    }

    #[test]
    fn summary_layout() {
        let res = results();
        let report = AggregateReport::build(&res).unwrap();
        assert_eq!(report.matrices.len(), 1);
        let m = &report.matrices[0];
        assert_eq!((m.row_arm.as_str(), m.col_arm.as_str()), ("parallel", "generic"));
        assert_eq!(m.values.len(), 4);
        assert!(m.values.iter().all(|r| r.len() == 4 && r.iter().all(|p| (0.0..=1.0).contains(p))));
        let text = report.summary_text();
        assert!(text.contains("optimum: ("));
        assert!(text.contains("parallel better than generic"));
        assert!(report.arms[0].exact_hits.is_some());
    }

    #[test]
    fn p_better_direction() {
        let low = [1.0, 1.1, 0.9, 1.05];
        let high = [2.0, 2.1, 1.9, 2.05];
        assert!(p_better(&low, &high, true).unwrap() < 0.01);
        assert!(p_better(&low, &high, false).unwrap() > 0.99);
        assert!(p_better(&high, &low, false).unwrap() < 0.01);
    }

    #[test]
    fn single_run_band_is_nan() {
        let c = curve(&[&[]]).unwrap();
        assert!(c.is_empty());
        let mut s = Settings::builtin("griewank-centered").unwrap();
        s.runs = 1;
        s.iterations = 2;
        s.post_eval_replications = 2;
        let res = execute(&ExperimentSpec::from_settings(&s).unwrap()).unwrap();
        let report = AggregateReport::build(&res).unwrap();
        assert!(report.curves[0].iter().all(|p| p.half_width.is_nan()));
        assert!(report.comparisons.is_empty());
    }
}
