use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use esbb_bench::{execute, write_outputs, AggregateReport, ConfigFile, ExperimentSpec, Settings, StrategyName};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Generic,
    Parallel,
    Hyperplane,
}

impl From<StrategyArg> for StrategyName {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Generic => StrategyName::Generic,
            StrategyArg::Parallel => StrategyName::Parallel,
            StrategyArg::Hyperplane => StrategyName::Hyperplane,
        }
    }
}

/// Runs a multi-run optimization experiment and writes traces, an aggregate
/// CSV, a summary table and an SVG plot.
#[derive(Debug, Parser)]
#[command(name = "esbb-bench", version)]
struct Cli {
    /// Built-in experiment (griewank-centered, griewank-shifted, fleet-high,
    /// fleet-low) or a `key = value` config file.
    #[arg(long, default_value = "griewank-centered")]
    experiment: String,
    /// Runs per arm.
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to `<out>/<experiment name>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these strategies (repeatable).
    #[arg(long, value_enum)]
    strategy: Vec<StrategyArg>,
    /// Skip the SVG plot.
    #[arg(long)]
    no_svg: bool,
}

fn load(experiment: &str) -> Result<Settings> {
    let path = Path::new(experiment);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file = ConfigFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut s = Settings::from_file(&file)?;
        if file.get("name").is_none() {
            if let Some(stem) = path.file_stem() {
                s.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(s)
    } else {
        Ok(Settings::builtin(experiment)?)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut settings = load(&cli.experiment)?;
    if let Some(r) = cli.runs {
        settings.runs = r;
    }
    if let Some(s) = cli.seed {
        settings.seed = s;
    }
    if let Some(o) = cli.out {
        settings.out = o;
    }
    if !cli.strategy.is_empty() {
        settings.strategies = cli.strategy.into_iter().map(StrategyName::from).collect();
    }
    if cli.no_svg {
        settings.svg = false;
    }
    let spec = ExperimentSpec::from_settings(&settings)?;
    let results = execute(&spec)?;
    let report = AggregateReport::build(&results)?;
    let written = write_outputs(&results, &report)
        .with_context(|| format!("writing results under {}", spec.out_dir.display()))?;
    print!("{}", report.summary_text());
    println!();
    println!(
        "{} runs in {:.1}s, {} files written to {}",
        spec.arms.len() * spec.runs_per_arm,
        results.elapsed.as_secs_f64(),
        written.len(),
        spec.out_dir.join(&spec.name).display()
    );
    Ok(())
}
