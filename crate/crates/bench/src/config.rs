//! Experiment settings: built-in presets, flat `key = value` files and
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use esbb_core::{FleetGeometry, TreeConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    Value { key: String, value: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("{0}")]
    Invalid(String),
}

/// Parsed `key = value` lines. `#` starts a comment; blank lines are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    GriewankCentered,
    GriewankShifted,
    Fleet,
}

impl FromStr for ProblemKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "griewank-centered" => Ok(ProblemKind::GriewankCentered),
            "griewank-shifted" => Ok(ProblemKind::GriewankShifted),
            "fleet-synthetic" => Ok(ProblemKind::Fleet),
            _ => Err(()),
        }
    }
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::GriewankCentered => "griewank-centered",
            ProblemKind::GriewankShifted => "griewank-shifted",
            ProblemKind::Fleet => "fleet-synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyName {
    Generic,
    Parallel,
    Hyperplane,
}

impl FromStr for StrategyName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "generic" => Ok(StrategyName::Generic),
            "parallel" => Ok(StrategyName::Parallel),
            "hyperplane" => Ok(StrategyName::Hyperplane),
            _ => Err(()),
        }
    }
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Generic => "generic",
            StrategyName::Parallel => "parallel",
            StrategyName::Hyperplane => "hyperplane",
        }
    }
}

/// Everything needed to build an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub name: String,
    pub problem: ProblemKind,
    pub noise_sigma: f64,
    pub runs: usize,
    pub seed: u64,
    pub n0: usize,
    pub nu_o: usize,
    pub nu_r_total: usize,
    pub dn_first: u64,
    pub dn_again: u64,
    pub iterations: usize,
    pub omega: usize,
    pub tree: TreeConfig,
    pub strategies: Vec<StrategyName>,
    pub post_eval_replications: usize,
    pub warm_start: bool,
    pub geometry: FleetGeometry,
    pub svg: bool,
    pub out: PathBuf,
}

pub const BUILTIN_EXPERIMENTS: [&str; 4] = ["griewank-centered", "griewank-shifted", "fleet-high", "fleet-low"];

impl Settings {
    fn griewank(name: &str, problem: ProblemKind) -> Self {
        Settings {
            name: name.to_string(),
            problem,
            noise_sigma: 0.01,
            runs: 50,
            seed: 2020,
            n0: 10,
            nu_o: 5,
            nu_r_total: 10,
            dn_first: 10,
            dn_again: 2,
            iterations: 40,
            omega: 2,
            tree: TreeConfig { max_depth: 2, min_leaf: 2, restarts: 10 },
            strategies: vec![StrategyName::Generic, StrategyName::Parallel],
            post_eval_replications: 50,
            warm_start: false,
            geometry: FleetGeometry::default(),
            svg: true,
            out: PathBuf::from("results"),
        }
    }

    fn fleet(name: &str, demand_scale: f64) -> Self {
        Settings {
            name: name.to_string(),
            problem: ProblemKind::Fleet,
            noise_sigma: 0.0,
            runs: 5,
            seed: 2020,
            n0: 20,
            nu_o: 10,
            nu_r_total: 20,
            dn_first: 5,
            dn_again: 2,
            iterations: 40,
            omega: 3,
            tree: TreeConfig { max_depth: 2, min_leaf: 2, restarts: 10 },
            strategies: vec![StrategyName::Generic, StrategyName::Parallel, StrategyName::Hyperplane],
            post_eval_replications: 50,
            warm_start: true,
            geometry: FleetGeometry { demand_scale, ..FleetGeometry::default() },
            svg: true,
            out: PathBuf::from("results"),
        }
    }

    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        match name {
            "griewank-centered" => Ok(Self::griewank(name, ProblemKind::GriewankCentered)),
            "griewank-shifted" => Ok(Self::griewank(name, ProblemKind::GriewankShifted)),
            "fleet-high" => Ok(Self::fleet(name, 2.0)),
            "fleet-low" => Ok(Self::fleet(name, 0.5)),
            _ => Err(ConfigError::UnknownExperiment(name.to_string())),
        }
    }

    /// Starts from the preset named by `base` (default `griewank-centered`)
    /// and applies every other key.
    pub fn from_file(file: &ConfigFile) -> Result<Self, ConfigError> {
        let mut s = Self::builtin(file.get("base").unwrap_or("griewank-centered"))?;
        for (key, value) in file.iter() {
            if key != "base" {
                s.set(key, value)?;
            }
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::Value { key: key.to_string(), value: value.to_string() })
        }
        match key {
            "name" => self.name = value.to_string(),
            "problem" => self.problem = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "n0" => self.n0 = parse(key, value)?,
            "nu_o" => self.nu_o = parse(key, value)?,
            "nu_r_total" => self.nu_r_total = parse(key, value)?,
            "dn_first" => self.dn_first = parse(key, value)?,
            "dn_again" => self.dn_again = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "omega" => self.omega = parse(key, value)?,
            "max_depth" => self.tree.max_depth = parse(key, value)?,
            "min_leaf" => self.tree.min_leaf = parse(key, value)?,
            "restarts" => self.tree.restarts = parse(key, value)?,
            "strategies" => {
                self.strategies = value
                    .split(',')
                    .map(|s| parse::<StrategyName>(key, s.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "post_eval_replications" => self.post_eval_replications = parse(key, value)?,
            "warm_start" => self.warm_start = parse(key, value)?,
            "stations" => self.geometry.stations = parse(key, value)?,
            "capacity" => self.geometry.capacity = parse(key, value)?,
            "total_fleet" => self.geometry.total_fleet = parse(key, value)?,
            "area" => self.geometry.area = parse(key, value)?,
            "radius" => self.geometry.radius = parse(key, value)?,
            "demand_per_station" => self.geometry.demand_per_station = parse(key, value)?,
            "demand_scale" => self.geometry.demand_scale = parse(key, value)?,
            "revenue" => self.geometry.revenue = parse(key, value)?,
            "cost_low" => self.geometry.cost_low = parse(key, value)?,
            "cost_high" => self.geometry.cost_high = parse(key, value)?,
            "geometry_seed" => self.geometry.seed = parse(key, value)?,
            "svg" => self.svg = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::Invalid("runs must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::Invalid("at least one strategy is required".into()));
        }
        if self.post_eval_replications < 2 {
            return Err(ConfigError::Invalid("post_eval_replications must be >= 2".into()));
        }
        if self.strategies.contains(&StrategyName::Hyperplane) && self.problem != ProblemKind::Fleet {
            return Err(ConfigError::Invalid("the hyperplane strategy needs station clusters (fleet problem)".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(ConfigError::Invalid("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let f = ConfigFile::parse("# header\nruns = 3\n\n  seed=9   # trailing\nstrategies = generic, parallel\n").unwrap();
        assert_eq!(f.get("runs"), Some("3"));
        assert_eq!(f.get("seed"), Some("9"));
        let s = Settings::from_file(&f).unwrap();
        assert_eq!((s.runs, s.seed), (3, 9));
        assert_eq!(s.strategies, vec![StrategyName::Generic, StrategyName::Parallel]);
        assert_eq!(s.problem, ProblemKind::GriewankCentered);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(ConfigFile::parse("runs 3"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ConfigFile::parse("a=1\na=2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(ConfigFile::parse(" = 2"), Err(ConfigError::Syntax { .. })));
        let f = ConfigFile::parse("nonsense = 1").unwrap();
        assert!(matches!(Settings::from_file(&f), Err(ConfigError::UnknownKey(_))));
        let f = ConfigFile::parse("runs = many").unwrap();
        assert!(matches!(Settings::from_file(&f), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn base_preset() {
        let f = ConfigFile::parse("base = fleet-low\nruns = 2").unwrap();
        let s = Settings::from_file(&f).unwrap();
        assert_eq!(s.problem, ProblemKind::Fleet);
        assert_eq!(s.geometry.demand_scale, 0.5);
        assert_eq!(s.runs, 2);
        assert!(Settings::builtin("nope").is_err());
    }

    #[test]
    fn presets_are_valid() {
        for name in BUILTIN_EXPERIMENTS {
            Settings::builtin(name).unwrap().validate().unwrap();
        }
        let mut s = Settings::builtin("griewank-centered").unwrap();
        s.strategies = vec![StrategyName::Hyperplane];
        assert!(s.validate().is_err());
    }
}
