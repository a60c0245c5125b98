//! Experiment configuration.
//!
//! Configs are flat `key = value` text files with dotted section keys
//! (`grid.train = 2 2 2`). Every field has a problem-specific default;
//! unknown or duplicate keys are errors. The fully resolved configuration
//! (defaults filled in, plus derived quantities) is echoed into the output
//! directory for provenance, and that echo doubles as the resume guard:
//! re-running against an output directory with a different resolved config
//! is refused.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use romkit::nn::TrainingConfig;
use romkit::{burgers, flame, Error, Result};

use crate::grid::is_nested;

/// Which full-order testbed an experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Burgers,
    Flame,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Burgers => "burgers",
            Problem::Flame => "flame",
        }
    }

    /// Admissible parameter box of the testbed.
    pub fn param_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Problem::Burgers => burgers::PARAM_BOX.to_vec(),
            Problem::Flame => flame::PARAM_BOX.to_vec(),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.param_bounds().len()
    }
}

/// How network regression targets are produced from the snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    /// Project the stored velocity snapshots (no new full-model calls).
    Stored,
    /// Re-evaluate the reduced velocity at the reconstructed projected
    /// state (costs one full-model call per training row).
    Reevaluated,
}

/// Complete description of one benchmark experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Per-axis sample counts of the training grid.
    pub train_counts: Vec<usize>,
    /// Per-axis sample counts of the testing grid (must nest the training
    /// counts).
    pub test_counts: Vec<usize>,
    /// Reduced-basis sizes to evaluate.
    pub k_u: Vec<usize>,
    /// Velocity-interpolation basis size; `None` uses `k_f = k_u`.
    pub k_f: Option<usize>,
    pub hidden_widths: Vec<usize>,
    pub training: TrainingConfig,
    pub target_source: TargetSource,
    /// Time horizon and step count of every trajectory.
    pub t_end: f64,
    pub n_steps: usize,
    /// Burgers mesh size (elements).
    pub burgers_elements: usize,
    /// Flame grid nodes per direction.
    pub flame_nx: usize,
    pub flame_ny: usize,
}

impl ExperimentConfig {
    /// Problem defaults: the published testbed discretizations and the
    /// benchmark network/training settings.
    pub fn default_for(problem: Problem) -> Self {
        let (t_end, n_steps) = match problem {
            Problem::Burgers => (burgers::DEFAULT_T_END, burgers::DEFAULT_N_STEPS),
            Problem::Flame => (flame::DEFAULT_T_END, flame::DEFAULT_N_STEPS),
        };
        // The flame snapshot matrix (16 training trajectories, 50 steps)
        // has numerical rank 46, so the basis-size sweep stays inside it.
        let (train_counts, test_counts, k_u) = match problem {
            Problem::Burgers => (vec![2, 2, 2], vec![5, 5, 5], vec![8]),
            Problem::Flame => (vec![4, 4], vec![7, 7], vec![10, 20, 30, 40]),
        };
        // Interpolating the velocity through fewer modes than the state
        // basis puts the interpolation tier in its fragile regime on the
        // Burgers study, which is what the benchmark compares the network
        // against; the library default (k_f = k_u) stays available through
        // `reduction.k_f`.
        let k_f = match problem {
            Problem::Burgers => Some(4),
            Problem::Flame => None,
        };
        // Benchmark training settings differ from the library defaults:
        // on these small smooth training sets a compact network without
        // dropout generalizes best, and the longer patience matters at
        // the higher learning rate.
        let training = TrainingConfig {
            learning_rate: 3e-3,
            dropout: 0.0,
            patience: 500,
            ..TrainingConfig::default()
        };
        let hidden_widths = match problem {
            Problem::Burgers => vec![150, 150, 150],
            Problem::Flame => vec![200, 200],
        };
        ExperimentConfig {
            problem,
            out_dir: PathBuf::from(format!("out/{}", problem.name())),
            seed: 0,
            train_counts,
            test_counts,
            k_u,
            k_f,
            hidden_widths,
            training,
            target_source: TargetSource::Stored,
            t_end,
            n_steps,
            burgers_elements: burgers::DEFAULT_N_ELEMENTS,
            flame_nx: 40,
            flame_ny: 20,
        }
    }

    /// Burgers study trained on the 2x2x2 corner grid.
    pub fn burgers_experiment_a() -> Self {
        Self::default_for(Problem::Burgers)
    }

    /// Burgers study trained on the denser 3x3x3 grid.
    pub fn burgers_experiment_b() -> Self {
        let mut cfg = Self::default_for(Problem::Burgers);
        cfg.out_dir = PathBuf::from("out/burgers_b");
        cfg.train_counts = vec![3, 3, 3];
        cfg
    }

    /// Flame basis-size sweep on the full 40x20 grid.
    pub fn flame_sweep() -> Self {
        Self::default_for(Problem::Flame)
    }

    /// Reduced flame setup for quick runs: 20x10 grid, 3x3 training and
    /// 5x5 testing parameters, small bases.
    pub fn flame_small() -> Self {
        let mut cfg = Self::default_for(Problem::Flame);
        cfg.out_dir = PathBuf::from("out/flame_small");
        cfg.flame_nx = 20;
        cfg.flame_ny = 10;
        cfg.train_counts = vec![3, 3];
        cfg.test_counts = vec![5, 5];
        // The coarse grid's snapshot matrix has numerical rank under 40,
        // so the reduced profile stays well inside it.
        cfg.k_u = vec![10, 20];
        // A compact network keeps the smoke profile fast; this profile
        // checks pipeline structure, not benchmark-grade accuracy.
        cfg.hidden_widths = vec![64, 64, 64];
        cfg.training.max_epochs = 2000;
        cfg
    }

    /// Full-order state dimension implied by the discretization settings.
    pub fn n_full(&self) -> usize {
        match self.problem {
            Problem::Burgers => self.burgers_elements - 1,
            Problem::Flame => 4 * (self.flame_nx - 2) * (self.flame_ny - 2),
        }
    }

    pub fn n_train_points(&self) -> usize {
        self.train_counts.iter().product()
    }

    pub fn n_test_points(&self) -> usize {
        self.test_counts.iter().product()
    }

    /// Velocity-basis size used with reduced basis size `k_u`.
    pub fn k_f_for(&self, k_u: usize) -> usize {
        self.k_f.unwrap_or(k_u)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.problem.param_dim();
        if self.train_counts.len() != d || self.test_counts.len() != d {
            return Err(Error::InvalidConfig(format!(
                "{} has {} parameters but grids are {:?} / {:?}",
                self.problem.name(),
                d,
                self.train_counts,
                self.test_counts
            )));
        }
        if !is_nested(&self.train_counts, &self.test_counts) {
            return Err(Error::InvalidConfig(format!(
                "training grid {:?} does not nest in testing grid {:?}",
                self.train_counts, self.test_counts
            )));
        }
        if self.k_u.is_empty() || self.k_u.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "reduction.k_u must be a nonempty list of positive sizes, got {:?}",
                self.k_u
            )));
        }
        let mut seen = self.k_u.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.k_u.len() {
            return Err(Error::InvalidConfig(format!(
                "reduction.k_u contains duplicates: {:?}",
                self.k_u
            )));
        }
        if self.k_f == Some(0) {
            return Err(Error::InvalidConfig("reduction.k_f must be positive".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidConfig("network.hidden widths must be positive".into()));
        }
        self.training.validate()?;
        if !(self.t_end > 0.0) || self.n_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "time settings need t_end > 0 and n_steps > 0 (got {}, {})",
                self.t_end, self.n_steps
            )));
        }
        match self.problem {
            Problem::Burgers => {
                if self.burgers_elements < 2 {
                    return Err(Error::InvalidConfig("burgers.elements must be at least 2".into()));
                }
            }
            Problem::Flame => {
                if self.flame_nx < 4 || self.flame_ny < 4 {
                    return Err(Error::InvalidConfig(
                        "flame.nx and flame.ny must be at least 4".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parses a flat dotted-key config text. Defaults come from the
    /// `problem` key, which must therefore appear before it matters:
    /// it is read in a first pass, then every other key overrides.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = key_value_pairs(text)?;
        let problem = match pairs.iter().find(|(k, _)| k == "problem") {
            None => return Err(Error::InvalidConfig("missing required key: problem".into())),
            Some((_, v)) => match v.as_str() {
                "burgers" => Problem::Burgers,
                "flame" => Problem::Flame,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown problem '{other}' (expected burgers or flame)"
                    )))
                }
            },
        };
        let mut cfg = ExperimentConfig::default_for(problem);
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => {} // consumed in the first pass
            "out" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse_scalar(key, value)?,
            "grid.train" => self.train_counts = parse_list(key, value)?,
            "grid.test" => self.test_counts = parse_list(key, value)?,
            "reduction.k_u" => self.k_u = parse_list(key, value)?,
            "reduction.k_f" => self.k_f = Some(parse_scalar(key, value)?),
            "network.hidden" => self.hidden_widths = parse_list(key, value)?,
            "training.learning_rate" => self.training.learning_rate = parse_scalar(key, value)?,
            "training.batch_size" => self.training.batch_size = parse_scalar(key, value)?,
            "training.max_epochs" => self.training.max_epochs = parse_scalar(key, value)?,
            "training.dropout" => self.training.dropout = parse_scalar(key, value)?,
            "training.patience" => self.training.patience = parse_scalar(key, value)?,
            "training.validation_fraction" => {
                self.training.validation_fraction = parse_scalar(key, value)?
            }
            "training.targets" => {
                self.target_source = match value {
                    "stored" => TargetSource::Stored,
                    "reevaluated" => TargetSource::Reevaluated,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "training.targets must be 'stored' or 'reevaluated', got '{other}'"
                        )))
                    }
                }
            }
            "time.t_end" => self.t_end = parse_scalar(key, value)?,
            "time.n_steps" => self.n_steps = parse_scalar(key, value)?,
            "burgers.elements" => self.burgers_elements = parse_scalar(key, value)?,
            "flame.nx" => self.flame_nx = parse_scalar(key, value)?,
            "flame.ny" => self.flame_ny = parse_scalar(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// The fully resolved config as `key = value` lines in a fixed order,
    /// including derived quantities. This is what gets echoed into the
    /// output directory.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, "problem = {}", self.problem.name());
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "grid.train = {}", list(&self.train_counts));
        let _ = writeln!(s, "grid.test = {}", list(&self.test_counts));
        let _ = writeln!(s, "reduction.k_u = {}", list(&self.k_u));
        match self.k_f {
            Some(k) => {
                let _ = writeln!(s, "reduction.k_f = {k}");
            }
            None => {
                let _ = writeln!(s, "reduction.k_f = k_u");
            }
        }
        let _ = writeln!(s, "network.hidden = {}", list(&self.hidden_widths));
        let _ = writeln!(s, "training.learning_rate = {}", self.training.learning_rate);
        let _ = writeln!(s, "training.batch_size = {}", self.training.batch_size);
        let _ = writeln!(s, "training.max_epochs = {}", self.training.max_epochs);
        let _ = writeln!(s, "training.dropout = {}", self.training.dropout);
        let _ = writeln!(s, "training.patience = {}", self.training.patience);
        let _ = writeln!(
            s,
            "training.validation_fraction = {}",
            self.training.validation_fraction
        );
        let _ = writeln!(
            s,
            "training.targets = {}",
            match self.target_source {
                TargetSource::Stored => "stored",
                TargetSource::Reevaluated => "reevaluated",
            }
        );
        let _ = writeln!(s, "time.t_end = {}", self.t_end);
        let _ = writeln!(s, "time.n_steps = {}", self.n_steps);
        match self.problem {
            Problem::Burgers => {
                let _ = writeln!(s, "burgers.elements = {}", self.burgers_elements);
            }
            Problem::Flame => {
                let _ = writeln!(s, "flame.nx = {}", self.flame_nx);
                let _ = writeln!(s, "flame.ny = {}", self.flame_ny);
            }
        }
        let _ = writeln!(s, "derived.n_u = {}", self.n_full());
        let _ = writeln!(s, "derived.n_train_points = {}", self.n_train_points());
        let _ = writeln!(s, "derived.n_test_points = {}", self.n_test_points());
        let _ = writeln!(
            s,
            "derived.n_snapshot_columns = {}",
            self.n_train_points() * self.n_steps
        );
        s
    }
}

/// Splits config text into `(key, value)` pairs: one per line, `#` starts a
/// comment, blank lines ignored, duplicate keys rejected.
fn key_value_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected 'key = value', got '{}'",
                lineno + 1,
                line
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "line {}: empty key or value",
                lineno + 1
            )));
        }
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::InvalidConfig(format!(
                "line {}: duplicate key '{}'",
                lineno + 1,
                key
            )));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::InvalidConfig(format!("key '{key}': cannot parse '{value}'"))
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidConfig(format!("key '{key}': empty list")));
    }
    items.into_iter().map(|s| parse_scalar(key, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_both_problems() {
        for cfg in [
            ExperimentConfig::burgers_experiment_a(),
            ExperimentConfig::burgers_experiment_b(),
            ExperimentConfig::flame_sweep(),
            ExperimentConfig::flame_small(),
        ] {
            cfg.validate().unwrap();
        }
        assert_eq!(ExperimentConfig::burgers_experiment_a().n_full(), 199);
        assert_eq!(ExperimentConfig::flame_sweep().n_full(), 2736);
        assert_eq!(ExperimentConfig::flame_small().n_full(), 576);
        assert_eq!(ExperimentConfig::burgers_experiment_a().n_test_points(), 125);
        assert_eq!(ExperimentConfig::flame_sweep().n_test_points(), 49);
    }

    #[test]
    fn minimal_file_fills_in_defaults() {
        let cfg = ExperimentConfig::parse("problem = burgers\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::burgers_experiment_a());
    }

    #[test]
    fn keys_override_defaults() {
        let text = "\
# a comment line
problem = flame
seed = 42            # trailing comment
grid.train = 3 3
grid.test = 5 5
reduction.k_u = 10, 20
flame.nx = 20
flame.ny = 10
training.max_epochs = 12
training.targets = reevaluated
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.train_counts, vec![3, 3]);
        assert_eq!(cfg.k_u, vec![10, 20]);
        assert_eq!(cfg.flame_nx, 20);
        assert_eq!(cfg.training.max_epochs, 12);
        assert_eq!(cfg.target_source, TargetSource::Reevaluated);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.n_steps, 50);
        assert_eq!(cfg.training.batch_size, 64);
    }

    #[test]
    fn bad_inputs_are_rejected_with_the_offending_key() {
        let text = "problem = burgers\nreduction.qu = 3\n";
        let err = ExperimentConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("reduction.qu"), "{err}");

        assert!(ExperimentConfig::parse("grid.train = 2 2\n").is_err()); // missing problem
        assert!(ExperimentConfig::parse("problem = heat\n").is_err());
        assert!(ExperimentConfig::parse("problem = burgers\nseed = x\n").is_err());
        assert!(ExperimentConfig::parse("problem = burgers\nseed = 1\nseed = 2\n").is_err());
        assert!(ExperimentConfig::parse("problem = burgers\nbroken line\n").is_err());
        // Non-nesting grids fail validation.
        assert!(ExperimentConfig::parse("problem = burgers\ngrid.train = 4 4 4\n").is_err());
        // Wrong parameter dimensionality.
        assert!(ExperimentConfig::parse("problem = flame\ngrid.train = 2 2 2\n").is_err());
    }

    #[test]
    fn resolved_text_round_trips_through_the_parser() {
        let mut cfg = ExperimentConfig::flame_small();
        cfg.seed = 7;
        cfg.training.max_epochs = 33;
        let echoed = cfg.resolved_text();
        // `reduction.k_f = k_u` is the explicit "mirror k_u" marker; the
        // parser doesn't read it back, so drop that line for the round trip.
        let without_kf: String = echoed
            .lines()
            .filter(|l| !l.starts_with("reduction.k_f") && !l.starts_with("derived."))
            .map(|l| format!("{l}\n"))
            .collect();
        let back = ExperimentConfig::parse(&without_kf).unwrap();
        assert_eq!(back, cfg);
        // Derived values are present in the echo.
        assert!(echoed.contains("derived.n_u = 576"));
        assert!(echoed.contains("derived.n_snapshot_columns = 450"));
    }
}
