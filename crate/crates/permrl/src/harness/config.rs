//! Flat key=value experiment configuration with dotted section prefixes.
//!
//! Every value is settable from a config file or a CLI override, and a
//! run's effective configuration round-trips through [`ExperimentConfig::to_kv`]
//! into the output directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::envs::prices::PriceGenConfig;
use crate::error::{Error, Result};
use crate::trainer::{TrainMode, TrainerConfig};

/// Parses the flat `key=value` text format: one pair per line, `#` comments
/// and blank lines ignored, later duplicates overriding earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticExperimentConfig {
    pub entity_count: usize,
    /// Center of the entropy-weight spread; weights live in
    /// [center - eps/2, center + eps/2].
    pub beta_center: f64,
    pub noise_std: f64,
    /// Dataset sizes for the real-N curve.
    pub n_grid: Vec<usize>,
    /// Misspecification sweep for the gap curve.
    pub eps_grid: Vec<f64>,
    /// Real examples behind every augmented dataset.
    pub real_base: usize,
    pub action_count: usize,
    pub eval_states: usize,
    pub discount: f64,
    pub v_max: f64,
    pub lspi_iterations: usize,
}

impl Default for SyntheticExperimentConfig {
    fn default() -> Self {
        SyntheticExperimentConfig {
            entity_count: 10,
            beta_center: 0.5,
            noise_std: 0.01,
            n_grid: vec![20, 50, 100, 200, 500, 1000, 2000],
            eps_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            real_base: 20,
            action_count: 64,
            eval_states: 10_000,
            discount: 0.9,
            v_max: 50.0,
            lspi_iterations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioExperimentConfig {
    pub window: usize,
    pub commission_rate: f64,
    /// Training universe size; instruments beyond it are the out-of-sample
    /// pool.
    pub universe: usize,
    pub task_size: usize,
    pub task_count: usize,
    /// Out-of-sample evaluation task count.
    pub eval_tasks: usize,
    /// Periods reserved for training; the remainder is the held-out split.
    pub train_periods: usize,
    /// Optional OHLC CSV; generated prices are used when absent.
    pub prices: Option<PathBuf>,
    pub hidden_size: usize,
    pub init_scale: f64,
    /// Trained conditions as (mode, task count) pairs; `--mode`/`--tasks`
    /// collapse this to a single entry.
    pub conditions: Vec<(TrainMode, usize)>,
    /// Scale `trainer.steps`/`trainer.epoch_steps` by each condition's task
    /// count, so every condition gets the same per-task update budget and an
    /// epoch means the same thing across task counts.
    pub scale_steps: bool,
}

impl Default for PortfolioExperimentConfig {
    fn default() -> Self {
        PortfolioExperimentConfig {
            window: 30,
            commission_rate: 0.0025,
            universe: 50,
            task_size: 10,
            task_count: 30,
            eval_tasks: 10,
            train_periods: 1500,
            prices: None,
            hidden_size: 25,
            init_scale: 1e-2,
            conditions: vec![
                (TrainMode::Stl, 1),
                (TrainMode::MtlUniform, 30),
                (TrainMode::Pmtl, 5),
                (TrainMode::Pmtl, 30),
            ],
            scale_steps: false,
        }
    }
}

/// The single condition selected by CLI `--mode`/`--tasks` overrides.
pub fn condition_for_cli(cfg: &ExperimentConfig) -> (TrainMode, usize) {
    let tasks = if cfg.trainer.mode == TrainMode::Stl {
        1
    } else {
        cfg.portfolio.task_count
    };
    (cfg.trainer.mode, tasks)
}

pub fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Stl => "stl",
        TrainMode::MtlUniform => "mtl-uniform",
        TrainMode::Pmtl => "p-mtl",
    }
}

fn parse_conditions(key: &str, value: &str) -> Result<Vec<(TrainMode, usize)>> {
    value
        .split(',')
        .map(|entry| {
            let (mode, tasks) = entry.trim().split_once(':').ok_or_else(|| {
                Error::Config(format!(
                    "invalid condition '{entry}' for key '{key}', expected mode:tasks"
                ))
            })?;
            Ok((mode.parse()?, parse_num(key, tasks)?))
        })
        .collect()
}

fn fmt_conditions(conditions: &[(TrainMode, usize)]) -> String {
    conditions
        .iter()
        .map(|&(m, t)| format!("{}:{t}", mode_name(m)))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub priority_exponent: f64,
    pub is_exponent: f64,
    pub smoothing: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            priority_exponent: 0.5,
            is_exponent: 1.0,
            smoothing: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Base seed; seed s of `seeds` runs uses `seed + s`.
    pub seed: u64,
    pub seeds: usize,
    pub out: PathBuf,
    pub trainer: TrainerConfig,
    pub sampler: SamplerConfig,
    pub synthetic: SyntheticExperimentConfig,
    pub portfolio: PortfolioExperimentConfig,
    pub prices: PriceGenConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            seeds: 10,
            out: PathBuf::from("out"),
            trainer: TrainerConfig::default(),
            sampler: SamplerConfig::default(),
            synthetic: SyntheticExperimentConfig::default(),
            portfolio: PortfolioExperimentConfig::default(),
            prices: PriceGenConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value '{value}' for key '{key}', expected true|false"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect()
}

fn fmt_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies a single dotted-key override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "seeds" => self.seeds = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),

            "trainer.mode" => self.trainer.mode = value.parse()?,
            "trainer.learning_rate" => self.trainer.learning_rate = parse_num(key, value)?,
            "trainer.minibatch" => self.trainer.minibatch_size = parse_num(key, value)?,
            "trainer.rollout_chunk" => self.trainer.rollout_chunk = parse_num(key, value)?,
            "trainer.steps" => self.trainer.total_steps = parse_num(key, value)?,
            "trainer.discount" => self.trainer.discount = parse_num(key, value)?,
            "trainer.exploration" => self.trainer.exploration_rate = parse_num(key, value)?,
            "trainer.p_geo" => self.trainer.p_geo = parse_num(key, value)?,
            "trainer.epoch_steps" => self.trainer.epoch_steps = parse_num(key, value)?,
            "trainer.mean_scorer" => self.trainer.mean_scorer = parse_bool(key, value)?,

            "sampler.alpha" => self.sampler.priority_exponent = parse_num(key, value)?,
            "sampler.beta" => self.sampler.is_exponent = parse_num(key, value)?,
            "sampler.smoothing" => self.sampler.smoothing = parse_num(key, value)?,

            "synthetic.m" => self.synthetic.entity_count = parse_num(key, value)?,
            "synthetic.beta_center" => self.synthetic.beta_center = parse_num(key, value)?,
            "synthetic.noise" => self.synthetic.noise_std = parse_num(key, value)?,
            "synthetic.n_grid" => self.synthetic.n_grid = parse_list(key, value)?,
            "synthetic.eps_grid" => self.synthetic.eps_grid = parse_list(key, value)?,
            "synthetic.real_base" => self.synthetic.real_base = parse_num(key, value)?,
            "synthetic.actions" => self.synthetic.action_count = parse_num(key, value)?,
            "synthetic.eval_states" => self.synthetic.eval_states = parse_num(key, value)?,
            "synthetic.discount" => self.synthetic.discount = parse_num(key, value)?,
            "synthetic.v_max" => self.synthetic.v_max = parse_num(key, value)?,
            "synthetic.lspi_iterations" => {
                self.synthetic.lspi_iterations = parse_num(key, value)?
            }

            "portfolio.window" => self.portfolio.window = parse_num(key, value)?,
            "portfolio.commission" => self.portfolio.commission_rate = parse_num(key, value)?,
            "portfolio.universe" => self.portfolio.universe = parse_num(key, value)?,
            "portfolio.task_size" => self.portfolio.task_size = parse_num(key, value)?,
            "portfolio.tasks" => self.portfolio.task_count = parse_num(key, value)?,
            "portfolio.eval_tasks" => self.portfolio.eval_tasks = parse_num(key, value)?,
            "portfolio.train_periods" => self.portfolio.train_periods = parse_num(key, value)?,
            "portfolio.prices" => {
                self.portfolio.prices = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "portfolio.hidden" => self.portfolio.hidden_size = parse_num(key, value)?,
            "portfolio.init_scale" => self.portfolio.init_scale = parse_num(key, value)?,
            "portfolio.scale_steps" => self.portfolio.scale_steps = parse_bool(key, value)?,
            "portfolio.conditions" => self.portfolio.conditions = parse_conditions(key, value)?,

            "prices.instruments" => self.prices.instruments = parse_num(key, value)?,
            "prices.periods" => self.prices.periods = parse_num(key, value)?,
            "prices.seed" => self.prices.seed = parse_num(key, value)?,
            "prices.drift_mean" => self.prices.drift_mean = parse_num(key, value)?,
            "prices.drift_spread" => self.prices.drift_spread = parse_num(key, value)?,
            "prices.vol_mean" => self.prices.vol_mean = parse_num(key, value)?,
            "prices.vol_spread" => self.prices.vol_spread = parse_num(key, value)?,
            "prices.factors" => self.prices.factors = parse_num(key, value)?,
            "prices.factor_persistence" => {
                self.prices.factor_persistence = parse_num(key, value)?
            }
            "prices.factor_scale" => self.prices.factor_scale = parse_num(key, value)?,
            "prices.intraday_spread" => self.prices.intraday_spread = parse_num(key, value)?,

            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Builds a config by layering a parsed map over the defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in map {
            cfg.apply(k, v)?;
        }
        Ok(cfg)
    }

    /// Serializes every setting back into the flat key=value format.
    pub fn to_kv(&self) -> String {
        let mode = mode_name(self.trainer.mode);
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("seed", self.seed.to_string());
        push("seeds", self.seeds.to_string());
        push("out", self.out.display().to_string());

        push("trainer.mode", mode.to_string());
        push("trainer.learning_rate", self.trainer.learning_rate.to_string());
        push("trainer.minibatch", self.trainer.minibatch_size.to_string());
        push("trainer.rollout_chunk", self.trainer.rollout_chunk.to_string());
        push("trainer.steps", self.trainer.total_steps.to_string());
        push("trainer.discount", self.trainer.discount.to_string());
        push("trainer.exploration", self.trainer.exploration_rate.to_string());
        push("trainer.p_geo", self.trainer.p_geo.to_string());
        push("trainer.epoch_steps", self.trainer.epoch_steps.to_string());
        push("trainer.mean_scorer", self.trainer.mean_scorer.to_string());

        push("sampler.alpha", self.sampler.priority_exponent.to_string());
        push("sampler.beta", self.sampler.is_exponent.to_string());
        push("sampler.smoothing", self.sampler.smoothing.to_string());

        push("synthetic.m", self.synthetic.entity_count.to_string());
        push("synthetic.beta_center", self.synthetic.beta_center.to_string());
        push("synthetic.noise", self.synthetic.noise_std.to_string());
        push("synthetic.n_grid", fmt_list(&self.synthetic.n_grid));
        push("synthetic.eps_grid", fmt_list(&self.synthetic.eps_grid));
        push("synthetic.real_base", self.synthetic.real_base.to_string());
        push("synthetic.actions", self.synthetic.action_count.to_string());
        push("synthetic.eval_states", self.synthetic.eval_states.to_string());
        push("synthetic.discount", self.synthetic.discount.to_string());
        push("synthetic.v_max", self.synthetic.v_max.to_string());
        push(
            "synthetic.lspi_iterations",
            self.synthetic.lspi_iterations.to_string(),
        );

        push("portfolio.window", self.portfolio.window.to_string());
        push("portfolio.commission", self.portfolio.commission_rate.to_string());
        push("portfolio.universe", self.portfolio.universe.to_string());
        push("portfolio.task_size", self.portfolio.task_size.to_string());
        push("portfolio.tasks", self.portfolio.task_count.to_string());
        push("portfolio.eval_tasks", self.portfolio.eval_tasks.to_string());
        push(
            "portfolio.train_periods",
            self.portfolio.train_periods.to_string(),
        );
        push(
            "portfolio.prices",
            self.portfolio
                .prices
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        push("portfolio.hidden", self.portfolio.hidden_size.to_string());
        push("portfolio.init_scale", self.portfolio.init_scale.to_string());
        push("portfolio.scale_steps", self.portfolio.scale_steps.to_string());
        push(
            "portfolio.conditions",
            fmt_conditions(&self.portfolio.conditions),
        );

        push("prices.instruments", self.prices.instruments.to_string());
        push("prices.periods", self.prices.periods.to_string());
        push("prices.seed", self.prices.seed.to_string());
        push("prices.drift_mean", self.prices.drift_mean.to_string());
        push("prices.drift_spread", self.prices.drift_spread.to_string());
        push("prices.vol_mean", self.prices.vol_mean.to_string());
        push("prices.vol_spread", self.prices.vol_spread.to_string());
        push("prices.factors", self.prices.factors.to_string());
        push(
            "prices.factor_persistence",
            self.prices.factor_persistence.to_string(),
        );
        push("prices.factor_scale", self.prices.factor_scale.to_string());
        push(
            "prices.intraday_spread",
            self.prices.intraday_spread.to_string(),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let map = parse_kv("# header\n\nseed = 7\ntrainer.steps=100\n").unwrap();
        assert_eq!(map["seed"], "7");
        assert_eq!(map["trainer.steps"], "100");
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn missing_equals_is_a_config_error() {
        let err = parse_kv("seed 7").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::default();
        let err = cfg.apply("trainer.lr", "0.1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_number_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply("seed", "x").is_err());
        assert!(cfg.apply("synthetic.n_grid", "20,,50").is_err());
    }

    #[test]
    fn round_trip_through_kv() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply("seed", "42").unwrap();
        cfg.apply("trainer.mode", "mtl-uniform").unwrap();
        cfg.apply("synthetic.n_grid", "20,100,400").unwrap();
        cfg.apply("portfolio.prices", "data/p.csv").unwrap();
        let echoed = cfg.to_kv();
        let reparsed = ExperimentConfig::from_map(&parse_kv(&echoed).unwrap()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn later_duplicate_wins() {
        let map = parse_kv("seed=1\nseed=2\n").unwrap();
        assert_eq!(map["seed"], "2");
    }
}
