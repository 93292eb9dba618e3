//! Training loop: prioritized task selection, IS-weighted minibatch policy
//! gradients, and rollouts into per-task replay buffers.
//!
//! The three modes are one code path: MTL-uniform is the prioritized loop
//! with the priority exponent forced to zero, and STL is the prioritized
//! loop with a single task. This keeps their trajectories bit-identical
//! under shared seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::portfolio::{
    portfolio_reward_with_grad, portfolio_state, portfolio_weights_drift, scorer_deviation,
    scorer_deviation_mean, PortfolioConfig,
};
use crate::envs::prices::PriceSeries;
use crate::envs::synthetic::{
    dirichlet_flat, draw_state, synthetic_reward, synthetic_reward_grad, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::policy::{backward, forward, PolicyParams, StateLayout};
use crate::replay::Transition;
use crate::sampler::SamplerState;
use crate::simplex::{uniform_allocation, Allocation};
use crate::state::StateMatrix;
use crate::task::Task;

/// Trading periods per year, used to annualize mean daily log-returns.
pub const PERIODS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Stl,
    MtlUniform,
    Pmtl,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stl" => Ok(TrainMode::Stl),
            "mtl-uniform" | "mtl" => Ok(TrainMode::MtlUniform),
            "p-mtl" | "pmtl" => Ok(TrainMode::Pmtl),
            other => Err(Error::Config(format!(
                "unknown mode '{other}', expected stl | mtl-uniform | p-mtl"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    /// Environment steps rolled out per loop iteration (n_e).
    pub rollout_chunk: usize,
    pub total_steps: usize,
    /// Retained for objective bookkeeping; the minibatch objective itself is
    /// the undiscounted mean.
    pub discount: f64,
    pub seed: u64,
    /// Dirichlet mixing rate applied to rollout actions only.
    pub exploration_rate: f64,
    /// Recency parameter of the geometric minibatch-start distribution.
    pub p_geo: f64,
    /// Steps per reporting epoch.
    pub epoch_steps: usize,
    /// Use the mean-deviation scorer variant instead of the max.
    pub mean_scorer: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            mode: TrainMode::Pmtl,
            learning_rate: 3e-4,
            minibatch_size: 50,
            rollout_chunk: 50,
            total_steps: 1500,
            discount: 0.99,
            seed: 0,
            exploration_rate: 0.05,
            p_geo: 0.01,
            epoch_steps: 1500,
            mean_scorer: false,
        }
    }
}

/// An environment hosting one allocation task family.
pub trait TaskEnv {
    fn layout(&self) -> StateLayout;

    /// Episode length N; cursors run 1..=N.
    fn episode_length(&self) -> usize;

    /// Whether minibatch starts are recency-biased (geometric) or uniform.
    fn recency_biased(&self) -> bool;

    /// State observed at cursor `n` given carried end-of-period weights.
    fn observe(
        &self,
        task: &Task,
        n: usize,
        w_prev: &Allocation,
        rng: &mut ChaCha8Rng,
    ) -> Result<StateMatrix>;

    /// Executes `action` at cursor `n` against observed state `x`; returns
    /// the realized reward and the weights carried into the next period.
    fn step(
        &self,
        task: &Task,
        n: usize,
        x: &StateMatrix,
        w_prev: &Allocation,
        action: &Allocation,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Allocation)>;

    /// Differentiable reward of a fresh action at a stored transition.
    fn objective(
        &self,
        task: &Task,
        transition: &Transition,
        action: &Allocation,
    ) -> Result<(f64, Vec<f64>)>;
}

/// Portfolio environment over one period slice of a price series.
pub struct PortfolioEnv {
    pub series: PriceSeries,
    pub config: PortfolioConfig,
}

impl PortfolioEnv {
    pub fn new(series: PriceSeries, config: PortfolioConfig) -> Result<Self> {
        let needed = config.window + 2;
        if series.periods() < needed {
            return Err(Error::InsufficientData(format!(
                "series has {} periods, need at least {needed} for window {}",
                series.periods(),
                config.window
            )));
        }
        Ok(PortfolioEnv { series, config })
    }

    /// Period index backing cursor `n`.
    fn period(&self, n: usize) -> usize {
        self.config.window + n - 1
    }

    /// Close-price ratios over the task's entities for cursor `n`.
    fn ratios(&self, task: &Task, n: usize) -> Vec<f64> {
        let p = self.period(n);
        task.entities
            .iter()
            .map(|&e| self.series.close[p][e] / self.series.close[p - 1][e])
            .collect()
    }

    fn gather(&self, mat: &[Vec<f64>], task: &Task) -> Vec<Vec<f64>> {
        mat.iter()
            .map(|row| task.entities.iter().map(|&e| row[e]).collect())
            .collect()
    }
}

impl TaskEnv for PortfolioEnv {
    fn layout(&self) -> StateLayout {
        StateLayout {
            has_prev_weight: true,
            channels: 3,
            steps: self.config.window - 1,
        }
    }

    fn episode_length(&self) -> usize {
        self.series.periods() - self.config.window - 1
    }

    fn recency_biased(&self) -> bool {
        true
    }

    fn observe(
        &self,
        task: &Task,
        n: usize,
        w_prev: &Allocation,
        _rng: &mut ChaCha8Rng,
    ) -> Result<StateMatrix> {
        let p = self.period(n);
        let lo = p - self.config.window;
        let close = self.gather(&self.series.close[lo..p], task);
        let high = self.gather(&self.series.high[lo..p], task);
        let low = self.gather(&self.series.low[lo..p], task);
        portfolio_state(&close, &high, &low, self.config.window, w_prev, self.config.window)
    }

    fn step(
        &self,
        task: &Task,
        n: usize,
        _x: &StateMatrix,
        w_prev: &Allocation,
        action: &Allocation,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Allocation)> {
        let y = self.ratios(task, n);
        let reward = crate::envs::portfolio::portfolio_reward(
            w_prev,
            action,
            &y,
            self.config.commission_rate,
        )?;
        let drifted = portfolio_weights_drift(action, &y)?;
        Ok((reward, drifted))
    }

    fn objective(
        &self,
        task: &Task,
        transition: &Transition,
        action: &Allocation,
    ) -> Result<(f64, Vec<f64>)> {
        let w_prev = Allocation::from_unnormalized(
            transition.state.rows().iter().map(|r| r[0].max(0.0)).collect(),
        )?;
        let y = self.ratios(task, transition.time_index);
        portfolio_reward_with_grad(&w_prev, action, &y, self.config.commission_rate)
    }
}

/// Synthetic entropy-regularized environment; states are drawn i.i.d. per
/// observation, so the rollout rng is part of the environment dynamics.
pub struct SyntheticEnv {
    /// Entropy weight per global-universe entity.
    pub global_weights: Vec<f64>,
    pub noise_std: f64,
    pub episode_length: usize,
}

impl SyntheticEnv {
    fn task_config(&self, task: &Task) -> Result<SyntheticConfig> {
        SyntheticConfig::new(
            task.entities
                .iter()
                .map(|&e| self.global_weights[e])
                .collect(),
            self.noise_std,
        )
    }

    fn state_vector(x: &StateMatrix) -> Vec<f64> {
        x.rows().iter().map(|r| r[0]).collect()
    }
}

impl TaskEnv for SyntheticEnv {
    fn layout(&self) -> StateLayout {
        StateLayout {
            has_prev_weight: false,
            channels: 1,
            steps: 1,
        }
    }

    fn episode_length(&self) -> usize {
        self.episode_length
    }

    fn recency_biased(&self) -> bool {
        false
    }

    fn observe(
        &self,
        task: &Task,
        _n: usize,
        _w_prev: &Allocation,
        rng: &mut ChaCha8Rng,
    ) -> Result<StateMatrix> {
        StateMatrix::new(
            draw_state(task.entity_count(), rng)
                .into_iter()
                .map(|v| vec![v])
                .collect(),
        )
    }

    fn step(
        &self,
        task: &Task,
        _n: usize,
        x: &StateMatrix,
        w_prev: &Allocation,
        action: &Allocation,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Allocation)> {
        // The carried weights are irrelevant here; the state is i.i.d.
        let _ = w_prev;
        let cfg = self.task_config(task)?;
        let x = SyntheticEnv::state_vector(x);
        let r = synthetic_reward(&x, action, &cfg, Some(rng));
        Ok((r, action.clone()))
    }

    fn objective(
        &self,
        task: &Task,
        transition: &Transition,
        action: &Allocation,
    ) -> Result<(f64, Vec<f64>)> {
        let cfg = self.task_config(task)?;
        let x = SyntheticEnv::state_vector(&transition.state);
        let value = synthetic_reward::<ChaCha8Rng>(&x, action, &cfg, None);
        let grad = synthetic_reward_grad(&x, action, &cfg);
        Ok((value, grad))
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub task_id: usize,
    pub batch_score: f64,
    pub is_weight: f64,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingMetrics {
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub task_id: usize,
    pub mean_reward: f64,
    pub annualized_return: f64,
}

fn explore_mix(action: &Allocation, rate: f64, rng: &mut ChaCha8Rng) -> Result<Allocation> {
    if rate <= 0.0 {
        return Ok(action.clone());
    }
    let noise = dirichlet_flat(action.len(), rng)?;
    Allocation::from_unnormalized(
        action
            .weights()
            .iter()
            .zip(noise.weights())
            .map(|(a, d)| (1.0 - rate) * a + rate * d)
            .collect(),
    )
}

/// Carried per-task rollout state.
struct RolloutState {
    w_prev: Allocation,
}

#[allow(clippy::too_many_arguments)]
fn rollout_chunk<E: TaskEnv>(
    env: &E,
    task: &mut Task,
    carried: &mut RolloutState,
    policy: &PolicyParams,
    layout: &StateLayout,
    chunk: usize,
    exploration_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n_max = env.episode_length();
    let end = (task.cursor + chunk - 1).min(n_max);
    for n in task.cursor..=end {
        let x = env.observe(task, n, &carried.w_prev, rng)?;
        let greedy = forward(policy, layout, &x)?;
        let action = explore_mix(&greedy, exploration_rate, rng)?;
        let (reward, w_next) = env.step(task, n, &x, &carried.w_prev, &action, rng)?;
        let x_next = env.observe(task, n + 1, &w_next, rng)?;
        task.buffer
            .push(Transition::new(x, action, reward, x_next, n)?);
        carried.w_prev = w_next;
    }
    if end < n_max {
        task.cursor = end + 1;
    } else {
        task.cursor = 1;
        carried.w_prev = uniform_allocation(task.entity_count())?;
    }
    Ok(())
}

/// One IS-weighted ascent step on a fixed minibatch. Returns the gradient
/// norm, the weighted mean objective, and the forward allocations.
pub fn policy_gradient_step<E: TaskEnv>(
    env: &E,
    task: &Task,
    policy: &mut PolicyParams,
    layout: &StateLayout,
    batch: &[Transition],
    learning_rate: f64,
    is_weight: f64,
) -> Result<(f64, f64, Vec<Allocation>)> {
    let states: Vec<StateMatrix> = batch.iter().map(|t| t.state.clone()).collect();
    let mut objective = |idx: usize, action: &Allocation| -> Result<(f64, Vec<f64>)> {
        let (value, grad) = env.objective(task, &batch[idx], action)?;
        Ok((
            is_weight * value,
            grad.into_iter().map(|g| is_weight * g).collect(),
        ))
    };
    let (grad, mean_objective, allocations) = backward(policy, layout, &states, &mut objective)?;
    policy.apply_step(&grad, learning_rate);
    policy.check_finite()?;
    Ok((grad.l2_norm(), mean_objective, allocations))
}

/// Runs the prioritized multi-task training loop.
///
/// Buffers are pre-filled with one full episode per task under the initial
/// policy before the first update. `epoch_hook` fires every
/// `cfg.epoch_steps` steps with the epoch index and current parameters.
pub fn train<E: TaskEnv>(
    cfg: &TrainerConfig,
    env: &E,
    tasks: &mut [Task],
    policy: &mut PolicyParams,
    sampler: &mut SamplerState,
    mut epoch_hook: impl FnMut(usize, &PolicyParams) -> Result<()>,
) -> Result<TrainingMetrics> {
    if tasks.is_empty() {
        return Err(Error::Domain("training needs at least one task".into()));
    }
    if cfg.mode == TrainMode::Stl && tasks.len() != 1 {
        return Err(Error::Config(format!(
            "STL mode requires exactly one task, got {}",
            tasks.len()
        )));
    }
    if sampler.task_count() != tasks.len() {
        return Err(Error::Config(format!(
            "sampler tracks {} tasks but {} were given",
            sampler.task_count(),
            tasks.len()
        )));
    }
    if cfg.mode == TrainMode::MtlUniform {
        sampler.priority_exponent = 0.0;
    }
    let n_max = env.episode_length();
    if cfg.minibatch_size > n_max {
        return Err(Error::Config(format!(
            "minibatch size {} exceeds episode length {n_max}",
            cfg.minibatch_size
        )));
    }
    let layout = env.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut carried: Vec<RolloutState> = tasks
        .iter()
        .map(|t| {
            Ok(RolloutState {
                w_prev: uniform_allocation(t.entity_count())?,
            })
        })
        .collect::<Result<_>>()?;

    // Warm-up: one full episode per task under the initial policy.
    for (task, state) in tasks.iter_mut().zip(carried.iter_mut()) {
        rollout_chunk(
            env,
            task,
            state,
            policy,
            &layout,
            n_max,
            cfg.exploration_rate,
            &mut rng,
        )?;
    }

    let mut metrics = TrainingMetrics::default();
    for step in 1..=cfg.total_steps {
        let t = sampler.sample_task(&mut rng);
        let start = if env.recency_biased() {
            tasks[t]
                .buffer
                .sample_start_geometric(cfg.minibatch_size, cfg.p_geo, &mut rng)?
        } else {
            tasks[t]
                .buffer
                .sample_start_uniform(cfg.minibatch_size, &mut rng)?
        };
        let batch: Vec<Transition> = tasks[t]
            .buffer
            .window(start, cfg.minibatch_size)?
            .into_iter()
            .cloned()
            .collect();
        let is_weight = sampler.is_weights()[t];

        let (grad_norm, objective, allocations) = policy_gradient_step(
            env,
            &tasks[t],
            policy,
            &layout,
            &batch,
            cfg.learning_rate,
            is_weight,
        )
        .map_err(|e| Error::Numeric(format!("training step {step}: {e}")))?;

        let batch_score = if cfg.mean_scorer {
            scorer_deviation_mean(&allocations)?
        } else {
            scorer_deviation(&allocations)?
        };
        sampler.update_score(t, batch_score)?;
        tasks[t].set_score(sampler.scores()[t])?;

        rollout_chunk(
            env,
            &mut tasks[t],
            &mut carried[t],
            policy,
            &layout,
            cfg.rollout_chunk,
            cfg.exploration_rate,
            &mut rng,
        )?;

        metrics.steps.push(StepRecord {
            step,
            task_id: tasks[t].id,
            batch_score,
            is_weight,
            objective,
            grad_norm,
        });

        if step % cfg.epoch_steps == 0 {
            epoch_hook(step / cfg.epoch_steps, policy)?;
        }
    }
    Ok(metrics)
}

/// Deterministic rollout without exploration noise or updates.
///
/// Each task is evaluated from a fixed rng stream derived from its id, so
/// repeated evaluations of the same inputs are identical.
pub fn evaluate<E: TaskEnv>(
    env: &E,
    tasks: &[Task],
    policy: &PolicyParams,
) -> Result<Vec<EvalRecord>> {
    let layout = env.layout();
    let n_max = env.episode_length();
    if n_max == 0 {
        return Err(Error::InsufficientData("evaluation period is empty".into()));
    }
    let mut out = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ task.id as u64);
        let mut w_prev = uniform_allocation(task.entity_count())?;
        let mut total = 0.0;
        for n in 1..=n_max {
            let x = env.observe(task, n, &w_prev, &mut rng)?;
            let action = forward(policy, &layout, &x)?;
            let (reward, w_next) = env.step(task, n, &x, &w_prev, &action, &mut rng)?;
            total += reward;
            w_prev = w_next;
        }
        let mean_reward = total / n_max as f64;
        out.push(EvalRecord {
            task_id: task.id,
            mean_reward,
            annualized_return: (PERIODS_PER_YEAR * mean_reward).exp() - 1.0,
        });
    }
    Ok(out)
}
