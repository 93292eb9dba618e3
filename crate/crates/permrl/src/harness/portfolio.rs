//! Portfolio training experiment: STL / MTL-uniform / P-MTL conditions over
//! seeded task draws, with held-out-period and out-of-sample-instrument
//! evaluation, per-step and per-epoch metrics, gains over STL, and rollout
//! traces of the final policies.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::portfolio::{make_tasks, PortfolioConfig};
use crate::envs::prices::{generate_synthetic_prices, load_prices, PriceSeries};
use crate::error::{Error, Result};
use crate::harness::config::{mode_name, ExperimentConfig};
use crate::harness::report::{
    summarize, write_epoch_csv, write_step_csv, write_summary_json, write_text, EpochRow,
    SummaryEntry,
};
use crate::policy::{forward, init_near_zero, save_checkpoint, PolicyParams};
use crate::sampler::SamplerState;
use crate::simplex::uniform_allocation;
use crate::task::Task;
use crate::trainer::{evaluate, train, PortfolioEnv, TaskEnv, TrainMode, TrainerConfig};

pub fn condition_label(mode: TrainMode, tasks: usize) -> String {
    format!("{}-t{tasks}", mode_name(mode))
}

/// Training-period and held-out-period environments over the same series.
///
/// The held-out slice keeps the final `window` training periods as state
/// history, so its first reward already lies outside the training range.
pub fn split_envs(series: &PriceSeries, cfg: &ExperimentConfig) -> Result<(PortfolioEnv, PortfolioEnv)> {
    let pc = &cfg.portfolio;
    let periods = series.periods();
    if cfg.portfolio.train_periods + pc.window + 2 > periods {
        return Err(Error::InsufficientData(format!(
            "{periods} periods cannot host a {} period training split with window {}",
            pc.train_periods, pc.window
        )));
    }
    let env_cfg = PortfolioConfig::new(pc.window, pc.commission_rate, pc.universe, pc.task_size)?;
    let train_series = series.slice_periods(0, pc.train_periods)?;
    let test_series = series.slice_periods(pc.train_periods - pc.window, periods)?;
    Ok((
        PortfolioEnv::new(train_series, env_cfg.clone())?,
        PortfolioEnv::new(test_series, env_cfg)?,
    ))
}

pub fn load_or_generate_prices(cfg: &ExperimentConfig) -> Result<PriceSeries> {
    match &cfg.portfolio.prices {
        Some(path) => load_prices(path),
        None => generate_synthetic_prices(&cfg.prices),
    }
}

/// Out-of-sample evaluation tasks drawn from the instruments beyond the
/// training universe. The draw depends only on the base seed, so every
/// condition and seed is scored on the same tasks.
pub fn out_of_sample_tasks(cfg: &ExperimentConfig, instruments: usize) -> Result<Vec<Task>> {
    let pc = &cfg.portfolio;
    if pc.universe >= instruments {
        return Err(Error::Config(format!(
            "universe {} leaves no out-of-sample instruments of {instruments}",
            pc.universe
        )));
    }
    let pool: Vec<usize> = (pc.universe..instruments).collect();
    if pool.len() < pc.task_size {
        return Err(Error::Config(format!(
            "out-of-sample pool {} smaller than task size {}",
            pool.len(),
            pc.task_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00b5_ee01);
    let drawn = make_tasks(pool.len(), pc.task_size, pc.eval_tasks, 1, &mut rng)?;
    drawn
        .into_iter()
        .enumerate()
        .map(|(i, t)| Task::new(1000 + i, t.entities.iter().map(|&e| pool[e]).collect(), 1))
        .collect()
}

/// Per-(condition, seed) artifacts kept in memory for the acceptance tests.
#[derive(Debug, Clone)]
pub struct ConditionRun {
    pub condition: String,
    pub seed: u64,
    pub steps: Vec<crate::trainer::StepRecord>,
    /// Mean held-out reward over the out-of-sample tasks at the end.
    pub final_holdout: f64,
    pub policy: PolicyParams,
}

#[derive(Debug, Clone, Default)]
pub struct PortfolioArtifacts {
    pub runs: Vec<ConditionRun>,
    pub epochs: Vec<EpochRow>,
}

/// Trains one (mode, tasks, seed) cell and evaluates it per epoch.
#[allow(clippy::too_many_arguments)]
pub fn run_condition(
    cfg: &ExperimentConfig,
    train_env: &PortfolioEnv,
    test_env: &PortfolioEnv,
    eval_tasks: &[Task],
    mode: TrainMode,
    task_count: usize,
    max_tasks: usize,
    seed: u64,
) -> Result<(ConditionRun, Vec<EpochRow>)> {
    let pc = &cfg.portfolio;
    let label = condition_label(mode, task_count);
    // Drawing the full task block keeps the rng stream identical across
    // conditions sharing a seed, so task prefixes and inits are paired.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = make_tasks(
        pc.universe,
        pc.task_size,
        max_tasks.max(task_count),
        train_env.episode_length(),
        &mut rng,
    )?;
    tasks.truncate(task_count);
    let mut policy = init_near_zero(pc.hidden_size, 3, pc.init_scale, &mut rng)?;
    let mut sampler = SamplerState::new(
        task_count,
        cfg.sampler.priority_exponent,
        cfg.sampler.is_exponent,
        cfg.sampler.smoothing,
    )?;
    let step_factor = if pc.scale_steps { task_count } else { 1 };
    let trainer_cfg = TrainerConfig {
        mode,
        seed,
        total_steps: cfg.trainer.total_steps * step_factor,
        epoch_steps: cfg.trainer.epoch_steps * step_factor,
        ..cfg.trainer.clone()
    };

    let mut epochs: Vec<EpochRow> = Vec::new();
    let push_rows = |rows: &mut Vec<EpochRow>,
                     epoch: usize,
                     params: &PolicyParams,
                     subjects: &[Task]|
     -> Result<()> {
        let on_train = evaluate(train_env, subjects, params)?;
        let on_test = evaluate(test_env, subjects, params)?;
        for (tr, te) in on_train.iter().zip(&on_test) {
            rows.push(EpochRow {
                seed,
                epoch,
                condition: label.clone(),
                task_id: tr.task_id,
                train_reward: tr.mean_reward,
                test_reward: te.mean_reward,
                annualized_return: te.annualized_return,
            });
        }
        Ok(())
    };

    // Training tasks are mutably borrowed while the trainer runs, so the
    // per-epoch hook scores the fixed out-of-sample tasks; training-task
    // rows are appended once for the final parameters below.
    let epochs_ref = &mut epochs;
    let metrics = train(
        &trainer_cfg,
        train_env,
        &mut tasks,
        &mut policy,
        &mut sampler,
        |epoch, params| push_rows(epochs_ref, epoch, params, eval_tasks),
    )?;
    let final_epoch = trainer_cfg.total_steps.div_ceil(trainer_cfg.epoch_steps);
    push_rows(&mut epochs, final_epoch, &policy, &tasks)?;

    let holdout = evaluate(test_env, eval_tasks, &policy)?;
    let final_holdout = holdout.iter().map(|r| r.mean_reward).sum::<f64>() / holdout.len() as f64;
    Ok((
        ConditionRun {
            condition: label,
            seed,
            steps: metrics.steps,
            final_holdout,
            policy,
        },
        epochs,
    ))
}

/// Wealth trajectory of a policy on one task of an environment.
pub fn rollout_trace(
    env: &PortfolioEnv,
    task: &Task,
    policy: &PolicyParams,
) -> Result<Vec<(usize, f64, Vec<f64>)>> {
    let layout = env.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut w_prev = uniform_allocation(task.entity_count())?;
    let mut value = 1.0;
    let mut rows = Vec::new();
    for n in 1..=env.episode_length() {
        let x = env.observe(task, n, &w_prev, &mut rng)?;
        let action = forward(policy, &layout, &x)?;
        let (reward, w_next) = env.step(task, n, &x, &w_prev, &action, &mut rng)?;
        value *= reward.exp();
        rows.push((n, value, action.weights().to_vec()));
        w_prev = w_next;
    }
    Ok(rows)
}

fn write_trace_csv(path: &Path, rows: &[(usize, f64, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = rows.first().map(|r| r.2.len()).unwrap_or(0);
    let mut header = vec!["step".to_string(), "portfolio_value".to_string()];
    header.extend((0..m).map(|i| format!("w_{i}")));
    w.write_record(&header)?;
    for (step, value, weights) in rows {
        let mut record = vec![step.to_string(), value.to_string()];
        record.extend(weights.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every configured condition over every seed, in memory.
pub fn portfolio_experiment(cfg: &ExperimentConfig) -> Result<PortfolioArtifacts> {
    let series = load_or_generate_prices(cfg)?;
    let (train_env, test_env) = split_envs(&series, cfg)?;
    let eval_tasks = out_of_sample_tasks(cfg, series.instrument_count())?;
    let max_tasks = cfg
        .portfolio
        .conditions
        .iter()
        .map(|&(_, t)| t)
        .max()
        .ok_or_else(|| Error::Config("portfolio.conditions is empty".into()))?;

    let mut artifacts = PortfolioArtifacts::default();
    for &(mode, task_count) in &cfg.portfolio.conditions {
        for s in 0..cfg.seeds {
            let (run, epochs) = run_condition(
                cfg,
                &train_env,
                &test_env,
                &eval_tasks,
                mode,
                task_count,
                max_tasks,
                cfg.seed + s as u64,
            )?;
            artifacts.runs.push(run);
            artifacts.epochs.extend(epochs);
        }
    }
    Ok(artifacts)
}

/// Full driver: runs the experiment and writes every artifact to `cfg.out`.
pub fn run_portfolio(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("config.kv"), &cfg.to_kv())?;

    let artifacts = portfolio_experiment(cfg)?;
    write_epoch_csv(&cfg.out.join("epochs.csv"), &artifacts.epochs)?;

    let mut by_condition: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in &artifacts.runs {
        write_step_csv(
            &cfg.out
                .join(format!("steps_{}_s{}.csv", run.condition, run.seed)),
            &run.steps,
        )?;
        save_checkpoint(
            &run.policy,
            &cfg.out
                .join(format!("policy_{}_s{}.json", run.condition, run.seed)),
        )?;
        by_condition
            .entry(run.condition.clone())
            .or_default()
            .push(run.final_holdout);
    }

    let mut summary: BTreeMap<String, SummaryEntry> = BTreeMap::new();
    for (condition, values) in &by_condition {
        summary.insert(condition.clone(), summarize(values)?);
    }
    write_summary_json(&cfg.out.join("summary.json"), &summary)?;

    // Gains over the STL condition, paired per seed.
    let stl_label = cfg
        .portfolio
        .conditions
        .iter()
        .find(|&&(m, _)| m == TrainMode::Stl)
        .map(|&(m, t)| condition_label(m, t));
    if let Some(stl_label) = stl_label {
        let mut w = csv::Writer::from_path(cfg.out.join("gains.csv"))?;
        w.write_record(["seed", "condition", "gain"])?;
        for run in &artifacts.runs {
            if run.condition == stl_label {
                continue;
            }
            if let Some(stl) = artifacts
                .runs
                .iter()
                .find(|r| r.condition == stl_label && r.seed == run.seed)
            {
                w.write_record([
                    run.seed.to_string(),
                    run.condition.clone(),
                    (run.final_holdout - stl.final_holdout).to_string(),
                ])?;
            }
        }
        w.flush()?;
    }

    // One rollout trace per condition: last seed's policy on the first
    // out-of-sample task over the held-out period.
    let series = load_or_generate_prices(cfg)?;
    let (_, test_env) = split_envs(&series, cfg)?;
    let eval_tasks = out_of_sample_tasks(cfg, series.instrument_count())?;
    let last_seed = cfg.seed + cfg.seeds as u64 - 1;
    for run in &artifacts.runs {
        if run.seed != last_seed {
            continue;
        }
        let rows = rollout_trace(&test_env, &eval_tasks[0], &run.policy)?;
        write_trace_csv(&cfg.out.join(format!("trace_{}.csv", run.condition)), &rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds = 2;
        cfg.prices.instruments = 10;
        cfg.prices.periods = 140;
        cfg.portfolio.universe = 7;
        cfg.portfolio.task_size = 3;
        cfg.portfolio.eval_tasks = 2;
        cfg.portfolio.train_periods = 100;
        cfg.portfolio.window = 5;
        cfg.portfolio.hidden_size = 4;
        cfg.portfolio.conditions = vec![(TrainMode::Stl, 1), (TrainMode::Pmtl, 3)];
        cfg.trainer.minibatch_size = 10;
        cfg.trainer.rollout_chunk = 10;
        cfg.trainer.total_steps = 30;
        cfg.trainer.epoch_steps = 15;
        cfg
    }

    #[test]
    fn experiment_produces_all_cells() {
        let cfg = tiny_cfg();
        let artifacts = portfolio_experiment(&cfg).unwrap();
        assert_eq!(artifacts.runs.len(), 4);
        let labels: Vec<&str> = artifacts.runs.iter().map(|r| r.condition.as_str()).collect();
        assert!(labels.contains(&"stl-t1"));
        assert!(labels.contains(&"p-mtl-t3"));
        assert!(artifacts.epochs.iter().any(|e| e.epoch == 1));
        assert!(artifacts.epochs.iter().any(|e| e.epoch == 2));
    }

    #[test]
    fn out_of_sample_tasks_avoid_training_universe() {
        let cfg = tiny_cfg();
        let tasks = out_of_sample_tasks(&cfg, 10).unwrap();
        assert_eq!(tasks.len(), 2);
        for t in &tasks {
            assert!(t.entities.iter().all(|&e| e >= 7 && e < 10));
        }
        // Fixed draw regardless of condition/seed offset.
        let again = out_of_sample_tasks(&cfg, 10).unwrap();
        for (a, b) in tasks.iter().zip(&again) {
            assert_eq!(a.entities, b.entities);
        }
    }

    #[test]
    fn run_portfolio_writes_artifacts() {
        let mut cfg = tiny_cfg();
        cfg.out = tempfile::tempdir().unwrap().keep();
        run_portfolio(&cfg).unwrap();
        for name in [
            "config.kv",
            "epochs.csv",
            "summary.json",
            "gains.csv",
            "steps_stl-t1_s0.csv",
            "steps_p-mtl-t3_s1.csv",
            "policy_p-mtl-t3_s0.json",
            "trace_stl-t1.csv",
            "trace_p-mtl-t3.csv",
        ] {
            assert!(cfg.out.join(name).exists(), "missing {name}");
        }
        std::fs::remove_dir_all(&cfg.out).unwrap();
    }

    #[test]
    fn split_needs_room_for_holdout() {
        let mut cfg = tiny_cfg();
        cfg.portfolio.train_periods = 139;
        let series = load_or_generate_prices(&cfg).unwrap();
        assert!(split_envs(&series, &cfg).is_err());
    }
}
