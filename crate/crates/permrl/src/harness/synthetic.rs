//! Sample-efficiency experiment on the entropy-regularized allocation task.
//!
//! Two learning curves per misspecification level ε: LSPI fit to N real
//! examples, and LSPI fit to a small real base permutation-augmented up to
//! N. Regret is measured against the continuous water-filling optimum on a
//! held-out state set shared across every (ε, N, curve) cell of a seed, so
//! curve differences are driven by the data, not by evaluation noise.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envs::synthetic::{
    dirichlet_action_set, draw_state, make_dataset, permute_augment, synthetic_optimal_allocation,
    synthetic_reward, SyntheticConfig, SyntheticFeatures,
};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::report::{summarize, write_summary_json, write_text, SummaryEntry};
use crate::lspi::{greedy_action, lspi, ActionSet, LinearQ, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Real,
    Augmented,
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curve::Real => write!(f, "real"),
            Curve::Augmented => write!(f, "augmented"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub seed: u64,
    pub epsilon: f64,
    pub n: usize,
    pub curve: Curve,
    pub regret: f64,
}

/// Mean regret of the greedy LSPI policy over a held-out state set.
fn mean_regret(
    q: &LinearQ,
    actions: &ActionSet,
    cfg: &SyntheticConfig,
    states: &[Vec<f64>],
) -> Result<f64> {
    let features = SyntheticFeatures;
    let mut total = 0.0;
    for x in states {
        let best = synthetic_optimal_allocation(x, cfg)?;
        let oracle = synthetic_reward::<ChaCha8Rng>(x, &best, cfg, None);
        let chosen = greedy_action(q, &features, actions, x);
        let achieved = synthetic_reward::<ChaCha8Rng>(x, chosen, cfg, None);
        total += oracle - achieved;
    }
    Ok(total / states.len() as f64)
}

/// Runs the full (seed × ε × N × curve) grid in memory.
pub fn synthetic_bound_curves(cfg: &ExperimentConfig) -> Result<Vec<CurvePoint>> {
    let sc = &cfg.synthetic;
    if sc.n_grid.is_empty() || sc.eps_grid.is_empty() {
        return Err(Error::Config("synthetic grids must be non-empty".into()));
    }
    let mut n_grid = sc.n_grid.clone();
    n_grid.sort_unstable();
    let n_max = *n_grid.last().unwrap();
    if sc.real_base > *n_grid.first().unwrap() {
        return Err(Error::Config(format!(
            "real_base {} exceeds smallest grid size {}",
            sc.real_base,
            n_grid[0]
        )));
    }
    let mut points = Vec::new();
    for s in 0..cfg.seeds {
        let seed = cfg.seed + s as u64;
        // Shared per-seed draws: action set and held-out evaluation states.
        let mut shared_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1_5e7a);
        let actions = dirichlet_action_set(sc.entity_count, sc.action_count, &mut shared_rng)?;
        let eval_states: Vec<Vec<f64>> = (0..sc.eval_states)
            .map(|_| draw_state(sc.entity_count, &mut shared_rng))
            .collect();
        for (ei, &eps) in sc.eps_grid.iter().enumerate() {
            let task = SyntheticConfig::spread(
                sc.entity_count,
                sc.beta_center,
                eps,
                sc.noise_std,
            )?;
            let mut data_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + ei as u64) ^ 0xda7a);
            // Nested master dataset: the N-point dataset is its prefix, so
            // curves differ only through sample size.
            let master = make_dataset(n_max, &actions, &task, &mut data_rng);
            let base = &master[..sc.real_base];
            let labeled: Vec<(Vec<f64>, crate::simplex::Allocation, f64)> = base
                .iter()
                .map(|s| (s.state.clone(), s.action.clone(), s.reward))
                .collect();
            for &n in &n_grid {
                let (q_real, _) = lspi(
                    &master[..n],
                    &SyntheticFeatures,
                    &actions,
                    sc.discount,
                    sc.v_max,
                    sc.lspi_iterations,
                )?;
                points.push(CurvePoint {
                    seed,
                    epsilon: eps,
                    n,
                    curve: Curve::Real,
                    regret: mean_regret(&q_real, &actions, &task, &eval_states)?,
                });

                let mut aug_rng =
                    ChaCha8Rng::seed_from_u64(seed.wrapping_add(101 + ei as u64) ^ n as u64);
                let augmented = permute_augment(&labeled, n, &mut aug_rng)?;
                // Padded rows cycle through the base next states; transitions
                // are i.i.d. and action-independent, so any base next state
                // is a valid draw and reuse avoids injecting extra noise.
                let aug_samples: Vec<Sample<Vec<f64>>> = augmented
                    .into_iter()
                    .enumerate()
                    .map(|(i, (x, a, r))| Sample {
                        state: x,
                        action: a,
                        reward: r,
                        next_state: base[i % base.len()].next_state.clone(),
                    })
                    .collect();
                let (q_aug, _) = lspi(
                    &aug_samples,
                    &SyntheticFeatures,
                    &actions,
                    sc.discount,
                    sc.v_max,
                    sc.lspi_iterations,
                )?;
                points.push(CurvePoint {
                    seed,
                    epsilon: eps,
                    n,
                    curve: Curve::Augmented,
                    regret: mean_regret(&q_aug, &actions, &task, &eval_states)?,
                });
            }
        }
    }
    Ok(points)
}

#[derive(Serialize)]
struct QCheckpoint {
    format: &'static str,
    weights: Vec<f64>,
    v_max: f64,
}

fn write_curves_csv(path: &std::path::Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "epsilon", "n", "curve", "regret"])?;
    for p in points {
        w.write_record([
            p.seed.to_string(),
            p.epsilon.to_string(),
            p.n.to_string(),
            p.curve.to_string(),
            p.regret.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The augmented-minus-real regret gap at the largest N, per (seed, ε).
pub fn gap_at_largest_n(points: &[CurvePoint]) -> Vec<(u64, f64, f64)> {
    let n_max = points.iter().map(|p| p.n).max().unwrap_or(0);
    let mut gaps = Vec::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    for p in points {
        if p.n == n_max && p.curve == Curve::Real {
            let key = (p.seed, p.epsilon.to_bits());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    for (seed, eps_bits) in keys {
        let eps = f64::from_bits(eps_bits);
        let find = |curve: Curve| {
            points
                .iter()
                .find(|p| {
                    p.seed == seed && p.epsilon.to_bits() == eps_bits && p.n == n_max && p.curve == curve
                })
                .map(|p| p.regret)
        };
        if let (Some(real), Some(aug)) = (find(Curve::Real), find(Curve::Augmented)) {
            gaps.push((seed, eps, aug - real));
        }
    }
    gaps
}

/// Writes curves, the ε-gap series, a cross-seed summary, the final fitted
/// value weights, and the config echo into `cfg.out`.
pub fn run_synthetic_bound(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)?;
    write_text(&cfg.out.join("config.kv"), &cfg.to_kv())?;

    let points = synthetic_bound_curves(cfg)?;
    write_curves_csv(&cfg.out.join("synthetic_curves.csv"), &points)?;

    let gaps = gap_at_largest_n(&points);
    let mut w = csv::Writer::from_path(cfg.out.join("gap_curve.csv"))?;
    w.write_record(["seed", "epsilon", "gap"])?;
    for (seed, eps, gap) in &gaps {
        w.write_record([seed.to_string(), eps.to_string(), gap.to_string()])?;
    }
    w.flush()?;

    let n_max = points.iter().map(|p| p.n).max().unwrap();
    let mut summary: BTreeMap<String, SummaryEntry> = BTreeMap::new();
    for &eps in &cfg.synthetic.eps_grid {
        for curve in [Curve::Real, Curve::Augmented] {
            let values: Vec<f64> = points
                .iter()
                .filter(|p| p.epsilon == eps && p.n == n_max && p.curve == curve)
                .map(|p| p.regret)
                .collect();
            summary.insert(format!("{curve}-eps{eps}"), summarize(&values)?);
        }
    }
    write_summary_json(&cfg.out.join("summary.json"), &summary)?;

    // Final fitted weights for the last seed at the largest N, ε = first in
    // the grid, real curve — enough to replay the greedy policy.
    let sc = &cfg.synthetic;
    let seed = cfg.seed + cfg.seeds as u64 - 1;
    let mut shared_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1_5e7a);
    let actions = dirichlet_action_set(sc.entity_count, sc.action_count, &mut shared_rng)?;
    let task = SyntheticConfig::spread(sc.entity_count, sc.beta_center, sc.eps_grid[0], sc.noise_std)?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1) ^ 0xda7a);
    let master = make_dataset(n_max, &actions, &task, &mut data_rng);
    let (q, _) = lspi(
        &master,
        &SyntheticFeatures,
        &actions,
        sc.discount,
        sc.v_max,
        sc.lspi_iterations,
    )?;
    let ckpt = QCheckpoint {
        format: "permrl-qweights-v1",
        weights: q.weights.clone(),
        v_max: sc.v_max,
    };
    let file = std::fs::File::create(cfg.out.join("checkpoint.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &ckpt)
        .map_err(|e| Error::Ingestion(format!("checkpoint write failed: {e}")))?;
    Ok(())
}
