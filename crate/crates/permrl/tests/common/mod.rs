//! Shared oracles for the integration tests: an independent value-iteration
//! solver over small deterministic MDPs, and central finite differences for
//! the policy gradient.

#![allow(dead_code)]

use rand::Rng;

use permrl::policy::{forward, PolicyGradient, PolicyParams, StateLayout};
use permrl::simplex::Allocation;
use permrl::state::StateMatrix;

/// Deterministic finite MDP: next state and reward are functions of (s, a).
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub reward: Vec<Vec<f64>>,
    pub next: Vec<Vec<usize>>,
}

pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R) -> FiniteMdp {
    let n_states = rng.gen_range(2..=10);
    let n_actions = rng.gen_range(2..=4);
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let next = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.gen_range(0..n_states)).collect())
        .collect();
    FiniteMdp {
        n_states,
        n_actions,
        reward,
        next,
    }
}

/// Value iteration to within `tol` in the sup norm.
pub fn value_iteration(mdp: &FiniteMdp, discount: f64, tol: f64) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states];
    loop {
        let mut next_v = vec![0.0; mdp.n_states];
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states {
            let best = (0..mdp.n_actions)
                .map(|a| mdp.reward[s][a] + discount * v[mdp.next[s][a]])
                .fold(f64::NEG_INFINITY, f64::max);
            next_v[s] = best;
            delta = delta.max((best - v[s]).abs());
        }
        v = next_v;
        if delta < tol * (1.0 - discount) {
            return v;
        }
    }
}

/// Greedy policy from the optimal values; ties break to the lowest index.
pub fn optimal_policy(mdp: &FiniteMdp, discount: f64, v: &[f64]) -> Vec<usize> {
    (0..mdp.n_states)
        .map(|s| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions {
                let q = mdp.reward[s][a] + discount * v[mdp.next[s][a]];
                if q > best_q {
                    best_q = q;
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Mean objective of a forward pass over a batch, for finite differencing.
pub fn batch_objective(
    params: &PolicyParams,
    layout: &StateLayout,
    batch: &[StateMatrix],
    objective: &mut dyn FnMut(usize, &Allocation) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (idx, x) in batch.iter().enumerate() {
        let a = forward(params, layout, x).unwrap();
        total += objective(idx, &a);
    }
    total / batch.len() as f64
}

/// Worst relative deviation between an analytic gradient and central finite
/// differences, scaled by the gradient's overall magnitude.
pub fn fd_relative_error(
    params: &PolicyParams,
    layout: &StateLayout,
    batch: &[StateMatrix],
    grad: &PolicyGradient,
    objective: &mut dyn FnMut(usize, &Allocation) -> f64,
) -> f64 {
    let step = 1e-6;
    let mut worst_abs: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut check = |get: &dyn Fn(&mut PolicyParams) -> &mut f64, analytic: f64| {
        let mut plus = params.clone();
        *get(&mut plus) += step;
        let mut minus = params.clone();
        *get(&mut minus) -= step;
        let fd = (batch_objective(&plus, layout, batch, objective)
            - batch_objective(&minus, layout, batch, objective))
            / (2.0 * step);
        worst_abs = worst_abs.max((fd - analytic).abs());
        scale = scale.max(analytic.abs()).max(fd.abs());
    };
    for i in 0..params.encoder_input.len() {
        check(&|p| &mut p.encoder_input[i], grad.encoder_input[i]);
    }
    for i in 0..params.encoder_recurrent.len() {
        check(&|p| &mut p.encoder_recurrent[i], grad.encoder_recurrent[i]);
    }
    for i in 0..params.encoder_bias.len() {
        check(&|p| &mut p.encoder_bias[i], grad.encoder_bias[i]);
    }
    for i in 0..params.score_weights.len() {
        check(&|p| &mut p.score_weights[i], grad.score_weights[i]);
    }
    check(&|p| &mut p.score_bias, grad.score_bias);
    worst_abs / scale.max(1e-8)
}

/// Random well-formed state matrix for a layout.
pub fn random_state<R: Rng + ?Sized>(
    entities: usize,
    layout: &StateLayout,
    rng: &mut R,
) -> StateMatrix {
    let rows = (0..entities)
        .map(|_| {
            (0..layout.row_width())
                .map(|_| rng.gen_range(0.5..1.5))
                .collect()
        })
        .collect();
    StateMatrix::new(rows).unwrap()
}
