//! Least-squares policy iteration on a small deterministic chain MDP with
//! tabular features, compared against exact value iteration. With exhaustive
//! (state, action) samples the LSTDQ fixed point is the true Q-function, so
//! the greedy policies agree.

use permrl::lspi::{greedy_action_index, lspi, one_hot_actions, Sample, TabularFeatures};

const N_STATES: usize = 5;
const N_ACTIONS: usize = 2;
const DISCOUNT: f64 = 0.9;

// Action 0 walks right (toward the rewarded end), action 1 resets to 0.
fn reward(s: usize, a: usize) -> f64 {
    match (s, a) {
        (4, 0) => 1.0,
        (_, 1) => 0.1,
        _ => 0.0,
    }
}

fn next(s: usize, a: usize) -> usize {
    match a {
        0 => (s + 1).min(N_STATES - 1),
        _ => 0,
    }
}

fn value_iteration() -> Vec<f64> {
    let mut v = vec![0.0; N_STATES];
    loop {
        let mut delta: f64 = 0.0;
        let prev = v.clone();
        for (s, slot) in v.iter_mut().enumerate() {
            let best = (0..N_ACTIONS)
                .map(|a| reward(s, a) + DISCOUNT * prev[next(s, a)])
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - *slot).abs());
            *slot = best;
        }
        if delta < 1e-12 {
            return v;
        }
    }
}

fn main() -> permrl::Result<()> {
    let actions = one_hot_actions(N_ACTIONS)?;
    let features = TabularFeatures {
        n_states: N_STATES,
        actions: actions.actions().to_vec(),
    };
    let mut samples = Vec::new();
    for s in 0..N_STATES {
        for a in 0..N_ACTIONS {
            samples.push(Sample {
                state: s,
                action: actions.get(a).clone(),
                reward: reward(s, a),
                next_state: next(s, a),
            });
        }
    }

    let v_max = 1.0 / (1.0 - DISCOUNT) + 1.0;
    let (q, history) = lspi(&samples, &features, &actions, DISCOUNT, v_max, 30)?;
    let v = value_iteration();

    println!("LSPI ran {} policy-iteration rounds", history.len());
    println!("state  V*(s)      greedy(LSPI)  greedy(VI)");
    for s in 0..N_STATES {
        let lspi_a = greedy_action_index(&q, &features, &actions, &s);
        let vi_a = (0..N_ACTIONS)
            .max_by(|&a, &b| {
                let qa = reward(s, a) + DISCOUNT * v[next(s, a)];
                let qb = reward(s, b) + DISCOUNT * v[next(s, b)];
                qa.partial_cmp(&qb).unwrap()
            })
            .unwrap();
        println!("{s:>5}  {:>8.5}  {lspi_a:>12}  {vi_a:>10}", v[s]);
        assert_eq!(lspi_a, vi_a);
    }
    println!("greedy policies agree on every state");
    Ok(())
}
