//! Least-squares policy iteration with linear features over a finite action
//! set.
//!
//! Policy evaluation solves the LSTD fixed-point system
//! `A α = b` with `A = Σ φ(x,a)(φ(x,a) − γ φ(x', π(x')))ᵀ` and
//! `b = Σ φ(x,a) r`; improvement is greedy over the shared action set with
//! Q-values truncated to `[-v_max, +v_max]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::simplex::Allocation;

/// Feature map φ(state, action) → R^d.
pub trait FeatureMap<S> {
    fn dim(&self) -> usize;
    fn eval(&self, state: &S, action: &Allocation) -> Vec<f64>;
}

/// Finite action set shared across all states.
#[derive(Debug, Clone)]
pub struct ActionSet {
    actions: Vec<Allocation>,
}

impl ActionSet {
    pub fn new(actions: Vec<Allocation>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Domain("action set must be nonempty".into()));
        }
        for i in 0..actions.len() {
            for j in i + 1..actions.len() {
                if actions[i] == actions[j] {
                    return Err(Error::Domain(format!(
                        "action set has duplicate candidates at {i} and {j}"
                    )));
                }
            }
        }
        Ok(ActionSet { actions })
    }

    pub fn actions(&self) -> &[Allocation] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> &Allocation {
        &self.actions[i]
    }
}

/// Linear Q-function with truncation bound.
#[derive(Debug, Clone)]
pub struct LinearQ {
    pub weights: Vec<f64>,
    pub v_max: f64,
}

impl LinearQ {
    pub fn zeros(dim: usize, v_max: f64) -> Self {
        LinearQ {
            weights: vec![0.0; dim],
            v_max,
        }
    }

    /// Truncated Q-value for a feature vector.
    pub fn value(&self, features: &[f64]) -> f64 {
        let raw: f64 = features.iter().zip(&self.weights).map(|(f, w)| f * w).sum();
        raw.clamp(-self.v_max, self.v_max)
    }
}

/// One evaluation sample (x, a, r, x').
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub state: S,
    pub action: Allocation,
    pub reward: f64,
    pub next_state: S,
}

/// Greedy action index under the truncated Q. Ties break to the lowest index.
pub fn greedy_action_index<S>(
    q: &LinearQ,
    features: &dyn FeatureMap<S>,
    actions: &ActionSet,
    state: &S,
) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, a) in actions.actions().iter().enumerate() {
        let v = q.value(&features.eval(state, a));
        if v > best_value {
            best_value = v;
            best = i;
        }
    }
    best
}

/// Greedy action under the truncated Q.
pub fn greedy_action<'a, S>(
    q: &LinearQ,
    features: &dyn FeatureMap<S>,
    actions: &'a ActionSet,
    state: &S,
) -> &'a Allocation {
    actions.get(greedy_action_index(q, features, actions, state))
}

/// LSTDQ policy evaluation of the policy greedy with respect to `prev_q`
/// (the first-iteration policy, `None`, acts greedily on the zero Q, i.e.
/// picks the first action everywhere).
///
/// Singular systems fall back to the SVD minimum-norm least-squares solution.
pub fn lstdq<S>(
    dataset: &[Sample<S>],
    features: &dyn FeatureMap<S>,
    actions: &ActionSet,
    prev_q: Option<&LinearQ>,
    discount: f64,
    v_max: f64,
) -> Result<LinearQ> {
    if dataset.is_empty() {
        return Err(Error::Domain("lstdq needs a nonempty dataset".into()));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::Domain(format!(
            "discount must satisfy 0 <= gamma < 1, got {discount}"
        )));
    }
    let d = features.dim();
    let zero_q = LinearQ::zeros(d, v_max);
    let policy_q = prev_q.unwrap_or(&zero_q);

    let mut a_mat = DMatrix::<f64>::zeros(d, d);
    let mut b_vec = DVector::<f64>::zeros(d);
    for sample in dataset {
        let phi = features.eval(&sample.state, &sample.action);
        let next_action = greedy_action(policy_q, features, actions, &sample.next_state);
        let phi_next = features.eval(&sample.next_state, next_action);
        for i in 0..d {
            b_vec[i] += phi[i] * sample.reward;
            for j in 0..d {
                a_mat[(i, j)] += phi[i] * (phi[j] - discount * phi_next[j]);
            }
        }
    }

    let weights = solve_min_norm(&a_mat, &b_vec)?;
    Ok(LinearQ {
        weights: weights.iter().cloned().collect(),
        v_max,
    })
}

/// Direct solve if well conditioned, otherwise SVD minimum-norm solution.
fn solve_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(lu) = {
        let lu = a.clone().lu();
        lu.solve(b)
    } {
        // Accept the direct solution only when it actually satisfies the system.
        let residual = (a * &lu - b).norm();
        let scale = b.norm().max(1.0);
        if residual <= 1e-8 * scale && lu.iter().all(|v| v.is_finite()) {
            return Ok(lu);
        }
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-10)
        .map_err(|e| Error::Numeric(format!("svd solve failed: {e}")))
}

/// Full least-squares policy iteration: K rounds of LSTDQ evaluation and
/// greedy improvement. Returns the final Q and the per-iteration sequence.
pub fn lspi<S>(
    dataset: &[Sample<S>],
    features: &dyn FeatureMap<S>,
    actions: &ActionSet,
    discount: f64,
    v_max: f64,
    iterations: usize,
) -> Result<(LinearQ, Vec<LinearQ>)> {
    if iterations == 0 {
        return Err(Error::Domain("lspi needs at least one iteration".into()));
    }
    let mut sequence = Vec::with_capacity(iterations);
    let mut current: Option<LinearQ> = None;
    for _ in 0..iterations {
        let q = lstdq(dataset, features, actions, current.as_ref(), discount, v_max)?;
        sequence.push(q.clone());
        current = Some(q);
    }
    Ok((current.unwrap(), sequence))
}

/// Tabular one-hot features over (state, action-index) pairs of a finite MDP.
///
/// Actions are identified by exact match within the shared action set.
pub struct TabularFeatures {
    pub n_states: usize,
    pub actions: Vec<Allocation>,
}

impl FeatureMap<usize> for TabularFeatures {
    fn dim(&self) -> usize {
        self.n_states * self.actions.len()
    }

    fn eval(&self, state: &usize, action: &Allocation) -> Vec<f64> {
        let idx = self
            .actions
            .iter()
            .position(|a| a == action)
            .expect("action not in tabular action set");
        let mut phi = vec![0.0; self.dim()];
        phi[state * self.actions.len() + idx] = 1.0;
        phi
    }
}

/// One-hot allocations usable as a finite abstract action set.
pub fn one_hot_actions(n: usize) -> Result<ActionSet> {
    let mut actions = Vec::with_capacity(n);
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        actions.push(Allocation::new(w)?);
    }
    ActionSet::new(actions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabular(n_states: usize, n_actions: usize) -> (TabularFeatures, ActionSet) {
        let actions = one_hot_actions(n_actions).unwrap();
        (
            TabularFeatures {
                n_states,
                actions: actions.actions().to_vec(),
            },
            actions,
        )
    }

    #[test]
    fn zero_rewards_give_zero_weights() {
        let (features, actions) = tabular(3, 2);
        let dataset: Vec<Sample<usize>> = (0..3)
            .flat_map(|s| {
                actions.actions().iter().map(move |a| Sample {
                    state: s,
                    action: a.clone(),
                    reward: 0.0,
                    next_state: (s + 1) % 3,
                })
            })
            .collect();
        let q = lstdq(&dataset, &features, &actions, None, 0.9, 100.0).unwrap();
        for w in &q.weights {
            assert!(w.abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_zero_recovers_mean_rewards() {
        let (features, actions) = tabular(2, 2);
        // (state 0, action 0) appears twice with rewards 1 and 3 -> mean 2.
        let mk = |s: usize, a: usize, r: f64| Sample {
            state: s,
            action: actions.get(a).clone(),
            reward: r,
            next_state: (s + 1) % 2,
        };
        let dataset = vec![
            mk(0, 0, 1.0),
            mk(0, 0, 3.0),
            mk(0, 1, 5.0),
            mk(1, 0, -1.0),
            mk(1, 1, 0.5),
        ];
        let q = lstdq(&dataset, &features, &actions, None, 0.0, 100.0).unwrap();
        let value = |s: usize, a: usize| q.value(&features.eval(&s, actions.get(a)));
        assert!((value(0, 0) - 2.0).abs() < 1e-9);
        assert!((value(0, 1) - 5.0).abs() < 1e-9);
        assert!((value(1, 0) + 1.0).abs() < 1e-9);
        assert!((value(1, 1) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn truncation_bounds_q_values() {
        let q = LinearQ {
            weights: vec![100.0],
            v_max: 2.0,
        };
        assert_eq!(q.value(&[5.0]), 2.0);
        assert_eq!(q.value(&[-5.0]), -2.0);
    }

    #[test]
    fn single_action_set_is_trivially_greedy() {
        let actions = one_hot_actions(1).unwrap();
        let features = TabularFeatures {
            n_states: 2,
            actions: actions.actions().to_vec(),
        };
        let q = LinearQ::zeros(features.dim(), 10.0);
        assert_eq!(greedy_action_index(&q, &features, &actions, &0), 0);
    }

    #[test]
    fn constant_q_ties_break_to_first_action() {
        let (features, actions) = tabular(2, 3);
        let q = LinearQ::zeros(features.dim(), 10.0);
        assert_eq!(greedy_action_index(&q, &features, &actions, &0), 0);
        assert_eq!(greedy_action_index(&q, &features, &actions, &1), 0);
    }

    #[test]
    fn greedy_invariant_to_constant_feature_shift() {
        // Feature map with a constant component: shifting its weight shifts
        // all Q-values equally and must not change the argmax.
        struct ConstPlusTabular {
            inner: TabularFeatures,
        }
        impl FeatureMap<usize> for ConstPlusTabular {
            fn dim(&self) -> usize {
                self.inner.dim() + 1
            }
            fn eval(&self, s: &usize, a: &Allocation) -> Vec<f64> {
                let mut phi = self.inner.eval(s, a);
                phi.push(1.0);
                phi
            }
        }
        let (inner, actions) = tabular(2, 3);
        let features = ConstPlusTabular { inner };
        let mut weights: Vec<f64> = (0..features.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let q1 = LinearQ {
            weights: weights.clone(),
            v_max: 1e9,
        };
        let last = weights.len() - 1;
        weights[last] += 5.0;
        let q2 = LinearQ {
            weights,
            v_max: 1e9,
        };
        for s in 0..2 {
            assert_eq!(
                greedy_action_index(&q1, &features, &actions, &s),
                greedy_action_index(&q2, &features, &actions, &s)
            );
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let (features, actions) = tabular(2, 2);
        let dataset: Vec<Sample<usize>> = vec![];
        assert!(lstdq(&dataset, &features, &actions, None, 0.9, 10.0).is_err());
    }

    #[test]
    fn identical_rewards_make_every_policy_optimal() {
        let (features, actions) = tabular(3, 3);
        let dataset: Vec<Sample<usize>> = (0..3)
            .flat_map(|s| {
                actions.actions().iter().map(move |a| Sample {
                    state: s,
                    action: a.clone(),
                    reward: 1.0,
                    next_state: s,
                })
            })
            .collect();
        let (q, _) = lspi(&dataset, &features, &actions, 0.5, 100.0, 4).unwrap();
        // All Q-values equal within tolerance; any greedy choice has regret 0.
        for s in 0..3 {
            let vals: Vec<f64> = actions
                .actions()
                .iter()
                .map(|a| q.value(&features.eval(&s, a)))
                .collect();
            for v in &vals {
                assert!((v - vals[0]).abs() < 1e-7);
            }
        }
    }
}
