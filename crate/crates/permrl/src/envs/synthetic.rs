//! Entropy-regularized allocation task with a controllable deviation from
//! permutation invariance.
//!
//! The reward is `Σ_i x_i a_i − Σ_i β_i a_i ln a_i`. With equal entropy
//! weights β_i the reward is exactly permutation invariant; the spread
//! `max β_i − min β_i` controls how far it deviates.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lspi::{ActionSet, FeatureMap, Sample};
use crate::simplex::{uniform_allocation, Allocation};
use crate::state::Permutation;

/// `a ln a` with the convention `0 · ln 0 = 0`.
pub fn xlogx(a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a * a.ln()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub entity_count: usize,
    /// Per-entity entropy weight β_i > 0.
    pub entropy_weights: Vec<f64>,
    /// Standard deviation of additive Gaussian reward noise.
    pub noise_std: f64,
}

impl SyntheticConfig {
    pub fn new(entropy_weights: Vec<f64>, noise_std: f64) -> Result<Self> {
        if entropy_weights.is_empty() {
            return Err(Error::Domain("entropy weights must be nonempty".into()));
        }
        if entropy_weights.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Domain("entropy weights must all be > 0".into()));
        }
        if noise_std < 0.0 {
            return Err(Error::Domain("noise std must be >= 0".into()));
        }
        Ok(SyntheticConfig {
            entity_count: entropy_weights.len(),
            entropy_weights,
            noise_std,
        })
    }

    /// Equal weights `β` for every entity (the ε = 0 configuration).
    pub fn equal(m: usize, beta: f64, noise_std: f64) -> Result<Self> {
        SyntheticConfig::new(vec![beta; m], noise_std)
    }

    /// Weights spread evenly over `[center − ε/2, center + ε/2]`.
    pub fn spread(m: usize, center: f64, epsilon: f64, noise_std: f64) -> Result<Self> {
        if m == 1 {
            return SyntheticConfig::new(vec![center], noise_std);
        }
        let weights = (0..m)
            .map(|i| center - epsilon / 2.0 + epsilon * i as f64 / (m - 1) as f64)
            .collect();
        SyntheticConfig::new(weights, noise_std)
    }

    /// Deviation from permutation invariance: `max β_i − min β_i`.
    pub fn epsilon(&self) -> f64 {
        let max = self.entropy_weights.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.entropy_weights.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    }
}

/// Reward `Σ x_i a_i − Σ β_i a_i ln a_i`, plus Gaussian noise when an rng
/// is supplied.
pub fn synthetic_reward<R: Rng + ?Sized>(
    x: &[f64],
    a: &Allocation,
    cfg: &SyntheticConfig,
    rng: Option<&mut R>,
) -> f64 {
    debug_assert_eq!(x.len(), a.len());
    debug_assert_eq!(x.len(), cfg.entropy_weights.len());
    let mut r = 0.0;
    for i in 0..x.len() {
        r += x[i] * a[i] - cfg.entropy_weights[i] * xlogx(a[i]);
    }
    if let Some(rng) = rng {
        if cfg.noise_std > 0.0 {
            r += Normal::new(0.0, cfg.noise_std).unwrap().sample(rng);
        }
    }
    r
}

/// Gradient of the noiseless reward with respect to the allocation.
///
/// Valid for strictly positive weights (softmax outputs qualify).
pub fn synthetic_reward_grad(x: &[f64], a: &Allocation, cfg: &SyntheticConfig) -> Vec<f64> {
    (0..x.len())
        .map(|i| x[i] - cfg.entropy_weights[i] * (a[i].ln() + 1.0))
        .collect()
}

/// Unique maximizer of the noiseless reward on the simplex.
///
/// Stationarity gives `a_i = exp((x_i − λ)/β_i − 1)`; λ is found by bisection
/// on the total mass.
pub fn synthetic_optimal_allocation(x: &[f64], cfg: &SyntheticConfig) -> Result<Allocation> {
    let betas = &cfg.entropy_weights;
    if x.len() != betas.len() {
        return Err(Error::Dimension {
            what: "synthetic state",
            expected: betas.len(),
            got: x.len(),
        });
    }
    let mass = |lambda: f64| -> f64 {
        x.iter()
            .zip(betas)
            .map(|(&xi, &bi)| ((xi - lambda) / bi - 1.0).exp())
            .sum()
    };
    let beta_max = betas.iter().cloned().fold(f64::MIN, f64::max);
    let x_max = x.iter().cloned().fold(f64::MIN, f64::max);
    let x_min = x.iter().cloned().fold(f64::MAX, f64::min);
    let m = x.len() as f64;
    let mut lo = x_min - beta_max * (m.ln() + 2.0);
    let mut hi = x_max + beta_max * (m.ln() + 2.0);
    // Mass is strictly decreasing in λ; widen the bracket if needed.
    let mut guard = 0;
    while mass(lo) < 1.0 {
        lo -= beta_max;
        guard += 1;
        if guard > 100 {
            return Err(Error::Numeric("bisection bracket not found (low)".into()));
        }
    }
    guard = 0;
    while mass(hi) > 1.0 {
        hi += beta_max;
        guard += 1;
        if guard > 100 {
            return Err(Error::Numeric("bisection bracket not found (high)".into()));
        }
    }
    let mut converged = false;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = mass(mid);
        if (v - 1.0).abs() <= 1e-12 {
            lo = mid;
            hi = mid;
            converged = true;
            break;
        }
        if v > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * (1.0 + hi.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(
            "optimal-allocation bisection did not converge in 200 iterations".into(),
        ));
    }
    let lambda = 0.5 * (lo + hi);
    let weights: Vec<f64> = x
        .iter()
        .zip(betas)
        .map(|(&xi, &bi)| ((xi - lambda) / bi - 1.0).exp())
        .collect();
    Allocation::from_unnormalized(weights)
}

/// A labeled example: state, action, recorded reward.
pub type LabeledExample = (Vec<f64>, Allocation, f64);

/// Pads a dataset to `target_count` by permuting randomly chosen originals.
///
/// The recorded reward is kept unchanged, so when entropy weights differ the
/// augmented labels carry the reward of the unpermuted example.
pub fn permute_augment<R: Rng + ?Sized>(
    examples: &[LabeledExample],
    target_count: usize,
    rng: &mut R,
) -> Result<Vec<LabeledExample>> {
    if examples.is_empty() {
        return Err(Error::Domain("permute_augment needs at least one example".into()));
    }
    if target_count < examples.len() {
        return Err(Error::Domain(format!(
            "target count {target_count} below example count {}",
            examples.len()
        )));
    }
    let mut out = examples.to_vec();
    let m = examples[0].0.len();
    while out.len() < target_count {
        let (x, a, r) = &examples[rng.gen_range(0..examples.len())];
        let sigma = Permutation::random(m, rng);
        out.push((sigma.apply_slice(x)?, sigma.apply_allocation(a)?, *r));
    }
    Ok(out)
}

/// Feature map for the allocation task: `(Σ x_i a_i, −Σ a_i ln a_i, 1)`.
///
/// For equal entropy weights the true reward lies exactly in this span; for
/// unequal weights the span is misspecified by the weight spread.
pub struct SyntheticFeatures;

impl FeatureMap<Vec<f64>> for SyntheticFeatures {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, state: &Vec<f64>, action: &Allocation) -> Vec<f64> {
        let dot: f64 = state.iter().zip(action.weights()).map(|(x, a)| x * a).sum();
        let entropy: f64 = -action.weights().iter().map(|&a| xlogx(a)).sum::<f64>();
        vec![dot, entropy, 1.0]
    }
}

/// The shared finite action set: the uniform allocation plus `count − 1`
/// flat-Dirichlet draws.
pub fn dirichlet_action_set<R: Rng + ?Sized>(
    m: usize,
    count: usize,
    rng: &mut R,
) -> Result<ActionSet> {
    let mut actions = vec![uniform_allocation(m)?];
    while actions.len() < count {
        actions.push(dirichlet_flat(m, rng)?);
    }
    ActionSet::new(actions)
}

/// One draw from the flat Dirichlet on the m-simplex.
pub fn dirichlet_flat<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Allocation> {
    let gammas: Vec<f64> = (0..m)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    Allocation::from_unnormalized(gammas)
}

/// State drawn i.i.d. uniform on `[0, 1]^m`.
pub fn draw_state<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    (0..m).map(|_| rng.gen()).collect()
}

/// Evaluation samples for LSPI: states and next-states i.i.d., actions drawn
/// uniformly from the shared action set, rewards noisy.
pub fn make_dataset<R: Rng + ?Sized>(
    n: usize,
    actions: &ActionSet,
    cfg: &SyntheticConfig,
    rng: &mut R,
) -> Vec<Sample<Vec<f64>>> {
    let m = cfg.entity_count;
    (0..n)
        .map(|_| {
            let state = draw_state(m, rng);
            let action = actions.get(rng.gen_range(0..actions.len())).clone();
            let reward = synthetic_reward(&state, &action, cfg, Some(rng));
            let next_state = draw_state(m, rng);
            Sample {
                state,
                action,
                reward,
                next_state,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_reward_value() {
        let cfg = SyntheticConfig::equal(2, 1.0, 0.0).unwrap();
        let a = uniform_allocation(2).unwrap();
        let r = synthetic_reward::<ChaCha8Rng>(&[1.0, 1.0], &a, &cfg, None);
        assert!((r - (1.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn one_hot_action_kills_entropy_term() {
        // Degenerate near-zero weights stand in for the β → 0 limit.
        let cfg = SyntheticConfig::new(vec![1e-300, 1e-300], 0.0).unwrap();
        let a = Allocation::new(vec![0.0, 1.0]).unwrap();
        let r = synthetic_reward::<ChaCha8Rng>(&[0.2, 0.7], &a, &cfg, None);
        assert!((r - 0.7).abs() < 1e-12);
    }

    #[test]
    fn uniform_action_closed_form() {
        let m = 10;
        let beta = 0.7;
        let cfg = SyntheticConfig::equal(m, beta, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = draw_state(m, &mut rng);
        let a = uniform_allocation(m).unwrap();
        let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
        let mean_x: f64 = x.iter().sum::<f64>() / m as f64;
        assert!((r - (mean_x + beta * (m as f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn equal_beta_optimum_is_softmax() {
        let cfg = SyntheticConfig::equal(2, 0.5, 0.0).unwrap();
        let a = synthetic_optimal_allocation(&[0.9, 0.1], &cfg).unwrap();
        let expected = (1.6f64).exp() / (1.0 + (1.6f64).exp());
        assert!((a[0] - expected).abs() < 1e-9, "a0 = {}, expected {expected}", a[0]);

        // Constant state -> uniform optimum.
        let cfg10 = SyntheticConfig::equal(10, 1.3, 0.0).unwrap();
        let u = synthetic_optimal_allocation(&[0.4; 10], &cfg10).unwrap();
        assert!(u.linf_distance(&uniform_allocation(10).unwrap()) < 1e-12);
    }

    #[test]
    fn optimum_verified_by_grid_search() {
        // Dense grid over the 1-simplex at step 1e-5.
        let cfg = SyntheticConfig::equal(2, 0.5, 0.0).unwrap();
        let x = [0.9, 0.1];
        let opt = synthetic_optimal_allocation(&x, &cfg).unwrap();
        let mut best = f64::MIN;
        let mut best_a0 = 0.0;
        let steps = 100_000;
        for k in 0..=steps {
            let a0 = k as f64 / steps as f64;
            let a = Allocation::new(vec![a0, 1.0 - a0]).unwrap();
            let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
            if r > best {
                best = r;
                best_a0 = a0;
            }
        }
        assert!((opt[0] - best_a0).abs() < 2e-5);
    }

    #[test]
    fn optimum_beats_random_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SyntheticConfig::spread(5, 1.0, 0.6, 0.0).unwrap();
        for _ in 0..20 {
            let x = draw_state(5, &mut rng);
            let opt = synthetic_optimal_allocation(&x, &cfg).unwrap();
            let r_opt = synthetic_reward::<ChaCha8Rng>(&x, &opt, &cfg, None);
            for _ in 0..500 {
                let a = dirichlet_flat(5, &mut rng).unwrap();
                let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
                assert!(r <= r_opt + 1e-9);
            }
        }
    }

    #[test]
    fn reward_invariance_exactly_when_weights_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let equal = SyntheticConfig::equal(6, 0.9, 0.0).unwrap();
        let spread = SyntheticConfig::spread(6, 1.0, 0.8, 0.0).unwrap();
        for _ in 0..100 {
            let x = draw_state(6, &mut rng);
            let a = dirichlet_flat(6, &mut rng).unwrap();
            let sigma = Permutation::random(6, &mut rng);
            let xs = sigma.apply_slice(&x).unwrap();
            let as_ = sigma.apply_allocation(&a).unwrap();

            let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &equal, None);
            let rp = synthetic_reward::<ChaCha8Rng>(&xs, &as_, &equal, None);
            assert!((r - rp).abs() < 1e-12);

            let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &spread, None);
            let rp = synthetic_reward::<ChaCha8Rng>(&xs, &as_, &spread, None);
            let bound: f64 = spread.epsilon()
                * a.weights().iter().map(|&ai| xlogx(ai).abs()).sum::<f64>();
            assert!((r - rp).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn augment_no_op_at_original_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SyntheticConfig::equal(4, 1.0, 0.0).unwrap();
        let examples: Vec<LabeledExample> = (0..7)
            .map(|_| {
                let x = draw_state(4, &mut rng);
                let a = dirichlet_flat(4, &mut rng).unwrap();
                let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
                (x, a, r)
            })
            .collect();
        let out = permute_augment(&examples, 7, &mut rng).unwrap();
        assert_eq!(out, examples);
    }

    #[test]
    fn augment_labels_exact_when_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = SyntheticConfig::equal(5, 0.8, 0.0).unwrap();
        let examples: Vec<LabeledExample> = (0..10)
            .map(|_| {
                let x = draw_state(5, &mut rng);
                let a = dirichlet_flat(5, &mut rng).unwrap();
                let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
                (x, a, r)
            })
            .collect();
        let out = permute_augment(&examples, 200, &mut rng).unwrap();
        for (x, a, r) in &out {
            let recomputed = synthetic_reward::<ChaCha8Rng>(x, a, &cfg, None);
            assert!((r - recomputed).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_label_bias_bounded_by_weight_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 6;
        let cfg = SyntheticConfig::spread(m, 1.0, 0.8, 0.0).unwrap();
        let examples: Vec<LabeledExample> = (0..10)
            .map(|_| {
                let x = draw_state(m, &mut rng);
                let a = dirichlet_flat(m, &mut rng).unwrap();
                let r = synthetic_reward::<ChaCha8Rng>(&x, &a, &cfg, None);
                (x, a, r)
            })
            .collect();
        let out = permute_augment(&examples, 300, &mut rng).unwrap();
        for (x, a, r) in &out {
            let recomputed = synthetic_reward::<ChaCha8Rng>(x, a, &cfg, None);
            let max_term = a
                .weights()
                .iter()
                .map(|&ai| xlogx(ai).abs())
                .fold(0.0, f64::max);
            let bound = cfg.epsilon() * max_term * m as f64;
            assert!(
                (r - recomputed).abs() <= bound + 1e-12,
                "bias {} above bound {bound}",
                (r - recomputed).abs()
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = SyntheticConfig::spread(4, 1.0, 0.4, 0.0).unwrap();
        let x = draw_state(4, &mut rng);
        let a = dirichlet_flat(4, &mut rng).unwrap();
        let g = synthetic_reward_grad(&x, &a, &cfg);
        let h = 1e-7;
        for i in 0..4 {
            let mut wp = a.weights().to_vec();
            wp[i] += h;
            let mut wm = a.weights().to_vec();
            wm[i] -= h;
            // Off-simplex probe is fine: the reward formula extends smoothly.
            let rp: f64 = (0..4)
                .map(|j| x[j] * wp[j] - cfg.entropy_weights[j] * xlogx(wp[j]))
                .sum();
            let rm: f64 = (0..4)
                .map(|j| x[j] * wm[j] - cfg.entropy_weights[j] * xlogx(wm[j]))
                .sum();
            let fd = (rp - rm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn epsilon_matches_weight_range() {
        let cfg = SyntheticConfig::new(vec![0.6, 1.4, 1.0], 0.0).unwrap();
        assert!((cfg.epsilon() - 0.8).abs() < 1e-12);
    }
}
