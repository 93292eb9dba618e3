//! Prioritized task sampling in isolation: tasks with larger smoothed scores
//! are drawn more often (p_t proportional to s_t^alpha), and the raw
//! importance weights exactly undo the induced bias so the weighted gradient
//! estimate stays unbiased.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use permrl::sampler::SamplerState;
use permrl::stats::mean;

fn main() -> permrl::Result<()> {
    let scores = [0.25, 0.5, 1.0, 2.0];
    let mut sampler = SamplerState::new(scores.len(), 0.5, 1.0, 0.2)?;
    // Feed each score repeatedly so the EMA converges to it.
    for (task, &s) in scores.iter().enumerate() {
        for _ in 0..1000 {
            sampler.update_score(task, s)?;
        }
    }

    let probs = sampler.probabilities();
    let raw = sampler.raw_is_weights();
    let normalized = sampler.is_weights();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 200_000;
    let mut counts = vec![0usize; scores.len()];
    for _ in 0..draws {
        counts[sampler.sample_task(&mut rng)] += 1;
    }

    println!("task  score  p_t      freq     w_raw    w_norm");
    for t in 0..scores.len() {
        println!(
            "{t:>4}  {:>5}  {:.5}  {:.5}  {:.5}  {:.5}",
            scores[t],
            probs[t],
            counts[t] as f64 / draws as f64,
            raw[t],
            normalized[t]
        );
    }

    // Unbiasedness: sum_t p_t * w_t * g_t == mean_t g_t for any per-task g.
    let g = [0.3, -0.7, 1.1, 0.2];
    let weighted: f64 = (0..g.len()).map(|t| probs[t] * raw[t] * g[t]).sum();
    println!(
        "weighted estimate {weighted:.12} vs uniform mean {:.12}",
        mean(&g)
    );
    Ok(())
}
