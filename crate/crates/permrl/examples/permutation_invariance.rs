//! The allocation policy commutes with relabeling of the entities:
//! permuting the rows of the state matrix permutes the output weights
//! and nothing else. This holds exactly (up to floating-point noise)
//! for every parameter setting, not just trained ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use permrl::policy::{forward, init_near_zero, StateLayout};
use permrl::state::{apply_permutation, Permutation, StateMatrix};

fn main() -> permrl::Result<()> {
    let layout = StateLayout {
        has_prev_weight: true,
        channels: 3,
        steps: 5,
    };
    let m = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = init_near_zero(16, 3, 0.5, &mut rng)?;

    let rows = (0..m)
        .map(|i| {
            (0..layout.row_width())
                .map(|j| 1.0 + 0.1 * ((i * 31 + j * 17) % 13) as f64 / 13.0)
                .collect()
        })
        .collect();
    let x = StateMatrix::new(rows)?;
    let sigma = Permutation::random(m, &mut rng);

    let base = forward(&params, &layout, &x)?;
    let permuted_state = forward(&params, &layout, &apply_permutation(&x, &sigma)?)?;
    let permuted_output = sigma.apply_allocation(&base)?;

    println!("policy(x)          = {:?}", base.weights());
    println!("policy(sigma(x))   = {:?}", permuted_state.weights());
    println!("sigma(policy(x))   = {:?}", permuted_output.weights());
    println!(
        "max deviation      = {:.3e}",
        permuted_state.linf_distance(&permuted_output)
    );
    Ok(())
}
