//! Policy checkpoints round-trip bit-exactly through JSON: every weight is
//! recovered with an identical bit pattern, so a rerun from a checkpoint
//! reproduces the original run byte for byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use permrl::policy::{init_near_zero, load_checkpoint, save_checkpoint};

fn main() -> permrl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = init_near_zero(8, 3, 1e-2, &mut rng)?;

    let dir = std::env::temp_dir().join("permrl-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("policy.json");
    save_checkpoint(&params, &path)?;
    let restored = load_checkpoint(&path)?;

    let pairs = params
        .encoder_input
        .iter()
        .zip(&restored.encoder_input)
        .chain(params.encoder_recurrent.iter().zip(&restored.encoder_recurrent))
        .chain(params.encoder_bias.iter().zip(&restored.encoder_bias))
        .chain(params.score_weights.iter().zip(&restored.score_weights))
        .chain(std::iter::once((&params.score_bias, &restored.score_bias)));

    let mut checked = 0usize;
    for (a, b) in pairs {
        assert_eq!(a.to_bits(), b.to_bits());
        checked += 1;
    }
    println!("checkpoint at {}", path.display());
    println!("{checked} parameters restored bit-exactly");
    Ok(())
}
