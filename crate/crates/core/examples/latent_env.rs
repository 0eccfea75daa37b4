//! Generates masked transitions from the latent shift environment. A masked
//! action leaves four possible next states, so those samples are labelled
//! multimodal.

use mixmode::datasets::{gen_transitions, ActionToken, LatentShiftEnv, Modality};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mixmode::Result<()> {
    let env = LatentShiftEnv::new(4)?;
    let state = vec![0.0; 4];
    for a in ActionToken::VALID {
        println!("{:>5} -> {:?}", a.as_str(), env.mean_next_state(&state, a)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = env.random_start(&mut rng);
    println!("noisy step from {:.2?}: {:.2?}", s, env.step(&s, ActionToken::Jump, &mut rng)?);

    let samples = gen_transitions(&env, 1000, 0.5, 42)?;
    let masked = samples.iter().filter(|t| t.label == Modality::Multimodal).count();
    println!("{} samples, {masked} masked", samples.len());
    for t in samples.iter().take(4) {
        println!(
            "id {} token {:<6} driving {:<5} {:?} input width {}",
            t.id,
            t.action_token.as_str(),
            t.driving_action.as_str(),
            t.label,
            t.model_input().len()
        );
    }
    Ok(())
}
