//! Dice, focal and combined losses on a toy prediction, with a few steps of
//! gradient descent on the probabilities.

use mitoseg::losses::{combined_loss, combined_loss_grad, dice_loss, focal_loss, LossConfig};
use mitoseg::pipeline::synth_mask_from_points;
use mitoseg::ProbMap;

fn main() -> mitoseg::Result<()> {
    let target = synth_mask_from_points(&[(8.0, 8.0), (22.0, 20.0)], 32, 32, 4);
    let cfg = LossConfig::default();
    let mut probs = vec![0.3; 32 * 32];

    for step in 0..=40 {
        let pred = ProbMap::new(32, 32, probs.clone())?;
        if step % 10 == 0 {
            println!(
                "step {step:2}: dice {:.4} focal {:.5} combined {:.4}",
                dice_loss(&pred, &target, &cfg)?,
                focal_loss(&pred, &target, &cfg)?,
                combined_loss(&pred, &target, &cfg)?
            );
        }
        let grad = combined_loss_grad(&pred, &target, &cfg)?;
        for (p, g) in probs.iter_mut().zip(grad) {
            *p = (*p - 200.0 * g).clamp(1e-4, 1.0 - 1e-4);
        }
    }
    Ok(())
}
