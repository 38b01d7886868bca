//! Estimates the two stains of a synthetic H&E-like patch and renders a few
//! randomly perturbed copies.
//!
//! `cargo run --example stain_augmentation [OUT_DIR]`

use mitoseg::io::save_image;
use mitoseg::pipeline::{random_concentrations, reference_stains, two_stain_image};
use mitoseg::stain::{estimate_stains, perturb, sample_perturbation, VahadaneParams};

fn main() -> mitoseg::Result<()> {
    let out_dir = std::env::args().nth(1);
    let conc = random_concentrations(128, 128, 0.2, 0.6, 1)?;
    let image = two_stain_image(&reference_stains(), &conc);

    let params = VahadaneParams::default();
    let est = estimate_stains(&image, &params)?;
    println!("tissue pixels: {}", est.tissue_pixels);
    for (k, col) in est.stains.columns().iter().enumerate() {
        println!("stain {k}: [{:.3}, {:.3}, {:.3}]", col[0], col[1], col[2]);
    }
    println!(
        "objective {:.3} -> {:.3} in {} steps",
        est.objective_history[0],
        est.objective_history.last().unwrap(),
        est.objective_history.len() - 1
    );

    for seed in 0..3 {
        let pert = sample_perturbation(seed, 0.2, 0.2)?;
        let aug = perturb(
            &image,
            &est.stains,
            &est.concentrations,
            &pert,
            params.white_point,
        )?;
        let mean: f64 =
            aug.data().iter().map(|&v| f64::from(v)).sum::<f64>() / aug.data().len() as f64;
        println!(
            "seed {seed}: alpha {:.3?} beta {:.3?} mean intensity {mean:.1}",
            pert.alpha, pert.beta
        );
        if let Some(dir) = &out_dir {
            save_image(&aug, format!("{dir}/augmented_{seed}.ppm"))?;
        }
    }
    Ok(())
}
