//! Forward pass of a small randomly initialized VM-UNet, printing the shape
//! of every stage.
//!
//! `cargo run --release --example vmunet_forward [SIDE]`

use mitoseg::network::{init_weights, parameter_shapes, VmUnet, VmUnetConfig};
use mitoseg::pipeline::{random_concentrations, reference_stains, two_stain_image};

fn main() -> mitoseg::Result<()> {
    let side: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(128);
    let cfg = VmUnetConfig::desk();
    let params: usize = parameter_shapes(&cfg)?
        .values()
        .map(|s| s.iter().product::<usize>())
        .sum();
    println!("desk config: {params} parameters");

    let net = VmUnet::new(&init_weights(&cfg, 42)?, &cfg)?;
    let conc = random_concentrations(side, side, 0.3, 0.5, 3)?;
    let image = two_stain_image(&reference_stains(), &conc);
    let start = std::time::Instant::now();
    let (map, trace) = net.forward_traced(&image)?;
    println!("{side}x{side} in {:.2?}", start.elapsed());
    for (k, s) in trace.encoder.iter().enumerate() {
        println!("encoder {k}: {s:?}");
    }
    for (k, s) in trace.decoder.iter().enumerate() {
        println!("decoder {k}: {s:?}");
    }
    let (lo, hi) = map
        .values()
        .iter()
        .fold((1.0f64, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    println!(
        "output {}x{}, p in [{lo:.4}, {hi:.4}]",
        map.height(),
        map.width()
    );
    Ok(())
}
