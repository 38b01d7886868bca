//! Runs the selective scan sequentially and in chunks on the same input,
//! then applies the four-path 2D scan to a small grid.

use mitoseg::network::{
    scan_order, selective_scan_1d, selective_scan_chunked, ss2d, Ss2dWeights, SsmParams,
    SsmProjection, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mitoseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (len, channels, state) = (2000, 4, 8);
    let mut draw = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    };
    let x = draw(len * channels, -1.0, 1.0);
    let params = SsmParams {
        len,
        channels,
        state,
        delta: draw(len * channels, 0.01, 0.5),
        a: draw(channels * state, -1.5, -0.05),
        b: draw(len * state, -1.0, 1.0),
        c: draw(len * state, -1.0, 1.0),
        d: draw(channels, -1.0, 1.0),
    };
    let seq = selective_scan_1d(&x, &params)?;
    let chunked = selective_scan_chunked(&x, &params, 128)?;
    let diff = seq
        .iter()
        .zip(&chunked)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("length {len}: sequential vs chunked max diff {diff:.2e}");

    println!("path orders on a 2x3 grid:");
    for k in 0..4 {
        println!("  {k}: {:?}", scan_order(2, 3, k));
    }

    let (inner, st, rank) = (3, 4, 1);
    let proj = |salt: f64| SsmProjection {
        inner,
        state: st,
        rank,
        x_proj: (0..(rank + 2 * st) * inner)
            .map(|i| (i as f64 * 0.7 + salt).sin() * 0.3)
            .collect(),
        dt_proj: vec![0.5; inner * rank],
        dt_bias: vec![-1.0; inner],
        a_log: vec![0.0; inner * st],
        d: vec![1.0; inner],
    };
    let weights = Ss2dWeights {
        paths: [0.0, 1.0, 2.0, 3.0].map(proj),
    };
    let grid = Tensor::new(
        [1, 6, 6, inner],
        (0..6 * 6 * inner).map(|i| (i as f64 * 0.1).cos()).collect(),
    )?;
    let y = ss2d(&grid, &weights)?;
    println!(
        "ss2d on {:?}: corner outputs {:.4} {:.4}",
        y.shape(),
        y.get(0, 0, 0, 0),
        y.get(0, 5, 5, 0)
    );
    Ok(())
}
