//! Decomposes synthetic scenes into albedo, shading, normals and light and
//! compares against ground truth.
//!
//! ```bash
//! cargo run --release -p nfed --example decompose_synthetic -- 10
//! ```

use nfed::solver::{default_weights, masked_mae, solve, SolverConfig};
use nfed::synth::{generate_scene, SynthConfig};

fn main() -> nfed::Result<()> {
    let count: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let config = SolverConfig::default();
    let weights = default_weights();
    println!("seed  iters  recon_mse    albedo_mae  shading_mae  light_rel_err");
    for seed in 0..count {
        let scene = generate_scene(64, 1000 + seed, &SynthConfig::default())?;
        let result = solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &config, &weights)?;
        println!(
            "{seed:>4}  {:>5}  {:.3e}  {:.4}      {:.4}       {:.4}",
            result.iterations,
            result.masked_mse(&scene.image)?,
            masked_mae(&result.albedo, &scene.gt_albedo, &scene.gt_mask)?,
            masked_mae(&result.shading, &scene.gt_shading, &scene.gt_mask)?,
            result.light.relative_error(&scene.gt_light),
        );
    }
    Ok(())
}
