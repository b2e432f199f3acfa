//! Decomposes one scene, then relights it with another scene's light both
//! through the detailed albedo and directly from the recovered albedo.
//!
//! ```bash
//! cargo run --release -p nfed --example relight_transfer -- /tmp/relight
//! ```

use std::path::PathBuf;

use nfed::edits::{relight_direct, transfer_lighting, EditLayers};
use nfed::imaging::save_png;
use nfed::solver::{default_weights, masked_mse, solve, SolverConfig};
use nfed::synth::{generate_scene, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("nfed_relight"));
    std::fs::create_dir_all(&out)?;
    let target = generate_scene(64, 21, &SynthConfig::default())?;
    let source = generate_scene(64, 22, &SynthConfig::default())?;

    let decomp = solve(&target.image, &target.gt_normals, &target.gt_mask, &SolverConfig::default(), &default_weights())?;
    let layers = EditLayers::from_solver(&target.image, &decomp)?;
    let transferred = transfer_lighting(&layers, &source.gt_light, 1e-3)?;
    let direct = relight_direct(&layers, &source.gt_light)?;
    let truth = target.render_with_light(&source.gt_light)?;

    println!("transfer vs ground truth relit: {:.3e}", masked_mse(&transferred.output, &truth, &target.gt_mask)?);
    println!("direct   vs ground truth relit: {:.3e}", masked_mse(&direct, &truth, &target.gt_mask)?);
    save_png(&target.image, out.join("target.png"), false)?;
    save_png(&transferred.output, out.join("transfer.png"), false)?;
    save_png(&direct, out.join("direct.png"), false)?;
    save_png(&truth, out.join("truth.png"), false)?;
    println!("images in {}", out.display());
    Ok(())
}
