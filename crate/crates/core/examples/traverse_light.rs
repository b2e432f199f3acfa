//! Brightens scenes by walking their light codes toward codes of brightly lit
//! scenes, for several step strengths and both traversal modes.
//!
//! ```bash
//! cargo run --release -p nfed --example traverse_light -- [model.nfed]
//! ```

mod common;

use nfed::edits::{edit_and_decode, AttributeSets, TraversalConfig, TraversalMode};
use nfed::synth::{generate_scene, masked_channel_means, SynthConfig};
use nfed::toynet::{Factor, ToyModel};

fn light_codes(model: &ToyModel, scale: f64, base: u64) -> nfed::Result<Vec<Vec<f64>>> {
    let size = model.config.size;
    (0..12)
        .map(|k| {
            let light = generate_scene(size, base + k, &SynthConfig::default())?.gt_light.scale(scale);
            let synth = SynthConfig { fixed_light: Some(light), ..SynthConfig::default() };
            Ok(model.encode(&generate_scene(size, base + 500 + k, &synth)?.image)?.latents.light)
        })
        .collect()
}

fn main() -> nfed::Result<()> {
    let model = common::model(std::env::args().nth(1).as_ref())?;
    let sets = AttributeSets::new(light_codes(&model, 1.25, 7000)?, light_codes(&model, 0.6, 8000)?, Factor::Light)?;
    let target = generate_scene(model.config.size, 9000, &SynthConfig::default())?;
    let mean = |f: &nfed::imaging::PixelField| masked_channel_means(f, &target.gt_mask).iter().sum::<f64>() / 3.0;
    let plain = mean(&model.forward(&target.image)?.shading);
    for mode in [TraversalMode::MeanShiftLinear, TraversalMode::KernelWeighted] {
        for lambda in [0.07, 0.05, 0.03] {
            let config = TraversalConfig { lambda, mode, ..TraversalConfig::default() };
            let edited = edit_and_decode(&model, &target.image, &[&sets], &config)?;
            println!("{mode:?} lambda {lambda}: mean shading {plain:.4} -> {:.4}", mean(&edited.shading));
        }
    }
    Ok(())
}
