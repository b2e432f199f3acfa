//! Swaps the light code between validation pairs and compares the result to
//! the ground-truth relit image. Also swaps albedo codes and writes the images.
//!
//! ```bash
//! cargo run --release -p nfed --example latent_swap -- [model.nfed] [out_dir]
//! ```

mod common;

use std::path::PathBuf;

use nfed::imaging::save_png;
use nfed::toynet::{light_swap_error, Factor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = common::model(args.first().filter(|a| *a != "-"))?;
    let out = args.get(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("nfed_swap"));
    std::fs::create_dir_all(&out)?;
    let (_, val) = common::scenes(model.config.size, 512)?;
    for k in 0..val.len().min(16) / 2 {
        let (a, b) = (&val[2 * k], &val[2 * k + 1]);
        println!("pair {k}: light-swap masked MSE {:.4}", light_swap_error(&model, a, b)?);
        let albedo_swap = model.latent_swap(&a.image, &b.image, Factor::Albedo)?;
        let light_swap = model.latent_swap(&a.image, &b.image, Factor::Light)?;
        save_png(&albedo_swap, out.join(format!("pair{k}_albedo.png")), false)?;
        save_png(&light_swap, out.join(format!("pair{k}_light.png")), false)?;
    }
    println!("images in {}", out.display());
    Ok(())
}
