//! Least-squares light estimation from an image and its normals, with and
//! without pixel noise.
//!
//! ```bash
//! cargo run --release -p nfed --example estimate_light
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nfed::shading::estimate_light;
use nfed::synth::{generate_scene, SynthConfig};

fn main() -> nfed::Result<()> {
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    println!("seed  clean_rel_err  noisy_rel_err");
    for seed in 0..5 {
        let s = generate_scene(64, seed, &SynthConfig::default())?;
        // Dividing out the albedo leaves pure shading.
        let flat = s.image.zip_map(&s.gt_albedo, |i, a| i / a)?;
        let clean = estimate_light(&flat, &s.gt_normals, &s.gt_mask)?;
        let mut noisy_img = flat.clone();
        noisy_img.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let noisy = estimate_light(&noisy_img, &s.gt_normals, &s.gt_mask)?;
        println!(
            "{seed:>4}  {:.3e}      {:.3e}",
            clean.relative_error(&s.gt_light),
            noisy.relative_error(&s.gt_light)
        );
    }
    Ok(())
}
