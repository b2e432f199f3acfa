//! Writes a reproducible synthetic dataset and prints its manifest hash.
//!
//! ```bash
//! cargo run --release -p nfed --example synth_dataset -- 16 /tmp/scenes
//! ```

use std::path::PathBuf;

use nfed::synth::{generate_dataset, manifest_hash, Split, SynthConfig};

fn main() -> nfed::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(16);
    let dir = args.get(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("nfed_scenes"));
    let manifest = generate_dataset(count, 32, 7, &SynthConfig::default(), &dir)?;
    let val = manifest.samples.iter().filter(|s| s.split == Split::Val).count();
    println!("{} scenes ({} val) in {}", manifest.count, val, dir.display());
    println!("manifest sha256 {}", manifest_hash(&dir)?);
    Ok(())
}
