//! Trains the toy disentangling network on synthetic scenes and runs the
//! light-swap test on validation pairs.
//!
//! cargo run --release --example train_toy -- [samples] [epochs] [out_dir|-] [lr] [batch]

use std::time::Instant;

use nfed::losses::LossWeights;
use nfed::synth::{assign_splits, generate_scene, sample_seeds, Split, SynthConfig};
use nfed::toynet::{light_swap_error, train, ToyConfig, ToyModel};

fn main() -> nfed::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(512);
    let mut config = ToyConfig::default();
    if let Some(e) = args.get(1).and_then(|s| s.parse().ok()) {
        config.epochs = e;
    }
    let out_dir = args.get(2).filter(|s| *s != "-").map(std::path::PathBuf::from);
    if let Some(lr) = args.get(3).and_then(|s| s.parse().ok()) {
        config.lr = lr;
    }
    if let Some(b) = args.get(4).and_then(|s| s.parse().ok()) {
        config.batch = b;
    }

    let seeds = sample_seeds(count, 7);
    let synth = SynthConfig::default();
    let (mut train_set, mut val_set) = (Vec::new(), Vec::new());
    for (seed, split) in seeds.iter().zip(assign_splits(&seeds)) {
        let s = generate_scene(config.size, *seed, &synth)?;
        match split {
            Split::Train => train_set.push(s),
            Split::Val => val_set.push(s),
        }
    }
    println!("{} train / {} val scenes at {}x{}", train_set.len(), val_set.len(), config.size, config.size);

    let mut model = ToyModel::new(config)?;
    let (g, d) = model.parameter_count();
    println!("generator {g} params, discriminator {d} params");
    let start = Instant::now();
    let summary = train(&mut model, &train_set, &val_set, &LossWeights::default(), out_dir.as_deref())?;
    for e in &summary.epochs {
        println!(
            "epoch {:3}  objective {:.5}  d_loss {:.5}  val_mse {:.5}",
            e.epoch,
            e.train_total,
            e.d_loss,
            e.val_mse.unwrap_or(f64::NAN)
        );
    }
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let pairs = val_set.len() / 2;
    let mut swap = 0.0;
    for k in 0..pairs {
        swap += light_swap_error(&model, &val_set[2 * k], &val_set[2 * k + 1])?;
    }
    println!("light-swap masked MSE over {pairs} pairs: {:.5}", swap / pairs as f64);
    Ok(())
}
