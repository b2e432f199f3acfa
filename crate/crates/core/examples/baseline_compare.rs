//! Trains the plain autoencoder and the disentangling network on the same
//! scenes and reports validation reconstruction error for both.
//!
//! ```bash
//! cargo run --release -p nfed --example baseline_compare -- 10
//! ```

mod common;

use nfed::losses::LossWeights;
use nfed::toynet::baseline::{BaselineConfig, BaselineModel};
use nfed::toynet::{train, validation_mse, ToyConfig, ToyModel};

fn main() -> nfed::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let toy = ToyConfig { epochs, batch: 8, ..ToyConfig::default() };
    let (train_set, val_set) = common::scenes(toy.size, 256)?;

    let mut baseline = BaselineModel::new(BaselineConfig::matching(&toy))?;
    baseline.train(&train_set)?;
    let mut base_err = 0.0;
    for s in &val_set {
        let out = baseline.forward(&s.image)?;
        base_err += out.data().iter().zip(s.image.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / out.data().len() as f64;
    }

    let mut model = ToyModel::new(toy)?;
    train(&mut model, &train_set, &val_set, &LossWeights::default(), None)?;

    println!("baseline autoencoder val MSE {:.4}", base_err / val_set.len() as f64);
    println!("disentangled network val MSE {:.4}", validation_mse(&model, &val_set)?);
    Ok(())
}
