use nfed::losses::LossWeights;
use nfed::synth::{assign_splits, generate_scene, sample_seeds, SceneSample, Split, SynthConfig};
use nfed::toynet::{load_checkpoint, train, ToyConfig, ToyModel};

pub fn scenes(size: usize, count: usize) -> nfed::Result<(Vec<SceneSample>, Vec<SceneSample>)> {
    let seeds = sample_seeds(count, 7);
    let (mut train_set, mut val_set) = (Vec::new(), Vec::new());
    for (seed, split) in seeds.iter().zip(assign_splits(&seeds)) {
        let s = generate_scene(size, *seed, &SynthConfig::default())?;
        match split {
            Split::Train => train_set.push(s),
            Split::Val => val_set.push(s),
        }
    }
    Ok((train_set, val_set))
}

#[allow(dead_code)]
/// Loads the checkpoint at `path`, or trains a small model for a few epochs.
pub fn model(path: Option<&String>) -> nfed::Result<ToyModel> {
    if let Some(p) = path {
        return load_checkpoint(p);
    }
    let config = ToyConfig { epochs: 8, batch: 8, ..ToyConfig::default() };
    let (train_set, val_set) = scenes(config.size, 128)?;
    let mut model = ToyModel::new(config)?;
    println!("no checkpoint given, training {} epochs on {} scenes", model.config.epochs, train_set.len());
    train(&mut model, &train_set, &val_set, &LossWeights::default(), None)?;
    Ok(model)
}
