//! Plain convolutional autoencoder with one undivided code, for side-by-side
//! comparison with the disentangling model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::net::{Autoencoder, ParamStore};
use super::ToyConfig;
use crate::error::{Error, Result};
use crate::imaging::PixelField;
use crate::optim::{Adam, AdamParams};
use crate::synth::SceneSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub size: usize,
    pub filters: Vec<usize>,
    pub code: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self::matching(&ToyConfig::default())
    }
}

impl BaselineConfig {
    /// 64×64 input, 32/64/64 filters, 265 = 128 + 128 + 9 code entries.
    pub fn full_scale() -> Self {
        Self { code: 265, ..Self::matching(&ToyConfig::full_scale()) }
    }

    /// Same stacks and schedule as `toy`, code as wide as its albedo, normal and
    /// one-channel light codes together.
    pub fn matching(toy: &ToyConfig) -> Self {
        Self {
            size: toy.size,
            filters: toy.filters.clone(),
            code: 2 * toy.z_factor + 9,
            epochs: toy.epochs,
            batch: toy.batch,
            lr: toy.lr,
            seed: toy.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let toy = ToyConfig {
            size: self.size,
            filters: self.filters.clone(),
            z_shared: self.code,
            z_factor: self.code,
            batch: self.batch,
            lr: self.lr,
            ..ToyConfig::default()
        };
        toy.validate()
    }
}

#[derive(Clone, Debug)]
pub struct BaselineModel {
    pub config: BaselineConfig,
    pub params: ParamStore,
    net: Autoencoder,
}

impl BaselineModel {
    pub fn new(config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let net = Autoencoder::build(&mut params, "baseline", config.size, &config.filters, config.code);
        params.init(&mut ChaCha8Rng::seed_from_u64(config.seed));
        Ok(Self { config, params, net })
    }

    fn check(&self, image: &PixelField) -> Result<()> {
        let s = self.config.size;
        image.check_extent(s, s, "baseline input")?;
        if image.channels() != 3 {
            return Err(Error::shape("baseline input channels", 3, image.channels()));
        }
        Ok(())
    }

    pub fn forward(&self, image: &PixelField) -> Result<PixelField> {
        self.check(image)?;
        let s = self.config.size;
        let (y, _) = self.net.forward(&self.params.values, &Tensor::from_hwc(s, s, 3, image.data()));
        PixelField::new(s, s, 3, y.to_hwc())
    }

    /// Mean squared reconstruction error and its parameter gradient over `batch`.
    pub fn objective(&self, batch: &[&PixelField]) -> Result<(f64, Vec<f64>)> {
        let s = self.config.size;
        let mut grads = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for image in batch {
            self.check(image)?;
            let x = Tensor::from_hwc(s, s, 3, image.data());
            let (y, cache) = self.net.forward(&self.params.values, &x);
            let n = (x.data.len() * batch.len()) as f64;
            let dy: Vec<f64> = y.data.iter().zip(&x.data).map(|(a, b)| 2.0 * (a - b) / n).collect();
            total += y.data.iter().zip(&x.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            self.net.backward(&self.params.values, &mut grads, &cache, &Tensor { data: dy, ..y });
        }
        Ok((total, grads))
    }

    /// Adam on the reconstruction error. Returns the mean error of each epoch.
    pub fn train(&mut self, samples: &[SceneSample]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::EmptySet("training set"));
        }
        let mut adam = Adam::new(self.params.len(), AdamParams::with_lr(self.config.lr));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0xba5e);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut sum = 0.0;
            let chunks = order.chunks(self.config.batch);
            let count = chunks.len() as f64;
            for chunk in chunks {
                let batch: Vec<&PixelField> = chunk.iter().map(|&i| &samples[i].image).collect();
                let (loss, grads) = self.objective(&batch)?;
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NanGradient { layer: "baseline".into() });
                }
                adam.step(&mut self.params.values, &grads);
                sum += loss;
            }
            history.push(sum / count);
        }
        Ok(history)
    }
}
