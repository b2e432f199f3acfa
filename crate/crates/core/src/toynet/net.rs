//! Parameter storage and the encoder/decoder stacks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{max_pool2, relu, relu_backward, unpool2, unpool2_backward, upsample2, upsample2_backward, Conv3, Dense, Tensor};

/// One named parameter tensor inside a flat buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub fan_in: usize,
    pub is_bias: bool,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter buffer plus the layout of its named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    pub specs: Vec<ParamSpec>,
    pub values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self { specs: Vec::new(), values: Vec::new() }
    }

    fn push(&mut self, name: String, shape: Vec<usize>, fan_in: usize, is_bias: bool) -> usize {
        let offset = self.values.len();
        let spec = ParamSpec { name, shape, offset, fan_in, is_bias };
        self.values.resize(offset + spec.len(), 0.0);
        self.specs.push(spec);
        offset
    }

    pub fn conv(&mut self, name: &str, input: usize, output: usize) -> Conv3 {
        let offset = self.push(format!("{name}.weight"), vec![output, input, 3, 3], input * 9, false);
        self.push(format!("{name}.bias"), vec![output], input * 9, true);
        Conv3 { input, output, offset }
    }

    pub fn dense(&mut self, name: &str, input: usize, output: usize) -> Dense {
        let offset = self.push(format!("{name}.weight"), vec![output, input], input, false);
        self.push(format!("{name}.bias"), vec![output], input, true);
        Dense { input, output, offset }
    }

    /// Fan-in-scaled uniform weights `U(±√(6/fan_in))`, zero biases. Values are
    /// rounded to 32-bit floats so a checkpoint of a fresh model is lossless.
    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        for spec in &self.specs {
            let slot = &mut self.values[spec.offset..spec.offset + spec.len()];
            if spec.is_bias {
                slot.fill(0.0);
            } else {
                let bound = (6.0 / spec.fan_in as f64).sqrt();
                for v in slot.iter_mut() {
                    *v = rng.random_range(-bound..bound) as f32 as f64;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec_at(&self, index: usize) -> &ParamSpec {
        let pos = self.specs.partition_point(|s| s.offset <= index);
        &self.specs[pos - 1]
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Three conv → max-pool → rectifier stages followed by a dense projection.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub convs: Vec<Conv3>,
    pub fc: Dense,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    /// Inputs of each conv stage.
    pub inputs: Vec<Tensor>,
    /// Pooled (pre-rectifier) maps of each stage.
    pub pooled: Vec<Tensor>,
    pub switches: Vec<Vec<u32>>,
    pub flat: Vec<f64>,
}

impl Encoder {
    pub fn build(store: &mut ParamStore, prefix: &str, size: usize, channels: usize, filters: &[usize], code: usize) -> Self {
        let mut convs = Vec::new();
        let mut cin = channels;
        for (i, &f) in filters.iter().enumerate() {
            convs.push(store.conv(&format!("{prefix}.conv{i}"), cin, f));
            cin = f;
        }
        let side = size >> filters.len();
        let fc = store.dense(&format!("{prefix}.fc"), cin * side * side, code);
        Self { convs, fc, size }
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> (Vec<f64>, EncoderCache) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pooled = Vec::with_capacity(self.convs.len());
        let mut switches = Vec::with_capacity(self.convs.len());
        let mut t = x.clone();
        for conv in &self.convs {
            let y = conv.forward(params, &t);
            let (p, s) = max_pool2(&y);
            inputs.push(t);
            t = relu(&p);
            pooled.push(p);
            switches.push(s);
        }
        let flat = t.data;
        let z = self.fc.forward(params, &flat);
        (z, EncoderCache { inputs, pooled, switches, flat })
    }

    /// Accumulates parameter gradients; returns the gradient on the input image.
    pub fn backward(&self, params: &[f64], grads: &mut [f64], cache: &EncoderCache, dz: &[f64]) -> Tensor {
        let dflat = self.fc.backward(params, grads, &cache.flat, dz);
        let last = cache.pooled.last().expect("encoder has stages");
        let mut dt = Tensor::from_vec(last.c, last.h, last.w, dflat);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let dp = Tensor { data: relu_backward(&cache.pooled[i].data, &dt.data), ..dt };
            let dy = unpool2(&dp, &cache.switches[i]);
            dt = conv.backward(params, grads, &cache.inputs[i], &dy);
        }
        dt
    }
}

/// Dense → rectifier → reshape, then three upsample → conv stages mirroring the
/// encoder, rectified except after the last. With `skip`, upsampling reuses the
/// encoder's pooling switches; otherwise it is nearest-neighbor.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub fc: Dense,
    pub convs: Vec<Conv3>,
    pub skip: bool,
    pub base: (usize, usize, usize),
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    pub z: Vec<f64>,
    pub pre: Vec<f64>,
    /// Inputs of each conv stage (after upsampling).
    pub inputs: Vec<Tensor>,
    /// Conv outputs of each stage (pre-rectifier).
    pub outputs: Vec<Tensor>,
}

impl Decoder {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        size: usize,
        filters: &[usize],
        code: usize,
        out_channels: usize,
        skip: bool,
    ) -> Self {
        let side = size >> filters.len();
        let top = *filters.last().expect("at least one stage");
        let fc = store.dense(&format!("{prefix}.fc"), code, top * side * side);
        let mut convs = Vec::new();
        let mut cin = top;
        for i in (0..filters.len()).rev() {
            let cout = if i == 0 { out_channels } else { filters[i - 1] };
            convs.push(store.conv(&format!("{prefix}.conv{i}"), cin, cout));
            cin = cout;
        }
        Self { fc, convs, skip, base: (top, side, side) }
    }

    pub fn forward(&self, params: &[f64], z: &[f64], switches: &[Vec<u32>]) -> (Tensor, DecoderCache) {
        let pre = self.fc.forward(params, z);
        let (c, h, w) = self.base;
        let mut t = Tensor::from_vec(c, h, w, pre.iter().map(|v| v.max(0.0)).collect());
        let stages = self.convs.len();
        let mut inputs = Vec::with_capacity(stages);
        let mut outputs = Vec::with_capacity(stages);
        for (j, conv) in self.convs.iter().enumerate() {
            let up = if self.skip { unpool2(&t, &switches[stages - 1 - j]) } else { upsample2(&t) };
            let y = conv.forward(params, &up);
            inputs.push(up);
            t = if j + 1 < stages { relu(&y) } else { y.clone() };
            outputs.push(y);
        }
        (t, DecoderCache { z: z.to_vec(), pre, inputs, outputs })
    }

    /// Accumulates parameter gradients; returns the gradient on the code.
    pub fn backward(&self, params: &[f64], grads: &mut [f64], cache: &DecoderCache, switches: &[Vec<u32>], dout: &Tensor) -> Vec<f64> {
        let stages = self.convs.len();
        let mut dt = dout.clone();
        for j in (0..stages).rev() {
            let dy = if j + 1 < stages {
                Tensor { data: relu_backward(&cache.outputs[j].data, &dt.data), ..dt }
            } else {
                dt
            };
            let dup = self.convs[j].backward(params, grads, &cache.inputs[j], &dy);
            dt = if self.skip { unpool2_backward(&dup, &switches[stages - 1 - j]) } else { upsample2_backward(&dup) };
        }
        let dpre = relu_backward(&cache.pre, &dt.data);
        self.fc.backward(params, grads, &cache.z, &dpre)
    }
}

/// Plain convolutional autoencoder: encoder to a bottleneck, nearest-neighbor decoder.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    pub encoder: Encoder,
    pub decoder: Decoder,
}

#[derive(Clone, Debug)]
pub struct AutoencoderCache {
    pub encoder: EncoderCache,
    pub decoder: DecoderCache,
}

impl Autoencoder {
    pub fn build(store: &mut ParamStore, prefix: &str, size: usize, filters: &[usize], bottleneck: usize) -> Self {
        let encoder = Encoder::build(store, &format!("{prefix}.enc"), size, 3, filters, bottleneck);
        let decoder = Decoder::build(store, &format!("{prefix}.dec"), size, filters, bottleneck, 3, false);
        Self { encoder, decoder }
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> (Tensor, AutoencoderCache) {
        let (z, encoder) = self.encoder.forward(params, x);
        let (y, decoder) = self.decoder.forward(params, &z, &[]);
        (y, AutoencoderCache { encoder, decoder })
    }

    /// Gradient on the input given the gradient on the reconstruction.
    pub fn backward(&self, params: &[f64], grads: &mut [f64], cache: &AutoencoderCache, dy: &Tensor) -> Tensor {
        let dz = self.decoder.backward(params, grads, &cache.decoder, &[], dy);
        self.encoder.backward(params, grads, &cache.encoder, &dz)
    }
}
