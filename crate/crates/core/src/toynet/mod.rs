//! Toy-scale disentangling autoencoder with in-network shading, image formation
//! and matting layers.
//!
//! The encoder maps an image to a shared code `Z_I`, from which linear heads
//! produce one code per physical factor: albedo, normals, light (27 SH
//! coefficients used verbatim), background and mask. Albedo and normal decoders
//! see only their own code; background and mask decoders also reuse the encoder's
//! pooling switches. The image is re-rendered from the decoded factors.

pub mod baseline;
mod checkpoint;
pub mod layers;
pub mod net;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{MatteMask, NormalField, PixelField};
use crate::shading::{shade_backward_vectors, shade_vectors, ShCoeffs, SH_LEN};
use crate::solver::{normalize_backward, normalize_or_frontal};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
use layers::{logistic, Dense, Tensor};
use net::{Autoencoder, AutoencoderCache, Decoder, DecoderCache, Encoder, EncoderCache, ParamStore};
pub use train::{
    discriminator_objective, epoch_lr, generator_objective, light_swap_error, train, validation_mse, EpochMetrics,
    TrainSummary,
};

/// Architecture and training schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// Input side length; must be divisible by `2^filters.len()`.
    pub size: usize,
    pub filters: Vec<usize>,
    /// Shared code `Z_I`.
    pub z_shared: usize,
    /// Albedo, normal, background and mask codes.
    pub z_factor: usize,
    /// Discriminator autoencoder bottleneck.
    pub disc_bottleneck: usize,
    /// Adds UV and implicit-normal decoders trained against the face-space targets.
    pub implicit: bool,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch by cosine decay from `lr`; constant when absent.
    pub lr_final: Option<f64>,
    /// Show each training sample through a random symmetry of the square.
    pub augment: bool,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables intermediate ones).
    pub checkpoint_every: usize,
    /// Abort when a batch objective exceeds this multiple of the first one.
    pub divergence_factor: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            size: 32,
            filters: vec![24, 48, 48],
            z_shared: 64,
            z_factor: 48,
            disc_bottleneck: 64,
            implicit: false,
            epochs: 80,
            batch: 4,
            lr: 2e-3,
            lr_final: Some(1e-5),
            augment: true,
            seed: 0,
            checkpoint_every: 10,
            divergence_factor: 10.0,
        }
    }
}

impl ToyConfig {
    /// 64×64 input, 32/64/64 filters and 128-dimensional codes.
    pub fn full_scale() -> Self {
        Self {
            size: 64,
            filters: vec![32, 64, 64],
            z_shared: 128,
            z_factor: 128,
            ..Self::default()
        }
    }

    /// Smallest configuration used by the gradient checks.
    pub fn micro() -> Self {
        Self {
            size: 8,
            filters: vec![2, 3, 3],
            z_shared: 6,
            z_factor: 4,
            disc_bottleneck: 5,
            batch: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stages = self.filters.len();
        if stages == 0 || self.filters.contains(&0) {
            return Err(Error::Config("toynet.filters must be nonempty and positive".into()));
        }
        if self.size == 0 || self.size % (1 << stages) != 0 {
            return Err(Error::Config(format!(
                "toynet.size {} must be a positive multiple of {}",
                self.size,
                1 << stages
            )));
        }
        if self.z_shared == 0 || self.z_factor == 0 || self.disc_bottleneck == 0 {
            return Err(Error::Config("toynet latent dimensions must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("toynet.batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("toynet.lr must be positive, got {}", self.lr)));
        }
        if let Some(f) = self.lr_final.filter(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("toynet.lr_final must be positive, got {f}")));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("toynet.divergence_factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// A latent factor that can be swapped or traversed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Light,
    Albedo,
    Normals,
    Background,
    Mask,
    Uv,
    ImplicitNormals,
}

impl Factor {
    pub const ALL: [Factor; 7] = [
        Factor::Light,
        Factor::Albedo,
        Factor::Normals,
        Factor::Background,
        Factor::Mask,
        Factor::Uv,
        Factor::ImplicitNormals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Light => "light",
            Factor::Albedo => "albedo",
            Factor::Normals => "normals",
            Factor::Background => "background",
            Factor::Mask => "mask",
            Factor::Uv => "uv",
            Factor::ImplicitNormals => "ni",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFactor(s.to_string()))
    }
}

/// Subtracted from every input pixel before encoding.
pub const INPUT_OFFSET: f64 = 0.5;

/// Per-factor codes of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub shared: Vec<f64>,
    pub albedo: Vec<f64>,
    pub normals: Vec<f64>,
    pub light: Vec<f64>,
    pub background: Vec<f64>,
    pub mask: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uv: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ni: Option<Vec<f64>>,
}

impl Latents {
    pub fn get(&self, factor: Factor) -> Result<&Vec<f64>> {
        Ok(match factor {
            Factor::Light => &self.light,
            Factor::Albedo => &self.albedo,
            Factor::Normals => &self.normals,
            Factor::Background => &self.background,
            Factor::Mask => &self.mask,
            Factor::Uv => self.uv.as_ref().ok_or_else(|| Error::UnknownFactor("uv (model has no implicit decoders)".into()))?,
            Factor::ImplicitNormals => {
                self.ni.as_ref().ok_or_else(|| Error::UnknownFactor("ni (model has no implicit decoders)".into()))?
            }
        })
    }

    pub fn get_mut(&mut self, factor: Factor) -> Result<&mut Vec<f64>> {
        Ok(match factor {
            Factor::Light => &mut self.light,
            Factor::Albedo => &mut self.albedo,
            Factor::Normals => &mut self.normals,
            Factor::Background => &mut self.background,
            Factor::Mask => &mut self.mask,
            Factor::Uv => self.uv.as_mut().ok_or_else(|| Error::UnknownFactor("uv (model has no implicit decoders)".into()))?,
            Factor::ImplicitNormals => {
                self.ni.as_mut().ok_or_else(|| Error::UnknownFactor("ni (model has no implicit decoders)".into()))?
            }
        })
    }

    pub fn light_coeffs(&self) -> Result<ShCoeffs> {
        ShCoeffs::from_slice(&self.light)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("latents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Codes plus the pooling switches the skip decoders need.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub latents: Latents,
    pub switches: Vec<Vec<u32>>,
}

/// Decoded factors and the re-rendered image.
#[derive(Clone, Debug)]
pub struct ToyOutputs {
    pub recon: PixelField,
    pub albedo: PixelField,
    pub normals: NormalField,
    pub shading: PixelField,
    pub foreground: PixelField,
    pub mask: MatteMask,
    pub background: PixelField,
    pub latents: Latents,
    pub uv: Option<PixelField>,
    pub face_normals: Option<NormalField>,
    /// Pixels whose decoded normal vector was too short and fell back to `(0, 0, 1)`.
    pub degenerate_normals: usize,
}

#[derive(Clone, Debug)]
struct Heads {
    albedo: Dense,
    normals: Dense,
    light: Dense,
    background: Dense,
    mask: Dense,
    uv: Option<Dense>,
    ni: Option<Dense>,
}

#[derive(Clone, Debug)]
struct Decoders {
    albedo: Decoder,
    normals: Decoder,
    background: Decoder,
    mask: Decoder,
    uv: Option<Decoder>,
    ni: Option<Decoder>,
}

#[derive(Clone, Debug)]
struct Arch {
    encoder: Encoder,
    heads: Heads,
    decoders: Decoders,
    disc: Autoencoder,
}

fn build(config: &ToyConfig) -> (Arch, ParamStore, ParamStore) {
    let mut g = ParamStore::new();
    let (s, f, zi, zf) = (config.size, &config.filters, config.z_shared, config.z_factor);
    let encoder = Encoder::build(&mut g, "gen.enc", s, 3, f, zi);
    let heads = Heads {
        albedo: g.dense("gen.head.albedo", zi, zf),
        normals: g.dense("gen.head.normals", zi, zf),
        light: g.dense("gen.head.light", zi, SH_LEN),
        background: g.dense("gen.head.background", zi, zf),
        mask: g.dense("gen.head.mask", zi, zf),
        uv: config.implicit.then(|| g.dense("gen.head.uv", zi, zf)),
        ni: config.implicit.then(|| g.dense("gen.head.ni", zi, zf)),
    };
    let decoders = Decoders {
        albedo: Decoder::build(&mut g, "gen.dec.albedo", s, f, zf, 3, false),
        normals: Decoder::build(&mut g, "gen.dec.normals", s, f, zf, 3, false),
        background: Decoder::build(&mut g, "gen.dec.background", s, f, zf, 3, true),
        mask: Decoder::build(&mut g, "gen.dec.mask", s, f, zf, 1, true),
        uv: config.implicit.then(|| Decoder::build(&mut g, "gen.dec.uv", s, f, zf, 2, false)),
        ni: config.implicit.then(|| Decoder::build(&mut g, "gen.dec.ni", s, f, zf, 3, false)),
    };
    let mut d = ParamStore::new();
    let disc = Autoencoder::build(&mut d, "disc", s, f, config.disc_bottleneck);
    (Arch { encoder, heads, decoders, disc }, g, d)
}

/// Generator and discriminator parameters with their architecture.
#[derive(Clone, Debug)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub generator: ParamStore,
    pub discriminator: ParamStore,
    arch: Arch,
}

/// Intermediate values of one decode, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct DecodeCache {
    pub latents: Latents,
    pub switches: Vec<Vec<u32>>,
    caches: Vec<DecoderCache>,
    pub albedo: Vec<f64>,
    pub normals: Vec<[f64; 3]>,
    lens: Vec<Option<f64>>,
    pub light: ShCoeffs,
    pub shading: Vec<f64>,
    pub foreground: Vec<f64>,
    pub background: Vec<f64>,
    pub matte: Vec<f64>,
    pub recon: Vec<f64>,
    pub uv: Option<Vec<f64>>,
    pub ni: Option<(Vec<[f64; 3]>, Vec<Option<f64>>)>,
}

impl DecodeCache {
    pub fn degenerate_count(&self) -> usize {
        self.lens.iter().filter(|l| l.is_none()).count()
    }
}

/// Full forward state of one image.
#[derive(Clone, Debug)]
pub(crate) struct ForwardCache {
    encoder: EncoderCache,
    pub decode: DecodeCache,
}

/// Upstream gradients on the decoded quantities (interleaved layouts).
#[derive(Clone, Debug)]
pub(crate) struct OutputGrads {
    pub recon: Vec<f64>,
    pub albedo: Vec<f64>,
    pub normals: Vec<f64>,
    pub shading: Vec<f64>,
    pub matte: Vec<f64>,
    pub background: Vec<f64>,
    pub light: [f64; SH_LEN],
    pub uv: Option<Vec<f64>>,
    pub ni: Option<Vec<f64>>,
}

impl OutputGrads {
    pub fn zeros(pixels: usize, implicit: bool) -> Self {
        Self {
            recon: vec![0.0; pixels * 3],
            albedo: vec![0.0; pixels * 3],
            normals: vec![0.0; pixels * 3],
            shading: vec![0.0; pixels * 3],
            matte: vec![0.0; pixels],
            background: vec![0.0; pixels * 3],
            light: [0.0; SH_LEN],
            uv: implicit.then(|| vec![0.0; pixels * 2]),
            ni: implicit.then(|| vec![0.0; pixels * 3]),
        }
    }
}

fn unit_vectors(t: &Tensor) -> (Vec<[f64; 3]>, Vec<Option<f64>>) {
    t.to_hwc()
        .chunks_exact(3)
        .map(|v| normalize_or_frontal([v[0], v[1], v[2]]))
        .unzip()
}

fn check_len(v: &[f64], expected: usize, context: &'static str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::shape(context, expected, v.len()));
    }
    Ok(())
}

impl ToyModel {
    /// Builds and initializes a model from `config.seed`.
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let (arch, mut generator, mut discriminator) = build(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        generator.init(&mut rng);
        discriminator.init(&mut rng);
        Ok(Self { config, generator, discriminator, arch })
    }

    /// Builds a model with all parameters zero (layout only).
    pub fn zeroed(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let (arch, generator, discriminator) = build(&config);
        Ok(Self { config, generator, discriminator, arch })
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    fn check_image(&self, image: &PixelField) -> Result<()> {
        let s = self.config.size;
        if image.shape() != (s, s, 3) {
            return Err(Error::Config(format!(
                "model expects {s}×{s}×3 images, got {}×{}×{}",
                image.width(),
                image.height(),
                image.channels()
            )));
        }
        Ok(())
    }

    fn encode_with(&self, params: &[f64], image: &PixelField) -> (EncoderCache, Latents) {
        let s = self.config.size;
        let centered: Vec<f64> = image.data().iter().map(|v| v - INPUT_OFFSET).collect();
        let x = Tensor::from_hwc(s, s, 3, &centered);
        let (shared, cache) = self.arch.encoder.forward(params, &x);
        let h = &self.arch.heads;
        let latents = Latents {
            albedo: h.albedo.forward(params, &shared),
            normals: h.normals.forward(params, &shared),
            light: h.light.forward(params, &shared),
            background: h.background.forward(params, &shared),
            mask: h.mask.forward(params, &shared),
            uv: h.uv.map(|d| d.forward(params, &shared)),
            ni: h.ni.map(|d| d.forward(params, &shared)),
            shared,
        };
        (cache, latents)
    }

    fn check_latents(&self, latents: &Latents) -> Result<()> {
        let zf = self.config.z_factor;
        check_len(&latents.light, SH_LEN, "light latent")?;
        for (v, ctx) in [
            (&latents.albedo, "albedo latent"),
            (&latents.normals, "normals latent"),
            (&latents.background, "background latent"),
            (&latents.mask, "mask latent"),
        ] {
            check_len(v, zf, ctx)?;
        }
        if self.config.implicit {
            for (v, ctx) in [(&latents.uv, "uv latent"), (&latents.ni, "ni latent")] {
                match v {
                    Some(v) => check_len(v, zf, ctx)?,
                    None => return Err(Error::Config(format!("{ctx} missing for an implicit model"))),
                }
            }
        }
        if [&latents.albedo, &latents.normals, &latents.light, &latents.background, &latents.mask]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::NonFinite("latent code"));
        }
        Ok(())
    }

    fn decode_with(&self, params: &[f64], latents: &Latents, switches: &[Vec<u32>]) -> Result<DecodeCache> {
        let d = &self.arch.decoders;
        let (albedo_t, ca) = d.albedo.forward(params, &latents.albedo, switches);
        let (normal_t, cn) = d.normals.forward(params, &latents.normals, switches);
        let (bg_t, cb) = d.background.forward(params, &latents.background, switches);
        let (mask_t, cm) = d.mask.forward(params, &latents.mask, switches);
        let mut caches = vec![ca, cn, cb, cm];
        let uv = match (&d.uv, &latents.uv) {
            (Some(dec), Some(z)) => {
                let (t, c) = dec.forward(params, z, switches);
                caches.push(c);
                Some(t.to_hwc())
            }
            _ => None,
        };
        let ni = match (&d.ni, &latents.ni) {
            (Some(dec), Some(z)) => {
                let (t, c) = dec.forward(params, z, switches);
                caches.push(c);
                Some(unit_vectors(&t))
            }
            _ => None,
        };
        let light = ShCoeffs::from_slice(&latents.light).map_err(|_| Error::NanTerm { term: "light latent".into() })?;
        let albedo = albedo_t.to_hwc();
        let (normals, lens) = unit_vectors(&normal_t);
        let shading = shade_vectors(&normals, &light);
        let foreground: Vec<f64> = albedo.iter().zip(&shading).map(|(a, s)| a * s).collect();
        let background = bg_t.to_hwc();
        let matte: Vec<f64> = mask_t.data.iter().map(|v| logistic(*v)).collect();
        let recon = crate::formation::composite_raw(&foreground, &background, &matte, 3);
        Ok(DecodeCache {
            latents: latents.clone(),
            switches: switches.to_vec(),
            caches,
            albedo,
            normals,
            lens,
            light,
            shading,
            foreground,
            background,
            matte,
            recon,
            uv,
            ni,
        })
    }

    pub(crate) fn forward_cached(&self, image: &PixelField) -> Result<ForwardCache> {
        let params = &self.generator.values;
        let (encoder, latents) = self.encode_with(params, image);
        let decode = self.decode_with(params, &latents, &encoder.switches)?;
        Ok(ForwardCache { encoder, decode })
    }

    /// Accumulates generator parameter gradients for the given output gradients.
    pub(crate) fn backward(&self, cache: &ForwardCache, up: &OutputGrads, grads: &mut [f64]) {
        let params = &self.generator.values;
        let dc = &cache.decode;
        let s = self.config.size;
        let px = s * s;

        let mut d_matte_out = up.matte.clone();
        let mut d_fg = vec![0.0; px * 3];
        let mut d_bg = up.background.clone();
        for i in 0..px * 3 {
            let m = dc.matte[i / 3];
            let g = up.recon[i];
            d_fg[i] = g * m;
            d_bg[i] += g * (1.0 - m);
            d_matte_out[i / 3] += g * (dc.foreground[i] - dc.background[i]);
        }
        let mut d_albedo = up.albedo.clone();
        let mut d_shading = up.shading.clone();
        for i in 0..px * 3 {
            d_albedo[i] += d_fg[i] * dc.shading[i];
            d_shading[i] += d_fg[i] * dc.albedo[i];
        }
        let sg = shade_backward_vectors(&dc.normals, &dc.light, &d_shading);
        let mut d_light = up.light;
        for (a, b) in d_light.iter_mut().zip(sg.d_light.iter()) {
            *a += b;
        }
        let mut d_raw_normals = Vec::with_capacity(px * 3);
        for p in 0..px {
            let g = [0, 1, 2].map(|k| sg.d_normals[p][k] + up.normals[p * 3 + k]);
            d_raw_normals.extend(normalize_backward(&dc.normals[p], dc.lens[p], &g));
        }
        let d_mask_logit: Vec<f64> = d_matte_out.iter().zip(&dc.matte).map(|(g, m)| g * m * (1.0 - m)).collect();

        let d = &self.arch.decoders;
        let sw = &dc.switches;
        let to_t = |v: &[f64], c: usize| Tensor::from_hwc(s, s, c, v);
        let dz_albedo = d.albedo.backward(params, grads, &dc.caches[0], sw, &to_t(&d_albedo, 3));
        let dz_normals = d.normals.backward(params, grads, &dc.caches[1], sw, &to_t(&d_raw_normals, 3));
        let dz_bg = d.background.backward(params, grads, &dc.caches[2], sw, &to_t(&d_bg, 3));
        let dz_mask = d.mask.backward(params, grads, &dc.caches[3], sw, &Tensor::from_vec(1, s, s, d_mask_logit));
        let mut next = 4;
        let dz_uv = match (&d.uv, &up.uv) {
            (Some(dec), Some(g)) => {
                let dz = dec.backward(params, grads, &dc.caches[next], sw, &to_t(g, 2));
                next += 1;
                Some(dz)
            }
            _ => None,
        };
        let dz_ni = match (&d.ni, &up.ni, &dc.ni) {
            (Some(dec), Some(g), Some((n, lens))) => {
                let mut d_raw = Vec::with_capacity(px * 3);
                for p in 0..px {
                    let gp = [g[p * 3], g[p * 3 + 1], g[p * 3 + 2]];
                    d_raw.extend(normalize_backward(&n[p], lens[p], &gp));
                }
                Some(dec.backward(params, grads, &dc.caches[next], sw, &to_t(&d_raw, 3)))
            }
            _ => None,
        };

        let h = &self.arch.heads;
        let shared = &dc.latents.shared;
        let mut dz_shared = vec![0.0; shared.len()];
        let mut add = |head: &Dense, dz: &[f64], grads: &mut [f64]| {
            let g = head.backward(params, grads, shared, dz);
            for (a, b) in dz_shared.iter_mut().zip(g) {
                *a += b;
            }
        };
        add(&h.albedo, &dz_albedo, grads);
        add(&h.normals, &dz_normals, grads);
        add(&h.light, &d_light, grads);
        add(&h.background, &dz_bg, grads);
        add(&h.mask, &dz_mask, grads);
        if let (Some(head), Some(dz)) = (&h.uv, &dz_uv) {
            add(head, dz, grads);
        }
        if let (Some(head), Some(dz)) = (&h.ni, &dz_ni) {
            add(head, dz, grads);
        }
        self.arch.encoder.backward(params, grads, &cache.encoder, &dz_shared);
    }

    /// Discriminator reconstruction of an interleaved image.
    pub(crate) fn disc_forward(&self, image: &[f64]) -> (Vec<f64>, AutoencoderCache) {
        let s = self.config.size;
        let (y, cache) = self.arch.disc.forward(&self.discriminator.values, &Tensor::from_hwc(s, s, 3, image));
        (y.to_hwc(), cache)
    }

    /// Accumulates discriminator parameter gradients; returns the gradient on the
    /// discriminator input (interleaved).
    pub(crate) fn disc_backward(&self, cache: &AutoencoderCache, d_recon: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let s = self.config.size;
        let dx = self.arch.disc.backward(&self.discriminator.values, grads, cache, &Tensor::from_hwc(s, s, 3, d_recon));
        dx.to_hwc()
    }

    /// Discriminator energy `D(x)`: per-element mean squared autoencoder error.
    pub fn energy(&self, image: &PixelField) -> Result<f64> {
        self.check_image(image)?;
        let (r, _) = self.disc_forward(image.data());
        Ok(crate::losses::recon_energy(&r, image.data()).0)
    }

    pub fn encode(&self, image: &PixelField) -> Result<Encoding> {
        self.check_image(image)?;
        let (cache, latents) = self.encode_with(&self.generator.values, image);
        Ok(Encoding { latents, switches: cache.switches })
    }

    /// Decodes a (possibly edited) latent set using the given pooling switches.
    pub fn decode(&self, latents: &Latents, switches: &[Vec<u32>]) -> Result<ToyOutputs> {
        self.check_latents(latents)?;
        let s = self.config.size;
        if switches.len() != self.config.filters.len()
            || switches.iter().zip(&self.config.filters).enumerate().any(|(i, (sw, f))| {
                let side = s >> (i + 1);
                sw.len() != f * side * side
            })
        {
            return Err(Error::Config("pooling switches do not match the model layout".into()));
        }
        let dc = self.decode_with(&self.generator.values, latents, switches)?;
        Ok(self.outputs(dc))
    }

    pub fn forward(&self, image: &PixelField) -> Result<ToyOutputs> {
        self.check_image(image)?;
        let cache = self.forward_cached(image)?;
        Ok(self.outputs(cache.decode))
    }

    fn outputs(&self, dc: DecodeCache) -> ToyOutputs {
        let s = self.config.size;
        let degenerate_normals = dc.lens.iter().filter(|l| l.is_none()).count();
        let field = |v: Vec<f64>, c: usize| PixelField::from_raw(s, s, c, v);
        ToyOutputs {
            recon: field(dc.recon, 3),
            albedo: field(dc.albedo, 3),
            normals: NormalField::from_unit_unchecked(s, s, dc.normals),
            shading: field(dc.shading, 3),
            foreground: field(dc.foreground, 3),
            mask: MatteMask::new(s, s, dc.matte).expect("logistic output lies in [0, 1]"),
            background: field(dc.background, 3),
            uv: dc.uv.map(|v| field(v, 2)),
            face_normals: dc.ni.map(|(n, _)| NormalField::from_unit_unchecked(s, s, n)),
            latents: dc.latents,
            degenerate_normals,
        }
    }

    /// Decodes `a` with the named factor code taken from `b`.
    pub fn latent_swap(&self, a: &PixelField, b: &PixelField, factor: Factor) -> Result<PixelField> {
        let ea = self.encode(a)?;
        let eb = self.encode(b)?;
        let mut latents = ea.latents.clone();
        *latents.get_mut(factor)? = eb.latents.get(factor)?.clone();
        Ok(self.decode(&latents, &ea.switches)?.recon)
    }

    /// The implicit-path normals: implicit normals resampled through the decoded UV map.
    pub fn implicit_normals(&self, outputs: &ToyOutputs) -> Result<Option<NormalField>> {
        match (&outputs.uv, &outputs.face_normals) {
            (Some(uv), Some(ni)) => {
                let uv = uv.map(|v| v.clamp(0.0, 1.0));
                let field = crate::imaging::uv_resample(&ni.to_field(), &uv)?;
                Ok(Some(NormalField::from_field_renormalized(&field)?))
            }
            _ => Ok(None),
        }
    }

    pub fn parameter_count(&self) -> (usize, usize) {
        (self.generator.len(), self.discriminator.len())
    }
}

/// Free-function form of [`ToyModel::latent_swap`] taking the factor by name.
pub fn latent_swap(model: &ToyModel, a: &PixelField, b: &PixelField, factor: &str) -> Result<PixelField> {
    model.latent_swap(a, b, factor.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(size: usize, seed: u64) -> PixelField {
        PixelField::from_fn(size, size, 3, |x, y, c| {
            (((x * 7 + y * 13 + c * 5) as u64 + seed) % 17) as f64 / 17.0
        })
    }

    #[test]
    fn output_shapes() {
        let model = ToyModel::new(ToyConfig::default()).unwrap();
        let out = model.forward(&image(32, 1)).unwrap();
        assert_eq!(out.recon.shape(), (32, 32, 3));
        assert_eq!(out.albedo.shape(), (32, 32, 3));
        assert_eq!(out.shading.shape(), (32, 32, 3));
        assert_eq!(out.background.shape(), (32, 32, 3));
        assert_eq!((out.mask.width(), out.mask.height()), (32, 32));
        assert_eq!(out.latents.light.len(), 27);
    }

    #[test]
    fn zero_decoder_falls_back_to_frontal() {
        let mut model = ToyModel::new(ToyConfig::micro()).unwrap();
        for spec in model.generator.specs.clone() {
            if spec.name.starts_with("gen.dec.") {
                model.generator.values[spec.offset..spec.offset + spec.len()].fill(0.0);
            }
        }
        let out = model.forward(&image(8, 2)).unwrap();
        assert_eq!(out.degenerate_normals, 64);
        assert!(out.normals.vectors().iter().all(|n| *n == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn wrong_size_rejected() {
        let model = ToyModel::new(ToyConfig::micro()).unwrap();
        assert!(model.forward(&image(16, 0)).is_err());
    }

    #[test]
    fn factor_names_parse() {
        for f in Factor::ALL {
            assert_eq!(f.name().parse::<Factor>().unwrap(), f);
        }
        assert!(matches!("hair".parse::<Factor>(), Err(Error::UnknownFactor(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = ToyConfig { size: 20, ..ToyConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ToyConfig { filters: vec![], ..ToyConfig::default() };
        assert!(bad.validate().is_err());
    }
}
