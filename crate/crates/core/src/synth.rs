//! Procedural Lambertian scenes with exact ground truth.
//!
//! A scene is a blobby height field (an ellipsoidal cap plus Gaussian bumps)
//! seen orthographically, with a Voronoi albedo, a random SH light and a smooth
//! noisy background. Object-space coordinates span `[-1, 1]` across the image
//! with `y` pointing up.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formation::{composite, form_image};
use crate::imaging::{
    load_float_map, load_image, load_mask, save_float_map, save_mask, save_png, MatteMask, NormalField,
    PixelField,
};
use crate::shading::{shade_forward, ShCoeffs, SH_BANDS, SH_LEN};

/// Smallest supported scene size.
pub const MIN_SIZE: usize = 16;

/// Masked mean shading per channel that generated lights are scaled to.
pub const WHITE_SHADING: f64 = 0.75;

pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9) seeded with seed_from_u64";

/// Generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub bumps: [usize; 2],
    pub cells: [usize; 2],
    pub albedo_range: [f64; 2],
    /// Range of the ambient coefficient before rescaling.
    pub ambient_range: [f64; 2],
    /// Standard deviation of the eight directional coefficients.
    pub light_sigma: f64,
    /// Half-width of the uniform background noise.
    pub background_noise: f64,
    /// Lowest admissible shading inside the mask.
    pub min_shading: f64,
    /// Use this light verbatim instead of drawing and rescaling one.
    pub fixed_light: Option<ShCoeffs>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            bumps: [2, 6],
            cells: [3, 8],
            albedo_range: [0.2, 0.9],
            ambient_range: [0.8, 1.2],
            light_sigma: 0.15,
            background_noise: 0.03,
            min_shading: 0.1,
            fixed_light: None,
        }
    }
}

/// A generated scene with its ground-truth layers.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub image: PixelField,
    pub gt_albedo: PixelField,
    pub gt_shading: PixelField,
    pub gt_normals: NormalField,
    pub gt_light: ShCoeffs,
    pub gt_mask: MatteMask,
    /// Two channels in `[0, 1]²` inside the mask, zero outside.
    pub gt_uv: PixelField,
    /// Normals on the face-space grid addressed by `gt_uv`.
    pub gt_face_normals: NormalField,
    pub background: PixelField,
    pub seed: u64,
}

impl SceneSample {
    pub fn size(&self) -> usize {
        self.image.width()
    }

    /// Re-renders this scene's geometry and albedo under another light,
    /// composited over the scene's own background.
    pub fn render_with_light(&self, light: &ShCoeffs) -> Result<PixelField> {
        let shading = shade_forward(&self.gt_normals, light, None)?;
        composite(&form_image(&self.gt_albedo, &shading)?, &self.background, &self.gt_mask)
    }
}

/// One of the eight symmetries of the square: an optional transpose of the
/// pixel grid followed by optional column and row mirrors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Symmetry {
    pub transpose: bool,
    pub mirror_x: bool,
    pub mirror_y: bool,
}

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry { transpose: false, mirror_x: false, mirror_y: false };

    /// The element with index `k` in `0..8`.
    pub fn from_index(k: usize) -> Self {
        Self { transpose: k & 4 != 0, mirror_x: k & 1 != 0, mirror_y: k & 2 != 0 }
    }

    /// Source pixel of output pixel `(x, y)` on a `size × size` grid.
    fn source(self, x: usize, y: usize, size: usize) -> (usize, usize) {
        let x = if self.mirror_x { size - 1 - x } else { x };
        let y = if self.mirror_y { size - 1 - y } else { y };
        if self.transpose {
            (y, x)
        } else {
            (x, y)
        }
    }

    fn permute(self, f: &PixelField) -> PixelField {
        let (s, c) = (f.width(), f.channels());
        PixelField::from_fn(s, s, c, |x, y, k| {
            let (sx, sy) = self.source(x, y, s);
            f.get(sx, sy, k)
        })
    }

    /// Object-space image of a camera-frame vector (`x` right, `y` up).
    pub fn vector(self, v: [f64; 3]) -> [f64; 3] {
        let [mut x, mut y, z] = v;
        if self.transpose {
            (x, y) = (-y, -x);
        }
        if self.mirror_x {
            x = -x;
        }
        if self.mirror_y {
            y = -y;
        }
        [x, y, z]
    }

    /// Light whose shading of transformed normals equals the original shading.
    pub fn light(self, light: &ShCoeffs) -> ShCoeffs {
        let mut out = *light.as_array();
        for ch in out.chunks_mut(SH_BANDS) {
            if self.transpose {
                let l = [ch[1], ch[3], ch[5], ch[7], ch[8]];
                ch[1] = -l[1];
                ch[3] = -l[0];
                ch[5] = -l[3];
                ch[7] = -l[2];
                ch[8] = -l[4];
            }
            if self.mirror_x {
                for j in [3, 4, 7] {
                    ch[j] = -ch[j];
                }
            }
            if self.mirror_y {
                for j in [1, 4, 5] {
                    ch[j] = -ch[j];
                }
            }
        }
        ShCoeffs::new(out).expect("finite coefficients stay finite")
    }

    fn normals(self, n: &NormalField, permute: bool) -> Result<NormalField> {
        let s = n.width();
        let vectors = (0..s * s)
            .map(|i| {
                let (x, y) = (i % s, i / s);
                let (sx, sy) = if permute { self.source(x, y, s) } else { (x, y) };
                self.vector(n.get(sx, sy))
            })
            .collect();
        NormalField::new(s, n.height(), vectors)
    }
}

impl SceneSample {
    /// The same scene seen through a symmetry of the image square. Pixel
    /// layers move with their pixels; normals and light rotate with the
    /// camera frame, so the shading is reproduced exactly. Face-space normals
    /// keep their grid and rotate their vectors.
    pub fn transformed(&self, t: Symmetry) -> Result<SceneSample> {
        if t == Symmetry::IDENTITY {
            return Ok(self.clone());
        }
        let alpha = MatteMask::from_field(&t.permute(&self.gt_mask.to_field()))?;
        Ok(SceneSample {
            image: t.permute(&self.image),
            gt_albedo: t.permute(&self.gt_albedo),
            gt_shading: t.permute(&self.gt_shading),
            gt_normals: t.normals(&self.gt_normals, true)?,
            gt_light: t.light(&self.gt_light),
            gt_mask: alpha,
            gt_uv: t.permute(&self.gt_uv),
            gt_face_normals: t.normals(&self.gt_face_normals, false)?,
            background: t.permute(&self.background),
            seed: self.seed,
        })
    }
}

struct Bump {
    x: f64,
    y: f64,
    amp: f64,
    sigma: f64,
}

struct HeightField {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    depth: f64,
    bumps: Vec<Bump>,
}

/// Support threshold on the ellipse parameter; keeps rim slopes finite.
const SUPPORT: f64 = 0.04;

impl HeightField {
    fn ellipse(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.cx) / self.a;
        let dy = (y - self.cy) / self.b;
        1.0 - dx * dx - dy * dy
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        self.ellipse(x, y) > SUPPORT
    }

    /// Unit normal `(−h_x, −h_y, 1)/‖·‖` from the analytic height derivatives.
    fn normal(&self, x: f64, y: f64) -> [f64; 3] {
        let q = self.ellipse(x, y);
        if q <= SUPPORT {
            return [0.0, 0.0, 1.0];
        }
        let sq = q.sqrt();
        let mut hx = -self.depth * (x - self.cx) / (self.a * self.a * sq);
        let mut hy = -self.depth * (y - self.cy) / (self.b * self.b * sq);
        for bump in &self.bumps {
            let (dx, dy) = (x - bump.x, y - bump.y);
            let s2 = bump.sigma * bump.sigma;
            let g = bump.amp * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
            hx -= g * dx / s2;
            hy -= g * dy / s2;
        }
        let n = (hx * hx + hy * hy + 1.0).sqrt();
        [-hx / n, -hy / n, 1.0 / n]
    }
}

fn pixel_to_object(i: usize, size: usize) -> f64 {
    2.0 * (i as f64 + 0.5) / size as f64 - 1.0
}

fn draw_light(rng: &mut ChaCha8Rng, config: &SynthConfig) -> [f64; SH_LEN] {
    let normal = Normal::new(0.0, config.light_sigma).expect("finite sigma");
    let mut l = [0.0; SH_LEN];
    for c in 0..3 {
        l[c * SH_BANDS] = rng.random_range(config.ambient_range[0]..=config.ambient_range[1]);
        for j in 1..SH_BANDS {
            l[c * SH_BANDS + j] = normal.sample(rng);
        }
    }
    l
}

/// Masked per-channel mean of a three-channel field.
pub fn masked_channel_means(field: &PixelField, mask: &MatteMask) -> [f64; 3] {
    let mut sums = [0.0; 3];
    let mut mass = 0.0;
    for (px, &a) in field.data().chunks_exact(field.channels()).zip(mask.alpha()) {
        for c in 0..3 {
            sums[c] += a * px[c];
        }
        mass += a;
    }
    sums.map(|s| s / mass)
}

/// Rescales a light so the masked mean shading of each channel is [`WHITE_SHADING`].
fn whiten(light: [f64; SH_LEN], normals: &NormalField, mask: &MatteMask) -> Result<(ShCoeffs, PixelField)> {
    let l = ShCoeffs::new(light)?;
    let means = masked_channel_means(&shade_forward(normals, &l, None)?, mask);
    let l = l.scale_channels(means.map(|m| WHITE_SHADING / m));
    let shading = shade_forward(normals, &l, None)?;
    Ok((l, shading))
}

fn admissible(shading: &PixelField, albedo: &PixelField, mask: &MatteMask, min_shading: f64) -> bool {
    let means = masked_channel_means(shading, mask);
    if means.iter().any(|m| !(*m > 0.0)) {
        return false;
    }
    mask.alpha().iter().enumerate().filter(|(_, &a)| a > 0.0).all(|(i, _)| {
        (0..3).all(|c| {
            let s = shading.data()[i * 3 + c];
            s >= min_shading && albedo.data()[i * 3 + c] * s <= 1.0
        })
    })
}

/// Generates one scene. Identical `(size, seed, config)` give bit-identical samples.
pub fn generate_scene(size: usize, seed: u64, config: &SynthConfig) -> Result<SceneSample> {
    if size < MIN_SIZE {
        return Err(Error::Config(format!("scene size must be at least {MIN_SIZE}, got {size}")));
    }
    if config.bumps[0] > config.bumps[1] || config.cells[0] > config.cells[1] || config.cells[0] == 0 {
        return Err(Error::Config("synth ranges must be ordered and cells >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let hf = {
        let a = rng.random_range(0.55..0.8);
        let b = rng.random_range(0.65..0.9);
        let cx = rng.random_range(-0.08..0.08);
        let cy = rng.random_range(-0.08..0.08);
        let depth = rng.random_range(0.6..1.0);
        let k = rng.random_range(config.bumps[0]..=config.bumps[1]);
        let bumps = (0..k)
            .map(|_| {
                let r = rng.random_range(0.0..0.7f64);
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                Bump {
                    x: cx + a * r * t.cos(),
                    y: cy + b * r * t.sin(),
                    amp: rng.random_range(-0.12..0.18),
                    sigma: rng.random_range(0.08..0.22),
                }
            })
            .collect();
        HeightField {
            cx,
            cy,
            a,
            b,
            depth,
            bumps,
        }
    };

    let coords = |x: usize, y: usize| (pixel_to_object(x, size), -pixel_to_object(y, size));
    let mut vectors = Vec::with_capacity(size * size);
    let mut alpha = Vec::with_capacity(size * size);
    let mut uv = Vec::with_capacity(size * size * 2);
    for y in 0..size {
        for x in 0..size {
            let (ox, oy) = coords(x, y);
            vectors.push(hf.normal(ox, oy));
            if hf.inside(ox, oy) {
                alpha.push(1.0);
                uv.push(((ox - hf.cx) / hf.a + 1.0) / 2.0);
                uv.push((1.0 - (oy - hf.cy) / hf.b) / 2.0);
            } else {
                alpha.push(0.0);
                uv.extend([0.0, 0.0]);
            }
        }
    }
    let gt_normals = NormalField::from_unit_unchecked(size, size, vectors);
    let gt_mask = MatteMask::new(size, size, alpha)?;
    let gt_uv = PixelField::from_raw(size, size, 2, uv);

    let face: Vec<[f64; 3]> = (0..size * size)
        .map(|i| {
            let (gx, gy) = (i % size, i / size);
            let u = gx as f64 / (size - 1) as f64;
            let v = gy as f64 / (size - 1) as f64;
            hf.normal(hf.cx + hf.a * (2.0 * u - 1.0), hf.cy + hf.b * (1.0 - 2.0 * v))
        })
        .collect();
    let gt_face_normals = NormalField::from_unit_unchecked(size, size, face);

    let cells = rng.random_range(config.cells[0]..=config.cells[1]);
    let sites: Vec<(f64, f64, [f64; 3])> = (0..cells)
        .map(|_| {
            let sx = rng.random_range(hf.cx - hf.a..hf.cx + hf.a);
            let sy = rng.random_range(hf.cy - hf.b..hf.cy + hf.b);
            let color = [0; 3].map(|_| rng.random_range(config.albedo_range[0]..=config.albedo_range[1]));
            (sx, sy, color)
        })
        .collect();
    let gt_albedo = PixelField::from_fn(size, size, 3, |x, y, c| {
        let (ox, oy) = coords(x, y);
        let nearest = sites
            .iter()
            .min_by(|p, q| {
                let dp = (p.0 - ox).powi(2) + (p.1 - oy).powi(2);
                let dq = (q.0 - ox).powi(2) + (q.1 - oy).powi(2);
                dp.total_cmp(&dq)
            })
            .expect("at least one cell");
        nearest.2[c]
    });

    let (gt_light, gt_shading) = match &config.fixed_light {
        Some(l) => (*l, shade_forward(&gt_normals, l, None)?),
        None => {
            let mut chosen = None;
            let mut last = [0.0; SH_LEN];
            for _ in 0..64 {
                last = draw_light(&mut rng, config);
                let (l, s) = whiten(last, &gt_normals, &gt_mask)?;
                if admissible(&s, &gt_albedo, &gt_mask, config.min_shading) {
                    chosen = Some((l, s));
                    break;
                }
            }
            match chosen {
                Some(c) => c,
                None => {
                    // shrink the directional part until admissible; ambient-only always is
                    let mut shrink = 0.5;
                    loop {
                        let mut l = last;
                        for c in 0..3 {
                            for j in 1..SH_BANDS {
                                l[c * SH_BANDS + j] *= shrink;
                            }
                        }
                        let (l, s) = whiten(l, &gt_normals, &gt_mask)?;
                        if admissible(&s, &gt_albedo, &gt_mask, config.min_shading) || shrink < 1e-6 {
                            break (l, s);
                        }
                        shrink *= 0.5;
                    }
                }
            }
        }
    };

    let base = [0; 3].map(|_| rng.random_range(0.2..0.8));
    let gx = [0; 3].map(|_| rng.random_range(-0.2..0.2));
    let gy = [0; 3].map(|_| rng.random_range(-0.2..0.2));
    let noise = config.background_noise;
    let mut bg = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (ox, oy) = coords(x, y);
            for c in 0..3 {
                let n = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
                bg.push((base[c] + gx[c] * ox + gy[c] * oy + n).clamp(0.0, 1.0));
            }
        }
    }
    let background = PixelField::bounded(size, size, 3, bg)?;

    let foreground = form_image(&gt_albedo, &gt_shading)?;
    let image = composite(&foreground, &background, &gt_mask)?;

    Ok(SceneSample {
        image,
        gt_albedo,
        gt_shading,
        gt_normals,
        gt_light,
        gt_mask,
        gt_uv,
        gt_face_normals,
        background,
        seed,
    })
}

/// Derives per-sample seeds from a dataset seed.
pub fn sample_seeds(count: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Assigns the `round(count / 10)` samples with the smallest seed hashes to validation.
pub fn assign_splits(seeds: &[u64]) -> Vec<Split> {
    let mut order: Vec<(Vec<u8>, usize)> = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| (Sha256::digest(s.to_le_bytes()).to_vec(), i))
        .collect();
    order.sort();
    let n_val = (seeds.len() as f64 / 10.0).round() as usize;
    let mut splits = vec![Split::Train; seeds.len()];
    for (_, i) in order.into_iter().take(n_val) {
        splits[i] = Split::Val;
    }
    splits
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub dir: String,
    pub seed: u64,
    pub split: Split,
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rng: String,
    pub seed: u64,
    pub size: usize,
    pub count: usize,
    pub config: SynthConfig,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

const SAMPLE_FILES: [(&str, &str); 8] = [
    ("image", "image.png"),
    ("albedo", "albedo.pfm"),
    ("normals", "normals.pfm"),
    ("mask", "mask.png"),
    ("uv", "uv.pfm"),
    ("light", "light.json"),
    ("background", "background.png"),
    ("face_normals", "face_normals.pfm"),
];

/// Writes one sample's files into `dir`.
pub fn write_sample(sample: &SceneSample, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_png(&sample.image, dir.join("image.png"), true)?;
    save_float_map(&sample.gt_albedo, dir.join("albedo.pfm"))?;
    save_float_map(&sample.gt_normals, dir.join("normals.pfm"))?;
    save_mask(&sample.gt_mask, dir.join("mask.png"))?;
    save_float_map(&sample.gt_uv, dir.join("uv.pfm"))?;
    let light = dir.join("light.json");
    fs::write(&light, sample.gt_light.to_json()).map_err(|e| Error::io(&light, e))?;
    save_png(&sample.background, dir.join("background.png"), true)?;
    save_float_map(&sample.gt_face_normals, dir.join("face_normals.pfm"))?;
    Ok(())
}

/// Reads a sample written by [`write_sample`]. The image and background come back
/// quantized to 16 bits.
pub fn read_sample(dir: &Path, seed: u64) -> Result<SceneSample> {
    let image = load_image(dir.join("image.png"), false)?;
    let gt_albedo = load_float_map(dir.join("albedo.pfm"))?;
    let gt_normals = NormalField::from_field_renormalized(&load_float_map(dir.join("normals.pfm"))?)?;
    let gt_mask = load_mask(dir.join("mask.png"))?;
    let gt_uv = load_float_map(dir.join("uv.pfm"))?.truncate_channels(2);
    let light_path = dir.join("light.json");
    let text = fs::read_to_string(&light_path).map_err(|e| Error::io(&light_path, e))?;
    let gt_light = ShCoeffs::from_json(&text)?;
    let background = load_image(dir.join("background.png"), false)?;
    let gt_face_normals =
        NormalField::from_field_renormalized(&load_float_map(dir.join("face_normals.pfm"))?)?;
    let gt_shading = shade_forward(&gt_normals, &gt_light, None)?;
    Ok(SceneSample {
        image,
        gt_albedo,
        gt_shading,
        gt_normals,
        gt_light,
        gt_mask,
        gt_uv,
        gt_face_normals,
        background,
        seed,
    })
}

/// Generates `count` scenes into `out_dir` and writes `manifest.json`.
pub fn generate_dataset(
    count: usize,
    size: usize,
    seed: u64,
    config: &SynthConfig,
    out_dir: &Path,
) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::Config("dataset count must be at least 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let seeds = sample_seeds(count, seed);
    let splits = assign_splits(&seeds);
    let mut samples = Vec::with_capacity(count);
    for (id, (&s, &split)) in seeds.iter().zip(&splits).enumerate() {
        let dir = format!("sample_{id:05}");
        let scene = generate_scene(size, s, config)?;
        write_sample(&scene, &out_dir.join(&dir))?;
        samples.push(ManifestEntry {
            id,
            dir,
            seed: s,
            split,
            files: SAMPLE_FILES
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        });
    }
    let manifest = Manifest {
        rng: RNG_NAME.to_string(),
        seed,
        size,
        count,
        config: config.clone(),
        samples,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a dataset directory written by [`generate_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<(Split, SceneSample)>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let samples = manifest
        .samples
        .iter()
        .map(|e| Ok((e.split, read_sample(&dir.join(&e.dir), e.seed)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// SHA-256 of a dataset's manifest file, hex encoded.
pub fn manifest_hash(dir: &Path) -> Result<String> {
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}
