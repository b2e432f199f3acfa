//! Lighting transfer, direct relighting and latent-space attribute traversal.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{composite, form_image};
use crate::imaging::{MatteMask, NormalField, PixelField};
use crate::shading::{shade_forward, ShCoeffs};
use crate::solver::DecompResult;
use crate::toynet::{Factor, Latents, ToyModel, ToyOutputs};

/// The layers an edit needs from a decomposition, whether it came from the
/// solver or from the toy network.
#[derive(Clone, Debug)]
pub struct EditLayers {
    pub image: PixelField,
    pub albedo: PixelField,
    pub shading: PixelField,
    pub normals: NormalField,
    pub light: ShCoeffs,
    pub mask: MatteMask,
    pub background: PixelField,
}

impl EditLayers {
    /// Solver layers; the original image serves as the background.
    pub fn from_solver(image: &PixelField, result: &DecompResult) -> Result<Self> {
        let layers = Self {
            image: image.clone(),
            albedo: result.albedo.clone(),
            shading: result.shading.clone(),
            normals: result.normals.clone(),
            light: result.light,
            mask: result.mask.clone(),
            background: image.clone(),
        };
        layers.check()?;
        Ok(layers)
    }

    /// Network layers; the decoded background is used.
    pub fn from_toynet(image: &PixelField, outputs: &ToyOutputs) -> Result<Self> {
        let layers = Self {
            image: image.clone(),
            albedo: outputs.albedo.clone(),
            shading: outputs.shading.clone(),
            normals: outputs.normals.clone(),
            light: outputs.latents.light_coeffs()?,
            mask: outputs.mask.clone(),
            background: outputs.background.clone(),
        };
        layers.check()?;
        Ok(layers)
    }

    fn check(&self) -> Result<()> {
        let (w, h) = (self.normals.width(), self.normals.height());
        for (name, f) in [
            ("edit image", &self.image),
            ("edit albedo", &self.albedo),
            ("edit shading", &self.shading),
            ("edit background", &self.background),
        ] {
            f.check_extent(w, h, name)?;
            if f.channels() != 3 {
                return Err(Error::shape(name, 3, f.channels()));
            }
        }
        self.mask.check_extent(w, h, "edit mask")
    }
}

/// Result of [`transfer_lighting`].
#[derive(Clone, Debug)]
pub struct Transfer {
    pub output: PixelField,
    /// Image divided by the floored target shading.
    pub detail_albedo: PixelField,
    /// Target normals shaded under the source light.
    pub shading: PixelField,
}

/// Relights the target with `source_light` through its detailed albedo
/// `image ⊘ max(shading, ε)`, keeping the target's background and mask.
pub fn transfer_lighting(target: &EditLayers, source_light: &ShCoeffs, epsilon: f64) -> Result<Transfer> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("transfer epsilon must be positive, got {epsilon}")));
    }
    target.check()?;
    let detail_albedo = target.image.zip_map(&target.shading, |i, s| i / s.max(epsilon))?;
    let shading = shade_forward(&target.normals, source_light, None)?;
    let fg = form_image(&detail_albedo, &shading)?;
    let output = composite(&fg, &target.background, &target.mask)?;
    Ok(Transfer { output, detail_albedo, shading })
}

/// `albedo ⊙ shade(normals, new_light)` composited over the background.
pub fn relight_direct(target: &EditLayers, new_light: &ShCoeffs) -> Result<PixelField> {
    target.check()?;
    let shading = shade_forward(&target.normals, new_light, None)?;
    composite(&form_image(&target.albedo, &shading)?, &target.background, &target.mask)
}

/// Positive and negative example codes of one factor.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSets {
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
    pub factor: Factor,
}

impl AttributeSets {
    pub fn new(positive: Vec<Vec<f64>>, negative: Vec<Vec<f64>>, factor: Factor) -> Result<Self> {
        if positive.is_empty() {
            return Err(Error::EmptySet("positive attribute set"));
        }
        if negative.is_empty() {
            return Err(Error::EmptySet("negative attribute set"));
        }
        let dim = positive[0].len();
        for z in positive.iter().chain(&negative) {
            if z.len() != dim {
                return Err(Error::shape("attribute code length", dim, z.len()));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("attribute code", "non-finite value"));
            }
        }
        Ok(Self { positive, negative, factor })
    }

    /// Extracts `factor` codes from full latent sets.
    pub fn from_latents(positive: &[Latents], negative: &[Latents], factor: Factor) -> Result<Self> {
        let pick = |set: &[Latents]| set.iter().map(|l| l.get(factor).cloned()).collect::<Result<Vec<_>>>();
        Self::new(pick(positive)?, pick(negative)?, factor)
    }

    /// Reads every `*.json` latent file in `positive_dir` and `negative_dir`, in file-name order.
    pub fn from_dirs(positive_dir: &Path, negative_dir: &Path, factor: Factor) -> Result<Self> {
        Self::from_latents(&read_latent_dir(positive_dir)?, &read_latent_dir(negative_dir)?, factor)
    }

    pub fn dim(&self) -> usize {
        self.positive[0].len()
    }
}

/// Loads all `*.json` latent files of a directory, sorted by file name.
pub fn read_latent_dir(dir: &Path) -> Result<Vec<Latents>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Latents::from_json(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraversalMode {
    /// `z + (μ_p − μ_n) / λ`.
    MeanShiftLinear,
    /// `(1 − α) z + α · Σ k(z, z_p) z_p / Σ k(z, z_p)` with a Gaussian kernel and `α = 1/(1 + λ)`.
    KernelWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraversalConfig {
    pub lambda: f64,
    pub mode: TraversalMode,
    pub bandwidth: f64,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self { lambda: 0.05, mode: TraversalMode::MeanShiftLinear, bandwidth: 1.0 }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite and positive, got {}", self.lambda)));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::Config(format!("bandwidth must be finite and positive, got {}", self.bandwidth)));
        }
        Ok(())
    }
}

fn mean(set: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; set[0].len()];
    for z in set {
        for (a, b) in m.iter_mut().zip(z) {
            *a += b;
        }
    }
    let n = set.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Moves `z` toward the positive set. Smaller `λ` gives a stronger edit.
pub fn traverse(z: &[f64], sets: &AttributeSets, config: &TraversalConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if z.len() != sets.dim() {
        return Err(Error::shape("traversal code length", sets.dim(), z.len()));
    }
    match config.mode {
        TraversalMode::MeanShiftLinear => {
            // The direction is clipped to its own norm, so the step is a pure 1/λ scale.
            let (mp, mn) = (mean(&sets.positive), mean(&sets.negative));
            Ok(z.iter().zip(mp.iter().zip(&mn)).map(|(v, (p, n))| v + (p - n) / config.lambda).collect())
        }
        TraversalMode::KernelWeighted => {
            let two_s2 = 2.0 * config.bandwidth * config.bandwidth;
            let d2: Vec<f64> = sets
                .positive
                .iter()
                .map(|p| p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            // Shift by the nearest distance so at least one weight is exactly one.
            let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let k: Vec<f64> = d2.iter().map(|d| (-(d - nearest) / two_s2).exp()).collect();
            let ksum: f64 = k.iter().sum();
            let alpha = 1.0 / (1.0 + config.lambda);
            Ok((0..z.len())
                .map(|i| {
                    let target: f64 = sets.positive.iter().zip(&k).map(|(p, w)| w * p[i]).sum::<f64>() / ksum;
                    (1.0 - alpha) * z[i] + alpha * target
                })
                .collect())
        }
    }
}

/// Encodes `image`, traverses only the listed factors' codes and decodes.
pub fn edit_and_decode(
    model: &ToyModel,
    image: &PixelField,
    edits: &[&AttributeSets],
    config: &TraversalConfig,
) -> Result<ToyOutputs> {
    config.validate()?;
    let enc = model.encode(image)?;
    let mut latents = enc.latents;
    for sets in edits {
        let z = latents.get(sets.factor)?.clone();
        *latents.get_mut(sets.factor)? = traverse(&z, sets, config)?;
    }
    model.decode(&latents, &enc.switches)
}
