//! Single-image intrinsic decomposition by direct optimization.
//!
//! Per-pixel albedo, per-pixel unconstrained normal vectors and the 27 light
//! coefficients are optimized jointly with Adam against the reconstruction,
//! prior and regularization terms. Normals enter the shading layer through
//! [`normalize_with_grad`], so the effective normals are unit by construction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    load_float_map, load_mask, save_float_map, save_mask, MatteMask, NormalField, PixelField,
};
use crate::losses::{
    albedo_smoothness, bws_gradient, bws_means, l2_raw, light_loss, shading_smoothness, total_objective,
    LossPart, LossReport, LossWeights, Term,
};
use crate::optim::{Adam, AdamParams};
use crate::shading::{estimate_light, shade_backward_vectors, shade_forward, shade_vectors, ShCoeffs, SH_LEN};

/// Below this length a raw normal cannot be normalized.
pub const MIN_RAW_NORM: f64 = 1e-8;

/// How the albedo/shading scale is pinned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BwsMode {
    /// Only the quadratic penalty during optimization.
    Penalty,
    /// Penalty, then an exact per-channel rescale of the result.
    Rescale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub iters: usize,
    pub lr_albedo: f64,
    pub lr_normals: f64,
    pub lr_light: f64,
    /// Relative total-loss change over `window` steps that counts as converged.
    pub tol: f64,
    pub window: usize,
    /// Shading floor for divisions.
    pub epsilon: f64,
    pub albedo_max: f64,
    pub bws_mode: BwsMode,
    /// Leading iterations run with the albedo tied to `image ⊘ shading`.
    pub tied_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            lr_albedo: 1e-2,
            lr_normals: 1e-2,
            lr_light: 1e-2,
            tol: 1e-6,
            window: 50,
            epsilon: 1e-4,
            albedo_max: 4.0,
            bws_mode: BwsMode::Rescale,
            tied_iters: 1500,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_albedo", self.lr_albedo),
            ("lr_normals", self.lr_normals),
            ("lr_light", self.lr_light),
            ("epsilon", self.epsilon),
            ("albedo_max", self.albedo_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.tol >= 0.0) || self.window == 0 {
            return Err(Error::Config("solver.tol must be >= 0 and solver.window >= 1".into()));
        }
        Ok(())
    }
}

/// Loss weights used by the solver when a run configuration gives none: the
/// library defaults without the light prior, since the constant-albedo estimate
/// it pulls toward is biased by albedo variation.
pub fn default_weights() -> LossWeights {
    LossWeights {
        w_light: 0.0,
        ..LossWeights::default()
    }
}

/// Unit vector and the Jacobian `(I − n nᵀ)/‖raw‖` of the normalization.
pub fn normalize_with_grad(raw: [f64; 3]) -> Result<([f64; 3], [[f64; 3]; 3])> {
    let len = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
    if !(len > MIN_RAW_NORM) || !len.is_finite() {
        return Err(Error::ZeroVector(len));
    }
    let n = raw.map(|v| v / len);
    let mut jac = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            jac[i][j] = (delta - n[i] * n[j]) / len;
        }
    }
    Ok((n, jac))
}

/// Normalizes with fallback: near-zero vectors map to `(0, 0, 1)` with zero Jacobian.
pub(crate) fn normalize_or_frontal(raw: [f64; 3]) -> ([f64; 3], Option<f64>) {
    let len = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
    if len > MIN_RAW_NORM && len.is_finite() {
        (raw.map(|v| v / len), Some(len))
    } else {
        ([0.0, 0.0, 1.0], None)
    }
}

/// Chain rule through normalization: `Jᵀ g = (g − n (n·g)) / ‖raw‖`.
#[inline]
pub(crate) fn normalize_backward(n: &[f64; 3], len: Option<f64>, g: &[f64; 3]) -> [f64; 3] {
    match len {
        Some(len) => {
            let d = n[0] * g[0] + n[1] * g[1] + n[2] * g[2];
            [0, 1, 2].map(|k| (g[k] - n[k] * d) / len)
        }
        None => [0.0; 3],
    }
}

/// Optimization variables, optimizer moments and priors of one decomposition.
#[derive(Clone, Debug)]
pub struct DecompState {
    pub image: PixelField,
    pub albedo: PixelField,
    pub raw_normals: Vec<[f64; 3]>,
    pub light: [f64; SH_LEN],
    pub prior_normals: NormalField,
    pub prior_light: ShCoeffs,
    pub mask: MatteMask,
    pub weights: LossWeights,
    pub config: SolverConfig,
    pub step: usize,
    adam_albedo: Adam,
    adam_normals: Adam,
    adam_light: Adam,
}

/// Gradient of the objective with respect to the free variables.
#[derive(Clone, Debug)]
pub struct StateGradient {
    pub albedo: Vec<f64>,
    pub raw_normals: Vec<[f64; 3]>,
    pub light: [f64; SH_LEN],
}

/// Output of [`solve`].
#[derive(Clone, Debug)]
pub struct DecompResult {
    pub albedo: PixelField,
    pub shading: PixelField,
    pub normals: NormalField,
    pub light: ShCoeffs,
    pub mask: MatteMask,
    /// One report per evaluated iteration; the last entry is the returned iterate.
    pub trace: Vec<LossReport>,
    pub converged: bool,
    pub iterations: usize,
    /// Per-channel factors applied to the shading by the exact white-shading rescale.
    pub bws_scale: Option<[f64; 3]>,
}

/// Initializes the solver from an image, prior normals and mask.
///
/// The light starts at (and is pulled toward) the constant-albedo least-squares
/// estimate; albedo starts at `image ⊘ max(shading, ε)` clamped to `[0, albedo_max]`.
pub fn init_state(
    image: &PixelField,
    prior_normals: &NormalField,
    mask: &MatteMask,
    config: &SolverConfig,
    weights: &LossWeights,
) -> Result<DecompState> {
    config.validate()?;
    weights.validate()?;
    if image.channels() != 3 {
        return Err(Error::shape("decomposition image channels", 3, image.channels()));
    }
    image.check_extent(prior_normals.width(), prior_normals.height(), "decomposition image")?;
    mask.check_extent(prior_normals.width(), prior_normals.height(), "decomposition mask")?;
    if !(mask.mass() > 0.0) {
        return Err(Error::EmptyMask("decomposition"));
    }
    let light = estimate_light(image, prior_normals, mask)?;
    let shading = shade_forward(prior_normals, &light, None)?;
    let albedo = image.zip_map(&shading, |i, s| (i / s.max(config.epsilon)).clamp(0.0, config.albedo_max))?;
    let n_px = prior_normals.vectors().len();
    Ok(DecompState {
        image: image.clone(),
        albedo,
        raw_normals: prior_normals.vectors().to_vec(),
        light: *light.as_array(),
        prior_normals: prior_normals.clone(),
        prior_light: light,
        mask: mask.clone(),
        weights: weights.clone(),
        config: config.clone(),
        step: 0,
        adam_albedo: Adam::new(n_px * 3, AdamParams::with_lr(config.lr_albedo)),
        adam_normals: Adam::new(n_px * 3, AdamParams::with_lr(config.lr_normals)),
        adam_light: Adam::new(SH_LEN, AdamParams::with_lr(config.lr_light)),
    })
}

impl DecompState {
    /// Effective unit normals and the raw lengths used by the backward pass.
    fn effective_normals(&self) -> (Vec<[f64; 3]>, Vec<Option<f64>>) {
        self.raw_normals.iter().map(|r| normalize_or_frontal(*r)).unzip()
    }

    pub fn normals(&self) -> NormalField {
        let (n, _) = self.effective_normals();
        NormalField::from_unit_unchecked(self.prior_normals.width(), self.prior_normals.height(), n)
    }

    pub fn light(&self) -> ShCoeffs {
        ShCoeffs::new(self.light).expect("solver keeps light finite")
    }

    /// Evaluates the full objective and its gradient at the current iterate.
    pub fn objective(&self) -> Result<(LossReport, StateGradient)> {
        self.evaluate(false)
    }

    /// Objective and gradient with the albedo tied to `image ⊘ max(shading, ε)`
    /// (clamped). The normal and light gradients are total derivatives through the
    /// tie; the albedo gradient is zero.
    pub fn tied_objective(&self) -> Result<(LossReport, StateGradient)> {
        self.evaluate(true)
    }

    /// Sets the albedo to `clamp(image ⊘ max(shading, ε), 0, albedo_max)`.
    pub fn tie_albedo(&mut self) {
        let (normals, _) = self.effective_normals();
        let shading = shade_vectors(&normals, &self.light());
        let (eps, amax) = (self.config.epsilon, self.config.albedo_max);
        for ((a, i), s) in self.albedo.data_mut().iter_mut().zip(self.image.data()).zip(shading) {
            *a = (i / s.max(eps)).clamp(0.0, amax);
        }
    }

    fn evaluate(&self, tied: bool) -> Result<(LossReport, StateGradient)> {
        let (w, h) = (self.image.width(), self.image.height());
        let light = ShCoeffs::new(self.light).map_err(|_| Error::NanTerm { term: "light".into() })?;
        let (normals, lens) = self.effective_normals();
        let shading = PixelField::from_raw(w, h, 3, shade_vectors(&normals, &light));
        let fg: Vec<f64> = self.albedo.data().iter().zip(shading.data()).map(|(a, s)| a * s).collect();
        let alpha = self.mask.alpha();
        let mass = self.mask.mass();
        let wts = &self.weights;

        let (recon, recon_raw, g_recon) = l2_raw(&fg, self.image.data(), 3, alpha, mass);
        let normal_flat: Vec<f64> = normals.iter().flatten().copied().collect();
        let prior_flat: Vec<f64> = self.prior_normals.vectors().iter().flatten().copied().collect();
        let (normal, normal_raw, g_normal) = l2_raw(&normal_flat, &prior_flat, 3, alpha, mass);
        let (light_v, g_light) = light_loss(&light, &self.prior_light);
        let smooth_a = albedo_smoothness(&self.albedo, Some(&self.mask), wts.charbonnier_delta)?;
        let smooth_s = shading_smoothness(&shading, Some(&self.mask))?;
        let (means, _) = bws_means(std::iter::once(shading.data()), std::iter::once(alpha));
        let bws: f64 = means.iter().map(|m| (m - wts.bws_target).powi(2)).sum();
        let g_bws = bws_gradient(alpha, &means, mass, wts.bws_target);

        let parts = [
            LossPart::with_raw(Term::Recon, recon, recon_raw),
            LossPart::with_raw(Term::Normal, normal, normal_raw),
            LossPart::new(Term::Light, light_v),
            LossPart::with_raw(Term::AlbedoSmooth, smooth_a.value, smooth_a.raw_sum),
            LossPart::with_raw(Term::ShadingSmooth, smooth_s.value, smooth_s.raw_sum),
            LossPart::new(Term::Bws, bws),
        ];
        let report = total_objective(&parts, wts)?;

        let n = fg.len();
        let mut d_albedo = vec![0.0; n];
        let mut d_shading = vec![0.0; n];
        for i in 0..n {
            let g_fg = wts.w_recon * g_recon[i];
            d_albedo[i] = g_fg * shading.data()[i] + wts.w_albedo_smooth * smooth_a.gradient.data()[i];
            d_shading[i] = g_fg * self.albedo.data()[i]
                + wts.w_shading_smooth * smooth_s.gradient.data()[i]
                + wts.w_bws * g_bws[i];
        }
        if tied {
            let (eps, amax) = (self.config.epsilon, self.config.albedo_max);
            for i in 0..n {
                let (s, img) = (shading.data()[i], self.image.data()[i]);
                let a = img / s;
                if s > eps && a > 0.0 && a < amax {
                    d_shading[i] -= d_albedo[i] * a / s;
                }
                d_albedo[i] = 0.0;
            }
        }
        let sg = shade_backward_vectors(&normals, &light, &d_shading);
        let raw_grads = sg
            .d_normals
            .iter()
            .enumerate()
            .map(|(p, dn)| {
                let g = [0, 1, 2].map(|k| dn[k] + wts.w_normal * g_normal[p * 3 + k]);
                normalize_backward(&normals[p], lens[p], &g)
            })
            .collect();
        let mut d_light = sg.d_light;
        for (d, g) in d_light.iter_mut().zip(g_light) {
            *d += wts.w_light * g;
        }
        Ok((
            report,
            StateGradient {
                albedo: d_albedo,
                raw_normals: raw_grads,
                light: d_light,
            },
        ))
    }

    /// One Adam update followed by the albedo box projection.
    fn apply(&mut self, grad: &StateGradient) {
        let amax = self.config.albedo_max;
        let albedo = self.albedo.data_mut();
        self.adam_albedo.step(albedo, &grad.albedo);
        for a in albedo.iter_mut() {
            *a = a.clamp(0.0, amax);
        }
        let raw: &mut [f64] = self.raw_normals.as_flattened_mut();
        self.adam_normals.step(raw, grad.raw_normals.as_flattened());
        self.adam_light.step(&mut self.light, &grad.light);
        self.step += 1;
    }

    pub fn moments(&self) -> [(&[f64], &[f64]); 3] {
        [
            (self.adam_albedo.first_moment(), self.adam_albedo.second_moment()),
            (self.adam_normals.first_moment(), self.adam_normals.second_moment()),
            (self.adam_light.first_moment(), self.adam_light.second_moment()),
        ]
    }

    fn snapshot(&self) -> (PixelField, Vec<[f64; 3]>, [f64; SH_LEN]) {
        (self.albedo.clone(), self.raw_normals.clone(), self.light)
    }

    fn into_result(self, trace: Vec<LossReport>, converged: bool, iterations: usize) -> Result<DecompResult> {
        let normals = self.normals();
        let light = self.light();
        let shading = shade_forward(&normals, &light, None)?;
        Ok(DecompResult {
            albedo: self.albedo,
            shading,
            normals,
            light,
            mask: self.mask,
            trace,
            converged,
            iterations,
            bws_scale: None,
        })
    }
}

/// Runs the decomposition. Returns the lowest-objective iterate encountered.
pub fn solve(
    image: &PixelField,
    prior_normals: &NormalField,
    mask: &MatteMask,
    config: &SolverConfig,
    weights: &LossWeights,
) -> Result<DecompResult> {
    let state = init_state(image, prior_normals, mask, config, weights)?;
    solve_from(state)
}

/// Runs the decomposition from a prepared state.
pub fn solve_from(mut state: DecompState) -> Result<DecompResult> {
    let mut config = state.config.clone();
    let mut trace: Vec<LossReport> = Vec::with_capacity(config.iters + 1);
    let mut best: Option<(f64, (PixelField, Vec<[f64; 3]>, [f64; SH_LEN]))> = None;
    let mut converged = false;
    let mut iterations = 0;

    let mut stage_start = 0;
    for iter in 0..config.iters {
        let tied = iter < config.tied_iters;
        if iter == config.tied_iters {
            stage_start = iter;
        }
        let evaluated = if tied { state.tied_objective() } else { state.objective() };
        let (report, grad) = evaluated.map_err(|e| match e {
            Error::NanTerm { term } => Error::NanObjective { iteration: iter, term },
            other => other,
        })?;
        if best.as_ref().is_none_or(|(t, _)| report.total < *t) {
            best = Some((report.total, state.snapshot()));
        }
        let total = report.total;
        trace.push(report);
        if iter >= stage_start + config.window {
            let past = trace[iter - config.window].total;
            if (past - total).abs() / past.abs().max(f64::MIN_POSITIVE) < config.tol {
                if tied {
                    config.tied_iters = iter;
                    stage_start = iter;
                } else {
                    converged = true;
                    break;
                }
            }
        }
        state.apply(&grad);
        if tied {
            state.tie_albedo();
        }
        iterations = iter + 1;
    }

    if let Some((best_total, (albedo, raw, light))) = best {
        let (current, _) = state.objective()?;
        if current.total > best_total {
            state.albedo = albedo;
            state.raw_normals = raw;
            state.light = light;
        }
    }
    let (final_report, _) = state.objective()?;
    trace.push(final_report);

    let bws_mode = config.bws_mode;
    let target = state.weights.bws_target;
    let mut result = state.into_result(trace, converged, iterations)?;
    if bws_mode == BwsMode::Rescale {
        result.rescale_white(target)?;
    }
    Ok(result)
}

impl DecompResult {
    pub fn reconstruction(&self) -> Result<PixelField> {
        crate::formation::form_image(&self.albedo, &self.shading)
    }

    /// Masked per-element MSE of the reconstruction against `image`.
    pub fn masked_mse(&self, image: &PixelField) -> Result<f64> {
        masked_mse(&self.reconstruction()?, image, &self.mask)
    }

    /// Scales each shading channel to masked mean `target`, dividing the albedo by the
    /// same factor so `albedo ⊙ shading` is unchanged.
    pub fn rescale_white(&mut self, target: f64) -> Result<[f64; 3]> {
        let means = crate::synth::masked_channel_means(&self.shading, &self.mask);
        if means.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::Config(format!(
                "cannot rescale to white shading: masked channel means {means:?}"
            )));
        }
        let factors = means.map(|m| target / m);
        self.light = self.light.scale_channels(factors);
        self.shading = shade_forward(&self.normals, &self.light, None)?;
        let c = self.albedo.channels();
        for (i, a) in self.albedo.data_mut().iter_mut().enumerate() {
            *a /= factors[i % c];
        }
        self.bws_scale = Some(match self.bws_scale {
            Some(prev) => [0, 1, 2].map(|k| prev[k] * factors[k]),
            None => factors,
        });
        Ok(factors)
    }

    /// Writes `albedo.pfm`, `shading.pfm`, `normals.pfm`, `light.json`, `trace.json`
    /// and `mask.png` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_float_map(&self.albedo, dir.join("albedo.pfm"))?;
        save_float_map(&self.shading, dir.join("shading.pfm"))?;
        save_float_map(&self.normals, dir.join("normals.pfm"))?;
        save_mask(&self.mask, dir.join("mask.png"))?;
        let light = dir.join("light.json");
        fs::write(&light, self.light.to_json()).map_err(|e| Error::io(&light, e))?;
        let trace = TraceFile {
            converged: self.converged,
            iterations: self.iterations,
            bws_scale: self.bws_scale,
            reports: self.trace.clone(),
        };
        let path = dir.join("trace.json");
        fs::write(&path, serde_json::to_string(&trace)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads a decomposition directory. Shading is recomputed from the stored
    /// normals and light when `shading.pfm` is absent.
    pub fn read_dir(dir: &Path) -> Result<DecompResult> {
        let albedo = load_float_map(dir.join("albedo.pfm"))?;
        let normals = NormalField::from_field_renormalized(&load_float_map(dir.join("normals.pfm"))?)?;
        let light_path = dir.join("light.json");
        let text = fs::read_to_string(&light_path).map_err(|e| Error::io(&light_path, e))?;
        let light = ShCoeffs::from_json(&text)?;
        let shading_path = dir.join("shading.pfm");
        let shading = if shading_path.exists() {
            load_float_map(&shading_path)?
        } else {
            shade_forward(&normals, &light, None)?
        };
        let mask_path = dir.join("mask.png");
        let mask = if mask_path.exists() {
            load_mask(&mask_path)?
        } else {
            MatteMask::full(normals.width(), normals.height())
        };
        let (trace, converged, iterations, bws_scale) = match fs::read_to_string(dir.join("trace.json")) {
            Ok(t) => {
                let f: TraceFile = serde_json::from_str(&t)?;
                (f.reports, f.converged, f.iterations, f.bws_scale)
            }
            Err(_) => (Vec::new(), false, 0, None),
        };
        Ok(DecompResult {
            albedo,
            shading,
            normals,
            light,
            mask,
            trace,
            converged,
            iterations,
            bws_scale,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TraceFile {
    converged: bool,
    iterations: usize,
    bws_scale: Option<[f64; 3]>,
    reports: Vec<LossReport>,
}

/// Masked per-element mean squared difference of two three-channel fields.
pub fn masked_mse(a: &PixelField, b: &PixelField, mask: &MatteMask) -> Result<f64> {
    a.check_same_shape(b, "masked_mse")?;
    mask.check_extent(a.width(), a.height(), "masked_mse mask")?;
    let c = a.channels();
    let mut sum = 0.0;
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        sum += mask.alpha()[i / c] * (x - y).powi(2);
    }
    Ok(sum / (mask.mass() * c as f64))
}

/// Masked per-element mean absolute difference.
pub fn masked_mae(a: &PixelField, b: &PixelField, mask: &MatteMask) -> Result<f64> {
    a.check_same_shape(b, "masked_mae")?;
    mask.check_extent(a.width(), a.height(), "masked_mae mask")?;
    let c = a.channels();
    let mut sum = 0.0;
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        sum += mask.alpha()[i / c] * (x - y).abs();
    }
    Ok(sum / (mask.mass() * c as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SynthConfig};

    #[test]
    fn normalize_examples() {
        let (n, j) = normalize_with_grad([0.0, 0.0, 2.0]).unwrap();
        assert_eq!(n, [0.0, 0.0, 1.0]);
        assert_eq!(j[0][0], 0.5);
        assert_eq!(j[2][2], 0.0);
        let u = [0.6, 0.0, 0.8];
        let (n, j) = normalize_with_grad(u).unwrap();
        for i in 0..3 {
            assert!((n[i] - u[i]).abs() < 1e-15);
            for k in 0..3 {
                let expected = if i == k { 1.0 } else { 0.0 } - u[i] * u[k];
                assert!((j[i][k] - expected).abs() < 1e-15);
            }
        }
        assert!(normalize_with_grad([0.0, 1e-9, 0.0]).is_err());
    }

    #[test]
    fn init_on_rendered_scene_has_tiny_residual() {
        // flat albedo so the constant-albedo light estimate is exact
        let cfg = SynthConfig {
            cells: [1, 1],
            ..SynthConfig::default()
        };
        let s = generate_scene(32, 4, &cfg).unwrap();
        let state = init_state(
            &s.image,
            &s.gt_normals,
            &s.gt_mask,
            &SolverConfig::default(),
            &LossWeights::default(),
        )
        .unwrap();
        let (report, _) = state.objective().unwrap();
        assert!(report.get(Term::Recon).unwrap().value < 1e-10);
    }

    #[test]
    fn shading_floor_guards_division() {
        let img = PixelField::filled(4, 4, 3, 0.5);
        let normals = NormalField::from_raw_vectors(
            4,
            4,
            &(0..16)
                .map(|i| [(i % 4) as f64 * 0.3 - 0.45, (i / 4) as f64 * 0.3 - 0.45, 1.0])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut state = init_state(
            &img,
            &normals,
            &MatteMask::full(4, 4),
            &SolverConfig::default(),
            &LossWeights::default(),
        )
        .unwrap();
        state.light = [0.0; SH_LEN];
        let (report, grad) = state.objective().unwrap();
        assert!(report.total.is_finite());
        assert!(grad.albedo.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn empty_mask_rejected() {
        let s = generate_scene(16, 1, &SynthConfig::default()).unwrap();
        let empty = MatteMask::new(16, 16, vec![0.0; 256]).unwrap();
        let err = init_state(&s.image, &s.gt_normals, &empty, &SolverConfig::default(), &LossWeights::default());
        assert!(matches!(err, Err(Error::EmptyMask(_))));
    }

    #[test]
    fn zero_iterations_is_identity() {
        let s = generate_scene(24, 2, &SynthConfig::default()).unwrap();
        let cfg = SolverConfig {
            iters: 0,
            bws_mode: BwsMode::Penalty,
            ..SolverConfig::default()
        };
        let w = LossWeights::default();
        let init = init_state(&s.image, &s.gt_normals, &s.gt_mask, &cfg, &w).unwrap();
        let r = solve(&s.image, &s.gt_normals, &s.gt_mask, &cfg, &w).unwrap();
        assert_eq!(r.albedo, init.albedo);
        assert_eq!(r.light.as_array(), &init.light);
        for (a, b) in r.normals.vectors().iter().zip(init.prior_normals.vectors()) {
            assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-15));
        }
        assert_eq!(r.trace.len(), 1);
    }
}
