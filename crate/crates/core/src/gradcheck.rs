//! Finite-difference verification of every analytic backward pass.
//!
//! Each check draws random inputs, evaluates a scalar probe `Σ u ⊙ f(x)` (or the
//! loss itself) and compares its analytic gradient against a fourth-order
//! central difference. The error measure is `|a − n| / max(|a|, |n|, floor)`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::formation::{composite_backward_raw, composite_raw};
use crate::imaging::{uv_resample, uv_resample_backward, MatteMask, NormalField, PixelField};
use crate::losses::{
    albedo_smoothness, bws_penalty, ebgan_losses, l2_map_loss, light_loss, shading_smoothness, LossWeights,
};
use crate::shading::{shade_backward_vectors, shade_vectors, ShCoeffs, SH_LEN};
use crate::solver::{init_state, normalize_with_grad, SolverConfig};
use crate::synth::SceneSample;
use crate::toynet::{discriminator_objective, generator_objective, ToyConfig, ToyModel};

/// Finite-difference step for single layers.
pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-3;

/// Outcome of one layer's check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub layer: String,
    /// Random instances (or parameter coordinates) checked.
    pub samples: usize,
    /// Scalar gradient entries compared.
    pub entries: usize,
    pub max_rel_err: f64,
    pub seconds: f64,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Fourth-order central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut at = |d: f64| {
        p[i] = x[i] + d;
        f(&p)
    };
    let (f2, f1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
    (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h)
}

/// Compares `analytic` to finite differences of `f` at `x` over every coordinate.
pub fn compare_all(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| rel_err(analytic[i], central_difference(&mut f, x, i, STEP)))
        .fold(0.0, f64::max)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng).abs() + 0.2];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 {
            return v.map(|c| c / n);
        }
    }
}

struct Tally {
    name: &'static str,
    samples: usize,
    entries: usize,
    max: f64,
    start: Instant,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, samples: 0, entries: 0, max: 0.0, start: Instant::now() }
    }

    fn add(&mut self, err: f64, entries: usize) {
        self.samples += 1;
        self.entries += entries;
        self.max = self.max.max(err);
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            layer: self.name.to_string(),
            samples: self.samples,
            entries: self.entries,
            max_rel_err: self.max,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

/// SH shading: gradients with respect to free normal components and all 27
/// light coefficients.
pub fn check_shading(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("shading");
    for _ in 0..samples {
        let n = unit(&mut rng);
        let light = ShCoeffs::from_slice(&randn(&mut rng, SH_LEN)).expect("finite");
        let u = randn(&mut rng, 3);
        let g = shade_backward_vectors(&[n], &light, &u);
        let mut x: Vec<f64> = n.to_vec();
        x.extend_from_slice(light.as_array());
        let mut analytic = g.d_normals[0].to_vec();
        analytic.extend_from_slice(&g.d_light);
        let f = |x: &[f64]| {
            let l = ShCoeffs::from_slice(&x[3..]).expect("finite");
            dot(&u, &shade_vectors(&[[x[0], x[1], x[2]]], &l))
        };
        t.add(compare_all(f, &x, &analytic), x.len());
    }
    t.finish()
}

/// `A ⊙ S` with respect to both factors.
pub fn check_formation(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("formation");
    for _ in 0..samples {
        let a = PixelField::new(2, 2, 3, uniform(&mut rng, 12, 0.0, 1.0)).expect("finite");
        let s = PixelField::new(2, 2, 3, randn(&mut rng, 12)).expect("finite");
        let u = PixelField::new(2, 2, 3, randn(&mut rng, 12)).expect("finite");
        let (da, ds) = crate::formation::form_image_backward(&a, &s, &u).expect("shapes agree");
        let x: Vec<f64> = a.data().iter().chain(s.data()).copied().collect();
        let analytic: Vec<f64> = da.data().iter().chain(ds.data()).copied().collect();
        let f = |x: &[f64]| (0..12).map(|i| u.data()[i] * x[i] * x[12 + i]).sum::<f64>();
        t.add(compare_all(f, &x, &analytic), x.len());
    }
    t.finish()
}

/// Matte compositing with respect to foreground, background and matte.
pub fn check_compositing(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("compositing");
    for _ in 0..samples {
        let (fg, bg) = (randn(&mut rng, 12), randn(&mut rng, 12));
        let m = uniform(&mut rng, 4, 0.05, 0.95);
        let u = randn(&mut rng, 12);
        let g = composite_backward_raw(&fg, &bg, &m, &u, 3);
        let x: Vec<f64> = fg.iter().chain(&bg).chain(&m).copied().collect();
        let analytic: Vec<f64> = g.d_fg.iter().chain(&g.d_bg).chain(&g.d_matte).copied().collect();
        let f = |x: &[f64]| dot(&u, &composite_raw(&x[..12], &x[12..24], &x[24..], 3));
        t.add(compare_all(f, &x, &analytic), x.len());
    }
    t.finish()
}

/// Bilinear UV resampling with respect to the source and the coordinates.
/// Coordinates are drawn away from texel boundaries, where the map has kinks.
pub fn check_resample(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("uv_resample");
    let (sw, sh) = (4usize, 3usize);
    for _ in 0..samples {
        let src = PixelField::new(sw, sh, 2, randn(&mut rng, sw * sh * 2)).expect("finite");
        let uv: Vec<f64> = (0..4)
            .flat_map(|_| {
                let cu = rng.random_range(0..sw - 1) as f64 + rng.random_range(0.05..0.95);
                let cv = rng.random_range(0..sh - 1) as f64 + rng.random_range(0.05..0.95);
                [cu / (sw - 1) as f64, cv / (sh - 1) as f64]
            })
            .collect();
        let uv = PixelField::new(2, 2, 2, uv).expect("finite");
        let u = PixelField::new(2, 2, 2, randn(&mut rng, 8)).expect("finite");
        let (ds, duv) = uv_resample_backward(&src, &uv, &u).expect("shapes agree");
        let n_src = src.data().len();
        let x: Vec<f64> = src.data().iter().chain(uv.data()).copied().collect();
        let analytic: Vec<f64> = ds.data().iter().chain(duv.data()).copied().collect();
        let f = |x: &[f64]| {
            let s = PixelField::new(sw, sh, 2, x[..n_src].to_vec()).expect("finite");
            let c = PixelField::new(2, 2, 2, x[n_src..].to_vec()).expect("finite");
            uv_resample(&s, &c).expect("shapes agree").dot(&u)
        };
        t.add(compare_all(f, &x, &analytic), x.len());
    }
    t.finish()
}

/// Normalization Jacobian `(I − n nᵀ)/‖raw‖`, column by column.
pub fn check_normalize(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("normalize");
    for _ in 0..samples {
        let raw = [normal(&mut rng), normal(&mut rng), normal(&mut rng) + 0.5];
        let (_, jac) = normalize_with_grad(raw).expect("nonzero");
        let mut worst: f64 = 0.0;
        for row in 0..3 {
            let f = |x: &[f64]| normalize_with_grad([x[0], x[1], x[2]]).expect("nonzero").0[row];
            worst = worst.max(compare_all(f, &raw, &jac[row]));
        }
        t.add(worst, 9);
    }
    t.finish()
}

fn field(w: usize, h: usize, c: usize, v: &[f64]) -> PixelField {
    PixelField::new(w, h, c, v.to_vec()).expect("finite")
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> MatteMask {
    let mut alpha: Vec<f64> = (0..w * h).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.2..1.0) }).collect();
    alpha[0] = 1.0;
    MatteMask::new(w, h, alpha).expect("alpha in range")
}

/// Every loss functional of the objective.
pub fn check_losses(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (4usize, 3usize);
    let n = w * h * 3;
    let mut out = Vec::new();

    let mut t = Tally::new("loss_l2");
    for _ in 0..samples {
        let target = randn(&mut rng, n);
        let mask = random_mask(&mut rng, w, h);
        let x = randn(&mut rng, n);
        let g = l2_map_loss(&field(w, h, 3, &x), &field(w, h, 3, &target), Some(&mask)).expect("valid");
        let f = |x: &[f64]| l2_map_loss(&field(w, h, 3, x), &field(w, h, 3, &target), Some(&mask)).expect("valid").value;
        t.add(compare_all(f, &x, g.gradient.data()), n);
    }
    out.push(t.finish());

    let mut t = Tally::new("loss_light");
    for _ in 0..samples {
        let target = ShCoeffs::from_slice(&uniform(&mut rng, SH_LEN, -1.0, 1.0)).expect("finite");
        let x = uniform(&mut rng, SH_LEN, -1.0, 1.0);
        let (_, g) = light_loss(&ShCoeffs::from_slice(&x).expect("finite"), &target);
        let f = |x: &[f64]| light_loss(&ShCoeffs::from_slice(x).expect("finite"), &target).0;
        t.add(compare_all(f, &x, &g), SH_LEN);
    }
    out.push(t.finish());

    let mut t = Tally::new("loss_albedo_smooth");
    let delta = LossWeights::default().charbonnier_delta;
    for _ in 0..samples {
        let mask = random_mask(&mut rng, w, h);
        // Differences well away from the Charbonnier kink scale keep the probe smooth at the step size.
        let x = uniform(&mut rng, n, 0.0, 1.0);
        let g = albedo_smoothness(&field(w, h, 3, &x), Some(&mask), delta).expect("valid");
        let f = |x: &[f64]| albedo_smoothness(&field(w, h, 3, x), Some(&mask), delta).expect("valid").value;
        t.add(compare_all(f, &x, g.gradient.data()), n);
    }
    out.push(t.finish());

    let mut t = Tally::new("loss_shading_smooth");
    for _ in 0..samples {
        let mask = random_mask(&mut rng, w, h);
        let x = randn(&mut rng, n);
        let g = shading_smoothness(&field(w, h, 3, &x), Some(&mask)).expect("valid");
        let f = |x: &[f64]| shading_smoothness(&field(w, h, 3, x), Some(&mask)).expect("valid").value;
        t.add(compare_all(f, &x, g.gradient.data()), n);
    }
    out.push(t.finish());

    let mut t = Tally::new("loss_bws");
    for _ in 0..samples {
        let masks = [random_mask(&mut rng, w, h), random_mask(&mut rng, w, h)];
        let x = uniform(&mut rng, 2 * n, 0.2, 1.2);
        let eval = |x: &[f64]| {
            let (a, b) = (field(w, h, 3, &x[..n]), field(w, h, 3, &x[n..]));
            bws_penalty(&[&a, &b], &[&masks[0], &masks[1]], 0.75).expect("valid")
        };
        let g = eval(&x);
        let analytic: Vec<f64> = g.gradients.iter().flat_map(|f| f.data().to_vec()).collect();
        t.add(compare_all(|x| eval(x).value, &x, &analytic), 2 * n);
    }
    out.push(t.finish());

    let mut t = Tally::new("loss_ebgan");
    for _ in 0..samples {
        let x = uniform(&mut rng, 4 * n, 0.0, 1.0);
        let margin = rng.random_range(0.0..0.6);
        let parts = |x: &[f64]| {
            let f = |k: usize| field(w, h, 3, &x[k * n..(k + 1) * n]);
            ebgan_losses(&f(0), &f(1), &f(2), &f(3), margin).expect("valid")
        };
        let e = parts(&x);
        // Stay off the hinge kink.
        if (margin - e.d_fake).abs() < 1e-3 {
            continue;
        }
        let d: Vec<f64> = [&e.d_wrt_recon_real, &e.d_wrt_real, &e.d_wrt_recon_fake, &e.d_wrt_fake]
            .iter()
            .flat_map(|f| f.data().to_vec())
            .collect();
        let g: Vec<f64> = [PixelField::zeros(w, h, 3), PixelField::zeros(w, h, 3), e.g_wrt_recon_fake.clone(), e.g_wrt_fake.clone()]
            .iter()
            .flat_map(|f| f.data().to_vec())
            .collect();
        let err = compare_all(|x| parts(x).d_loss, &x, &d).max(compare_all(|x| parts(x).g_loss, &x, &g));
        t.add(err, 8 * n);
    }
    out.push(t.finish());
    out
}

/// The solver's full objective at random iterates, through normalization,
/// shading, formation and every term.
pub fn check_solver_objective(samples: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("solver_objective");
    let (w, h) = (4usize, 4usize);
    let px = w * h;
    let weights = LossWeights { w_light: 0.1, ..LossWeights::default() };
    for _ in 0..samples {
        let normals = NormalField::new(w, h, (0..px).map(|_| unit(&mut rng)).collect())?;
        let image = PixelField::bounded(w, h, 3, uniform(&mut rng, px * 3, 0.1, 0.9))?;
        let mask = random_mask(&mut rng, w, h);
        let mut state = init_state(&image, &normals, &mask, &SolverConfig::default(), &weights)?;
        // A checkerboard keeps neighbor differences far above the Charbonnier scale.
        let albedo: Vec<f64> = (0..px * 3)
            .map(|i| 0.2 + 0.5 * ((i / 3 % w + i / 3 / w) % 2) as f64 + rng.random_range(0.0..0.25))
            .collect();
        state.albedo = field(w, h, 3, &albedo);
        state.raw_normals = (0..px).map(|_| unit(&mut rng).map(|c| c * rng.random_range(0.5..2.0))).collect();
        let light = uniform(&mut rng, SH_LEN, -0.3, 0.3);
        state.light.copy_from_slice(&light);
        for c in 0..3 {
            state.light[c * 9] += 1.0;
        }
        // The least-squares prior of a random image can be far off; keep the prior term O(1).
        state.prior_light = ShCoeffs::new(state.light)?.add(&ShCoeffs::from_slice(&uniform(&mut rng, SH_LEN, -0.2, 0.2))?);
        let (_, g) = state.objective()?;
        let mut x: Vec<f64> = state.albedo.data().to_vec();
        x.extend(state.raw_normals.iter().flatten());
        x.extend_from_slice(&state.light);
        let mut analytic = g.albedo.clone();
        analytic.extend(g.raw_normals.iter().flatten());
        analytic.extend_from_slice(&g.light);
        let probe = state.clone();
        let f = |x: &[f64]| {
            let mut s = probe.clone();
            s.albedo = field(w, h, 3, &x[..px * 3]);
            s.raw_normals = x[px * 3..px * 6].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            s.light.copy_from_slice(&x[px * 6..]);
            s.objective().expect("finite").0.total
        };
        t.add(compare_all(f, &x, &analytic), x.len());
    }
    Ok(t.finish())
}

/// A random 8×8 scene for the micro network; values need not be physically consistent.
pub fn micro_sample(rng: &mut ChaCha8Rng, size: usize) -> Result<SceneSample> {
    let px = size * size;
    let normals = NormalField::new(size, size, (0..px).map(|_| unit(rng)).collect())?;
    let face = NormalField::new(size, size, (0..px).map(|_| unit(rng)).collect())?;
    let light = ShCoeffs::from_slice(&uniform(rng, SH_LEN, -0.3, 0.3))?;
    let mask = random_mask(rng, size, size);
    let albedo = PixelField::bounded(size, size, 3, uniform(rng, px * 3, 0.2, 0.9))?;
    let shading = crate::shading::shade_forward(&normals, &light, None)?;
    Ok(SceneSample {
        image: PixelField::bounded(size, size, 3, uniform(rng, px * 3, 0.0, 1.0))?,
        gt_albedo: albedo,
        gt_shading: shading,
        gt_normals: normals,
        gt_light: light,
        gt_mask: mask,
        gt_uv: PixelField::bounded(size, size, 2, uniform(rng, px * 2, 0.0, 1.0))?,
        gt_face_normals: face,
        background: PixelField::bounded(size, size, 3, uniform(rng, px * 3, 0.0, 1.0))?,
        seed: 0,
    })
}

/// Generator and discriminator gradients of the micro network over every parameter.
pub fn check_network(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ToyConfig { implicit: true, seed, ..ToyConfig::micro() };
    let mut model = ToyModel::new(config.clone())?;
    // Fresh biases are exactly zero, which puts dead units exactly on the rectifier kink.
    for store in [&mut model.generator, &mut model.discriminator] {
        for spec in store.specs.iter().filter(|s| s.is_bias) {
            for v in &mut store.values[spec.offset..spec.offset + spec.len()] {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let batch = [micro_sample(&mut rng, config.size)?, micro_sample(&mut rng, config.size)?];
    let refs: Vec<&SceneSample> = batch.iter().collect();
    let weights = LossWeights { w_adv: 0.5, adv_margin: 10.0, ..LossWeights::default() };

    let mut t = Tally::new("toynet_generator");
    let (_, g) = generator_objective(&model, &refs, &weights)?;
    let x = model.generator.values.clone();
    let mut probe = model.clone();
    let mut f = |x: &[f64]| {
        probe.generator.values.copy_from_slice(x);
        generator_objective(&probe, &refs, &weights).expect("finite").0.total
    };
    for i in 0..x.len() {
        t.add(rel_err(g[i], central_difference(&mut f, &x, i, STEP)), 1);
    }
    let gen = t.finish();

    let mut t = Tally::new("toynet_discriminator");
    let (_, g) = discriminator_objective(&model, &refs, &weights)?;
    let x = model.discriminator.values.clone();
    let mut probe = model.clone();
    let mut f = |x: &[f64]| {
        probe.discriminator.values.copy_from_slice(x);
        discriminator_objective(&probe, &refs, &weights).expect("finite").0
    };
    for i in 0..x.len() {
        t.add(rel_err(g[i], central_difference(&mut f, &x, i, STEP)), 1);
    }
    Ok(vec![gen, t.finish()])
}

/// Runs every check with `samples` instances per layer.
pub fn run_all(samples: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        check_shading(samples, seed),
        check_formation(samples, seed + 1),
        check_compositing(samples, seed + 2),
        check_resample(samples, seed + 3),
        check_normalize(samples, seed + 4),
    ];
    out.extend(check_losses(samples, seed + 5));
    out.push(check_solver_objective(samples.div_ceil(10), seed + 6)?);
    out.extend(check_network(seed + 7)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_exact_on_quartic() {
        let mut f = |x: &[f64]| x[0].powi(4);
        let d = central_difference(&mut f, &[0.7], 0, 1e-3);
        assert!((d - 4.0 * 0.7f64.powi(3)).abs() < 1e-9);
    }

    #[test]
    fn all_layers_within_tolerance() {
        for r in run_all(200, 11).unwrap() {
            println!("{} {} {:.2e} {:.2}s", r.layer, r.entries, r.max_rel_err, r.seconds);
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }
}
