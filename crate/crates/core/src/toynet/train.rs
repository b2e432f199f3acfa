//! Objective assembly, gradients and the training loop.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{save_checkpoint, ForwardCache, OutputGrads, ToyModel};
use crate::error::{Error, Result};
use crate::imaging::PixelField;
use crate::losses::{
    albedo_smoothness, bws_gradient, bws_means, l2_raw, light_loss, recon_energy, shading_smoothness,
    total_objective, LossPart, LossReport, LossWeights, Term,
};
use crate::optim::{Adam, AdamParams};
use crate::solver::masked_mse;
use crate::synth::{SceneSample, Symmetry};

/// Per-sample contribution to a batch objective.
struct SampleTerms {
    parts: Vec<LossPart>,
    gen_grads: Vec<f64>,
    disc_grads: Option<Vec<f64>>,
    d_loss: f64,
}

/// Gradients of one batch.
pub(crate) struct BatchGradients {
    pub report: LossReport,
    pub gen: Vec<f64>,
    pub disc: Option<Vec<f64>>,
    pub d_loss: f64,
    pub degenerate_normals: usize,
}

fn flatten(v: &[[f64; 3]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

#[allow(clippy::too_many_arguments)]
fn sample_terms(
    model: &ToyModel,
    cache: &ForwardCache,
    sample: &SceneSample,
    weights: &LossWeights,
    bws_shading_grad: Option<&[f64]>,
    scale: f64,
    adversarial: bool,
    disc_grads: bool,
) -> Result<SampleTerms> {
    let dc = &cache.decode;
    let s = model.config.size;
    let px = s * s;
    let implicit = model.config.implicit;
    let mut up = OutputGrads::zeros(px, implicit);
    let mut parts = Vec::new();
    let ones = vec![1.0; px];
    let alpha = sample.gt_mask.alpha();
    let mass = sample.gt_mask.mass();
    let w = weights;

    let mut add = |term: Term, value: f64, raw: Option<f64>, target: &mut [f64], grad: &[f64]| {
        parts.push(LossPart { term, value: value * scale, raw_sum: raw.map(|r| r * scale) });
        let k = w.weight(term) * scale;
        if k != 0.0 {
            for (t, g) in target.iter_mut().zip(grad) {
                *t += k * g;
            }
        }
    };

    let (v, raw, g) = l2_raw(&dc.recon, sample.image.data(), 3, &ones, px as f64);
    add(Term::Recon, v, Some(raw), &mut up.recon, &g);

    let (v, raw, g) = l2_raw(&flatten(&dc.normals), &flatten(sample.gt_normals.vectors()), 3, alpha, mass);
    add(Term::Normal, v, Some(raw), &mut up.normals, &g);

    let (v, g) = light_loss(&dc.light, &sample.gt_light);
    add(Term::Light, v, None, &mut up.light, &g);

    let (v, raw, g) = l2_raw(&dc.matte, alpha, 1, &ones, px as f64);
    add(Term::Mask, v, Some(raw), &mut up.matte, &g);

    let albedo = PixelField::from_raw(s, s, 3, dc.albedo.clone());
    let smooth = albedo_smoothness(&albedo, Some(&sample.gt_mask), w.charbonnier_delta)?;
    add(Term::AlbedoSmooth, smooth.value, Some(smooth.raw_sum), &mut up.albedo, smooth.gradient.data());

    let shading = PixelField::from_raw(s, s, 3, dc.shading.clone());
    let smooth = shading_smoothness(&shading, Some(&sample.gt_mask))?;
    add(Term::ShadingSmooth, smooth.value, Some(smooth.raw_sum), &mut up.shading, smooth.gradient.data());

    if let (Some(uv), Some(target)) = (&dc.uv, up.uv.as_mut()) {
        let (v, raw, g) = l2_raw(uv, sample.gt_uv.data(), 2, alpha, mass);
        add(Term::Uv, v, Some(raw), target, &g);
    }
    if let (Some((ni, _)), Some(target)) = (&dc.ni, up.ni.as_mut()) {
        let (v, raw, g) = l2_raw(&flatten(ni), &flatten(sample.gt_face_normals.vectors()), 3, &ones, px as f64);
        add(Term::ImplicitNormal, v, Some(raw), target, &g);
    }

    if let Some(g) = bws_shading_grad {
        for (t, v) in up.shading.iter_mut().zip(g) {
            *t += w.w_bws * v;
        }
    }

    let mut d_loss = 0.0;
    let mut disc = None;
    if adversarial {
        let nd = model.discriminator.len();
        let (fake_recon, fake_cache) = model.disc_forward(&dc.recon);
        let (d_fake, g_recon, g_x) = recon_energy(&fake_recon, &dc.recon);
        let mut fake_param_grads = vec![0.0; nd];
        let dx = model.disc_backward(&fake_cache, &g_recon, &mut fake_param_grads);
        let k = w.w_adv * scale;
        parts.push(LossPart::new(Term::Adversarial, d_fake * scale));
        for ((t, a), b) in up.recon.iter_mut().zip(&dx).zip(&g_x) {
            *t += k * (a + b);
        }
        if disc_grads {
            let (real_recon, real_cache) = model.disc_forward(sample.image.data());
            let (d_real, g_real, _) = recon_energy(&real_recon, sample.image.data());
            let mut grads = vec![0.0; nd];
            model.disc_backward(&real_cache, &g_real, &mut grads);
            let hinge = w.adv_margin - d_fake;
            if hinge > 0.0 {
                for (a, b) in grads.iter_mut().zip(&fake_param_grads) {
                    *a -= b;
                }
            }
            for g in grads.iter_mut() {
                *g *= scale;
            }
            d_loss = (d_real + hinge.max(0.0)) * scale;
            disc = Some(grads);
        }
    }

    let mut gen_grads = vec![0.0; model.generator.len()];
    model.backward(cache, &up, &mut gen_grads);
    Ok(SampleTerms { parts, gen_grads, disc_grads: disc, d_loss })
}

pub(crate) fn batch_gradients(
    model: &ToyModel,
    samples: &[&SceneSample],
    weights: &LossWeights,
    disc_grads: bool,
) -> Result<BatchGradients> {
    if samples.is_empty() {
        return Err(Error::EmptySet("training batch"));
    }
    let caches: Vec<ForwardCache> = samples
        .par_iter()
        .map(|s| model.forward_cached(&s.image))
        .collect::<Result<_>>()?;
    let (means, mass) = bws_means(
        caches.iter().map(|c| c.decode.shading.as_slice()),
        samples.iter().map(|s| s.gt_mask.alpha()),
    );
    if !(mass > 0.0) {
        return Err(Error::EmptyMask("training batch"));
    }
    let bws: f64 = means.iter().map(|m| (m - weights.bws_target).powi(2)).sum();
    let scale = 1.0 / samples.len() as f64;
    let adversarial = weights.w_adv > 0.0;
    let terms: Vec<SampleTerms> = samples
        .par_iter()
        .zip(caches.par_iter())
        .map(|(s, c)| {
            let g = bws_gradient(s.gt_mask.alpha(), &means, mass, weights.bws_target);
            sample_terms(model, c, s, weights, Some(&g), scale, adversarial, disc_grads)
        })
        .collect::<Result<_>>()?;

    let mut parts = vec![LossPart::new(Term::Bws, bws)];
    let mut gen = vec![0.0; model.generator.len()];
    let mut disc = (adversarial && disc_grads).then(|| vec![0.0; model.discriminator.len()]);
    let mut d_loss = 0.0;
    for t in terms {
        parts.extend(t.parts);
        for (a, b) in gen.iter_mut().zip(&t.gen_grads) {
            *a += b;
        }
        if let (Some(acc), Some(g)) = (disc.as_mut(), &t.disc_grads) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        d_loss += t.d_loss;
    }
    let report = total_objective(&parts, weights)?;
    let degenerate_normals = caches.iter().map(|c| c.decode.degenerate_count()).sum();
    Ok(BatchGradients { report, gen, disc, d_loss, degenerate_normals })
}

/// Generator objective on a batch (discriminator held fixed) and its gradient
/// with respect to every generator parameter.
pub fn generator_objective(model: &ToyModel, samples: &[&SceneSample], weights: &LossWeights) -> Result<(LossReport, Vec<f64>)> {
    let b = batch_gradients(model, samples, weights, false)?;
    Ok((b.report, b.gen))
}

/// Discriminator loss `mean(D(real) + max(0, m − D(fake)))` on a batch and its
/// gradient with respect to every discriminator parameter.
pub fn discriminator_objective(model: &ToyModel, samples: &[&SceneSample], weights: &LossWeights) -> Result<(f64, Vec<f64>)> {
    let forced = LossWeights { w_adv: weights.w_adv.max(f64::MIN_POSITIVE), ..weights.clone() };
    let b = batch_gradients(model, samples, &forced, true)?;
    Ok((b.d_loss, b.disc.expect("adversarial path enabled")))
}

/// Mean per-element squared reconstruction error over whole images.
pub fn validation_mse(model: &ToyModel, samples: &[SceneSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySet("validation set"));
    }
    let errs: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let out = model.forward(&s.image)?;
            let n = out.recon.data().len() as f64;
            Ok(out.recon.data().iter().zip(s.image.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Masked MSE between `a` decoded under `b`'s light code and the ground-truth
/// re-render of `a` under `b`'s light.
pub fn light_swap_error(model: &ToyModel, a: &SceneSample, b: &SceneSample) -> Result<f64> {
    let swapped = model.latent_swap(&a.image, &b.image, super::Factor::Light)?;
    let oracle = a.render_with_light(&b.gt_light)?;
    masked_mse(&swapped, &oracle, &a.gt_mask)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean generator objective over the epoch's batches.
    pub train_total: f64,
    pub d_loss: f64,
    pub val_mse: Option<f64>,
    pub degenerate_normals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub initial_total: Option<f64>,
    pub batches: usize,
    pub epochs: Vec<EpochMetrics>,
}

#[derive(Serialize)]
struct BatchLine<'a> {
    kind: &'static str,
    epoch: usize,
    batch: usize,
    report: &'a LossReport,
    d_loss: f64,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    kind: &'static str,
    #[serde(flatten)]
    metrics: &'a EpochMetrics,
}

fn check_finite(store: &super::net::ParamStore, grads: &[f64]) -> Result<()> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NanGradient { layer: store.spec_at(i).name.clone() });
    }
    Ok(())
}

fn check_params(store: &super::net::ParamStore) -> Result<()> {
    if let Some(i) = store.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NanParameter { layer: store.spec_at(i).name.clone() });
    }
    Ok(())
}

/// Cosine interpolation from `lr` at the first epoch to `lr_final` at the last.
pub fn epoch_lr(config: &super::ToyConfig, epoch: usize) -> f64 {
    match config.lr_final {
        Some(last) if config.epochs > 1 => {
            let t = (epoch - 1) as f64 / (config.epochs - 1) as f64;
            last + 0.5 * (config.lr - last) * (1.0 + (std::f64::consts::PI * t).cos())
        }
        _ => config.lr,
    }
}

/// Trains generator and discriminator with Adam, alternating per batch.
///
/// With `out_dir`, writes `metrics.jsonl`, periodic `checkpoint_XXXX.nfed` files
/// and the final `model.nfed`.
pub fn train(
    model: &mut ToyModel,
    train_set: &[SceneSample],
    val_set: &[SceneSample],
    weights: &LossWeights,
    out_dir: Option<&Path>,
) -> Result<TrainSummary> {
    model.config.validate()?;
    weights.validate()?;
    let config = model.config.clone();
    check_params(&model.generator)?;
    check_params(&model.discriminator)?;
    if train_set.is_empty() && config.epochs > 0 {
        return Err(Error::EmptySet("training set"));
    }
    let mut log = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("metrics.jsonl");
            Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
        }
        None => None,
    };
    let mut write_line = |line: String| -> Result<()> {
        if let (Some(w), Some(dir)) = (log.as_mut(), out_dir) {
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| Error::io(dir.join("metrics.jsonl"), e))?;
        }
        Ok(())
    };

    let mut gen_adam = Adam::new(model.generator.len(), AdamParams::with_lr(config.lr));
    let mut disc_adam = Adam::new(model.discriminator.len(), AdamParams::with_lr(config.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut summary = TrainSummary { initial_total: None, batches: 0, epochs: Vec::new() };

    for epoch in 1..=config.epochs {
        let lr = epoch_lr(&config, epoch);
        gen_adam.params.lr = lr;
        disc_adam.params.lr = lr;
        order.shuffle(&mut rng);
        let (mut total_sum, mut d_sum, mut degenerate, mut count) = (0.0, 0.0, 0, 0);
        for (bi, chunk) in order.chunks(config.batch).enumerate() {
            let moved: Vec<SceneSample> = if config.augment {
                chunk
                    .iter()
                    .map(|&i| train_set[i].transformed(Symmetry::from_index(rng.random_range(0..8))))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let batch: Vec<&SceneSample> =
                if config.augment { moved.iter().collect() } else { chunk.iter().map(|&i| &train_set[i]).collect() };
            let g = batch_gradients(model, &batch, weights, true)?;
            let total = g.report.total;
            let initial = *summary.initial_total.get_or_insert(total);
            if !total.is_finite() || total > config.divergence_factor * initial {
                return Err(Error::Diverged { epoch, loss: total, initial });
            }
            check_finite(&model.generator, &g.gen)?;
            gen_adam.step(&mut model.generator.values, &g.gen);
            check_params(&model.generator)?;
            if let Some(dg) = &g.disc {
                check_finite(&model.discriminator, dg)?;
                disc_adam.step(&mut model.discriminator.values, dg);
                check_params(&model.discriminator)?;
            }
            write_line(serde_json::to_string(&BatchLine {
                kind: "batch",
                epoch,
                batch: bi,
                report: &g.report,
                d_loss: g.d_loss,
            })?)?;
            total_sum += total;
            d_sum += g.d_loss;
            degenerate += g.degenerate_normals;
            count += 1;
            summary.batches += 1;
        }
        let val_mse = if val_set.is_empty() { None } else { Some(validation_mse(model, val_set)?) };
        let metrics = EpochMetrics {
            epoch,
            train_total: total_sum / count.max(1) as f64,
            d_loss: d_sum / count.max(1) as f64,
            val_mse,
            degenerate_normals: degenerate,
        };
        write_line(serde_json::to_string(&EpochLine { kind: "epoch", metrics: &metrics })?)?;
        summary.epochs.push(metrics);
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                save_checkpoint(model, dir.join(format!("checkpoint_{epoch:04}.nfed")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        save_checkpoint(model, dir.join("model.nfed"))?;
    }
    Ok(summary)
}
