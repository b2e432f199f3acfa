use nfed::losses::LossWeights;
use nfed::synth::{generate_scene, SceneSample, SynthConfig};
use nfed::toynet::layers::{max_pool2, unpool2, Tensor};
use nfed::toynet::{
    generator_objective, latent_swap, load_checkpoint, train, Factor, ToyConfig, ToyModel,
};
use proptest::prelude::*;

fn small() -> ToyConfig {
    ToyConfig { size: 16, ..ToyConfig::micro() }
}

fn scenes(n: usize, size: usize) -> Vec<SceneSample> {
    (0..n as u64).map(|s| generate_scene(size, 100 + s, &SynthConfig::default()).unwrap()).collect()
}

#[test]
fn default_output_shapes() {
    let model = ToyModel::new(ToyConfig::default()).unwrap();
    let s = &scenes(1, 32)[0];
    let out = model.forward(&s.image).unwrap();
    for f in [&out.recon, &out.albedo, &out.shading, &out.background] {
        assert_eq!(f.shape(), (32, 32, 3));
    }
    assert_eq!((out.mask.width(), out.mask.height()), (32, 32));
    assert_eq!(out.latents.light.len(), 27);
    assert_eq!(out.latents.shared.len(), 64);
    assert_eq!(out.latents.albedo.len(), 48);
}

#[test]
fn forward_is_deterministic() {
    let model = ToyModel::new(small()).unwrap();
    let s = &scenes(1, 16)[0];
    let (a, b) = (model.forward(&s.image).unwrap(), model.forward(&s.image).unwrap());
    assert_eq!(a.recon, b.recon);
    assert_eq!(a.latents, b.latents);
}

#[test]
fn perturbing_one_factor_leaves_the_others_bit_identical() {
    let model = ToyModel::new(small()).unwrap();
    let s = &scenes(1, 16)[0];
    let enc = model.encode(&s.image).unwrap();
    let base = model.decode(&enc.latents, &enc.switches).unwrap();

    let mut l = enc.latents.clone();
    l.light.iter_mut().for_each(|v| *v += 0.3);
    let lit = model.decode(&l, &enc.switches).unwrap();
    assert_eq!(lit.albedo, base.albedo);
    assert_eq!(lit.normals, base.normals);
    assert_eq!(lit.mask, base.mask);
    assert_eq!(lit.background, base.background);
    assert_ne!(lit.shading, base.shading);

    let mut l = enc.latents.clone();
    l.albedo.iter_mut().for_each(|v| *v -= 0.5);
    let alb = model.decode(&l, &enc.switches).unwrap();
    assert_eq!(alb.shading, base.shading);
    assert_ne!(alb.albedo, base.albedo);
}

#[test]
fn swap_with_itself_is_reconstruction() {
    let model = ToyModel::new(small()).unwrap();
    let s = &scenes(1, 16)[0];
    let recon = model.forward(&s.image).unwrap().recon;
    for f in ["light", "albedo", "normals", "background", "mask"] {
        assert_eq!(latent_swap(&model, &s.image, &s.image, f).unwrap(), recon);
    }
    assert!(latent_swap(&model, &s.image, &s.image, "hair").is_err());
}

#[test]
fn light_swap_keeps_albedo() {
    let model = ToyModel::new(small()).unwrap();
    let v = scenes(2, 16);
    let (ea, eb) = (model.encode(&v[0].image).unwrap(), model.encode(&v[1].image).unwrap());
    let mut l = ea.latents.clone();
    l.light = eb.latents.light.clone();
    let swapped = model.decode(&l, &ea.switches).unwrap();
    let plain = model.decode(&ea.latents, &ea.switches).unwrap();
    assert_eq!(swapped.albedo, plain.albedo);
    assert_eq!(model.latent_swap(&v[0].image, &v[1].image, Factor::Light).unwrap(), swapped.recon);
}

#[test]
fn zero_weights_give_zero_gradient() {
    let model = ToyModel::new(small()).unwrap();
    let v = scenes(2, 16);
    let refs: Vec<&SceneSample> = v.iter().collect();
    let (report, g) = generator_objective(&model, &refs, &LossWeights::zeroed()).unwrap();
    assert_eq!(report.total, 0.0);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn doubling_recon_weight_doubles_its_gradient() {
    let model = ToyModel::new(small()).unwrap();
    let v = scenes(2, 16);
    let refs: Vec<&SceneSample> = v.iter().collect();
    let one = LossWeights::recon_only();
    let two = LossWeights { w_recon: 2.0, ..one.clone() };
    let (_, g1) = generator_objective(&model, &refs, &one).unwrap();
    let (_, g2) = generator_objective(&model, &refs, &two).unwrap();
    let scale = g1.iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * scale);
    }
}

#[test]
fn one_epoch_writes_loadable_checkpoint_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut model = ToyModel::new(ToyConfig { epochs: 1, checkpoint_every: 1, ..small() }).unwrap();
    let v = scenes(8, 16);
    let summary = train(&mut model, &v[..6], &v[6..], &LossWeights::default(), Some(tmp.path())).unwrap();
    assert_eq!(summary.epochs.len(), 1);
    assert!(summary.epochs[0].val_mse.is_some());
    let back = load_checkpoint(tmp.path().join("model.nfed")).unwrap();
    let again = load_checkpoint(tmp.path().join("checkpoint_0001.nfed")).unwrap();
    assert_eq!(back.generator, again.generator);
    // Stored as 32-bit floats.
    for (a, b) in back.generator.values.iter().zip(&model.generator.values) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
    let log = std::fs::read_to_string(tmp.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"kind\":\"batch\"")).count(), 3);
    assert_eq!(log.lines().filter(|l| l.contains("\"kind\":\"epoch\"")).count(), 1);
}

#[test]
fn without_adversarial_weight_discriminator_is_frozen() {
    let mut model = ToyModel::new(ToyConfig { epochs: 2, ..small() }).unwrap();
    let before = model.discriminator.clone();
    let gen_before = model.generator.clone();
    let v = scenes(4, 16);
    let weights = LossWeights { w_adv: 0.0, ..LossWeights::default() };
    train(&mut model, &v, &[], &weights, None).unwrap();
    assert_eq!(model.discriminator, before);
    assert_ne!(model.generator, gen_before);
}

#[test]
fn training_is_deterministic() {
    let v = scenes(6, 16);
    let run = || {
        let tmp = tempfile::tempdir().unwrap();
        let mut model = ToyModel::new(ToyConfig { epochs: 2, ..small() }).unwrap();
        train(&mut model, &v[..4], &v[4..], &LossWeights::default(), Some(tmp.path())).unwrap();
        (std::fs::read_to_string(tmp.path().join("metrics.jsonl")).unwrap(), model.generator)
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_parameter_is_reported() {
    let mut model = ToyModel::new(ToyConfig { epochs: 1, ..small() }).unwrap();
    model.generator.values[0] = f64::NAN;
    let v = scenes(2, 16);
    let err = train(&mut model, &v, &[], &LossWeights::default(), None).unwrap_err();
    assert!(matches!(err, nfed::Error::NanParameter { .. }), "{err}");
}

#[test]
fn exploding_learning_rate_trips_divergence_guard() {
    let mut model = ToyModel::new(ToyConfig { epochs: 20, lr: 50.0, divergence_factor: 1.5, ..small() }).unwrap();
    let v = scenes(4, 16);
    let err = train(&mut model, &v, &[], &LossWeights::default(), None).unwrap_err();
    assert!(matches!(err, nfed::Error::Diverged { .. } | nfed::Error::NanTerm { .. } | nfed::Error::NanGradient { .. } | nfed::Error::NanParameter { .. }), "{err}");
}

#[test]
fn full_scale_preset_layout() {
    let c = ToyConfig::full_scale();
    assert_eq!((c.size, c.filters.clone(), c.z_shared, c.z_factor), (64, vec![32, 64, 64], 128, 128));
    let model = ToyModel::new(c).unwrap();
    let out = model.forward(&nfed::imaging::PixelField::filled(64, 64, 3, 0.5)).unwrap();
    assert_eq!(out.latents.light.len(), 27);
    assert_eq!(out.recon.shape(), (64, 64, 3));
}

proptest! {
    #[test]
    fn unpool_restores_maxima(data in prop::collection::vec(-10.0f64..10.0, 2 * 4 * 6)) {
        let x = Tensor::from_vec(2, 4, 6, data);
        let (p, sw) = max_pool2(&x);
        let u = unpool2(&p, &sw);
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..3 {
                    let k = sw[(c * 2 + oy) * 3 + ox] as usize;
                    let (ky, kx) = (k / 6, k % 6);
                    prop_assert!(ky / 2 == oy && kx / 2 == ox);
                    let window: Vec<f64> = (0..4).map(|i| x.data[c * 24 + (2 * oy + i / 2) * 6 + 2 * ox + i % 2]).collect();
                    let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert_eq!(p.data[(c * 2 + oy) * 3 + ox], max);
                    for i in 0..4 {
                        let idx = (2 * oy + i / 2) * 6 + 2 * ox + i % 2;
                        let v = u.data[c * 24 + idx];
                        prop_assert_eq!(v, if idx == k { max } else { 0.0 });
                    }
                }
            }
        }
    }
}
