//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nfed::edits::{edit_and_decode, transfer_lighting, AttributeSets, EditLayers, TraversalConfig, TraversalMode};
use nfed::formation::form_image;
use nfed::gradcheck;
use nfed::imaging::{MatteMask, NormalField, PixelField};
use nfed::losses::LossWeights;
use nfed::shading::{estimate_light, ShCoeffs, SH_BANDS};
use nfed::solver::{default_weights, masked_mae, solve, BwsMode, DecompResult, SolverConfig};
use nfed::synth::{assign_splits, generate_scene, masked_channel_means, sample_seeds, SceneSample, Split, SynthConfig};
use nfed::toynet::{light_swap_error, train, Factor, ToyConfig, ToyModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let results = gradcheck::run_all(1000, 0).expect("gradient checks run");
    let secs = start.elapsed().as_secs_f64();
    let (worst, layer) = results
        .iter()
        .map(|r| (r.max_rel_err, r.layer.clone()))
        .fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    outcome(
        worst < 1e-6 && secs < 60.0,
        format!("{} layers, worst rel err {worst:.2e} ({layer}), {secs:.1}s", results.len()),
    )
}

fn flattened(scene: &SceneSample, image: &PixelField) -> PixelField {
    image.zip_map(&scene.gt_albedo, |i, a| i / a).unwrap()
}

fn light_recovery() -> Outcome {
    let start = Instant::now();
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut clean, mut noisy) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let scene = generate_scene(64, 200 + seed, &SynthConfig::default()).unwrap();
        let fg = form_image(&scene.gt_albedo, &scene.gt_shading).unwrap();
        let est = estimate_light(&flattened(&scene, &fg), &scene.gt_normals, &scene.gt_mask).unwrap();
        clean = clean.max(est.relative_error(&scene.gt_light));
        let mut dirty = fg.clone();
        dirty.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let est = estimate_light(&flattened(&scene, &dirty), &scene.gt_normals, &scene.gt_mask).unwrap();
        noisy = noisy.max(est.relative_error(&scene.gt_light));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        clean < 1e-8 && noisy < 5e-2 && secs < 5.0,
        format!("max rel err {clean:.1e} noiseless, {noisy:.2e} with 1% noise, {secs:.2}s"),
    )
}

/// Scales each shading channel of a ground-truth pair to the white mean.
fn whiten_truth(scene: &SceneSample) -> (PixelField, PixelField) {
    let means = masked_channel_means(&scene.gt_shading, &scene.gt_mask);
    let f = means.map(|m| 0.75 / m);
    let mut shading = scene.gt_shading.clone();
    let mut albedo = scene.gt_albedo.clone();
    for (i, (s, a)) in shading.data_mut().iter_mut().zip(albedo.data_mut()).enumerate() {
        *s *= f[i % 3];
        *a /= f[i % 3];
    }
    (albedo, shading)
}

struct Decomposed {
    scene: SceneSample,
    result: DecompResult,
}

fn decompose_scenes() -> (Vec<Decomposed>, Vec<(f64, f64)>, f64) {
    let config = SolverConfig { bws_mode: BwsMode::Penalty, ..SolverConfig::default() };
    let weights = default_weights();
    let mut out = Vec::new();
    let mut invariant_notes = Vec::new();
    let mut slowest = 0.0f64;
    for seed in 0..10 {
        let scene = generate_scene(64, 1000 + seed, &SynthConfig::default()).unwrap();
        let start = Instant::now();
        let mut result = solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &config, &weights).unwrap();
        let before = form_image(&result.albedo, &result.shading).unwrap();
        result.rescale_white(0.75).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let after = form_image(&result.albedo, &result.shading).unwrap();
        let means = masked_channel_means(&result.shading, &result.mask);
        let mean_err = means.iter().map(|m| (m - 0.75).abs()).fold(0.0, f64::max);
        invariant_notes.push((mean_err, before.max_abs_diff(&after)));
        out.push(Decomposed { scene, result });
    }
    (out, invariant_notes, slowest)
}

fn decomposition(items: &[Decomposed], slowest: f64) -> Outcome {
    let (mut mse, mut albedo, mut shading, mut iters) = (0.0f64, 0.0f64, 0.0f64, 0);
    for d in items {
        let (a, s) = whiten_truth(&d.scene);
        mse = mse.max(d.result.masked_mse(&d.scene.image).unwrap());
        albedo = albedo.max(masked_mae(&d.result.albedo, &a, &d.scene.gt_mask).unwrap());
        shading = shading.max(masked_mae(&d.result.shading, &s, &d.scene.gt_mask).unwrap());
        iters = iters.max(d.result.iterations);
    }
    outcome(
        mse < 1e-4 && albedo < 0.05 && shading < 0.05 && iters <= 2000 && slowest < 120.0,
        format!(
            "max recon MSE {mse:.2e}, albedo MAE {albedo:.4}, shading MAE {shading:.4}, {iters} iters, slowest {slowest:.1}s"
        ),
    )
}

fn bws_invariant(notes: &[(f64, f64)]) -> Outcome {
    let mean_err = notes.iter().map(|n| n.0).fold(0.0, f64::max);
    let product = notes.iter().map(|n| n.1).fold(0.0, f64::max);
    outcome(
        mean_err <= 1e-9 && product <= 1e-12,
        format!("mean shading off by {mean_err:.1e}, product changed by {product:.1e}"),
    )
}

fn transfer(items: &[Decomposed]) -> Outcome {
    let epsilon = SolverConfig::default().epsilon;
    let (mut identity, mut cross) = (0.0f64, 0.0f64);
    for (k, d) in items.iter().enumerate() {
        let layers = EditLayers::from_solver(&d.scene.image, &d.result).unwrap();
        let same = transfer_lighting(&layers, &d.result.light, epsilon).unwrap();
        for (i, (o, t)) in same.output.data().iter().zip(d.scene.image.data()).enumerate() {
            if d.result.mask.alpha()[i / 3] > 0.0 && d.result.shading.data()[i] > 1e-3 {
                identity = identity.max((o - t).abs());
            }
        }
        let source = &items[(k + 1) % items.len()].scene;
        let moved = transfer_lighting(&layers, &source.gt_light, epsilon).unwrap();
        let oracle = d.scene.render_with_light(&source.gt_light).unwrap();
        cross = cross.max(nfed::solver::masked_mse(&moved.output, &oracle, &d.scene.gt_mask).unwrap());
    }
    outcome(
        identity <= 1e-6 && cross < 1e-3,
        format!("identity max diff {identity:.1e}, cross-light max masked MSE {cross:.2e}"),
    )
}

fn toy_data() -> (Vec<SceneSample>, Vec<SceneSample>) {
    let config = ToyConfig::default();
    let seeds = sample_seeds(512, 7);
    let (mut train_set, mut val_set) = (Vec::new(), Vec::new());
    for (seed, split) in seeds.iter().zip(assign_splits(&seeds)) {
        let s = generate_scene(config.size, *seed, &SynthConfig::default()).unwrap();
        match split {
            Split::Train => train_set.push(s),
            Split::Val => val_set.push(s),
        }
    }
    (train_set, val_set)
}

fn toy_training(model: &mut ToyModel, val_set: &[SceneSample], train_set: &[SceneSample]) -> Outcome {
    let start = Instant::now();
    let summary = train(model, train_set, val_set, &LossWeights::default(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let val = summary.epochs.last().and_then(|e| e.val_mse).unwrap_or(f64::INFINITY);
    let pairs = val_set.len() / 2;
    let swap = (0..pairs)
        .map(|k| light_swap_error(model, &val_set[2 * k], &val_set[2 * k + 1]).unwrap())
        .sum::<f64>()
        / pairs as f64;

    let enc = model.encode(&val_set[0].image).unwrap();
    let base = model.decode(&enc.latents, &enc.switches).unwrap();
    let mut latents = enc.latents.clone();
    latents.light.iter_mut().enumerate().for_each(|(i, v)| *v += 0.1 * (i as f64 - 13.0));
    let moved = model.decode(&latents, &enc.switches).unwrap();
    let separated = moved.albedo == base.albedo && moved.shading != base.shading;

    outcome(
        val <= 0.01 && swap <= 0.02 && separated,
        format!(
            "{} epochs in {secs:.0}s, val MSE {val:.4}, light-swap masked MSE {swap:.4} over {pairs} pairs, albedo fixed under Z_L change: {separated}",
            summary.epochs.len()
        ),
    )
}

fn noisy_normals(normals: &NormalField, degrees: f64, rng: &mut ChaCha8Rng) -> NormalField {
    let theta = degrees.to_radians();
    let vectors = normals
        .vectors()
        .iter()
        .map(|n| {
            let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let d = r[0] * n[0] + r[1] * n[1] + r[2] * n[2];
            let mut t = [r[0] - d * n[0], r[1] - d * n[1], r[2] - d * n[2]];
            let len = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt().max(1e-12);
            t.iter_mut().for_each(|v| *v /= len);
            let v = [0, 1, 2].map(|k| theta.cos() * n[k] + theta.sin() * t[k]);
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            v.map(|x| x / l)
        })
        .collect();
    NormalField::new(normals.width(), normals.height(), vectors).unwrap()
}

/// Directional coefficients relative to each channel's ambient term.
fn light_shape(l: &ShCoeffs) -> Vec<f64> {
    (0..3)
        .flat_map(|c| {
            let ch = l.channel(c);
            (1..SH_BANDS).map(move |j| ch[j] / ch[0])
        })
        .collect()
}

fn spread(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let dims = rows[0].len();
    (0..dims)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .sum::<f64>()
        / dims as f64
}

fn stability() -> Outcome {
    let shared = generate_scene(32, 5000, &SynthConfig::default()).unwrap().gt_light;
    let synth = SynthConfig { fixed_light: Some(shared), ..SynthConfig::default() };
    let config = SolverConfig::default();
    let weights = default_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut solved, mut priors) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let scene = generate_scene(32, 5100 + seed, &synth).unwrap();
        let prior = noisy_normals(&scene.gt_normals, 10.0, &mut rng);
        priors.push(light_shape(&estimate_light(&scene.image, &prior, &scene.gt_mask).unwrap()));
        let result = solve(&scene.image, &prior, &scene.gt_mask, &config, &weights).unwrap();
        solved.push(light_shape(&result.light));
    }
    let (s, p) = (spread(&solved), spread(&priors));
    outcome(s <= 0.5 * p, format!("mean coefficient std {s:.4} solver vs {p:.4} from noisy priors (ratio {:.2})", s / p))
}

fn masked_mean(field: &PixelField, mask: &MatteMask) -> f64 {
    masked_channel_means(field, mask).iter().sum::<f64>() / 3.0
}

fn traversal(model: &ToyModel) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let size = model.config.size;
    let mut codes = |scale: f64, base: u64| -> Vec<Vec<f64>> {
        (0..12)
            .map(|k| {
                let light = generate_scene(size, base + k, &SynthConfig::default()).unwrap().gt_light;
                let synth = SynthConfig { fixed_light: Some(light.scale(scale)), ..SynthConfig::default() };
                let scene = generate_scene(size, base + 100 + rng.random_range(0..1000), &synth).unwrap();
                model.encode(&scene.image).unwrap().latents.light
            })
            .collect()
    };
    let bright = codes(1.25, 7000);
    let dim = codes(0.6, 8000);
    let sets = AttributeSets::new(bright, dim, Factor::Light).unwrap();
    let targets: Vec<SceneSample> =
        (0..8).map(|k| generate_scene(size, 9000 + k, &SynthConfig::default()).unwrap()).collect();

    let mut lines = Vec::new();
    let mut pass = true;
    for mode in [TraversalMode::MeanShiftLinear, TraversalMode::KernelWeighted] {
        let mut strengths = Vec::new();
        for lambda in [0.07, 0.05, 0.03] {
            let config = TraversalConfig { lambda, mode, ..TraversalConfig::default() };
            let mut change = 0.0;
            for t in &targets {
                let plain = model.forward(&t.image).unwrap();
                let edited = edit_and_decode(model, &t.image, &[&sets], &config).unwrap();
                change += masked_mean(&edited.shading, &t.gt_mask) - masked_mean(&plain.shading, &t.gt_mask);
            }
            strengths.push(change / targets.len() as f64);
        }
        let ok = strengths[0] > 0.0 && strengths[0] < strengths[1] && strengths[1] < strengths[2];
        pass &= ok;
        lines.push(format!("{mode:?} shading gain {:.4} < {:.4} < {:.4}", strengths[0], strengths[1], strengths[2]));
    }
    outcome(pass, lines.join(", "))
}

/// Runs every criterion, or only those whose numbers are given as arguments.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    // Skip when the harness only lists tests.
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let picked: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| picked.is_empty() || picked.contains(&n);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    if run(1) {
        report(1, gradients());
    }
    if run(2) {
        report(2, light_recovery());
    }
    if run(3) || run(4) || run(5) {
        let (items, notes, slowest) = decompose_scenes();
        report(3, decomposition(&items, slowest));
        report(4, bws_invariant(&notes));
        report(5, transfer(&items));
    }
    if run(6) || run(8) {
        let (train_set, val_set) = toy_data();
        let mut model = ToyModel::new(ToyConfig::default()).unwrap();
        report(6, toy_training(&mut model, &val_set, &train_set));
        report(8, traversal(&model));
    }
    if run(7) {
        report(7, stability());
    }

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
