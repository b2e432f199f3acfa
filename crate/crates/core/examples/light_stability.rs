//! Twenty scenes under one shared light, decomposed from normals perturbed by
//! ten degrees. Prints how much the recovered light shape varies across scenes
//! for a least-squares fit on the noisy normals and for the full solver.
//!
//! ```bash
//! cargo run --release -p nfed --example light_stability
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nfed::imaging::NormalField;
use nfed::shading::{estimate_light, ShCoeffs, SH_BANDS};
use nfed::solver::{default_weights, solve, SolverConfig};
use nfed::synth::{generate_scene, SynthConfig};

fn perturb(normals: &NormalField, degrees: f64, rng: &mut ChaCha8Rng) -> nfed::Result<NormalField> {
    let theta = degrees.to_radians();
    let vectors = normals
        .vectors()
        .iter()
        .map(|n| {
            let r: [f64; 3] = [0; 3].map(|_| rng.random_range(-1.0..1.0));
            let d = r[0] * n[0] + r[1] * n[1] + r[2] * n[2];
            let t = [0, 1, 2].map(|k| r[k] - d * n[k]);
            let len = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt().max(1e-12);
            let v = [0, 1, 2].map(|k| theta.cos() * n[k] + theta.sin() * t[k] / len);
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            v.map(|x| x / l)
        })
        .collect();
    NormalField::new(normals.width(), normals.height(), vectors)
}

fn shape(l: &ShCoeffs) -> Vec<f64> {
    (0..3).flat_map(|c| (1..SH_BANDS).map(move |j| l.channel(c)[j] / l.channel(c)[0])).collect()
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

fn main() -> nfed::Result<()> {
    let shared = generate_scene(32, 5000, &SynthConfig::default())?.gt_light;
    let synth = SynthConfig { fixed_light: Some(shared), ..SynthConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut fitted, mut solved) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let scene = generate_scene(32, 5100 + seed, &synth)?;
        let prior = perturb(&scene.gt_normals, 10.0, &mut rng)?;
        fitted.push(shape(&estimate_light(&scene.image, &prior, &scene.gt_mask)?));
        solved.push(shape(&solve(&scene.image, &prior, &scene.gt_mask, &SolverConfig::default(), &default_weights())?.light));
    }
    println!("least squares on noisy normals: mean std {:.4}", spread(&fitted));
    println!("solver:                         mean std {:.4}", spread(&solved));
    Ok(())
}
