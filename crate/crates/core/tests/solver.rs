use nfed::solver::{default_weights, init_state, solve, solve_from, BwsMode, SolverConfig};
use nfed::synth::{generate_scene, masked_channel_means, SynthConfig};

fn short() -> SolverConfig {
    SolverConfig { iters: 120, tied_iters: 60, ..SolverConfig::default() }
}

#[test]
fn normals_stay_unit_and_result_is_deterministic() {
    let scene = generate_scene(20, 31, &SynthConfig::default()).unwrap();
    let run = || solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &short(), &default_weights()).unwrap();
    let (a, b) = (run(), run());
    for n in a.normals.vectors() {
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        assert!((len - 1.0).abs() < 1e-12);
    }
    assert_eq!(a.albedo, b.albedo);
    assert_eq!(a.shading, b.shading);
    assert_eq!(a.light, b.light);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn objective_never_increases_past_start() {
    let scene = generate_scene(20, 32, &SynthConfig::default()).unwrap();
    let r = solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &short(), &default_weights()).unwrap();
    assert!(r.trace.last().unwrap().total <= r.trace[0].total);
}

#[test]
fn exact_rescale_moves_scale_between_layers() {
    let scene = generate_scene(20, 33, &SynthConfig::default()).unwrap();
    let config = SolverConfig { bws_mode: BwsMode::Penalty, ..short() };
    let mut r = solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &config, &default_weights()).unwrap();
    let before = r.reconstruction().unwrap();
    let factors = r.rescale_white(0.75).unwrap();
    assert!(factors.iter().all(|f| *f > 0.0));
    let means = masked_channel_means(&r.shading, &r.mask);
    assert!(means.iter().all(|m| (m - 0.75).abs() <= 1e-9));
    assert!(r.reconstruction().unwrap().max_abs_diff(&before) <= 1e-12);
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let scene = generate_scene(16, 34, &SynthConfig::default()).unwrap();
    let state = init_state(&scene.image, &scene.gt_normals, &scene.gt_mask, &short(), &default_weights()).unwrap();
    // Move off the initialization so every term is active.
    let r = solve_from(state.clone()).unwrap();
    let mut state = state;
    state.albedo = r.albedo.clone();
    state.light = *r.light.as_array();
    let (_, grad) = state.objective().unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in (0..state.albedo.data().len()).step_by(37) {
        let keep = state.albedo.data()[i];
        state.albedo.data_mut()[i] = keep + h;
        let up = state.objective().unwrap().0.total;
        state.albedo.data_mut()[i] = keep - h;
        let down = state.objective().unwrap().0.total;
        state.albedo.data_mut()[i] = keep;
        let n = (up - down) / (2.0 * h);
        let a = grad.albedo[i];
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3));
    }
    for p in (0..state.raw_normals.len()).step_by(23) {
        for k in 0..3 {
            let keep = state.raw_normals[p][k];
            state.raw_normals[p][k] = keep + h;
            let up = state.objective().unwrap().0.total;
            state.raw_normals[p][k] = keep - h;
            let down = state.objective().unwrap().0.total;
            state.raw_normals[p][k] = keep;
            let n = (up - down) / (2.0 * h);
            let a = grad.raw_normals[p][k];
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3));
        }
    }
    for j in 0..27 {
        let keep = state.light[j];
        state.light[j] = keep + h;
        let up = state.objective().unwrap().0.total;
        state.light[j] = keep - h;
        let down = state.objective().unwrap().0.total;
        state.light[j] = keep;
        let n = (up - down) / (2.0 * h);
        let a = grad.light[j];
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3));
    }
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn invalid_config_is_rejected() {
    let scene = generate_scene(16, 35, &SynthConfig::default()).unwrap();
    let bad = SolverConfig { lr_albedo: 0.0, ..short() };
    let err = solve(&scene.image, &scene.gt_normals, &scene.gt_mask, &bad, &default_weights()).unwrap_err();
    assert!(err.is_validation());
}
