use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nfed::imaging::load_float_map;
use nfed::toynet::{load_checkpoint, ToyConfig, ToyModel};

fn nfed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfed"))
        .args(args)
        .env("NFED_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, size: usize) -> Output {
    nfed(&["synth", "--count", &count.to_string(), "--size", &size.to_string(), "--seed", "7", "--out", p(dir)])
}

#[test]
fn synth_writes_samples_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = synth(&a, 8, 32);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(synth(&b, 8, 32).status.success());
    let dirs = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 8);
    assert!(a.join("resolved_config.json").exists());
    let hash = |o: &Output| stdout(o).lines().find(|l| l.starts_with("sha256")).unwrap().to_string();
    assert_eq!(hash(&out), hash(&synth(&b, 8, 32)));
}

#[test]
fn synth_zero_count_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(tmp.path(), 0, 32)), 2);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"solver": {"iters": 10, "bogus": 1}}"#).unwrap();
    let out = nfed(&["--config", p(&cfg), "synth", "--count", "1", "--out", p(&tmp.path().join("d"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn decompose_relight_transfer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(synth(&data, 2, 32).status.success());
    let s = data.join("sample_00000");
    let d = tmp.path().join("decomp");

    let missing = nfed(&["decompose", "--image", p(&s.join("image.png")), "--mask", p(&s.join("mask.png")), "--out", p(&d)]);
    assert_eq!(code(&missing), 2);

    let out = nfed(&[
        "decompose",
        "--image",
        p(&s.join("image.png")),
        "--normals",
        p(&s.join("normals.pfm")),
        "--mask",
        p(&s.join("mask.png")),
        "--out",
        p(&d),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mse: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("masked reconstruction MSE "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(mse < 1e-4, "mse {mse}");
    let light: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("light.json")).unwrap()).unwrap();
    assert_eq!(light["coeffs"].as_array().unwrap().len(), 27);
    assert!(d.join("resolved_config.json").exists());

    // Identity transfer reproduces the input on the mask.
    let t = tmp.path().join("transfer");
    let out = nfed(&[
        "transfer",
        "--decomp",
        p(&d),
        "--image",
        p(&s.join("image.png")),
        "--light",
        p(&d.join("light.json")),
        "--out",
        p(&t),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = load_float_map(t.join("transfer.pfm")).unwrap();
    let image = nfed::imaging::load_image(s.join("image.png"), false).unwrap();
    let shading = load_float_map(d.join("shading.pfm")).unwrap();
    let mask = nfed::imaging::load_mask(s.join("mask.png")).unwrap();
    for i in 0..image.data().len() {
        if mask.alpha()[i / 3] > 0.0 && shading.data()[i] > 1e-3 {
            // PFM stores 32-bit floats.
            assert!((result.data()[i] - image.data()[i]).abs() <= 1e-6, "pixel {i}");
        }
    }
    assert!(t.join("s_transfer.pfm").exists());

    // Relighting is deterministic.
    let other = data.join("sample_00001").join("light.json");
    let r1 = tmp.path().join("r1.png");
    let r2 = tmp.path().join("r2.png");
    for r in [&r1, &r2] {
        let out = nfed(&["relight", "--decomp", p(&d), "--image", p(&s.join("image.png")), "--light", p(&other), "--out", p(r)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());

    // A light file with 26 coefficients is rejected as invalid input.
    let bad = tmp.path().join("bad.json");
    let mut v = light.clone();
    v["coeffs"].as_array_mut().unwrap().pop();
    fs::write(&bad, v.to_string()).unwrap();
    let out = nfed(&["relight", "--decomp", p(&d), "--image", p(&s.join("image.png")), "--light", p(&bad), "--out", p(&r1)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn estimate_light_prints_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(synth(tmp.path(), 1, 16).status.success());
    let s = tmp.path().join("sample_00000");
    let out = nfed(&[
        "estimate-light",
        "--image",
        p(&s.join("image.png")),
        "--normals",
        p(&s.join("normals.pfm")),
        "--mask",
        p(&s.join("mask.png")),
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 27);
}

fn micro_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.json");
    let toy = ToyConfig { size: 16, ..ToyConfig::micro() };
    let doc = serde_json::json!({ "toynet": toy, "synth": { "size": 16 } });
    fs::write(&cfg, doc.to_string()).unwrap();
    cfg
}

#[test]
fn train_zero_epochs_then_reconstruct_and_swap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = micro_config(tmp.path());
    let data = tmp.path().join("data");
    let out = nfed(&["--config", p(&cfg), "synth", "--count", "4", "--out", p(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let run = tmp.path().join("run0");
    let out = nfed(&["--config", p(&cfg), "train", "--data", p(&data), "--out", p(&run), "--epochs", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = load_checkpoint(run.join("model.nfed")).unwrap();
    let fresh = ToyModel::new(loaded.config.clone()).unwrap();
    assert_eq!(loaded.generator, fresh.generator);
    assert_eq!(loaded.discriminator, fresh.discriminator);

    let run1 = tmp.path().join("run1");
    let out = nfed(&["--config", p(&cfg), "train", "--data", p(&data), "--out", p(&run1), "--epochs", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(run1.join("metrics.jsonl")).unwrap().contains("\"kind\":\"epoch\""));
    let model = run1.join("model.nfed");

    let img = data.join("sample_00000").join("image.png");
    let rec = tmp.path().join("rec");
    assert_eq!(code(&nfed(&["reconstruct", "--model", p(&model), "--image", p(&img), "--out", p(&rec)])), 0);
    assert!(rec.join("latents.json").exists());
    let swap = tmp.path().join("swap.png");
    let out = nfed(&["swap", "--model", p(&model), "--a", p(&img), "--b", p(&img), "--factor", "light", "--out", p(&swap)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&swap).unwrap(), fs::read(rec.join("recon.png")).unwrap());

    let bad = nfed(&["swap", "--model", p(&model), "--a", p(&img), "--b", p(&img), "--factor", "hair", "--out", p(&swap)]);
    assert_eq!(code(&bad), 2);

    // Traversal with latent directories produced by reconstruct.
    let (pos, neg) = (tmp.path().join("pos"), tmp.path().join("neg"));
    for (dir, id) in [(&pos, "00001"), (&neg, "00002")] {
        let r = tmp.path().join(format!("rec{id}"));
        let im = data.join(format!("sample_{id}")).join("image.png");
        assert_eq!(code(&nfed(&["reconstruct", "--model", p(&model), "--image", p(&im), "--out", p(&r)])), 0);
        fs::create_dir_all(dir).unwrap();
        fs::copy(r.join("latents.json"), dir.join("a.json")).unwrap();
    }
    let tr = tmp.path().join("trav.png");
    let out = nfed(&[
        "traverse", "--model", p(&model), "--image", p(&img), "--factor", "light", "--positive", p(&pos), "--negative",
        p(&neg), "--lambda", "0.5", "--out", p(&tr),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tr.exists());
}

#[test]
fn gradcheck_passes() {
    let out = nfed(&["gradcheck", "--samples", "50"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).lines().count() >= 10);
}

#[test]
fn zero_threads_rejected() {
    let out = nfed(&["--threads", "0", "gradcheck", "--samples", "1"]);
    assert_eq!(code(&out), 2);
}
