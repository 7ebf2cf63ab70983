//! End-to-end checks of the `defog` binary: exit codes, on-disk layouts,
//! sidecars and determinism.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use defog_core::dataset::{
    load_dataset, load_frame, load_sequence, save_frame, save_manifest, AcquisitionTag, Density,
    Frame, Manifest,
};
use defog_core::fog::panel_contrast;
use defog_core::scene::{procedural_scene, SceneConfig};
use defog_core::tcvd::{save_checkpoint, TcvdConfig, TcvdModel};

fn defog_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_defog"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    defog_bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["synth", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_dir_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["defog", "--set", "input=nowhere", "--set", "out=x"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_method_exits_2_and_missing_checkpoint_is_required() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=2"]));
    let out = run_in(dir.path(), &["defog", "--set", "input=ds", "--set", "out=x", "--set", "method=mfp"]);
    assert_eq!(out.status.code(), Some(2));
    let out =
        run_in(dir.path(), &["defog", "--set", "input=ds", "--set", "out=x", "--set", "method=tcvd"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_lists_config_keys_for_every_command() {
    let expectations: &[(&str, &[&str])] = &[
        ("synth", &["out", "densities", "seed", "clear_root", "panel_black"]),
        ("recompose", &["input", "out"]),
        ("defog", &["method", "checkpoint", "omega", "guided_eps", "t0"]),
        ("train", &["roots", "steps", "lr", "filters", "loss_a", "augment"]),
        ("eval", &["gt_root", "restored", "include_identity", "eval_size"]),
    ];
    for (cmd, keys) in expectations {
        let out = defog_bin().args([*cmd, "--help"]).output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("Configuration keys"), "{cmd}: {text}");
        assert!(text.contains("default"), "{cmd} help lacks defaults:\n{text}");
        for key in *keys {
            assert!(text.contains(key), "{cmd} help is missing key {key}:\n{text}");
        }
    }
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(
        dir.path(),
        &["synth", "--set", "out=ds", "--set", "frames=1", "--set", "densities=0.05"],
    ));
    let out = run_in(
        dir.path(),
        &[
            "train",
            "--set",
            "roots=ds",
            "--set",
            "out=t",
            "--set",
            "steps=10",
            "--set",
            "input_size=32",
            "--set",
            "lr=1e200",
        ],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn synth_roundtrips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=5"]));
    let ds = load_dataset(&dir.path().join("ds")).unwrap();
    assert_eq!(ds.foggy.len(), 3);
    assert_eq!(ds.clear.len(), 1);
    assert_eq!(ds.depths.len(), 5);
    assert!(ds.foggy.iter().all(|s| s.len() == 5));

    // Panel contrast survives 8-bit quantization to within ~1/255 effects.
    let scene = procedural_scene(&SceneConfig { frames: 5, ..Default::default() }).unwrap();
    for seq in &ds.foggy {
        let (_, density) = seq.video_key().unwrap();
        let target = density.target_contrast().unwrap();
        let c = panel_contrast(seq.frame(0), &scene.panel).unwrap();
        assert!((c - target).abs() < 0.005, "{density}: disk contrast {c} vs {target}");
    }
}

#[test]
fn synth_is_byte_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let cwd = dir.path().join(run);
        std::fs::create_dir_all(&cwd).unwrap();
        assert_success(&run_in(&cwd, &["synth", "--set", "out=ds", "--set", "frames=3"]));
    }
    let a = dir.path().join("a/ds");
    let b = dir.path().join("b/ds");
    for rel in [
        "manifest.json",
        "clear/light_0/frame_0001.png",
        "foggy/light_0/density_0.05/frame_0002.png",
        "depth/pos_0000.png",
    ] {
        let x = std::fs::read(a.join(rel)).unwrap();
        let y = std::fs::read(b.join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs between identical runs");
    }
}

#[test]
fn defog_dcp_writes_frames_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=4"]));
    assert_success(&run_in(dir.path(), &["defog", "--set", "input=ds", "--set", "out=restored"]));
    let seq = load_sequence(&dir.path().join("restored/light_0/density_0.05")).unwrap();
    assert_eq!(seq.len(), 4);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("restored/defog_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["method"], "dcp");
    assert_eq!(meta["config"]["omega"], "0.95");
}

#[test]
fn defog_single_sequence_dir_works() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=3"]));
    let leaf = "ds/foggy/light_0/density_0.15";
    assert_success(&run_in(dir.path(), &["defog", "--set", &format!("input={leaf}"), "--set", "out=flat"]));
    let restored = load_sequence(&dir.path().join("flat")).unwrap();
    assert_eq!(restored.len(), 3);
}

#[test]
fn defog_tcvd_with_fresh_checkpoint_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=3"]));
    let model = TcvdModel::init(TcvdConfig::micro(32), 0).unwrap();
    save_checkpoint(&model, &dir.path().join("fresh.ckpt")).unwrap();
    assert_success(&run_in(
        dir.path(),
        &[
            "defog",
            "--set",
            "input=ds",
            "--set",
            "out=restored",
            "--set",
            "method=tcvd",
            "--set",
            "checkpoint=fresh.ckpt",
        ],
    ));
    // Output loads as valid [0,1] frames at the model's input size.
    let seq = load_sequence(&dir.path().join("restored/light_0/density_0.05")).unwrap();
    assert_eq!(seq.len(), 3);
    assert_eq!(seq.frame(0).width(), 32);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("restored/defog_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["model_config"]["input_size"], 32);
}

#[test]
fn train_seed_repeat_is_identical_and_mixes_roots() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds_a", "--set", "frames=2", "--set", "densities=0.05"]));
    assert_success(&run_in(
        dir.path(),
        &["synth", "--set", "out=ds_b", "--set", "frames=2", "--set", "densities=0.15", "--set", "seed=5"],
    ));
    let train_args = |out: &str| {
        vec![
            "train".to_string(),
            "--set".into(),
            "roots=ds_a,ds_b".into(),
            "--set".into(),
            format!("out={out}"),
            "--set".into(),
            "steps=6".into(),
            "--set".into(),
            "input_size=32".into(),
        ]
    };
    let args1 = train_args("t1");
    let args2 = train_args("t2");
    assert_success(&run_in(dir.path(), &args1.iter().map(|s| s.as_str()).collect::<Vec<_>>()));
    assert_success(&run_in(dir.path(), &args2.iter().map(|s| s.as_str()).collect::<Vec<_>>()));

    let csv1 = std::fs::read(dir.path().join("t1/train_log.csv")).unwrap();
    let csv2 = std::fs::read(dir.path().join("t2/train_log.csv")).unwrap();
    assert_eq!(csv1, csv2, "same seed must give identical loss logs");
    assert!(!csv1.is_empty());

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t1/train_meta.json")).unwrap())
            .unwrap();
    let counts = meta["source_counts"].as_array().unwrap();
    assert_eq!(counts.len(), 2);
    assert!(counts.iter().all(|c| c.as_u64().unwrap() > 0), "both roots must be sampled: {counts:?}");
}

#[test]
fn eval_of_perfect_restoration_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=3"]));
    // Build a "restored" tree that is the ground truth itself.
    let ds = load_dataset(&dir.path().join("ds")).unwrap();
    let clear = &ds.clear[0];
    let target = dir.path().join("perfect/light_0/density_0.05");
    std::fs::create_dir_all(&target).unwrap();
    for (frame, tag) in clear.frames() {
        save_frame(&target.join(format!("frame_{:04}.png", tag.position)), frame).unwrap();
    }
    assert_success(&run_in(
        dir.path(),
        &[
            "eval",
            "--set",
            "gt_root=ds",
            "--set",
            "restored=perfect=perfect",
            "--set",
            "include_identity=false",
            "--set",
            "out=report",
            "--set",
            "eval_size=64",
        ],
    ));
    let csv = std::fs::read_to_string(dir.path().join("report/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,density,lighting,ssim,psnr,frames");
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "1", "ssim should be exactly 1: {line}");
        assert_eq!(cols[4], "inf", "psnr should be inf: {line}");
    }
    let json = std::fs::read_to_string(dir.path().join("report/report.json")).unwrap();
    assert!(json.contains("\"psnr\": \"inf\""));
}

#[test]
fn recompose_flat_slices_into_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("slices");
    std::fs::create_dir_all(&flat).unwrap();
    let mut overrides = BTreeMap::new();
    let mut n = 0;
    for pos in 0..2 {
        for light in 0..6 {
            for density in
                [Density::Dense, Density::Medium, Density::Light, Density::Clear]
            {
                let name = format!("slice_{n:04}.png");
                n += 1;
                let v = (pos * 40 + light * 7) as f64 / 255.0;
                save_frame(&flat.join(&name), &Frame::filled(16, 16, [v, v, v]).unwrap()).unwrap();
                overrides.insert(name, AcquisitionTag::new(pos, light, density).unwrap());
            }
        }
    }
    save_manifest(&flat, &Manifest { fps: Some(25.0), overrides, config: BTreeMap::new() }).unwrap();

    assert_success(&run_in(dir.path(), &["recompose", "--set", "input=slices", "--set", "out=videos"]));
    let ds = load_dataset(&dir.path().join("videos")).unwrap();
    assert_eq!(ds.foggy.len(), 18);
    assert_eq!(ds.clear.len(), 6);
    assert!(ds.foggy.iter().all(|s| s.len() == 2));
}

#[test]
fn recompose_warns_on_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("slices");
    std::fs::create_dir_all(&flat).unwrap();
    let mut overrides = BTreeMap::new();
    for (i, (pos, density)) in
        [(0, Density::Dense), (1, Density::Dense), (0, Density::Medium)].iter().enumerate()
    {
        let name = format!("s{i}.png");
        save_frame(&flat.join(&name), &Frame::filled(16, 16, [0.5; 3]).unwrap()).unwrap();
        overrides.insert(name, AcquisitionTag::new(*pos, 0, *density).unwrap());
    }
    save_manifest(&flat, &Manifest { fps: None, overrides, config: BTreeMap::new() }).unwrap();
    let out = run_in(dir.path(), &["recompose", "--set", "input=slices", "--set", "out=videos"]);
    assert_success(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "expected a gap warning, got: {stderr}");
    assert!(stderr.contains("position 1"), "{stderr}");
}

#[test]
fn fixed_beta_synth_classifies_density() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--set",
            "out=ds",
            "--set",
            "frames=2",
            "--set",
            "beta=0.008",
            "--set",
            "airlight=0.5,0.5,0.5",
        ],
    );
    assert_success(&out);
    let ds = load_dataset(&dir.path().join("ds")).unwrap();
    assert_eq!(ds.foggy.len(), 1);
    // A near-zero beta leaves the panel clear and must be rejected.
    let out = run_in(
        dir.path(),
        &[
            "synth",
            "--set",
            "out=ds2",
            "--set",
            "frames=2",
            "--set",
            "beta=0.00001",
            "--set",
            "airlight=0.5,0.5,0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corrupt_frame_fails_load_with_file_name() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&run_in(dir.path(), &["synth", "--set", "out=ds", "--set", "frames=2"]));
    let victim = dir.path().join("ds/foggy/light_0/density_0.05/frame_0001.png");
    std::fs::write(&victim, b"not a png").unwrap();
    let err = load_frame(&victim).unwrap_err();
    assert!(err.to_string().contains("frame_0001.png"), "{err}");
    let out = run_in(dir.path(), &["defog", "--set", "input=ds", "--set", "out=r"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame_0001.png"));
}
