use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn svrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svrf"))
        .args(args)
        .args(["--threads", "1"])
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = svrf(args);
    assert!(
        out.status.success(),
        "svrf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

const TINY_TRAIN: &str = r#"
n_samples = 8
batch_rays = 16
patches_per_step = 1
patch_size = 4
log_every = 1
[field]
width = 8
depth = 2
color_width = 4
skip_layer = 1
[field.encoding]
position_freqs = 2
direction_freqs = 1
"#;

const TINY_FLOW: &str = "[flow]\npatch_size = 4\nlayers = 2\nwidth = 8\n[training]\nbatch = 8\n";

fn small_scene(dir: &Path) {
    ok(&[
        "make-scene",
        "--scene",
        "slab",
        "--inputs",
        "2",
        "--tests",
        "1",
        "--resolution",
        "12",
        "--focal",
        "13",
        "--out",
        s(dir),
    ]);
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn make_scene_writes_every_view() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "make-scene",
        "--scene",
        "spheres",
        "--inputs",
        "3",
        "--tests",
        "8",
        "--resolution",
        "16",
        "--focal",
        "17.5",
        "--out",
        s(&data),
    ]);
    let pngs = std::fs::read_dir(data.join("images")).unwrap().count();
    assert_eq!(pngs, 11);
    let run = json(&data.join("run.json"));
    assert_eq!(run["command"], "make-scene");
    assert_eq!(run["created"], "1970-01-01T00:00:00Z");
    assert!(run["input_hash"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn exit_codes_distinguish_usage_io_and_numerics() {
    let dir = tempfile::tempdir().unwrap();
    let out = svrf(&["make-scene", "--scene", "teapot", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spheres"));

    let out = svrf(&[
        "train",
        "--data",
        s(&dir.path().join("missing")),
        "--no-ds",
        "--no-nll",
        "--out",
        s(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = svrf(&["render", "--checkpoint", "nope.ckpt"]);
    assert_eq!(out.status.code(), Some(2), "missing required args is a usage error");

    let data = dir.path().join("data");
    small_scene(&data);
    let out = svrf(&["train", "--data", s(&data), "--out", s(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2), "regularized training without a flow");

    let cfg = write(
        dir.path(),
        "nan.toml",
        &format!("lr_init = 1e300\nlr_final = 1e300\n{TINY_TRAIN}"),
    );
    let run = dir.path().join("nan");
    let out = svrf(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--no-ds",
        "--no-nll",
        "--iterations",
        "20",
        "--out",
        s(&run),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let failure = json(&run.join("failure.json"));
    assert!(failure["iteration"].as_u64().unwrap() >= 1);
}

#[test]
fn train_flow_with_zero_steps_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.toml", TINY_FLOW);
    for (name, seed) in [("a", "3"), ("b", "3")] {
        ok(&[
            "train-flow",
            "--bundled-corpus",
            "--config",
            s(&cfg),
            "--steps",
            "0",
            "--seed",
            seed,
            "--out",
            s(&dir.path().join(name)),
        ]);
    }
    let a = std::fs::read(dir.path().join("a/flow.ckpt")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/flow.ckpt")).unwrap());
    let report = json(&dir.path().join("a/flow_report.json"));
    assert_eq!(report["initial_train_nll"], report["final_train_nll"]);
    let curve = std::fs::read_to_string(dir.path().join("a/nll_curve.jsonl")).unwrap();
    assert!(curve.lines().count() <= 1);
}

#[test]
fn train_render_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let p = |rel: &str| dir.path().join(rel);
    small_scene(&p("data"));
    let flow_cfg = write(dir.path(), "flow.toml", TINY_FLOW);
    let train_cfg = write(dir.path(), "train.toml", TINY_TRAIN);
    ok(&[
        "train-flow",
        "--bundled-corpus",
        "--config",
        s(&flow_cfg),
        "--steps",
        "3",
        "--out",
        s(&p("flow")),
    ]);
    ok(&[
        "train",
        "--data",
        s(&p("data")),
        "--flow",
        s(&p("flow/flow.ckpt")),
        "--config",
        s(&train_cfg),
        "--iterations",
        "4",
        "--opacity-reg",
        "0.5",
        "--no-anneal",
        "--out",
        s(&p("train")),
    ]);

    // The manifest echoes the resolved config, flags included.
    let run = json(&p("train/run.json"));
    let config = &run["config"];
    assert_eq!(config["max_iterations"], 4);
    assert_eq!(config["lambda_opacity"], 0.5);
    assert_eq!(config["anneal"], false);
    assert_eq!(config["field"]["width"], 8);
    assert!(run["outputs"].as_array().unwrap().len() >= 2);
    let log = std::fs::read_to_string(p("train/metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["test_psnr"].is_number());

    ok(&[
        "render",
        "--checkpoint",
        s(&p("train/field.ckpt")),
        "--data",
        s(&p("data")),
        "--split",
        "all",
        "--out",
        s(&p("render")),
    ]);
    let sidecar = json(&p("render/renders.json"));
    assert_eq!(sidecar["samples"], 8, "defaults to the training sample count");
    let views = sidecar["views"].as_array().unwrap();
    assert_eq!(views.len(), 3);
    for v in views {
        let [lo, hi] = [
            v["depth_range"][0].as_f64().unwrap(),
            v["depth_range"][1].as_f64().unwrap(),
        ];
        assert!(lo <= hi);
        assert!(p("render").join(v["image"].as_str().unwrap()).exists());
        assert!(p("render").join(v["preview"].as_str().unwrap()).exists());
    }

    ok(&[
        "eval",
        "--data",
        s(&p("data")),
        "--renders",
        s(&p("render")),
        "--out",
        s(&p("eval")),
    ]);
    let metrics = json(&p("eval/metrics.json"));
    assert_eq!(metrics["views"].as_array().unwrap().len(), 3);
    assert!(metrics["mean"]["psnr"].as_f64().unwrap().is_finite());
}

#[test]
fn ground_truth_evaluates_as_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_scene(&data);
    // Lay the dataset out as a render directory.
    let manifest = json(&data.join("manifest.json"));
    let frames = manifest["frames"].as_array().unwrap();
    let views: Vec<Value> = frames
        .iter()
        .map(|f| {
            serde_json::json!({
                "id": f["id"],
                "image": f["image"],
                "depth": f["depth"],
                "preview": f["image"],
                "depth_range": [0.0, 1.0],
            })
        })
        .collect();
    std::fs::write(
        data.join("renders.json"),
        serde_json::to_vec(&serde_json::json!({"samples": 2, "views": views})).unwrap(),
    )
    .unwrap();
    ok(&[
        "eval",
        "--data",
        s(&data),
        "--renders",
        s(&data),
        "--out",
        s(&dir.path().join("eval")),
    ]);
    let mean = &json(&dir.path().join("eval/metrics.json"))["mean"];
    assert_eq!(mean["psnr"], 99.0);
    assert_eq!(mean["ssim"], 1.0);
    assert_eq!(mean["depth_mae"], 0.0);
}

#[test]
fn threads_flag_and_env_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "make-scene",
        "--scene",
        "texture-box",
        "--inputs",
        "1",
        "--tests",
        "1",
        "--resolution",
        "8",
        "--focal",
        "9",
        "--out",
        s(&a),
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_svrf"))
        .args([
            "make-scene",
            "--scene",
            "texture-box",
            "--inputs",
            "1",
            "--tests",
            "1",
            "--resolution",
            "8",
            "--focal",
            "9",
            "--out",
            s(&b),
        ])
        .env("SVRF_THREADS", "1")
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
}
