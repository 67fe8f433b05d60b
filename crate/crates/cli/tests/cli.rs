use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_voxelzip"));
    c.env_remove("VOXELZIP_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn voxelzip")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.push("--json");
    serde_json::from_slice(&ok(&all).stdout).expect("valid json on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Scene {
    _dir: tempfile::TempDir,
    root: PathBuf,
    grid: PathBuf,
}

impl Scene {
    fn new(kind: &str, size: &str, degree: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let grid = root.join("scene.vxgr");
        ok(&["generate", "--scene", kind, "--size", size, "--occupancy", "0.2", "--sh-degree", degree, "-o", s(&grid)]);
        Self { _dir: dir, root, grid }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn compress(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["compress", s(&self.grid), "-o", s(&out), "--importance-rays", "3000"];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let out = run(&["compress", "/no/such/dir/grid.vxgr", "-o", "/tmp/unused.ncbc"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[InputNotFound]"), "{err}");
    assert!(err.contains("/no/such/dir/grid.vxgr"), "{err}");
}

#[test]
fn unknown_flags_and_bad_values_are_rejected_before_work() {
    let out = run(&["inspect", "x.ncbc", "--bogus"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error[UsageError]"));

    // validation runs before the (missing) input is touched
    let out = run(&["compress", "/no/such.vxgr", "-o", "o", "--retain", "1.5"]);
    assert_eq!(out.status.code(), Some(19));
    assert!(stderr(&out).starts_with("error[InvalidConfig]"));

    let out = run(&["compress", "/no/such.vxgr", "-o", "o", "--scale-color", "1/3"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compress_report_matches_file_and_inspect_verifies() {
    let sc = Scene::new("checker", "16", "1");
    let out = sc.path("c.ncbc");
    let doc = json(&["compress", s(&sc.grid), "-o", s(&out), "--importance-rays", "3000"]);
    let len = std::fs::metadata(&out).unwrap().len();
    assert_eq!(doc["report"]["total_bytes"].as_u64(), Some(len));
    assert_eq!(doc["dims"], serde_json::json!([16, 16, 16, 12]));
    assert!(doc["report"]["ratio"].as_f64().unwrap() > 1.0);

    let info = json(&["inspect", s(&out)]);
    assert_eq!(info["verified"], Value::Bool(true));
    assert_eq!(info["has_ncb"], Value::Bool(false));
    let names: Vec<&str> = info["sections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"MASK") && names.contains(&"IMPORTANT_IDX"), "{names:?}");
    let text = String::from_utf8(ok(&["inspect", s(&out)]).stdout).unwrap();
    assert!(text.contains("verified       true"));
}

#[test]
fn corrupted_container_reports_checksum_mismatch() {
    let sc = Scene::new("sphere-shell", "12", "0");
    let c = sc.compress("c.ncbc", &[]);
    let mut bytes = std::fs::read(&c).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&c, &bytes).unwrap();
    let out = run(&["inspect", s(&c)]);
    assert_eq!(out.status.code(), Some(24));
    assert!(stderr(&out).starts_with("error[ChecksumMismatch]"), "{}", stderr(&out));

    let out = run(&["render", s(&sc.grid.with_extension("nope")), "-o", s(&sc.path("x.png"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(sc.path("junk"), b"not a grid at all").unwrap();
    let out = run(&["render", s(&sc.path("junk")), "-o", s(&sc.path("x.png"))]);
    assert_eq!(out.status.code(), Some(22));
}

#[test]
fn identity_settings_round_trip_exactly() {
    let sc = Scene::new("perlin-cloud", "16", "1");
    let c = sc.compress(
        "id.ncbc",
        &["--scale-color", "1", "--scale-density", "1", "--retain", "0", "--precision", "f32"],
    );
    let back = sc.path("back.vxgr");
    ok(&["decompress", s(&c), "-o", s(&back)]);
    assert_eq!(std::fs::read(&back).unwrap(), std::fs::read(&sc.grid).unwrap());
}

#[test]
fn train_ncb_identity_overwrite_and_determinism() {
    let sc = Scene::new("checker", "12", "0");
    let a = sc.compress("a.ncbc", &[]);
    let plain = sc.path("plain.vxgr");
    ok(&["decompress", s(&a), "-o", s(&plain)]);
    let before = std::fs::read(&a).unwrap();

    // zero iterations store a network that changes nothing
    let doc = json(&["train-ncb", s(&a), "--source", s(&sc.grid), "--iters", "0"]);
    assert_eq!(doc["iterations"].as_u64(), Some(0));
    assert!(std::fs::read(&a).unwrap().len() > before.len());
    let refined = sc.path("refined.vxgr");
    ok(&["decompress", s(&a), "-o", s(&refined)]);
    assert_eq!(std::fs::read(&refined).unwrap(), std::fs::read(&plain).unwrap());

    let out = run(&["train-ncb", s(&a), "--source", s(&sc.grid), "--iters", "3"]);
    assert_eq!(out.status.code(), Some(27));
    assert!(stderr(&out).starts_with("error[AlreadyHasNcb]"));

    let train = ["--iters", "6", "--batch", "256", "--seed", "5", "--log-every", "2"];
    let doc = json(&[&["train-ncb", s(&a), "--source", s(&sc.grid), "--overwrite"][..], &train].concat());
    assert_eq!(doc["curve"].as_array().unwrap().len(), 3);
    assert!(doc["final_loss"].as_f64().unwrap().is_finite());
    let b = sc.compress("b.ncbc", &[]);
    ok(&[&["train-ncb", s(&b), "--source", s(&sc.grid)][..], &train].concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let info = json(&["inspect", s(&a)]);
    assert_eq!(info["has_ncb"], Value::Bool(true));
}

#[test]
fn train_ncb_rejects_a_mismatched_source() {
    let sc = Scene::new("checker", "12", "0");
    let c = sc.compress("c.ncbc", &[]);
    let other = sc.path("other.vxgr");
    ok(&["generate", "--scene", "slab", "--size", "12", "--sh-degree", "0", "-o", s(&other)]);
    let before = std::fs::read(&c).unwrap();
    let out = run(&["train-ncb", s(&c), "--source", s(&other), "--iters", "1"]);
    assert_eq!(out.status.code(), Some(12), "{}", stderr(&out));
    assert_eq!(std::fs::read(&c).unwrap(), before);
}

#[test]
fn render_is_identical_across_worker_counts() {
    let sc = Scene::new("sphere-shell", "16", "2");
    let c = sc.compress("c.ncbc", &[]);
    let mut dumps = Vec::new();
    for w in ["1", "3"] {
        let png = sc.path(&format!("v{w}.png"));
        let raw = sc.path(&format!("v{w}.f32"));
        let doc = json(&["render", s(&c), "-o", s(&png), "--float-dump", s(&raw), "--resolution", "24", "--workers", w]);
        assert_eq!(doc["stats"]["rays"].as_u64(), Some(24 * 24));
        for stage in ["read", "decode", "upsample", "ncb", "render", "write"] {
            assert!(doc["timings_ms"][stage].is_number(), "{stage}");
        }
        assert!(std::fs::read(&png).unwrap().starts_with(b"\x89PNG"));
        dumps.push(std::fs::read(&raw).unwrap());
    }
    assert_eq!(dumps[0], dumps[1]);

    let text = String::from_utf8(ok(&["render", s(&sc.grid), "-o", s(&sc.path("g.png")), "--resolution", "8", "--view", "3"]).stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("render")));
    let out = run(&["render", s(&sc.grid), "-o", s(&sc.path("g.png")), "--view", "8"]);
    assert_eq!(out.status.code(), Some(19));
}

#[test]
fn workers_come_from_the_environment_unless_given() {
    let sc = Scene::new("slab", "12", "0");
    let args = ["bench", s(&sc.grid), "--resolution", "8", "--views", "1", "--json"];
    let out = bin().args(args).env("VOXELZIP_WORKERS", "2").output().unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["workers"].as_u64(), Some(2));
    let out = bin().args(args).arg("--workers=1").env("VOXELZIP_WORKERS", "2").output().unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["workers"].as_u64(), Some(1));
}

#[test]
fn bench_ladder_reduces_samples() {
    let sc = Scene::new("checker", "16", "1");
    let doc = json(&["bench", s(&sc.grid), "--resolution", "16", "--views", "2", "--workers", "1"]);
    let rows = doc["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["config"].as_str().unwrap()).collect();
    assert_eq!(names, ["baseline", "+step x2", "+early-term", "+combined"]);
    let samples: Vec<u64> = rows.iter().map(|r| r["samples"].as_u64().unwrap()).collect();
    assert!(samples[1] < samples[0]);
    assert!(samples[2] <= samples[1]);
    assert_eq!(samples[3], samples[2]);
    // the kernel switch changes speed, not pixels
    assert_eq!(rows[3]["max_delta_vs_previous"].as_f64(), Some(0.0));
    assert!(rows[0]["psnr_db"].as_f64().unwrap() > 30.0);
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let sc = Scene::new("checker", "12", "0");
    let cfg = sc.path("run.cfg");
    std::fs::write(&cfg, "# identity-ish run\nretain = 0\nscale_color = 1/2\njson = true\n").unwrap();
    let out = sc.path("o.ncbc");
    let base = ["compress", s(&sc.grid), "-o", s(&out), "--importance-rays", "2000", "--config", s(&cfg)];
    let doc: Value = serde_json::from_slice(&ok(&base).stdout).unwrap();
    assert_eq!(doc["config"]["retain_fraction"].as_f64(), Some(0.0));
    assert_eq!(doc["config"]["scale_color"].as_str(), Some("Half"));
    let doc: Value = serde_json::from_slice(&ok(&[&base[..], &["--retain", "0.1"]].concat()).stdout).unwrap();
    assert_eq!(doc["config"]["retain_fraction"].as_f64(), Some(0.1));

    std::fs::write(&cfg, "no_such_flag = 3\n").unwrap();
    assert_eq!(run(&base).status.code(), Some(3));
}

#[test]
fn ablate_writes_csv_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("results");
    let doc = json(&[
        "ablate", "--scene", "sphere-shell", "--size", "12", "--occupancy", "0.2", "--sh-degree", "0",
        "--sweep", "retention", "--resolution", "8", "--results", s(&res), "--workers", "1",
    ]);
    let records = doc["records"].as_array().unwrap();
    assert_eq!(records.len(), 5);
    let csv = std::fs::read_to_string(res.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let hash = records[0]["config_hash"].as_str().unwrap();
    assert!(res.join(hash).join("view_0.png").exists());
    assert!(res.join(hash).join("view_7.png").exists());
}
