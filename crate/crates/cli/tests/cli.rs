use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fooling::dataset::{serialize_idx_images, serialize_idx_labels, Image};
use fooling::mapelites::archive_load;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fooling"));
    for var in ["FOOLING_SEED", "FOOLING_WORKERS", "FOOLING_CONFIG", "FOOLING_OUT", "FOOLING_MNIST_DIR"] {
        c.env_remove(var);
    }
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn fooling")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert_eq!(code(&o), 0, "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// Ten classes of 28×28 digits-like bars: class k lights rows 2k+4..2k+7.
fn bars(n: usize, seed: u64) -> (Vec<Image>, Vec<usize>) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
    let mut noise = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 59) as u8
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let k = i % 10;
        let mut px = vec![0u8; 28 * 28];
        for y in 0..28 {
            for x in 0..28 {
                let on = (2 * k + 4..2 * k + 7).contains(&y) && (4..24).contains(&x);
                px[y * 28 + x] = if on { 220 } else { 0 }.max(noise());
            }
        }
        images.push(Image::new(28, 28, 1, px).unwrap());
        labels.push(k);
    }
    (images, labels)
}

fn write_data(dir: &Path) -> PathBuf {
    let data = dir.join("mnist");
    fs::create_dir_all(&data).unwrap();
    for (stem, n, seed) in [("train", 200, 1), ("t10k", 60, 2)] {
        let (images, labels) = bars(n, seed);
        fs::write(data.join(format!("{stem}-images-idx3-ubyte")), serialize_idx_images(&images, 28, 28).unwrap()).unwrap();
        fs::write(data.join(format!("{stem}-labels-idx1-ubyte")), serialize_idx_labels(&labels).unwrap()).unwrap();
    }
    data
}

struct Fixture {
    dir: TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let data = write_data(dir.path());
        Fixture { dir, data }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn data(&self) -> &str {
        self.data.to_str().unwrap()
    }

    /// Train a small model into `out` and return the model path.
    fn model(&self, out: &str, seed: &str) -> String {
        ok(self.path(), &["--out", out, "--seed", seed, "train", "--data", self.data(), "--steps", "40", "--batch-size", "16"]);
        format!("{out}/model.cnnw")
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn train_is_reproducible_and_records_a_manifest() {
    let f = Fixture::new();
    let a = f.model("a", "4");
    let b = f.model("b", "4");
    let c = f.model("c", "5");
    let bytes = |p: &str| fs::read(f.path().join(p)).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    let m = manifest(&f.path().join("a"));
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["steps"], 40);
    let inputs = m["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 4);
    assert!(inputs.values().all(|h| h.as_str().unwrap().len() == 64));
    assert!(f.path().join("a/mean.json").is_file());
}

#[test]
fn subset_caps_training_images() {
    let f = Fixture::new();
    ok(f.path(), &["--out", "t", "train", "--data", f.data(), "--subset", "50", "--steps", "5"]);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path().join("t/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["train_images"], 50);
    assert_eq!(metrics["validation_images"], 60);
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let f = Fixture::new();
    assert_eq!(code(&run(f.path(), &["train"])), 2, "missing --data");
    assert_eq!(code(&run(f.path(), &["train", "--data", "nowhere"])), 2);
    assert_eq!(code(&run(f.path(), &["evolve", "--model", "m", "--encoding", "voxels"])), 2);
    assert_eq!(code(&run(f.path(), &["frobnicate"])), 2);

    let bad = f.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    for name in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"] {
        fs::write(bad.join(name), b"not an idx file").unwrap();
    }
    assert_eq!(code(&run(f.path(), &["train", "--data", bad.to_str().unwrap()])), 3);
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let f = Fixture::new();
    let o = run(f.path(), &["--out", "t", "train", "--data", f.data(), "--steps", "200", "--base-lr", "1e12"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_directories_are_not_overwritten_without_force() {
    let f = Fixture::new();
    let args = ["--out", "t", "train", "--data", f.data(), "--steps", "2"];
    ok(f.path(), &args);
    assert_eq!(code(&run(f.path(), &args)), 2);
    let mut forced = vec!["--force"];
    forced.extend(args);
    ok(f.path(), &forced);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let f = Fixture::new();
    let cfg = f.path().join("cfg.toml");
    fs::write(&cfg, format!("seed = 11\n[train]\ndata = {:?}\nsteps = 3\nbatch_size = 8\n", f.data())).unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(f.path(), &["--config", cfg, "--out", "a", "train"]);
    let m = manifest(&f.path().join("a"));
    assert_eq!((m["seed"].as_u64(), m["config"]["steps"].as_u64()), (Some(11), Some(3)));
    assert_eq!(m["config"]["batch_size"], 8);
    assert_eq!(m["config"]["base_lr"], 0.01);

    ok(f.path(), &["--config", cfg, "--out", "b", "--seed", "12", "train", "--steps", "4"]);
    let m = manifest(&f.path().join("b"));
    assert_eq!((m["seed"].as_u64(), m["config"]["steps"].as_u64()), (Some(12), Some(4)));

    let o = bin().current_dir(f.path()).env("FOOLING_SEED", "13").args(["--config", cfg, "--out", "c", "train"]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(manifest(&f.path().join("c"))["seed"], 13);

    let typo = f.path().join("typo.toml");
    fs::write(&typo, "[train]\nstepz = 3\n").unwrap();
    assert_eq!(code(&run(f.path(), &["--config", typo.to_str().unwrap(), "train"])), 2);
    fs::write(&typo, "[trian]\nsteps = 3\n").unwrap();
    assert_eq!(code(&run(f.path(), &["--config", typo.to_str().unwrap(), "train"])), 2);
}

#[test]
fn evolve_writes_archive_trace_and_class_grid() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    ok(f.path(), &["--out", "e", "evolve", "--model", &model, "--encoding", "direct", "--generations", "4", "--batch", "8"]);
    let e = f.path().join("e");
    let archive = archive_load(e.join("archive")).unwrap();
    assert_eq!(archive.generation(), 4);
    assert_eq!(archive.filled().len(), 10);
    assert_eq!(fs::read_to_string(e.join("trace.csv")).unwrap().lines().count(), 5);
    let grid = image_dims(&e.join("grid.png"));
    assert_eq!(grid, (10 * 28 + 9 * fooling::analysis::GUTTER as u32, 28 + fooling::analysis::STRIP as u32));
}

fn image_dims(p: &Path) -> (u32, u32) {
    let bytes = fs::read(p).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    (be(16), be(20))
}

#[test]
fn resumed_evolution_matches_a_straight_run_at_any_worker_count() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    let evolve = |out: &str, workers: &str, gens: &str, resume: Option<&str>| {
        let mut args = vec!["--out", out, "--workers", workers, "--seed", "9", "evolve", "--model", &model];
        args.extend(["--encoding", "cppn", "--generations", gens, "--batch", "6"]);
        if let Some(r) = resume {
            args.extend(["--resume", r]);
        }
        ok(f.path(), &args);
    };
    evolve("straight", "1", "6", None);
    evolve("first", "3", "4", None);
    evolve("second", "2", "2", Some("first/archive"));
    let a = archive_load(f.path().join("straight/archive")).unwrap();
    let b = archive_load(f.path().join("second/archive")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ensemble_and_crops_are_accepted() {
    let f = Fixture::new();
    let a = f.model("a", "1");
    let b = f.model("b", "2");
    let ens = format!("{a},{b}");
    ok(f.path(), &["--out", "e", "evolve", "--ensemble", &ens, "--crops", "--generations", "2", "--batch", "4"]);
    let archive = archive_load(f.path().join("e/archive")).unwrap();
    assert_eq!(archive.dims(), (32, 32, 1));
    assert_eq!(manifest(&f.path().join("e"))["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn ascend_emits_one_image_per_class_with_step_traces() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    let mean = "m/mean.json";
    ok(f.path(), &["--out", "a", "ascend", "--model", &model, "--mean", mean, "--all-classes", "--variant", "l2", "--max-steps", "15"]);
    let a = f.path().join("a");
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 11);
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], "l2");
        let steps: usize = cols[4].parse().unwrap();
        let trace = fs::read_to_string(a.join(format!("l2_class_{}_trace.csv", cols[1]))).unwrap();
        assert_eq!(trace.lines().count(), steps + 2, "header + start row + one row per step");
        assert!(a.join(format!("l2_class_{}.png", cols[1])).is_file());
    }
    assert_eq!(code(&run(f.path(), &["ascend", "--model", &model, "--mean", mean, "--class", "1", "--variant", "l3"])), 2);
    assert_eq!(code(&run(f.path(), &["--out", "b", "ascend", "--model", &model, "--mean", mean])), 2);
    assert_eq!(code(&run(f.path(), &["--out", "c", "ascend", "--model", &model, "--mean", mean, "--class", "10"])), 2);
}

#[test]
fn retrain_loop_emits_one_row_per_iteration() {
    let f = Fixture::new();
    let cfg = f.path().join("r.toml");
    fs::write(
        &cfg,
        "[retrain-loop]\nmin_runs = 2\nimages_per_run = 10\ngenerations = 2\nbatch = 6\nsteps = 20\nbatch_size = 16\n\
         schedule = { first_train = 20, first_val = 4, later_train = 10, later_val = 2 }\n",
    )
    .unwrap();
    let out = ok(
        f.path(),
        &["--config", cfg.to_str().unwrap(), "--out", "r", "retrain-loop", "--data", f.data(), "--iterations", "3"],
    );
    assert_eq!(out.lines().filter(|l| l.starts_with("iteration")).count(), 3);
    let csv = fs::read_to_string(f.path().join("r/metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "i,Error,MNIST Error,Train,Val,Score");
    assert_eq!(rows.len(), 4);
    assert!(rows[2].starts_with("2,") && rows[2].contains(",220,64,"), "{}", rows[2]);
    assert!(f.path().join("r/model_iter_3.cnnw").is_file());
}

#[test]
fn cross_test_of_a_model_against_itself_matches_everything() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    ok(f.path(), &["--out", "x", "cross-test", "--model-a", &model, "--model-b", &model, "--runs", "1", "--generations", "2"]);
    let csv = fs::read_to_string(f.path().join("x/transfer.csv")).unwrap();
    assert!(csv.contains("top-1 matches,100.00,100.00,100.00"), "{csv}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path().join("x/transfer.json")).unwrap()).unwrap();
    assert_eq!(report["b_on_a_images"]["images"], 10);
}

#[test]
fn report_over_a_directory_of_runs_emits_heatmap_and_csv() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    for (out, seed) in [("runs/one", "1"), ("runs/two", "2")] {
        ok(f.path(), &["--out", out, "--seed", seed, "evolve", "--model", &model, "--generations", "2", "--batch", "5"]);
    }
    ok(f.path(), &["--out", "rep", "report", "runs", "--scale", "3"]);
    let rep = f.path().join("rep");
    let pgm = fooling::dataset::Image::read_pnm(rep.join("heatmap.pgm")).unwrap();
    assert_eq!(pgm.dims(), (30, 3, 1));
    let csv = fs::read_to_string(rep.join("heatmap.csv")).unwrap();
    assert!(csv.starts_with("class,median,run_0,run_1\n"));
    assert_eq!(csv.lines().count(), 11);
    assert!(rep.join("champions.png").is_file());
    assert_eq!(code(&run(f.path(), &["--out", "none", "report", "m"])), 2);
}

#[test]
fn stats_and_ablate_write_their_reports() {
    let f = Fixture::new();
    let model = f.model("m", "1");
    ok(f.path(), &["--out", "s", "stats", "--model", &model, "--data", f.data()]);
    let st: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.path().join("s/stats.json")).unwrap()).unwrap();
    assert_eq!(st["count"], 60);

    let (images, _) = bars(4, 3);
    images[3].write_pnm(f.path().join("img.pgm")).unwrap();
    ok(f.path(), &["--out", "a", "ablate", "--model", &model, "--image", "img.pgm", "--region", "0,0,28,28", "--region", "4,10,3,3", "--fill", "0"]);
    let csv = fs::read_to_string(f.path().join("a/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    ok(f.path(), &["--out", "b", "ablate", "--model", &model, "--image", "img.pgm", "--mean", "m/mean.json", "--tiles", "2"]);
    assert_eq!(fs::read_to_string(f.path().join("b/ablation.csv")).unwrap().lines().count(), 5);
    let o = run(f.path(), &["--out", "c", "ablate", "--model", &model, "--image", "img.pgm", "--region", "20,20,9,9", "--fill", "0"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(f.path(), &["--out", "d", "ablate", "--model", &model, "--image", "img.pgm", "--region", "1,2,3"])), 2);
}
