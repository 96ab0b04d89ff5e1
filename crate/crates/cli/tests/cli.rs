use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shiftlab::datasets::{make_cs_cmnist, write_dataset, GrayMnist};

fn shiftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shiftlab")).args(args).env_remove("SHIFTLAB_CACHE").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

/// Small cached CS-CMNIST triple under the file names `search` looks for.
fn tiny_cache(dir: &Path, seed: u64) {
    let n = 500;
    let mut pixels = vec![0u8; n * 784];
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    for (i, img) in pixels.chunks_exact_mut(784).enumerate() {
        let d = labels[i] as usize;
        img[(2 * d + 4) * 28..(2 * d + 6) * 28].fill(230);
    }
    let pool = GrayMnist { rows: 28, cols: 28, pixels, labels };
    fs::create_dir_all(dir).unwrap();
    let idx: Vec<usize> = (0..30).collect();
    for d in make_cs_cmnist(&pool, seed).unwrap() {
        let path = dir.join(format!("cs-cmnist-seed{seed}-domain{}.slds", d.domain.index));
        write_dataset(&d.subset(&idx), fs::File::create(path).unwrap()).unwrap();
    }
}

#[test]
fn boundlab_verify() {
    let o = shiftlab(&["boundlab", "verify", "--instances", "2000", "--latent", "5", "--classes", "3", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("checked: 2000"));
    assert!(text.contains("violations: 0"));
    let again = shiftlab(&["boundlab", "verify", "--instances", "2000", "--latent", "5", "--classes", "3", "--seed", "4"]);
    assert_eq!(stdout(&again), text);

    let empty = shiftlab(&["boundlab", "verify", "--instances", "0"]);
    assert_eq!(empty.status.code(), Some(0));
    assert!(stdout(&empty).contains("checked: 0"));
    assert_eq!(shiftlab(&["boundlab", "verify", "--latent", "0"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let o = shiftlab(&["dataset", "build", "--kind", "svhn", "--mnist-dir", ".", "--seed", "1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(shiftlab(&["frobnicate"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = shiftlab(&[
        "dataset", "build", "--kind", "cmnist", "--mnist-dir", tmp.path().to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not found"));
    assert_eq!(shiftlab(&["report", "--in", tmp.path().join("nope.json").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn report_renders_table() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("summary.json");
    fs::write(
        &path,
        r#"[{"dataset": "cs-cmnist", "n_trials": 25, "repeats": 5, "total_steps": 2000, "algorithms": [
            {"algorithm": "CORAL-CEM", "mean": 0.899, "std": 0.006, "repeats": [], "selected_val": [], "selected_alpha": [], "selected_beta": [], "failed_trials": 0},
            {"algorithm": "ERM", "mean": 0.603, "std": 0.012, "repeats": [], "selected_val": [], "selected_alpha": [], "selected_beta": [], "failed_trials": 0}]}]"#,
    )
    .unwrap();
    let out = tmp.path().join("table.md");
    let o = shiftlab(&["report", "--in", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "| Dataset | ERM | CORAL-CEM |");
    assert!(text.contains("| CS-CMNIST | 60.3 ± 1.2 | 89.9 ± 0.6 |"));
    assert_eq!(fs::read_to_string(out).unwrap(), text);
}

#[test]
fn search_pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    tiny_cache(&cache, 11);
    let config = tmp.path().join("run.json");
    let write_config = |out: &Path| {
        fs::write(
            &config,
            format!(
                r#"{{"dataset": "cs-cmnist", "data_seed": 11, "cache_dir": {:?}, "out_dir": {:?},
                    "algorithms": ["ERM", "MMD-CEM"], "n_trials": 2, "repeats": 2, "total_steps": 3,
                    "warmup_steps": 1, "batch": {{"fixed": 4}}, "lr": {{"fixed": 0.05}}}}"#,
                cache, out
            ),
        )
        .unwrap();
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_config(&a);
    let o = shiftlab(&["search", "--config", config.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("| Dataset | ERM | MMD-CEM |"));
    write_config(&b);
    let o = shiftlab(&["search", "--config", config.to_str().unwrap(), "--jobs", "2", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));

    let csv_a = fs::read_to_string(a.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv_a.lines().collect();
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
    assert!(rows[0].ends_with(",wall_time_s"));
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&csv_a), strip(&fs::read_to_string(b.join("results.csv")).unwrap()));
    let summary = fs::read(a.join("summary.json")).unwrap();
    assert_eq!(summary, fs::read(b.join("summary.json")).unwrap());
    let parsed: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    for alg in parsed[0]["algorithms"].as_array().unwrap() {
        assert!(alg["mean"].is_f64() && alg["std"].is_f64());
    }
    assert_eq!(fs::read(a.join("table.md")).unwrap(), fs::read(b.join("table.md")).unwrap());

    fs::write(&config, r#"{"dataset": "cs-cmnist", "n_trails": 2}"#).unwrap();
    assert_eq!(shiftlab(&["search", "--config", config.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn trial_writes_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    tiny_cache(&cache, 3);
    let config = tmp.path().join("run.json");
    fs::write(
        &config,
        format!(r#"{{"dataset": "cs-cmnist", "data_seed": 3, "cache_dir": {cache:?}, "total_steps": 2, "batch": {{"fixed": 4}}}}"#),
    )
    .unwrap();
    let ckpt = tmp.path().join("model.slt");
    let o = shiftlab(&[
        "trial", "--config", config.to_str().unwrap(), "--algorithm", "CORAL-CEM", "--alpha", "1", "--beta", "2",
        "--seed", "5", "--checkpoint", ckpt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let result: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(result["failed"], false);
    assert_eq!(&fs::read(&ckpt).unwrap()[..4], b"SLT1");
}

#[test]
fn dataset_build_real_mnist() {
    let Some(mnist) = mnist_dir() else { return };
    let tmp = tempfile::tempdir().unwrap();
    let build = |out: &Path| {
        shiftlab(&[
            "dataset", "build", "--kind", "cs-cmnist", "--mnist-dir", mnist.to_str().unwrap(), "--seed", "5", "--out",
            out.to_str().unwrap(),
        ])
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(build(&a).status.code(), Some(0));
    assert_eq!(build(&b).status.code(), Some(0));
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(a.join("cs-cmnist-seed5-stats.json")).unwrap()).unwrap();
    let sizes: Vec<u64> = stats["domains"].as_array().unwrap().iter().map(|d| d["size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, [20_000, 20_000, 20_000]);
    for e in 1..=3 {
        let name = format!("cs-cmnist-seed5-domain{e}.slds");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }

    let env_dir = tmp.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_shiftlab"))
        .args(["dataset", "build", "--kind", "cmnist", "--mnist-dir", mnist.to_str().unwrap(), "--seed", "5"])
        .env("SHIFTLAB_CACHE", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("cmnist-seed5-domain3.slds").is_file());
}
