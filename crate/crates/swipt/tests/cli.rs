use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swipt::checkpoint::load_checkpoint;
use swipt::commands::{cmd_evaluate, Split};
use swipt::dataset_io::read_dataset;
use tempfile::TempDir;

const TOY: &str = r#"
[scenario]
antennas = 4
num_ir = 2
num_er = 1

[sampling]
master_seed = 3
count = 40

[training]
epochs = 3
seed = 1

[bench]
scenarios = [[4, 3, 0]]
warmup = 1
"#;

fn swipt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt"))
        .current_dir(dir)
        .env_remove("SWIPT_CONFIG_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = swipt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("toy.toml");
    std::fs::write(&cfg, config).unwrap();
    (dir, cfg)
}

#[test]
fn generation_is_byte_for_byte_reproducible() {
    let (dir, cfg) = workspace(TOY);
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(d, &["--config", c, "generate", "--out", "a.jsonl"]);
    ok(d, &["--config", c, "generate", "--out", "b.jsonl"]);
    ok(
        d,
        &["--config", c, "generate", "--seed", "4", "--out", "c.jsonl"],
    );
    let read = |n: &str| std::fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    let (header, samples) = read_dataset(&d.join("a.jsonl")).unwrap();
    assert_eq!((header.antennas, header.num_ir, header.num_er), (4, 2, 1));
    assert_eq!(samples.len(), 40);
}

#[test]
fn information_only_labels_carry_no_energy_bits() {
    let (dir, cfg) = workspace(&TOY.replace("num_er = 1", "num_er = 0"));
    ok(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "generate",
            "--count",
            "12",
            "--out",
            "w.jsonl",
        ],
    );
    let (_, samples) = read_dataset(&dir.path().join("w.jsonl")).unwrap();
    assert!(samples
        .iter()
        .all(|s| s.label.len() == 2 && s.label.er_bits().is_empty()));
}

#[test]
fn invalid_config_names_the_offending_field() {
    let (dir, cfg) = workspace(&TOY.replace("antennas = 4", "antennas = 0"));
    let out = swipt(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "generate",
            "--out",
            "x.jsonl",
        ],
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scenario.antennas"), "{err}");
    assert!(!dir.path().join("x.jsonl").exists());

    let (dir, cfg) = workspace(&format!("{TOY}\n[extra]\nx = 1\n"));
    let out = swipt(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "generate",
            "--out",
            "x.jsonl",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn config_directory_supplies_the_default_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("swipt.toml"),
        TOY.replace("count = 40", "count = 7"),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_swipt"))
        .current_dir(dir.path())
        .env("SWIPT_CONFIG_DIR", dir.path())
        .args(["generate", "--out", "d.jsonl"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        read_dataset(&dir.path().join("d.jsonl")).unwrap().1.len(),
        7
    );
}

#[test]
fn training_is_reproducible_and_checkpoints_reload_exactly() {
    let (dir, cfg) = workspace(TOY);
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(d, &["--config", c, "generate", "--out", "data.jsonl"]);
    ok(
        d,
        &[
            "--config",
            c,
            "train",
            "--dataset",
            "data.jsonl",
            "--out",
            "a.json",
        ],
    );
    ok(
        d,
        &[
            "--config",
            c,
            "train",
            "--dataset",
            "data.jsonl",
            "--out",
            "b.json",
        ],
    );

    let history = std::fs::read_to_string(d.join("a.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);
    assert_eq!(
        history,
        std::fs::read_to_string(d.join("b.history.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );

    let (header, samples) = read_dataset(&d.join("data.jsonl")).unwrap();
    assert_eq!(header.num_ir, 2);
    let net = load_checkpoint(&d.join("a.json")).unwrap();
    let again = load_checkpoint(&d.join("a.json")).unwrap();
    assert_eq!(net, again);
    for s in &samples {
        let p = net
            .predict_probabilities(&s.channels, &s.demands, &s.virtual_bids)
            .unwrap();
        let q = again
            .predict_probabilities(&s.channels, &s.demands, &s.virtual_bids)
            .unwrap();
        assert_eq!(
            p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn evaluation_recovers_a_memorized_training_split() {
    let config = TOY.replace(
        "epochs = 3",
        "epochs = 60\nlearning_rate = 0.003\ndecay = 0.0",
    );
    let (dir, cfg) = workspace(&config);
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(d, &["--config", c, "generate", "--out", "data.jsonl"]);
    ok(
        d,
        &[
            "--config",
            c,
            "train",
            "--dataset",
            "data.jsonl",
            "--out",
            "m.json",
        ],
    );
    let stdout = ok(
        d,
        &[
            "--config",
            c,
            "evaluate",
            "--model",
            "m.json",
            "--dataset",
            "data.jsonl",
            "--split",
            "train",
            "--out",
            "conf.csv",
        ],
    );
    assert_eq!(stdout.lines().count(), 2);
    let runs = [(d.join("m.json"), d.join("data.jsonl"))];
    let m = cmd_evaluate(&runs, Split::Train, 0, None, &mut Vec::new()).unwrap();
    assert!(m[0].exact_accuracy >= 0.99, "{}", m[0].exact_accuracy);
    let conf = std::fs::read_to_string(d.join("conf.csv")).unwrap();
    assert_eq!(conf.lines().count(), 1 + 8);
}

#[test]
fn optimal_engine_welfare_dominates_the_approximations() {
    let (dir, cfg) = workspace(TOY);
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(d, &["--config", c, "generate", "--out", "data.jsonl"]);
    ok(
        d,
        &[
            "--config",
            c,
            "train",
            "--dataset",
            "data.jsonl",
            "--out",
            "m.json",
        ],
    );
    let welfare = |engine: &str, seed: u64| -> f64 {
        let out = format!("{engine}-{seed}.json");
        let seed = seed.to_string();
        ok(
            d,
            &[
                "--config", c, "auction", "--seed", &seed, "--engine", engine, "--model", "m.json",
                "--out", &out,
            ],
        );
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(&out)).unwrap()).unwrap();
        v["virtual_welfare"].as_f64().unwrap()
    };
    for seed in 100..106 {
        let best = welfare("bnb", seed);
        assert!(welfare("heuristic", seed) <= best + 1e-12);
        assert!(welfare("dnn", seed) <= best + 1e-12);
    }
}

#[test]
fn bench_rows_partition_the_instances() {
    let (dir, cfg) = workspace(TOY);
    let d = dir.path();
    let c = cfg.to_str().unwrap();
    ok(
        d,
        &[
            "--config",
            c,
            "bench",
            "--count",
            "30",
            "--out",
            "bench.jsonl",
        ],
    );
    let rows: Vec<serde_json::Value> = std::fs::read_to_string(d.join("bench.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let methods: Vec<&str> = rows
        .iter()
        .filter(|r| r.get("mean_seconds").is_some())
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["bnb_sdr", "bnb_udd", "heuristic", "dnn"]);
    for m in ["heuristic", "dnn"] {
        let total: u64 = rows
            .iter()
            .filter(|r| r.get("lo").is_some() && r["method"] == m)
            .map(|r| r["count"].as_u64().unwrap())
            .sum();
        assert_eq!(total, 30);
    }
    let out = swipt(d, &["--config", c, "bench", "--count", "5"]);
    assert!(!out.status.success());
}
