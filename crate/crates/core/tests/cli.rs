use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_netreg");

fn config_file(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p
}

const CFG: &str = r#"{
  "graph": {"family": "cycle", "n": 4},
  "data": {"mode": "oblivious", "m": 2, "alpha_h": 1.0, "alpha_z": 5.0, "sigma_noise": 0.1},
  "algo": {"variant": "bf", "beta": 0.75},
  "horizons": [64, 128, 256, 512],
  "trials": 2,
  "master_seed": 9
}"#;

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_file(tmp.path(), CFG);
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let st = Command::new(BIN)
            .args(["--threads", threads, "run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join(out))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = read_all(&tmp.path().join("a"));
    let b = read_all(&tmp.path().join("b"));
    assert_eq!(a.len(), 4 * 2 * 3 + 1);
    assert_eq!(a, b);
}

#[test]
fn seed_flag_changes_file_names() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_file(tmp.path(), CFG);
    let run = |seed: &str, out: &str| {
        Command::new(BIN).args(["run", "--seed", seed, "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join(out)).status().unwrap()
    };
    assert!(run("1", "s1").success());
    assert!(run("2", "s2").success());
    let names = |d: &str| read_all(&tmp.path().join(d)).into_iter().map(|(n, _)| n).collect::<Vec<_>>();
    assert_ne!(names("s1"), names("s2"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_file(tmp.path(), CFG);
    let ok = Command::new(BIN).args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["violations"], serde_json::json!([]));

    let bad = Command::new(BIN).args(["validate", "--set", "horizons=[8,4]", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());

    let missing = Command::new(BIN).args(["validate", "--config", "/nonexistent.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let sweep = Command::new(BIN)
        .args(["sweep", "--vary", "algo.bogus", "--values", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("sw"))
        .output()
        .unwrap();
    assert_eq!(sweep.status.code(), Some(2));

    let fit = Command::new(BIN).args(["fit", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(fit.status.code(), Some(1));
}

#[test]
fn sweep_and_fit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_file(tmp.path(), CFG);
    let out = tmp.path().join("sw");
    let st = Command::new(BIN)
        .args(["sweep", "--vary", "graph.n", "--values", "4,6", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    let fit = Command::new(BIN).args(["fit", "--out"]).arg(out.join("graph.n=6")).output().unwrap();
    assert!(fit.status.success());
    assert!(String::from_utf8_lossy(&fit.stdout).contains("slope"));
}
