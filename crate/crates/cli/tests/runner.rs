use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dinilab"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bin()
        .arg("run")
        .arg(config)
        .arg("--output-dir")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

const SMALL: &[(&str, &str)] = &[
    ("oscillation", "[field]\nname = \"log_family\"\n"),
    ("dini", "[params]\nradii = [0.01, 0.001]\n"),
    ("campanato", "[field]\nname = \"log_family\"\n"),
    (
        "freezing",
        "[field]\nname = \"log_family\"\n[params]\nradii = [0.4, 0.2]\n",
    ),
    ("weaktype", "[params]\nradii = [0.5, 0.25]\n"),
    (
        "hormander",
        "[params]\nradii = [0.25, 0.125]\ncenters = [[0.0, 0.0], [0.1, 0.0]]\n",
    ),
    (
        "convergence",
        "[params]\nsizes = [16, 32]\nmin_order = 1.5\n",
    ),
];

#[test]
fn list_names_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("log_family"));
    for (name, _) in SMALL {
        assert!(text.lines().any(|l| l == *name), "{name}");
    }
    for line in text.lines().filter(|l| l.contains(": ")) {
        let parts: Vec<&str> = line.split(": ").collect();
        assert_eq!(parts.len(), 3, "{line}");
        assert!(!parts[0].is_empty() && !parts[1].is_empty());
    }
}

#[test]
fn every_experiment_runs_on_a_small_grid() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, extra) in SMALL {
        let body = format!("experiment = \"{name}\"\n[grid]\nn = 64\n{extra}");
        let cfg = write_config(tmp.path(), &format!("{name}.toml"), &body);
        let out_dir = tmp.path().join(name);
        let out = run(&cfg, &out_dir, &[]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["experiment"], *name);
        let hash = manifest["config_hash"].as_str().unwrap().to_string();
        for file in manifest["outputs"].as_array().unwrap() {
            let csv = std::fs::read_to_string(out_dir.join(file.as_str().unwrap())).unwrap();
            let mut lines = csv.lines();
            assert!(lines.next().unwrap().ends_with(",config_hash"));
            for line in lines {
                assert!(line.ends_with(&hash), "{name}: {line}");
            }
        }
    }
}

#[test]
fn reruns_reproduce_csv_bodies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "experiment = \"hormander\"\n[grid]\nn = 64\n[params]\nradii = [0.25]\nrandom_centers = 2\ncenters = []\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&cfg, &a, &[]).status.success());
    assert!(run(&cfg, &b, &[]).status.success());
    let read = |d: &Path| std::fs::read(d.join("hormander.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    // A different seed moves the random centres.
    let c = tmp.path().join("c");
    assert!(run(&cfg, &c, &["--seed", "5"]).status.success());
    assert_ne!(read(&a), read(&c));
}

#[test]
fn invalid_field_name_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "experiment = \"dini\"\n[grid]\nn = 64\n[field]\nname = \"nope\"\n",
    );
    let out_dir = tmp.path().join("out");
    let out = run(&cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("field.name"));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "experiment = \"dini\"\n[grid]\nn = 64\nsize = 3\n",
    );
    let out = run(&cfg, &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size"));
    let out = run(&tmp.path().join("missing.toml"), &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_check_exits_with_four_only_under_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "conv.toml",
        "experiment = \"convergence\"\n[grid]\nn = 64\n[params]\nsizes = [16, 32]\nmin_order = 5.0\n",
    );
    let out = run(&cfg, &tmp.path().join("a"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&cfg, &tmp.path().join("b"), &["--check"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = dinilab_cli::ExperimentConfig::load(&path).unwrap();
        config.validate().unwrap();
        dinilab_cli::prepare(&config).unwrap();
    }
}

#[test]
fn convergence_table_reports_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "conv.toml",
        "experiment = \"convergence\"\n[grid]\nn = 64\n[params]\nform = \"divergence\"\nsizes = [32, 64, 128]\n",
    );
    let out_dir = tmp.path().join("o");
    let out = run(&cfg, &out_dir, &["--check", "--threads", "1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "n,h,l2_error,order,config_hash"
    );
    assert_eq!(csv.lines().count(), 4);
}
