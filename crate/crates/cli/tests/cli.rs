use std::process::Command;

fn fens() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fens"))
}

#[test]
fn validation_errors_exit_with_status_two_and_name_the_field() {
    let out = fens().args(["show-config", "--set", "attack.radius=-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("attack.radius"));

    let out = fens().args(["train", "--set", "train.bogus=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.bogus"));
}

#[test]
fn missing_models_are_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fens()
        .args(["attack", "--out"])
        .arg(dir.path())
        .args(["--set", "dataset.per_class=2", "--set", "dataset.test_per_class=2", "--set", "dataset.size=16"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fens train"));
}

#[test]
fn flags_map_onto_the_configuration() {
    let out = fens()
        .args(["show-config", "--eps", "0,4", "--bpda", "adjoint", "--seed", "7", "--tag", "x", "--out", "somewhere"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg["seed"].as_integer(), Some(7));
    assert_eq!(cfg["tag"].as_str(), Some("x"));
    assert_eq!(cfg["out_dir"].as_str(), Some("somewhere"));
    assert_eq!(cfg["attack"]["bpda"].as_str(), Some("adjoint"));
    assert_eq!(cfg["eval"]["epsilons"].as_array().unwrap().len(), 2);
}

#[test]
fn end_to_end_on_a_tiny_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "--set", "dataset.per_class=6", "--set", "dataset.test_per_class=3", "--set", "dataset.size=8",
        "--set", "train.epochs_per_rate=1", "--set", "noise.num_images=6", "--set", "noise.samples_per_image=2",
        "--set", "eval.images=6", "--set", "certify.images=3", "--set", "gaussian.count=3",
        "--set", "filters=[{name=\"identity\",filter={kind=\"identity\"}},{name=\"discretize\",filter={kind=\"discretize\"}},{name=\"lowpass\",filter={kind=\"lowpass\",sigma=2.0}},{name=\"octree16\",filter={kind=\"octree\",max_colors=16,depth=7}},{name=\"highpass\",filter={kind=\"highpass\",sigma=2.0}},{name=\"grayscale\",filter={kind=\"grayscale\"}}]",
        "--eps", "0,8",
    ];
    for cmd in ["train", "correlate", "attack", "transfer", "ensemble-eval", "certify"] {
        let out = fens().arg(cmd).arg("--out").arg(dir.path()).args(common).output().unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(dir.path().join(format!("{cmd}_run.csv"))).unwrap();
        assert!(csv.starts_with(&format!("# fens {cmd} config_sha256=")));
        assert!(dir.path().join(format!("{cmd}_run.toml")).exists());
    }
    let certify = std::fs::read_to_string(dir.path().join("certify_run.csv")).unwrap();
    let table = fens_cli::output::Table::parse(&certify);
    for row in table.rows.iter().filter(|r| r[2] == "single") {
        let (m, l, r): (f64, f64, f64) = (row[4].parse().unwrap(), row[5].parse().unwrap(), row[6].parse().unwrap());
        let expect = if m > 0.0 { m / (2f64.sqrt() * l) } else { 0.0 };
        assert!((r - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}
