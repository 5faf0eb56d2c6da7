use std::path::Path;
use std::process::{Command, Output};

fn kinship(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinship"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = kinship(&["synth", "--families", "4", "--seed", "7", "--size", "64x80", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 4 * 2 + 1);
    assert_eq!(files, dir_bytes(&b));
    let manifest = std::fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert!(manifest.contains("fam3_parent.png,fam3_child.png,3"));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let one_family = kinship(&["synth", "--families", "1", "--out", out]);
    assert_eq!(one_family.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&one_family.stderr).contains("at least 2 families"));

    assert_eq!(kinship(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(kinship(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.csv");
    let o = kinship(&["extract", "--manifest", missing.to_str().unwrap(), "--output-dir", out]);
    assert_eq!(o.status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[txqda]\nd_sweep = [0]\n").unwrap();
    let o = kinship(&["run-all", "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_all_then_report_rerenders_same_text() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"output_dir = "out"
methods = ["retinex+mask"]

[dataset.synthetic]
n_families = 9
image_size = [96, 96]

[txqda]
d_sweep = [10, 30]

[eval]
k = 3
"#,
    )
    .unwrap();
    let o = kinship(&["run-all", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("Retinex filter + Elliptical mask"));
    assert!(text.contains("n_families = 9"));

    let o = kinship(&["report", "--csv", out.join("report.csv").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
}

#[test]
fn preprocess_writes_debug_stages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(kinship(&["synth", "--families", "2", "--out", data.to_str().unwrap()]).status.success());
    let out = dir.path().join("face.png");
    let debug = dir.path().join("debug");
    let o = kinship(&[
        "preprocess",
        "--input",
        data.join("fam0_parent.png").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--method",
        "retinex+mask",
        "--debug",
        debug.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let img = image::open(&out).unwrap();
    assert_eq!((img.width(), img.height()), (126, 115));
    assert_eq!(std::fs::read_dir(&debug).unwrap().count(), 3);
}
