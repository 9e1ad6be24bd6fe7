use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gzsl"))
        .args(args)
        .output()
        .unwrap()
}

fn synth(dir: &Path) -> String {
    let path = dir.join("data.gzb").display().to_string();
    let out = gzsl(&["synth", "--output", &path, "--per-class", "40"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = gzsl(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(gzsl(&[]).status.code(), Some(1));
}

#[test]
fn missing_dataset_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out").display().to_string();
    let out = gzsl(&[
        "evaluate",
        "--dataset",
        "/nonexistent/data.gzb",
        "--out",
        &out_dir,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_threshold_order_names_the_rule() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "beta_in = 0.3\nbeta_out = 0.5\n").unwrap();
    let out = gzsl(&[
        "evaluate",
        "--dataset",
        &data,
        "--config",
        conf.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta_out <= beta_in"));
}

#[test]
fn synth_then_ablate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out_dir = dir.path().join("run");
    let out = gzsl(&[
        "ablate",
        "--dataset",
        &data,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let table = fs::read_to_string(out_dir.join("ablation_table.txt")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].contains("ts") && rows[0].contains("tr") && rows[0].contains('H'));
    for (row, mode) in
        rows[1..]
            .iter()
            .zip(["baseline ", "baseline+CS", "baseline+DS ", "baseline+DS+CS"])
    {
        assert!(row.starts_with(mode), "{row}");
    }
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
    let effective = fs::read_to_string(out_dir.join("config.effective.txt")).unwrap();
    assert!(effective.contains("dataset = ") && effective.contains("gamma = 1.5"));
    assert!(out_dir.join("checkpoints/classifier.gzcl").is_file());
}

#[test]
fn reports_are_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = |name: &str, workers: &str| {
        let out_dir = dir.path().join(name);
        let out = gzsl(&[
            "ablate",
            "--dataset",
            &data,
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(out.status.success());
        fs::read(out_dir.join("ablation.txt")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
}

#[test]
fn checkpoints_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let trained = dir.path().join("trained");
    let t = trained.to_str().unwrap();
    assert!(gzsl(&["train", "--dataset", &data, "--out", t])
        .status
        .success());
    assert!(gzsl(&["evaluate", "--dataset", &data, "--out", t])
        .status
        .success());
    let resumed = dir.path().join("resumed");
    let ckpt = trained.join("checkpoints").display().to_string();
    let out = gzsl(&[
        "evaluate",
        "--dataset",
        &data,
        "--out",
        resumed.to_str().unwrap(),
        "--checkpoints",
        &ckpt,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(trained.join("report.txt")).unwrap(),
        fs::read(resumed.join("report.txt")).unwrap()
    );
}

#[test]
fn segment_roc_and_histograms_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out_dir = dir.path().join("o");
    let o = out_dir.to_str().unwrap();
    for cmd in ["segment", "roc", "histograms"] {
        let out = gzsl(&[cmd, "--dataset", &data, "--out", o, "--set", "bins=10"]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let seg = fs::read_to_string(out_dir.join("segmentation.csv")).unwrap();
    assert!(seg.starts_with("instance_index,true_origin,assigned_domain,h_c1,P_c1\n"));
    assert!(fs::read_to_string(out_dir.join("roc.csv"))
        .unwrap()
        .starts_with("threshold,fpr,tpr\n"));
    let conf = fs::read_to_string(out_dir.join("confidence_histograms.csv")).unwrap();
    assert_eq!(conf.lines().count(), 11);
    assert!(conf.starts_with("bin_lo,bin_hi,seen,unseen\n"));
    assert!(out_dir.join("distance_histograms.csv").is_file());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = gzsl(&["evaluate", "--dataset", &data, "--set", "colour=blue"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));
}
