//! Exit-code contract: 0 success, 1 usage error, 2 data error.

use std::process::Command;

fn run(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_subtext"))
        .args(args)
        .output()
        .expect("spawn subtext");
    (out.status.code(), String::from_utf8_lossy(&out.stderr).to_string())
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _) = run(&["analyze", "--gt", "x", "--det", "y", "--bogus"]);
    assert_eq!(code, Some(1));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _) = run(&["frobnicate"]);
    assert_eq!(code, Some(1));
}

#[test]
fn bad_threshold_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("img.txt");
    std::fs::write(&gt, "0,0,10,0,10,5,0,5,Latin,hello\n").unwrap();
    let det = dir.path().join("det.txt");
    std::fs::write(&det, "0,0,10,0,10,5,0,5,0.9\n").unwrap();
    let (code, stderr) = run(&[
        "analyze",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
        "--thresholds",
        "0.8,0.5",
    ]);
    assert_eq!(code, Some(1), "stderr: {stderr}");
    assert!(stderr.contains("strictly increasing"));
}

#[test]
fn invalid_beta_is_a_usage_error() {
    let (code, _) = run(&["analyze", "--gt", "x", "--det", "y", "--beta", "1.5"]);
    assert_eq!(code, Some(1));
}

#[test]
fn missing_input_is_a_data_error() {
    let (code, stderr) = run(&["analyze", "--gt", "/no/such/dir", "--det", "/no/such/dir"]);
    assert_eq!(code, Some(2), "stderr: {stderr}");
}

#[test]
fn nms_on_directory_without_out_dir_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("img.txt"), "0,0,10,0,10,5,0,5,0.9\n").unwrap();
    let (code, _) = run(&["nms", "--det", dir.path().to_str().unwrap()]);
    assert_eq!(code, Some(1));
}

#[test]
fn help_exits_zero() {
    let (code, _) = run(&["--help"]);
    assert_eq!(code, Some(0));
}

#[test]
fn malformed_lines_warn_but_do_not_fail() {
    let dir = tempfile::tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let det_dir = dir.path().join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();
    std::fs::write(
        gt_dir.join("img.txt"),
        "0,0,100,0,100,20,0,20,Latin,hello\nnot a record\n",
    )
    .unwrap();
    std::fs::write(det_dir.join("img.txt"), "0,0,100,0,100,18,0,18,0.9\n").unwrap();
    let (code, stderr) = run(&[
        "analyze",
        "--gt",
        gt_dir.to_str().unwrap(),
        "--det",
        det_dir.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(stderr.contains("warning"));
    assert!(stderr.contains(":2:"));
}

#[test]
fn analyze_writes_csv_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let gt_dir = dir.path().join("gt");
    let det_dir = dir.path().join("det");
    std::fs::create_dir_all(&gt_dir).unwrap();
    std::fs::create_dir_all(&det_dir).unwrap();
    std::fs::write(gt_dir.join("img.txt"), "0,0,100,0,100,20,0,20,Latin,hi\n").unwrap();
    std::fs::write(det_dir.join("img.txt"), "0,0,100,0,100,18,0,18,0.9\n").unwrap();
    let csv = dir.path().join("sweep.csv");
    let (code, stderr) = run(&[
        "analyze",
        "--gt",
        gt_dir.to_str().unwrap(),
        "--det",
        det_dir.to_str().unwrap(),
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, Some(0), "stderr: {stderr}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("threshold,precision,recall,hmean"));
    assert_eq!(lines.count(), 4);
}
