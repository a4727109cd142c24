use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ergoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergoflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ergoflow-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

const SHIFT: &[&str] = &[
    "entropy",
    "--system",
    "shift2-suspension",
    "--method",
    "section-sep",
    "--gamma",
    "0.2",
    "--n-max",
    "8",
];

#[test]
fn shift_entropy_to_stdout() {
    let o = ergoflow(SHIFT);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,count,log_count");
    assert_eq!(rows.len(), 8);
    let summary = text
        .lines()
        .find_map(|l| l.strip_prefix("# summary = "))
        .unwrap();
    let v: Value = serde_json::from_str(summary).unwrap();
    let slope = v["result"]["slope"].as_f64().unwrap();
    assert!((slope - 2f64.ln()).abs() < 0.07, "slope {slope}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("wall"));
}

#[test]
fn out_files_repeat_exactly() {
    let d = scratch("repeat");
    let runs = [d.join("a"), d.join("b")];
    for dir in &runs {
        std::fs::create_dir_all(dir).unwrap();
        let mut args = vec!["--out", "shift.csv"];
        args.extend_from_slice(SHIFT);
        let o = Command::new(env!("CARGO_BIN_EXE_ergoflow"))
            .current_dir(dir)
            .args(&args)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["shift.csv", "shift.json"] {
        assert_eq!(
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn config_file_and_rejections() {
    let d = scratch("config");
    let good = d.join("good.conf");
    std::fs::write(
        &good,
        "system = shift2-suspension\nmethod = section-sep\ngamma = 0.2\nn_max = 5\n",
    )
    .unwrap();
    let o = ergoflow(&["--config", good.to_str().unwrap(), "entropy"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("# n-max = 5"));

    let dup = d.join("dup.conf");
    std::fs::write(&dup, "system = cat-suspension\ngamma = 0.1\ngamma = 0.2\n").unwrap();
    let o = ergoflow(&["--config", dup.to_str().unwrap(), "entropy"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lines 2 and 3"));

    let o = ergoflow(&[
        "entropy",
        "--system",
        "cat-suspension",
        "--method",
        "section-sep",
        "--gamma",
        "-1",
        "--n-max",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn validate_and_witness() {
    let o = ergoflow(&[
        "sections",
        "validate",
        "--system",
        "cat-suspension",
        "--delta",
        "0.32",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["result"]["patches"], 100);

    let o = ergoflow(&[
        "witness",
        "--system",
        "cat-suspension",
        "--m",
        "4",
        "--delta1",
        "0.05",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["tree"]["leaves"].as_array().unwrap().len(), 16);
    assert_eq!(v["result"]["verification"]["pairs_checked"], 120);
}

#[test]
fn metric_of_equal_points() {
    let o = ergoflow(&[
        "suspend",
        "metric",
        "--system",
        "cat-suspension",
        "--x",
        "0.1,0.2,0.3",
        "--y",
        "0.1,0.2,0.3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["distance"], 0.0);
}
