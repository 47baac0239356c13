//! Pinned fixtures. Run with `XPATCH_BLESS=1` to regenerate them.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use xpatch::report::plot::{prediction_chart, svg_chart, Series};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn blessing() -> bool {
    std::env::var_os("XPATCH_BLESS").is_some_and(|v| v == "1")
}

fn xpatch(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_xpatch"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .env_remove("XPATCH_SEED")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn check_or_bless(path: &Path, actual: &str) {
    if blessing() {
        std::fs::write(path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{} differs from the pinned copy", path.display());
}

fn lcg(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = (1664525 * state + 1013904223) % (1 << 32);
            state as f64 / 4294967296.0 - 0.5
        })
        .collect()
}

fn chart() -> String {
    let truth: Vec<f64> = (0..10).map(|t| (t as f64 * 0.7).sin()).collect();
    let pred: Vec<f64> = (0..10).map(|t| (t as f64 * 0.7).sin() * 0.8 + 0.05).collect();
    svg_chart(
        "golden <chart> & friends",
        &[
            Series {
                label: "truth",
                values: &truth,
            },
            Series {
                label: "prediction",
                values: &pred,
            },
        ],
        Some(4),
    )
    .unwrap()
}

#[test]
fn svg_chart_is_byte_identical() {
    check_or_bless(&fixtures().join("chart.svg"), &chart());
}

#[test]
fn svg_output_parses_as_xml() {
    for svg in [
        chart(),
        prediction_chart("window", &[1.0, 2.0, 3.0], &[3.5, 4.0], &[3.0, f64::NAN]).unwrap(),
    ] {
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline") || n.has_tag_name("path")));
    }
}

#[test]
fn empty_series_cannot_be_plotted() {
    assert!(svg_chart("x", &[Series { label: "a", values: &[] }], None).is_err());
}

fn bucket_columns(table: &str) -> Vec<String> {
    table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{},{},{}", f[0], f[1], f[3], f[4])
        })
        .collect()
}

#[test]
fn adf_fixtures_keep_their_p_buckets() {
    let walk: Vec<f64> = lcg(1440, 31)
        .iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect();
    let noise = lcg(1440, 99);
    for (name, series) in [("adf_noise", noise), ("adf_walk", walk)] {
        let csv = fixtures().join(format!("{name}.csv"));
        if blessing() {
            let body: String = series.iter().map(|v| format!("{v:.9}\n")).collect();
            std::fs::write(&csv, format!("value\n{body}")).unwrap();
        }
        let out = xpatch(&["adf", "--input", &format!("tests/fixtures/{name}.csv"), "--chunk-len", "480"]);
        let table = String::from_utf8(out.stdout).unwrap();
        let pinned = fixtures().join(format!("{name}.buckets.csv"));
        check_or_bless(&pinned, &(bucket_columns(&table).join("\n") + "\n"));
    }
}

#[test]
fn smoke_checkpoint_reproduces_pinned_report() {
    let dir = fixtures();
    if blessing() {
        common::write_synthetic_csv(&dir.join("synthetic.csv"), 600, 3, 2);
        let tmp = tempfile::tempdir().unwrap();
        let out_dir = tmp.path().display().to_string();
        xpatch(&[
            "train", "--data", "tests/fixtures/synthetic.csv", "--lookback", "32", "--horizon", "8",
            "--patch-len", "8", "--stride", "4", "--epochs", "2", "--batch-size", "16", "--lr", "0.001",
            "--seed", "1", "--out-dir", &out_dir,
        ]);
        for ext in ["bin", "json"] {
            std::fs::copy(tmp.path().join(format!("checkpoint.{ext}")), dir.join(format!("smoke.{ext}"))).unwrap();
        }
    }
    let out = xpatch(&["eval", "--checkpoint", "tests/fixtures/smoke", "--data", "tests/fixtures/synthetic.csv"]);
    check_or_bless(&dir.join("smoke_report.csv"), &String::from_utf8(out.stdout).unwrap());
}
