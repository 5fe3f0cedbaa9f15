use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn liftsap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftsap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = liftsap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, n: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    ok(&["generate", "--kind", "linear", "--instances", n, "--features", "3", "--labels", "3", "--output", s(&p)]);
    p
}

#[test]
fn run_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "lin.txt", "50");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        ok(&[
            "run", "--dataset", s(&data), "--trials", "2", "--weights", "grid:0.5",
            "--out", s(out), "--workers", workers,
        ]);
    }
    for f in ["summary.csv", "summary.json", "trials.csv", "plot.csv"] {
        let x = fs::read_to_string(a.join(f)).unwrap();
        assert_eq!(x, fs::read_to_string(b.join(f)).unwrap(), "{f} differs");
    }
    // manifests differ only in the output directory they record
    let manifest = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        v["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(manifest(&a), manifest(&b));
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("# config_hash="));
    assert_eq!(summary.lines().filter(|l| l.starts_with("lin,D,")).count(), 6);
    let plot = fs::read_to_string(a.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().nth(1), Some("dataset,variant,metric,trial,value"));
    assert_eq!(plot.lines().count(), 2 + 2 * 6);
    assert!(a.join("timings.json").exists());
}

#[test]
fn ablation_writes_four_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "lin.txt", "60");
    let out = dir.path().join("ab");
    ok(&["ablate", "--dataset", s(&data), "--trials", "1", "--weights", "grid:0.5", "--out", s(&out)]);
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().nth(1), Some("dataset,metric,A,B,C,D"));
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').count() == 6 && !r.contains(",,")));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "lin.txt", "40");
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("o");
    fs::write(
        &cfg,
        format!(
            r#"{{"datasets": ["{}"], "trials": 5, "variant": "A", "out": "{}"}}"#,
            s(&data),
            s(&out)
        ),
    )
    .unwrap();
    ok(&["run", "--config", s(&cfg), "--trials", "1"]);
    let trials = fs::read_to_string(out.join("trials.csv")).unwrap();
    let rows: Vec<&str> = trials.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("lin,A,0,0,1,0,0,"));
}

#[test]
fn stats_on_the_toy_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scores.csv");
    let mut text = String::from("dataset,algorithm,metric,mean\n");
    for (d, row) in [[0.1, 0.2, 0.3], [0.2, 0.1, 0.3], [0.1, 0.2, 0.3]].iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            text.push_str(&format!("d{d},a{a},kl,{v}\n"));
        }
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("st");
    let stdout = ok(&["stats", "--input", s(&input), "--cv", "6.94", "--out", s(&out)]);
    assert_eq!(stdout.lines().count(), 1);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let f = json[0]["f_f"]["value"].as_f64().unwrap();
    assert!((f - 7.0).abs() < 1e-4);
    assert!((json[0]["chi_sq"].as_f64().unwrap() - 4.6667).abs() < 1e-4);
}

#[test]
fn stats_header_carries_the_critical_difference() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scores.csv");
    let mut text = String::from("dataset,algorithm,metric,mean\n");
    for d in 0..15 {
        for a in 0..8 {
            let v = ((d * 7 + a * 3) % 11) as f64 / 10.0 + a as f64 * 0.01;
            text.push_str(&format!("d{d},alg{a},chebyshev,{v}\n"));
        }
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("st");
    ok(&["stats", "--input", s(&input), "--cv", "2.0", "--q-alpha", "3.0310", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert!(csv.starts_with("# cd=2.7110"), "{csv}");
}

#[test]
fn missing_score_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scores.csv");
    fs::write(&input, "dataset,algorithm,metric,mean\nd0,a,kl,0.1\nd0,b,kl,0.2\nd1,a,kl,0.3\n").unwrap();
    let out = liftsap(&["stats", "--input", s(&input), "--cv", "1.0", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing score"));
}

#[test]
fn convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "lin.txt", "10");
    let csv = dir.path().join("lin.csv");
    let back = dir.path().join("back.txt");
    ok(&["convert", "--input", s(&data), "--output", s(&csv)]);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("f1,f2,f3,y1,y2,y3\n"));
    ok(&["convert", "--input", s(&csv), "--output", s(&back)]);
    assert_eq!(fs::read_to_string(&data).unwrap(), fs::read_to_string(&back).unwrap());
}

#[test]
fn unknown_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "lin.txt", "20");
    let out = liftsap(&["run", "--dataset", s(&data), "--variant", "E", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("variant"));
}
