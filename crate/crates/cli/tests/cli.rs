use std::path::Path;
use std::process::{Command, Output};

fn oneatom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneatom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses a CSV written by the tool into a header and numeric rows.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn sc_scan_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = oneatom(dir.path(), &["sc-scan", "--i3-grid", "0:8:0.5", "--f-grid", "1,100", "-o", "out/sc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("out/sc.csv"));
    assert_eq!(rows.len(), 34);
    assert!(rows.iter().all(|r| r.last().unwrap() == "ok"));
    let a = column(&h, &rows, "alpha2_over_n0f");
    assert!(a[0] < 1e-20);
    assert!(a.iter().cloned().fold(0.0, f64::max) > 0.5);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/sc.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "sc-scan");
    assert!(meta["summary"]["max_scaling_deviation"].as_f64().unwrap() < 1e-8);
    for key in ["code_version", "timestamp", "config", "parameters", "units", "outputs"] {
        assert!(meta.get(key).is_some(), "metadata lacks {key}");
    }
}

#[test]
fn q_scan_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["q-scan", "--i3-grid", "0.5,2,4", "--fock", "8", "--threads", "2"];
    for out in ["a", "b"] {
        let mut v = args.to_vec();
        v.extend(["-o", out]);
        let o = oneatom(dir.path(), &v);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let (h, rows) = read_csv(&dir.path().join("a.csv"));
    let n = column(&h, &rows, "n_bar");
    let q = column(&h, &rows, "Q");
    let g2 = column(&h, &rows, "g2_0");
    for k in 0..n.len() {
        assert!((q[k] - n[k] * (g2[k] - 1.0)).abs() < 1e-8);
    }
}

#[test]
fn purcell_limit_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let o = oneatom(dir.path(), &["q-scan", "--f", "0.0101", "--i3-grid", "3", "-o", "p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("p.csv"));
    assert!(column(&h, &rows, "g2_0")[0] < 1e-6);
    let r = column(&h, &rows, "R")[0];
    assert!((r - 93.8).abs() / 93.8 < 0.01, "R = {r}");
}

#[test]
fn rabi_scan_peaks_at_the_dressed_splitting() {
    let dir = tempfile::tempdir().unwrap();
    let o = oneatom(dir.path(), &["rabi-scan", "--I3", "0.1", "--delta3-grid", "-24:24:1", "-o", "r"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let maxima: Vec<f64> = meta["summary"]["local_maxima_MHz_by_height"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut top = maxima[..2].to_vec();
    top.sort_by(f64::total_cmp);
    assert!((top[0] + 16.0).abs() <= 1.0 && (top[1] - 16.0).abs() <= 1.0, "{maxima:?}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "experiment = \"q-scan\"\noutput = \"fromfile\"\n[params]\ni4 = 3.0\nfock_truncation = 6\n[grid]\ni3 = [1.0, 2.0]\n",
    )
    .unwrap();
    let o = oneatom(dir.path(), &["q-scan", "--config", "run.toml", "--i3-grid", "1.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("fromfile.csv"));
    assert_eq!(column(&h, &rows, "I3"), vec![1.5]);
    assert_eq!(column(&h, &rows, "truncation"), vec![6.0]);
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[params]\ni3 = 1.0\nI5 = 2.0\n").unwrap();
    let o = oneatom(dir.path(), &["q-scan", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("I5"), "{}", stderr(&o));

    std::fs::write(dir.path().join("grid.toml"), "[grid]\ni3 = { start = 2.0, stop = 1.0, step = 0.5 }\n").unwrap();
    let o = oneatom(dir.path(), &["q-scan", "--config", "grid.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.i3"), "{}", stderr(&o));

    let o = oneatom(dir.path(), &["q-scan", "--I4", "-1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = oneatom(dir.path(), &["rabi-scan", "--model", "zeeman"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));

    std::fs::write(dir.path().join("other.toml"), "experiment = \"sc-scan\"\n").unwrap();
    let o = oneatom(dir.path(), &["q-scan", "--config", "other.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_points_are_flagged_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // the mean-field flow has no stable fixed point here
    let o = oneatom(dir.path(), &["sc-scan", "--f", "0.1", "--i3-grid", "0.5,3", "-o", "s"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let (h, rows) = read_csv(&dir.path().join("s.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0].last().unwrap().starts_with("error:"));
    assert!(column(&h, &rows, "alpha2_over_n0f")[0].is_nan());
    assert_eq!(rows[1].last().unwrap(), "ok");
}

#[test]
fn trajectory_g2_reports_steady_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let o = oneatom(
        dir.path(),
        &[
            "g2", "--method", "trajectories", "--fock", "5", "--I3", "3", "--n-traj", "8", "--t-max", "4", "--seed", "5",
            "--bin-ns", "20", "-o", "g",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("g.coincidence.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g.json")).unwrap()).unwrap();
    let s = &meta["summary"];
    assert_eq!(s["runs"].as_array().unwrap().len(), 8);
    assert!(s["steady_comparison"]["n_bar"]["z"].as_f64().is_some());
}
