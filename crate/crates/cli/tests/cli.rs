use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperangle"))
        .args(args)
        .env_remove("HYPERANGLE_THREADS")
        .output()
        .expect("spawn hyperangle")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn lorentz_gen_small_orbit() {
    let o = run(&["orbit", "gen", "--backend", "lorentz", "--n", "2", "--q", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("#hyperangle orbit v1 n=2 "));
    assert!(text.lines().next().unwrap().contains("veff=na"));
    assert_eq!(data_rows(&text).len(), 5);
}

#[test]
fn psl2z_header() {
    let o = run(&["orbit", "gen", "--backend", "psl2z", "--q", "5"]);
    assert!(o.status.success());
    let head = stdout(&o).lines().next().unwrap().to_string();
    assert!(head.contains("veff=na") && head.contains("w=2") && head.contains("source=psl2z"), "{head}");
}

#[test]
fn bad_dimension_is_usage_error() {
    let o = run(&["orbit", "gen", "--backend", "lorentz", "--n", "1", "--q", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_covolume_and_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("o.txt");
    let o = run(&["orbit", "gen", "--backend", "psl2z", "--q", "5", "-o", p.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&["paircorr", "--orbit", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "#hyperangle orbit v1 n=2 q=1 veff=1 w=1 source=file\n").unwrap();
    let o = run(&["paircorr", "--orbit", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_is_io_error() {
    let o = run(&["orbit", "info", "/nonexistent/orbit.txt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["paircorr", "--backend", "psl2z", "--q", "40", "--calibrate", "--xi", "0.5,1,2"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "t = \"2\"\nxi = [1.0]\n").unwrap();
    let o = run(&["volume-check", "--q", "30", "--t", "1,3", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("2,30.000000000000000,2.0000000000000000,1.0000000000000000,"), "{}", rows[1]);
}

#[test]
fn volume_check_ratio_near_one() {
    let o = run(&["volume-check", "--q", "50", "--t", "1", "--xi", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = data_rows(&text)[1];
    let ratio: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!((ratio - 1.0).abs() < 1e-3, "{ratio}");
}

#[test]
fn synthetic_recovery() {
    let o = run(&["spectrum-recover", "--synthetic", "0.9624:4,1.7627:4,1.9248:4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let dt: f64 = r.split(',').nth(5).unwrap().parse().unwrap();
        assert!(dt < 1e-6, "{r}");
    }
}

#[test]
fn output_file_and_info_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.txt");
    let o = run(&[
        "orbit", "gen", "--backend", "lorentz", "--n", "3", "--q", "6", "--veff", "3.5", "-o",
        p.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(Path::new(&p).exists());
    let o = run(&["orbit", "info", p.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(text.contains("\nveff,3.5000000000000000\n"), "{text}");
    assert!(text.contains("\nn,3\n"));
}

#[test]
fn plot_f_rows() {
    let o = run(&["density", "plot-f", "--fix", "l=1", "--range", "0.1:3", "--points", "5"]);
    assert!(o.status.success());
    assert_eq!(data_rows(&stdout(&o)).len(), 6);
    let o = run(&["density", "plot-f", "--fix", "z=1"]);
    assert_eq!(o.status.code(), Some(2));
}
