use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
}

fn defaults() -> String {
    let out = bin().arg("--print-defaults").output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

fn run(dir: &Path, cmd: &str, cfg: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg_path = dir.join(format!("{cmd}.toml"));
    fs::write(&cfg_path, cfg).unwrap();
    let out_dir = dir.join(format!("out-{cmd}"));
    let out = bin().arg(cmd).arg(&cfg_path).arg("--output-dir").arg(&out_dir).args(extra).output().unwrap();
    (out, out_dir)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn with(base: &str, pairs: &[(&str, &str)]) -> String {
    let mut s = base.to_string();
    for (a, b) in pairs {
        assert!(s.contains(a), "{a} not in config");
        s = s.replacen(a, b, 1);
    }
    s
}

/// Every CSV listed in the report parses back with the advertised schema.
fn check_tables(dir: &Path) {
    let r = report(dir);
    for t in r["tables"].as_array().unwrap() {
        let path = dir.join(t["file"].as_str().unwrap());
        let mut rd = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = rd.headers().unwrap().iter().map(str::to_string).collect();
        let cols: Vec<String> = serde_json::from_value(t["columns"].clone()).unwrap();
        assert_eq!(header, cols);
        let mut n = 0;
        for rec in rd.records() {
            let rec = rec.unwrap();
            assert_eq!(rec.len(), header.len());
            for (h, v) in header.iter().zip(rec.iter()) {
                if h.ends_with("_log") {
                    v.parse::<f64>().unwrap_or_else(|_| panic!("{}: column {h} value {v}", path.display()));
                }
            }
            n += 1;
        }
        assert_eq!(n, t["rows"].as_u64().unwrap() as usize);
    }
}

#[test]
fn print_defaults_is_a_valid_config() {
    let d = defaults();
    assert!(d.contains("length_L"));
    let dir = tempfile::tempdir().unwrap();
    let (out, o) = run(dir.path(), "spectrum", &d, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(o.join("parabolic.csv").exists() && o.join("hyperbolic.csv").exists());
    check_tables(&o);
}

#[test]
fn invalid_length_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("length_L = 1.0", "length_L = 0.0")]);
    let (out, _) = run(dir.path(), "spectrum", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length_L"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{}\n[hum2]\nx = 1\n", defaults());
    let (out, _) = run(dir.path(), "hum", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resonance_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("reaction_c = 0.0", "reaction_c = 9.869604401089358")]);
    let (out, o) = run(dir.path(), "spectrum", &cfg, &[]);
    assert!(out.status.success());
    let r = report(&o);
    assert_eq!(r["summary"]["resonant_modes"], serde_json::json!([1]));
    assert!(r["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("resonant")));
}

#[test]
fn zero_scan_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("reaction_c = 0.0", "reaction_c = 50.0")]);
    let (out, o) = run(dir.path(), "gamma-scan", &cfg, &["--gnuplot-stub"]);
    assert!(out.status.success());
    check_tables(&o);
    assert!(o.join("gamma-scan.gp").exists());
    let zeros = fs::read_to_string(o.join("zeros.csv")).unwrap();
    let rows: Vec<&str> = zeros.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let b: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
    assert!((b - 0.586).abs() < 0.005, "b = {b}");
    let first = fs::read(o.join("gamma_scan.csv")).unwrap();
    let (_, o2) = run(dir.path(), "gamma-scan", &cfg, &[]);
    assert_eq!(first, fs::read(o2.join("gamma_scan.csv")).unwrap());
}

#[test]
fn degenerate_profile_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("[gamma_scan]\nbeta0 = 1.0", "[gamma_scan]\nbeta0 = 0.0")]);
    let (out, o) = run(dir.path(), "gamma-scan", &cfg, &[]);
    assert!(out.status.success());
    assert!(report(&o)["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("degenerate")));
}

#[test]
fn lattice_scan_emits_mask() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("lattice = false", "lattice = true"), ("n_max = 2", "n_max = 6")]);
    let (out, o) = run(dir.path(), "gamma-scan", &cfg, &[]);
    assert!(out.status.success());
    check_tables(&o);
    let mask = fs::read_to_string(o.join("mask.csv")).unwrap();
    assert_eq!(mask.lines().count(), 1 + 49 * 49);
    assert!(mask.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn hum_demo_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("pairs = 1", "pairs = 3")]);
    let (out, o) = run(dir.path(), "hum", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    check_tables(&o);
    assert!(report(&o)["summary"]["max_relative_residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn ill_conditioned_exits_4_under_double_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("[hum]\nn_p = 3", "[hum]\nn_p = 8")]);
    let cfg_path = dir.path().join("ill.toml");
    fs::write(&cfg_path, &cfg).unwrap();
    let out = bin().arg("hum").arg(&cfg_path).arg("--output-dir").arg(dir.path().join("o")).env("CASCADE_PRECISION", "double").output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let out = bin().arg("hum").arg(&cfg_path).arg("--output-dir").arg(dir.path().join("o")).env("CASCADE_PRECISION", "quad").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noninv_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (out, o) = run(dir.path(), "noninv", &defaults(), &[]);
    assert!(out.status.success());
    let r = report(&o);
    assert!(r["summary"]["relative_deviation"].as_f64().unwrap() < 0.05);
    assert_eq!(r["summary"]["strictly_increasing"], serde_json::json!(true));
}

#[test]
fn constants_table_marks_short_horizons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with(&defaults(), &[("    16,\n    64,\n]", "    16,\n]")]);
    let (out, o) = run(dir.path(), "constants", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    check_tables(&o);
    let mut rd = csv::Reader::from_path(o.join("ingham_gap.csv")).unwrap();
    for rec in rd.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        let n: u32 = rec[2].parse().unwrap();
        let min_eig: f64 = rec[3].parse().unwrap();
        if n == 1 {
            assert!((min_eig - t).abs() < 1e-12 * t);
        }
        assert_eq!(&rec[8] == "no continuum meaning", t <= 2.0);
    }
}

fn hw_config(profile: &str) -> String {
    with(
        &defaults(),
        &[("variant = \"wave-heat\"", "variant = \"heat-wave\""), ("kind = \"constant\"\nbeta0 = 1.0", profile)],
    )
}

#[test]
fn hw_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("kind = \"constant\"\nbeta0 = 1.0", 3.0, false),
        ("kind = \"sampled\"\ngrid = [0.0, 1.0]\nvalues = [1.0, 0.0]", 4.0, false),
    ];
    for (prof, p, sup) in cases {
        let (out, o) = run(dir.path(), "hw", &hw_config(prof), &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        check_tables(&o);
        let s = &report(&o)["summary"];
        assert!((s["exponent_p"].as_f64().unwrap() - p).abs() < 0.3, "{s}");
        assert_eq!(s["super_polynomial"].as_bool().unwrap(), sup);
        assert!(s["hum_max_relative_residual"].as_f64().unwrap() <= 1e-6);
    }
    let cfg = hw_config("kind = \"indicator\"\nbeta0 = 1.0\na = 0.0\nb = 0.5");
    let (out, o) = run(dir.path(), "hw", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&o);
    assert_eq!(r["summary"]["super_polynomial"], serde_json::json!(true));
    assert!(r["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("faster than any power")));
}

#[test]
fn hw_requires_heat_wave_variant() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run(dir.path(), "hw", &defaults(), &[]);
    assert_eq!(out.status.code(), Some(2));
}
