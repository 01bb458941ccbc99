use std::path::Path;
use std::process::{Command, Output};

use quasilin::forward::Preset;
use quasilin::mesh::build_grid;

fn quasilin(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasilin"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("report.txt")).expect("report written")
}

fn section<'a>(text: &'a str, name: &str) -> &'a str {
    let start = text.find(&format!("[{name}]")).expect("section present");
    let rest = &text[start..];
    let end = rest[1..].find("\n[").map_or(rest.len(), |i| i + 1);
    &rest[..end]
}

fn metric(text: &str, name: &str) -> f64 {
    section(text, "metrics")
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name} = ")))
        .unwrap_or_else(|| panic!("metric {name} missing"))
        .parse()
        .unwrap()
}

#[test]
fn verify_manufactured_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(
        &["verify", "--grid-n", "33", "--preset", "manufactured"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let text = report(dir.path());
    let verdicts = section(&text, "verdicts");
    for name in [
        "adjoint_order",
        "gauge_conjugation_order",
        "gauge_conjugation_identity",
        "magnetic_consistency",
    ] {
        assert!(verdicts.contains(&format!("{name} = PASS")), "{verdicts}");
    }
    assert!(!verdicts.contains("FAIL"));
    assert!(metric(&text, "adjoint_gap") > 0.0);
}

#[test]
fn linear_gauge_demo_reproduces_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(&["gauge-demo", "--linear"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = report(dir.path());
    assert!(metric(&text, "dn_discrepancy") <= 10.0 * metric(&text, "floor_order0"));
    assert!(text.contains("counterexample_equality = PASS"));
    assert!(dir.path().join("phi.csv").exists());
    assert!(dir.path().join("source_shift.csv").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(&["reconstruct"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = quasilin(&["forward", "--eps", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps"));

    let o = quasilin(&["forward", "--grid-n", "abc"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = quasilin(
        &["forward", "--sigma-csv", "/nonexistent/sigma.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fields.sigma"));
    assert!(!dir.path().join("report.txt").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "grid_n = 65\nseed = 11\npreset = \"constant\"\n").unwrap();
    let out = dir.path().join("out");
    let o = quasilin(
        &[
            "forward",
            "--config",
            cfg.to_str().unwrap(),
            "--grid-n",
            "17",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    let prov = report(&out);
    let prov = section(&prov, "provenance");
    assert!(prov.contains("config.grid_n = 17"), "{prov}");
    assert!(prov.contains("config.seed = 11"), "{prov}");
    assert!(prov.contains("config.preset = constant"), "{prov}");

    std::fs::write(&cfg, "grid_n = \"large\"\n").unwrap();
    let o = quasilin(&["forward", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid_n"));
}

#[test]
fn metrics_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["verify", "--grid-n", "17", "--seed", "3"];
    assert_eq!(quasilin(&args, a.path()).status.code(), Some(0));
    assert_eq!(quasilin(&args, b.path()).status.code(), Some(0));
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_eq!(section(&ra, "metrics"), section(&rb, "metrics"));
    assert_eq!(section(&ra, "verdicts"), section(&rb, "verdicts"));
}

#[test]
fn csv_coefficients_match_preset() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_grid(17).unwrap();
    let set = Preset::Affine.build(&g);
    let sigma = dir.path().join("sigma.csv");
    std::fs::write(&sigma, set.sigma.to_csv_string()).unwrap();
    let (p, c) = (dir.path().join("preset"), dir.path().join("csv"));
    let base = ["forward", "--grid-n", "17", "--preset", "affine"];
    assert_eq!(quasilin(&base, &p).status.code(), Some(0));
    let mut with_csv = base.to_vec();
    with_csv.extend(["--sigma-csv", sigma.to_str().unwrap()]);
    assert_eq!(quasilin(&with_csv, &c).status.code(), Some(0));
    assert_eq!(
        section(&report(&p), "metrics"),
        section(&report(&c), "metrics")
    );
    assert!(c.join("u0.csv").exists());
}

#[test]
fn module_failure_is_a_fail_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(
        &["forward", "--grid-n", "17", "--tol", "1e-300"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let text = report(dir.path());
    assert!(
        text.contains("error = FAIL ; newton did not converge"),
        "{text}"
    );
}

#[test]
fn cgo_probe_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(
        &["cgo-probe", "--preset", "affine", "--tau", "4,8,1000"],
        dir.path(),
    );
    let text = report(dir.path());
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("resolution = INDETERMINATE"), "{text}");
    assert!(text.contains("probe_convergence = PASS"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("cgo_probe.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,re_d,im_d,re_p,im_p,remainder_sup"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn recon_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    let o = quasilin(
        &[
            "recon", "--grid-n", "17", "--preset", "affine", "--tau", "10",
        ],
        dir.path(),
    );
    let text = report(dir.path());
    assert_eq!(o.status.code(), Some(0), "{text}");
    for f in ["r1.csv", "r2.csv", "det_m.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(text.contains("det_m_identity = PASS"));
    assert!(text.contains("probe_delta = 1e-6"));
}
