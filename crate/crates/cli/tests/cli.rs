use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qstat_core::algebra::{ghz_state, DensityOperator, HermitianOperator};
use qstat_core::doc::{DocKind, Document, StateSpec};
use qstat_core::gme::GmeCertificate;
use qstat_core::model::CountData;
use qstat_core::tomo::white_noise_weight;
use serde_json::Value;
use tempfile::{tempdir, TempDir};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn qstat() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qstat"));
    cmd.env_remove("QSTAT_SEED").env("SOURCE_DATE_EPOCH", "1700000000");
    cmd
}

fn run(args: &[&str]) -> Output {
    qstat().args(args).output().expect("qstat runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn payload(path: &Path) -> Value {
    Document::read(path).unwrap().payload
}

fn write_state(dir: &TempDir, name: &str, spec: &StateSpec) -> PathBuf {
    let path = dir.path().join(name);
    let doc = Document::new(DocKind::State, spec, qstat_core::doc::Provenance::now(None)).unwrap();
    doc.write(&path).unwrap();
    path
}

#[test]
fn systest_compatible_data_exits_zero() {
    let dir = tempdir().unwrap();
    let counts = dir.path().join("counts.json");
    let out = run(&["--seed", "3", "sample", p(&fixture("pauli1.json")), p(&fixture("mixed1.json")), "--shots", "1000", "--out", p(&counts)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let report = dir.path().join("report.json");
    let out = run(&["systest", p(&fixture("pauli1.json")), p(&counts), "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = Document::read(&report).unwrap();
    assert_eq!(doc.kind, DocKind::Report);
    assert_eq!(doc.payload["verdict"], "compatible");
    assert_eq!(doc.provenance.seed, Some(0));
    assert_eq!(doc.provenance.timestamp, Some(1_700_000_000));
}

#[test]
fn tilted_axes_fixture_exits_two() {
    let dir = tempdir().unwrap();
    let counts = dir.path().join("tilted_counts.json");
    let out = run(&["--seed", "5", "sample", p(&fixture("tilted15.json")), p(&fixture("tilt_source.json")), "--shots", "10000", "--out", p(&counts)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run(&["--seed", "9", "systest", p(&fixture("pauli1.json")), p(&counts), "--alpha", "0.01"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let doc = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(doc.payload["verdict"], "incompatible");
    assert!(doc.payload["p_value"].as_f64().unwrap() <= 0.01);
}

#[test]
fn missing_setting_is_a_data_error_without_verdict() {
    let out = run(&["systest", p(&fixture("pauli1.json")), p(&fixture("missing_setting.json"))]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains("missing_setting.json"), "{}", stderr(&out));
}

#[test]
fn malformed_documents_report_location() {
    let out = run(&["systest", p(&fixture("broken_syntax.json")), p(&fixture("exact_counts.json"))]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
    let err = stderr(&out);
    assert!(err.contains("broken_syntax.json") && err.contains("line 5"), "{err}");

    let out = run(&["systest", p(&fixture("pauli1.json")), p(&fixture("negative_count.json"))]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("payload.settings[0].counts"), "{err}");

    // A state where a model belongs.
    let out = run(&["systest", p(&fixture("ghz3.json")), p(&fixture("exact_counts.json"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("expected a model document"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["systest"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["tomo", "a", "b", "--estimator", "bayes"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn lin_on_exact_frequencies_recovers_source() {
    let dir = tempdir().unwrap();
    let est = dir.path().join("est.json");
    let out = run(&["tomo", p(&fixture("pauli1.json")), p(&fixture("exact_counts.json")), "--out", p(&est)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let spec: StateSpec = Document::read(&est).unwrap().decode(DocKind::State).unwrap();
    let StateSpec::Density { estimate: Some(info), .. } = &spec else { panic!("{spec:?}") };
    assert_eq!(info.estimator, "lin");
    assert!(info.is_physical);
    let source: StateSpec = Document::read(&fixture("exact_source.json")).unwrap().decode(DocKind::State).unwrap();
    let diff = spec.to_density().unwrap().operator().max_abs_diff(source.to_density().unwrap().operator());
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn ml_output_is_physical() {
    let dir = tempdir().unwrap();
    let counts = dir.path().join("counts.json");
    // Few shots on a nearly pure state push linear inversion outside the state space.
    let psi = ghz_state(2);
    let src = write_state(&dir, "src.json", &StateSpec::pure(&psi));
    run(&["--seed", "1", "sample", p(&fixture("pauli2.json")), p(&src), "--shots", "10", "--out", p(&counts)]);

    let lin = dir.path().join("lin.json");
    let ml = dir.path().join("ml.json");
    assert_eq!(code(&run(&["tomo", p(&fixture("pauli2.json")), p(&counts), "--out", p(&lin)])), 0);
    let out = run(&["tomo", p(&fixture("pauli2.json")), p(&counts), "--estimator", "ml", "--out", p(&ml)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(payload(&lin)["estimate"]["is_physical"], false);
    let est = payload(&ml);
    assert_eq!(est["estimate"]["is_physical"], true);
    assert!(est["estimate"]["min_eigenvalue"].as_f64().unwrap() >= -1e-12);
    let spec: StateSpec = Document::read(&ml).unwrap().decode(DocKind::State).unwrap();
    assert!(spec.to_density().is_ok());
}

#[test]
fn fidelity_bound_sits_below_plug_in_estimate() {
    let dir = tempdir().unwrap();
    let src = write_state(
        &dir,
        "noisy_ghz4.json",
        &StateSpec::density(&qstat_core::algebra::noisy_pure_state(&ghz_state(4), white_noise_weight(0.8, 4)).unwrap()),
    );
    let counts = dir.path().join("counts.json");
    let out = run(&["--seed", "11", "sample", p(&fixture("pauli4.json")), p(&src), "--shots", "100", "--out", p(&counts)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let c: CountData = Document::read(&counts).unwrap().decode(DocKind::Counts).unwrap();
    assert_eq!(c.settings.len(), 81);
    assert_eq!(c.total_shots(), 8100);

    let report = dir.path().join("fid.json");
    let est = dir.path().join("est.json");
    let out = run(&[
        "tomo", p(&fixture("pauli4.json")), p(&counts), "--target-state", p(&fixture("ghz4.json")),
        "--alpha", "0.05", "--out", p(&est), "--report", p(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = payload(&report);
    let b = &r["fidelity_bound"];
    let (f, lower) = (b["estimate"].as_f64().unwrap(), b["lower"].as_f64().unwrap());
    assert!(lower < f, "{lower} {f}");
    assert!(b["epsilon"].as_f64().unwrap() > 0.0);
    assert!((f - r["estimate_fidelity"].as_f64().unwrap()).abs() < 1e-9);
    assert!((f - 0.8).abs() < 0.05, "{f}");
}

#[test]
fn incomplete_model_names_missing_directions() {
    let out = run(&["tomo", p(&fixture("z_only.json")), p(&fixture("exact_counts.json"))]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("incomplete") && err.contains('x') && err.contains('y'), "{err}");
}

#[test]
fn ghz3_is_certified_and_reverified() {
    let dir = tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = run(&["gme", "--state", p(&fixture("ghz3.json")), "--out", p(&cert)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let c: GmeCertificate = Document::read(&cert).unwrap().decode(DocKind::Certificate).unwrap();
    assert!((c.value + 0.5).abs() < 1e-4, "{}", c.value);
    assert_eq!(c.decompositions.len(), 3);

    let check = dir.path().join("check.json");
    let out = run(&["gme", "--verify", p(&cert), "--state", p(&fixture("ghz3.json")), "--out", p(&check)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = payload(&check);
    assert_eq!(r["passed"], true);
    assert!((r["recomputed_value"].as_f64().unwrap() - c.value).abs() < 1e-6);

    // Identical inputs give byte-identical certificates.
    let again = dir.path().join("again.json");
    run(&["gme", "--state", p(&fixture("ghz3.json")), "--out", p(&again)]);
    assert_eq!(fs::read(&cert).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    run(&["gme", "--state", p(&fixture("ghz3.json")), "--out", p(&cert)]);
    let mut doc = Document::read(&cert).unwrap();
    let mut c: GmeCertificate = doc.decode(DocKind::Certificate).unwrap();
    c.witness.add_scaled(&HermitianOperator::identity(3), -0.1);
    doc.payload = serde_json::to_value(&c).unwrap();
    doc.write(&cert).unwrap();
    let out = run(&["gme", "--verify", p(&cert)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("failed verification"));
}

#[test]
fn maximally_mixed_is_a_ppt_mixture() {
    let out = run(&["gme", "--state", p(&fixture("mixed3.json"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(doc.payload["verdict"], "ppt_mixture");
    assert!(doc.payload["value"].as_f64().unwrap() >= -1e-6);
}

#[test]
fn stabilizer_expectations_certify_ghz3() {
    let out = run(&["gme", "--expectations", p(&fixture("ghz3_stabilizers.json"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let doc = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(doc.payload["value"].as_f64().unwrap() < -0.49);
}

#[test]
fn solver_failure_exits_four_with_dump() {
    let dir = tempdir().unwrap();
    let dump = dir.path().join("dump.json");
    let out = run(&["gme", "--state", p(&fixture("ghz3.json")), "--tol", "1e-300", "--dump", p(&dump)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert!(stderr(&out).contains(p(&dump)));
    let v: Value = serde_json::from_str(&fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(v["problem"]["equalities"].is_array());
}

#[test]
fn expfam_reports_d_k() {
    let dir = tempdir().unwrap();
    let report = dir.path().join("d1.json");
    let out = run(&["expfam", "--state", p(&fixture("ghz3.json")), "--k", "1", "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = payload(&report);
    assert!((r["d_k_bits"].as_f64().unwrap() - 3.0).abs() < 1e-6, "{r}");
    assert_eq!(r["converged"], true);

    let out = run(&["expfam", "--state", p(&fixture("zero3.json")), "--k", "1"]);
    // |000⟩ is a boundary point of Q_1: reached only in the limit.
    let r = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap().payload;
    assert!(r["d_k_bits"].as_f64().unwrap() <= 1e-6, "{r}");

    let product = DensityOperator::maximally_mixed(1)
        .tensor(&DensityOperator::pure(&qstat_core::algebra::basis_state(1, 1)).unwrap().mix(&DensityOperator::maximally_mixed(1), 0.7).unwrap())
        .tensor(&DensityOperator::maximally_mixed(1));
    let src = write_state(&dir, "product.json", &StateSpec::density(&product));
    let out = run(&["expfam", "--state", p(&src), "--k", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap().payload;
    assert!(r["d_k_bits"].as_f64().unwrap().abs() <= 1e-6, "{r}");
}

#[test]
fn expfam_validates_k_and_flags_non_convergence() {
    assert_eq!(code(&run(&["expfam", "--state", p(&fixture("ghz3.json")), "--k", "3"])), 1);
    assert_eq!(code(&run(&["expfam", "--state", p(&fixture("ghz3.json")), "--k", "0"])), 1);
    assert_eq!(code(&run(&["expfam", "--state", p(&fixture("ghz3.json"))])), 1);

    let dir = tempdir().unwrap();
    let report = dir.path().join("partial.json");
    let out = run(&["expfam", "--state", p(&fixture("ghz3.json")), "--k", "2", "--max-iter", "1", "--out", p(&report)]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    assert_eq!(payload(&report)["converged"], false);
}

#[test]
fn r5_check_excludes_ring_cluster() {
    let out = run(&["expfam", "r5-check", "--state", p(&fixture("ring5.json"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = Document::parse(&String::from_utf8(out.stdout).unwrap()).unwrap().payload;
    assert_eq!(r["excluded"], true);
    assert!((r["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = run(&["expfam", "r5-check", "--state", p(&fixture("ghz3.json"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn seed_comes_from_env_unless_flagged() {
    let dir = tempdir().unwrap();
    let sample = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let path = dir.path().join(name);
        let mut cmd = qstat();
        if let Some(e) = env {
            cmd.env("QSTAT_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        cmd.args(["sample", p(&fixture("pauli1.json")), p(&fixture("mixed1.json")), "--shots", "500", "--out", p(&path)]);
        assert!(cmd.status().unwrap().success());
        fs::read(&path).unwrap()
    };
    let env7 = sample(Some("7"), None, "a.json");
    let flag7 = sample(None, Some("7"), "b.json");
    let both = sample(Some("8"), Some("7"), "c.json");
    let env8 = sample(Some("8"), None, "d.json");
    assert_eq!(env7, flag7);
    assert_eq!(env7, both);
    assert_ne!(env7, env8);
}

#[test]
fn bias_writes_csv() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("hist.csv");
    let report = dir.path().join("bias.json");
    let out = run(&["bias", "--qubits", "2", "--trials", "5", "--shots", "50", "--csv", p(&csv), "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "estimator,trial,fidelity");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("lin,0,"));
    let r = payload(&report);
    assert_eq!(r["estimators"].as_array().unwrap().len(), 2);
}

/// Set `QSTAT_UPDATE_GOLDEN=1` to rewrite the golden files.
fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("QSTAT_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{} differs", path.display());
}

#[test]
fn golden_outputs() {
    let out = run(&["--seed", "42", "sample", p(&fixture("pauli2.json")), p(&fixture("ghz3.json")), "--shots", "10"]);
    // Qubit counts disagree.
    assert_eq!(code(&out), 1);

    let dir = tempdir().unwrap();
    let bell = write_state(&dir, "bell.json", &StateSpec::pure(&ghz_state(2)));
    let out = run(&["--seed", "42", "sample", p(&fixture("pauli2.json")), p(&bell), "--shots", "20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    golden("sample_bell.json", &String::from_utf8(out.stdout).unwrap());

    let out = run(&["tomo", p(&fixture("pauli1.json")), p(&fixture("exact_counts.json"))]);
    golden("tomo_exact.json", &String::from_utf8(out.stdout).unwrap());
}
