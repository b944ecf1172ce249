use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use qstat_core::algebra::{ghz_state, noisy_pure_state, relative_entropy, vn_entropy, DensityOperator};
use qstat_core::doc::{DocKind, Document, EstimateInfo, ExpectationsSpec, ModelSpec, Provenance, StateSpec};
use qstat_core::expfam::{info_projection, thermal_exclusion_check, InfoProjection};
use qstat_core::gme::{
    pptmix_from_expectations_tol, pptmix_sdp_cuts_tol, Bipartition, GmeCertificate, GmeVerdict, VERDICT_THRESHOLD,
};
use qstat_core::model::{pauli_tomography_model, sample_counts, CountData, MeasurementModel};
use qstat_core::systest::{split_test, Verdict, WitnessKind};
use qstat_core::tomo::{
    bias_experiment, build_reconstruction, fidelity_bound, linear_inversion, ml_estimate, white_noise_weight,
    BiasConfig, FidelityBound,
};
use qstat_core::Error;

use crate::*;

/// Tolerance for re-checking a stored certificate.
const VERIFY_TOL: f64 = 1e-6;

pub fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Systest(a) => systest(a, cli.seed),
        Command::Tomo(a) => tomo(a),
        Command::Gme(a) => gme(a),
        Command::Expfam(a) => expfam(a),
        Command::Sample(a) => sample(a, cli.seed),
        Command::Bias(a) => bias(a, cli.seed),
    }
}

fn in_file(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        // Document::read already names the file.
        Error::Document(m) if m.starts_with(&path.display().to_string()) => Failure::data(m),
        e => Failure::data(format!("{}: {e}", path.display())),
    }
}

fn read<T: DeserializeOwned>(path: &Path, kind: DocKind) -> Result<T, Failure> {
    Document::read(path).and_then(|d| d.decode(kind)).map_err(in_file(path))
}

fn read_model(path: &Path) -> Result<MeasurementModel, Failure> {
    read::<ModelSpec>(path, DocKind::Model)?.build().map_err(in_file(path))
}

fn read_state(path: &Path) -> Result<StateSpec, Failure> {
    read(path, DocKind::State)
}

fn read_density(path: &Path) -> Result<DensityOperator, Failure> {
    read_state(path)?.to_density().map_err(in_file(path))
}

fn emit<T: Serialize>(kind: DocKind, payload: &T, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let doc = Document::new(kind, payload, Provenance::now(seed))?;
    match out {
        Some(path) => doc.write(path)?,
        None => print!("{}", doc.to_text()),
    }
    Ok(())
}

fn systest(a: &SystestArgs, seed: u64) -> Result<u8, Failure> {
    let model = read_model(&a.model)?;
    let counts: CountData = read(&a.counts, DocKind::Counts)?;
    counts.aligned(&model).map_err(in_file(&a.counts))?;
    let kind = match a.kind {
        KindArg::Positivity => WitnessKind::Positivity,
        KindArg::Linearity => WitnessKind::Linearity,
    };
    let report = split_test(&counts, &model, a.alpha, kind, seed)?;
    emit(DocKind::Report, &report, Some(seed), a.out.as_deref())?;
    eprintln!(
        "{:?}: statistic {:.6}, threshold {:.6}, p-value {:.3e}",
        report.verdict, report.statistic, report.threshold, report.p_value
    );
    Ok(match report.verdict {
        Verdict::Compatible => 0,
        Verdict::Incompatible => EXIT_INCOMPATIBLE,
    })
}

#[derive(Serialize)]
struct TomoReport {
    estimator: String,
    /// `⟨ψ|ϱ̂|ψ⟩` of the emitted estimate.
    estimate_fidelity: f64,
    fidelity_bound: FidelityBound,
}

fn tomo(a: &TomoArgs) -> Result<u8, Failure> {
    let model = read_model(&a.model)?;
    let counts: CountData = read(&a.counts, DocKind::Counts)?;
    let target = match &a.target_state {
        Some(p) => Some(read_state(p)?.to_vector().map_err(in_file(p))?),
        None => None,
    };
    let recon = build_reconstruction(&model)?;
    let (op, info) = match a.estimator {
        EstimatorArg::Lin => {
            let est = linear_inversion(&counts, &recon)?;
            let info = EstimateInfo {
                estimator: "lin".into(),
                is_physical: est.is_physical,
                min_eigenvalue: est.min_eigenvalue,
                converged: None,
                iterations: None,
                log_likelihood: None,
            };
            (est.op, info)
        }
        EstimatorArg::Ml => {
            let est = ml_estimate(&counts, &model, a.tol, a.max_iter)?;
            if !est.converged {
                eprintln!("warning: ML iteration stopped after {} iterations", est.iterations);
            }
            let info = EstimateInfo {
                estimator: "ml".into(),
                is_physical: true,
                min_eigenvalue: est.state.operator().min_eigenvalue()?,
                converged: Some(est.converged),
                iterations: Some(est.iterations),
                log_likelihood: Some(est.log_likelihood),
            };
            (est.state.into_operator(), info)
        }
    };
    let report = match &target {
        Some(psi) => Some(TomoReport {
            estimator: info.estimator.clone(),
            estimate_fidelity: op.expectation_vector(psi),
            fidelity_bound: fidelity_bound(&counts, &model, psi, a.alpha)?,
        }),
        None => None,
    };
    let spec = StateSpec::Density {
        matrix: qstat_core::algebra::serde_repr::matrix_to_rows(op.matrix()),
        estimate: Some(info),
    };
    emit(DocKind::State, &spec, None, a.out.as_deref())?;
    if let Some(r) = report {
        let b = &r.fidelity_bound;
        eprintln!(
            "fidelity estimate {:.6}, lower bound {:.6} at alpha {}",
            b.estimate, b.lower, b.alpha
        );
        if let Some(path) = &a.report {
            emit(DocKind::Report, &r, None, Some(path))?;
        }
    }
    Ok(0)
}

fn default_dump(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => {
            let mut s = p.as_os_str().to_owned();
            s.push(".sdp-dump.json");
            PathBuf::from(s)
        }
        None => std::env::temp_dir().join(format!("qstat-sdp-dump-{}.json", std::process::id())),
    }
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    value: f64,
    verdict: GmeVerdict,
    /// Worst violation of the decomposition constraints.
    constraint_violation: f64,
    /// Whether every bipartition carries a decomposition.
    all_cuts: bool,
    /// `tr(ϱW)` for the supplied state.
    #[serde(skip_serializing_if = "Option::is_none")]
    recomputed_value: Option<f64>,
}

fn verify(a: &GmeArgs, path: &Path) -> Result<u8, Failure> {
    let cert: GmeCertificate = read(path, DocKind::Certificate)?;
    let n = cert.witness.qubits();
    let mut cuts: Vec<Bipartition> = cert.decompositions.iter().map(|d| d.cut).collect();
    cuts.sort_by_key(|c| c.side_a.0);
    let mut expected = Bipartition::all(n).map_err(in_file(path))?;
    expected.sort_by_key(|c| c.side_a.0);
    let all_cuts = cuts == expected;
    let constraint_violation = cert.constraint_violation().map_err(in_file(path))?;
    let recomputed_value = match &a.state {
        Some(p) => {
            let rho = read_density(p)?;
            if rho.qubits() != n {
                return Err(Failure::data(format!("{}: state has {} qubits, certificate {n}", p.display(), rho.qubits())));
            }
            Some(rho.expectation(&cert.witness))
        }
        None => None,
    };
    let verdict_ok = (cert.value < VERDICT_THRESHOLD) == (cert.verdict == GmeVerdict::GenuinelyMultipartiteEntangled);
    let value_ok = recomputed_value.map_or(true, |v| (v - cert.value).abs() <= VERIFY_TOL);
    let passed = all_cuts && constraint_violation <= VERIFY_TOL && verdict_ok && value_ok;
    let report = VerifyReport {
        passed,
        value: cert.value,
        verdict: cert.verdict,
        constraint_violation,
        all_cuts,
        recomputed_value,
    };
    emit(DocKind::Report, &report, None, a.out.as_deref())?;
    if passed {
        eprintln!("certificate verified (constraint violation {constraint_violation:.2e})");
        Ok(0)
    } else {
        Err(Failure::data("certificate failed verification"))
    }
}

fn gme(a: &GmeArgs) -> Result<u8, Failure> {
    if let Some(path) = &a.verify {
        return verify(a, path);
    }
    let result = if let Some(p) = &a.state {
        let rho = read_density(p)?;
        let cuts = Bipartition::all(rho.qubits())?;
        pptmix_sdp_cuts_tol(&rho, &cuts, a.tol)
    } else {
        let p = a.expectations.as_ref().expect("clap requires one input");
        let spec: ExpectationsSpec = read(p, DocKind::Expectations)?;
        let (ops, means) = spec.operators().map_err(in_file(p))?;
        pptmix_from_expectations_tol(&ops, &means, spec.qubits, a.tol)
    };
    let cert = match result {
        Ok(c) => c,
        Err(Error::Solver(dump)) => {
            let path = a.dump.clone().unwrap_or_else(|| default_dump(a.out.as_deref()));
            std::fs::write(&path, dump).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            return Err(Failure {
                code: EXIT_SOLVER,
                message: format!("SDP solver failed; problem written to {}", path.display()),
            });
        }
        Err(e) => return Err(e.into()),
    };
    emit(DocKind::Certificate, &cert, None, a.out.as_deref())?;
    eprintln!("{:?}: value {:.8}, gap {:.2e}", cert.verdict, cert.value, cert.dual_gap);
    Ok(match cert.verdict {
        GmeVerdict::PptMixture => 0,
        GmeVerdict::GenuinelyMultipartiteEntangled => EXIT_GME,
    })
}

#[derive(Serialize)]
struct ExpfamReport {
    k: usize,
    tol: f64,
    /// `D(ϱ‖ϱ̃_k)` in bits.
    d_k_bits: f64,
    /// `S(ϱ̃_k) − S(ϱ)` in bits; equals `d_k_bits` at the projection.
    entropy_gap_bits: f64,
    converged: bool,
    projection: InfoProjection,
}

fn expfam(a: &ExpfamArgs) -> Result<u8, Failure> {
    if let Some(ExpfamCheck::R5Check { state, out }) = &a.check {
        let rho = read_density(state)?;
        let check = thermal_exclusion_check(&rho).map_err(in_file(state))?;
        emit(DocKind::Report, &check, None, out.as_deref())?;
        eprintln!("fidelity {:.8}, excluded {}", check.fidelity, check.excluded);
        return Ok(0);
    }
    let (Some(state), Some(k)) = (&a.state, a.k) else {
        return Err(Failure::data("expfam needs --state and --k (or the r5-check subcommand)"));
    };
    let rho = read_density(state)?;
    let n = rho.qubits();
    if k == 0 || k >= n {
        return Err(Failure::data(format!("--k must satisfy 1 <= k < {n} for a {n}-qubit state")));
    }
    let projection = info_projection(&rho, k, a.tol, a.max_iter)?;
    let d_k_bits = relative_entropy(&rho, &projection.state)?;
    let entropy_gap_bits = vn_entropy(&projection.state)? - vn_entropy(&rho)?;
    let converged = projection.converged && (d_k_bits - entropy_gap_bits).abs() <= 1e-6;
    let report = ExpfamReport {
        k,
        tol: a.tol,
        d_k_bits,
        entropy_gap_bits,
        converged,
        projection,
    };
    emit(DocKind::Report, &report, None, a.out.as_deref())?;
    if converged {
        eprintln!("D_{k} = {d_k_bits:.8} bits");
        Ok(0)
    } else {
        Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "projection did not converge after {} iterations (marginal residual {:.3e}); partial result flagged",
                report.projection.iterations, report.projection.marginal_residual
            ),
        })
    }
}

fn sample(a: &SampleArgs, seed: u64) -> Result<u8, Failure> {
    let model = read_model(&a.model)?;
    let rho = read_density(&a.state)?;
    let counts = sample_counts(&rho, &model, a.shots, seed)?;
    emit(DocKind::Counts, &counts, Some(seed), a.out.as_deref())?;
    Ok(0)
}

fn bias(a: &BiasArgs, seed: u64) -> Result<u8, Failure> {
    let model = pauli_tomography_model(a.qubits)?;
    let psi = ghz_state(a.qubits);
    let rho = noisy_pure_state(&psi, white_noise_weight(a.fidelity, a.qubits))?;
    let config = BiasConfig {
        shots_per_setting: a.shots,
        trials: a.trials,
        seed,
        ..BiasConfig::default()
    };
    let report = bias_experiment(&rho, &model, &psi, &config)?;
    emit(DocKind::Report, &report, Some(seed), a.out.as_deref())?;
    if let Some(path) = &a.csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    for e in &report.estimators {
        eprintln!("{}: mean {:.5} ± {:.5} (s.e.)", e.estimator, e.mean, e.stderr);
    }
    Ok(0)
}
