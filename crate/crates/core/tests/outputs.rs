mod common;

use std::fs;

use common::example_problem;
use hybridsos::certificate::SosCertificate;
use hybridsos::io::{run, write_outputs, CertificateRecord, Overrides, ProblemFile, ResultBundle, SweepSpec};

fn listed(zs: Vec<Vec<f64>>) -> ProblemFile {
    ProblemFile::from_problem(&example_problem(), Some(SweepSpec::List { z_list: zs }), None)
}

#[test]
fn bundle_files_agree_with_the_sweep() {
    let file = listed(vec![vec![1.0, 1.0], vec![3.0, 2.0], vec![0.5, 0.0]]);
    let ov = Overrides {
        emit_certificates: true,
        workers: Some(1),
        ..Overrides::default()
    };
    let (bundle, sweep) = run(&file, &ov, false).unwrap();
    assert_eq!(bundle.efficient_points.len(), sweep.efficient.len());
    assert_eq!(bundle.diagnostics.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(&bundle, dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["results.json", "efficient_points.csv", "pareto_scatter.dat", "certificates.json"]);

    let back: ResultBundle = serde_json::from_str(&fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(back, bundle);

    let certs: Vec<CertificateRecord> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificates.json")).unwrap()).unwrap();
    assert!(!certs.is_empty());
    let objective = hybridsos::weighted_sum(&example_problem());
    for rec in &certs {
        let cert: &SosCertificate = &rec.certificate;
        assert!(cert.identity_residual(&objective) <= cert.tolerance);
        assert!(cert.grams().all(|g| g.min_eigenvalue() >= -1e-7 * (1.0 + g.trace())));
    }

    let csv = fs::read_to_string(dir.path().join("efficient_points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + bundle.efficient_points.len());
}

#[test]
fn without_certificates_no_certificate_file_is_written() {
    let (bundle, _) = run(&listed(vec![vec![1.0, 1.0]]), &Overrides::default(), false).unwrap();
    assert!(bundle.certificates.is_none());
    let dir = tempfile::tempdir().unwrap();
    let written = write_outputs(&bundle, dir.path()).unwrap();
    assert_eq!(written.len(), 3);
    assert!(!dir.path().join("certificates.json").exists());
}
