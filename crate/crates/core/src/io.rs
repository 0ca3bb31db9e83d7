//! Problem files, run orchestration and result files.
//!
//! A problem file is a JSON document:
//!
//! ```json
//! {
//!   "n": 2,
//!   "variables": ["x1", "x2"],
//!   "objectives": [[{"exponents": [1, 0], "coeff": 1.0}]],
//!   "constraints": [[{"exponents": [1, 0], "coeff": -1.0}]],
//!   "lambda": [1.0],
//!   "sweep": {"box": [[0.0, 4.0], [0.0, 4.0]], "samples": 1000, "seed": 7},
//!   "options": {"family": "P", "k_max": 4, "tolerances": {"rank": 1e-4}}
//! }
//! ```
//!
//! `sweep` may instead be `{"z_list": [[1.0, 1.0]]}`; `variables`, `lambda`
//! (all ones), `sweep` and `options` are optional.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::certificate::SosCertificate;
use crate::error::Error;
use crate::pareto::{run_sweep, EfficientPoint, SweepConfig, SweepResult, Tolerances, ZDiagnostic, ZSource};
use crate::poly::{Exponent, MooProblem, Polynomial, Term};
use crate::relax::Family;
use crate::sdp::SolveStatus;

/// Failures of the file layer, each with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{0}")]
    Schema(String),
    #[error("lambda must be strictly positive")]
    Lambda,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no z sources: provide a sampling box with samples > 0 or a non-empty z_list")]
    NoZSources,
    #[error("{0}")]
    Run(Error),
}

impl FileError {
    /// Process exit code: 2 schema, 3 I/O, 4 no z sources, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            FileError::Schema(_) | FileError::Lambda | FileError::Dimension(_) => 2,
            FileError::Io { .. } => 3,
            FileError::NoZSources => 4,
            FileError::Run(_) => 1,
        }
    }

    /// Stable short identifier printed next to the message.
    pub fn code(&self) -> &'static str {
        match self {
            FileError::Schema(_) => "schema",
            FileError::Lambda => "lambda",
            FileError::Dimension(_) => "dimension",
            FileError::Io { .. } => "io",
            FileError::NoZSources => "no-z-sources",
            FileError::Run(_) => "run",
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        FileError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<Error> for FileError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoZSources => FileError::NoZSources,
            Error::InvalidProblem(m) if m.contains("lambda must be strictly positive") => FileError::Lambda,
            Error::DimensionMismatch { expected, got } => {
                FileError::Dimension(format!("expected {expected}, got {got}"))
            }
            Error::Parse(m) => FileError::Schema(m),
            other => FileError::Run(other),
        }
    }
}

pub type FileResult<T> = std::result::Result<T, FileError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SweepSpec {
    Box {
        #[serde(rename = "box")]
        bounds: Vec<[f64; 2]>,
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
    List { z_list: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<String>>,
    pub objectives: Vec<Vec<Term>>,
    #[serde(default)]
    pub constraints: Vec<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<RunOptions>,
}

fn terms_to_poly(n: usize, what: &str, terms: &[Term]) -> FileResult<Polynomial> {
    for (t, term) in terms.iter().enumerate() {
        if term.exponents.len() != n {
            return Err(FileError::Dimension(format!(
                "{what} term {t}: exponents has length {}, expected n = {n}",
                term.exponents.len()
            )));
        }
        if !term.coeff.is_finite() {
            return Err(FileError::Schema(format!("{what} term {t}: coefficient is not finite")));
        }
    }
    Ok(Polynomial::from_terms(
        n,
        terms.iter().map(|t| (Exponent::new(t.exponents.clone()), t.coeff)),
    ))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> FileResult<ProblemFile> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| FileError::Schema(e.to_string()))?;
        file.to_problem()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    /// Canonical file for `problem`: terms in graded order, zero terms dropped.
    pub fn from_problem(problem: &MooProblem, sweep: Option<SweepSpec>, options: Option<RunOptions>) -> Self {
        ProblemFile {
            n: problem.nvars(),
            variables: None,
            objectives: problem.objectives().iter().map(Polynomial::to_terms).collect(),
            constraints: problem.constraints().iter().map(Polynomial::to_terms).collect(),
            lambda: Some(problem.lambda().to_vec()),
            sweep,
            options,
        }
    }

    pub fn to_problem(&self) -> FileResult<MooProblem> {
        let n = self.n;
        if n == 0 {
            return Err(FileError::Schema("n must be at least 1".into()));
        }
        if let Some(vars) = &self.variables {
            if vars.len() != n {
                return Err(FileError::Dimension(format!(
                    "variables has {} names, expected n = {n}",
                    vars.len()
                )));
            }
        }
        if self.objectives.is_empty() {
            return Err(FileError::Schema("objectives must not be empty".into()));
        }
        let objectives = self
            .objectives
            .iter()
            .enumerate()
            .map(|(j, t)| terms_to_poly(n, &format!("objectives[{j}]"), t))
            .collect::<FileResult<Vec<_>>>()?;
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, t)| terms_to_poly(n, &format!("constraints[{i}]"), t))
            .collect::<FileResult<Vec<_>>>()?;
        let lambda = match &self.lambda {
            Some(l) => {
                if l.len() != objectives.len() {
                    return Err(FileError::Dimension(format!(
                        "lambda has {} entries, expected {} (one per objective)",
                        l.len(),
                        objectives.len()
                    )));
                }
                l.clone()
            }
            None => vec![1.0; objectives.len()],
        };
        if let Some(SweepSpec::Box { bounds, .. }) = &self.sweep {
            if bounds.len() != n {
                return Err(FileError::Dimension(format!("box has {} rows, expected n = {n}", bounds.len())));
            }
        }
        if let Some(SweepSpec::List { z_list }) = &self.sweep {
            if let Some(z) = z_list.iter().find(|z| z.len() != n) {
                return Err(FileError::Dimension(format!("z_list entry has length {}, expected n = {n}", z.len())));
            }
        }
        Ok(MooProblem::new(n, objectives, constraints, lambda)?)
    }
}

pub fn parse_problem(path: &Path) -> FileResult<ProblemFile> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    ProblemFile::from_json(&text)
}

/// Parses `"lo1,hi1;lo2,hi2;…"`.
pub fn parse_box(spec: &str) -> FileResult<Vec<(f64, f64)>> {
    spec.split(';')
        .map(|row| {
            let parts: Vec<&str> = row.split(',').map(str::trim).collect();
            let [lo, hi] = parts[..] else {
                return Err(FileError::Schema(format!("box row `{row}` must be `lo,hi`")));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| FileError::Schema(format!("box entry `{s}` is not a number")))
            };
            Ok((num(lo)?, num(hi)?))
        })
        .collect()
}

/// Command-line settings that take precedence over the problem file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub family: Option<Family>,
    pub k_max: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub tol_gap: Option<f64>,
    pub tol_rank: Option<f64>,
    pub workers: Option<usize>,
    pub emit_certificates: bool,
}

/// Merges file options and overrides. Any of samples/seed/box switches to box sampling.
pub fn sweep_config(file: &ProblemFile, ov: &Overrides) -> FileResult<SweepConfig> {
    let opts = file.options.clone().unwrap_or_default();
    let file_box = match &file.sweep {
        Some(SweepSpec::Box { bounds, samples, seed }) => Some((bounds.clone(), *samples, *seed)),
        _ => None,
    };
    let z_source = if ov.samples.is_some() || ov.seed.is_some() || ov.bounds.is_some() {
        let bounds = match (&ov.bounds, &file_box) {
            (Some(b), _) => b.clone(),
            (None, Some((b, _, _))) => b.iter().map(|r| (r[0], r[1])).collect(),
            (None, None) => {
                return Err(FileError::NoZSources);
            }
        };
        let samples = ov.samples.or(file_box.as_ref().map(|b| b.1)).unwrap_or(0);
        let seed = ov.seed.or(file_box.as_ref().map(|b| b.2)).unwrap_or(0);
        ZSource::UniformBox { bounds, samples, seed }
    } else {
        match &file.sweep {
            Some(SweepSpec::Box { bounds, samples, seed }) => ZSource::UniformBox {
                bounds: bounds.iter().map(|r| (r[0], r[1])).collect(),
                samples: *samples,
                seed: *seed,
            },
            Some(SweepSpec::List { z_list }) => ZSource::Explicit(z_list.clone()),
            None => return Err(FileError::NoZSources),
        }
    };
    let mut tolerances = opts.tolerances.unwrap_or_default();
    if let Some(g) = ov.tol_gap {
        tolerances.gap = g;
    }
    if let Some(r) = ov.tol_rank {
        tolerances.rank = r;
    }
    let cfg = SweepConfig {
        z_source,
        family: ov.family.or(opts.family).unwrap_or(Family::P),
        k_max: ov.k_max.or(opts.k_max),
        tolerances,
        certificates: ov.emit_certificates,
        workers: ov.workers.unwrap_or(0),
        ..SweepConfig::default()
    };
    cfg.validate(file.n)?;
    Ok(cfg)
}

/// One row of the efficient or unverified table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub z: Vec<f64>,
    pub k_used: usize,
    pub family: Family,
    pub verified: bool,
    pub reverify_ok: bool,
    pub certificate: bool,
}

impl From<&EfficientPoint> for PointRow {
    fn from(p: &EfficientPoint) -> Self {
        PointRow {
            x: p.x.clone(),
            values: p.values.clone(),
            z: p.z.clone(),
            k_used: p.k_used,
            family: p.family,
            verified: p.verified,
            reverify_ok: p.reverify_ok,
            certificate: p.certificate.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub certificate: SosCertificate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub z_count: usize,
    pub verified_z: usize,
    pub total_iterations: usize,
    pub final_status: std::collections::BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub problem: ProblemFile,
    pub config: SweepConfig,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; only recorded on request so outputs stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_unix: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
    pub solver: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub metadata: RunMetadata,
    pub efficient_points: Vec<PointRow>,
    pub unverified_points: Vec<PointRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates: Option<Vec<CertificateRecord>>,
    pub diagnostics: Vec<ZDiagnostic>,
}

/// Runs the sweep described by `file` and `ov`.
pub fn run(file: &ProblemFile, ov: &Overrides, record_time: bool) -> FileResult<(ResultBundle, SweepResult)> {
    let problem = file.to_problem()?;
    let cfg = sweep_config(file, ov)?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let result = run_sweep(&problem, &cfg)?;
    let elapsed = clock.elapsed().as_secs_f64();

    let mut stats = SolverStats {
        z_count: result.diagnostics.len(),
        verified_z: result.diagnostics.iter().filter(|d| d.verified_points > 0).count(),
        ..SolverStats::default()
    };
    for d in &result.diagnostics {
        stats.total_iterations += d.iterations;
        *stats.final_status.entry(status_name(d.status).into()).or_default() += 1;
    }
    let certificates = cfg.certificates.then(|| {
        result
            .efficient
            .iter()
            .filter_map(|p| {
                p.certificate.as_ref().map(|c| CertificateRecord {
                    z: p.z.clone(),
                    x: p.x.clone(),
                    certificate: c.clone(),
                })
            })
            .collect()
    });
    let seed = match cfg.z_source {
        ZSource::UniformBox { seed, .. } => Some(seed),
        ZSource::Explicit(_) => None,
    };
    let bundle = ResultBundle {
        metadata: RunMetadata {
            tool: "hybridsos".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            problem: file.clone(),
            config: cfg,
            seed,
            started_unix: record_time
                .then(|| started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)),
            elapsed_seconds: record_time.then_some(elapsed),
            solver: stats,
        },
        efficient_points: result.efficient.iter().map(PointRow::from).collect(),
        unverified_points: result.unverified.iter().map(PointRow::from).collect(),
        certificates,
        diagnostics: result.diagnostics.clone(),
    };
    Ok((bundle, result))
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "Optimal",
        SolveStatus::Infeasible => "Infeasible",
        SolveStatus::Unbounded => "Unbounded",
        SolveStatus::MaxIter => "MaxIter",
        SolveStatus::NumericalTrouble => "NumericalTrouble",
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(n: usize, p: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    h.extend((1..=p).map(|j| format!("f_{j}")));
    h.extend((1..=n).map(|i| format!("z_{i}")));
    h.extend(["k_used", "verified", "reverify_ok"].map(String::from));
    h
}

pub fn efficient_csv(bundle: &ResultBundle) -> FileResult<String> {
    let n = bundle.metadata.problem.n;
    let p = bundle.metadata.problem.objectives.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| FileError::Run(Error::Parse(e.to_string()));
    w.write_record(csv_header(n, p)).map_err(csv_err)?;
    for r in &bundle.efficient_points {
        let mut rec: Vec<String> = r.x.iter().chain(&r.values).chain(&r.z).map(|v| fmt_f64(*v)).collect();
        rec.push(r.k_used.to_string());
        rec.push(r.verified.to_string());
        rec.push(r.reverify_ok.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| FileError::Run(Error::Parse(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Whitespace-separated x columns of the efficient points.
pub fn scatter_dat(bundle: &ResultBundle) -> String {
    let n = bundle.metadata.problem.n;
    let mut out = String::new();
    let names: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    let _ = writeln!(out, "# {}", names.join(" "));
    for r in &bundle.efficient_points {
        let row: Vec<String> = r.x.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Writes `results.json`, `efficient_points.csv`, `pareto_scatter.dat` and, when
/// certificates were requested, `certificates.json` into `dir`.
pub fn write_outputs(bundle: &ResultBundle, dir: &Path) -> FileResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| FileError::io(dir, e))?;
    let mut files = vec![
        (
            "results.json",
            serde_json::to_string_pretty(bundle).map_err(|e| FileError::Run(Error::Parse(e.to_string())))? + "\n",
        ),
        ("efficient_points.csv", efficient_csv(bundle)?),
        ("pareto_scatter.dat", scatter_dat(bundle)),
    ];
    if let Some(certs) = &bundle.certificates {
        files.push((
            "certificates.json",
            serde_json::to_string_pretty(certs).map_err(|e| FileError::Run(Error::Parse(e.to_string())))? + "\n",
        ));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| FileError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../../data/three_objectives.json");

    #[test]
    fn bundled_example_parses() {
        let file = ProblemFile::from_json(EXAMPLE).unwrap();
        let prob = file.to_problem().unwrap();
        assert_eq!((prob.objectives().len(), prob.constraints().len(), prob.nvars()), (3, 2, 2));
    }

    #[test]
    fn zero_lambda_is_rejected() {
        let text = r#"{"n":1,"objectives":[[{"exponents":[2],"coeff":1.0}]],"lambda":[0.0]}"#;
        let err = ProblemFile::from_json(text).unwrap_err();
        assert_eq!(err.to_string(), "lambda must be strictly positive");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_constraints_are_allowed() {
        let text = r#"{"n":1,"objectives":[[{"exponents":[2],"coeff":1.0}]],"constraints":[]}"#;
        let prob = ProblemFile::from_json(text).unwrap().to_problem().unwrap();
        assert!(prob.constraints().is_empty());
    }

    #[test]
    fn malformed_inputs_have_distinct_codes() {
        let bad_len = r#"{"n":2,"objectives":[[{"exponents":[2],"coeff":1.0}]]}"#;
        assert_eq!(ProblemFile::from_json(bad_len).unwrap_err().code(), "dimension");
        let unknown = r#"{"n":1,"objectives":[],"bogus":1}"#;
        let err = ProblemFile::from_json(unknown).unwrap_err();
        assert_eq!(err.code(), "schema");
        assert!(err.to_string().contains("line 1"));
        let missing = parse_problem(Path::new("/nonexistent/problem.json")).unwrap_err();
        assert_eq!(missing.exit_code(), 3);
    }

    #[test]
    fn canonical_round_trip() {
        let file = ProblemFile::from_json(EXAMPLE).unwrap();
        let prob = file.to_problem().unwrap();
        let canon = ProblemFile::from_problem(&prob, file.sweep.clone(), file.options.clone());
        let again = ProblemFile::from_json(&canon.to_json()).unwrap();
        assert_eq!(again, canon);
        assert_eq!(again.to_problem().unwrap(), prob);
    }

    #[test]
    fn box_strings() {
        assert_eq!(parse_box("0,4;-1,2.5").unwrap(), vec![(0.0, 4.0), (-1.0, 2.5)]);
        assert!(parse_box("0;1").is_err());
        assert!(parse_box("a,1").is_err());
    }

    #[test]
    fn zero_samples_without_list_has_no_sources() {
        let file = ProblemFile::from_json(EXAMPLE).unwrap();
        let ov = Overrides {
            samples: Some(0),
            ..Overrides::default()
        };
        assert_eq!(sweep_config(&file, &ov).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn fmt_has_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.75).parse::<f64>().unwrap(), 1.75);
    }
}
