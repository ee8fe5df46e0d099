use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tpst::bernstein::BasisLayout;
use tpst::field::{FieldHeader, SplineField};
use tpst::mesh::{MeshQualityReport, ValidationReport};
use tpst::sim::{Experiment, SimConfig};
use tpst::solver::{AdaptiveConfig, Dataset, FitConfig, LambdaGrid, LambdaScore, Selection, SplineModel};
use tpst::{io, TetMesh};

use crate::manifest::RunManifest;
use crate::{Command, FitArgs, MeshCheckArgs, PredictArgs, SelectArg, SimulateArgs};
use crate::{EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(tpst::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<tpst::Error> for CliError {
    fn from(e: tpst::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn classify(&self) -> (&'static str, i32) {
        match self {
            CliError::Usage(_) => ("usage", EXIT_USAGE),
            CliError::Core(e) if e.is_numerical() => ("numerical", EXIT_NUMERICAL),
            CliError::Core(_) => ("data", EXIT_DATA),
        }
    }
}

fn data_error(msg: String) -> CliError {
    CliError::Core(tpst::Error::InvalidInput(msg))
}

fn with_path(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(tpst::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| with_path(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| with_path(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn absolute(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

pub fn run(command: &Command, threads: usize) -> Result<(), CliError> {
    match command {
        Command::MeshCheck(a) => mesh_check(a, threads),
        Command::Fit(a) => fit(a, threads),
        Command::Predict(a) => predict(a, threads),
        Command::Simulate(a) => simulate(a, threads),
    }
}

#[derive(Debug, Serialize)]
struct MeshCheckReport {
    valid: bool,
    checksum: String,
    validation: ValidationReport,
    quality: Option<MeshQualityReport>,
}

fn mesh_check(a: &MeshCheckArgs, threads: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let mesh = io::load_mesh(open(&a.nodes)?, open(&a.elems)?, a.index_base as usize)?;
    let validation = mesh.validate();
    let quality = match mesh.shape_metrics() {
        Ok(q) => Some(q),
        Err(e) => {
            log::warn!("quality metrics unavailable: {e}");
            None
        }
    };
    let report = MeshCheckReport { valid: validation.valid, checksum: mesh.checksum(), validation, quality };
    match &a.out {
        Some(out) => {
            write_json(out, &report)?;
            let mut m = RunManifest::new("mesh-check", serde_json::json!({ "index_base": a.index_base }), threads);
            m.add_input(&a.nodes)?;
            m.add_input(&a.elems)?;
            m.timings.insert("total".into(), start.elapsed().as_secs_f64());
            write_json(&sidecar(out), &m)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if report.valid {
        Ok(())
    } else {
        Err(data_error("mesh is not a valid tetrahedral partition".into()))
    }
}

/// `<out>.manifest.json`.
fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRef {
    pub nodes: PathBuf,
    pub elems: PathBuf,
    pub index_base: usize,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub header: FieldHeader,
    pub mesh: MeshRef,
    pub config: FitConfig,
    pub lambda: f64,
    pub c: Option<f64>,
    /// Per-tet penalty weights of an adaptive fit.
    pub weights: Option<Vec<f64>>,
    pub edf: f64,
    pub rss: f64,
    pub gcv: f64,
    pub n: usize,
    /// Observations outside the mesh.
    pub dropped: usize,
    pub nullspace_dim: usize,
    pub constraint_rank: usize,
    pub scores: Vec<LambdaScore>,
    pub coefficients: Vec<f64>,
    pub manifest: RunManifest,
}

fn fit_config(a: &FitArgs) -> FitConfig {
    let defaults = FitConfig::default();
    let selection = match a.select {
        SelectArg::Gcv => Selection::Gcv,
        SelectArg::Cv => Selection::BlockCv { folds: a.folds, seed: a.seed },
        SelectArg::Fixed => Selection::Fixed(a.lambda.unwrap_or(0.0)),
    };
    let adaptive = a.adaptive.then(|| {
        let base = AdaptiveConfig::default();
        AdaptiveConfig {
            tau: a.tau,
            c_grid: match a.c_grid {
                Some((lo, hi, count)) if count > 1 => {
                    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
                }
                Some((lo, _, count)) => vec![lo; count.min(1)],
                None => base.c_grid,
            },
            quad_order: a.tv_quad_order,
        }
    });
    FitConfig {
        degree: a.degree,
        smoothness: a.smoothness,
        lambda_grid: a
            .lambda_grid
            .map_or(defaults.lambda_grid, |(lo, hi, count)| LambdaGrid::Auto { lo, hi, count }),
        selection,
        rank_tol: a.rank_tol,
        adaptive,
    }
}

fn fit(a: &FitArgs, threads: usize) -> Result<(), CliError> {
    if a.lambda.is_some() && a.select != SelectArg::Fixed {
        return Err(CliError::Usage("--lambda requires --select fixed".into()));
    }
    let config = fit_config(a);
    config.validate()?;
    let start = Instant::now();
    let mesh = Arc::new(io::load_mesh(open(&a.nodes)?, open(&a.elems)?, a.index_base as usize)?);
    let (points, values) = io::parse_data(open(&a.data)?)?;
    let data = Dataset::new(&mesh, points, values)?;
    if data.dropped() > 0 {
        log::warn!("{} observations lie outside the mesh and were ignored", data.dropped());
    }
    let loaded = start.elapsed().as_secs_f64();
    let model = SplineModel::from_config(mesh.clone(), &config)?;
    let prepared = start.elapsed().as_secs_f64();
    let result = model.fit(&data, &config)?;
    log::info!("lambda = {:e}, edf = {:.3}, gcv = {:e}", result.lambda, result.edf, result.gcv);

    let mut manifest = RunManifest::new("fit", serde_json::to_value(&config)?, threads);
    manifest.add_input(&a.nodes)?;
    manifest.add_input(&a.elems)?;
    manifest.add_input(&a.data)?;
    if let Selection::BlockCv { seed, .. } = config.selection {
        manifest.seed = Some(seed);
    }
    manifest.timings.insert("load".into(), loaded);
    manifest.timings.insert("model".into(), prepared - loaded);
    manifest.timings.insert("fit".into(), start.elapsed().as_secs_f64() - prepared);
    let file = FitFile {
        header: result.field.header(Some(result.smoothness)),
        mesh: MeshRef { nodes: absolute(&a.nodes), elems: absolute(&a.elems), index_base: a.index_base as usize },
        config,
        lambda: result.lambda,
        c: result.c,
        weights: result.weights.clone(),
        edf: result.edf,
        rss: result.rss,
        gcv: result.gcv,
        n: result.n,
        dropped: data.dropped(),
        nullspace_dim: result.nullspace_dim,
        constraint_rank: result.constraint_rank,
        scores: result.scores.clone(),
        coefficients: result.field.coeffs().to_vec(),
        manifest,
    };
    write_json(&a.out, &file)
}

fn load_fit(path: &Path) -> Result<FitFile, CliError> {
    serde_json::from_reader(open(path)?).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn predict(a: &PredictArgs, threads: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let fit = load_fit(&a.fit)?;
    let (nodes, elems) = match (&a.nodes, &a.elems) {
        (Some(n), Some(e)) => (n.clone(), e.clone()),
        _ => (fit.mesh.nodes.clone(), fit.mesh.elems.clone()),
    };
    let mesh: TetMesh = io::load_mesh(open(&nodes)?, open(&elems)?, fit.mesh.index_base)?;
    if mesh.checksum() != fit.header.mesh_checksum {
        return Err(data_error(format!(
            "mesh checksum {} does not match the fit ({})",
            mesh.checksum(),
            fit.header.mesh_checksum
        )));
    }
    let layout = BasisLayout::new(fit.header.degree);
    if fit.header.block_size != layout.dim() || fit.header.num_tets != mesh.num_tets() {
        return Err(data_error("fit header does not match the mesh".into()));
    }
    let field = SplineField::new(Arc::new(mesh), layout, fit.coefficients.clone())?;
    let points = io::parse_points(open(&a.points)?)?;
    let preds: Vec<Option<f64>> = points.iter().map(|p| field.eval(p)).collect();
    let outside = preds.iter().filter(|p| p.is_none()).count();
    if outside > 0 {
        log::warn!("{outside} points lie outside the mesh");
    }
    let mut w = create(&a.out)?;
    io::write_predictions(&mut w, &points, &preds)?;
    w.flush()?;

    let mut manifest = RunManifest::new(
        "predict",
        serde_json::json!({ "fit": absolute(&a.fit), "nodes": absolute(&nodes), "elems": absolute(&elems) }),
        threads,
    );
    manifest.add_input(&a.fit)?;
    manifest.add_input(&a.points)?;
    manifest.add_input(&nodes)?;
    manifest.add_input(&elems)?;
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    write_json(&sidecar(&a.out), &manifest)
}

fn simulate(a: &SimulateArgs, threads: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let mut config: SimConfig = serde_json::from_reader(open(&a.config)?)
        .map_err(|e| data_error(format!("{}: {e}", a.config.display())))?;
    if let Some(r) = a.replications {
        config.replications = r;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let experiment = Experiment::new(config.clone())?;
    log::info!(
        "{} tets, {} scenarios x {} methods x {} replications",
        experiment.mesh().num_tets(),
        config.scenarios.len(),
        config.methods.len(),
        config.replications
    );
    let prepared = start.elapsed().as_secs_f64();
    let report = experiment.run()?;
    report.write_dir(&a.out)?;
    for s in &report.summary {
        log::info!("{} / {}: MISE {:.6e} (se {:.2e})", s.scenario, s.method, s.mise_mean, s.mise_se);
    }
    let mut manifest = RunManifest::new("simulate", serde_json::to_value(&config)?, threads);
    manifest.add_input(&a.config)?;
    manifest.seed = Some(config.seed);
    manifest.timings.insert("setup".into(), prepared);
    manifest.timings.insert("run".into(), start.elapsed().as_secs_f64() - prepared);
    write_json(&a.out.join("manifest.json"), &manifest)
}
