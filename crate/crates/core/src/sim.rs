//! Seeded simulation experiments: synthetic truths, designs, noise at a
//! target peak signal-to-noise ratio, missing-data schemes and
//! out-of-sample error.
//!
//! All randomness derives from one master seed. The stream for replication
//! `r` and stage `s` is seeded with [`sub_seed`]`(master, r, s)`; the
//! scenario does not enter the seed, so scenarios that differ only in noise
//! level or missing scheme share their design points replication by
//! replication.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::{generate_box_mesh, Aabb};
use crate::solver::{FitConfig, FitResult, SplineModel};
use crate::solver::{AdaptiveConfig, Dataset};
use crate::{Error, Point3, Result, TetMesh};

pub const STAGE_DESIGN: u64 = 0;
pub const STAGE_NOISE: u64 = 1;
pub const STAGE_MISSING: u64 = 2;
pub const STAGE_EVAL: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the random stream for one replication and stage.
pub fn sub_seed(master: u64, replication: usize, stage: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64((replication as u64) << 8 | stage))
}

fn rng_for(master: u64, replication: usize, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(master, replication, stage))
}

/// Box domain with box-shaped holes, meshed on a uniform cell grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub bounds: Aabb,
    pub resolution: [usize; 3],
    #[serde(default)]
    pub holes: Vec<Aabb>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            bounds: Aabb::new([0.0; 3], [2.0, 1.0, 1.0]),
            resolution: [6, 3, 3],
            holes: vec![Aabb::new([2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0])],
        }
    }
}

impl DomainSpec {
    pub fn mesh(&self) -> Result<TetMesh> {
        generate_box_mesh(&self.bounds, self.resolution, &self.holes)
    }

    /// Inside the bounds and outside every hole; hole boundaries count as inside.
    pub fn contains(&self, p: &Point3) -> bool {
        let strictly_in = |b: &Aabb| (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]);
        self.bounds.contains(p) && !self.holes.iter().any(strictly_in)
    }
}

/// True regression function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    /// `sin(πx) cos(πy) z`.
    Smooth,
    /// `smooth + 0.8 sin(4πx) sin(4πy)` where `x` exceeds the domain's mid-x.
    Wavy,
    /// `1 + x + 2y - z`.
    Linear,
    /// Arithmetic expression in `x`, `y`, `z` and `pi` (functions as `math::sin` etc.).
    Custom(String),
}

/// A [`Truth`] ready for evaluation.
#[derive(Debug, Clone)]
pub struct TruthFn {
    truth: Truth,
    mid_x: f64,
    node: Option<Node<DefaultNumericTypes>>,
}

impl TruthFn {
    pub fn new(truth: &Truth, domain: &Aabb) -> Result<Self> {
        let node = match truth {
            Truth::Custom(expr) => Some(
                evalexpr::build_operator_tree(expr)
                    .map_err(|e| Error::InvalidInput(format!("truth expression {expr:?}: {e}")))?,
            ),
            _ => None,
        };
        let f = TruthFn { truth: truth.clone(), mid_x: 0.5 * (domain.min[0] + domain.max[0]), node };
        f.eval(&Point3::from(domain.min))?;
        Ok(f)
    }

    pub fn eval(&self, p: &Point3) -> Result<f64> {
        use std::f64::consts::PI;
        let smooth = || (PI * p.x).sin() * (PI * p.y).cos() * p.z;
        Ok(match self.truth {
            Truth::Smooth => smooth(),
            Truth::Wavy => {
                let bump = if p.x > self.mid_x { 0.8 * (4.0 * PI * p.x).sin() * (4.0 * PI * p.y).sin() } else { 0.0 };
                smooth() + bump
            }
            Truth::Linear => 1.0 + p.x + 2.0 * p.y - p.z,
            Truth::Custom(ref expr) => {
                let node = self.node.as_ref().expect("compiled with the truth");
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                for (name, v) in [("x", p.x), ("y", p.y), ("z", p.z), ("pi", PI)] {
                    ctx.set_value(name.into(), Value::Float(v))
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                }
                let v = node
                    .eval_number_with_context(&ctx)
                    .map_err(|e| Error::InvalidInput(format!("truth expression {expr:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("truth expression {expr:?} is not finite at {p}")));
                }
                v
            }
        })
    }
}

/// Where observations are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `n` points uniform over the domain.
    Random { n: usize },
    /// Cell centers of a voxel grid over the bounds, kept if inside the domain.
    Grid { resolution: [usize; 3] },
}

/// Points of a design, all inside `domain` and located in `mesh`.
pub fn design_points(design: &Design, domain: &DomainSpec, mesh: &TetMesh, rng: &mut ChaCha8Rng) -> Result<Vec<Point3>> {
    let inside = |p: &Point3| domain.contains(p) && mesh.locate(p, 0.0).is_some();
    match *design {
        Design::Random { n } => {
            if n == 0 {
                return Err(Error::InvalidInput("random design needs n > 0".into()));
            }
            uniform_points(domain, n, rng, inside)
        }
        Design::Grid { resolution } => {
            if resolution.contains(&0) {
                return Err(Error::InvalidInput("grid resolution must be positive".into()));
            }
            let b = &domain.bounds;
            let mut pts = Vec::new();
            for i in 0..resolution[0] {
                for j in 0..resolution[1] {
                    for k in 0..resolution[2] {
                        let c = |a: usize, idx: usize| {
                            b.min[a] + (idx as f64 + 0.5) * (b.max[a] - b.min[a]) / resolution[a] as f64
                        };
                        let p = Point3::new(c(0, i), c(1, j), c(2, k));
                        if inside(&p) {
                            pts.push(p);
                        }
                    }
                }
            }
            if pts.is_empty() {
                return Err(Error::EmptyDomain);
            }
            Ok(pts)
        }
    }
}

fn uniform_points(
    domain: &DomainSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
    inside: impl Fn(&Point3) -> bool,
) -> Result<Vec<Point3>> {
    let b = &domain.bounds;
    let mut pts = Vec::with_capacity(n);
    let mut tries = 0usize;
    while pts.len() < n {
        tries += 1;
        if tries > 1000 * n + 10_000 && pts.len() * 1000 < tries {
            return Err(Error::EmptyDomain);
        }
        let p = Point3::new(
            rng.random_range(b.min[0]..=b.max[0]),
            rng.random_range(b.min[1]..=b.max[1]),
            rng.random_range(b.min[2]..=b.max[2]),
        );
        if inside(&p) {
            pts.push(p);
        }
    }
    Ok(pts)
}

/// Noise level giving peak signal-to-noise ratio `psnr` in dB: `σ = |max m| 10^(-psnr/20)`.
pub fn noise_sigma(truth_values: &[f64], psnr: f64) -> Result<f64> {
    let max = truth_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max == 0.0 {
        return Err(Error::InvalidInput("noise calibration needs a nonzero finite maximum".into()));
    }
    Ok(max.abs() * 10f64.powf(-psnr / 20.0))
}

/// `10 log10(max² / σ²)`.
pub fn psnr_of(truth_values: &[f64], sigma: f64) -> f64 {
    let max = truth_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    10.0 * (max * max / (sigma * sigma)).log10()
}

/// Which observations are removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missing {
    None,
    /// Each point dropped independently with probability `rate`.
    Random { rate: f64 },
    /// Points inside `region` dropped.
    Block { region: Aabb },
    /// Block drop, then random drop among survivors so the total rate
    /// reaches `rate` (if the block alone already exceeds it, nothing more).
    BlockRandom { region: Aabb, rate: f64 },
}

impl Missing {
    pub fn rate(&self) -> Option<f64> {
        match *self {
            Missing::Random { rate } | Missing::BlockRandom { rate, .. } => Some(rate),
            _ => None,
        }
    }
}

/// Indices of retained points, ascending.
pub fn apply_missing(points: &[Point3], scheme: &Missing, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if let Some(rate) = scheme.rate() {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidInput(format!("missing rate {rate} outside [0, 1)")));
        }
    }
    let drop_random = |idx: Vec<usize>, p: f64, rng: &mut ChaCha8Rng| -> Vec<usize> {
        idx.into_iter().filter(|_| rng.random::<f64>() >= p).collect()
    };
    let all: Vec<usize> = (0..points.len()).collect();
    let outside = |r: &Aabb| -> Vec<usize> { all.iter().copied().filter(|&i| !r.contains(&points[i])).collect() };
    let kept = match scheme {
        Missing::None => all.clone(),
        Missing::Random { rate } => drop_random(all.clone(), *rate, rng),
        Missing::Block { region } => outside(region),
        Missing::BlockRandom { region, rate } => {
            let survivors = outside(region);
            let block_rate = 1.0 - survivors.len() as f64 / points.len().max(1) as f64;
            let extra = if block_rate >= *rate { 0.0 } else { (rate - block_rate) / (1.0 - block_rate) };
            drop_random(survivors, extra, rng)
        }
    };
    if kept.is_empty() {
        return Err(Error::InvalidInput("missing-data scheme removed every observation".into()));
    }
    Ok(kept)
}

/// Mean squared prediction error over the evaluation points that lie in the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mise {
    pub value: f64,
    /// Points not located in the mesh.
    pub excluded: usize,
}

pub fn mise(fit: &FitResult, truth: &TruthFn, points: &[Point3]) -> Result<Mise> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for p in points {
        if let Some(v) = fit.field.eval(p) {
            let e = v - truth.eval(p)?;
            sum += e * e;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidInput("no evaluation point lies inside the mesh".into()));
    }
    Ok(Mise { value: sum / used as f64, excluded: points.len() - used })
}

/// One data-generating setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub truth: Truth,
    pub design: Design,
    pub psnr: f64,
    #[serde(default = "missing_none")]
    pub missing: Missing,
}

fn missing_none() -> Missing {
    Missing::None
}

/// A named fitting procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub fit: FitConfig,
}

impl Method {
    pub fn tpst() -> Self {
        Method { name: "tpst".into(), fit: FitConfig::default() }
    }

    pub fn atpst() -> Self {
        Method { name: "atpst".into(), fit: FitConfig { adaptive: Some(AdaptiveConfig::default()), ..FitConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub domain: DomainSpec,
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
}

fn default_methods() -> Vec<Method> {
    vec![Method::tpst(), Method::atpst()]
}

fn default_replications() -> usize {
    20
}

fn default_eval_points() -> usize {
    5000
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            domain: DomainSpec::default(),
            scenarios: vec![Scenario {
                name: "smooth".into(),
                truth: Truth::Smooth,
                design: Design::Random { n: 2000 },
                psnr: 10.0,
                missing: Missing::None,
            }],
            methods: default_methods(),
            replications: default_replications(),
            seed: 0,
            eval_points: default_eval_points(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.eval_points == 0 {
            return bad("eval_points must be at least 1".into());
        }
        if self.scenarios.is_empty() || self.methods.is_empty() {
            return bad("need at least one scenario and one method".into());
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.scenarios {
            if !names.insert(&s.name) {
                return bad(format!("duplicate scenario name {:?}", s.name));
            }
            if !s.psnr.is_finite() {
                return bad(format!("scenario {:?}: PSNR must be finite", s.name));
            }
            if let Some(rate) = s.missing.rate() {
                if !(0.0..=0.5).contains(&rate) {
                    return bad(format!("scenario {:?}: missing rate {rate} outside [0, 0.5]", s.name));
                }
            }
            TruthFn::new(&s.truth, &self.domain.bounds)?;
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            if !names.insert(&m.name) {
                return bad(format!("duplicate method name {:?}", m.name));
            }
            m.fit.validate()?;
        }
        Ok(())
    }
}

/// Outcome of one (scenario, method, replication) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub scenario: String,
    pub method: String,
    pub replication: usize,
    /// Observations used after the missing-data step.
    pub n: usize,
    pub sigma: f64,
    pub rss: f64,
    pub mise: f64,
    pub lambda: f64,
    pub c: Option<f64>,
    pub edf: f64,
    pub excluded: usize,
    #[serde(skip)]
    pub seconds: f64,
}

/// Mean and standard error over the replications of one (scenario, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub method: String,
    pub replications: usize,
    pub mise_mean: f64,
    pub mise_se: f64,
    pub rss_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub records: Vec<Record>,
    pub summary: Vec<Summary>,
}

impl SimReport {
    pub fn summary_for(&self, scenario: &str, method: &str) -> Option<&Summary> {
        self.summary.iter().find(|s| s.scenario == scenario && s.method == method)
    }

    /// MISE per replication, in replication order.
    pub fn mise_series(&self, scenario: &str, method: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method)
            .map(|r| r.mise)
            .collect()
    }

    pub fn write_report_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "method", "replication", "seconds"])?;
        for r in &self.records {
            w.write_record([r.scenario.clone(), r.method.clone(), r.replication.to_string(), r.seconds.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `report.csv`, `summary.json` and `timings.csv` in `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_report_csv(std::fs::File::create(dir.join("report.csv"))?)?;
        self.write_timings_csv(std::fs::File::create(dir.join("timings.csv"))?)?;
        let summary = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(dir.join("summary.json"), summary + "\n")?;
        Ok(())
    }
}

fn model_key(c: &FitConfig) -> (usize, usize, u64) {
    (c.degree, c.smoothness, c.rank_tol.to_bits())
}

/// Mesh and models shared by every replication of an experiment.
pub struct Experiment {
    config: SimConfig,
    mesh: Arc<TetMesh>,
    models: HashMap<(usize, usize, u64), SplineModel>,
}

impl Experiment {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Arc::new(config.domain.mesh()?);
        let mut models = HashMap::new();
        for m in &config.methods {
            let key = model_key(&m.fit);
            if let std::collections::hash_map::Entry::Vacant(e) = models.entry(key) {
                e.insert(SplineModel::from_config(mesh.clone(), &m.fit)?);
            }
        }
        Ok(Experiment { config, mesh, models })
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.mesh
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn replication(&self, scenario: &Scenario, rep: usize) -> Result<Vec<Record>> {
        let cfg = &self.config;
        let label = |method: &str, e: Error| Error::Scenario {
            scenario: scenario.name.clone(),
            method: method.into(),
            replication: rep,
            source: Box::new(e),
        };
        let truth = TruthFn::new(&scenario.truth, &cfg.domain.bounds).map_err(|e| label("-", e))?;
        let setup = || -> Result<(Dataset, f64, Vec<Point3>)> {
            let pts = design_points(&scenario.design, &cfg.domain, &self.mesh, &mut rng_for(cfg.seed, rep, STAGE_DESIGN))?;
            let clean = pts.iter().map(|p| truth.eval(p)).collect::<Result<Vec<_>>>()?;
            let sigma = noise_sigma(&clean, scenario.psnr)?;
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let mut noise_rng = rng_for(cfg.seed, rep, STAGE_NOISE);
            let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut noise_rng)).collect();
            let kept = apply_missing(&pts, &scenario.missing, &mut rng_for(cfg.seed, rep, STAGE_MISSING))?;
            let data = Dataset::new(
                &self.mesh,
                kept.iter().map(|&i| pts[i]).collect(),
                kept.iter().map(|&i| noisy[i]).collect(),
            )?;
            let inside = |p: &Point3| cfg.domain.contains(p) && self.mesh.locate(p, 0.0).is_some();
            let eval = uniform_points(&cfg.domain, cfg.eval_points, &mut rng_for(cfg.seed, rep, STAGE_EVAL), inside)?;
            Ok((data, sigma, eval))
        };
        let (data, sigma, eval) = setup().map_err(|e| label("-", e))?;
        let mut reduced = HashMap::new();
        let mut out = Vec::with_capacity(cfg.methods.len());
        for m in &cfg.methods {
            let key = model_key(&m.fit);
            let model = &self.models[&key];
            let start = Instant::now();
            let mut run = || -> Result<(FitResult, Mise)> {
                if !reduced.contains_key(&key) {
                    reduced.insert(key, model.reduce(&data)?);
                }
                let fit = model.fit_reduced(&reduced[&key], &m.fit)?;
                let err = mise(&fit, &truth, &eval)?;
                Ok((fit, err))
            };
            let (fit, err) = run().map_err(|e| label(&m.name, e))?;
            out.push(Record {
                scenario: scenario.name.clone(),
                method: m.name.clone(),
                replication: rep,
                n: data.len(),
                sigma,
                rss: fit.rss,
                mise: err.value,
                lambda: fit.lambda,
                c: fit.c,
                edf: fit.edf,
                excluded: err.excluded,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Ok(out)
    }

    /// Every scenario, replication and method; replications run in parallel.
    pub fn run(&self) -> Result<SimReport> {
        let mut records = Vec::new();
        for scenario in &self.config.scenarios {
            let per_rep = (0..self.config.replications)
                .into_par_iter()
                .map(|rep| self.replication(scenario, rep))
                .collect::<Result<Vec<_>>>()?;
            records.extend(per_rep.into_iter().flatten());
        }
        let mut summary = Vec::new();
        for s in &self.config.scenarios {
            for m in &self.config.methods {
                let rows: Vec<&Record> = records.iter().filter(|r| r.scenario == s.name && r.method == m.name).collect();
                let k = rows.len() as f64;
                let mean = rows.iter().map(|r| r.mise).sum::<f64>() / k;
                let var = if rows.len() > 1 {
                    rows.iter().map(|r| (r.mise - mean).powi(2)).sum::<f64>() / (k - 1.0)
                } else {
                    0.0
                };
                summary.push(Summary {
                    scenario: s.name.clone(),
                    method: m.name.clone(),
                    replications: rows.len(),
                    mise_mean: mean,
                    mise_se: (var / k).sqrt(),
                    rss_mean: rows.iter().map(|r| r.rss).sum::<f64>() / k,
                });
            }
        }
        Ok(SimReport { records, summary })
    }
}

/// Builds the mesh and models, then runs every replication.
pub fn run_experiment(config: &SimConfig) -> Result<SimReport> {
    Experiment::new(config.clone())?.run()
}
