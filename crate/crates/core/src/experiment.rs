//! Experiment harness: configuration files, ground-truth simulation, filter
//! runs and parameter sweeps with deterministic CSV output, and the bound
//! calculator front-end.
//!
//! Every computation runs inside a rayon pool of the configured size; results
//! are gathered by index, so output bytes do not depend on the worker count.
//! Wall-clock timings only appear when `record_timing` is set.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::{ExactEngine, JointPmf, DEFAULT_STATE_CAP};
use crate::graph::{EnlargedPartition, Partition, SpatialGraph};
use crate::metrics::bounds::{
    bias_bound, bias_eps0, corollary_bound, variance_bound, variance_eps0, Bound, BoundParams,
};
use crate::metrics::report::{bias_variance_report, format_bound, format_set, ReportConfig};
use crate::metrics::NormMode;
use crate::model::{FieldConfig, InitialDist, LocalModel, ModelSpec, ObsRecord};
use crate::particle::{FilterSpec, Resampling, Variant};

pub const METRICS_SCHEMA: &str = "fieldfilter-metrics/1";
pub const BOUNDS_SCHEMA: &str = "fieldfilter-bounds/1";

pub const METRICS_HEADER: &str = "step,site_set,variant,b,N,c,bias,variance,total,bias_bound,variance_bound,status,seed,wall_ms,replicate,m,partition_id,work,config_hash";

/// Partition layout of the blocked variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Block shape for lattice graphs.
    #[serde(default)]
    pub block_shape: Option<Vec<usize>>,
    /// Explicit blocks (used when `block_shape` is absent).
    #[serde(default)]
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Enlargement radius of the `enlarged` variant.
    #[serde(default)]
    pub b: usize,
    /// Number of offset tilings cycled through.
    #[serde(default = "one")]
    pub m: usize,
}

fn one() -> usize {
    1
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            block_shape: None,
            blocks: None,
            b: 0,
            m: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub b: Vec<usize>,
    #[serde(default)]
    pub particles: Vec<usize>,
    #[serde(default)]
    pub block_shape: Vec<Vec<usize>>,
    #[serde(default)]
    pub m: Vec<usize>,
    /// Iso-budget mode: choose `N = budget / Σ_K |K̄|` at every point.
    #[serde(default)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizon: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub resampling: Resampling,
    #[serde(default)]
    pub norm: NormMode,
    /// Site sets to report; every single site when absent.
    #[serde(default)]
    pub site_sets: Option<Vec<Vec<usize>>>,
    /// Observation file; observations are simulated from `seed` when absent.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default)]
    pub cap: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub record_timing: bool,
    /// Inline model; alternatively `model_file`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default = "default_init")]
    pub init: InitialDist,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_replicates() -> usize {
    10
}

fn default_particles() -> usize {
    1000
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Blocked, Variant::Enlarged]
}

fn default_init() -> InitialDist {
    InitialDist::Uniform
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub cap: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Load a config; relative `model_file` / `observations` paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(file) = cfg.model_file.take() {
            let model_path = base.join(file);
            let text = std::fs::read_to_string(&model_path)
                .map_err(|e| Error::Io(format!("{}: {e}", model_path.display())))?;
            cfg.model = Some(ModelSpec::from_toml(&text)?);
        }
        if let Some(obs) = cfg.observations.take() {
            cfg.observations = Some(base.join(obs));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(cap) = o.cap {
            self.cap = Some(cap);
        }
    }

    pub fn model_spec(&self) -> Result<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("config names no model".into()))
    }

    pub fn cap(&self) -> u128 {
        self.cap.map_or(DEFAULT_STATE_CAP, u128::from)
    }

    /// Hex SHA-256 of the result-affecting part of the config.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.workers = None;
        canonical.record_timing = false;
        let text = toml::to_string(&canonical).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// Short form of [`hash`](Self::hash) used in CSV rows.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        if self.variants.is_empty() {
            return Err(Error::InvalidArgument("no filter variants requested".into()));
        }
        if self.replicates < 2 {
            return Err(Error::InvalidArgument("replicates must be at least 2".into()));
        }
        if self.partition.m == 0 || self.sweep.m.contains(&0) {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        if self.partition.block_shape.is_none()
            && self.partition.blocks.is_none()
            && self.sweep.block_shape.is_empty()
            && self.variants.iter().any(|&v| v != Variant::Bootstrap)
        {
            return Err(Error::InvalidArgument(
                "blocked variants need partition.block_shape or partition.blocks".into(),
            ));
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Ground truth simulated deterministically from `seed`.
pub fn simulate(
    model: &LocalModel,
    init: &InitialDist,
    horizon: usize,
    seed: u64,
) -> Result<(Vec<FieldConfig>, Vec<ObsRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.simulate_trajectory(init, horizon, &mut rng)
}

pub fn states_to_csv(states: &[FieldConfig]) -> String {
    let width = states.first().map_or(0, FieldConfig::len);
    let mut out = String::from("step");
    for v in 0..width {
        let _ = write!(out, ",x{v}");
    }
    out.push('\n');
    for (t, s) in states.iter().enumerate() {
        let _ = write!(out, "{t}");
        for x in s.as_slice() {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

pub fn observations_to_csv(num_sites: usize, obs: &[ObsRecord]) -> String {
    let mut out = String::from("time");
    for v in 0..num_sites {
        let _ = write!(out, ",y{v}");
    }
    out.push('\n');
    for y in obs {
        let _ = write!(out, "{}", y.time);
        for v in &y.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn observations_from_csv(text: &str) -> Result<Vec<ObsRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty observation file".into()))?;
    if !header.starts_with("time") {
        return Err(Error::Parse("observation file must start with a `time,...` header".into()));
    }
    let width = header.split(',').count() - 1;
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != width + 1 {
                return Err(Error::Parse(format!("observation row {line:?} has the wrong width")));
            }
            let time = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad time {:?}", fields[0])))?;
            let values = fields[1..]
                .iter()
                .map(|f| f.parse().map_err(|_| Error::Parse(format!("bad value {f:?}"))))
                .collect::<Result<_>>()?;
            Ok(ObsRecord { time, values })
        })
        .collect()
}

/// Files produced by [`cmd_simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub states_csv: String,
    pub observations_csv: String,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub model_hash: String,
    pub config_hash: String,
    pub files: Vec<String>,
    pub rows: usize,
    pub skipped_rows: usize,
    /// seconds since the Unix epoch; the only non-reproducible field
    pub created: u64,
    #[serde(default)]
    pub wall_ms: Option<u128>,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig, model_hash: String) -> Self {
        Self {
            schema: METRICS_SCHEMA.into(),
            command: command.into(),
            seed: cfg.seed,
            model_hash,
            config_hash: cfg.hash(),
            files: Vec::new(),
            rows: 0,
            skipped_rows: 0,
            created: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_ms: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationOutput> {
    let spec = cfg.model_spec()?;
    let model = spec.build()?;
    let (states, obs) = simulate(&model, &cfg.init, cfg.horizon, cfg.seed)?;
    let mut manifest = Manifest::new("simulate", cfg, spec.hash());
    manifest.files = vec!["states.csv".into(), "observations.csv".into()];
    manifest.rows = states.len();
    Ok(SimulationOutput {
        states_csv: states_to_csv(&states),
        observations_csv: observations_to_csv(model.num_sites(), &obs),
        manifest,
    })
}

/// One configuration of a filter variant within a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub variant: Variant,
    pub b: usize,
    pub particles: usize,
    pub block_shape: Option<Vec<usize>>,
    pub m: usize,
}

/// Expand the sweep axes (or the base values, for a plain run) into points
/// in a fixed order: variant, block shape, m, b, N.
pub fn sweep_points(cfg: &ExperimentConfig, use_sweep: bool) -> Vec<SweepPoint> {
    let or_base = |axis: &Vec<usize>, base: usize| if use_sweep && !axis.is_empty() { axis.clone() } else { vec![base] };
    let shapes: Vec<Option<Vec<usize>>> = if use_sweep && !cfg.sweep.block_shape.is_empty() {
        cfg.sweep.block_shape.iter().cloned().map(Some).collect()
    } else {
        vec![cfg.partition.block_shape.clone()]
    };
    let bs = or_base(&cfg.sweep.b, cfg.partition.b);
    let ms = or_base(&cfg.sweep.m, cfg.partition.m);
    let ns = or_base(&cfg.sweep.particles, cfg.particles);

    let mut points = Vec::new();
    for &variant in &cfg.variants {
        match variant {
            Variant::Bootstrap => {
                for &n in &ns {
                    points.push(SweepPoint {
                        variant,
                        b: 0,
                        particles: n,
                        block_shape: None,
                        m: 1,
                    });
                }
            }
            Variant::Blocked | Variant::Enlarged => {
                let b_values: Vec<usize> = if variant == Variant::Blocked { vec![0] } else { bs.clone() };
                for shape in &shapes {
                    for &m in &ms {
                        for &b in &b_values {
                            for &n in &ns {
                                let point = SweepPoint {
                                    variant,
                                    b,
                                    particles: n,
                                    block_shape: shape.clone(),
                                    m,
                                };
                                if !points.contains(&point) {
                                    points.push(point);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    points
}

/// Partition schedule of a sweep point.
pub fn schedule_for(
    graph: &SpatialGraph,
    cfg: &ExperimentConfig,
    point: &SweepPoint,
) -> Result<Vec<EnlargedPartition>> {
    if point.variant == Variant::Bootstrap {
        return Ok(vec![EnlargedPartition::new(graph, Partition::whole(graph.num_vertices()), 0)?]);
    }
    match (&point.block_shape, &cfg.partition.blocks) {
        (Some(shape), _) => (0..point.m)
            .map(|j| {
                let offset: Vec<usize> = shape.iter().map(|&s| j * s / point.m).collect();
                let base = graph.shifted_partition(shape, &offset)?;
                EnlargedPartition::new(graph, base, point.b)
            })
            .collect(),
        (None, Some(blocks)) => {
            if point.m != 1 {
                return Err(Error::InvalidArgument("cycling needs a block_shape".into()));
            }
            let base = Partition::new(graph.num_vertices(), blocks.clone())?;
            Ok(vec![EnlargedPartition::new(graph, base, point.b)?])
        }
        (None, None) => Err(Error::InvalidArgument("no partition given".into())),
    }
}

/// Result of [`cmd_run`] / [`cmd_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOutput {
    pub csv: String,
    pub manifest: Manifest,
    pub skipped: usize,
}

struct PointOutcome {
    rows: Vec<String>,
    skipped: bool,
}

fn csv_float(x: f64) -> String {
    format!("{x}")
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    model: &LocalModel,
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    obs: &[ObsRecord],
    exact: &std::result::Result<Vec<JointPmf>, Error>,
    site_sets: &[Vec<usize>],
    config_hash: &str,
) -> PointOutcome {
    let started = Instant::now();
    let schedule = schedule_for(model.graph(), cfg, point);
    let blocks = schedule.as_ref().map_or(0, |s| s[0].len());
    let total_kbar = schedule
        .as_ref()
        .map_or(0, |s| s.iter().map(EnlargedPartition::total_enlarged_size).max().unwrap_or(0));
    let particles = match cfg.sweep.budget {
        Some(budget) if total_kbar > 0 => (budget as f64 / total_kbar as f64).round().max(1.0) as usize,
        _ => point.particles,
    };
    let work = particles * total_kbar;
    let prefix = |step: &str, set: &[usize]| {
        format!(
            "{step},{},{},{},{particles},{blocks}",
            format_set(set),
            point.variant.name(),
            point.b
        )
    };
    let skipped_rows = |reason: String| -> PointOutcome {
        let rows = site_sets
            .iter()
            .map(|set| {
                format!(
                    "{},,,,,,skipped: {},{},,,{},,{work},{config_hash}",
                    prefix("", set),
                    reason.replace(',', ";"),
                    cfg.seed,
                    point.m
                )
            })
            .collect();
        PointOutcome { rows, skipped: true }
    };

    let schedule = match schedule {
        Ok(s) => s,
        Err(e) => return skipped_rows(e.to_string()),
    };
    let exact = match exact {
        Ok(x) => x,
        Err(e) => return skipped_rows(e.to_string()),
    };
    let spec = FilterSpec {
        variant: point.variant,
        schedule,
        resampling: cfg.resampling,
        seed: cfg.seed,
    };
    let engine = ExactEngine::with_cap(model, cfg.cap());
    let report_cfg = ReportConfig {
        replicates: cfg.replicates,
        n_particles: particles,
        site_sets: site_sets.to_vec(),
        mode: cfg.norm,
        cap: cfg.cap(),
    };
    let report = engine
        .ideal_filter_run(&spec.schedule, &exact[0], obs)
        .and_then(|ideal| bias_variance_report(model, &spec, &cfg.init, obs, exact, &ideal, &report_cfg));
    let report = match report {
        Ok(r) => r,
        Err(e) => return skipped_rows(e.to_string()),
    };
    let wall = if cfg.record_timing {
        started.elapsed().as_millis().to_string()
    } else {
        String::new()
    };

    let status_of = |b: Option<Bound>| match b {
        Some(Bound::Value(_)) => "ok",
        Some(Bound::HypothesisNotSatisfied { .. }) => "ok; bounds hypothesis not satisfied",
        None => "ok; bounds not applicable",
    };
    let mut rows = Vec::new();
    for row in &report.rows {
        let status = if row.step == 0 { "ok" } else { status_of(row.bias_bound) };
        let common = |replicate: &str, variance: f64, total: f64| {
            format!(
                "{},{},{},{},{},{},{status},{},{wall},{replicate},{},{},{work},{config_hash}",
                prefix(&row.step.to_string(), &row.site_set),
                csv_float(row.bias),
                csv_float(variance),
                csv_float(total),
                format_bound(row.bias_bound),
                format_bound(row.variance_bound),
                cfg.seed,
                point.m,
                row.partition_id.map_or(String::new(), |p| p.to_string()),
            )
        };
        for (r, (v, t)) in row.replicate_variance.iter().zip(&row.replicate_total).enumerate() {
            rows.push(common(&r.to_string(), *v, *t));
        }
        rows.push(common("agg", row.variance.value, row.total.value));
    }
    // time averages over steps 1..=T, per site set: per replicate and aggregate
    let horizon = obs.len();
    if horizon > 0 {
        for (s, set) in site_sets.iter().enumerate() {
            let per_set: Vec<_> = report
                .rows
                .iter()
                .filter(|r| r.step > 0)
                .enumerate()
                .filter(|(i, _)| i % site_sets.len() == s)
                .map(|(_, r)| r)
                .collect();
            let mean = |f: &dyn Fn(&crate::metrics::ReportRow) -> f64| {
                per_set.iter().map(|r| f(r)).sum::<f64>() / horizon as f64
            };
            let bias = mean(&|r| r.bias);
            let mean_row = |replicate: &str, variance: f64, total: f64| {
                format!(
                    "{},{},{},{},,,{},{},{wall},{replicate},{},,{work},{config_hash}",
                    prefix("mean", set),
                    csv_float(bias),
                    csv_float(variance),
                    csv_float(total),
                    "ok",
                    cfg.seed,
                    point.m,
                )
            };
            for r in 0..cfg.replicates {
                rows.push(mean_row(
                    &r.to_string(),
                    mean(&|row| row.replicate_variance[r]),
                    mean(&|row| row.replicate_total[r]),
                ));
            }
            rows.push(mean_row(
                "agg",
                mean(&|row| row.variance.value),
                mean(&|row| row.total.value),
            ));
        }
    }
    PointOutcome { rows, skipped: false }
}

fn load_observations(cfg: &ExperimentConfig, model: &LocalModel) -> Result<Vec<ObsRecord>> {
    let obs = match &cfg.observations {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let obs = observations_from_csv(&text)?;
            obs.into_iter().take(cfg.horizon).collect()
        }
        None => simulate(model, &cfg.init, cfg.horizon, cfg.seed)?.1,
    };
    obs.iter().try_for_each(|y| model.check_obs(y))?;
    Ok(obs)
}

fn metrics(cfg: &ExperimentConfig, command: &str, use_sweep: bool) -> Result<MetricsOutput> {
    cfg.validate()?;
    let spec = cfg.model_spec()?;
    let model = spec.build()?;
    let pool = thread_pool(cfg.workers)?;
    let started = Instant::now();
    pool.install(|| {
        let obs = load_observations(cfg, &model)?;
        let site_sets = cfg
            .site_sets
            .clone()
            .unwrap_or_else(|| (0..model.num_sites()).map(|v| vec![v]).collect());
        let engine = ExactEngine::with_cap(&model, cfg.cap());
        let exact = JointPmf::from_initial(&model, &cfg.init, cfg.cap())
            .and_then(|mu| engine.filter_run(&mu, &obs));
        let config_hash = cfg.short_hash();
        let points = sweep_points(cfg, use_sweep);
        let outcomes: Vec<PointOutcome> = points
            .par_iter()
            .map(|p| run_point(&model, cfg, p, &obs, &exact, &site_sets, &config_hash))
            .collect();

        let mut csv = format!("# schema: {METRICS_SCHEMA}\n{METRICS_HEADER}\n");
        let mut skipped = 0;
        let mut rows = 0;
        for outcome in &outcomes {
            if outcome.skipped {
                skipped += outcome.rows.len();
            }
            rows += outcome.rows.len();
            for row in &outcome.rows {
                csv.push_str(row);
                csv.push('\n');
            }
        }
        let mut manifest = Manifest::new(command, cfg, spec.hash());
        manifest.files = vec!["metrics.csv".into()];
        manifest.rows = rows;
        manifest.skipped_rows = skipped;
        if cfg.record_timing {
            manifest.wall_ms = Some(started.elapsed().as_millis());
        }
        Ok(MetricsOutput {
            csv,
            manifest,
            skipped,
        })
    })
}

/// Every requested variant at the base configuration.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<MetricsOutput> {
    metrics(cfg, "run", false)
}

/// Every variant at every point of the sweep grid.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<MetricsOutput> {
    metrics(cfg, "sweep", true)
}

/// Parameter file of the `bounds` command: explicit points plus an optional
/// grid expanded around `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    #[serde(default)]
    pub point: Vec<BoundParams>,
    #[serde(default)]
    pub base: Option<BoundParams>,
    #[serde(default)]
    pub grid: BoundsGrid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsGrid {
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub n_particles: Vec<usize>,
    #[serde(default)]
    pub border_distance: Vec<usize>,
    #[serde(default)]
    pub kbar_inf: Vec<usize>,
    #[serde(default)]
    pub b: Vec<usize>,
}

impl BoundsConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn points(&self) -> Vec<BoundParams> {
        let mut out = self.point.clone();
        if let Some(base) = self.base {
            let axis = |v: &Vec<usize>, b: usize| if v.is_empty() { vec![b] } else { v.clone() };
            let eps = if self.grid.eps.is_empty() { vec![base.eps] } else { self.grid.eps.clone() };
            let dists: Vec<Option<usize>> = if self.grid.border_distance.is_empty() {
                vec![base.border_distance]
            } else {
                self.grid.border_distance.iter().map(|&d| Some(d)).collect()
            };
            for &e in &eps {
                for &n in &axis(&self.grid.n_particles, base.n_particles) {
                    for &d in &dists {
                        for &k in &axis(&self.grid.kbar_inf, base.kbar_inf) {
                            for &b in &axis(&self.grid.b, base.b) {
                                out.push(BoundParams {
                                    eps: e,
                                    n_particles: n,
                                    border_distance: d,
                                    kbar_inf: k,
                                    b,
                                    ..base
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const BOUNDS_HEADER: &str = "eps,kappa,r,delta,delta_k,delta_kbar,k_inf,kbar_inf,N,set_size,border_distance,b,bias_eps0,bias_bound,variance_eps0,variance_bound,corollary_bound,status";

/// Evaluate every bound at every parameter point.
pub fn cmd_bounds(cfg: &BoundsConfig) -> Result<String> {
    let mut csv = format!("# schema: {BOUNDS_SCHEMA}\n{BOUNDS_HEADER}\n");
    for p in cfg.points() {
        let mut notes = Vec::new();
        let mut eval = |name: &str, r: Result<Bound>| match r {
            Ok(Bound::Value(v)) => v.to_string(),
            Ok(Bound::HypothesisNotSatisfied { .. }) => {
                notes.push(format!("{name}: hypothesis not satisfied"));
                String::new()
            }
            Err(e) => {
                notes.push(format!("{name}: {e}"));
                String::new()
            }
        };
        let bias = eval("bias", bias_bound(&p));
        let var = eval("variance", variance_bound(&p));
        let cor = eval("corollary", corollary_bound(&p));
        let status = if notes.is_empty() { "ok".to_string() } else { notes.join("; ").replace(',', ";") };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{bias},{},{var},{cor},{status}",
            p.eps,
            p.kappa,
            p.r,
            p.delta,
            p.delta_k,
            p.delta_kbar,
            p.k_inf,
            p.kbar_inf,
            p.n_particles,
            p.set_size,
            p.border_distance.map_or("inf".to_string(), |d| d.to_string()),
            p.b,
            bias_eps0(p.delta),
            variance_eps0(p.delta, p.delta_kbar),
        );
    }
    Ok(csv)
}
