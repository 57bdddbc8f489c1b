use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use esp_core::{Algorithm, EspError, Ratio, Schedule, StorageSpec, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::generate::{generate_trace, SyntheticTraceParams};
use crate::io::ingest_csv;

/// Worker count override for sweeps.
pub const WORKERS_ENV: &str = "ESP_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic(SyntheticTraceParams),
}

/// Storage parameters; boundary levels are fractions of the capacity so
/// they follow a capacity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub capacity: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub mu_c: f64,
    pub mu_d: f64,
    pub initial_fraction: f64,
    pub terminal_fraction: f64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            capacity: 40.0,
            eta_c: 0.9,
            eta_d: 1.1,
            mu_c: 30.0,
            mu_d: 30.0,
            initial_fraction: 0.0,
            terminal_fraction: 0.0,
        }
    }
}

impl StorageConfig {
    pub fn to_spec(&self) -> Result<StorageSpec, CliError> {
        Ok(StorageSpec::new(
            self.capacity,
            self.eta_c,
            self.eta_d,
            self.mu_c,
            self.mu_d,
            self.initial_fraction * self.capacity,
            self.terminal_fraction * self.capacity,
        )?)
    }
}

/// The quantity varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Capacity, normalized per [`Normalization`].
    Capacity,
    /// Lookahead window of lka and rhc.
    Window,
    /// Common charge and discharge rate cap.
    Rate,
    /// eta_d / eta_c, split as eta_c = 1/sqrt(v), eta_d = sqrt(v).
    Efficiency,
    /// Initial and terminal level as a fraction of capacity.
    Boundary,
}

/// What capacity-axis values are relative to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    PeakDemand,
    /// Peak of demand net of renewable.
    PeakExcessDemand,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub normalize: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub trajectories: bool,
}

/// An experiment as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    #[serde(default)]
    pub storage: StorageConfig,
    pub algorithms: Vec<String>,
    /// Lookahead window when the sweep axis is not the window.
    #[serde(default)]
    pub window: usize,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
    /// Feasibility tolerance for the schedule check.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    esp_core::DEFAULT_TOL
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::BadInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::BadInput(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths resolve against the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let TraceSource::File(p) = &mut cfg.trace {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output.path.is_relative() {
            cfg.output.path = base.join(&cfg.output.path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sweep.values.is_empty() {
            return Err(CliError::BadInput("sweep values are empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(CliError::BadInput("no algorithms selected".into()));
        }
        for name in &self.algorithms {
            parse_algorithm(name, 0)?;
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::BadInput("sweep values must be finite".into()));
        }
        Ok(())
    }

    pub fn load_trace(&self) -> Result<Trace, CliError> {
        match &self.trace {
            TraceSource::File(p) => ingest_csv(p),
            TraceSource::Synthetic(params) => generate_trace(params),
        }
    }
}

/// Maps an algorithm id (`ofl`, `thb`, `thb_adaptive`, `lka`, `rhc`) to an
/// [`Algorithm`] with window `w`.
pub fn parse_algorithm(name: &str, w: usize) -> Result<Algorithm, CliError> {
    Ok(match name {
        "ofl" => Algorithm::Offline,
        "thb" => Algorithm::Thb { stats: None },
        "thb_adaptive" => Algorithm::ThbAdaptive,
        "lka" => Algorithm::Lka { window: w, stats: None },
        "rhc" => Algorithm::Rhc { window: w },
        other => return Err(CliError::BadInput(format!("unknown algorithm {other:?}"))),
    })
}

/// One algorithm at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub point: usize,
    pub axis_value: f64,
    pub algorithm: String,
    pub feasible: bool,
    pub total_cost: Option<f64>,
    /// Total cost per slot.
    pub average_cost: Option<f64>,
    /// Cost relative to `ofl` at the same point, `"inf"` when unbounded.
    pub ratio: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub axis: Axis,
    pub normalize: Normalization,
    pub algorithms: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn axis_label(&self) -> &'static str {
        match (self.axis, self.normalize) {
            (Axis::Capacity, Normalization::PeakDemand) => "B_over_peak",
            (Axis::Capacity, Normalization::PeakExcessDemand) => "B_over_peak_excess",
            (Axis::Capacity, Normalization::Absolute) => "B",
            (Axis::Window, _) => "W",
            (Axis::Rate, _) => "mu",
            (Axis::Efficiency, _) => "eta_d_over_eta_c",
            (Axis::Boundary, _) => "x0_over_B",
        }
    }

    /// Writes the rows as CSV, or JSON when the path ends in `.json`.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
            writeln!(out)?;
        } else {
            self.write_csv(&mut out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CliError> {
        writeln!(out, "{},algorithm,feasible,total_cost,average_cost,ratio,error", self.axis_label())?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.axis_value,
                r.algorithm,
                r.feasible,
                fmt_opt(r.total_cost),
                fmt_opt(r.average_cost),
                r.ratio.as_deref().unwrap_or(""),
                r.error.as_deref().map(|e| e.replace(',', ";")).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn peak(trace: &Trace, net: bool) -> f64 {
    trace
        .slots()
        .iter()
        .map(|s| if net { (s.demand - s.renewable).max(0.0) } else { s.demand })
        .fold(0.0, f64::max)
}

/// Spec and window for grid value `v`.
fn grid_point(cfg: &ExperimentConfig, trace: &Trace, v: f64) -> Result<(StorageSpec, usize), CliError> {
    let mut storage = cfg.storage.clone();
    let mut window = cfg.window;
    match cfg.sweep.axis {
        Axis::Capacity => {
            storage.capacity = match cfg.sweep.normalize {
                Normalization::PeakDemand => v * peak(trace, false),
                Normalization::PeakExcessDemand => v * peak(trace, true),
                Normalization::Absolute => v,
            }
        }
        Axis::Window => {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(CliError::BadInput(format!("window must be a non-negative integer, got {v}")));
            }
            window = v as usize;
        }
        Axis::Rate => {
            storage.mu_c = v;
            storage.mu_d = v;
        }
        Axis::Efficiency => {
            if v < 1.0 {
                return Err(CliError::BadInput(format!("efficiency ratio must be >= 1, got {v}")));
            }
            storage.eta_c = 1.0 / v.sqrt();
            storage.eta_d = v.sqrt();
        }
        Axis::Boundary => {
            storage.initial_fraction = v;
            storage.terminal_fraction = v;
        }
    }
    Ok((storage.to_spec()?, window))
}

fn run_one(alg: Algorithm, trace: &Trace, spec: &StorageSpec, tol: f64) -> Result<Schedule, EspError> {
    let sched = alg.run(trace, spec)?;
    let report = esp_core::validate_schedule(trace, spec, &sched, tol)?;
    if !report.is_feasible() {
        return Err(EspError::Infeasible {
            slot: report.violations.first().map(|v| v.slot).unwrap_or(0),
            reason: format!("{} schedule fails validation", alg.name()),
        });
    }
    Ok(sched)
}

fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::BadInput(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| CliError::BadInput(format!("worker pool: {e}")))
}

/// Runs every selected algorithm at every grid point. Instances an
/// algorithm cannot solve become rows flagged infeasible.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, CliError> {
    cfg.validate()?;
    let trace = cfg.load_trace()?;
    run_experiment_on(cfg, &trace)
}

/// As [`run_experiment`], on an already loaded trace.
pub fn run_experiment_on(cfg: &ExperimentConfig, trace: &Trace) -> Result<ResultTable, CliError> {
    let points = cfg
        .sweep
        .values
        .iter()
        .map(|&v| grid_point(cfg, trace, v))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.algorithms.len()).map(move |a| (p, a)))
        .collect();
    let t_len = trace.len() as f64;
    let pool = worker_pool()?;
    let mut runs: Vec<(usize, usize, Result<Schedule, EspError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, a)| {
                let (spec, w) = points[p];
                let alg = parse_algorithm(&cfg.algorithms[a], w).expect("validated");
                (p, a, run_one(alg, trace, &spec, cfg.tolerance))
            })
            .collect()
    });
    runs.sort_by_key(|(p, a, _)| (*p, *a));

    let mut rows = Vec::with_capacity(runs.len());
    for (p, a, res) in runs {
        let (feasible, total, err, levels) = match res {
            Ok(s) => (true, Some(s.cost), None, cfg.output.trajectories.then_some(s.levels)),
            Err(e) => (false, None, Some(e.to_string()), None),
        };
        rows.push(ResultRow {
            point: p,
            axis_value: cfg.sweep.values[p],
            algorithm: cfg.algorithms[a].clone(),
            feasible,
            total_cost: total,
            average_cost: total.map(|c| c / t_len),
            ratio: None,
            error: err,
            levels,
        });
    }
    fill_ratios(&mut rows);
    Ok(ResultTable {
        axis: cfg.sweep.axis,
        normalize: cfg.sweep.normalize,
        algorithms: cfg.algorithms.clone(),
        rows,
    })
}

fn fill_ratios(rows: &mut [ResultRow]) {
    let offline: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.algorithm == "ofl")
        .filter_map(|r| r.total_cost.map(|c| (r.point, c)))
        .collect();
    for r in rows.iter_mut() {
        let off = offline.iter().find(|(p, _)| *p == r.point).map(|(_, c)| *c);
        if let (Some(on), Some(off)) = (r.total_cost, off) {
            r.ratio = Some(match Ratio::of(on, off) {
                Ratio::Finite(v) => format!("{v:.6}"),
                Ratio::Unbounded => "inf".into(),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    CostVsAxis,
    RatioVsAxis,
    Trajectory,
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "cost_vs_axis" => Ok(PlotKind::CostVsAxis),
            "ratio_vs_axis" => Ok(PlotKind::RatioVsAxis),
            "trajectory" => Ok(PlotKind::Trajectory),
            other => Err(CliError::BadInput(format!(
                "unknown plot kind {other:?}; expected cost_vs_axis, ratio_vs_axis or trajectory"
            ))),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::CostVsAxis => "cost_vs_axis",
            PlotKind::RatioVsAxis => "ratio_vs_axis",
            PlotKind::Trajectory => "trajectory",
        })
    }
}

/// Writes a whitespace-separated series file: the axis (or slot) column and
/// one column per algorithm in configuration order. Missing values are `nan`.
/// Trajectories are taken from the first grid point.
pub fn emit_plot_data<W: Write>(table: &ResultTable, kind: PlotKind, mut out: W) -> Result<(), CliError> {
    let cell = |r: Option<&ResultRow>| -> String {
        let r = match r {
            Some(r) => r,
            None => return "nan".into(),
        };
        match kind {
            PlotKind::CostVsAxis => r.average_cost.map(|v| format!("{v:.6}")),
            _ => r.ratio.clone(),
        }
        .unwrap_or_else(|| "nan".into())
    };
    match kind {
        PlotKind::CostVsAxis | PlotKind::RatioVsAxis => {
            writeln!(out, "{} {}", table.axis_label(), table.algorithms.join(" "))?;
            let mut points: Vec<(usize, f64)> = table.rows.iter().map(|r| (r.point, r.axis_value)).collect();
            points.dedup();
            for (p, v) in points {
                let cells: Vec<String> = table
                    .algorithms
                    .iter()
                    .map(|a| cell(table.rows.iter().find(|r| r.point == p && &r.algorithm == a)))
                    .collect();
                writeln!(out, "{v} {}", cells.join(" "))?;
            }
        }
        PlotKind::Trajectory => {
            let cols: Vec<String> = table.algorithms.iter().map(|a| format!("x_{a}")).collect();
            writeln!(out, "t {}", cols.join(" "))?;
            let first = table.rows.first().map(|r| r.point);
            let series: Vec<Option<&Vec<f64>>> = table
                .algorithms
                .iter()
                .map(|a| {
                    table
                        .rows
                        .iter()
                        .find(|r| Some(r.point) == first && &r.algorithm == a)
                        .and_then(|r| r.levels.as_ref())
                })
                .collect();
            let len = series.iter().flatten().map(|s| s.len()).max().unwrap_or(0);
            for t in 0..len {
                let cells: Vec<String> = series
                    .iter()
                    .map(|s| s.and_then(|s| s.get(t)).map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into()))
                    .collect();
                writeln!(out, "{t} {}", cells.join(" "))?;
            }
        }
    }
    Ok(())
}
