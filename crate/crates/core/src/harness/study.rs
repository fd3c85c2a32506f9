//! Monte-Carlo strong-error studies over dyadic time grids.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ErrorMetric, ExperimentConfig, Reference};
use crate::cache::Cache;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::noise::{
    sample_exact, sample_ito_sum, BrownianPath, ConvCovariance, PathSeed, SamplerMode, StochConv, StreamPurpose,
};
use crate::resolvent::{build_resolvent_table, ResolventTable, TimeGrid};
use crate::solvers::{becq_step_all, cq_weights, mlei_step_all, CQWeights, Method, Trajectory, TrajectoryMeta};

/// One row of the error table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub method: Method,
    pub steps: usize,
    pub dt: f64,
    pub strong_error: f64,
    pub stderr: f64,
}

/// Least-squares line through (log₂ dt, log₂ error) with a bootstrap interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClampEvent {
    pub mode: usize,
    pub lambda: f64,
    pub clamp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub metric: ErrorMetric,
    pub rows: Vec<ErrorRow>,
    /// None when the errors do not admit a fit (e.g. all zero).
    pub slopes: BTreeMap<Method, Option<SlopeFit>>,
}

impl ErrorTable {
    pub fn error(&self, method: Method, steps: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.steps == steps)
            .map(|r| r.strong_error)
    }

    pub fn slope(&self, method: Method) -> Option<SlopeFit> {
        self.slopes.get(&method).copied().flatten()
    }
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    /// Table for the configured metric.
    pub primary: ErrorMetric,
    pub tables: BTreeMap<ErrorMetric, ErrorTable>,
    pub sampler: SamplerMode,
    pub clamp_events: Vec<ClampEvent>,
    pub notes: Vec<String>,
}

impl StudyResult {
    pub fn table(&self) -> &ErrorTable {
        &self.tables[&self.primary]
    }

    pub fn table_for(&self, metric: ErrorMetric) -> &ErrorTable {
        &self.tables[&metric]
    }
}

/// OLS fit of log₂ err = slope · log₂ dt + intercept.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InsufficientLevels(format!(
            "{} points, a slope needs at least 3",
            points.len()
        )));
    }
    if let Some(p) = points
        .iter()
        .find(|(dt, e)| !(*e > 0.0 && e.is_finite() && *dt > 0.0 && dt.is_finite()))
    {
        return Err(Error::DegenerateData(format!("cannot fit log of dt = {}, error = {}", p.0, p.1)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all dt values coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// RMS error over paths and its standard error (delta method).
pub fn strong_error(sq: &[f64]) -> (f64, f64) {
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let err = mean.sqrt();
    let se = if err > 0.0 { (var / n).sqrt() / (2.0 * err) } else { 0.0 };
    (err, se)
}

/// 90% percentile interval of the slope, resampling paths with replacement.
///
/// `sq[l][p]` is the squared error of path p at level l.
pub fn bootstrap_slope_ci(dts: &[f64], sq: &[Vec<f64>], samples: usize, master_seed: u64) -> Option<(f64, f64)> {
    let n_paths = sq.first()?.len();
    let mut rng = PathSeed::new(master_seed, 0, 0).ok()?.rng(StreamPurpose::Bootstrap);
    let mut slopes = Vec::with_capacity(samples);
    let mut idx = vec![0usize; n_paths];
    for _ in 0..samples {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..n_paths);
        }
        let pts: Vec<(f64, f64)> = dts
            .iter()
            .zip(sq)
            .map(|(&dt, level)| {
                let mean = idx.iter().map(|&i| level[i]).sum::<f64>() / n_paths as f64;
                (dt, mean.sqrt())
            })
            .collect();
        if let Ok((s, _)) = fit_slope(&pts) {
            slopes.push(s);
        }
    }
    if slopes.is_empty() {
        return None;
    }
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (slopes.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        if i + 1 < slopes.len() {
            slopes[i] * (1.0 - frac) + slopes[i + 1] * frac
        } else {
            slopes[i]
        }
    };
    Some((q(0.05), q(0.95)))
}

// Everything shared by all paths.
struct Setup {
    instance: ProblemInstance,
    sampler: SamplerMode,
    ref_grid: TimeGrid,
    levels: Vec<TimeGrid>,
    ref_table: ResolventTable,
    level_tables: Vec<ResolventTable>,
    covs: Vec<Option<ConvCovariance>>,
    ref_cq: CQWeights,
    level_cq: Vec<CQWeights>,
}

fn build_setup(cfg: &ExperimentConfig, levels: &[usize], ref_steps: usize) -> Result<Setup> {
    let instance = cfg.instance()?;
    let sampler = cfg.sampler();
    let cache = cfg.study.cache_dir.as_ref().map(Cache::new).transpose()?;
    let ref_grid = cfg.grid(ref_steps)?;
    let table_for = |grid: &TimeGrid| -> Result<ResolventTable> {
        let build = || build_resolvent_table(&instance.spectrum, &instance.kernel, grid);
        match &cache {
            Some(c) => c.table(&instance.kernel, grid, instance.spectrum.lambdas(), build),
            None => build(),
        }
    };
    let level_grids: Vec<TimeGrid> = levels.iter().map(|&l| cfg.grid(l)).collect::<Result<_>>()?;
    let uses_mlei = cfg.study.methods.contains(&Method::Mlei) || cfg.study.reference == Reference::Mlei;
    let ref_table = table_for(&ref_grid)?;
    let level_tables = if uses_mlei {
        level_grids.iter().map(table_for).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mus = instance.mus_or_zero();
    let covs = if sampler == SamplerMode::ExactCholesky {
        instance
            .spectrum
            .lambdas()
            .iter()
            .zip(&mus)
            .map(|(&lambda, &mu)| {
                if mu == 0.0 {
                    return Ok(None);
                }
                let build = || ConvCovariance::new(lambda, mu, &instance.kernel, &ref_grid, cfg.study.quad_tol);
                let cov = match &cache {
                    Some(c) => c.covariance(&instance.kernel, &ref_grid, lambda, mu, build)?,
                    None => build()?,
                };
                Ok(Some(cov))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let alpha = instance.kernel.alpha();
    let ref_cq = cq_weights(alpha, ref_grid.dt(), ref_grid.steps())?;
    let level_cq = level_grids
        .iter()
        .map(|g| cq_weights(alpha, g.dt(), g.steps()))
        .collect::<Result<_>>()?;
    Ok(Setup {
        instance,
        sampler,
        ref_grid,
        levels: level_grids,
        ref_table,
        level_tables,
        covs,
        ref_cq,
        level_cq,
    })
}

// Noise for one path at the reference resolution.
struct PathNoise {
    conv: Vec<StochConv>,
    brownian: Option<BrownianPath>,
}

fn path_noise(setup: &Setup, master_seed: u64, p: usize, need_conv: bool) -> Result<PathNoise> {
    let inst = &setup.instance;
    let n = inst.modes();
    let grid = &setup.ref_grid;
    match setup.sampler {
        SamplerMode::ExactCholesky => {
            let conv = (0..n)
                .map(|k| match &setup.covs[k] {
                    Some(cov) => sample_exact(cov, PathSeed::new(master_seed, p, k)?),
                    None => Ok(StochConv::zeros(k, grid, SamplerMode::ExactCholesky)),
                })
                .collect::<Result<_>>()?;
            Ok(PathNoise { conv, brownian: None })
        }
        SamplerMode::ItoSum => {
            let path = BrownianPath::generate(grid, &inst.mus_or_zero(), master_seed, p)?;
            let conv = if need_conv {
                (0..n)
                    .map(|k| sample_ito_sum(&setup.ref_table, &path, k, grid))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            Ok(PathNoise {
                conv,
                brownian: Some(path),
            })
        }
    }
}

fn run_level(setup: &Setup, noise: &PathNoise, method: Method, level: Option<usize>) -> Result<Trajectory> {
    let grid = level.map_or(setup.ref_grid, |l| setup.levels[l]);
    match method {
        Method::Mlei => {
            let table = level.map_or(&setup.ref_table, |l| &setup.level_tables[l]);
            let conv: Vec<StochConv> = noise.conv.iter().map(|c| c.restrict(&grid)).collect::<Result<_>>()?;
            mlei_step_all(&setup.instance, table, &conv)
        }
        Method::Becq => {
            let path = noise
                .brownian
                .as_ref()
                .ok_or_else(|| Error::Config("becq needs the ito_sum sampler".into()))?
                .aggregate(&grid)?;
            let cq = level.map_or(&setup.ref_cq, |l| &setup.level_cq[l]);
            becq_step_all(&setup.instance, &path, cq)
        }
    }
}

// Squared errors of one path: [method][level] -> (final, sup).
fn path_errors(cfg: &ExperimentConfig, setup: &Setup, p: usize) -> Result<Vec<Vec<(f64, f64)>>> {
    let methods = &cfg.study.methods;
    let need_conv = methods.contains(&Method::Mlei) || cfg.study.reference == Reference::Mlei;
    let noise = path_noise(setup, cfg.study.master_seed, p, need_conv)?;
    let mut refs: BTreeMap<Method, Trajectory> = BTreeMap::new();
    let ref_methods: Vec<Method> = match cfg.study.reference {
        Reference::SelfReference => methods.clone(),
        Reference::Mlei => vec![Method::Mlei],
    };
    for &m in &ref_methods {
        refs.insert(m, run_level(setup, &noise, m, None)?);
    }
    methods
        .iter()
        .map(|&method| {
            let reference = match cfg.study.reference {
                Reference::SelfReference => &refs[&method],
                Reference::Mlei => &refs[&Method::Mlei],
            };
            (0..setup.levels.len())
                .map(|l| {
                    let tr = run_level(setup, &noise, method, Some(l))?;
                    let r = reference.restrict(&setup.levels[l])?;
                    let sq: Vec<f64> = tr
                        .u
                        .iter()
                        .zip(&r.u)
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum())
                        .collect();
                    let fin = *sq.last().expect("grid has points");
                    let sup = sq.iter().copied().fold(0.0, f64::max);
                    Ok((fin, sup))
                })
                .collect()
        })
        .collect()
}

fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the study described by `cfg`. Paths are processed in parallel and
/// aggregated in path order, so results do not depend on the worker count.
pub fn run_strong_error_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    cfg.validate_study()?;
    let setup = build_setup(cfg, &cfg.study.dt_levels, cfg.study.ref_level)?;
    let per_path: Vec<Vec<Vec<(f64, f64)>>> = with_workers(cfg.study.workers, || {
        (0..cfg.study.n_paths)
            .into_par_iter()
            .map(|p| path_errors(cfg, &setup, p))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut notes = Vec::new();
    let mut tables = BTreeMap::new();
    for metric in ErrorMetric::ALL {
        let mut rows = Vec::new();
        let mut slopes = BTreeMap::new();
        for (mi, &method) in cfg.study.methods.iter().enumerate() {
            let sq: Vec<Vec<f64>> = (0..setup.levels.len())
                .map(|l| {
                    per_path
                        .iter()
                        .map(|p| match metric {
                            ErrorMetric::FinalTime => p[mi][l].0,
                            ErrorMetric::SupOverGrid => p[mi][l].1,
                        })
                        .collect()
                })
                .collect();
            let dts: Vec<f64> = setup.levels.iter().map(|g| g.dt()).collect();
            let mut pts = Vec::new();
            for (l, g) in setup.levels.iter().enumerate() {
                let (e, se) = strong_error(&sq[l]);
                rows.push(ErrorRow {
                    method,
                    steps: g.steps(),
                    dt: g.dt(),
                    strong_error: e,
                    stderr: se,
                });
                pts.push((g.dt(), e));
            }
            let fit = match fit_slope(&pts) {
                Ok((slope, intercept)) => {
                    let (ci_lo, ci_hi) = bootstrap_slope_ci(&dts, &sq, cfg.study.bootstrap_samples, cfg.study.master_seed)
                        .unwrap_or((f64::NAN, f64::NAN));
                    Some(SlopeFit {
                        slope,
                        intercept,
                        ci_lo,
                        ci_hi,
                    })
                }
                Err(e) => {
                    notes.push(format!("{method} ({}): no slope, {e}", metric.as_str()));
                    None
                }
            };
            slopes.insert(method, fit);
        }
        tables.insert(metric, ErrorTable { metric, rows, slopes });
    }
    let clamp_events = setup
        .covs
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.as_ref().map(|c| (k, c)))
        .filter(|(_, c)| c.clamp() > 0.0)
        .map(|(k, c)| ClampEvent {
            mode: k + 1,
            lambda: c.lambda(),
            clamp: c.clamp(),
        })
        .collect();
    Ok(StudyResult {
        primary: cfg.study.error_metric,
        tables,
        sampler: setup.sampler,
        clamp_events,
        notes,
    })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_errors_csv<W: Write>(mut out: W, table: &ErrorTable) -> std::io::Result<()> {
    writeln!(out, "method,dt,strong_error,stderr")?;
    for r in &table.rows {
        writeln!(out, "{},{},{},{}", r.method, fmt_f(r.dt), fmt_f(r.strong_error), fmt_f(r.stderr))?;
    }
    Ok(())
}

pub fn write_errors_by_metric_csv<W: Write>(mut out: W, result: &StudyResult) -> std::io::Result<()> {
    writeln!(out, "metric,method,dt,strong_error,stderr")?;
    for (metric, table) in &result.tables {
        for r in &table.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                metric.as_str(),
                r.method,
                fmt_f(r.dt),
                fmt_f(r.strong_error),
                fmt_f(r.stderr)
            )?;
        }
    }
    Ok(())
}

pub fn write_slopes_csv<W: Write>(mut out: W, table: &ErrorTable) -> std::io::Result<()> {
    writeln!(out, "method,slope,ci_lo,ci_hi")?;
    for (method, fit) in &table.slopes {
        match fit {
            Some(f) => writeln!(out, "{method},{},{},{}", fmt_f(f.slope), fmt_f(f.ci_lo), fmt_f(f.ci_hi))?,
            None => writeln!(out, "{method},nan,nan,nan")?,
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Meta<'a> {
    master_seed: u64,
    config_hash: String,
    instance_hash: String,
    version: &'static str,
    error_metric: &'static str,
    sampler_mode: &'static str,
    n_paths: usize,
    clamp_events: &'a [ClampEvent],
    notes: &'a [String],
}

/// Writes errors.csv, errors_by_metric.csv, slopes.csv and meta.json.
pub fn write_study_outputs(dir: &Path, cfg: &ExperimentConfig, result: &StudyResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<std::io::BufWriter<std::fs::File>> {
        let p = dir.join(name);
        let f = std::fs::File::create(&p)?;
        written.push(p);
        Ok(std::io::BufWriter::new(f))
    };
    write_errors_csv(create("errors.csv")?, result.table())?;
    write_errors_by_metric_csv(create("errors_by_metric.csv")?, result)?;
    write_slopes_csv(create("slopes.csv")?, result.table())?;
    let meta = Meta {
        master_seed: cfg.study.master_seed,
        config_hash: cfg.hash(),
        instance_hash: cfg.instance_hash(),
        version: env!("CARGO_PKG_VERSION"),
        error_metric: result.primary.as_str(),
        sampler_mode: result.sampler.as_str(),
        n_paths: cfg.study.n_paths,
        clamp_events: &result.clamp_events,
        notes: &result.notes,
    };
    let mut f = create("meta.json")?;
    serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| Error::Io(e.into()))?;
    writeln!(f)?;
    Ok(written)
}

/// Outcome of the `[check]` thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

pub fn evaluate_checks(cfg: &ExperimentConfig, result: &StudyResult) -> CheckOutcome {
    let table = result.table();
    let check = cfg.effective_checks();
    let mut lines = Vec::new();
    let mut passed = true;
    for (method, [lo, hi]) in &check.slope {
        let ok = table.slope(*method).is_some_and(|f| f.slope >= *lo && f.slope <= *hi);
        let shown = table.slope(*method).map_or("none".into(), |f| format!("{:.4}", f.slope));
        lines.push(format!("{} slope {method} = {shown} in [{lo}, {hi}]", if ok { "PASS" } else { "FAIL" }));
        passed &= ok;
    }
    if let Some(min_ratio) = check.min_becq_over_mlei {
        let finest = *cfg.study.dt_levels.last().expect("validated");
        let ratio = match (table.error(Method::Becq, finest), table.error(Method::Mlei, finest)) {
            (Some(b), Some(m)) if m > 0.0 => b / m,
            _ => f64::NAN,
        };
        let ok = ratio >= min_ratio;
        lines.push(format!(
            "{} becq/mlei error ratio at M = {finest}: {ratio:.3} >= {min_ratio}",
            if ok { "PASS" } else { "FAIL" }
        ));
        passed &= ok;
    }
    if let Some(max_err) = check.max_error {
        let worst = table.rows.iter().map(|r| r.strong_error).fold(0.0, f64::max);
        let ok = worst <= max_err;
        lines.push(format!(
            "{} largest strong error {worst:.3e} <= {max_err:e}",
            if ok { "PASS" } else { "FAIL" }
        ));
        passed &= ok;
    }
    CheckOutcome { passed, lines }
}

/// Sample trajectories on the single configured grid; one per path and
/// method, with the same noise construction as the study.
pub fn run_trajectory_demo(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if cfg.study.dt_levels.len() != 1 {
        return Err(Error::Config(format!(
            "demo needs exactly one dt level, got {}",
            cfg.study.dt_levels.len()
        )));
    }
    let steps = cfg.study.dt_levels[0];
    let setup = build_setup(cfg, &[steps], steps)?;
    let instance_hash = cfg.instance_hash();
    with_workers(cfg.study.workers, || {
        (0..cfg.study.n_paths)
            .into_par_iter()
            .map(|p| {
                let noise = path_noise(&setup, cfg.study.master_seed, p, true)?;
                cfg.study
                    .methods
                    .iter()
                    .map(|&m| {
                        let mut tr = run_level(&setup, &noise, m, None)?;
                        tr.meta = TrajectoryMeta {
                            master_seed: Some(cfg.study.master_seed),
                            path_index: Some(p),
                            instance_hash: Some(instance_hash.clone()),
                        };
                        Ok(tr)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?
    .map(|v| v.into_iter().flatten().collect())
}

/// Writes trajectory_{method}_{path}.csv files.
pub fn write_trajectories(dir: &Path, trajectories: &[Trajectory]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    trajectories
        .iter()
        .map(|tr| {
            let p = dir.join(format!(
                "trajectory_{}_{}.csv",
                tr.method,
                tr.meta.path_index.unwrap_or(0)
            ));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&p)?);
            tr.write_csv(&mut f)?;
            f.flush()?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let dts = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let lin: Vec<(f64, f64)> = dts.iter().map(|&d| (d, d)).collect();
        let (s, i) = fit_slope(&lin).unwrap();
        assert!((s - 1.0).abs() < 1e-14 && i.abs() < 1e-12);
        let half: Vec<(f64, f64)> = dts.iter().map(|&d| (d, d.sqrt())).collect();
        assert!((fit_slope(&half).unwrap().0 - 0.5).abs() < 1e-14);
        let zero: Vec<(f64, f64)> = dts.iter().map(|&d| (d, 0.0)).collect();
        assert!(matches!(fit_slope(&zero), Err(Error::DegenerateData(_))));
        assert!(matches!(fit_slope(&lin[..2]), Err(Error::InsufficientLevels(_))));
    }

    #[test]
    fn delta_method_stderr() {
        let (e, se) = strong_error(&[1.0, 1.0, 1.0]);
        assert_eq!((e, se), (1.0, 0.0));
        let (e, se) = strong_error(&[0.0, 0.0]);
        assert_eq!((e, se), (0.0, 0.0));
    }

    #[test]
    fn bootstrap_interval_brackets_exact_slope() {
        let dts = [0.25, 0.125, 0.0625];
        let sq: Vec<Vec<f64>> = dts
            .iter()
            .map(|&d| (0..50).map(|p| d * d * (1.0 + 0.1 * ((p % 7) as f64))).collect())
            .collect();
        let (lo, hi) = bootstrap_slope_ci(&dts, &sq, 200, 1).unwrap();
        assert!(lo <= 1.0 + 1e-9 && hi >= 1.0 - 1e-9, "{lo} {hi}");
    }
}
