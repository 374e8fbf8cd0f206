//! Experiment execution and CSV/manifest emission.
//!
//! Every replicate derives its stream from `(seed, experiment id, label,
//! replicate index)`, results are collected in replicate order and reduced
//! sequentially, and rows are sorted before writing, so output bytes do not
//! depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use stein_hmm::germ_grain::{
    covered_volume, isolated_count, sample_germs_with, GermGrainConfig, GermGrainError,
    GermGrainModel, GermGrainStatistic, RadiusSpec,
};
use stein_hmm::hmm::{
    default_k_max, mixing_constants, reconstruct, HmmError, HmmSpec, StackSampler,
};
use stein_hmm::occupancy::{
    occupancy_count, OccupancyConfig, OccupancyError, OccupancyFunctional, OccupancyModel,
};
use stein_hmm::perturb::{
    assemble_bounds, estimate_delta_moments, estimate_var_conditional, eval_h,
    variance_lower_bound, variance_lower_bound_model, AdditiveFunctional, Functional,
    PerturbError, SteinComponents, SteinEstimate, ValueSe,
};
use stein_hmm::stats::{self, StatsError};
use stein_hmm::voronoi::{
    sample_nuclei, voronoi_volume_estimate, VoronoiConfig, VoronoiError, VoronoiModel,
};
use stein_hmm::{exec, hmm::coupling_length, rng};

use crate::config::{ExperimentKind, FunctionalId, ResolvedConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error(transparent)]
    GermGrain(#[from] GermGrainError),
    #[error(transparent)]
    Voronoi(#[from] VoronoiError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One metric row of the generic results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub functional: String,
    pub n: u64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    /// `None` marks an exactly known value ("exact" in the CSV).
    pub stderr: Option<f64>,
}

/// Files produced by one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub results: PathBuf,
    pub manifest: PathBuf,
    pub samples: Option<PathBuf>,
    pub stein: Option<PathBuf>,
}

/// One-sigma width of the Dvoretzky-Kiefer-Wolfowitz envelope at sample size
/// `n`: the deviation level whose DKW tail probability matches one Gaussian
/// sigma (31.73%). Reported as the standard error of empirical Kolmogorov
/// distances.
pub fn dkw_sigma(n: usize) -> f64 {
    ((2.0f64 / 0.3173).ln() / (2.0 * n as f64)).sqrt()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Execute a resolved config and write its artifacts.
pub fn run(resolved: &ResolvedConfig) -> Result<RunArtifacts, RunError> {
    let out = Outputs::new(resolved);
    let mut emit = Emit::new(resolved);
    match resolved.config.experiment {
        ExperimentKind::Clt => run_clt(resolved, &mut emit)?,
        ExperimentKind::SteinBound => run_stein_bound(resolved, &mut emit)?,
        ExperimentKind::Tail => run_tail(resolved, &mut emit)?,
        ExperimentKind::Moments => run_moments(resolved, &mut emit)?,
        ExperimentKind::VarLower => run_var_lower(resolved, &mut emit)?,
    }
    out.write(resolved, emit)
}

/// Row accumulator for one run.
struct Emit {
    experiment: String,
    functional: String,
    seed: u64,
    rows: Vec<ResultRow>,
    samples_header: Vec<String>,
    samples: Vec<Vec<String>>,
    stein: Vec<SteinEstimate>,
}

impl Emit {
    fn new(resolved: &ResolvedConfig) -> Emit {
        Emit {
            experiment: resolved.config.id.clone(),
            functional: resolved
                .config
                .functional
                .map(|f| f.as_str().to_string())
                .unwrap_or_else(|| "none".to_string()),
            seed: resolved.config.seed,
            rows: Vec::new(),
            samples_header: Vec::new(),
            samples: Vec::new(),
            stein: Vec::new(),
        }
    }

    fn row(&mut self, n: usize, metric: &str, value: f64, stderr: Option<f64>) {
        self.rows.push(ResultRow {
            experiment: self.experiment.clone(),
            functional: self.functional.clone(),
            n: n as u64,
            seed: self.seed,
            metric: metric.to_string(),
            value,
            stderr,
        });
    }

    fn value_se(&mut self, n: usize, metric: &str, v: ValueSe) {
        self.row(n, metric, v.value, Some(v.stderr));
    }

    fn summary_rows(&mut self, point: &stats::CltPoint) {
        let n = point.n;
        self.row(n, "count", point.values.len() as f64, None);
        let mean = stats::mean(&point.values);
        let sd = point.variance().sqrt();
        self.row(n, "mean", mean, Some(sd / (point.values.len() as f64).sqrt()));
        self.row(n, "variance", point.variance(), Some(stats::variance_stderr(&point.values)));
        match &point.summary {
            Some(summary) => {
                self.row(
                    n,
                    "d_kolmogorov",
                    summary.d_kolmogorov,
                    Some(dkw_sigma(point.values.len())),
                );
            }
            None => self.row(n, "degenerate", 1.0, None),
        }
    }
}

/// Output paths derived from the config's output stem.
struct Outputs {
    stem: PathBuf,
}

impl Outputs {
    fn new(resolved: &ResolvedConfig) -> Outputs {
        Outputs { stem: resolved.output.clone() }
    }

    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut name = self.stem.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        name.push(suffix);
        self.stem.with_file_name(name)
    }

    fn write(&self, resolved: &ResolvedConfig, mut emit: Emit) -> Result<RunArtifacts, RunError> {
        if let Some(parent) = self.stem.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)
                    .map_err(|source| RunError::Io { path: parent.to_path_buf(), source })?;
            }
        }

        emit.rows.sort_by(|a, b| {
            (&a.functional, a.n, &a.metric).cmp(&(&b.functional, b.n, &b.metric))
        });
        let results = self.with_suffix(".csv");
        let mut writer = csv::Writer::from_path(&results)?;
        writer.write_record(["experiment", "functional", "n", "seed", "metric", "value", "stderr"])?;
        for row in &emit.rows {
            writer.write_record([
                row.experiment.as_str(),
                row.functional.as_str(),
                &row.n.to_string(),
                &row.seed.to_string(),
                row.metric.as_str(),
                &fmt(row.value),
                &row.stderr.map(fmt).unwrap_or_else(|| "exact".to_string()),
            ])?;
        }
        writer.flush().map_err(|source| RunError::Io { path: results.clone(), source })?;

        let samples = if emit.samples.is_empty() {
            None
        } else {
            let path = self.with_suffix(".samples.csv");
            let mut writer = csv::Writer::from_path(&path)?;
            writer.write_record(&emit.samples_header)?;
            for record in &emit.samples {
                writer.write_record(record)?;
            }
            writer.flush().map_err(|source| RunError::Io { path: path.clone(), source })?;
            Some(path)
        };

        let stein = if emit.stein.is_empty() {
            None
        } else {
            let path = self.with_suffix(".stein.csv");
            let mut writer = csv::Writer::from_path(&path)?;
            writer.write_record([
                "name",
                "n",
                "sigma2",
                "sigma2_stderr",
                "var_T",
                "var_T_stderr",
                "var_Tprime",
                "var_Tprime_stderr",
                "sum_abs3",
                "sum_abs3_stderr",
                "sum_sqrt6",
                "sum_sqrt6_stderr",
                "wass_bound",
                "wass_bound_stderr",
                "kol_bound",
                "kol_bound_stderr",
            ])?;
            for e in &emit.stein {
                writer.write_record([
                    e.name.as_str(),
                    &e.n.to_string(),
                    &fmt(e.sigma2.value),
                    &fmt(e.sigma2.stderr),
                    &fmt(e.var_t.value),
                    &fmt(e.var_t.stderr),
                    &fmt(e.var_tprime.value),
                    &fmt(e.var_tprime.stderr),
                    &fmt(e.sum_abs3.value),
                    &fmt(e.sum_abs3.stderr),
                    &fmt(e.sum_sqrt6.value),
                    &fmt(e.sum_sqrt6.stderr),
                    &fmt(e.wass_bound.value),
                    &fmt(e.wass_bound.stderr),
                    &fmt(e.kol_bound.value),
                    &fmt(e.kol_bound.stderr),
                ])?;
            }
            writer.flush().map_err(|source| RunError::Io { path: path.clone(), source })?;
            Some(path)
        };

        let manifest = self.with_suffix(".manifest.json");
        let mut manifest_config = resolved.config.clone();
        manifest_config.version = Some(env!("CARGO_PKG_VERSION").to_string());
        manifest_config.output = self.stem.clone();
        let text = serde_json::to_string_pretty(&manifest_config).expect("serializable config");
        fs::write(&manifest, text.as_bytes())
            .map_err(|source| RunError::Io { path: manifest.clone(), source })?;

        Ok(RunArtifacts { results, manifest, samples, stein })
    }
}

/// Master seed scoped to the experiment id.
fn master(resolved: &ResolvedConfig) -> u64 {
    rng::derive_master(resolved.config.seed, &resolved.config.id)
}

fn germ_config(resolved: &ResolvedConfig, n: usize) -> GermGrainConfig {
    let p = &resolved.config.germ_grain;
    GermGrainConfig {
        dimension: p.dimension,
        n,
        state_weights: p.state_weights.clone(),
        density_bounds: p.density_bounds,
        grain_volume_range: p.grain_volume_range,
        radii: RadiusSpec::MidpointVolume,
    }
}

fn voronoi_config(resolved: &ResolvedConfig, n: usize) -> VoronoiConfig {
    let p = &resolved.config.voronoi;
    VoronoiConfig {
        dimension: p.dimension,
        n,
        point_budget: p.point_budget,
        state_weights: p.state_weights.clone(),
        density_bounds: p.density_bounds,
    }
}

fn occupancy_config(resolved: &ResolvedConfig, n: usize) -> Result<OccupancyConfig, RunError> {
    let p = &resolved.config.occupancy;
    Ok(OccupancyConfig::new(p.alpha, n, p.emissions.into())?)
}

// ---------------------------------------------------------------------------
// clt
// ---------------------------------------------------------------------------

fn run_clt(resolved: &ResolvedConfig, emit: &mut Emit) -> Result<(), RunError> {
    let functional = resolved.config.functional.expect("validated");
    let replicates = resolved.config.replicates;
    let seed = master(resolved);
    match functional {
        FunctionalId::Additive => {
            emit.samples_header =
                ["n", "replicate", "value"].iter().map(|s| s.to_string()).collect();
            let f = AdditiveFunctional::new(resolved.config.additive.values.clone());
            let sampler = StackSampler::new(&resolved.model);
            for &n in &resolved.config.grid {
                let label = format!("clt/additive/n={n}");
                let values = exec::run_replicates(replicates, |rep| {
                    let mut stream = rng::stream(seed, &label, rep as u64);
                    eval_h(&f, &sampler.sample_stack(n, &mut stream))
                });
                for (rep, v) in values.iter().enumerate() {
                    emit.samples.push(vec![n.to_string(), rep.to_string(), fmt(*v)]);
                }
                emit.summary_rows(&stats::CltPoint::from_values(n, values));
            }
        }
        FunctionalId::OccupancyW => {
            emit.samples_header = ["alpha", "n", "L", "replicate", "W"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let p = &resolved.config.occupancy;
            for &n in &resolved.config.grid {
                let config = occupancy_config(resolved, n)?;
                let spec = config.build_spec(&resolved.model)?;
                let letters = config.letter_count();
                let sampler = StackSampler::new(&spec);
                let label = format!("clt/occupancy/n={n}");
                let values = exec::run_replicates(replicates, |rep| {
                    let mut stream = rng::stream(seed, &label, rep as u64);
                    let t = reconstruct(&sampler.sample_stack(n, &mut stream));
                    occupancy_count(&t.observed, letters).expect("symbols in range") as f64
                });
                for (rep, w) in values.iter().enumerate() {
                    emit.samples.push(vec![
                        fmt(p.alpha),
                        n.to_string(),
                        letters.to_string(),
                        rep.to_string(),
                        fmt(*w),
                    ]);
                }
                emit.summary_rows(&stats::CltPoint::from_values(n, values));
            }
        }
        FunctionalId::GermGrainFv | FunctionalId::GermGrainFi => {
            emit.samples_header = ["n", "replicate", "f_V", "f_V_stderr", "f_I"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let sampler = StackSampler::new(&resolved.model);
            let states = resolved.model.num_states();
            let points_per_germ = resolved.config.germ_grain.points_per_germ;
            for &n in &resolved.config.grid {
                let config = germ_config(resolved, n);
                let label = format!("clt/germ_grain/n={n}");
                let triples = exec::run_replicates(replicates, |rep| {
                    let mut stream = rng::stream(seed, &label, rep as u64);
                    let sample = sample_germs_with(&config, &sampler, states, &mut stream)
                        .expect("validated config");
                    let (fv, fv_se) =
                        covered_volume(&sample, points_per_germ * n, &mut stream);
                    (fv, fv_se, isolated_count(&sample) as f64)
                });
                for (rep, (fv, fv_se, fi)) in triples.iter().enumerate() {
                    emit.samples.push(vec![
                        n.to_string(),
                        rep.to_string(),
                        fmt(*fv),
                        fmt(*fv_se),
                        fmt(*fi),
                    ]);
                }
                let values: Vec<f64> = triples
                    .iter()
                    .map(|t| if functional == FunctionalId::GermGrainFv { t.0 } else { t.2 })
                    .collect();
                emit.summary_rows(&stats::CltPoint::from_values(n, values));
            }
        }
        FunctionalId::VoronoiPhi => {
            emit.samples_header = ["d", "n", "replicate", "phi", "phi_stderr"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let region = resolved.config.voronoi.region.clone();
            let sampler = StackSampler::new(&resolved.model);
            for &n in &resolved.config.grid {
                let config = voronoi_config(resolved, n);
                let measures = config.measures()?;
                let label = format!("clt/voronoi/n={n}");
                let pairs = exec::run_replicates(replicates, |rep| {
                    let mut stream = rng::stream(seed, &label, rep as u64);
                    let (nuclei, _) =
                        sample_nuclei(&config, &sampler, &measures, &mut stream);
                    voronoi_volume_estimate(&nuclei, &region, config.point_budget, &mut stream)
                        .expect("non-empty nuclei")
                });
                for (rep, (phi, se)) in pairs.iter().enumerate() {
                    emit.samples.push(vec![
                        config.dimension.to_string(),
                        n.to_string(),
                        rep.to_string(),
                        fmt(*phi),
                        fmt(*se),
                    ]);
                }
                let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                emit.summary_rows(&stats::CltPoint::from_values(n, values));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stein-bound
// ---------------------------------------------------------------------------

/// Model and functional for one grid point of a symbol-based experiment.
fn symbol_instance(
    resolved: &ResolvedConfig,
    n: usize,
) -> Result<(HmmSpec, Box<dyn Functional>), RunError> {
    match resolved.config.functional.expect("validated") {
        FunctionalId::Additive => Ok((
            resolved.model.clone(),
            Box::new(AdditiveFunctional::new(resolved.config.additive.values.clone())),
        )),
        FunctionalId::OccupancyW => {
            let config = occupancy_config(resolved, n)?;
            let spec = config.build_spec(&resolved.model)?;
            let letters = config.letter_count();
            Ok((spec, Box::new(OccupancyFunctional { letters })))
        }
        other => unreachable!("non-symbol functional {} rejected at validation", other.as_str()),
    }
}

fn run_stein_bound(resolved: &ResolvedConfig, emit: &mut Emit) -> Result<(), RunError> {
    let replicates = resolved.config.replicates;
    let stein = resolved.config.stein;
    let seed = master(resolved);
    for &n in &resolved.config.grid {
        let (spec, f) = symbol_instance(resolved, n)?;
        let sampler = StackSampler::new(&spec);
        let m = spec.stack_len(n);

        let label = format!("stein/sigma/n={n}");
        let values = exec::run_replicates(replicates, |rep| {
            let mut stream = rng::stream(seed, &label, rep as u64);
            eval_h(f.as_ref(), &sampler.sample_stack(n, &mut stream))
        });
        let sigma2 = ValueSe::new(
            stats::unbiased_variance(&values, stats::mean(&values)),
            stats::variance_stderr(&values),
        );

        let mut stream = rng::stream(seed, &format!("stein/var_t/n={n}"), 0);
        let (var_t, var_t_se) = estimate_var_conditional(
            &spec,
            f.as_ref(),
            n,
            stein.outer,
            stein.inner,
            &mut stream,
            false,
        )?;
        let mut stream = rng::stream(seed, &format!("stein/var_tprime/n={n}"), 0);
        let (var_tp, var_tp_se) = estimate_var_conditional(
            &spec,
            f.as_ref(),
            n,
            stein.outer,
            stein.inner,
            &mut stream,
            true,
        )?;

        let mut stream = rng::stream(seed, &format!("stein/abs3/n={n}"), 0);
        let m3 = estimate_delta_moments(&spec, f.as_ref(), n, 3.0, stein.moment_samples, &mut stream);
        let sum_abs3 = ValueSe::new(m3.sum(), m3.sum_stderr());

        let mut stream = rng::stream(seed, &format!("stein/abs6/n={n}"), 0);
        let m6 = estimate_delta_moments(&spec, f.as_ref(), n, 6.0, stein.moment_samples, &mut stream);
        let roots: Vec<ValueSe> = m6
            .estimates
            .iter()
            .zip(&m6.stderrs)
            .map(|(&v, &se)| ValueSe::new(v, se).sqrt())
            .collect();
        let sum_sqrt6 = ValueSe::new(
            roots.iter().map(|r| r.value).sum(),
            roots.iter().map(|r| r.stderr * r.stderr).sum::<f64>().sqrt(),
        );

        let components = SteinComponents {
            sigma2,
            var_t: ValueSe::new(var_t, var_t_se),
            var_tprime: ValueSe::new(var_tp, var_tp_se),
            sum_abs3,
            sum_sqrt6,
        };
        emit.value_se(n, "sigma2", sigma2);
        emit.value_se(n, "var_T", components.var_t);
        emit.value_se(n, "var_Tprime", components.var_tprime);
        emit.value_se(n, "sum_abs3", sum_abs3);
        emit.value_se(n, "sum_sqrt6", sum_sqrt6);
        let name = emit.functional.clone();
        match assemble_bounds(&name, n, m, components) {
            Ok(estimate) => {
                emit.value_se(n, "wass_bound", estimate.wass_bound);
                emit.value_se(n, "kol_bound", estimate.kol_bound);
                emit.stein.push(estimate);
            }
            Err(PerturbError::ZeroVariance(_)) => {
                emit.row(n, "zero_variance", 1.0, None);
            }
            Err(other) => return Err(other.into()),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tail
// ---------------------------------------------------------------------------

fn run_tail(resolved: &ResolvedConfig, emit: &mut Emit) -> Result<(), RunError> {
    let spec = &resolved.model;
    let mc = mixing_constants(spec, default_k_max(spec))?;
    let n = *resolved.config.grid.last().expect("non-empty grid");
    let replicates = resolved.config.replicates;
    let entry_index = resolved.config.tail.entry_index.min(spec.stack_len(n) - 1);
    let sampler = StackSampler::new(spec);
    let seed = master(resolved);
    let label = format!("tail/n={n}");
    let lengths = exec::run_replicates(replicates, |rep| {
        let mut stream = rng::stream(seed, &label, rep as u64);
        let stack = sampler.sample_stack(n, &mut stream);
        let fresh = sampler.sample_stack(n, &mut stream);
        coupling_length(&stack, entry_index, &fresh).expect("index in range")
    });

    emit.row(n, "mixing_k", mc.k as f64, None);
    emit.row(n, "mixing_epsilon", mc.epsilon, None);
    let mut fit_points = Vec::new();
    for t in 1..=resolved.config.tail.t_max {
        let threshold = t * mc.k;
        let hits = lengths.iter().filter(|s| s.at_least(threshold)).count() as f64;
        let p = hits / replicates as f64;
        let se = (p * (1.0 - p) / replicates as f64).sqrt();
        emit.row(n, &format!("exceedance_t{t}"), p, Some(se));
        emit.row(n, &format!("envelope_t{t}"), (1.0 - mc.epsilon).powi(t as i32), None);
        if p > 0.0 {
            fit_points.push((threshold as f64, p.ln()));
        }
    }
    if fit_points.len() >= 3 {
        let fit = stats::fit_linear(&fit_points)?;
        emit.row(n, "fitted_slope", fit.slope, Some(fit.slope_stderr));
    }
    emit.row(n, "envelope_slope", (1.0 - mc.epsilon).ln() / mc.k as f64, None);
    Ok(())
}

// ---------------------------------------------------------------------------
// moments
// ---------------------------------------------------------------------------

fn run_moments(resolved: &ResolvedConfig, emit: &mut Emit) -> Result<(), RunError> {
    let params = resolved.config.moments;
    let seed = master(resolved);
    emit.samples_header =
        ["n", "index", "estimate", "stderr"].iter().map(|s| s.to_string()).collect();
    let mut max_points = Vec::new();
    for &n in &resolved.config.grid {
        let (spec, f) = symbol_instance(resolved, n)?;
        let mut stream = rng::stream(seed, &format!("moments/n={n}"), 0);
        let moments =
            estimate_delta_moments(&spec, f.as_ref(), n, params.order, params.samples, &mut stream);
        for (i, (&est, &se)) in moments.estimates.iter().zip(&moments.stderrs).enumerate() {
            emit.samples.push(vec![n.to_string(), i.to_string(), fmt(est), fmt(se)]);
        }
        let max = moments.max();
        let argmax = moments
            .estimates
            .iter()
            .position(|&e| e == max)
            .unwrap_or(0);
        emit.row(n, "delta_moment_sum", moments.sum(), Some(moments.sum_stderr()));
        emit.row(n, "delta_moment_max", max, Some(moments.stderrs[argmax]));
        max_points.push(((n as f64).ln(), max));
    }
    if max_points.len() >= 3 {
        let fit = stats::fit_linear(&max_points)?;
        let top = *resolved.config.grid.last().expect("non-empty grid");
        emit.row(top, "max_vs_ln_n_slope", fit.slope, Some(fit.slope_stderr));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// var-lower
// ---------------------------------------------------------------------------

fn run_var_lower(resolved: &ResolvedConfig, emit: &mut Emit) -> Result<(), RunError> {
    let functional = resolved.config.functional.expect("validated");
    let params = resolved.config.var_lower;
    let replicates = resolved.config.replicates;
    let seed = master(resolved);
    for &n in &resolved.config.grid {
        let label_lb = format!("var-lower/bound/n={n}");
        let label_var = format!("var-lower/empirical/n={n}");
        let (lower, lower_se, values) = match functional {
            FunctionalId::Additive => {
                let f = AdditiveFunctional::new(resolved.config.additive.values.clone());
                let mut stream = rng::stream(seed, &label_lb, 0);
                let (lb, se) = variance_lower_bound(
                    &resolved.model,
                    &f,
                    n,
                    params.outer,
                    params.inner,
                    &mut stream,
                )?;
                let sampler = StackSampler::new(&resolved.model);
                let values = exec::run_replicates(replicates, |rep| {
                    let mut stream = rng::stream(seed, &label_var, rep as u64);
                    eval_h(&f, &sampler.sample_stack(n, &mut stream))
                });
                (lb, se, values)
            }
            FunctionalId::OccupancyW => {
                let config = occupancy_config(resolved, n)?;
                let model = OccupancyModel::new(&config, &resolved.model)?;
                let mut stream = rng::stream(seed, &label_lb, 0);
                let (lb, se) =
                    variance_lower_bound_model(&model, params.outer, params.inner, &mut stream)?;
                let values = sample_model_values(&model, replicates, seed, &label_var);
                (lb, se, values)
            }
            FunctionalId::GermGrainFv | FunctionalId::GermGrainFi => {
                let statistic = if functional == FunctionalId::GermGrainFv {
                    GermGrainStatistic::CoveredVolume {
                        points: resolved.config.germ_grain.points_per_germ * n,
                    }
                } else {
                    GermGrainStatistic::IsolatedCount
                };
                let model =
                    GermGrainModel::new(germ_config(resolved, n), &resolved.model, statistic)?;
                let mut stream = rng::stream(seed, &label_lb, 0);
                let (lb, se) =
                    variance_lower_bound_model(&model, params.outer, params.inner, &mut stream)?;
                let values = sample_model_values(&model, replicates, seed, &label_var);
                (lb, se, values)
            }
            FunctionalId::VoronoiPhi => {
                let model = VoronoiModel::new(
                    voronoi_config(resolved, n),
                    &resolved.model,
                    resolved.config.voronoi.region.clone(),
                )?;
                let mut stream = rng::stream(seed, &label_lb, 0);
                let (lb, se) =
                    variance_lower_bound_model(&model, params.outer, params.inner, &mut stream)?;
                let values = sample_model_values(&model, replicates, seed, &label_var);
                (lb, se, values)
            }
        };
        let variance = stats::unbiased_variance(&values, stats::mean(&values));
        let var_se = stats::variance_stderr(&values);
        let combined = (lower_se * lower_se + var_se * var_se).sqrt();
        emit.row(n, "var_lower_bound", lower, Some(lower_se));
        emit.row(n, "empirical_variance", variance, Some(var_se));
        emit.row(n, "dominated", f64::from(lower <= variance + 3.0 * combined), None);
    }
    Ok(())
}

fn sample_model_values<M: stein_hmm::perturb::CoordinateModel>(
    model: &M,
    replicates: usize,
    seed: u64,
    label: &str,
) -> Vec<f64> {
    exec::run_replicates(replicates, |rep| {
        let mut stream = rng::stream(seed, label, rep as u64);
        let obs = model.sample(&mut stream);
        model.evaluate(&obs, &mut stream)
    })
}

/// Read a generic results CSV back into rows.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, RunError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(ResultRow {
            experiment: record[0].to_string(),
            functional: record[1].to_string(),
            n: record[2].parse().unwrap_or(0),
            seed: record[3].parse().unwrap_or(0),
            metric: record[4].to_string(),
            value: record[5].parse().unwrap_or(f64::NAN),
            stderr: match &record[6] {
                "exact" => None,
                other => other.parse().ok(),
            },
        });
    }
    Ok(rows)
}
