//! Config-driven orchestration: data, embedding, chart, normal form,
//! analytics, and the files each run leaves behind.

mod config;
mod report;

pub use config::*;
pub use report::{write_csv_rows, OrderScanRow};

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forced::{self, FrcPoint, PolarModel};
use crate::geometry::{fit_ssm, ChartMode, ChartOptions, SsmChart};
use crate::normal_form::{
    conjugacy_error, estimate_linear_part, fit_normal_form, predict_reduced, resonance_structure, to_normal_coordinates,
    to_polar, LinearOptions, LinearPart, NormalFormOptions, ReducedModel,
};
use crate::oracle::{invariance_residual, solve_autonomous_ssm};
use crate::poly::Series;
use crate::synth::{self, ObservableMap, VectorField};
use crate::trajectory::{delay_embed, finite_diff_derivative, max_norm_column, min_embedding_dimension, nmte, EmbeddedTrajectory, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Input,
    Embedding,
    Geometry,
    NormalForm,
    Analytics,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Embedding => "embedding",
            Stage::Geometry => "geometry",
            Stage::NormalForm => "normal form",
            Stage::Analytics => "analytics",
        }
    }

    /// Process exit code: 1 I/O, 2 fit, 3 normal form, 4 analytics.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Input => 1,
            Stage::Embedding | Stage::Geometry => 2,
            Stage::NormalForm => 3,
            Stage::Analytics => 4,
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage.name(), self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

/// Raw trajectories with their roles.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub series: Vec<(TimeSeries, Role)>,
}

fn build_system(cfg: &SystemConfig) -> Result<Box<dyn VectorField>> {
    Ok(match cfg {
        SystemConfig::StuartLandau {
            alpha0,
            beta,
            gamma,
            omega0,
        } => Box::new(synth::StuartLandau::new(*alpha0, *beta, *gamma, *omega0)?),
        SystemConfig::Duffing {
            damping,
            stiffness,
            beta,
        } => Box::new(synth::Duffing::new(*damping, *stiffness, *beta, None)?),
        SystemConfig::ModalLinear { eigenvalues } => Box::new(synth::ModalLinear::new(
            eigenvalues.iter().map(|e| Complex64::new(e[0], e[1])).collect(),
        )?),
        SystemConfig::SlowFast { .. } => Box::new(synth::slow_fast_poly(&cfg.slow_fast_spec().expect("slow-fast"))?),
    })
}

/// Simulates (or reads) every trajectory named in the config. Noise is
/// drawn from a single generator seeded by `seed`, trajectory by trajectory.
pub fn load_data(cfg: &PipelineConfig, seed: u64) -> Result<Dataset> {
    let mut series = Vec::new();
    match &cfg.input {
        InputConfig::Csv { files } => {
            for f in files {
                series.push((TimeSeries::load_csv(&f.path)?, f.role));
            }
        }
        InputConfig::Synth(s) => {
            let system = build_system(&s.system)?;
            let map = match &s.observable {
                Some(o) => Some(ObservableMap::from_terms(system.dim(), o.degree, o.channels, &o.terms)?),
                None => None,
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for tr in &s.trajectories {
                if tr.x0.len() != system.dim() {
                    return Err(Error::Dimension {
                        expected: system.dim(),
                        got: tr.x0.len(),
                    });
                }
                let states = synth::integrate_rk4(&system, &tr.x0, (0.0, tr.t_end), s.dt)?;
                let mut obs = match &map {
                    Some(m) => m.apply(&states)?,
                    None => states,
                };
                if let Some(noise) = &s.noise {
                    if noise.roles.contains(&tr.role) && noise.level > 0.0 {
                        for ch in 0..obs.channels() {
                            let amp = obs.values.row(ch).amax();
                            let dist = Normal::new(0.0, noise.level * amp).map_err(|e| Error::arg(e.to_string()))?;
                            for v in obs.values.row_mut(ch).iter_mut() {
                                *v += dist.sample(&mut rng);
                            }
                        }
                    }
                }
                series.push((obs, tr.role));
            }
        }
    }
    Ok(Dataset { series })
}

/// Embedded trajectories, their reduced coordinates and derivatives.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub p: usize,
    pub dt: f64,
    pub chart: SsmChart,
    pub embedded: Vec<(EmbeddedTrajectory, Role)>,
    pub eta: Vec<DMatrix<f64>>,
    pub eta_dot: Vec<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let total: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, total);
    let mut off = 0;
    for m in parts {
        out.columns_mut(off, m.ncols()).copy_from(m);
        off += m.ncols();
    }
    out
}

impl Prepared {
    fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.embedded.len()).filter(|&i| self.embedded[i].1 == role).collect()
    }

    /// Concatenated reduced states and derivatives for `role`, plus the
    /// column indices where each trajectory starts.
    pub fn stacked(&self, role: Role) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
        let idx = self.indices(role);
        let eta: Vec<&DMatrix<f64>> = idx.iter().map(|&i| &self.eta[i]).collect();
        let dot: Vec<&DMatrix<f64>> = idx.iter().map(|&i| &self.eta_dot[i]).collect();
        let mut breaks = Vec::new();
        let mut off = 0;
        for e in &eta {
            breaks.push(off);
            off += e.ncols();
        }
        (hstack(&eta), hstack(&dot), breaks)
    }

    pub fn has_test(&self) -> bool {
        !self.indices(Role::Test).is_empty()
    }
}

pub fn prepare(cfg: &PipelineConfig, data: &Dataset) -> StageResult<Prepared> {
    let mut warnings = Vec::new();
    let d = cfg.geometry.d;
    let first = &data.series.first().ok_or_else(|| StageError {
        stage: Stage::Input,
        source: Error::arg("no trajectories"),
    })?.0;
    let dt = first.dt;
    let channels = first.channels();
    for (s, _) in &data.series {
        if (s.dt - dt).abs() > 1e-6 * dt || s.channels() != channels {
            return Err(StageError {
                stage: Stage::Input,
                source: Error::arg("all trajectories must share dt and channel count"),
            });
        }
    }
    let p = if cfg.embedding.auto {
        min_embedding_dimension(d, 0, false)
    } else {
        cfg.embedding.p
    };
    let need = min_embedding_dimension(d, 0, false);
    if p * channels < need {
        let msg = format!(
            "embedding dimension {} is below 2d+1 = {need}; the chart may not be an embedding",
            p * channels
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut embedded = Vec::new();
    for (s, role) in &data.series {
        embedded.push((delay_embed(s, p, cfg.embedding.shift).at(Stage::Embedding)?, *role));
    }
    let train: Vec<EmbeddedTrajectory> = embedded
        .iter()
        .filter(|(_, r)| *r == Role::Train)
        .map(|(e, _)| e.clone())
        .collect();
    let mode = match &cfg.geometry.mode {
        GeometryMode::Default => ChartMode::Default,
        GeometryMode::FixedProjection(rows) => {
            let pdim = p * channels;
            if rows.len() != pdim || rows.iter().any(|r| r.len() != d) {
                return Err(StageError {
                    stage: Stage::Geometry,
                    source: Error::arg(format!("fixed projection must be {pdim} x {d}")),
                });
            }
            ChartMode::FixedProjection(DMatrix::from_fn(pdim, d, |i, j| rows[i][j]))
        }
    };
    let opts = ChartOptions {
        ridge: cfg.geometry.ridge,
        refine_iterations: cfg.geometry.refine_iterations,
    };
    let chart = fit_ssm(&train, d, cfg.geometry.order, &mode, &opts).at(Stage::Geometry)?;
    let mut eta = Vec::new();
    let mut eta_dot = Vec::new();
    for (e, _) in &embedded {
        let r = chart.project_all(&e.points).at(Stage::Geometry)?;
        eta_dot.push(finite_diff_derivative(&r, dt).at(Stage::Geometry)?);
        eta.push(r);
    }
    Ok(Prepared {
        p,
        dt,
        chart,
        embedded,
        eta,
        eta_dot,
        warnings,
    })
}

/// Linear part from training data, normalized so that unit normal-form
/// amplitude is unit amplitude of the first observable channel.
pub fn fit_linear(cfg: &PipelineConfig, prep: &Prepared) -> Result<LinearPart> {
    let (eta, dot, _) = prep.stacked(Role::Train);
    let max = (0..eta.ncols()).map(|j| eta.column(j).norm()).fold(0.0, f64::max);
    let opts = LinearOptions {
        regression_order: cfg.normalform.regression_order.unwrap_or(cfg.normalform.order),
        ..Default::default()
    };
    let mut linear = estimate_linear_part(&eta, &dot, cfg.normalform.cutoff * max, &opts)?;
    let row: Vec<f64> = prep.chart.v1.row(0).iter().copied().collect();
    linear.normalize_to_observable(&row)?;
    Ok(linear)
}

pub fn fit_reduced(
    cfg: &PipelineConfig,
    prep: &Prepared,
    linear: &LinearPart,
    order: usize,
    warm: Option<&ReducedModel>,
) -> Result<ReducedModel> {
    let (eta, dot, breaks) = prep.stacked(Role::Train);
    let structure = resonance_structure(linear, order, cfg.normalform.delta)?;
    let opts = NormalFormOptions {
        mode: cfg.normalform.mode,
        max_iterations: cfg.normalform.max_iterations,
        rel_tol: cfg.normalform.rel_tol,
        dt: prep.dt,
        breaks,
        warm_start: warm,
    };
    fit_normal_form(&eta, &dot, linear, &structure, &opts)
}

/// NMTE of the model's prediction from each trajectory's first sample,
/// measured in the embedding space.
pub fn trajectory_errors(prep: &Prepared, model: &ReducedModel, role: Role) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for i in prep.indices(role) {
        let (emb, _) = &prep.embedded[i];
        let eta0: DVector<f64> = prep.eta[i].column(0).into_owned();
        let steps = emb.len() - 1;
        let pred = predict_reduced(model, &eta0, steps, prep.dt)?;
        let y = prep.chart.lift_all(&pred)?;
        out.push(nmte(&emb.points, &y, &max_norm_column(&emb.points))?);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct Metrics {
    pub p: usize,
    pub shift: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub chart_order: usize,
    #[serde(rename = "N")]
    pub normal_form_order: usize,
    pub chart_residual: f64,
    pub train_nmte: Option<f64>,
    pub test_nmte: Option<f64>,
    pub train_nmte_per_trajectory: Vec<f64>,
    pub test_nmte_per_trajectory: Vec<f64>,
    pub conjugacy_residual: f64,
    pub mean_conjugacy_residual: f64,
    pub test_conjugacy_residual: Option<f64>,
    pub iterations: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub polar: Option<PolarModel>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct FrcCurve {
    pub f: f64,
    pub points: Vec<FrcPoint>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub prepared: Prepared,
    pub model: ReducedModel,
    pub polar: Option<PolarModel>,
    pub metrics: Metrics,
    pub frc: Vec<FrcCurve>,
    pub frc_omega: Vec<FrcCurve>,
    pub backbone: Vec<(f64, f64)>,
}

/// Observable channel `row` of the chart as a series in `eta`.
pub fn chart_observable(chart: &SsmChart, row: usize, trunc: usize) -> Series {
    let d = chart.d;
    let mut s = Series::zero(d, trunc);
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        s.add_term(e, Complex64::new(chart.v1[(row, i)], 0.0));
    }
    if let Some(exps) = chart.exponents() {
        for (k, e) in exps.columns().enumerate() {
            s.add_term(e.to_vec(), Complex64::new(chart.v[(row, k)], 0.0));
        }
    }
    s
}

/// Polar model in the gauge of the first observable channel, so that `rho`
/// is that channel's first-harmonic amplitude.
pub fn observable_polar(chart: &SsmChart, model: &ReducedModel) -> Result<PolarModel> {
    let g = model.observable_gauge(&chart_observable(chart, 0, model.order()))?;
    g.to_polar()
}

/// Largest normal-form amplitude of the first mode over the training data.
pub fn max_training_amplitude(prep: &Prepared, model: &ReducedModel) -> Result<f64> {
    let (eta, _, _) = prep.stacked(Role::Train);
    let mut best = 0.0f64;
    for j in 0..eta.ncols() {
        let z = to_normal_coordinates(model, &eta.column(j).into_owned())?;
        best = best.max(z[0].norm());
    }
    Ok(best)
}

pub fn run_pipeline(cfg: &PipelineConfig, seed: u64) -> StageResult<PipelineOutput> {
    cfg.validate().at(Stage::Input)?;
    let data = load_data(cfg, seed).at(Stage::Input)?;
    let prep = prepare(cfg, &data)?;
    let linear = fit_linear(cfg, &prep).at(Stage::NormalForm)?;
    let model = fit_reduced(cfg, &prep, &linear, cfg.normalform.order, None).at(Stage::NormalForm)?;
    let mut warnings = prep.warnings.clone();
    let polar = match observable_polar(&prep.chart, &model) {
        Ok(mut p) => {
            p.max_training_amplitude = Some(max_training_amplitude(&prep, &model).at(Stage::Analytics)?);
            Some(p)
        }
        Err(e) => {
            let msg = format!("no polar model: {e}");
            log::warn!("{msg}");
            warnings.push(msg);
            None
        }
    };
    let train = trajectory_errors(&prep, &model, Role::Train).at(Stage::Analytics)?;
    let test = trajectory_errors(&prep, &model, Role::Test).at(Stage::Analytics)?;
    let test_conj = if prep.has_test() {
        let (eta, dot, _) = prep.stacked(Role::Test);
        Some(conjugacy_error(&model, &eta, &dot).at(Stage::Analytics)? / eta.ncols() as f64)
    } else {
        None
    };
    let (frc, frc_omega, backbone) = analytics(cfg, polar.as_ref()).at(Stage::Analytics)?;
    let metrics = Metrics {
        p: prep.p,
        shift: cfg.embedding.shift,
        d: cfg.geometry.d,
        chart_order: cfg.geometry.order,
        normal_form_order: cfg.normalform.order,
        chart_residual: prep.chart.residual,
        train_nmte: mean(&train),
        test_nmte: mean(&test),
        train_nmte_per_trajectory: train,
        test_nmte_per_trajectory: test,
        conjugacy_residual: model.conjugacy_residual,
        mean_conjugacy_residual: model.mean_residual,
        test_conjugacy_residual: test_conj,
        iterations: model.iterations,
        eigenvalues: model.linear.lambda.iter().map(|l| [l.re, l.im]).collect(),
        polar: polar.clone(),
        warnings,
    };
    Ok(PipelineOutput {
        prepared: prep,
        model,
        polar,
        metrics,
        frc,
        frc_omega,
        backbone,
    })
}

type Analytics = (Vec<FrcCurve>, Vec<FrcCurve>, Vec<(f64, f64)>);

/// Response curves and backbone of a single-mode polar model.
pub fn analytics(cfg: &PipelineConfig, polar: Option<&PolarModel>) -> Result<Analytics> {
    let Some(polar) = polar.filter(|p| p.modes.len() == 1) else {
        if cfg.forcing.is_some() {
            return Err(Error::Unsupported("forced response needs a single-mode polar model".into()));
        }
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    };
    let top = polar.max_training_amplitude.unwrap_or(1.0).max(1e-9) * 1.5;
    let default_grid = GridSpec {
        min: top / 400.0,
        max: top,
        count: 400,
    };
    let rho_spec = cfg.forcing.as_ref().and_then(|f| f.rho_grid).unwrap_or(default_grid);
    let rho = rho_spec.values();
    let backbone = forced::backbone(polar, &rho)?.points;
    let Some(fc) = &cfg.forcing else {
        return Ok((Vec::new(), Vec::new(), backbone));
    };
    let mut amps = fc.amplitudes.clone();
    for c in &fc.calibration {
        amps.push(forced::calibrate_forcing(polar, c.omega, c.rho0)?);
    }
    let mut frc = Vec::new();
    let mut frc_omega = Vec::new();
    for &f in &amps {
        frc.push(FrcCurve {
            f,
            points: forced::frc_sweep(polar, f, &rho)?,
        });
        if let Some(g) = &fc.omega_grid {
            let mut pts = Vec::new();
            for om in g.values() {
                pts.extend(forced::frc_at_frequency(polar, f, om, &rho)?);
            }
            frc_omega.push(FrcCurve { f, points: pts });
        }
    }
    Ok((frc, frc_omega, backbone))
}

impl PipelineOutput {
    pub fn write(&self, cfg: &PipelineConfig, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        report::write_text(&dir.join("chart.json"), &self.prepared.chart.to_json())?;
        report::write_json(&dir.join("model.json"), &self.model.to_json(self.polar.as_ref()))?;
        report::write_json(&dir.join("metrics.json"), &serde_json::to_value(&self.metrics).expect("metrics"))?;
        report::write_backbone(&dir.join("backbone.csv"), &self.backbone)?;
        if cfg.forcing.is_some() {
            report::write_frc(&dir.join("frc.csv"), &self.frc)?;
            if !self.frc_omega.is_empty() {
                report::write_frc(&dir.join("frc_omega.csv"), &self.frc_omega)?;
            }
            report::write_json(&dir.join("forcing.json"), &serde_json::to_value(&cfg.forcing).expect("forcing"))?;
        }
        Ok(())
    }
}

/// Refits the normal form at each order (ascending, warm-started from the
/// previous one) on a fixed linear part.
pub fn run_orderscan(cfg: &PipelineConfig, orders: &[usize], seed: u64) -> StageResult<Vec<OrderScanRow>> {
    cfg.validate().at(Stage::Input)?;
    if orders.is_empty() || orders.iter().any(|&n| !(2..=MAX_ORDER).contains(&n)) {
        return Err(StageError {
            stage: Stage::Input,
            source: Error::arg(format!("orders must be nonempty and within 2..={MAX_ORDER}")),
        });
    }
    let data = load_data(cfg, seed).at(Stage::Input)?;
    let prep = prepare(cfg, &data)?;
    let linear = fit_linear(cfg, &prep).at(Stage::NormalForm)?;
    let mut sorted = orders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let (train_eta, train_dot, _) = prep.stacked(Role::Train);
    let test = prep.has_test().then(|| prep.stacked(Role::Test));
    let mut rows = Vec::new();
    let mut prev: Option<ReducedModel> = None;
    for &n in &sorted {
        let model = fit_reduced(cfg, &prep, &linear, n, prev.as_ref()).at(Stage::NormalForm)?;
        let train_error = conjugacy_error(&model, &train_eta, &train_dot).at(Stage::NormalForm)? / train_eta.ncols() as f64;
        let test_error = match &test {
            Some((e, d, _)) => Some(conjugacy_error(&model, e, d).at(Stage::NormalForm)? / e.ncols() as f64),
            None => None,
        };
        log::info!("order {n}: train {train_error:.6e}, test {test_error:?}");
        rows.push(OrderScanRow {
            order: n,
            train_error,
            test_error,
        });
        prev = Some(model);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct CoefficientComparison {
    pub name: String,
    pub oracle: f64,
    pub data: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub invariance_residual: Vec<f64>,
    pub oracle_polar: PolarModel,
    pub data_polar: PolarModel,
    pub coefficients: Vec<CoefficientComparison>,
    pub threshold: f64,
    pub pass: bool,
}

/// Runs the invariance-equation oracle and the data-driven pipeline on the
/// same slow-fast system and compares polar coefficients through cubic order.
pub fn run_oracle_compare(cfg: &PipelineConfig, seed: u64) -> StageResult<(OracleComparison, PipelineOutput)> {
    cfg.validate().at(Stage::Input)?;
    let input_err = |msg: &str| StageError {
        stage: Stage::Input,
        source: Error::arg(msg),
    };
    let InputConfig::Synth(s) = &cfg.input else {
        return Err(input_err("oracle comparison needs a synthetic slow_fast system"));
    };
    let spec = s
        .system
        .slow_fast_spec()
        .ok_or_else(|| input_err("oracle comparison needs a synthetic slow_fast system"))?;
    if s.observable.is_some() || cfg.embedding.p != 1 {
        return Err(input_err("oracle comparison observes the full state without delays (p = 1)"));
    }
    let ocfg = cfg.oracle.clone().unwrap_or(OracleConfig {
        m: 1,
        order: 7,
        delta: 1e-8,
        threshold: 0.02,
    });
    let system = synth::slow_fast_poly(&spec).at(Stage::Input)?;
    let oracle = solve_autonomous_ssm(&system, ocfg.m, ocfg.order, ocfg.delta).at(Stage::NormalForm)?;
    let residual = invariance_residual(&oracle, &system);
    let oracle_polar = oracle.observable_gauge(&system, 0).and_then(|g| g.to_polar()).at(Stage::NormalForm)?;

    let out = run_pipeline(cfg, seed)?;
    let data_polar = out.polar.clone().ok_or_else(|| StageError {
        stage: Stage::Analytics,
        source: Error::Unsupported("data-driven model has no polar form".into()),
    })?;
    let lam_scale = system.lambda[0].norm();
    let mut coefficients = Vec::new();
    for (j, (om, dm)) in oracle_polar.modes.iter().zip(&data_polar.modes).enumerate() {
        let pairs = [
            ("alpha0", om.alpha_coeffs.first(), dm.alpha_coeffs.first()),
            ("omega0", om.omega_coeffs.first(), dm.omega_coeffs.first()),
            ("beta", om.alpha_coeffs.get(1), dm.alpha_coeffs.get(1)),
            ("gamma", om.omega_coeffs.get(1), dm.omega_coeffs.get(1)),
        ];
        for (name, o, dv) in pairs {
            let o = o.copied().unwrap_or(0.0);
            let dv = dv.copied().unwrap_or(0.0);
            // zero oracle coefficients are judged against the spectral scale
            let floor = 1e-6 * lam_scale;
            let error = if o.abs() > floor {
                (dv - o).abs() / o.abs()
            } else if (dv - o).abs() <= floor {
                0.0
            } else {
                (dv - o).abs() / floor
            };
            let name = if oracle_polar.modes.len() > 1 {
                format!("{name}[{j}]")
            } else {
                name.to_string()
            };
            coefficients.push(CoefficientComparison {
                name,
                oracle: o,
                data: dv,
                error,
            });
        }
    }
    let pass = coefficients.iter().all(|c| c.error <= ocfg.threshold);
    Ok((
        OracleComparison {
            invariance_residual: residual,
            oracle_polar,
            data_polar,
            coefficients,
            threshold: ocfg.threshold,
            pass,
        },
        out,
    ))
}

/// Writes every configured trajectory as CSV plus `inputs.json`, a
/// ready-to-use `csv` input block.
pub fn run_simulate(cfg: &PipelineConfig, seed: u64, dir: &Path) -> StageResult<Vec<std::path::PathBuf>> {
    if !matches!(cfg.input, InputConfig::Synth(_)) {
        return Err(StageError {
            stage: Stage::Input,
            source: Error::arg("simulate needs a synthetic input block"),
        });
    }
    let data = load_data(cfg, seed).at(Stage::Input)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at(Stage::Input)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, (s, role)) in data.series.iter().enumerate() {
        let name = format!("traj_{i}.csv");
        let path = dir.join(&name);
        s.save_csv(&path).at(Stage::Input)?;
        entries.push(CsvInput {
            path: name.into(),
            role: *role,
        });
        files.push(path);
    }
    let block = serde_json::json!({ "csv": { "files": entries } });
    report::write_json(&dir.join("inputs.json"), &block).at(Stage::Input)?;
    Ok(files)
}

/// Response curves from a previously written `model.json`.
pub fn run_frc(cfg: &PipelineConfig, model_path: &Path, dir: &Path) -> StageResult<()> {
    let text = std::fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e)).at(Stage::Input)?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", model_path.display())))
        .at(Stage::Input)?;
    let (model, polar) = ReducedModel::from_json(&v).at(Stage::Input)?;
    let polar = match polar {
        Some(p) => p,
        None => to_polar(&model).at(Stage::Analytics)?,
    };
    let (frc, frc_omega, backbone) = analytics(cfg, Some(&polar)).at(Stage::Analytics)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at(Stage::Input)?;
    report::write_backbone(&dir.join("backbone.csv"), &backbone).at(Stage::Input)?;
    report::write_frc(&dir.join("frc.csv"), &frc).at(Stage::Input)?;
    if !frc_omega.is_empty() {
        report::write_frc(&dir.join("frc_omega.csv"), &frc_omega).at(Stage::Input)?;
    }
    Ok(())
}
