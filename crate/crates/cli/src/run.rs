//! Mode runners: each turns a resolved config into one table.

use std::fmt;

use xcov::bulk::{continuous_mass, edge, integrate_density, BulkLaw, DEFAULT_EPSILON};
use xcov::linalg::{squared_singular_values, SvdOptions};
use xcov::outliers::{phase_boundary, predict_outliers};
use xcov::overlaps::predict_overlaps;
use xcov::pls::{pls_mode_a_with, pls_svd_with, recovery_report};
use xcov::sim::{cross_cov, run_trials, top_triplets, trial_seed, Histogram, ModelConfig};
use xcov::{AspectRatios, Spike};

use crate::config::{config_error, ConfigError, ExperimentConfig, Mode};
use crate::overlay::{overlay_import, OverlayError};
use crate::table::{Cell, Table};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Overlay(OverlayError),
    Model(xcov::Error),
}

impl RunError {
    /// 3 for numerical defects, 2 for everything caused by the input.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Model(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Overlay(e) => write!(f, "overlay: {e}"),
            RunError::Model(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<OverlayError> for RunError {
    fn from(e: OverlayError) -> Self {
        RunError::Overlay(e)
    }
}

/// Parameter errors name the offending model key; other errors pass through.
impl From<xcov::Error> for RunError {
    fn from(e: xcov::Error) -> Self {
        match e {
            xcov::Error::InvalidParameter { name, reason } => RunError::Config(config_error(name, reason)),
            other => RunError::Model(other),
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn svd_options() -> SvdOptions {
    SvdOptions { tol: 1e-8, ..SvdOptions::default() }
}

pub fn run(config: &ExperimentConfig) -> Result<Table> {
    let ratios = config.aspect_ratios()?;
    let spikes = config.spike_list()?;
    match config.mode() {
        Mode::TheoryBulk => theory_bulk(config, ratios),
        Mode::TheoryOutliers => theory_outliers(ratios, &spikes),
        Mode::TheoryOverlaps => theory_overlaps(ratios, &spikes),
        Mode::TheoryPhase => theory_phase(config, ratios),
        Mode::SimSpectrum => sim_spectrum(config, ratios, spikes),
        Mode::SimBbpSweep => sim_bbp_sweep(config, ratios),
        Mode::PlsRun => pls_run(config, ratios, spikes),
    }
}

fn required<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value.clone().ok_or_else(|| config_error(key, "missing").into())
}

fn theory_bulk(config: &ExperimentConfig, ratios: AspectRatios) -> Result<Table> {
    let law = BulkLaw::new(ratios)?;
    let eps = config.epsilon.unwrap_or(DEFAULT_EPSILON);
    let mut table = Table::new(&["x", "density"]);
    for x in required(&config.x_grid, "x_grid")?.values() {
        table.push(vec![x.into(), law.density(x, eps)?.into()]);
    }
    let integrated = integrate_density(&ratios, 0.0, law.edge_squared(), eps)?;
    eprintln!("continuous mass {:.6}, integrated density {integrated:.6}", continuous_mass(&ratios));
    Ok(table)
}

fn theory_outliers(ratios: AspectRatios, spikes: &[Spike]) -> Result<Table> {
    let mut table = Table::new(&["spike_index", "branch", "r_value", "position", "detectable"]);
    for p in predict_outliers(&ratios, spikes)? {
        table.push(vec![p.spike_index.into(), p.branch.label().into(), p.r_value.into(), p.position.into(), p.detectable.into()]);
    }
    Ok(table)
}

fn theory_overlaps(ratios: AspectRatios, spikes: &[Spike]) -> Result<Table> {
    let mut table = Table::new(&["spike_index", "branch", "m_x", "m_y"]);
    for p in predict_overlaps(&ratios, spikes)? {
        table.push(vec![p.spike_index.into(), p.branch.label().into(), p.m_x.into(), p.m_y.into()]);
    }
    Ok(table)
}

fn theory_phase(config: &ExperimentConfig, ratios: AspectRatios) -> Result<Table> {
    let grid = required(&config.lambda_x_grid, "lambda_x_grid")?.values();
    let mut overlay_points = Vec::new();
    for path in config.overlays.iter().flatten() {
        for curve in overlay_import(path)? {
            let label = curve.label.unwrap_or_default();
            overlay_points.extend(curve.points.into_iter().map(|(x, y)| (label.clone(), x, y)));
        }
    }
    let mut boundary = Vec::new();
    for rho in required(&config.rhos, "rhos")? {
        for p in phase_boundary(&ratios, rho, &grid)? {
            boundary.push((rho, p.lambda_x, p.critical_lambda_y.as_f64()));
        }
    }
    let with_overlays = config.overlays.is_some();
    let mut columns = vec!["rho", "lambda_x", "critical_lambda_y"];
    if with_overlays {
        columns.extend(["overlay_label", "overlay_x", "overlay_y"]);
    }
    let mut table = Table::new(&columns);
    for i in 0..boundary.len().max(overlay_points.len()) {
        let mut row = match boundary.get(i) {
            Some(&(rho, lx, ly)) => vec![rho.into(), lx.into(), ly.into()],
            None => vec![Cell::Empty, Cell::Empty, Cell::Empty],
        };
        if with_overlays {
            match overlay_points.get(i) {
                Some((label, x, y)) => row.extend([label.as_str().into(), (*x).into(), (*y).into()]),
                None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
            }
        }
        table.push(row);
    }
    Ok(table)
}

fn sim_spectrum(config: &ExperimentConfig, ratios: AspectRatios, spikes: Vec<Spike>) -> Result<Table> {
    let model = ModelConfig::new(ratios, spikes, required(&config.n, "n")?, config.seed)?;
    let trials = required(&config.trials, "trials")?;
    let bins = required(&config.bins, "bins")?;
    let theory = model.realized_ratios();
    let spectra = run_trials(&model, trials, |_, inst| Ok(squared_singular_values(&cross_cov(inst))))?;
    let largest = spectra.iter().flatten().copied().fold(0.0, f64::max);
    let hi = edge(&theory)?.powi(2).max(largest);
    let per_trial = spectra[0].len();
    let all: Vec<f64> = spectra.into_iter().flatten().collect();
    let hist = Histogram::new(&all, 0.0, hi, bins)?;
    let empirical = hist.densities(per_trial * trials);
    let mut table = Table::new(&["bin_lo", "bin_hi", "empirical_density", "theory_density"]);
    for (i, e) in hist.edges.windows(2).enumerate() {
        let theory_density = integrate_density(&theory, e[0], e[1], DEFAULT_EPSILON)? / (e[1] - e[0]);
        table.push(vec![e[0].into(), e[1].into(), empirical[i].into(), theory_density.into()]);
    }
    Ok(table)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sim_bbp_sweep(config: &ExperimentConfig, ratios: AspectRatios) -> Result<Table> {
    let n = required(&config.n, "n")?;
    let trials = required(&config.trials, "trials")?;
    let rho = required(&config.rho, "rho")?;
    let lambdas = required(&config.lambdas, "lambdas")?.values();
    let models = lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| Ok(ModelConfig::new(ratios, vec![Spike::new(l, l, rho)?], n, trial_seed(config.seed, k as u64))?))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&[
        "lambda",
        "sv1_theory",
        "sv2_theory",
        "sv1_emp_mean",
        "sv1_emp_std",
        "sv2_emp_mean",
        "sv2_emp_std",
    ]);
    for (model, &l) in models.iter().zip(&lambdas) {
        let preds = predict_outliers(&model.realized_ratios(), model.spikes())?;
        let tops = run_trials(model, trials, |_, inst| Ok(top_triplets(inst, 2, &svd_options())?.values))?;
        let (m1, s1) = mean_std(&tops.iter().map(|t| t[0]).collect::<Vec<_>>());
        let (m2, s2) = mean_std(&tops.iter().map(|t| t[1]).collect::<Vec<_>>());
        table.push(vec![
            l.into(),
            preds[0].position.into(),
            preds[1].position.into(),
            m1.into(),
            s1.into(),
            m2.into(),
            s2.into(),
        ]);
    }
    Ok(table)
}

fn pls_run(config: &ExperimentConfig, ratios: AspectRatios, spikes: Vec<Spike>) -> Result<Table> {
    let model = ModelConfig::new(ratios, spikes, required(&config.n, "n")?, config.seed)?;
    let trials = required(&config.trials, "trials")?;
    let r0 = required(&config.components, "components")?;
    let (dx, dy) = model.dims();
    if r0 > dx.min(dy) {
        return Err(config_error("components", format!("must not exceed min(d_x, d_y) = {}", dx.min(dy))).into());
    }
    let reports = run_trials(&model, trials, |_, inst| {
        let mode_a = pls_mode_a_with(&inst.x_tilde, &inst.y_tilde, r0, &svd_options())?;
        let svd = pls_svd_with(&inst.x_tilde, &inst.y_tilde, r0, &svd_options())?;
        Ok([("mode-a", recovery_report(&mode_a, inst)), ("pls-svd", recovery_report(&svd, inst))])
    })?;
    let mut table = Table::new(&["trial", "variant", "step", "component", "v_x", "v_y", "u_x", "u_y"]);
    for (trial, variants) in reports.iter().enumerate() {
        for (variant, rows) in variants {
            for r in rows {
                table.push(vec![
                    trial.into(),
                    (*variant).into(),
                    r.step.into(),
                    r.component.into(),
                    r.v_x.into(),
                    r.v_y.into(),
                    r.u_x.into(),
                    r.u_y.into(),
                ]);
            }
        }
    }
    Ok(table)
}
