//! ε-sweeps: solve u_ε, u₀, v_ε and w_ε per ε, measure the error curves,
//! verify them under h-refinement and fit rates.

use std::sync::Arc;

use log::{debug, info};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximation::{combined_error, residual_hminus1, CorrectorOperator, ErrorCurves};
use crate::cell::{certify_cell, effective_matrix, solve_corrector, CellCertificate, ConstantsLedger, CorrectorField, EffectiveMatrix};
use crate::domain::assembly::{assemble_effective, assemble_heterogeneous, DiscreteOperator, SobolevGrams};
use crate::domain::grid::DomainGrid;
use crate::domain::norms::{l2_norm, sobolev_norm, NormKind};
use crate::error::{Error, Result};
use crate::evolution::discrepancy::{solve_discrepancy, DiscrepancyResult};
use crate::evolution::leapfrog::{leapfrog_evolve, max_eigenvalue};
use crate::evolution::modal::{size_cap, spectral_decompose, ModalSolution};
use crate::evolution::trajectory::{ProblemTag, Trajectory};
use crate::harness::config::{EvolutionMethod, ExperimentConfig};
use crate::harness::data::ProblemData;
use crate::harness::rates::{fit_rate, RateFit};
use crate::periodic::Medium;

/// A configured medium with its certified cell solution.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub medium: Medium,
    pub corrector: CorrectorField,
    pub effective: EffectiveMatrix,
    pub certificate: CellCertificate,
    pub ledger: ConstantsLedger,
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let lattice = config.lattice()?;
        let symbol = config.symbol.build()?;
        let resolution = config.cell_resolution();
        let field = crate::periodic::sample_coefficient(&config.coefficient, &resolution, symbol.m())?;
        let medium = Medium::new(lattice, field, symbol)?;
        let corrector = solve_corrector(&medium, &resolution)?;
        let effective = effective_matrix(&medium, &corrector)?;
        let certificate = certify_cell(&medium, &corrector, &effective);
        if !certificate.passed {
            return Err(Error::Bracketing(format!("cell solution failed certification: {:?}", certificate.checks)));
        }
        let diam = config.domain.lengths.iter().map(|l| l * l).sum::<f64>().sqrt();
        let ledger = ConstantsLedger::new(&medium, &corrector, diam);
        Ok(Experiment {
            config,
            medium,
            corrector,
            effective,
            certificate,
            ledger,
        })
    }

    pub fn grid(&self, epsilon: f64, points_per_period: usize) -> Result<DomainGrid> {
        DomainGrid::for_epsilon(&self.config.domain.lengths, &self.medium.lattice, epsilon, points_per_period)
    }

    pub fn margin(&self, epsilon: f64) -> f64 {
        self.config.extension.margin_periods * epsilon * self.medium.lattice.max_extent()
    }

    pub fn operators(&self, epsilon: f64, grid: &DomainGrid) -> Result<(Arc<SobolevGrams>, DiscreteOperator, DiscreteOperator)> {
        let grams = SobolevGrams::new(grid, self.medium.nr());
        let het = assemble_heterogeneous(&self.medium, epsilon, &grams)?;
        let eff = assemble_effective(&self.effective.g0_real, self.medium.b_real(), &grams)?;
        Ok((grams, het, eff))
    }

    pub fn corrector_operator(&self, epsilon: f64, grid: &DomainGrid) -> Result<CorrectorOperator> {
        CorrectorOperator::new(&self.medium, &self.corrector, grid, epsilon, self.margin(epsilon), self.config.extension.kind)
    }

    pub fn has_constant_coefficient(&self) -> bool {
        self.medium.field.is_constant()
    }

    pub fn data(&self, eff: &DiscreteOperator) -> Result<ProblemData> {
        self.config.data.build(eff, self.config.t_end(), self.config.evolution.samples_per_unit)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagator {
    Modal,
    Leapfrog,
}

/// Everything measured at one ε on one grid.
#[derive(Clone, Debug)]
pub struct PointSolution {
    pub epsilon: f64,
    pub cells: Vec<usize>,
    pub propagator: Propagator,
    pub grams: Arc<SobolevGrams>,
    pub data: ProblemData,
    pub u_eps: Trajectory,
    pub u0: Trajectory,
    pub discrepancy: Option<DiscrepancyResult>,
    /// `combined`, `discrepancy` and `corrector` are empty without a discrepancy solve.
    pub curves: ErrorCurves,
    pub data_norms: Vec<f64>,
    /// ‖A_ε(φ + εK(ε)φ) − A⁰φ‖_{H⁻¹}, when measured.
    pub residual: Option<f64>,
}

fn choose_propagator(config: &ExperimentConfig, op: &DiscreteOperator) -> Propagator {
    match config.evolution.method {
        EvolutionMethod::Modal => Propagator::Modal,
        EvolutionMethod::Leapfrog => Propagator::Leapfrog,
        EvolutionMethod::Auto if op.n() <= size_cap(op.grid().dim()) => Propagator::Modal,
        EvolutionMethod::Auto => Propagator::Leapfrog,
    }
}

/// Solves every problem at one ε on `grid`.
pub fn solve_point(exp: &Experiment, epsilon: f64, grid: &DomainGrid, with_discrepancy: bool) -> Result<PointSolution> {
    let cfg = &exp.config;
    let times = &cfg.times;
    let (grams, het, eff) = exp.operators(epsilon, grid)?;
    let data = exp.data(&eff)?;
    let propagator = choose_propagator(cfg, &het);
    debug!("ε = {epsilon}: {} unknowns, {:?}", het.n(), propagator);
    let (u_eps, u0, discrepancy, residual) = match propagator {
        Propagator::Modal => {
            let hb = spectral_decompose(&het)?;
            let eb = spectral_decompose(&eff)?;
            let phi = grams.restrict(&data.phi);
            let psi = grams.restrict(&data.psi);
            let ue = ModalSolution::from_forcing(&hb, ProblemTag::Heterogeneous { epsilon }, &phi, &psi, &data.forcing)?;
            let u0 = ModalSolution::from_forcing(&eb, ProblemTag::Effective, &phi, &psi, &data.forcing)?;
            let (disc, residual) = if with_discrepancy {
                let k = exp.corrector_operator(epsilon, grid)?;
                let d = solve_discrepancy(&u0, &het, &hb, &k, times, cfg.evolution.samples_per_unit)?;
                (Some(d), Some(residual_hminus1(&data.phi, &k, &het, &eff)?))
            } else {
                (None, None)
            };
            (ue.trajectory(times)?, u0.trajectory(times)?, disc, residual)
        }
        Propagator::Leapfrog => {
            let lam = max_eigenvalue(&het, cfg.seed)?.max(max_eigenvalue(&eff, cfg.seed)?);
            let dt = cfg.evolution.cfl_fraction * 2.0 / lam.sqrt();
            let ue = leapfrog_evolve(&het, ProblemTag::Heterogeneous { epsilon }, &data.phi, &data.psi, &data.forcing, dt, times, cfg.seed)?;
            let u0 = leapfrog_evolve(&eff, ProblemTag::Effective, &data.phi, &data.psi, &data.forcing, dt, times, cfg.seed)?;
            (ue, u0, None, None)
        }
    };
    let curves = match &discrepancy {
        Some(d) => combined_error(&u_eps, &u0, &d.w, &d.corrector_terms, &grams)?,
        None => ErrorCurves {
            times: times.clone(),
            u: u_eps.states.iter().zip(&u0.states).map(|(a, b)| l2_norm(&(a - b), &grams.mass_full)).collect(),
            ..Default::default()
        },
    };
    let data_norms = times.iter().map(|t| data.norm(&grams, *t)).collect::<Result<Vec<_>>>()?;
    Ok(PointSolution {
        epsilon,
        cells: grid.cells().to_vec(),
        propagator,
        grams,
        data,
        u_eps,
        u0,
        discrepancy,
        curves,
        data_norms,
        residual,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub t: f64,
    pub err_l2_u: f64,
    pub err_l2_combined: Option<f64>,
    pub err_l2_discrepancy: Option<f64>,
    pub corrector_l2: Option<f64>,
    pub data_norm: f64,
    /// err_l2_u / data_norm.
    pub normalized: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub quantity: String,
    pub t: f64,
    pub fit: Option<RateFit>,
    /// Why no fit was produced.
    pub note: Option<String>,
    pub window: Option<[f64; 2]>,
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RichardsonRow {
    pub epsilon: f64,
    pub t: f64,
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstantSample {
    pub epsilon: f64,
    pub t: f64,
    /// ‖u_ε − u₀‖/(ε(1+t)·data).
    pub c2: Option<f64>,
    /// ‖w_ε − εK(ε)u₀‖/(ε(1+t)·data).
    pub c3: Option<f64>,
    /// ‖u_ε − v_ε + w_ε‖/(εt·data).
    pub c4: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub dim: usize,
    pub exploratory: bool,
    pub g0: Vec<Vec<f64>>,
    pub propagators: Vec<(f64, Propagator)>,
    pub rows: Vec<ErrorRow>,
    pub rates: Vec<RateRow>,
    pub richardson: Vec<RichardsonRow>,
    pub richardson_clean: bool,
    pub slopes_passed: bool,
    /// Richardson clean and, unless exploratory, every checked slope inside its window.
    pub acceptable: bool,
    pub constants: ConstantsLedger,
    pub constant_samples: Vec<ConstantSample>,
}

impl ConvergenceReport {
    pub fn row(&self, epsilon: f64, t: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| same(r.epsilon, epsilon) && same(r.t, t))
    }

    pub fn rate(&self, quantity: &str, t: f64) -> Option<&RateRow> {
        self.rates.iter().find(|r| r.quantity == quantity && same(r.t, t))
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn richardson_rows(exp: &Experiment, coarse: &PointSolution) -> Result<Vec<RichardsonRow>> {
    let policy = &exp.config.grid;
    let fine_grid = exp.grid(coarse.epsilon, exp.config.grid.points_per_period)?.refine(policy.richardson_factor)?;
    let fine = solve_point(exp, coarse.epsilon, &fine_grid, false)?;
    let mut rows = Vec::new();
    for (i, &t) in exp.config.times.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let (c, f) = (coarse.curves.u[i], fine.curves.u[i]);
        let floor = policy.richardson_floor * coarse.data_norms[i];
        let change = if c.max(f) <= floor { 0.0 } else { (f - c).abs() / f.max(c) };
        rows.push(RichardsonRow {
            epsilon: coarse.epsilon,
            t,
            coarse: c,
            fine: f,
            relative_change: change,
            passed: change < policy.richardson_tolerance,
        });
    }
    Ok(rows)
}

fn constant_samples(point: &PointSolution, times: &[f64]) -> Vec<ConstantSample> {
    let eps = point.epsilon;
    times
        .iter()
        .enumerate()
        .filter(|(_, t)| **t > 0.0)
        .map(|(i, &t)| {
            let d = point.data_norms[i];
            let scale = |v: f64, w: f64| if d > 0.0 { Some(v / (eps * w * d)) } else { None };
            ConstantSample {
                epsilon: eps,
                t,
                c2: scale(point.curves.u[i], 1.0 + t),
                c3: point.curves.discrepancy.get(i).and_then(|v| scale(*v, 1.0 + t)),
                c4: point.curves.combined.get(i).and_then(|v| scale(*v, t)),
            }
        })
        .collect()
}

fn fit_quantity(epsilons: &[f64], values: &[f64], quantity: &str, t: f64, window: Option<[f64; 2]>) -> RateRow {
    if values.iter().all(|v| *v == 0.0) {
        return RateRow {
            quantity: quantity.into(),
            t,
            fit: None,
            note: Some("all errors vanish; slope undefined".into()),
            window,
            passed: window.map(|_| true),
        };
    }
    match fit_rate(epsilons, values) {
        Ok(fit) => {
            let passed = window.map(|[lo, hi]| fit.slope >= lo && fit.slope <= hi);
            RateRow {
                quantity: quantity.into(),
                t,
                fit: Some(fit),
                note: None,
                window,
                passed,
            }
        }
        Err(e) => RateRow {
            quantity: quantity.into(),
            t,
            fit: None,
            note: Some(e.to_string()),
            window,
            passed: window.map(|_| false),
        },
    }
}

/// Runs the configured sweep; ε points are solved in parallel on the current rayon pool.
pub fn run_sweep(exp: &Experiment) -> Result<ConvergenceReport> {
    let cfg = &exp.config;
    let ppp = cfg.grid.points_per_period;
    let with_discrepancy = cfg.evolution.discrepancy;
    let points: Vec<(PointSolution, Vec<RichardsonRow>)> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let grid = exp.grid(eps, ppp)?;
            let point = solve_point(exp, eps, &grid, with_discrepancy)?;
            let rich = if cfg.grid.richardson { richardson_rows(exp, &point)? } else { Vec::new() };
            info!("ε = {eps}: solved on {:?} cells with {:?}", point.cells, point.propagator);
            Ok((point, rich))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut richardson = Vec::new();
    for (p, rich) in &points {
        for (i, &t) in cfg.times.iter().enumerate() {
            let d = p.data_norms[i];
            rows.push(ErrorRow {
                epsilon: p.epsilon,
                t,
                err_l2_u: p.curves.u[i],
                err_l2_combined: p.curves.combined.get(i).copied(),
                err_l2_discrepancy: p.curves.discrepancy.get(i).copied(),
                corrector_l2: p.curves.corrector.get(i).copied(),
                data_norm: d,
                normalized: if d > 0.0 { p.curves.u[i] / d } else { 0.0 },
            });
        }
        samples.extend(constant_samples(p, &cfg.times));
        richardson.extend(rich.iter().cloned());
    }

    let eps: Vec<f64> = points.iter().map(|(p, _)| p.epsilon).collect();
    let slope_times = cfg.slope_times();
    let window = if cfg.acceptance.exploratory { None } else { Some(cfg.acceptance.slope_window) };
    let mut rates = Vec::new();
    for (i, &t) in cfg.times.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let checked = slope_times.iter().any(|s| same(*s, t));
        let normalized: Vec<f64> = points.iter().map(|(p, _)| if p.data_norms[i] > 0.0 { p.curves.u[i] / p.data_norms[i] } else { 0.0 }).collect();
        rates.push(fit_quantity(&eps, &normalized, "normalized_u", t, if checked { window } else { None }));
        if with_discrepancy && points.iter().all(|(p, _)| !p.curves.combined.is_empty()) {
            let comb: Vec<f64> = points.iter().map(|(p, _)| p.curves.combined[i]).collect();
            let disc: Vec<f64> = points.iter().map(|(p, _)| p.curves.discrepancy[i]).collect();
            rates.push(fit_quantity(&eps, &comb, "combined", t, None));
            rates.push(fit_quantity(&eps, &disc, "discrepancy", t, None));
        }
    }

    let mut constants = exp.ledger.clone();
    let max_of = |f: fn(&ConstantSample) -> Option<f64>| samples.iter().filter_map(f).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
    constants.c2 = max_of(|s| s.c2);
    constants.c3 = max_of(|s| s.c3);
    constants.c4 = max_of(|s| s.c4);
    constants.c1 = points
        .iter()
        .filter_map(|(p, _)| {
            let h2 = sobolev_norm(&p.data.phi, &p.grams, NormKind::H2).ok()?;
            p.residual.filter(|_| h2 > 0.0).map(|r| r / (p.epsilon * h2))
        })
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
    if let Some((first, _)) = points.first() {
        if first.grams.n_dofs() <= 20_000 {
            let k = exp.corrector_operator(first.epsilon, &first.grams.grid)?;
            constants.c_o = Some(k.extension.measure_norm(&first.grams)?);
        }
    }

    let richardson_clean = richardson.iter().all(|r| r.passed);
    let slopes_passed = rates.iter().all(|r| r.passed != Some(false));
    let acceptable = richardson_clean && (cfg.acceptance.exploratory || slopes_passed);
    let g0 = exp.effective.g0_real.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(ConvergenceReport {
        name: cfg.name.clone(),
        dim: cfg.dim(),
        exploratory: cfg.acceptance.exploratory,
        g0,
        propagators: points.iter().map(|(p, _)| (p.epsilon, p.propagator)).collect(),
        rows,
        rates,
        richardson,
        richardson_clean,
        slopes_passed,
        acceptable,
        constants,
        constant_samples: samples,
    })
}

/// Max over `times` of normalized-error/(1+t) divided by its min, at one ε.
pub fn envelope_ratio(report: &ConvergenceReport, epsilon: f64, times: &[f64]) -> Option<f64> {
    let vals: Vec<f64> = times.iter().filter_map(|t| report.row(epsilon, *t).map(|r| r.normalized / (1.0 + t))).collect();
    if vals.len() != times.len() || vals.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let max = vals.iter().copied().fold(f64::MIN, f64::max);
    let min = vals.iter().copied().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// Residual of the corrected field for an arbitrary zero-boundary f, at one ε.
pub fn residual_at(exp: &Experiment, epsilon: f64, f: impl Fn(&DomainGrid) -> DVector<f64>) -> Result<f64> {
    let grid = exp.grid(epsilon, exp.config.grid.points_per_period)?;
    let (grams, het, eff) = exp.operators(epsilon, &grid)?;
    let k = exp.corrector_operator(epsilon, &grid)?;
    let field = grams.embed(&grams.restrict(&f(&grid)));
    residual_hminus1(&field, &k, &het, &eff)
}
