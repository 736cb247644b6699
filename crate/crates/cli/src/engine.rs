//! Scenario assembly and time-series evaluation for the three engines.

use catfield::bath::{self, discretize_flat_band, evolve_with, propagate, BathSpec};
use catfield::coherent::{
    eigenvalues, idempotency_defect, mean_photon_number, overlap, purity, reduce, CoherentLabel,
    FieldBathSuperposition, PhaseOpSum, ReducedDensity,
};
use catfield::fock::{fock_measure, fock_prepare, fock_signed_eigenvalues, lindblad_evolve, FockDensity};
use catfield::master::{me_amplitude, me_dyad_factor, me_reduce, MasterParams};
use catfield::protocol::{
    conditional_probabilities, measurement_product, prepare, signed_eigenvalues, DetectionOutcome, DispersiveCoupling,
    ProtocolCase, ProtocolParams,
};
use catfield::{Error, Result, C64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CaseName, EngineName, LoadedConfig, PhiValue};
use crate::error::CliError;

const PROBABILITY_TOL: f64 = 1e-10;

/// One grid time. `t` is in units of `t_c = 1 / gamma`; the remaining fields
/// refer to the detection branches `e` and `g` of the first atom, and
/// `n_field`, `n_bath`, `gamma_*` to the branch prepared by `e`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub gamma_a: f64,
    pub gamma_b_abs: f64,
    pub gamma_b_arg: f64,
    pub p_ee: f64,
    pub p_eg: f64,
    pub p_ge: f64,
    pub p_gg: f64,
    pub eta: f64,
    pub lam_e_plus: f64,
    pub lam_e_minus: f64,
    pub lam_g_plus: f64,
    pub lam_g_minus: f64,
    pub purity_e: f64,
    pub purity_g: f64,
    pub defect_e: f64,
    pub defect_g: f64,
    pub n_field: f64,
    pub n_bath: f64,
    pub recurrence_warning: bool,
}

#[derive(Clone, Debug)]
pub enum Engine {
    Microscopic(BathSpec),
    Master(MasterParams),
    Fock { master: MasterParams, n_max: usize, dt: f64 },
}

impl Engine {
    pub fn from_config(cfg: &LoadedConfig, which: EngineName) -> std::result::Result<Self, CliError> {
        let c = &cfg.config;
        let model = |e| CliError::model(&cfg.path, e);
        let missing = |s: &str| CliError::schema(&cfg.path, format!("{s}: section missing"));
        Ok(match which {
            EngineName::Microscopic => {
                let b = c.bath.ok_or_else(|| missing("bath"))?;
                Engine::Microscopic(discretize_flat_band(b.gamma, b.modes, b.half_bandwidth).map_err(model)?)
            }
            EngineName::Master => {
                let m = c.master.ok_or_else(|| missing("master"))?;
                Engine::Master(MasterParams::new(m.gamma).map_err(model)?)
            }
            EngineName::Fock => {
                let m = c.master.ok_or_else(|| missing("master"))?;
                let f = c.fock.ok_or_else(|| missing("fock"))?;
                Engine::Fock { master: MasterParams::new(m.gamma).map_err(model)?, n_max: f.n_max, dt: f.dt }
            }
        })
    }

    fn gamma(&self) -> f64 {
        match self {
            Engine::Microscopic(spec) => spec.target_gamma(),
            Engine::Master(m) | Engine::Fock { master: m, .. } => m.gamma(),
        }
    }
}

/// Protocol parameters and the two prepared field states.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub params: ProtocolParams,
    pub prepared_e: FieldBathSuperposition,
    pub prepared_g: FieldBathSuperposition,
}

impl Scenario {
    pub fn new(params: ProtocolParams) -> Result<Self> {
        Ok(Self {
            prepared_e: prepare(&params, DetectionOutcome::E)?,
            prepared_g: prepare(&params, DetectionOutcome::G)?,
            params,
        })
    }

    pub fn from_config(cfg: &LoadedConfig) -> std::result::Result<Self, CliError> {
        let c = &cfg.config;
        let model = |e| CliError::model(&cfg.path, e);
        let case = match c.case {
            CaseName::A => ProtocolCase::CaseA,
            CaseName::B => ProtocolCase::CaseB,
        };
        let alpha0 = CoherentLabel::from_re_im(c.alpha0.re, c.alpha0.im).map_err(model)?;
        let params = match c.phi {
            PhiValue::Direct(phi) => ProtocolParams::new(case, alpha0, phi),
            PhiValue::Dispersive(d) => ProtocolParams::from_dispersive(
                case,
                alpha0,
                DispersiveCoupling { rabi: d.rabi, detuning: d.detuning, interaction_time: d.t_int },
            ),
        }
        .map_err(model)?;
        Self::new(params).map_err(model)
    }
}

/// `points` equally spaced times on `[0, t_max]`, in units of `t_c`.
pub fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    let last = points - 1;
    (0..points).map(|i| if i == last { t_max } else { t_max * i as f64 / last as f64 }).collect()
}

/// Evaluates the scenario at each time (units of `t_c`), in order.
pub fn series(engine: &Engine, scenario: &Scenario, times: &[f64]) -> Result<Vec<TimeSeriesRow>> {
    let tc = 1.0 / engine.gamma();
    match engine {
        Engine::Microscopic(spec) => {
            let results: Vec<Result<TimeSeriesRow>> =
                times.par_iter().map(|&t| microscopic_row(spec, scenario, t, t * tc)).collect();
            results.into_iter().collect()
        }
        Engine::Master(mp) => {
            let n0 = mean_photon_number(&reduce(&scenario.prepared_e)?);
            let results: Vec<Result<TimeSeriesRow>> =
                times.par_iter().map(|&t| master_row(mp, scenario, t, t * tc, n0)).collect();
            results.into_iter().collect()
        }
        Engine::Fock { master, n_max, dt } => fock_series(master, *n_max, *dt, scenario, times, tc),
    }
}

fn two_labels(state: &FieldBathSuperposition) -> Option<(CoherentLabel, CoherentLabel)> {
    match state.branches() {
        [a, b] => Some((a.field, b.field)),
        _ => None,
    }
}

struct Observables {
    gamma_a: f64,
    gamma_b: C64,
    n_bath: f64,
    recurrence_warning: bool,
}

fn coherent_row(
    params: &ProtocolParams,
    t: f64,
    rho_e: &ReducedDensity,
    rho_g: &ReducedDensity,
    obs: Observables,
) -> Result<TimeSeriesRow> {
    let rec = conditional_probabilities(rho_e, rho_g, params)?;
    let (lam_e_plus, lam_e_minus) = signed_eigenvalues(params.case, &eigenvalues(rho_e)?);
    let (lam_g_plus, lam_g_minus) = signed_eigenvalues(params.case, &eigenvalues(rho_g)?);
    let (purity_e, purity_g) = (purity(rho_e), purity(rho_g));
    Ok(TimeSeriesRow {
        t,
        gamma_a: obs.gamma_a,
        gamma_b_abs: obs.gamma_b.norm(),
        gamma_b_arg: obs.gamma_b.arg(),
        p_ee: rec.p_ee,
        p_eg: rec.p_eg,
        p_ge: rec.p_ge,
        p_gg: rec.p_gg,
        eta: rec.eta,
        lam_e_plus,
        lam_e_minus,
        lam_g_plus,
        lam_g_minus,
        purity_e,
        purity_g,
        defect_e: idempotency_defect(rho_e),
        defect_g: idempotency_defect(rho_g),
        n_field: mean_photon_number(rho_e),
        n_bath: obs.n_bath,
        recurrence_warning: obs.recurrence_warning,
    })
}

fn microscopic_row(spec: &BathSpec, scenario: &Scenario, t: f64, seconds: f64) -> Result<TimeSeriesRow> {
    let response = propagate(spec, seconds)?;
    let state_e = evolve_with(&scenario.prepared_e, &response)?;
    let state_g = evolve_with(&scenario.prepared_g, &response)?;
    let (gamma_a, gamma_b) = match state_e.branches().len() {
        2 => (bath::gamma_a(&state_e)?, bath::gamma_b(&state_e)?),
        _ => (1.0, C64::new(1.0, 0.0)),
    };
    let obs = Observables {
        gamma_a,
        gamma_b,
        n_bath: bath::bath_photon_number(&state_e),
        recurrence_warning: response.recurrence_warning,
    };
    coherent_row(&scenario.params, t, &reduce(&state_e)?, &reduce(&state_g)?, obs)
}

/// Closed-form `Gamma_a`, `Gamma_b` of the damped labels; used by the master
/// and Fock engines, which carry no bath.
fn damped_overlaps(scenario: &Scenario, mp: &MasterParams, seconds: f64) -> Result<(f64, C64)> {
    match two_labels(&scenario.prepared_e) {
        Some((a, b)) => {
            let (at, bt) = (me_amplitude(a, mp, seconds)?, me_amplitude(b, mp, seconds)?);
            Ok((overlap(bt, at).norm(), me_dyad_factor(a, b, mp, seconds)?))
        }
        None => Ok((1.0, C64::new(1.0, 0.0))),
    }
}

fn master_row(mp: &MasterParams, scenario: &Scenario, t: f64, seconds: f64, n0: f64) -> Result<TimeSeriesRow> {
    let rho_e = me_reduce(&scenario.prepared_e, mp, seconds)?;
    let rho_g = me_reduce(&scenario.prepared_g, mp, seconds)?;
    let (gamma_a, gamma_b) = damped_overlaps(scenario, mp, seconds)?;
    let n_bath = n0 - mean_photon_number(&rho_e);
    coherent_row(
        &scenario.params,
        t,
        &rho_e,
        &rho_g,
        Observables { gamma_a, gamma_b, n_bath, recurrence_warning: false },
    )
}

fn fock_probability(op: &PhaseOpSum, rho: &FockDensity) -> Result<f64> {
    let p = fock_measure(op, rho).re;
    if !p.is_finite() || !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&p) {
        return Err(Error::PositivityViolation { eigenvalue: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Lindblad integration in the Fock basis, advanced from one grid time to
/// the next.
fn fock_series(
    mp: &MasterParams,
    n_max: usize,
    dt: f64,
    scenario: &Scenario,
    times: &[f64],
    tc: f64,
) -> Result<Vec<TimeSeriesRow>> {
    let params = &scenario.params;
    let mut rho_e = FockDensity::from_pure(&fock_prepare(params, DetectionOutcome::E, n_max)?)?;
    let mut rho_g = FockDensity::from_pure(&fock_prepare(params, DetectionOutcome::G, n_max)?)?;
    let n0 = rho_e.mean_photon_number();
    let pe = measurement_product(params, DetectionOutcome::E);
    let pg = measurement_product(params, DetectionOutcome::G);
    let mut now = 0.0;
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        if t < now {
            return Err(Error::InvalidArgument("Fock engine needs ascending times".into()));
        }
        let step = (t - now) * tc;
        if step > 0.0 {
            rho_e = lindblad_evolve(&rho_e, mp.gamma(), step, dt)?;
            rho_g = lindblad_evolve(&rho_g, mp.gamma(), step, dt)?;
        }
        now = t;
        let (p_ee, p_eg) = (fock_probability(&pe, &rho_e)?, fock_probability(&pg, &rho_e)?);
        let (p_ge, p_gg) = (fock_probability(&pe, &rho_g)?, fock_probability(&pg, &rho_g)?);
        let (lam_e_plus, lam_e_minus) = fock_signed_eigenvalues(params.case, &rho_e);
        let (lam_g_plus, lam_g_minus) = fock_signed_eigenvalues(params.case, &rho_g);
        let (gamma_a, gamma_b) = damped_overlaps(scenario, mp, t * tc)?;
        let (purity_e, purity_g) = (rho_e.purity(), rho_g.purity());
        let n_field = rho_e.mean_photon_number();
        rows.push(TimeSeriesRow {
            t,
            gamma_a,
            gamma_b_abs: gamma_b.norm(),
            gamma_b_arg: gamma_b.arg(),
            p_ee,
            p_eg,
            p_ge,
            p_gg,
            eta: p_ee - p_ge,
            lam_e_plus,
            lam_e_minus,
            lam_g_plus,
            lam_g_minus,
            purity_e,
            purity_g,
            defect_e: 1.0 - purity_e,
            defect_g: 1.0 - purity_g,
            n_field,
            n_bath: n0 - n_field,
            recurrence_warning: false,
        });
    }
    Ok(rows)
}
