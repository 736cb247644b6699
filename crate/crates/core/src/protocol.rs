//! Operator algebra of the two-atom correlation experiment.
//!
//! Each probe atom starts in `|e>`, crosses a Ramsey zone applying
//! ```text
//! U_R: |e> -> (|e> + |g>)/sqrt2,   |g> -> (-|e> + |g>)/sqrt2
//! ```
//! then the storage cavity (dispersive coupling `U_C`), then a second
//! identical Ramsey zone, and is finally detected in `|e>` or `|g>`. The field
//! is left in `U_x |field>` with the reduced operator `U_x = <x| U_R U_C U_R |e>`:
//! ```text
//! case a: U_{e,g} = (exp(-i phi n) -/+ 1) / 2
//! case b: U_{e,g} = (exp(i phi (n + 1)) -/+ exp(-i phi n)) / 2
//! ```
//! where `n = a^dag a` and `phi = Omega^2 t / delta`. The Ramsey transform only
//! enters through these operators, so it is not modeled separately.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::coherent::{
    expectation, Branch, CoherentLabel, FieldBathSuperposition, PhaseOpSum, ReducedDensity, Spectrum,
};
use crate::error::{Error, Result};

const PROBABILITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const DENOMINATOR_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolCase {
    /// Cavity near resonance with an `|e> -> |i>` transition; only `|e>` is shifted.
    CaseA,
    /// Cavity near resonance with `|e> -> |g>`; opposite shifts for both levels.
    CaseB,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectionOutcome {
    E,
    G,
}

impl DetectionOutcome {
    pub const BOTH: [DetectionOutcome; 2] = [DetectionOutcome::E, DetectionOutcome::G];

    /// The double sign of the detection operators: `-1` for `e`, `+1` for `g`.
    pub fn sign(self) -> f64 {
        match self {
            DetectionOutcome::E => -1.0,
            DetectionOutcome::G => 1.0,
        }
    }
}

/// Microscopic origin of the dispersive phase, `phi = rabi^2 t / detuning`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersiveCoupling {
    /// Rabi frequency (rad/s).
    pub rabi: f64,
    /// Atom-field detuning (rad/s).
    pub detuning: f64,
    /// Atom-cavity interaction time (s).
    pub interaction_time: f64,
}

impl DispersiveCoupling {
    pub fn phase(&self) -> f64 {
        self.rabi * self.rabi * self.interaction_time / self.detuning
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    pub phi: f64,
    pub alpha0: CoherentLabel,
    pub case: ProtocolCase,
    pub dispersive: Option<DispersiveCoupling>,
}

impl ProtocolParams {
    pub fn new(case: ProtocolCase, alpha0: CoherentLabel, phi: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::invalid(format!("dispersive phase must be finite, got {phi}")));
        }
        Ok(Self { phi, alpha0, case, dispersive: None })
    }

    pub fn from_dispersive(case: ProtocolCase, alpha0: CoherentLabel, coupling: DispersiveCoupling) -> Result<Self> {
        if coupling.detuning == 0.0 || !coupling.detuning.is_finite() {
            return Err(Error::invalid("detuning must be finite and non-zero"));
        }
        let mut p = Self::new(case, alpha0, coupling.phase())?;
        p.dispersive = Some(coupling);
        Ok(p)
    }

    /// Checks that a stored dispersive triple still reproduces `phi`.
    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::invalid("non-finite phi"));
        }
        if let Some(c) = self.dispersive {
            if (c.phase() - self.phi).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "phi = {} does not match rabi^2 t / detuning = {}",
                    self.phi,
                    c.phase()
                )));
            }
        }
        Ok(())
    }
}

/// The reduced detection operator `U_x` as a phase-operator sum.
pub fn reduced_op(params: &ProtocolParams, outcome: DetectionOutcome) -> PhaseOpSum {
    let s = outcome.sign();
    let phi = params.phi;
    let half = C64::new(0.5, 0.0);
    match params.case {
        ProtocolCase::CaseA => PhaseOpSum::from_terms([(half, -phi), (half * s, 0.0)]),
        ProtocolCase::CaseB => PhaseOpSum::from_terms([(half * C64::from_polar(1.0, phi), phi), (half * s, -phi)]),
    }
}

/// `U_x^dag U_x`, the operator whose expectation gives the probability of
/// detecting the next atom in `x`.
pub fn measurement_product(params: &ProtocolParams, outcome: DetectionOutcome) -> PhaseOpSum {
    let u = reduced_op(params, outcome);
    &u.adjoint() * &u
}

/// `||U_x |alpha0>||^2`, the probability that the first atom is detected in `x`.
pub fn preparation_probability(params: &ProtocolParams, outcome: DetectionOutcome) -> f64 {
    unnormalized_preparation(params, outcome).norm_sqr()
}

fn unnormalized_preparation(params: &ProtocolParams, outcome: DetectionOutcome) -> FieldBathSuperposition {
    let branches = reduced_op(params, outcome)
        .terms()
        .iter()
        .map(|t| Branch::field_only(t.weight, params.alpha0.rotated(t.phase)))
        .collect();
    FieldBathSuperposition::new(branches).expect("two well-formed branches").coalesce()
}

/// Normalized field state after the first atom is detected in `outcome`, with
/// the bath in its ground state.
pub fn prepare(params: &ProtocolParams, outcome: DetectionOutcome) -> Result<FieldBathSuperposition> {
    params.validate()?;
    unnormalized_preparation(params, outcome).normalize()
}

/// The four conditional probabilities `P_xy` (first atom `x`, second `y`)
/// and the correlation signal `eta = P_ee - P_ge`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationRecord {
    pub p_ee: f64,
    pub p_eg: f64,
    pub p_ge: f64,
    pub p_gg: f64,
    pub eta: f64,
}

fn probability(op: &PhaseOpSum, rho: &ReducedDensity) -> Result<f64> {
    let p = expectation(op, rho).re;
    if !p.is_finite() || !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&p) {
        return Err(Error::PositivityViolation { eigenvalue: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

fn check_trace(rho: &ReducedDensity) -> Result<()> {
    let trace = rho.trace();
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::TraceViolation { trace });
    }
    Ok(())
}

pub fn conditional_probabilities(
    rho_e: &ReducedDensity,
    rho_g: &ReducedDensity,
    params: &ProtocolParams,
) -> Result<CorrelationRecord> {
    check_trace(rho_e)?;
    check_trace(rho_g)?;
    let pe = measurement_product(params, DetectionOutcome::E);
    let pg = measurement_product(params, DetectionOutcome::G);
    let p_ee = probability(&pe, rho_e)?;
    let p_eg = probability(&pg, rho_e)?;
    let p_ge = probability(&pe, rho_g)?;
    let p_gg = probability(&pg, rho_g)?;
    Ok(CorrelationRecord { p_ee, p_eg, p_ge, p_gg, eta: p_ee - p_ge })
}

/// Closed-form non-vanishing eigenvalues `(lambda_+, lambda_-)` of the case-a
/// densities at `phi = pi`:
/// ```text
/// lambda_+- = (1 +- Ga(t)) (1 +- s Gb(t)) / (2 (1 + s Ga(0)))
/// ```
/// with `s = -1` for `e`, `+1` for `g`. `lambda_+` belongs to the even
/// combination `|a(t)> + |-a(t)>`, `lambda_-` to the odd one.
pub fn eigenvalues_case_a(
    gamma_a_t: f64,
    gamma_b_t: f64,
    gamma_a_0: f64,
    outcome: DetectionOutcome,
) -> Result<(f64, f64)> {
    for (name, g) in [("gamma_a(t)", gamma_a_t), ("gamma_b(t)", gamma_b_t), ("gamma_a(0)", gamma_a_0)] {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::invalid(format!("{name} = {g} outside [0, 1]")));
        }
    }
    let s = outcome.sign();
    let denom = 2.0 * (1.0 + s * gamma_a_0);
    if denom < DENOMINATOR_FLOOR {
        return Err(Error::DegeneratePreparation(format!("normalization 1 + s Ga(0) = {} vanishes", denom / 2.0)));
    }
    let plus = (1.0 + gamma_a_t) * (1.0 + s * gamma_b_t) / denom;
    let minus = (1.0 - gamma_a_t) * (1.0 - s * gamma_b_t) / denom;
    Ok((plus, minus))
}

/// `eta = lambda_-^(e) - lambda_-^(g)` (case a, `phi = pi`).
pub fn eta_spectral_case_a(lam_e_minus: f64, lam_g_minus: f64) -> f64 {
    lam_e_minus - lam_g_minus
}

/// Small-overlap approximation for case b.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallOverlapEta {
    pub eta: f64,
    /// `|Gamma_b(t, phi)| = lambda_+ - lambda_-`.
    pub gamma_b_mag: f64,
    /// Phase `theta(t)` of `Gamma_b(t, phi)`.
    pub theta: f64,
}

/// Case-b correlation signal when all coherent components are effectively
/// orthogonal.
///
/// `excitation_sum` is `sum_k |beta_k(t)|^2`, the excitation carried by the
/// bath in one branch. Then
/// ```text
/// |Gamma_b| = exp(-2 X sin^2 phi),  theta = X sin 2phi,
/// eta ~ cos(theta) |Gamma_b| / 2
/// ```
/// The factor 1/2 arises because `exp(2i phi n)` maps each branch onto the
/// other only once; the remaining images `|a e^{+-3i phi}>` are orthogonal to
/// everything. The approximation therefore also needs `sin 2phi` away from
/// zero: at `phi = pi/2` those images coincide with the branches and the exact
/// signal vanishes identically.
pub fn small_overlap_case_b(excitation_sum: f64, phi: f64) -> Result<SmallOverlapEta> {
    if !(excitation_sum >= 0.0) || !excitation_sum.is_finite() {
        return Err(Error::invalid(format!("excitation sum must be >= 0, got {excitation_sum}")));
    }
    let gamma_b_mag = (-2.0 * excitation_sum * phi.sin().powi(2)).exp();
    let theta = excitation_sum * (2.0 * phi).sin();
    Ok(SmallOverlapEta { eta: 0.5 * theta.cos() * gamma_b_mag, gamma_b_mag, theta })
}

/// Labels the two leading eigenvalues as `(lambda_+, lambda_-)`.
///
/// Case a: `lambda_+` is the eigenvalue of the even-parity eigenvector.
/// Case b: `lambda_+` is simply the larger eigenvalue.
pub fn signed_eigenvalues(case: ProtocolCase, spectrum: &Spectrum) -> (f64, f64) {
    match case {
        ProtocolCase::CaseB => (spectrum.value(0), spectrum.value(1)),
        ProtocolCase::CaseA => {
            if spectrum.eigenvalues.len() < 2 {
                let parity = spectrum.vector_expectation(&PhaseOpSum::term(C64::new(1.0, 0.0), PI), 0);
                return if parity.re >= 0.0 { (spectrum.value(0), 0.0) } else { (0.0, spectrum.value(0)) };
            }
            let parity = PhaseOpSum::term(C64::new(1.0, 0.0), PI);
            let p0 = spectrum.vector_expectation(&parity, 0).re;
            let p1 = spectrum.vector_expectation(&parity, 1).re;
            if p0 >= p1 {
                (spectrum.value(0), spectrum.value(1))
            } else {
                (spectrum.value(1), spectrum.value(0))
            }
        }
    }
}
