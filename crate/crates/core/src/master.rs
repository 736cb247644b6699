//! Closed-form solution of the zero-temperature master equation
//! `d rho/dt = gamma (a rho a^dag - {a^dag a, rho}/2)`.
//!
//! A coherent dyad evolves as
//! ```text
//! |a><b|  ->  F(a, b, t) |a e^{-gamma t/2}><b e^{-gamma t/2}|,
//! F = exp[(conj(b) a - (|a|^2 + |b|^2)/2)(1 - e^{-gamma t})]
//! ```
//! For `(a, b) = (alpha, -alpha)` this is the familiar
//! `exp(-2|alpha|^2 (1 - e^{-gamma t}))`; the general rule is what case b needs.
//! The only dissipation parameter is `gamma`, no bath is involved.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::coherent::{density_from_branches, log_overlap, CoherentLabel, FieldBathSuperposition, ReducedDensity};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterParams {
    gamma: f64,
}

impl MasterParams {
    /// `gamma = 1 / t_c`, the decay rate of the field energy.
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("decay rate must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `1 - e^{-gamma t}`, the fraction of energy lost to the environment.
    pub fn loss(&self, t: f64) -> f64 {
        -(-self.gamma * t).exp_m1()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `alpha0 e^{-gamma t/2}`.
pub fn me_amplitude(alpha0: CoherentLabel, params: &MasterParams, t: f64) -> Result<CoherentLabel> {
    check_time(t)?;
    Ok(alpha0.scaled(C64::new((-0.5 * params.gamma * t).exp(), 0.0)))
}

/// Damping factor of the dyad `|a><b|`.
pub fn me_dyad_factor(a: CoherentLabel, b: CoherentLabel, params: &MasterParams, t: f64) -> Result<C64> {
    Ok(me_log_dyad_factor(a, b, params, t)?.exp())
}

/// `(conj(b) a - (|a|^2 + |b|^2)/2) (1 - e^{-gamma t})`, the logarithm of
/// [`me_dyad_factor`].
fn me_log_dyad_factor(a: CoherentLabel, b: CoherentLabel, params: &MasterParams, t: f64) -> Result<C64> {
    check_time(t)?;
    Ok(log_overlap(b, a) * params.loss(t))
}

/// Field density at time `t` for a bath-free initial superposition.
pub fn me_reduce(initial: &FieldBathSuperposition, params: &MasterParams, t: f64) -> Result<ReducedDensity> {
    check_time(t)?;
    if !initial.is_normalized() {
        return Err(Error::ContractViolation("me_reduce() needs a normalized state".into()));
    }
    if initial.bath_modes() != 0 {
        return Err(Error::UnsupportedInput("master-equation input must not carry bath labels".into()));
    }
    let branches = initial.branches();
    let n = branches.len();
    let labels = branches.iter().map(|b| me_amplitude(b.field, params, t)).collect::<Result<Vec<_>>>()?;
    let mut coupling = DMatrix::<C64>::zeros(n, n);
    for (i, bi) in branches.iter().enumerate() {
        for (j, bj) in branches.iter().enumerate() {
            coupling[(i, j)] = me_log_dyad_factor(bi.field, bj.field, params, t)?;
        }
    }
    density_from_branches(labels, branches.iter().map(|b| b.weight).collect(), coupling)
}
