use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

/// Phases closer than this (on the circle) are merged by [`PhaseOpSum::canonical`].
const PHASE_MERGE_TOL: f64 = 1e-12;
/// Terms with smaller weight magnitude are dropped by [`PhaseOpSum::canonical`].
const WEIGHT_DROP_TOL: f64 = 1e-15;

/// `weight * exp(i phase a^dag a)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseTerm {
    pub weight: C64,
    pub phase: f64,
}

/// Finite sum of number-phase exponentials `sum_m w_m exp(i theta_m a^dag a)`.
///
/// All such operators are diagonal in the Fock basis and commute, so sums,
/// products and adjoints stay in the family. Since the photon number is an
/// integer, phases only matter modulo `2 pi`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseOpSum {
    terms: Vec<PhaseTerm>,
}

fn wrap_phase(phase: f64) -> f64 {
    // (-pi, pi]
    let r = phase.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

impl PhaseOpSum {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn identity() -> Self {
        Self::term(C64::new(1.0, 0.0), 0.0)
    }

    pub fn term(weight: C64, phase: f64) -> Self {
        Self { terms: vec![PhaseTerm { weight, phase }] }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (C64, f64)>) -> Self {
        Self { terms: terms.into_iter().map(|(weight, phase)| PhaseTerm { weight, phase }).collect() }
    }

    /// Parity projector onto odd photon numbers, `(1 - exp(i pi n)) / 2`.
    pub fn odd_parity() -> Self {
        Self::from_terms([(C64::new(0.5, 0.0), 0.0), (C64::new(-0.5, 0.0), PI)])
    }

    pub fn terms(&self) -> &[PhaseTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn adjoint(&self) -> Self {
        Self { terms: self.terms.iter().map(|t| PhaseTerm { weight: t.weight.conj(), phase: -t.phase }).collect() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { terms: self.terms.iter().map(|t| PhaseTerm { weight: t.weight * factor, phase: t.phase }).collect() }
    }

    /// Diagonal value on the Fock state `|n>`.
    pub fn value_at(&self, n: usize) -> C64 {
        let n = n as f64;
        self.terms.iter().map(|t| t.weight * C64::from_polar(1.0, t.phase * n)).sum()
    }

    /// Phases wrapped to `(-pi, pi]`, equal phases merged, negligible terms
    /// dropped, sorted by phase.
    pub fn canonical(&self) -> Self {
        let mut terms: Vec<PhaseTerm> =
            self.terms.iter().map(|t| PhaseTerm { weight: t.weight, phase: wrap_phase(t.phase) }).collect();
        terms.sort_by(|a, b| a.phase.total_cmp(&b.phase));
        let mut merged: Vec<PhaseTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.iter_mut().find(|m| circular_distance(m.phase, t.phase) < PHASE_MERGE_TOL) {
                Some(m) => m.weight += t.weight,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.weight.norm() > WEIGHT_DROP_TOL);
        Self { terms: merged }
    }

    /// Term-wise comparison after canonicalization.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.clone() - other.clone()).canonical().terms.iter().all(|t| t.weight.norm() <= tol)
    }

    /// True when the operator equals its adjoint term-wise.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.approx_eq(&self.adjoint(), tol)
    }
}

impl Add for PhaseOpSum {
    type Output = PhaseOpSum;

    fn add(mut self, rhs: PhaseOpSum) -> PhaseOpSum {
        self.terms.extend(rhs.terms);
        self
    }
}

impl Neg for PhaseOpSum {
    type Output = PhaseOpSum;

    fn neg(self) -> PhaseOpSum {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Sub for PhaseOpSum {
    type Output = PhaseOpSum;

    fn sub(self, rhs: PhaseOpSum) -> PhaseOpSum {
        self + (-rhs)
    }
}

impl Mul for &PhaseOpSum {
    type Output = PhaseOpSum;

    fn mul(self, rhs: &PhaseOpSum) -> PhaseOpSum {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(PhaseTerm { weight: a.weight * b.weight, phase: a.phase + b.phase });
            }
        }
        PhaseOpSum { terms }.canonical()
    }
}

impl Mul for PhaseOpSum {
    type Output = PhaseOpSum;

    fn mul(self, rhs: PhaseOpSum) -> PhaseOpSum {
        &self * &rhs
    }
}
