//! Exact algebra of coherent states of a single oscillator mode.
//!
//! Every quantity here is evaluated in closed form through the coherent
//! overlap
//! ```text
//! <a|b> = exp(-|a|^2/2 - |b|^2/2 + conj(a) b)
//! ```
//! so no Fock-space truncation ever enters. States are finite superpositions
//! of product coherent states (field mode times bath modes); reduced densities
//! of the field live in the non-orthogonal span of a few coherent labels.

mod density;
mod phase_op;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub use density::{
    eigenvalues, expectation, idempotency_defect, mean_photon_number, purity, reduce, ReducedDensity, Spectrum,
};
pub use phase_op::{PhaseOpSum, PhaseTerm};

pub(crate) use density::density_from_branches;

/// Labels closer than this are treated as the same coherent state.
pub const LABEL_MERGE_TOL: f64 = 1e-7;

/// Squared norms below this signal a zero state.
pub const ZERO_NORM_FLOOR: f64 = 1e-14;

/// Complex amplitude naming a coherent state `|alpha>` of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentLabel(C64);

impl CoherentLabel {
    pub fn new(amplitude: C64) -> Result<Self> {
        if amplitude.re.is_finite() && amplitude.im.is_finite() {
            Ok(Self(amplitude))
        } else {
            Err(Error::invalid(format!("non-finite coherent amplitude {amplitude}")))
        }
    }

    pub fn from_re_im(re: f64, im: f64) -> Result<Self> {
        Self::new(C64::new(re, im))
    }

    pub const fn vacuum() -> Self {
        Self(C64::new(0.0, 0.0))
    }

    pub fn amplitude(&self) -> C64 {
        self.0
    }

    /// Mean photon number `|alpha|^2`.
    pub fn intensity(&self) -> f64 {
        self.0.norm_sqr()
    }

    /// `exp(i phase a^dag a) |alpha> = |alpha e^{i phase}>`.
    pub fn rotated(&self, phase: f64) -> Self {
        Self(self.0 * C64::from_polar(1.0, phase))
    }

    /// Label obtained by multiplying the amplitude with a (finite) factor.
    pub fn scaled(&self, factor: C64) -> Self {
        Self(self.0 * factor)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.0 - other.0).norm()
    }

    pub fn coalesces_with(&self, other: &Self) -> bool {
        self.distance(other) < LABEL_MERGE_TOL
    }
}

impl From<CoherentLabel> for C64 {
    fn from(label: CoherentLabel) -> Self {
        label.0
    }
}

/// `ln <a|b>` written through the difference `b - a`, so that nearly equal
/// labels keep full relative precision.
pub fn log_overlap(a: CoherentLabel, b: CoherentLabel) -> C64 {
    log_overlap_diff(a.0, b.0 - a.0)
}

/// `ln <a| b e^{i theta}>`, with the rotation applied to the difference.
pub fn log_overlap_rotated(a: CoherentLabel, b: CoherentLabel, theta: f64) -> C64 {
    let (a, b) = (a.0, b.0);
    log_overlap_diff(a, (b - a) + b * expm1(C64::new(0.0, theta)))
}

fn log_overlap_diff(a: C64, diff: C64) -> C64 {
    C64::new(-0.5 * diff.norm_sqr(), (a.conj() * diff).im)
}

/// `exp(z) - 1`, accurate for small `|z|`.
pub fn expm1(z: C64) -> C64 {
    let half = (0.5 * z.im).sin();
    C64::new(z.re.exp_m1() * z.im.cos() - 2.0 * half * half, z.re.exp() * z.im.sin())
}

/// `sum_ij a_i conj(b_j) exp(x(i, j))` for exponents with `Re x <= 0`.
///
/// Evaluated as `(sum a)(sum conj b) + sum_ij a_i conj(b_j) expm1(x)`, which
/// avoids the cancellation between large weights of opposite sign attached to
/// nearly coincident labels.
pub fn pair_sum(a: &[C64], b: &[C64], x: impl Fn(usize, usize) -> C64) -> C64 {
    let sa: C64 = a.iter().sum();
    let sb: C64 = b.iter().map(|z| z.conj()).sum();
    let mut acc = sa * sb;
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            acc += ai * bj.conj() * expm1(x(i, j));
        }
    }
    acc
}

/// `<a|b>` for two coherent states.
pub fn overlap(a: CoherentLabel, b: CoherentLabel) -> C64 {
    log_overlap(a, b).exp()
}

/// Checked variant of [`overlap`] for raw amplitudes.
pub fn overlap_checked(a: C64, b: C64) -> Result<C64> {
    Ok(overlap(CoherentLabel::new(a)?, CoherentLabel::new(b)?))
}

/// `sum_k ln <a_k|b_k>` over two equally long lists of bath labels.
pub fn product_log_overlap(a: &[CoherentLabel], b: &[CoherentLabel]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(a, b)| log_overlap(*a, *b)).sum()
}

/// `prod_k <a_k|b_k>`, taken as one exponential so the product does not
/// underflow term by term.
pub fn product_overlap(a: &[CoherentLabel], b: &[CoherentLabel]) -> C64 {
    product_log_overlap(a, b).exp()
}

/// Overlap (Gram) matrix of a list of coherent labels.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub labels: Vec<CoherentLabel>,
    pub entries: DMatrix<C64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn gram(labels: &[CoherentLabel]) -> Result<GramMatrix> {
    if labels.is_empty() {
        return Err(Error::invalid("gram matrix of an empty label list"));
    }
    let n = labels.len();
    let entries =
        DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { overlap(labels[i], labels[j]) });
    Ok(GramMatrix { labels: labels.to_vec(), entries })
}

/// `ln <a|b>` of two product branches, weights excluded.
pub fn branch_log_overlap(a: &Branch, b: &Branch) -> C64 {
    log_overlap(a.field, b.field) + product_log_overlap(&a.bath, &b.bath)
}

/// One term `weight * |field> prod_k |bath_k>` of a field+bath superposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: C64,
    pub field: CoherentLabel,
    pub bath: Vec<CoherentLabel>,
}

impl Branch {
    pub fn new(weight: C64, field: CoherentLabel, bath: Vec<CoherentLabel>) -> Self {
        Self { weight, field, bath }
    }

    /// Branch with the bath in its ground state (no bath labels).
    pub fn field_only(weight: C64, field: CoherentLabel) -> Self {
        Self { weight, field, bath: Vec::new() }
    }

    fn coalesces_with(&self, other: &Branch) -> bool {
        self.field.coalesces_with(&other.field) && self.bath.iter().zip(&other.bath).all(|(a, b)| a.coalesces_with(b))
    }
}

/// Exact state of field plus bath as a finite sum of product coherent states.
///
/// An empty bath list means all bath modes are in the vacuum; this is the
/// form produced by state preparation.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBathSuperposition {
    branches: Vec<Branch>,
    normalized: bool,
}

impl FieldBathSuperposition {
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let Some(first) = branches.first() else {
            return Err(Error::invalid("superposition needs at least one branch"));
        };
        let modes = first.bath.len();
        if branches.iter().any(|b| b.bath.len() != modes) {
            return Err(Error::invalid("branches carry different numbers of bath modes"));
        }
        if branches.iter().any(|b| !(b.weight.re.is_finite() && b.weight.im.is_finite())) {
            return Err(Error::invalid("non-finite branch weight"));
        }
        Ok(Self { branches, normalized: false })
    }

    pub(crate) fn from_parts_unchecked(branches: Vec<Branch>, normalized: bool) -> Self {
        Self { branches, normalized }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn bath_modes(&self) -> usize {
        self.branches[0].bath.len()
    }

    /// `<psi|psi>` with the full overlap matrix of all branches.
    pub fn norm_sqr(&self) -> f64 {
        let br = &self.branches;
        let w: Vec<C64> = br.iter().map(|b| b.weight).collect();
        pair_sum(&w, &w, |j, i| branch_log_overlap(&br[i], &br[j])).re
    }

    /// Merges branches whose field and bath labels coincide and drops
    /// branches with exactly zero weight (keeping at least one).
    pub fn coalesce(self) -> Self {
        let normalized = self.normalized;
        let mut merged: Vec<Branch> = Vec::with_capacity(self.branches.len());
        for branch in self.branches {
            match merged.iter_mut().find(|m| m.coalesces_with(&branch)) {
                Some(m) => m.weight += branch.weight,
                None => merged.push(branch),
            }
        }
        if merged.len() > 1 {
            let nonzero: Vec<Branch> = merged.iter().filter(|b| b.weight.norm() > 0.0).cloned().collect();
            if !nonzero.is_empty() {
                merged = nonzero;
            } else {
                merged.truncate(1);
            }
        }
        Self { branches: merged, normalized }
    }

    /// Rescales all weights by one positive factor so that the state has
    /// unit norm.
    pub fn normalize(self) -> Result<Self> {
        let norm_sqr = self.norm_sqr();
        if !(norm_sqr > ZERO_NORM_FLOOR) {
            return Err(Error::ZeroState { norm_sqr });
        }
        let scale = norm_sqr.sqrt().recip();
        let branches = self.branches.into_iter().map(|b| Branch { weight: b.weight * scale, ..b }).collect();
        Ok(Self { branches, normalized: true })
    }
}

/// Normalizes a superposition; see [`FieldBathSuperposition::normalize`].
pub fn normalize(state: FieldBathSuperposition) -> Result<FieldBathSuperposition> {
    state.normalize()
}
