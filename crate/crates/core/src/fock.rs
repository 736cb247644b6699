//! Brute-force reference implementation in a truncated Fock basis.
//!
//! Everything here is deliberately plain: dense vectors and matrices, fixed
//! step integrators, no caching. It shares no numerical path with the coherent
//! label machinery beyond the `PhaseOpSum` type used to describe diagonal
//! operators, and exists to cross-check it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::bath::BathSpec;
use crate::coherent::{CoherentLabel, FieldBathSuperposition, PhaseOpSum};
use crate::error::{Error, Result};
use crate::protocol::{reduced_op, DetectionOutcome, ProtocolCase, ProtocolParams};

const TAIL_POPULATION_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-8;
const EIGEN_FLOOR: f64 = -1e-8;
const MAX_DIMENSION: usize = 1_000_000;
const MAX_HAMILTONIAN_MODES: usize = 2;
/// Upper bound on `||H|| h` for one Taylor step.
const TAYLOR_STEP_NORM: f64 = 0.5;
const TAYLOR_MAX_ORDER: usize = 60;

/// Smallest cutoff accepted for a coherent amplitude of intensity `n`.
pub fn required_n_max(intensity: f64) -> usize {
    (intensity + 8.0 * intensity.sqrt() + 10.0).ceil() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    n_max: usize,
    amplitudes: DVector<C64>,
}

impl FockVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("Fock vector needs at least one level"));
        }
        Ok(Self { n_max: amplitudes.len() - 1, amplitudes: DVector::from_vec(amplitudes) })
    }

    pub fn vacuum(n_max: usize) -> Self {
        let mut amplitudes = DVector::zeros(n_max + 1);
        amplitudes[0] = C64::new(1.0, 0.0);
        Self { n_max, amplitudes }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn tail_population(&self) -> f64 {
        self.amplitudes[self.n_max].norm_sqr()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        self.same_cutoff(other)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(n, a)| n as f64 * a.norm_sqr()).sum()
    }

    /// The diagonal operator applied level by level.
    pub fn apply(&self, op: &PhaseOpSum) -> Self {
        let amplitudes =
            DVector::from_iterator(self.n_max + 1, self.amplitudes.iter().enumerate().map(|(n, a)| op.value_at(n) * a));
        Self { n_max: self.n_max, amplitudes }
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm_sqr = self.norm_sqr();
        if norm_sqr <= crate::coherent::ZERO_NORM_FLOOR {
            return Err(Error::ZeroState { norm_sqr });
        }
        Ok(Self { n_max: self.n_max, amplitudes: &self.amplitudes / C64::new(norm_sqr.sqrt(), 0.0) })
    }

    /// `|self><other|` as a plain matrix.
    pub fn dyad(&self, other: &FockVector) -> Result<DMatrix<C64>> {
        self.same_cutoff(other)?;
        Ok(&self.amplitudes * other.amplitudes.adjoint())
    }

    fn same_cutoff(&self, other: &FockVector) -> Result<()> {
        if self.n_max != other.n_max {
            return Err(Error::invalid(format!("cutoff mismatch: {} vs {}", self.n_max, other.n_max)));
        }
        Ok(())
    }
}

/// `e^{-|a|^2/2} a^n / sqrt(n!)` for `n = 0..=n_max`.
pub fn coherent_to_fock(label: CoherentLabel, n_max: usize) -> Result<FockVector> {
    let alpha = label.amplitude();
    let required = required_n_max(label.intensity());
    if n_max < required {
        return Err(Error::Truncation { n_max, required });
    }
    let mut amplitudes = Vec::with_capacity(n_max + 1);
    let mut c = C64::new((-0.5 * label.intensity()).exp(), 0.0);
    for n in 0..=n_max {
        amplitudes.push(c);
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    let v = FockVector::new(amplitudes)?;
    if v.tail_population() >= TAIL_POPULATION_TOL {
        return Err(Error::Truncation { n_max, required: n_max + 1 });
    }
    Ok(v)
}

/// The normalized field state left by the first detection, built directly in
/// the Fock basis.
pub fn fock_prepare(params: &ProtocolParams, outcome: DetectionOutcome, n_max: usize) -> Result<FockVector> {
    coherent_to_fock(params.alpha0, n_max)?.apply(&reduced_op(params, outcome)).normalized()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockDensity {
    n_max: usize,
    matrix: DMatrix<C64>,
}

impl FockDensity {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() == 0 || !matrix.is_square() {
            return Err(Error::invalid("density matrix must be square and non-empty"));
        }
        let scale = matrix.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let asym = (&matrix - matrix.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if asym > HERMITIAN_TOL * scale {
            return Err(Error::ContractViolation(format!("density not Hermitian (defect {asym:e})")));
        }
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceViolation { trace });
        }
        let rho = Self { n_max: matrix.nrows() - 1, matrix };
        let lowest = fock_eigenvalues(&rho).last().copied().unwrap_or(0.0);
        if lowest < EIGEN_FLOOR {
            return Err(Error::PositivityViolation { eigenvalue: lowest });
        }
        Ok(rho)
    }

    pub fn from_pure(state: &FockVector) -> Result<Self> {
        Self::new(state.dyad(state)?)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `<psi|rho|psi>`.
    pub fn fidelity_with(&self, state: &FockVector) -> Result<f64> {
        if state.n_max != self.n_max {
            return Err(Error::invalid("cutoff mismatch"));
        }
        Ok(state.amplitudes.dotc(&(&self.matrix * &state.amplitudes)).re)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..=self.n_max).map(|n| n as f64 * self.matrix[(n, n)].re).sum()
    }
}

/// `Tr(op rho)` for a diagonal operator.
pub fn fock_measure(op: &PhaseOpSum, rho: &FockDensity) -> C64 {
    (0..=rho.n_max).map(|n| op.value_at(n) * rho.matrix[(n, n)]).sum()
}

/// All eigenvalues, descending.
pub fn fock_eigenvalues(rho: &FockDensity) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(rho.matrix.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Eigenvalues with their eigenvectors, descending.
pub fn fock_eigenpairs(rho: &FockDensity) -> Vec<(f64, DVector<C64>)> {
    let eig = SymmetricEigen::new(rho.matrix.clone());
    let mut pairs: Vec<(f64, DVector<C64>)> =
        eig.eigenvalues.iter().enumerate().map(|(k, &v)| (v, eig.eigenvectors.column(k).into_owned())).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// `(lambda_+, lambda_-)` with the same convention as
/// [`crate::protocol::signed_eigenvalues`]: even parity first in case a,
/// descending order in case b. In case a the parity of the leading
/// eigenvector decides, since the rest of a truncated spectrum may be a
/// degenerate null space with arbitrary parity.
pub fn fock_signed_eigenvalues(case: ProtocolCase, rho: &FockDensity) -> (f64, f64) {
    let pairs = fock_eigenpairs(rho);
    let value = |k: usize| pairs.get(k).map_or(0.0, |p| p.0);
    match case {
        ProtocolCase::CaseB => (value(0), value(1)),
        ProtocolCase::CaseA => {
            let parity: f64 =
                pairs[0].1.iter().enumerate().map(|(n, c)| if n % 2 == 0 { c.norm_sqr() } else { -c.norm_sqr() }).sum();
            if parity >= 0.0 {
                (value(0), value(1))
            } else {
                (value(1), value(0))
            }
        }
    }
}

fn lindblad_rhs(m: &DMatrix<C64>, gamma: f64) -> DMatrix<C64> {
    let d = m.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        let jump = if i + 1 < d && j + 1 < d {
            m[(i + 1, j + 1)] * (((i + 1) * (j + 1)) as f64).sqrt()
        } else {
            C64::new(0.0, 0.0)
        };
        (jump - m[(i, j)] * (0.5 * (i + j) as f64)) * gamma
    })
}

fn lindblad_steps(n_max: usize, gamma: f64, t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!("decay rate must be positive, got {gamma}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    let limit = 1e-3 / gamma / (n_max + 1) as f64;
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("step {dt:e} outside (0, {limit:e}]")));
    }
    let steps = (t / dt).ceil() as usize;
    Ok((steps, if steps == 0 { 0.0 } else { t / steps as f64 }))
}

/// RK4 integration of `dX/dt = gamma (a X a^dag - {a^dag a, X}/2)` for an
/// arbitrary square matrix `X`, so that single dyads `|a><b|` can be
/// propagated. The step actually used is `t / ceil(t / dt)`.
pub fn lindblad_evolve_matrix(x: &DMatrix<C64>, gamma: f64, t: f64, dt: f64) -> Result<DMatrix<C64>> {
    if x.nrows() == 0 || !x.is_square() {
        return Err(Error::invalid("matrix must be square and non-empty"));
    }
    let (steps, h) = lindblad_steps(x.nrows() - 1, gamma, t, dt)?;
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut m = x.clone();
    for _ in 0..steps {
        let k1 = lindblad_rhs(&m, gamma);
        let k2 = lindblad_rhs(&(&m + &k1 * half), gamma);
        let k3 = lindblad_rhs(&(&m + &k2 * half), gamma);
        let k4 = lindblad_rhs(&(&m + &k3 * full), gamma);
        m += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    Ok(m)
}

pub fn lindblad_evolve(rho: &FockDensity, gamma: f64, t: f64, dt: f64) -> Result<FockDensity> {
    FockDensity::new(lindblad_evolve_matrix(&rho.matrix, gamma, t, dt)?)
}

/// Pure state of the field and up to two bath modes, field index slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiModeState {
    dims: Vec<usize>,
    amplitudes: DVector<C64>,
}

fn total_dimension(dims: &[usize]) -> Result<usize> {
    let mut total: usize = 1;
    for &d in dims {
        total = total.checked_mul(d).filter(|&n| n <= MAX_DIMENSION).ok_or(Error::Capacity {
            dimension: dims.iter().map(|&d| d as f64).product::<f64>() as usize,
            limit: MAX_DIMENSION,
        })?;
    }
    Ok(total)
}

fn decode(mut idx: usize, dims: &[usize], occ: &mut [usize]) {
    for m in (0..dims.len()).rev() {
        occ[m] = idx % dims[m];
        idx /= dims[m];
    }
}

fn encode(occ: &[usize], dims: &[usize]) -> usize {
    occ.iter().zip(dims).fold(0, |acc, (&n, &d)| acc * d + n)
}

impl MultiModeState {
    /// Product of `field` with the vacuum of each bath mode.
    pub fn with_vacuum_bath(field: &FockVector, bath_n_max: &[usize]) -> Result<Self> {
        let mut dims = vec![field.n_max + 1];
        dims.extend(bath_n_max.iter().map(|n| n + 1));
        let total = total_dimension(&dims)?;
        let stride = total / dims[0];
        let mut amplitudes = DVector::zeros(total);
        for (n, a) in field.amplitudes.iter().enumerate() {
            amplitudes[n * stride] = *a;
        }
        Ok(Self { dims, amplitudes })
    }

    /// Expands every branch `w |alpha> (x) |beta_1> (x) ...` in the product basis.
    pub fn from_superposition(state: &FieldBathSuperposition, n_max: &[usize]) -> Result<Self> {
        if n_max.len() != state.bath_modes() + 1 {
            return Err(Error::invalid("one cutoff per mode (field first) is required"));
        }
        let dims: Vec<usize> = n_max.iter().map(|n| n + 1).collect();
        let total = total_dimension(&dims)?;
        let mut amplitudes = DVector::zeros(total);
        let mut occ = vec![0; dims.len()];
        for branch in state.branches() {
            let factors = std::iter::once(branch.field)
                .chain(branch.bath.iter().copied())
                .zip(n_max)
                .map(|(label, &n)| coherent_to_fock(label, n))
                .collect::<Result<Vec<_>>>()?;
            for idx in 0..total {
                decode(idx, &dims, &mut occ);
                let product: C64 = occ.iter().zip(&factors).map(|(&n, f)| f.amplitudes[n]).product();
                amplitudes[idx] += branch.weight * product;
            }
        }
        Ok(Self { dims, amplitudes })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn inner(&self, other: &MultiModeState) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::invalid("dimension mismatch"));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Partial trace over the bath modes.
    pub fn field_density(&self) -> Result<FockDensity> {
        let d = self.dims[0];
        let stride = self.amplitudes.len() / d;
        let m = DMatrix::from_fn(d, d, |i, j| {
            (0..stride).map(|r| self.amplitudes[i * stride + r] * self.amplitudes[j * stride + r].conj()).sum()
        });
        FockDensity::new(m)
    }
}

struct SparseHamiltonian {
    diagonal: Vec<f64>,
    /// `(row, col, value)` off-diagonal entries.
    hops: Vec<(usize, usize, f64)>,
    norm_bound: f64,
}

impl SparseHamiltonian {
    /// `H = sum_k D_k b_k^dag b_k + sum_k g_k (a^dag b_k + a b_k^dag)`.
    fn build(spec: &BathSpec, dims: &[usize]) -> Self {
        let total: usize = dims.iter().product();
        let mut occ = vec![0; dims.len()];
        let mut diagonal = vec![0.0; total];
        let mut hops = Vec::new();
        let mut row_sums = vec![0.0; total];
        for idx in 0..total {
            decode(idx, dims, &mut occ);
            diagonal[idx] = spec.detunings().iter().enumerate().map(|(k, d)| d * occ[k + 1] as f64).sum();
            row_sums[idx] += diagonal[idx].abs();
            for (k, &g) in spec.couplings().iter().enumerate() {
                let m = k + 1;
                // a^dag b_k
                if occ[m] > 0 && occ[0] + 1 < dims[0] {
                    let v = g * (((occ[0] + 1) * occ[m]) as f64).sqrt();
                    let mut target = occ.clone();
                    target[0] += 1;
                    target[m] -= 1;
                    hops.push((encode(&target, dims), idx, v));
                    row_sums[idx] += v.abs();
                }
                // a b_k^dag
                if occ[0] > 0 && occ[m] + 1 < dims[m] {
                    let v = g * ((occ[0] * (occ[m] + 1)) as f64).sqrt();
                    let mut target = occ.clone();
                    target[0] -= 1;
                    target[m] += 1;
                    hops.push((encode(&target, dims), idx, v));
                    row_sums[idx] += v.abs();
                }
            }
        }
        let norm_bound = row_sums.iter().fold(0.0f64, |m, &s| m.max(s));
        Self { diagonal, hops, norm_bound }
    }

    fn apply(&self, psi: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::from_iterator(psi.len(), psi.iter().zip(&self.diagonal).map(|(a, d)| a * d));
        for &(row, col, v) in &self.hops {
            out[row] += psi[col] * v;
        }
        out
    }
}

/// Unitary evolution of `field (x) vacuum` under the rotating-wave
/// Hamiltonian in the interaction picture. `bath_n_max` gives the cutoff of
/// each bath mode. Stepping is a truncated Taylor series of `exp(-i H h)`.
pub fn hamiltonian_evolve(field: &FockVector, spec: &BathSpec, t: f64, bath_n_max: &[usize]) -> Result<MultiModeState> {
    if spec.modes() > MAX_HAMILTONIAN_MODES {
        return Err(Error::invalid(format!(
            "Hamiltonian oracle supports at most {MAX_HAMILTONIAN_MODES} bath modes, got {}",
            spec.modes()
        )));
    }
    if bath_n_max.len() != spec.modes() {
        return Err(Error::invalid("one cutoff per bath mode is required"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    let mut state = MultiModeState::with_vacuum_bath(field, bath_n_max)?;
    let h = SparseHamiltonian::build(spec, &state.dims);
    if t == 0.0 || h.norm_bound == 0.0 {
        return Ok(state);
    }
    let steps = (t * h.norm_bound / TAYLOR_STEP_NORM).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    for _ in 0..steps {
        let mut term = state.amplitudes.clone();
        let mut acc = term.clone();
        for order in 1..=TAYLOR_MAX_ORDER {
            term = h.apply(&term) * C64::new(0.0, -dt / order as f64);
            acc += &term;
            if term.norm() <= 1e-17 * acc.norm() {
                break;
            }
        }
        state.amplitudes = acc;
    }
    Ok(state)
}
