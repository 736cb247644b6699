use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::{
    gram, log_overlap, log_overlap_rotated, overlap, pair_sum, product_log_overlap, CoherentLabel,
    FieldBathSuperposition, PhaseOpSum,
};
use crate::error::{Error, Result};

/// Smallest admissible Gram eigenvalue before labels are merged.
pub const GRAM_FLOOR: f64 = 1e-12;
/// Eigenvalues within this distance outside `[0, 1]` are clamped.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;

/// Reduced density of the field, `rho = sum_ij M[i][j] |l_i><l_j|`, in the
/// (non-orthogonal) span of a list of coherent labels.
///
/// Densities obtained by tracing out a bath also keep the unmerged branch
/// form `M_ij = w_i conj(w_j) exp(c_ij)`; traces, expectations and two-branch
/// spectra are then evaluated without cancellation between nearly coincident
/// labels.
#[derive(Clone, Debug)]
pub struct ReducedDensity {
    labels: Vec<CoherentLabel>,
    coeff: DMatrix<C64>,
    branches: Option<Branches>,
}

#[derive(Clone, Debug)]
struct Branches {
    labels: Vec<CoherentLabel>,
    weights: Vec<C64>,
    /// `c_ij`, with `c_ji = conj(c_ij)`, zero diagonal and `Re c_ij <= 0`.
    coupling: DMatrix<C64>,
}

impl Branches {
    /// `sum_ij a_i conj(b_j) exp(c_ij) <l_j| l_i e^{i theta}>`.
    fn sum(&self, a: &[C64], b: &[C64], theta: f64) -> C64 {
        pair_sum(a, b, |i, j| self.coupling[(i, j)] + log_overlap_rotated(self.labels[j], self.labels[i], theta))
    }

    fn trace(&self) -> f64 {
        self.sum(&self.weights, &self.weights, 0.0).re
    }

    /// Trace and determinant of `M S` for exactly two branches.
    fn invariants(&self) -> Option<(f64, f64)> {
        let [w1, w2] = self.weights[..] else { return None };
        let [l1, l2] = self.labels[..] else { return None };
        let det_m = (w1 * w2).norm_sqr() * -(2.0 * self.coupling[(0, 1)].re).exp_m1();
        let det_s = -(-l1.distance(&l2).powi(2)).exp_m1();
        Some((self.trace(), det_m * det_s))
    }

    /// `(M S)[i][j] = w_i sum_k conj(w_k) exp(c_ik) <l_k|l_j>`.
    fn action(&self) -> DMatrix<C64> {
        let n = self.weights.len();
        let total: C64 = self.weights.iter().map(|w| w.conj()).sum();
        DMatrix::from_fn(n, n, |i, j| {
            let tail: C64 = (0..n)
                .map(|k| {
                    let x = self.coupling[(i, k)] + log_overlap(self.labels[k], self.labels[j]);
                    self.weights[k].conj() * super::expm1(x)
                })
                .sum();
            self.weights[i] * (total + tail)
        })
    }
}

impl ReducedDensity {
    /// Builds a density from labels and a coefficient matrix. The matrix must
    /// be Hermitian; labels that coalesce are merged.
    pub fn new(labels: Vec<CoherentLabel>, coeff: DMatrix<C64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("density without labels"));
        }
        if coeff.nrows() != n || coeff.ncols() != n {
            return Err(Error::invalid(format!(
                "coefficient matrix is {}x{} for {n} labels",
                coeff.nrows(),
                coeff.ncols()
            )));
        }
        if coeff.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("non-finite density coefficient"));
        }
        let scale = coeff.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let skew = (&coeff - coeff.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if skew > HERMITIAN_TOL * scale {
            return Err(Error::ContractViolation(format!(
                "density coefficients are not Hermitian (deviation {skew:e})"
            )));
        }
        let coeff = (&coeff + coeff.adjoint()).scale(0.5);
        Ok(Self::merge_coalescing(labels, coeff))
    }

    fn from_branches(labels: Vec<CoherentLabel>, weights: Vec<C64>, coupling: DMatrix<C64>) -> Result<Self> {
        let n = labels.len();
        // Both triangles are computed independently; keep the Hermitian part.
        let coupling = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(0.0, 0.0)
            } else {
                0.5 * (coupling[(i, j)] + coupling[(j, i)].conj())
            }
        });
        let coeff = DMatrix::from_fn(n, n, |i, j| weights[i] * weights[j].conj() * coupling[(i, j)].exp());
        let mut slots: Vec<CoherentLabel> = Vec::new();
        let slot: Vec<usize> = labels
            .iter()
            .map(|l| match slots.iter().position(|s| s.coalesces_with(l)) {
                Some(p) => p,
                None => {
                    slots.push(*l);
                    slots.len() - 1
                }
            })
            .collect();
        let mut merged = DMatrix::<C64>::zeros(slots.len(), slots.len());
        for i in 0..n {
            for j in 0..n {
                merged[(slot[i], slot[j])] += coeff[(i, j)];
            }
        }
        let mut rho = Self::new(slots, merged)?;
        rho.branches = Some(Branches { labels, weights, coupling });
        Ok(rho)
    }

    fn merge_coalescing(mut labels: Vec<CoherentLabel>, mut coeff: DMatrix<C64>) -> Self {
        let mut i = 0;
        while i < labels.len() {
            let mut j = i + 1;
            while j < labels.len() {
                if labels[i].coalesces_with(&labels[j]) {
                    coeff = merge_index(coeff, i, j);
                    labels.remove(j);
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        Self { labels, coeff, branches: None }
    }

    pub fn labels(&self) -> &[CoherentLabel] {
        &self.labels
    }

    pub fn coeff(&self) -> &DMatrix<C64> {
        &self.coeff
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// `Tr rho = sum_ij M[i][j] <l_j|l_i>`.
    pub fn trace(&self) -> f64 {
        if let Some(b) = &self.branches {
            return b.trace();
        }
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.coeff[(i, j)] * overlap(self.labels[j], self.labels[i]);
            }
        }
        acc.re
    }

    /// `rho * S` as a matrix acting on label-coefficient vectors.
    fn action(&self) -> DMatrix<C64> {
        let s = gram(&self.labels).expect("non-empty labels").entries;
        &self.coeff * s
    }

    /// Merges the closest pair of labels, returning `None` when only one is left.
    fn merge_closest_pair(&self) -> Option<Self> {
        let n = self.dim();
        if n < 2 {
            return None;
        }
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..n {
            for j in i + 1..n {
                let d = self.labels[i].distance(&self.labels[j]);
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        let (i, j, _) = best;
        let mut labels = self.labels.clone();
        labels.remove(j);
        Some(Self { labels, coeff: merge_index(self.coeff.clone(), i, j), branches: None })
    }
}

fn merge_index(coeff: DMatrix<C64>, keep: usize, drop: usize) -> DMatrix<C64> {
    let mut m = coeff;
    let n = m.nrows();
    for k in 0..n {
        let v = m[(drop, k)];
        m[(keep, k)] += v;
    }
    for k in 0..n {
        let v = m[(k, drop)];
        m[(k, keep)] += v;
    }
    m.remove_row(drop).remove_column(drop)
}

/// Traces the bath out of a normalized field+bath superposition.
///
/// `M[I][J] = sum over branches i -> I, j -> J of w_i conj(w_j) prod_k <bath_jk|bath_ik>`,
/// where `I`, `J` index the distinct field labels.
pub fn reduce(state: &FieldBathSuperposition) -> Result<ReducedDensity> {
    if !state.is_normalized() {
        return Err(Error::ContractViolation("reduce() needs a normalized state".into()));
    }
    let br = state.branches();
    let n = br.len();
    let coupling = DMatrix::from_fn(n, n, |i, j| product_log_overlap(&br[j].bath, &br[i].bath));
    ReducedDensity::from_branches(br.iter().map(|b| b.field).collect(), br.iter().map(|b| b.weight).collect(), coupling)
}

/// Field density `sum_ij w_i conj(w_j) exp(c_ij) |l_i><l_j|` from branch
/// data; `c` must be Hermitian with zero diagonal and non-positive real part.
pub(crate) fn density_from_branches(
    labels: Vec<CoherentLabel>,
    weights: Vec<C64>,
    coupling: DMatrix<C64>,
) -> Result<ReducedDensity> {
    ReducedDensity::from_branches(labels, weights, coupling)
}

/// Eigen-decomposition of a reduced density in its label span.
///
/// Eigenvalues are sorted in descending order; `eigenvectors[k]` holds the
/// coefficients `c` of `|v_k> = sum_i c_i |l_i>` with `<v_k|v_k> = 1`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<C64>>,
    /// Labels the eigenvectors refer to (after any degenerate-span merging).
    pub labels: Vec<CoherentLabel>,
}

impl Spectrum {
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }

    /// Eigenvalue `k`, or zero past the end of the spectrum.
    pub fn value(&self, k: usize) -> f64 {
        self.eigenvalues.get(k).copied().unwrap_or(0.0)
    }

    /// `<v_k|P|v_k>`.
    pub fn vector_expectation(&self, op: &PhaseOpSum, k: usize) -> C64 {
        let c = &self.eigenvectors[k];
        op.terms()
            .iter()
            .map(|t| t.weight * pair_sum(c, c, |j, i| log_overlap_rotated(self.labels[i], self.labels[j], t.phase)))
            .sum()
    }

    /// `sum_k lambda_k <v_k|P|v_k>`.
    pub fn spectral_expectation(&self, op: &PhaseOpSum) -> C64 {
        self.eigenvalues.iter().enumerate().map(|(k, &l)| l * self.vector_expectation(op, k)).sum()
    }

    pub fn purity(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l * l).sum()
    }
}

/// Solves `rho |v> = lambda |v>` in the span of the density's labels.
///
/// The Gram matrix is factored as `S = L L^dag`; the Hermitian matrix
/// `L^dag M L` then carries the non-zero spectrum of `M S`. If the Gram matrix
/// is numerically singular, the closest labels are merged and the
/// factorization is retried.
pub fn eigenvalues(rho: &ReducedDensity) -> Result<Spectrum> {
    if let Some(b) = &rho.branches {
        if b.weights.len() == 2 {
            return two_branch_spectrum(b);
        }
    }
    let mut rho = rho.clone();
    loop {
        let g = gram(&rho.labels)?;
        let singular = rho.dim() > 1 && g.min_eigenvalue() < GRAM_FLOOR;
        let chol = if singular { None } else { Cholesky::new(g.entries) };
        let Some(chol) = chol else {
            match rho.merge_closest_pair() {
                Some(merged) => {
                    rho = merged;
                    continue;
                }
                None => return Err(Error::ContractViolation("singular 1x1 Gram matrix".into())),
            }
        };
        let l = chol.l();
        let h = l.adjoint() * &rho.coeff * &l;
        let h = (&h + h.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(h);

        let mut order: Vec<usize> = (0..rho.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let lt = l.adjoint();
        let mut eigenvalues = Vec::with_capacity(order.len());
        let mut eigenvectors = Vec::with_capacity(order.len());
        for k in order {
            let value = clamp_eigenvalue(eig.eigenvalues[k])?;
            let u: DVector<C64> = eig.eigenvectors.column(k).into_owned();
            let c = lt
                .solve_upper_triangular(&u)
                .ok_or_else(|| Error::ContractViolation("triangular solve failed".into()))?;
            eigenvalues.push(value);
            eigenvectors.push(c.iter().copied().collect());
        }
        return Ok(Spectrum { eigenvalues, eigenvectors, labels: rho.labels.clone() });
    }
}

/// Closed-form spectrum of a two-branch density: eigenvalues from the trace
/// and `det(M S) = det M det S`, eigenvectors from the rows of `M S`.
fn two_branch_spectrum(b: &Branches) -> Result<Spectrum> {
    let (trace, det) = b.invariants().expect("two branches");
    let root = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let plus = 0.5 * (trace + root);
    let minus = if plus > 0.0 { det / plus } else { 0.0 };
    let (plus, minus) = (clamp_eigenvalue(plus)?, clamp_eigenvalue(minus)?);

    let a = b.action();
    let p = [a[(0, 1)], C64::from(plus) - a[(0, 0)]];
    let q = [C64::from(plus) - a[(1, 1)], a[(1, 0)]];
    let size = |v: &[C64; 2]| v[0].norm() + v[1].norm();
    let mut v1 = if size(&p) >= size(&q) { p } else { q };
    if !(size(&v1) > 0.0) {
        v1 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    }
    let labels = &b.labels;
    let s1: Vec<C64> =
        (0..2).map(|i| pair_sum(&v1, &[C64::new(1.0, 0.0)], |j, _| log_overlap(labels[i], labels[j]))).collect();
    let v2 = [s1[1].conj(), -s1[0].conj()];

    let mut eigenvalues = Vec::with_capacity(2);
    let mut eigenvectors = Vec::with_capacity(2);
    for (value, v) in [(plus, v1), (minus, v2)] {
        let norm_sqr = pair_sum(&v, &v, |j, i| log_overlap(labels[i], labels[j])).re;
        if !(norm_sqr > 0.0) {
            continue;
        }
        let scale = norm_sqr.sqrt().recip();
        eigenvalues.push(value);
        eigenvectors.push(v.iter().map(|z| z * scale).collect());
    }
    Ok(Spectrum { eigenvalues, eigenvectors, labels: labels.clone() })
}

fn clamp_eigenvalue(value: f64) -> Result<f64> {
    if !value.is_finite() || !(-EIGEN_CLAMP_TOL..=1.0 + EIGEN_CLAMP_TOL).contains(&value) {
        return Err(Error::PositivityViolation { eigenvalue: value });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// `Tr[P rho]` for a phase operator; each term reduces to coherent overlaps
/// through `exp(i theta a^dag a)|l> = |l e^{i theta}>`.
pub fn expectation(op: &PhaseOpSum, rho: &ReducedDensity) -> C64 {
    if let Some(b) = &rho.branches {
        return op.terms().iter().map(|t| t.weight * b.sum(&b.weights, &b.weights, t.phase)).sum();
    }
    let n = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for t in op.terms() {
        let mut term = C64::new(0.0, 0.0);
        for i in 0..n {
            let rotated = rho.labels[i].rotated(t.phase);
            for j in 0..n {
                term += rho.coeff[(i, j)] * overlap(rho.labels[j], rotated);
            }
        }
        acc += t.weight * term;
    }
    acc
}

/// `Tr rho^2`, evaluated as the trace of `(M S)^2`.
pub fn purity(rho: &ReducedDensity) -> f64 {
    if let Some((trace, det)) = rho.branches.as_ref().and_then(Branches::invariants) {
        return trace * trace - 2.0 * det;
    }
    let a = rho.action();
    (&a * &a).trace().re
}

/// `1 - Tr rho^2`.
pub fn idempotency_defect(rho: &ReducedDensity) -> f64 {
    1.0 - purity(rho)
}

/// `<a^dag a> = sum_ij M[i][j] conj(l_j) l_i <l_j|l_i>`.
pub fn mean_photon_number(rho: &ReducedDensity) -> f64 {
    if let Some(b) = &rho.branches {
        let a: Vec<C64> = b.weights.iter().zip(&b.labels).map(|(w, l)| w * l.amplitude()).collect();
        return b.sum(&a, &a, 0.0).re;
    }
    let n = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let li = rho.labels[i].amplitude();
        for j in 0..n {
            let lj = rho.labels[j].amplitude();
            acc += rho.coeff[(i, j)] * lj.conj() * li * overlap(rho.labels[j], rho.labels[i]);
        }
    }
    acc.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::Branch;
    use proptest::prelude::*;

    fn lbl(re: f64, im: f64) -> CoherentLabel {
        CoherentLabel::from_re_im(re, im).unwrap()
    }

    fn cat(alpha: f64, sign: f64, gamma_b: f64) -> ReducedDensity {
        // N^2 [|a><a| + |-a><-a| + sign*Gb (|a><-a| + |-a><a|)]
        let ga0 = (-2.0 * alpha * alpha).exp();
        let n2 = 1.0 / (2.0 * (1.0 + sign * ga0));
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(n2, 0.0),
                C64::new(sign * gamma_b * n2, 0.0),
                C64::new(sign * gamma_b * n2, 0.0),
                C64::new(n2, 0.0),
            ],
        );
        ReducedDensity::new(vec![lbl(alpha, 0.0), lbl(-alpha, 0.0)], m).unwrap()
    }

    #[test]
    fn pure_single_label() {
        let s = FieldBathSuperposition::new(vec![Branch::field_only(C64::new(1.0, 0.0), lbl(1.3, -0.2))])
            .unwrap()
            .normalize()
            .unwrap();
        let rho = reduce(&s).unwrap();
        assert_eq!(rho.dim(), 1);
        assert!((rho.coeff()[(0, 0)].re - 1.0).abs() < 1e-15);
        let spec = eigenvalues(&rho).unwrap();
        assert_eq!(spec.eigenvalues, vec![1.0]);
        assert!(idempotency_defect(&rho).abs() < 1e-15);
    }

    #[test]
    fn pure_cat_has_spectrum_one_zero() {
        let rho = cat(1.2, -1.0, 1.0);
        let spec = eigenvalues(&rho).unwrap();
        assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(spec.eigenvalues[1].abs() < 1e-12);
        assert!((purity(&rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_state_is_refused() {
        let s = FieldBathSuperposition::new(vec![Branch::field_only(C64::new(2.0, 0.0), lbl(0.0, 0.0))]).unwrap();
        assert!(matches!(reduce(&s), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn bath_overlap_damps_coherences() {
        let beta = lbl(0.5f64.sqrt(), 0.0);
        let minus_beta = lbl(-(0.5f64.sqrt()), 0.0);
        let w = C64::new(1.0, 0.0);
        let s = FieldBathSuperposition::new(vec![
            Branch::new(w, lbl(3.0, 0.0), vec![beta]),
            Branch::new(w, lbl(-3.0, 0.0), vec![minus_beta]),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        let rho = reduce(&s).unwrap();
        let ratio = rho.coeff()[(0, 1)] / rho.coeff()[(0, 0)];
        assert!((ratio.re - (-1.0f64).exp()).abs() < 1e-14);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_decohered_orthogonal_mixture() {
        let rho = cat(6.0, 1.0, 0.0);
        let spec = eigenvalues(&rho).unwrap();
        assert!((spec.eigenvalues[0] - 0.5).abs() < 1e-12);
        assert!((spec.eigenvalues[1] - 0.5).abs() < 1e-12);
        assert!((idempotency_defect(&rho) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_half_spectrum_of_damped_cat() {
        // labels +-1 give Gamma_a(t) = e^-2; Gamma_b = e^-2 while Gamma_a(0) = e^-4
        let ga0 = (-4.0f64).exp();
        let gb = (-2.0f64).exp();
        let n2 = 1.0 / (2.0 * (1.0 - ga0));
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(n2, 0.0), C64::new(-gb * n2, 0.0), C64::new(-gb * n2, 0.0), C64::new(n2, 0.0)],
        );
        let rho = ReducedDensity::new(vec![lbl(1.0, 0.0), lbl(-1.0, 0.0)], m).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        let spec = eigenvalues(&rho).unwrap();
        assert!((spec.eigenvalues[0] - 0.5).abs() < 1e-12);
        assert!((spec.eigenvalues[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parity_expectations() {
        let odd = cat(1.5, -1.0, 1.0);
        let p = PhaseOpSum::odd_parity();
        assert!((expectation(&p, &odd) - 1.0).norm() < 1e-12);
        assert!((expectation(&PhaseOpSum::identity(), &odd) - 1.0).norm() < 1e-12);
        let vac = ReducedDensity::new(vec![lbl(0.0, 0.0)], DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        assert!(expectation(&p, &vac).norm() < 1e-15);
    }

    #[test]
    fn photon_number_of_coherent_state() {
        let rho = ReducedDensity::new(vec![lbl(1.5, 0.5)], DMatrix::from_element(1, 1, C64::new(1.0, 0.0))).unwrap();
        assert!((mean_photon_number(&rho) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn negative_spectrum_is_reported() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.2, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.2, 0.0)],
        );
        let rho = ReducedDensity::new(vec![lbl(5.0, 0.0), lbl(-5.0, 0.0)], m).unwrap();
        assert!(matches!(eigenvalues(&rho), Err(Error::PositivityViolation { .. })));
    }

    #[test]
    fn non_hermitian_coefficients_rejected() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.5, 0.0), C64::new(0.1, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)],
        );
        assert!(ReducedDensity::new(vec![lbl(5.0, 0.0), lbl(-5.0, 0.0)], m).is_err());
    }

    #[test]
    fn coalescing_labels_are_merged() {
        let m = DMatrix::from_element(2, 2, C64::new(0.25, 0.0));
        let rho = ReducedDensity::new(vec![lbl(0.3, 0.0), lbl(0.3 + 1e-9, 0.0)], m).unwrap();
        assert_eq!(rho.dim(), 1);
        assert!((rho.coeff()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nearly_singular_span_is_merged_not_garbage() {
        // labels 3e-7 apart: Gram smallest eigenvalue ~ 4.5e-14 < floor
        let a = lbl(0.8, 0.0);
        let b = lbl(0.8 + 3e-7, 0.0);
        let m = DMatrix::from_element(2, 2, C64::new(0.25, 0.0));
        let rho = ReducedDensity::new(vec![a, b], m).unwrap();
        assert_eq!(rho.dim(), 2);
        let spec = eigenvalues(&rho).unwrap();
        assert_eq!(spec.labels.len(), 1);
        assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nearly_coincident_branches_keep_precision() {
        // |a> - |a + d> tends to a displaced one-photon state: <n> = 1 + (a + d/2)^2.
        let (a, d) = (1.0, 1e-4);
        let s = FieldBathSuperposition::new(vec![
            Branch::field_only(C64::new(1.0, 0.0), lbl(a, 0.0)),
            Branch::field_only(C64::new(-1.0, 0.0), lbl(a + d, 0.0)),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        let rho = reduce(&s).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-13);
        let spec = eigenvalues(&rho).unwrap();
        assert!((spec.value(0) - 1.0).abs() < 1e-12 && spec.value(1) < 1e-12);
        assert!(idempotency_defect(&rho).abs() < 1e-12);
        let n = mean_photon_number(&rho);
        assert!((n - (1.0 + (a + 0.5 * d).powi(2))).abs() < 1e-7);

        // Same pair dressed with slightly different bath labels: a mixed state.
        let s = FieldBathSuperposition::new(vec![
            Branch::new(C64::new(1.0, 0.0), lbl(a, 0.0), vec![lbl(0.5 * a, 0.0)]),
            Branch::new(C64::new(-1.0, 0.0), lbl(a + d, 0.0), vec![lbl(0.5 * (a + d), 0.0)]),
        ])
        .unwrap()
        .normalize()
        .unwrap();
        let rho = reduce(&s).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-13);
        let spec = eigenvalues(&rho).unwrap();
        assert!((spec.value(0) + spec.value(1) - 1.0).abs() < 1e-12);
        assert!(spec.value(1) > 1e-3);
        assert!((spec.purity() - purity(&rho)).abs() < 1e-12);
        let id = PhaseOpSum::term(C64::new(1.0, 0.0), 0.0);
        assert!((spec.spectral_expectation(&id).re - 1.0).abs() < 1e-10);
    }

    fn arb_labels() -> impl Strategy<Value = Vec<CoherentLabel>> {
        prop::collection::vec((-2.5..2.5f64, -2.5..2.5f64), 1..=6)
            .prop_map(|v| v.into_iter().map(|(re, im)| lbl(re, im)).collect())
    }

    fn arb_state() -> impl Strategy<Value = FieldBathSuperposition> {
        prop::collection::vec(
            (
                (-1.0..1.0f64, -1.0..1.0f64),
                (-2.0..2.0f64, -2.0..2.0f64),
                prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2),
            ),
            1..=4,
        )
        .prop_map(|v| {
            let branches = v
                .into_iter()
                .map(|(w, f, bath)| {
                    Branch::new(
                        C64::new(w.0, w.1),
                        lbl(f.0, f.1),
                        bath.into_iter().map(|(re, im)| lbl(re, im)).collect(),
                    )
                })
                .collect();
            FieldBathSuperposition::new(branches).unwrap()
        })
    }

    proptest! {
        #[test]
        fn overlap_symmetry_and_bound(a in (-3.0..3.0f64, -3.0..3.0f64), b in (-3.0..3.0f64, -3.0..3.0f64)) {
            let (a, b) = (lbl(a.0, a.1), lbl(b.0, b.1));
            let ab = overlap(a, b);
            prop_assert!((ab - overlap(b, a).conj()).norm() < 1e-15);
            prop_assert!(ab.norm() <= 1.0 + 1e-15);
            if a.distance(&b) > 1e-3 {
                prop_assert!(ab.norm() < 1.0);
            }
        }

        #[test]
        fn gram_is_hermitian_psd(labels in arb_labels()) {
            let g = gram(&labels).unwrap();
            let skew = (&g.entries - g.entries.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(skew < 1e-14);
            for i in 0..g.dim() {
                prop_assert_eq!(g.entries[(i, i)], C64::new(1.0, 0.0));
            }
            prop_assert!(g.min_eigenvalue() >= -1e-12);
        }

        #[test]
        fn reduced_densities_are_valid(state in arb_state()) {
            let Ok(state) = state.normalize() else { return Ok(()); };
            let rho = reduce(&state).unwrap();
            prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
            let spec = eigenvalues(&rho).unwrap();
            let sum: f64 = spec.eigenvalues.iter().sum();
            prop_assert!((sum - rho.trace()).abs() < 1e-10);
            prop_assert!(spec.rank(1e-8) <= rho.dim());
            prop_assert!(spec.eigenvalues.iter().all(|&l| (0.0..=1.0).contains(&l)));
            // spectral route == trace route, purity both ways
            let ops = [PhaseOpSum::odd_parity(), PhaseOpSum::term(C64::new(0.3, 0.2), 0.7)];
            for op in &ops {
                let direct = expectation(op, &rho);
                let spectral = spec.spectral_expectation(op);
                prop_assert!((direct - spectral).norm() < 1e-9);
            }
            prop_assert!((purity(&rho) - spec.purity()).abs() < 1e-9);
            prop_assert_eq!(idempotency_defect(&rho), 1.0 - purity(&rho));
        }
    }
}
