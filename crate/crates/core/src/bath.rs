//! Exact zero-temperature dynamics of the cavity mode coupled to a discrete
//! bath of oscillators through `sum_k g_k (a^dag b_k + b_k^dag a)`.
//!
//! In the frame rotating at the cavity frequency, product coherent states stay
//! product coherent states and their amplitudes obey the linear system
//! ```text
//! i d(alpha)/dt  = sum_k g_k beta_k
//! i d(beta_k)/dt = delta_k beta_k + g_k alpha
//! ```
//! i.e. `i dy/dt = H y` with a real symmetric `(K+1)x(K+1)` matrix `H`. With
//! the bath initially in its vacuum, `alpha(t) = alpha(0) g(t)` and
//! `beta_k(t) = alpha(0) f_k(t)`, where `(g, f)` is column 0 of `exp(-iHt)`.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::coherent::{branch_log_overlap, overlap, pair_sum, product_overlap, Branch, FieldBathSuperposition};
use crate::error::{Error, Result};

/// Discretized bath: detunings `delta_k = omega_k - omega` and couplings `g_k`,
/// together with the cached eigen-decomposition of the one-excitation matrix.
#[derive(Clone, Debug)]
pub struct BathSpec {
    detunings: Vec<f64>,
    couplings: Vec<f64>,
    target_gamma: f64,
    recurrence_time: f64,
    /// Eigenvalues of `H`.
    frequencies: Vec<f64>,
    /// `V[0][n]^2`.
    field_weights: Vec<f64>,
    /// `V[k+1][n] V[0][n]`, one row per bath mode.
    mode_weights: DMatrix<f64>,
}

impl BathSpec {
    pub fn new(detunings: Vec<f64>, couplings: Vec<f64>, target_gamma: f64) -> Result<Self> {
        if detunings.is_empty() {
            return Err(Error::invalid("bath needs at least one mode"));
        }
        if detunings.len() != couplings.len() {
            return Err(Error::invalid(format!("{} detunings but {} couplings", detunings.len(), couplings.len())));
        }
        if detunings.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("non-finite detuning"));
        }
        if couplings.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("couplings must be finite and positive"));
        }
        if !(target_gamma > 0.0 && target_gamma.is_finite()) {
            return Err(Error::invalid("target decay rate must be positive"));
        }

        let mut sorted = detunings.clone();
        sorted.sort_by(f64::total_cmp);
        let min_spacing = sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let recurrence_time = if min_spacing.is_finite() { TAU / min_spacing } else { f64::INFINITY };

        let k = detunings.len();
        let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
        for (i, (&d, &c)) in detunings.iter().zip(&couplings).enumerate() {
            h[(0, i + 1)] = c;
            h[(i + 1, 0)] = c;
            h[(i + 1, i + 1)] = d;
        }
        let eig = SymmetricEigen::new(h);
        let v = &eig.eigenvectors;
        let field_weights = (0..=k).map(|n| v[(0, n)] * v[(0, n)]).collect();
        let mode_weights = DMatrix::from_fn(k, k + 1, |m, n| v[(m + 1, n)] * v[(0, n)]);

        Ok(Self {
            detunings,
            couplings,
            target_gamma,
            recurrence_time,
            frequencies: eig.eigenvalues.iter().copied().collect(),
            field_weights,
            mode_weights,
        })
    }

    pub fn modes(&self) -> usize {
        self.detunings.len()
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn target_gamma(&self) -> f64 {
        self.target_gamma
    }

    /// `2 pi / (smallest detuning spacing)`; infinite for a single mode.
    pub fn recurrence_time(&self) -> f64 {
        self.recurrence_time
    }

    /// Fastest rate in the one-excitation matrix, used to bound step sizes.
    pub fn max_rate(&self) -> f64 {
        let coupling_norm = self.couplings.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.detunings.iter().map(|d| d.abs()).fold(coupling_norm, f64::max)
    }
}

/// Flat band of `modes` equally spaced detunings on `[-half_bandwidth, half_bandwidth]`
/// with uniform couplings `sqrt(gamma d / 2 pi)` (mode spacing `d`), so that
/// the golden-rule decay rate of the field intensity equals `target_gamma`.
///
/// The decay is only exponential when the band is wide (`half_bandwidth` of at
/// least `10 gamma`) and the times stay below half the recurrence time.
pub fn discretize_flat_band(target_gamma: f64, modes: usize, half_bandwidth: f64) -> Result<BathSpec> {
    if modes < 2 || modes.is_multiple_of(2) {
        return Err(Error::invalid(format!("mode count must be odd and >= 3, got {modes}")));
    }
    if !(target_gamma > 0.0 && target_gamma.is_finite()) {
        return Err(Error::invalid("target decay rate must be positive"));
    }
    if !(half_bandwidth > 0.0) || !half_bandwidth.is_finite() {
        return Err(Error::invalid(format!("half bandwidth must be positive, got {half_bandwidth}")));
    }
    let spacing = 2.0 * half_bandwidth / (modes - 1) as f64;
    let center = (modes / 2) as isize;
    let detunings = (0..modes as isize).map(|i| (i - center) as f64 * spacing).collect();
    let coupling = (target_gamma * spacing / TAU).sqrt();
    BathSpec::new(detunings, vec![coupling; modes], target_gamma)
}

/// Field and bath responses at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseFunctions {
    pub time: f64,
    pub g: C64,
    pub f: Vec<C64>,
    /// Set beyond half the recurrence time, where the discrete bath no longer
    /// mimics a continuum.
    pub recurrence_warning: bool,
}

impl ResponseFunctions {
    /// `|g|^2 + sum_k |f_k|^2 - 1`.
    pub fn unitarity_defect(&self) -> f64 {
        self.g.norm_sqr() + self.f.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0
    }

    fn identity(modes: usize) -> Self {
        Self { time: 0.0, g: C64::new(1.0, 0.0), f: vec![C64::new(0.0, 0.0); modes], recurrence_warning: false }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Column 0 of `exp(-iHt)` from the cached eigen-decomposition.
pub fn propagate(spec: &BathSpec, t: f64) -> Result<ResponseFunctions> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(ResponseFunctions::identity(spec.modes()));
    }
    let phases: Vec<C64> = spec.frequencies.iter().map(|&w| C64::from_polar(1.0, -w * t)).collect();
    let g = spec.field_weights.iter().zip(&phases).map(|(&w, &p)| p * w).sum();
    let f =
        (0..spec.modes()).map(|k| spec.mode_weights.row(k).iter().zip(&phases).map(|(&w, &p)| p * w).sum()).collect();
    Ok(ResponseFunctions { time: t, g, f, recurrence_warning: t > 0.5 * spec.recurrence_time })
}

/// Classical fourth-order Runge-Kutta integration of the amplitude equations;
/// an independent check of [`propagate`]. The step is shrunk so that an
/// integer number of steps lands exactly on `t`.
pub fn propagate_integrator(spec: &BathSpec, t: f64, dt: f64) -> Result<ResponseFunctions> {
    check_time(t)?;
    let max_dt = 0.01 / spec.max_rate();
    if !(dt > 0.0) || dt > max_dt {
        return Err(Error::invalid(format!("step {dt} outside (0, {max_dt}]")));
    }
    let k = spec.modes();
    let mut y = vec![C64::new(0.0, 0.0); k + 1];
    y[0] = C64::new(1.0, 0.0);
    let steps = (t / dt).ceil() as usize;
    if steps > 0 {
        let h = t / steps as f64;
        let rhs = |y: &[C64], out: &mut [C64]| {
            let minus_i = C64::new(0.0, -1.0);
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..k {
                acc += spec.couplings[m] * y[m + 1];
                out[m + 1] = minus_i * (spec.detunings[m] * y[m + 1] + spec.couplings[m] * y[0]);
            }
            out[0] = minus_i * acc;
        };
        let mut k1 = vec![C64::new(0.0, 0.0); k + 1];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for _ in 0..steps {
            rhs(&y, &mut k1);
            for i in 0..=k {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..=k {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..=k {
                tmp[i] = y[i] + h * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..=k {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    Ok(ResponseFunctions { time: t, g: y[0], f: y[1..].to_vec(), recurrence_warning: t > 0.5 * spec.recurrence_time })
}

fn check_initial(state: &FieldBathSuperposition, modes: usize) -> Result<()> {
    if !state.is_normalized() {
        return Err(Error::ContractViolation("evolve() needs a normalized state".into()));
    }
    let n = state.bath_modes();
    if n != 0 && n != modes {
        return Err(Error::invalid(format!("state has {n} bath modes, bath has {modes}")));
    }
    let excited = state.branches().iter().flat_map(|b| &b.bath).any(|l| l.intensity() > 0.0);
    if excited {
        return Err(Error::UnsupportedInput("initial bath labels must all be zero (zero-temperature start)".into()));
    }
    Ok(())
}

/// Applies precomputed responses to a state whose bath is in the vacuum:
/// `alpha_i -> alpha_i g`, `bath_ik -> alpha_i f_k`, weights unchanged.
pub fn evolve_with(state: &FieldBathSuperposition, response: &ResponseFunctions) -> Result<FieldBathSuperposition> {
    check_initial(state, response.f.len())?;
    let branches = state
        .branches()
        .iter()
        .map(|b| {
            Branch::new(b.weight, b.field.scaled(response.g), response.f.iter().map(|&fk| b.field.scaled(fk)).collect())
        })
        .collect();
    Ok(FieldBathSuperposition::from_parts_unchecked(branches, true))
}

/// Evolves a prepared (bath-vacuum) state to time `t`.
pub fn evolve(state: &FieldBathSuperposition, spec: &BathSpec, t: f64) -> Result<FieldBathSuperposition> {
    let response = propagate(spec, t)?;
    evolve_with(state, &response)
}

fn two_branches(state: &FieldBathSuperposition) -> Result<(&Branch, &Branch)> {
    match state.branches() {
        [a, b] => Ok((a, b)),
        other => Err(Error::invalid(format!("expected two branches, found {}", other.len()))),
    }
}

/// `|<field_2|field_1>|`, e.g. `<-alpha(t)|alpha(t)> = exp(-2|alpha(t)|^2)` in case a.
pub fn gamma_a(state: &FieldBathSuperposition) -> Result<f64> {
    let (b1, b2) = two_branches(state)?;
    Ok(overlap(b2.field, b1.field).norm())
}

/// `prod_k <bath_2k|bath_1k>`; real in case a, complex in case b.
pub fn gamma_b(state: &FieldBathSuperposition) -> Result<C64> {
    let (b1, b2) = two_branches(state)?;
    if b1.bath.is_empty() {
        return Ok(C64::new(1.0, 0.0));
    }
    Ok(product_overlap(&b2.bath, &b1.bath))
}

/// `sum_k |beta_k(t)|^2` of the first branch (both branches carry the same).
pub fn excitation_sum(state: &FieldBathSuperposition) -> Result<f64> {
    let (b1, _) = two_branches(state)?;
    Ok(b1.bath.iter().map(|l| l.intensity()).sum())
}

/// `<sum_k b_k^dag b_k>` in the full field+bath state.
pub fn bath_photon_number(state: &FieldBathSuperposition) -> f64 {
    let br = state.branches();
    let n = br.len();
    let logs = DMatrix::from_fn(n, n, |i, j| branch_log_overlap(&br[i], &br[j]));
    (0..state.bath_modes())
        .map(|k| {
            let a: Vec<C64> = br.iter().map(|b| b.weight * b.bath[k].amplitude()).collect();
            pair_sum(&a, &a, |j, i| logs[(i, j)]).re
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::{reduce, CoherentLabel};
    use crate::fit::{loglog_slope, logspace};
    use crate::protocol::{prepare, DetectionOutcome, ProtocolCase, ProtocolParams};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn flat() -> BathSpec {
        discretize_flat_band(1.0, 201, 50.0).unwrap()
    }

    fn single_mode(coupling: f64) -> BathSpec {
        BathSpec::new(vec![0.0], vec![coupling], 1.0).unwrap()
    }

    fn odd_cat(alpha: f64) -> FieldBathSuperposition {
        let p = ProtocolParams::new(ProtocolCase::CaseA, CoherentLabel::from_re_im(alpha, 0.0).unwrap(), PI).unwrap();
        prepare(&p, DetectionOutcome::E).unwrap()
    }

    #[test]
    fn flat_band_examples() {
        let spec = flat();
        assert_eq!(spec.modes(), 201);
        assert!((spec.detunings()[1] - spec.detunings()[0] - 0.5).abs() < 1e-14);
        assert_eq!(spec.detunings()[100], 0.0);
        assert!((spec.couplings()[0] - 0.282095).abs() < 1e-6);
        assert!((spec.recurrence_time() - 12.566).abs() < 1e-3);

        let small = discretize_flat_band(1.0, 3, 5.0).unwrap();
        assert!((small.recurrence_time() - 1.2566).abs() < 1e-4);

        assert!(discretize_flat_band(1.0, 2, 1.0).is_err());
        assert!(discretize_flat_band(1.0, 201, 0.0).is_err());
        assert!(discretize_flat_band(-1.0, 201, 50.0).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(BathSpec::new(vec![0.0, 1.0], vec![0.1], 1.0).is_err());
        assert!(BathSpec::new(vec![0.0], vec![0.0], 1.0).is_err());
        assert!(BathSpec::new(vec![], vec![], 1.0).is_err());
        assert!(single_mode(1.0).recurrence_time().is_infinite());
    }

    #[test]
    fn single_resonant_mode_is_analytic() {
        let c = 0.8;
        let spec = single_mode(c);
        let r0 = propagate(&spec, 0.0).unwrap();
        assert_eq!(r0.g, C64::new(1.0, 0.0));
        assert_eq!(r0.f, vec![C64::new(0.0, 0.0)]);
        for t in [0.1, 0.7, 1.9, 5.0] {
            let r = propagate(&spec, t).unwrap();
            assert!((r.g - C64::new((c * t).cos(), 0.0)).norm() < 1e-14);
            assert!((r.f[0] - C64::new(0.0, -(c * t).sin())).norm() < 1e-14);
        }
        assert!(propagate(&spec, -1.0).is_err());
    }

    #[test]
    fn flat_band_reproduces_exponential_decay() {
        let spec = flat();
        let r = propagate(&spec, 1.0).unwrap();
        let e1 = (-1.0f64).exp();
        assert!((r.g.norm_sqr() - e1).abs() / e1 < 0.02);
        for i in 0..=58 {
            let t = 0.1 + 0.05 * i as f64;
            let r = propagate(&spec, t).unwrap();
            let target = (-t / 2.0).exp();
            assert!((r.g.norm() - target).abs() / target < 0.02, "t = {t}");
            assert!(r.unitarity_defect().abs() < 1e-9);
        }
    }

    #[test]
    fn recurrence_warning_flag() {
        let spec = flat();
        assert!(!propagate(&spec, 6.0).unwrap().recurrence_warning);
        assert!(propagate(&spec, 6.5).unwrap().recurrence_warning);
    }

    #[test]
    fn integrator_matches_spectral_route() {
        let spec = flat();
        let dt = 0.01 / spec.max_rate();
        assert!(propagate_integrator(&spec, 1.0, 2.0 * dt).is_err());
        let zero = propagate_integrator(&spec, 0.0, dt).unwrap();
        assert_eq!(zero, propagate(&spec, 0.0).unwrap());
        for t in [0.3, 1.0, 2.5] {
            let coarse = propagate_integrator(&spec, t, dt).unwrap();
            let fine = propagate_integrator(&spec, t, dt / 2.0).unwrap();
            let exact = propagate(&spec, t).unwrap();
            let richardson = |a: C64, b: C64| (16.0 * b - a) / 15.0;
            assert!((richardson(coarse.g, fine.g) - exact.g).norm() < 1e-7);
            for k in 0..spec.modes() {
                assert!((richardson(coarse.f[k], fine.f[k]) - exact.f[k]).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn integrator_single_mode_quarter_period() {
        let spec = single_mode(1.0);
        let r = propagate_integrator(&spec, FRAC_PI_2, 1e-3).unwrap();
        assert!(r.g.norm() < 1e-7);
    }

    #[test]
    fn integrator_is_fourth_order() {
        let spec = BathSpec::new(vec![-0.7, 0.0, 1.1], vec![0.5, 0.9, 0.3], 1.0).unwrap();
        let t = 2.0;
        let exact = propagate(&spec, t).unwrap();
        let base = 0.01 / spec.max_rate();
        let steps = [base, base / 2.0, base / 4.0];
        let errors: Vec<f64> =
            steps.iter().map(|&dt| (propagate_integrator(&spec, t, dt).unwrap().g - exact.g).norm()).collect();
        let order = loglog_slope(&steps, &errors);
        assert!((order - 4.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn evolve_identity_at_zero() {
        let spec = flat();
        let cat = odd_cat(1.2);
        let s0 = evolve(&cat, &spec, 0.0).unwrap();
        for (a, b) in s0.branches().iter().zip(cat.branches()) {
            assert_eq!(a.field, b.field);
            assert_eq!(a.weight, b.weight);
            assert!(a.bath.iter().all(|l| l.intensity() == 0.0));
        }
        assert!((gamma_b(&s0).unwrap() - 1.0).norm() < 1e-15);
        assert_eq!(excitation_sum(&s0).unwrap(), 0.0);
        assert!((gamma_b(&cat).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn single_coherent_state_stays_pure() {
        let spec = flat();
        let state = FieldBathSuperposition::new(vec![Branch::field_only(
            C64::new(1.0, 0.0),
            CoherentLabel::from_re_im(1.5, -0.4).unwrap(),
        )])
        .unwrap()
        .normalize()
        .unwrap();
        for t in [0.2, 1.0, 3.0] {
            let rho = reduce(&evolve(&state, &spec, t).unwrap()).unwrap();
            assert_eq!(rho.dim(), 1);
            assert!((crate::coherent::purity(&rho) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_cat_single_mode_quarter_period() {
        let alpha = 1.0;
        let spec = single_mode(1.0);
        let cat = odd_cat(alpha);
        let s = evolve(&cat, &spec, FRAC_PI_2).unwrap();
        for (now, before) in s.branches().iter().zip(cat.branches()) {
            assert!(now.field.amplitude().norm() < 1e-15);
            let expected = C64::new(0.0, -1.0) * before.field.amplitude();
            assert!((now.bath[0].amplitude() - expected).norm() < 1e-14);
        }
        assert!((gamma_b(&s).unwrap() - (-2.0 * alpha * alpha).exp()).norm() < 1e-14);
    }

    #[test]
    fn conservation_identity() {
        let spec = flat();
        let alpha = 1.7;
        let cat = odd_cat(alpha);
        let ga0 = gamma_a(&cat).unwrap();
        assert!((ga0 - (-2.0 * alpha * alpha).exp()).abs() < 1e-15);
        for i in 0..=30 {
            let t = 0.1 * i as f64;
            let s = evolve(&cat, &spec, t).unwrap();
            let prod = gamma_a(&s).unwrap() * gamma_b(&s).unwrap().norm();
            assert!((prod - ga0).abs() < 1e-10);
        }
    }

    #[test]
    fn number_is_conserved() {
        let spec = flat();
        let cat = odd_cat(1.3);
        let n0 = crate::coherent::mean_photon_number(&reduce(&cat).unwrap());
        for t in [0.05, 0.5, 2.0] {
            let s = evolve(&cat, &spec, t).unwrap();
            let nf = crate::coherent::mean_photon_number(&reduce(&s).unwrap());
            assert!((nf + bath_photon_number(&s) - n0).abs() < 1e-8);
        }
    }

    #[test]
    fn evolve_input_contracts() {
        let spec = single_mode(1.0);
        let excited = FieldBathSuperposition::new(vec![Branch::new(
            C64::new(1.0, 0.0),
            CoherentLabel::vacuum(),
            vec![CoherentLabel::from_re_im(0.1, 0.0).unwrap()],
        )])
        .unwrap()
        .normalize()
        .unwrap();
        assert!(matches!(evolve(&excited, &spec, 1.0), Err(Error::UnsupportedInput(_))));
        let unnormalized =
            FieldBathSuperposition::new(vec![Branch::field_only(C64::new(3.0, 0.0), CoherentLabel::vacuum())]).unwrap();
        assert!(evolve(&unnormalized, &spec, 1.0).is_err());
        let one =
            FieldBathSuperposition::new(vec![Branch::field_only(C64::new(1.0, 0.0), CoherentLabel::vacuum())]).unwrap();
        assert!(gamma_a(&one).is_err());
    }

    #[test]
    fn microscopic_decoherence_is_quadratic_at_short_times() {
        let spec = flat();
        let cat = odd_cat(3.3f64.sqrt());
        let times = logspace(1e-3, 1e-2, 10);
        let loss: Vec<f64> =
            times.iter().map(|&t| 1.0 - gamma_b(&evolve(&cat, &spec, t).unwrap()).unwrap().norm()).collect();
        let slope = loglog_slope(&times, &loss);
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    proptest! {
        #[test]
        fn unitarity_holds(t in 0.0..20.0f64) {
            let spec = BathSpec::new(vec![-1.0, -0.2, 0.4, 1.5], vec![0.3, 0.5, 0.2, 0.6], 1.0).unwrap();
            let r = propagate(&spec, t).unwrap();
            prop_assert!(r.unitarity_defect().abs() < 1e-9);
        }
    }
}
