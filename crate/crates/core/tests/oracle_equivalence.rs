//! Coherent-label engines against the truncated-Fock oracle on instances
//! small enough for brute force.

use std::f64::consts::{FRAC_PI_2, PI};

use catfield::bath::{evolve, gamma_a, gamma_b, BathSpec};
use catfield::coherent::{eigenvalues, expectation, mean_photon_number, purity, reduce, CoherentLabel};
use catfield::fock::{
    coherent_to_fock, fock_eigenvalues, fock_measure, fock_prepare, hamiltonian_evolve, lindblad_evolve,
    lindblad_evolve_matrix, required_n_max, FockDensity, MultiModeState,
};
use catfield::master::{me_amplitude, me_dyad_factor, me_reduce, MasterParams};
use catfield::protocol::{
    conditional_probabilities, eigenvalues_case_a, measurement_product, prepare, signed_eigenvalues, DetectionOutcome,
    ProtocolCase, ProtocolParams,
};
use catfield::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-6;

fn lbl(re: f64, im: f64) -> CoherentLabel {
    CoherentLabel::from_re_im(re, im).unwrap()
}

fn scenarios() -> Vec<ProtocolParams> {
    let mut out = Vec::new();
    for case in [ProtocolCase::CaseA, ProtocolCase::CaseB] {
        // case b at phi = pi annihilates the g branch, so 0.4 replaces it there
        let first = if case == ProtocolCase::CaseA { PI } else { 0.4 };
        for (a, phi) in [((1.0, 0.0), first), ((0.8, 0.9), 0.7), ((1.3, -0.2), 2.2), ((0.5, 0.0), FRAC_PI_2)] {
            out.push(ProtocolParams::new(case, lbl(a.0, a.1), phi).unwrap());
        }
    }
    out
}

fn assert_close(what: &str, a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol:e})");
}

fn compare_densities(
    what: &str,
    rho: &catfield::coherent::ReducedDensity,
    oracle: &FockDensity,
    params: &ProtocolParams,
) {
    assert_close(&format!("{what} trace"), rho.trace(), oracle.trace(), ORACLE_TOL);
    assert_close(&format!("{what} purity"), purity(rho), oracle.purity(), ORACLE_TOL);
    assert_close(&format!("{what} <n>"), mean_photon_number(rho), oracle.mean_photon_number(), ORACLE_TOL);
    for outcome in DetectionOutcome::BOTH {
        let op = measurement_product(params, outcome);
        let a = expectation(&op, rho);
        let b = fock_measure(&op, oracle);
        assert!((a - b).norm() <= ORACLE_TOL, "{what} P({outcome:?}): {a} vs {b}");
    }
    let spec = eigenvalues(rho).unwrap();
    let fock = fock_eigenvalues(oracle);
    for (k, f) in fock.iter().enumerate() {
        assert_close(&format!("{what} eigenvalue {k}"), spec.value(k), *f, ORACLE_TOL);
    }
}

#[test]
fn prepared_states_match_fock_construction() {
    for params in scenarios() {
        let n = required_n_max(params.alpha0.intensity());
        for outcome in DetectionOutcome::BOTH {
            let rho = reduce(&prepare(&params, outcome).unwrap()).unwrap();
            let oracle = FockDensity::from_pure(&fock_prepare(&params, outcome, n).unwrap()).unwrap();
            compare_densities(&format!("{params:?}/{outcome:?}"), &rho, &oracle, &params);
        }
    }
}

fn bath_specs() -> Vec<BathSpec> {
    vec![
        BathSpec::new(vec![0.0], vec![0.8], 1.0).unwrap(),
        BathSpec::new(vec![0.4], vec![0.6], 1.0).unwrap(),
        BathSpec::new(vec![-0.7, 0.5], vec![0.5, 0.9], 1.0).unwrap(),
    ]
}

#[test]
fn coherent_flow_matches_hamiltonian_simulation() {
    let params = [
        ProtocolParams::new(ProtocolCase::CaseA, lbl(1.2, 0.3), PI).unwrap(),
        ProtocolParams::new(ProtocolCase::CaseB, lbl(0.9, -0.6), 0.8).unwrap(),
    ];
    for spec in bath_specs() {
        for p in &params {
            let intensity = p.alpha0.intensity();
            assert!(intensity <= 2.0);
            let n = required_n_max(intensity);
            let cutoffs: Vec<usize> = vec![n; spec.modes() + 1];
            for outcome in DetectionOutcome::BOTH {
                let initial = prepare(p, outcome).unwrap();
                let field = fock_prepare(p, outcome, n).unwrap();
                for t in [0.4, 1.3, 2.5] {
                    let evolved = evolve(&initial, &spec, t).unwrap();
                    let expanded = MultiModeState::from_superposition(&evolved, &cutoffs).unwrap();
                    let brute = hamiltonian_evolve(&field, &spec, t, &cutoffs[1..]).unwrap();
                    assert_close("norm", brute.norm_sqr(), 1.0, 1e-9);
                    let fidelity = expanded.inner(&brute).unwrap().norm_sqr();
                    assert!(fidelity >= 1.0 - 1e-6, "K={} t={t}: fidelity {fidelity}", spec.modes());

                    let rho = reduce(&evolved).unwrap();
                    let oracle = brute.field_density().unwrap();
                    compare_densities(&format!("K={} t={t}", spec.modes()), &rho, &oracle, p);
                }
            }
        }
    }
}

#[test]
fn odd_cat_single_mode_eigenvalues_and_rank() {
    let spec = BathSpec::new(vec![0.0], vec![1.0], 1.0).unwrap();
    let p = ProtocolParams::new(ProtocolCase::CaseA, lbl(2f64.sqrt(), 0.0), PI).unwrap();
    let n = required_n_max(2.0);
    let initial = prepare(&p, DetectionOutcome::E).unwrap();
    let field = fock_prepare(&p, DetectionOutcome::E, n).unwrap();
    for t in [0.2, 0.7, 1.2] {
        let evolved = evolve(&initial, &spec, t).unwrap();
        let spectrum = eigenvalues(&reduce(&evolved).unwrap()).unwrap();
        let oracle = fock_eigenvalues(&hamiltonian_evolve(&field, &spec, t, &[n]).unwrap().field_density().unwrap());
        assert!(oracle[2] < 1e-8, "third eigenvalue {}", oracle[2]);
        for (k, o) in oracle.iter().take(2).enumerate() {
            assert_close("eigenvalue", spectrum.value(k), *o, 1e-6);
        }
        let (plus, minus) = signed_eigenvalues(ProtocolCase::CaseA, &spectrum);
        let ga0 = gamma_a(&initial).unwrap();
        let (cp, cm) =
            eigenvalues_case_a(gamma_a(&evolved).unwrap(), gamma_b(&evolved).unwrap().re, ga0, DetectionOutcome::E)
                .unwrap();
        assert_close("lambda_+", plus, cp, 1e-10);
        assert_close("lambda_-", minus, cm, 1e-10);
        assert_close("conservation", gamma_a(&evolved).unwrap() * gamma_b(&evolved).unwrap().norm(), ga0, 1e-10);
    }
}

fn lindblad_dt(n_max: usize, gamma: f64) -> f64 {
    1e-3 / gamma / (n_max + 1) as f64
}

#[test]
fn master_equation_matches_lindblad_integration() {
    let gamma = 1.0;
    let mp = MasterParams::new(gamma).unwrap();
    for params in scenarios().into_iter().filter(|p| p.alpha0.intensity() <= 2.0) {
        let n = required_n_max(params.alpha0.intensity());
        let mut densities = Vec::new();
        for outcome in DetectionOutcome::BOTH {
            let initial = prepare(&params, outcome).unwrap();
            let rho0 = FockDensity::from_pure(&fock_prepare(&params, outcome, n).unwrap()).unwrap();
            for t in [0.1, 0.6] {
                let rho = me_reduce(&initial, &mp, t).unwrap();
                let oracle = lindblad_evolve(&rho0, gamma, t, lindblad_dt(n, gamma)).unwrap();
                compare_densities(&format!("{params:?}/{outcome:?} t={t}"), &rho, &oracle, &params);
                if t == 0.6 {
                    densities.push((rho, oracle));
                }
            }
        }
        let exact = conditional_probabilities(&densities[0].0, &densities[1].0, &params).unwrap();
        let pe = measurement_product(&params, DetectionOutcome::E);
        let oracle_eta = fock_measure(&pe, &densities[0].1).re - fock_measure(&pe, &densities[1].1).re;
        assert_close("eta", exact.eta, oracle_eta, ORACLE_TOL);
    }
}

#[test]
fn dyad_factor_matches_lindblad_on_random_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let gamma = 1.0;
    let mp = MasterParams::new(gamma).unwrap();
    for _ in 0..8 {
        let mut draw = || {
            let r = 2.0 * rng.random::<f64>().sqrt();
            CoherentLabel::new(C64::from_polar(r, rng.random_range(-PI..PI))).unwrap()
        };
        let (a, b) = (draw(), draw());
        let t = rng.random_range(0.05..1.5);
        let n = required_n_max(a.intensity().max(b.intensity()));
        let dyad = coherent_to_fock(a, n).unwrap().dyad(&coherent_to_fock(b, n).unwrap()).unwrap();
        let evolved = lindblad_evolve_matrix(&dyad, gamma, t, lindblad_dt(n, gamma)).unwrap();
        let factor = me_dyad_factor(a, b, &mp, t).unwrap();
        let at = coherent_to_fock(me_amplitude(a, &mp, t).unwrap(), n).unwrap();
        let bt = coherent_to_fock(me_amplitude(b, &mp, t).unwrap(), n).unwrap();
        let closed = at.dyad(&bt).unwrap() * factor;
        let worst = (&evolved - &closed).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(worst <= ORACLE_TOL, "a={a:?} b={b:?} t={t}: max entry error {worst:e}");
    }
}

#[test]
fn dyad_long_time_limit_matches_lindblad() {
    let gamma = 1.0;
    let t = 25.0;
    let mp = MasterParams::new(gamma).unwrap();
    let base = lbl(1.0, 0.0);
    let (a, b) = (base.rotated(PI / 4.0), base.rotated(-PI / 4.0));
    let n = required_n_max(1.0);
    let dyad = coherent_to_fock(a, n).unwrap().dyad(&coherent_to_fock(b, n).unwrap()).unwrap();
    let evolved = lindblad_evolve_matrix(&dyad, gamma, t, lindblad_dt(n, gamma)).unwrap();
    let limit = C64::new(-1.0, 1.0).exp();
    assert!((evolved[(0, 0)] - limit).norm() <= 1e-6, "{}", evolved[(0, 0)]);
    assert!((me_dyad_factor(a, b, &mp, t).unwrap() - limit).norm() <= 1e-6);
}

#[test]
fn lindblad_converges_in_step_size() {
    let gamma = 1.0;
    let p = ProtocolParams::new(ProtocolCase::CaseB, lbl(1.1, 0.4), 0.9).unwrap();
    let n = required_n_max(p.alpha0.intensity());
    let rho0 = FockDensity::from_pure(&fock_prepare(&p, DetectionOutcome::G, n).unwrap()).unwrap();
    let dt = lindblad_dt(n, gamma);
    let coarse = lindblad_evolve(&rho0, gamma, 0.8, dt).unwrap();
    let fine = lindblad_evolve(&rho0, gamma, 0.8, dt / 2.0).unwrap();
    let diff = (coarse.matrix() - fine.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    assert!(diff < 1e-8, "{diff:e}");
}
