use mixed_rabi::diag::{build_from_spec, converged_levels_below, eigenvalues, oracle_levels_below};
use mixed_rabi::effective::{effective_spec, one_photon_spec};
use mixed_rabi::exceptional::{exc_matrix, ExceptionalProblem};
use mixed_rabi::gfunction::{find_roots, GOptions, Regime};
use mixed_rabi::model::poles_below;
use mixed_rabi::observables::{linspace, reduced_field_density, wigner, StateVector};
use mixed_rabi::{Family, ModelParams, RabiError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OFF_POLE: f64 = 1e-6;

/// Every root has a reference level within `tol`, and every reference level
/// off the pole lines has a root within `tol`.
fn two_sided(params: &ModelParams, roots: &[f64], reference: &[f64], lo: f64, hi: f64, tol: f64) {
    let near = |x: f64, set: &[f64]| set.iter().any(|y| (x - y).abs() < tol);
    let poles: Vec<f64> = poles_below(params, hi + 1.0).into_iter().map(|p| p.0).collect();
    for &r in roots {
        assert!(near(r, reference), "root {r} has no reference level");
    }
    for &e in reference.iter().filter(|&&e| e > lo && e < hi) {
        if poles.iter().all(|p| (p - e).abs() > OFF_POLE) {
            assert!(near(e, roots), "reference level {e} missed");
        }
    }
}

fn window(params: &ModelParams) -> (f64, f64) {
    let (levels, _) = oracle_levels_below(params, 0.0).unwrap();
    let e0 = levels.first().copied().unwrap_or(-1.0);
    (e0 - 0.2, e0 + 4.0)
}

#[test]
fn one_photon_limit_matches_one_photon_diagonalization() {
    let p = ModelParams::new(0.8, 0.6, 0.0).unwrap();
    let (lo, hi) = window(&p);
    let s = find_roots(&p, lo, hi, GOptions::default()).unwrap();
    assert_eq!(s.regime, Regime::OnePhoton);
    let (reference, _) = converged_levels_below(one_photon_spec(&p), hi + 0.5, 200).unwrap();
    two_sided(&p, &s.energies(), &reference, lo, hi, 1e-8);
}

#[test]
fn two_photon_limit_matches_diagonalization() {
    let p = ModelParams::new(0.6, 0.0, 0.3).unwrap();
    let (lo, hi) = window(&p);
    let s = find_roots(&p, lo, hi, GOptions::default()).unwrap();
    assert_eq!(s.regime, Regime::ParityBlocks);
    let (reference, _) = oracle_levels_below(&p, hi + 0.5).unwrap();
    two_sided(&p, &s.energies(), &reference, lo, hi, 1e-8);
}

#[test]
fn decoupled_spectrum_is_the_poles() {
    let p = ModelParams::new(0.0, 0.3, 0.2).unwrap();
    let s = find_roots(&p, -1.0, 3.0, GOptions::default()).unwrap();
    assert_eq!(s.regime, Regime::Decoupled);
    let poles: Vec<f64> = poles_below(&p, 3.0).into_iter().map(|p| p.0).filter(|&e| e > -1.0).collect();
    let roots = s.energies();
    assert_eq!(roots.len(), poles.len());
    for (r, e) in roots.iter().zip(&poles) {
        assert!((r - e).abs() < 1e-10);
    }
}

#[test]
fn random_triples_agree_with_diagonalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..4 {
        let p = ModelParams::new(rng.gen_range(0.2..2.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.4)).unwrap();
        let (lo, hi) = window(&p);
        let s = find_roots(&p, lo, hi, GOptions::default()).unwrap();
        let (reference, _) = oracle_levels_below(&p, hi + 0.5).unwrap();
        two_sided(&p, &s.energies(), &reference, lo, hi, 1e-6);
    }
}

#[test]
fn root_drift_under_longer_series_is_small() {
    let p = ModelParams::new(0.5, 0.1, 0.2).unwrap();
    let s = find_roots(&p, -0.5, 3.0, GOptions::default()).unwrap();
    assert!(!s.roots.is_empty());
    assert!(s.roots.iter().all(|r| r.drift < 1e-8));
}

#[test]
fn coinciding_families_are_reported() {
    let problem = ExceptionalProblem {
        family: Family::A,
        m: 1,
        delta: 0.5,
        g1: 0.0,
    };
    assert!(matches!(exc_matrix(&problem, 0.2), Err(RabiError::PoleCoincidence { .. })));
}

#[test]
fn effective_model_is_exact_without_two_photon_term() {
    let p = ModelParams::new(1.0, 0.7, 0.0).unwrap();
    let full = eigenvalues(&build_from_spec(mixed_rabi::diag::HamiltonianSpec::Full(p), 150).unwrap()).unwrap();
    let eff = eigenvalues(&build_from_spec(effective_spec(&p), 150).unwrap()).unwrap();
    for k in 0..40 {
        assert!((full[k] - eff[k]).abs() < 1e-12, "level {k}");
    }
}

#[test]
fn vacuum_wigner_is_the_gaussian() {
    let vacuum = StateVector::basis(30, 0, 0);
    let axis = linspace(-3.0, 3.0, 31);
    let w = wigner(&reduced_field_density(&vacuum), &axis, &axis);
    for (i, x) in axis.iter().enumerate() {
        for (j, y) in axis.iter().enumerate() {
            let exact = 2.0 / std::f64::consts::PI * (-2.0 * (x * x + y * y)).exp();
            assert!((w.get(i, j) - exact).abs() < 1e-8);
        }
    }
}
