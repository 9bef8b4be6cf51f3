//! Unitary evolution by full eigendecomposition, fidelity series, and the
//! order-parameter sweep.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{build_from_spec, default_truncation, full_eigen, ground_state, DenseHamiltonian, HamiltonianSpec};
use crate::effective::{effective_params, effective_spec, effective_truncation, one_photon_spec};
use crate::error::{RabiError, Result};
use crate::model::ModelParams;
use crate::observables::{magnetization, photon_number, StateVector};

/// Default time axis: 0 to 20 in steps of 0.02.
pub fn default_times() -> Vec<f64> {
    (0..=1000).map(|i| i as f64 * 0.02).collect()
}

/// Spectral propagator of one Hamiltonian.
pub struct Propagator {
    pub energies: Vec<f64>,
    vectors: Mat<f64>,
    pub m: usize,
}

impl Propagator {
    pub fn new(h: &DenseHamiltonian) -> Result<Self> {
        let sys = full_eigen(h)?;
        Ok(Propagator {
            energies: sys.energies,
            vectors: sys.states,
            m: h.m,
        })
    }

    /// |ψ(t)⟩ = Σ_k e^{−iE_k t} ⟨k|ψ₀⟩ |k⟩ for every t.
    pub fn evolve(&self, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
        if psi0.m != self.m {
            return Err(RabiError::InvalidInput(format!(
                "state truncation {} differs from Hamiltonian truncation {}",
                psi0.m, self.m
            )));
        }
        if (psi0.norm() - 1.0).abs() > 1e-10 {
            return Err(RabiError::InvalidInput("initial state is not normalized".into()));
        }
        let dim = 2 * self.m;
        let re0 = Mat::from_fn(dim, 1, |i, _| psi0.amplitudes[i].re);
        let im0 = Mat::from_fn(dim, 1, |i, _| psi0.amplitudes[i].im);
        let vt = self.vectors.transpose();
        let cre = vt * &re0;
        let cim = vt * &im0;
        let nt = times.len();
        // Columns 0..nt hold real parts of the spectral coefficients, nt..2nt imaginary.
        let mut coeff = Mat::<f64>::zeros(dim, 2 * nt);
        for (j, &t) in times.iter().enumerate() {
            for k in 0..dim {
                let c = Complex64::new(cre[(k, 0)], cim[(k, 0)]) * Complex64::from_polar(1.0, -self.energies[k] * t);
                coeff[(k, j)] = c.re;
                coeff[(k, nt + j)] = c.im;
            }
        }
        let amps = &self.vectors * &coeff;
        Ok((0..nt)
            .map(|j| {
                StateVector::from_complex(
                    self.m,
                    (0..dim).map(|i| Complex64::new(amps[(i, j)], amps[(i, nt + j)])).collect(),
                )
            })
            .collect())
    }
}

pub fn evolve(h: &DenseHamiltonian, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
    Propagator::new(h)?.evolve(psi0, times)
}

/// ⟨ψ|H|ψ⟩.
pub fn energy_expectation(h: &DenseHamiltonian, psi: &StateVector) -> f64 {
    let dim = h.dim();
    let re = Mat::from_fn(dim, 1, |i, _| psi.amplitudes[i].re);
    let im = Mat::from_fn(dim, 1, |i, _| psi.amplitudes[i].im);
    let hre = &h.matrix * &re;
    let him = &h.matrix * &im;
    (0..dim).map(|i| re[(i, 0)] * hre[(i, 0)] + im[(i, 0)] * him[(i, 0)]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTable {
    pub times: Vec<f64>,
    pub f_eff: Vec<f64>,
    pub f_1p: Vec<f64>,
    pub m: usize,
    pub warnings: Vec<String>,
}

/// Truncation for the fidelity comparison: large enough for all three models.
pub fn dynamics_truncation(params: &ModelParams) -> usize {
    default_truncation(params.g2).max(effective_truncation(params))
}

/// F_eff(t) = |⟨ψ_eff(t)|ψ(t)⟩| and F_1P(t) = |⟨ψ_1P(t)|ψ(t)⟩|, all three
/// started in |↑⟩|0⟩.
pub fn fidelity_series(params: &ModelParams, times: &[f64], m: Option<usize>) -> Result<FidelityTable> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(RabiError::InvalidInput("time list must be ascending".into()));
    }
    let m = m.unwrap_or_else(|| dynamics_truncation(params));
    let psi0 = StateVector::basis(m, 0, 0);
    let specs = [HamiltonianSpec::Full(*params), effective_spec(params), one_photon_spec(params)];
    let runs: Vec<Vec<StateVector>> = specs
        .par_iter()
        .map(|&spec| evolve(&build_from_spec(spec, m)?, &psi0, times))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    for (name, run) in ["full", "effective", "one-photon"].iter().zip(&runs) {
        let worst = run.iter().map(|s| s.top_occupation()).fold(0.0, f64::max);
        if worst > crate::observables::LEAKAGE_TOL {
            warnings.push(format!("{name} evolution reaches top-Fock occupation {worst:e} at M = {m}"));
        }
    }
    let fid = |other: &[StateVector]| -> Vec<f64> {
        other.iter().zip(&runs[0]).map(|(a, b)| a.inner(b).norm()).collect()
    };
    Ok(FidelityTable {
        times: times.to_vec(),
        f_eff: fid(&runs[1]),
        f_1p: fid(&runs[2]),
        m,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    /// g1_eff / g1c_eff.
    pub ratio: f64,
    pub g2: f64,
    pub g1: f64,
    pub magnetization: f64,
    pub photon_number: f64,
    pub warning: Option<String>,
}

/// Ground-state ⟨σ_z⟩ and ⟨a†a⟩ of the full model on a grid of scaled
/// couplings g1_eff/g1c_eff, with g1 = ratio · g1c_eff · √β.
pub fn sweep_order_parameters(delta: f64, g2_list: &[f64], ratio_grid: &[f64]) -> Result<Vec<OrderRow>> {
    let points: Vec<(f64, f64)> = g2_list
        .iter()
        .flat_map(|&g2| ratio_grid.iter().map(move |&r| (g2, r)))
        .collect();
    points
        .par_iter()
        .map(|&(g2, ratio)| {
            let probe = ModelParams::new(delta, 0.0, g2)?;
            let eff = effective_params(&probe);
            let g1 = ratio * eff.g1c_eff * eff.omega_eff.sqrt();
            let params = ModelParams::new(delta, g1, g2)?;
            let (_, psi) = ground_state(&params, None)?;
            Ok(OrderRow {
                ratio,
                g2,
                g1,
                magnetization: magnetization(&psi),
                photon_number: photon_number(&psi),
                warning: psi.leakage_warning(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::build_hamiltonian;

    #[test]
    fn identity_at_time_zero_and_norm_preserved() {
        let params = ModelParams::new(1.0, 0.4, 0.2).unwrap();
        let h = build_hamiltonian(&params, 60).unwrap();
        let psi0 = StateVector::basis(60, 0, 0);
        let states = evolve(&h, &psi0, &[0.0, 0.7, 5.0]).unwrap();
        for (a, b) in states[0].amplitudes.iter().zip(&psi0.amplitudes) {
            assert!((a - b).norm() < 1e-12);
        }
        let e0 = energy_expectation(&h, &psi0);
        for s in &states {
            assert!((s.norm() - 1.0).abs() < 1e-10);
            assert!((energy_expectation(&h, s) - e0).abs() < 1e-10);
        }
    }

    #[test]
    fn displaced_oscillator_coherent_dynamics() {
        // Δ = 0, g2 = 0, spin up: |ψ(t)⟩ = e^{iφ(t)} |α(t)⟩ with
        // α(t) = g1 (e^{−it} − 1).
        let g1 = 0.5;
        let params = ModelParams::new(0.0, g1, 0.0).unwrap();
        let m = 60;
        let h = build_hamiltonian(&params, m).unwrap();
        let psi0 = StateVector::basis(m, 0, 0);
        for t in [0.3, 1.7, std::f64::consts::PI] {
            let psi = &evolve(&h, &psi0, &[t]).unwrap()[0];
            let alpha = g1 * (Complex64::from_polar(1.0, -t) - 1.0);
            let mut fact = 1.0;
            let mut overlap = Complex64::new(0.0, 0.0);
            for n in 0..30 {
                if n > 0 {
                    fact *= n as f64;
                }
                let c = (-0.5 * alpha.norm_sqr()).exp() * alpha.powi(n as i32) / fact.sqrt();
                overlap += c.conj() * psi.up(n);
            }
            assert!((overlap.norm() - 1.0).abs() < 1e-10, "t={t}");
        }
        // Revival at t = 2π.
        let psi = &evolve(&h, &psi0, &[2.0 * std::f64::consts::PI]).unwrap()[0];
        assert!((psi.up(0).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fidelity_is_one_without_two_photon_term() {
        let params = ModelParams::new(1.0, 0.5, 0.0).unwrap();
        let t = [0.0, 1.0, 4.0];
        let f = fidelity_series(&params, &t, Some(60)).unwrap();
        for k in 0..3 {
            assert!((f.f_eff[k] - 1.0).abs() < 1e-10);
            assert!((f.f_1p[k] - 1.0).abs() < 1e-10);
        }
    }
}
