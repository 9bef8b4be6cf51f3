//! Effective biased one-photon model of the mixed coupling.
//!
//! Dropping the squeeze from the Bogoliubov operators leaves
//! `H_eff = (ε + ε_eff)/2 σ_z − Δ/2 σ_x − (1−β)/2 + β a†a + (g1/√β) σ_z (a† + a)`
//! with `ε_eff = 4 g2 g1² / (1 − 4 g2²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{
    build_from_spec, converged_eigen, converged_levels_below, default_truncation, eigenvalues, ground_state,
    DenseHamiltonian, HamiltonianKind, HamiltonianSpec, OnePhotonTerms,
};
use crate::error::{RabiError, Result};
use crate::model::ModelParams;
use crate::observables::{magnetization, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub epsilon_eff: f64,
    pub omega_eff: f64,
    pub g1_eff: f64,
    pub shift: f64,
    /// √(Δ ω_eff)/2.
    pub g1c_eff: f64,
}

pub fn effective_params(params: &ModelParams) -> EffectiveParams {
    let g2 = params.g2;
    let beta2 = 1.0 - 4.0 * g2 * g2;
    let beta = beta2.sqrt();
    EffectiveParams {
        epsilon_eff: 4.0 * g2 * params.g1 * params.g1 / beta2,
        omega_eff: beta,
        g1_eff: params.g1 / beta.sqrt(),
        shift: -2.0 * g2 * g2 / (1.0 + beta),
        g1c_eff: (params.delta * beta).sqrt() / 2.0,
    }
}

pub fn effective_spec(params: &ModelParams) -> HamiltonianSpec {
    let e = effective_params(params);
    HamiltonianSpec::OnePhotonLike(
        HamiltonianKind::Effective,
        OnePhotonTerms {
            omega: e.omega_eff,
            coupling: e.g1_eff,
            delta: params.delta,
            bias: params.epsilon + e.epsilon_eff,
            shift: e.shift,
        },
    )
}

/// The plain one-photon model with the original g1, ω = 1 and no bias.
pub fn one_photon_spec(params: &ModelParams) -> HamiltonianSpec {
    HamiltonianSpec::OnePhotonLike(
        HamiltonianKind::OnePhoton,
        OnePhotonTerms {
            omega: 1.0,
            coupling: params.g1,
            delta: params.delta,
            bias: 0.0,
            shift: 0.0,
        },
    )
}

/// Effective Hamiltonian with total bias ε + ε_eff and the scalar shift.
pub fn build_effective_hamiltonian(params: &ModelParams, m: usize) -> Result<DenseHamiltonian> {
    build_from_spec(effective_spec(params), m)
}

pub fn build_one_photon_hamiltonian(params: &ModelParams, m: usize) -> Result<DenseHamiltonian> {
    build_from_spec(one_photon_spec(params), m)
}

/// Truncation for the effective model: its Fock support grows like
/// (g1_eff/ω_eff)², so it follows the full model's default.
pub fn effective_truncation(params: &ModelParams) -> usize {
    let e = effective_params(params);
    let disp = e.g1_eff / e.omega_eff;
    default_truncation(params.g2).max((4.0 * disp * disp).ceil() as usize + 100)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    Full,
    Effective,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelTag::Full => "full",
            ModelTag::Effective => "effective",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRow {
    pub epsilon: f64,
    pub model: ModelTag,
    pub n: usize,
    /// E_n − E_0.
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionTable {
    pub rows: Vec<TransmissionRow>,
    /// The bias where the effective curves are symmetric, ε = −ε_eff.
    pub symmetry_point: f64,
    pub omega_eff: f64,
}

/// Ground energy and state of the effective model.
pub fn effective_ground_state(params: &ModelParams) -> Result<(f64, StateVector)> {
    let sys = converged_eigen(effective_spec(params), 1, effective_truncation(params))?;
    Ok((sys.energies[0], sys.state(0)))
}

/// Lowest `k` converged levels of the full and of the effective model.
pub fn lowest_pair(params: &ModelParams, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    Ok((
        lowest(HamiltonianSpec::Full(*params), k - 1, default_truncation(params.g2))?,
        lowest(effective_spec(params), k - 1, effective_truncation(params))?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationRow {
    pub g2: f64,
    pub full: f64,
    pub effective: f64,
    pub epsilon_eff: f64,
}

/// Ground-state ⟨σ_z⟩ of the full and effective models along a g2 grid.
pub fn magnetization_curve(delta: f64, g1: f64, g2_grid: &[f64]) -> Result<Vec<MagnetizationRow>> {
    g2_grid
        .par_iter()
        .map(|&g2| {
            let params = ModelParams::new(delta, g1, g2)?;
            let (_, full) = ground_state(&params, None)?;
            let (_, eff) = effective_ground_state(&params)?;
            Ok(MagnetizationRow {
                g2,
                full: magnetization(&full),
                effective: magnetization(&eff),
                epsilon_eff: effective_params(&params).epsilon_eff,
            })
        })
        .collect()
}

/// Lowest `k + 1` converged levels of a Hamiltonian spec.
fn lowest(spec: HamiltonianSpec, k: usize, m0: usize) -> Result<Vec<f64>> {
    let mut m = m0;
    loop {
        let h = build_from_spec(spec, m)?;
        let values = eigenvalues(&h)?;
        let e_max = values[k];
        match converged_levels_below(spec, e_max, m) {
            Ok((mut v, _)) if v.len() > k => {
                v.truncate(k + 1);
                return Ok(v);
            }
            Ok(_) => m *= 2,
            Err(e) => return Err(e),
        }
        if m > crate::diag::MAX_TRUNCATION {
            return Err(RabiError::ConvergenceFailure(format!("lowest {} levels", k + 1)));
        }
    }
}

/// δE_n(ε) = E_n − E_0 for n = 1..=k from the full biased model and from the
/// effective model, over a grid of external bias ε.
pub fn compare_spectra(params: &ModelParams, eps_grid: &[f64], k: usize) -> Result<TransmissionTable> {
    let eff = effective_params(params);
    let rows: Vec<Vec<TransmissionRow>> = eps_grid
        .par_iter()
        .map(|&eps| {
            let p = params.with_epsilon(eps);
            let mut out = Vec::with_capacity(2 * k);
            for (model, spec, m0) in [
                (ModelTag::Full, HamiltonianSpec::Full(p), default_truncation(p.g2)),
                (ModelTag::Effective, effective_spec(&p), effective_truncation(&p)),
            ] {
                let levels = lowest(spec, k, m0)?;
                for n in 1..=k {
                    out.push(TransmissionRow {
                        epsilon: eps,
                        model,
                        n,
                        delta_e: levels[n] - levels[0],
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(TransmissionTable {
        rows: rows.into_iter().flatten().collect(),
        symmetry_point: -eff.epsilon_eff,
        omega_eff: eff.omega_eff,
    })
}
