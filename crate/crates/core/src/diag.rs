//! Dense diagonalization in the truncated spin ⊗ Fock space, index s·M + n
//! with s = 0 for spin up.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{RabiError, Result};
use crate::model::{ModelParams, DEFAULT_G2_MAX};
use crate::observables::StateVector;

/// Truncation step of the convergence check.
pub const CONVERGENCE_STEP: usize = 50;
/// Allowed change of a retained level between M and M + 50.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Allowed eigen-residual ‖Hψ − Eψ‖.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Largest truncation the adaptive oracle will try.
pub const MAX_TRUNCATION: usize = 2400;
pub const MIN_TRUNCATION: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HamiltonianKind {
    /// The mixed model, optionally biased.
    Full,
    /// The effective biased one-photon model.
    Effective,
    /// The plain one-photon model with the original coupling.
    OnePhoton,
}

/// Coefficients of a biased one-photon Hamiltonian
/// ω a†a ± g(a + a†) ± b/2 + shift, coupled by −Δ/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnePhotonTerms {
    pub omega: f64,
    pub coupling: f64,
    pub delta: f64,
    pub bias: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HamiltonianSpec {
    Full(ModelParams),
    OnePhotonLike(HamiltonianKind, OnePhotonTerms),
}

impl HamiltonianSpec {
    pub fn kind(&self) -> HamiltonianKind {
        match self {
            HamiltonianSpec::Full(_) => HamiltonianKind::Full,
            HamiltonianSpec::OnePhotonLike(kind, _) => *kind,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseHamiltonian {
    pub spec: HamiltonianSpec,
    pub m: usize,
    pub matrix: Mat<f64>,
}

impl DenseHamiltonian {
    pub fn kind(&self) -> HamiltonianKind {
        self.spec.kind()
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// The same operator on a different truncation.
    pub fn rebuild(&self, m: usize) -> Result<DenseHamiltonian> {
        build_from_spec(self.spec, m)
    }

    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }
}

fn check_truncation(m: usize) -> Result<()> {
    if m < MIN_TRUNCATION {
        return Err(RabiError::InvalidInput(format!(
            "Fock truncation must be at least {MIN_TRUNCATION}, got {m}"
        )));
    }
    Ok(())
}

/// Diagonal blocks n·ω + sign·[g1 X + g2 Y] + sign·b/2 + shift and −Δ/2 off-diagonal.
fn assemble(m: usize, omega: f64, g1: f64, g2: f64, delta: f64, bias: f64, shift: f64) -> Mat<f64> {
    let mut h = Mat::<f64>::zeros(2 * m, 2 * m);
    for (s, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        let o = s * m;
        for n in 0..m {
            h[(o + n, o + n)] = omega * n as f64 + sign * 0.5 * bias + shift;
            if n + 1 < m {
                let x = sign * g1 * ((n + 1) as f64).sqrt();
                h[(o + n, o + n + 1)] = x;
                h[(o + n + 1, o + n)] = x;
            }
            if n + 2 < m {
                let y = sign * g2 * (((n + 1) * (n + 2)) as f64).sqrt();
                h[(o + n, o + n + 2)] = y;
                h[(o + n + 2, o + n)] = y;
            }
        }
    }
    for n in 0..m {
        h[(n, m + n)] = -0.5 * delta;
        h[(m + n, n)] = -0.5 * delta;
    }
    h
}

pub fn build_from_spec(spec: HamiltonianSpec, m: usize) -> Result<DenseHamiltonian> {
    check_truncation(m)?;
    let matrix = match spec {
        HamiltonianSpec::Full(p) => assemble(m, 1.0, p.g1, p.g2, p.delta, p.epsilon, 0.0),
        HamiltonianSpec::OnePhotonLike(_, t) => assemble(m, t.omega, t.coupling, 0.0, t.delta, t.bias, t.shift),
    };
    Ok(DenseHamiltonian { spec, m, matrix })
}

/// The mixed-model Hamiltonian, including the bias ε σ_z/2 when ε ≠ 0.
pub fn build_hamiltonian(params: &ModelParams, m: usize) -> Result<DenseHamiltonian> {
    build_from_spec(HamiltonianSpec::Full(*params), m)
}

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, 2M rows.
    pub states: Mat<f64>,
    pub m: usize,
}

impl EigenSystem {
    pub fn state(&self, k: usize) -> StateVector {
        StateVector::from_real(self.m, (0..2 * self.m).map(|i| self.states[(i, k)]).collect())
    }
}

pub fn eigenvalues(h: &DenseHamiltonian) -> Result<Vec<f64>> {
    h.matrix
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| RabiError::ConvergenceFailure(format!("eigenvalue solver: {e:?}")))
}

/// Every eigenpair of the truncated operator, without convergence checks.
pub fn full_eigen(h: &DenseHamiltonian) -> Result<EigenSystem> {
    let evd = h
        .matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| RabiError::ConvergenceFailure(format!("eigen solver: {e:?}")))?;
    let s = evd.S().column_vector();
    let energies = (0..h.dim()).map(|i| s[i]).collect();
    Ok(EigenSystem {
        energies,
        states: evd.U().to_owned(),
        m: h.m,
    })
}

fn max_residual(h: &DenseHamiltonian, sys: &EigenSystem, k: usize) -> f64 {
    let v = sys.states.subcols(0, k);
    let hv = &h.matrix * v;
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut r = 0.0;
        for i in 0..h.dim() {
            let d = hv[(i, j)] - sys.energies[j] * v[(i, j)];
            r += d * d;
        }
        worst = worst.max(r.sqrt());
    }
    worst
}

/// Largest change of the lowest `k` levels between truncations M and M + 50.
pub fn truncation_drift(h: &DenseHamiltonian, energies: &[f64], k: usize) -> Result<f64> {
    let bigger = eigenvalues(&h.rebuild(h.m + CONVERGENCE_STEP)?)?;
    Ok(energies[..k]
        .iter()
        .zip(&bigger)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// The lowest `k` eigenpairs, certified by residual and by comparison with
/// the truncation M + 50.
pub fn eigen_solve(h: &DenseHamiltonian, k: usize) -> Result<EigenSystem> {
    if k == 0 || 2 * k > h.m {
        return Err(RabiError::InvalidInput(format!(
            "need 1 ≤ k ≤ M/2 levels (k = {k}, M = {})",
            h.m
        )));
    }
    let mut sys = full_eigen(h)?;
    let drift = truncation_drift(h, &sys.energies, k)?;
    if drift > CONVERGENCE_TOL {
        return Err(RabiError::ConvergenceFailure(format!(
            "lowest {k} levels move by {drift:e} between M = {} and M = {}",
            h.m,
            h.m + CONVERGENCE_STEP
        )));
    }
    let residual = max_residual(h, &sys, k);
    if residual > RESIDUAL_TOL {
        return Err(RabiError::ConvergenceFailure(format!(
            "eigen-residual {residual:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    sys.energies.truncate(k);
    sys.states = sys.states.subcols(0, k).to_owned();
    Ok(sys)
}

/// Starting truncation for the mixed model: 200 up to g2 = 0.3, 600 up to
/// 0.45, and 1200 beyond, before adaptive doubling.
pub fn default_truncation(g2: f64) -> usize {
    if g2 <= 0.3 {
        200
    } else if g2 <= 0.45 {
        600
    } else {
        1200
    }
}

fn next_truncation(m: usize) -> Option<usize> {
    (m < MAX_TRUNCATION).then(|| (2 * m).min(MAX_TRUNCATION))
}

/// Converged eigenvalues of `spec` up to `e_max`, raising the truncation
/// from `m0` until the levels agree with M + 50.
pub fn converged_levels_below(spec: HamiltonianSpec, e_max: f64, m0: usize) -> Result<(Vec<f64>, usize)> {
    let mut m = m0.max(MIN_TRUNCATION);
    loop {
        let h = build_from_spec(spec, m)?;
        let values = eigenvalues(&h)?;
        let k = values.iter().take_while(|&&e| e <= e_max).count();
        if k == 0 && truncation_drift(&h, &values, 1)? <= CONVERGENCE_TOL {
            return Ok((Vec::new(), m));
        }
        if k > 0 && 2 * k <= m {
            let drift = truncation_drift(&h, &values, k)?;
            if drift <= CONVERGENCE_TOL {
                let mut v = values;
                v.truncate(k);
                return Ok((v, m));
            }
        }
        match next_truncation(m) {
            Some(next) => m = next,
            None => {
                return Err(RabiError::ConvergenceFailure(format!(
                    "levels below {e_max} not converged at M = {m}"
                )))
            }
        }
    }
}

/// Converged eigenvalues of the mixed model below `e_max`.
pub fn oracle_levels_below(params: &ModelParams, e_max: f64) -> Result<(Vec<f64>, usize)> {
    params.validate(crate::model::ParamLimits { g2_max: DEFAULT_G2_MAX.max(params.g2) })?;
    converged_levels_below(HamiltonianSpec::Full(*params), e_max, default_truncation(params.g2))
}

/// Lowest `k` eigenpairs with adaptive truncation.
pub fn converged_eigen(spec: HamiltonianSpec, k: usize, m0: usize) -> Result<EigenSystem> {
    let mut m = m0.max(MIN_TRUNCATION).max(2 * k);
    loop {
        match eigen_solve(&build_from_spec(spec, m)?, k) {
            Ok(sys) => return Ok(sys),
            Err(RabiError::ConvergenceFailure(msg)) => match next_truncation(m) {
                Some(next) => m = next,
                None => return Err(RabiError::ConvergenceFailure(msg)),
            },
            Err(e) => return Err(e),
        }
    }
}

/// Ground energy and state of the mixed model. With `m = None` the
/// truncation is chosen and raised automatically.
pub fn ground_state(params: &ModelParams, m: Option<usize>) -> Result<(f64, StateVector)> {
    let spec = HamiltonianSpec::Full(*params);
    let sys = match m {
        Some(m) => eigen_solve(&build_from_spec(spec, m)?, 1)?,
        None => converged_eigen(spec, 1, default_truncation(params.g2))?,
    };
    Ok((sys.energies[0], sys.state(0)))
}
