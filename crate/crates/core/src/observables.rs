//! States in the truncated spin ⊗ Fock space and their observables.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RabiError, Result};
use crate::fock::displacement_elements;

/// Top-Fock occupation above which a truncation warning is raised.
pub const LEAKAGE_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitudes in spin ⊗ Fock order, index s·M + n with s = 0 for spin up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub m: usize,
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn from_real(m: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 2 * m);
        StateVector {
            m,
            amplitudes: values.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
        }
    }

    pub fn from_complex(m: usize, amplitudes: Vec<Complex64>) -> Self {
        assert_eq!(amplitudes.len(), 2 * m);
        StateVector { m, amplitudes }
    }

    /// |s⟩ ⊗ |n⟩ with s = 0 for spin up.
    pub fn basis(m: usize, spin: usize, n: usize) -> Self {
        let mut amplitudes = vec![ZERO; 2 * m];
        amplitudes[spin * m + n] = Complex64::new(1.0, 0.0);
        StateVector { m, amplitudes }
    }

    pub fn up(&self, n: usize) -> Complex64 {
        self.amplitudes[n]
    }

    pub fn down(&self, n: usize) -> Complex64 {
        self.amplitudes[self.m + n]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        for a in self.amplitudes.iter_mut() {
            *a /= n;
        }
        self
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.m, other.m, "states live on different truncations");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Occupation of the highest retained Fock state, both spins.
    pub fn top_occupation(&self) -> f64 {
        self.up(self.m - 1).norm_sqr() + self.down(self.m - 1).norm_sqr()
    }

    pub fn leakage_warning(&self) -> Option<String> {
        let top = self.top_occupation();
        (top > LEAKAGE_TOL).then(|| format!("top Fock state M-1 = {} holds {top:e} of the norm", self.m - 1))
    }
}

/// ⟨σ_z⟩.
pub fn magnetization(state: &StateVector) -> f64 {
    let up: f64 = (0..state.m).map(|n| state.up(n).norm_sqr()).sum();
    let down: f64 = (0..state.m).map(|n| state.down(n).norm_sqr()).sum();
    (up - down) / (up + down)
}

/// ⟨a†a⟩. Check [`StateVector::leakage_warning`] for truncation leakage.
pub fn photon_number(state: &StateVector) -> f64 {
    let total: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let n: f64 = (0..state.m)
        .map(|n| n as f64 * (state.up(n).norm_sqr() + state.down(n).norm_sqr()))
        .sum();
    n / total
}

/// Field density matrix after tracing out the spin, row-major M×M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub m: usize,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.m + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.m).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                s += self.get(i, j).norm_sqr();
            }
        }
        s
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            for j in 0..=i {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mat = Mat::<faer::c64>::from_fn(self.m, self.m, |i, j| {
            let z = self.get(i, j);
            faer::c64::new(z.re, z.im)
        });
        mat.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| RabiError::ConvergenceFailure(format!("density eigenvalues: {e:?}")))
    }

    /// Smallest index K with negligible weight on every Fock state ≥ K.
    pub fn support(&self, tol: f64) -> usize {
        (0..self.m)
            .rev()
            .find(|&n| self.get(n, n).re > tol)
            .map_or(1, |n| n + 1)
    }
}

pub fn reduced_field_density(state: &StateVector) -> DensityMatrix {
    let m = state.m;
    let norm2: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let mut data = vec![ZERO; m * m];
    for i in 0..m {
        for j in 0..m {
            data[i * m + j] = (state.up(i) * state.up(j).conj() + state.down(i) * state.down(j).conj()) / norm2;
        }
    }
    DensityMatrix { m, data }
}

/// Wigner function sampled on a rectangular α grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub alpha_re: Vec<f64>,
    pub alpha_im: Vec<f64>,
    /// values[i * alpha_im.len() + j] = W(alpha_re[i] + i·alpha_im[j]).
    pub values: Vec<f64>,
    pub warning: Option<String>,
}

impl WignerGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.alpha_im.len() + j]
    }

    /// Riemann sum of W over the grid, assuming uniform spacing.
    pub fn normalization(&self) -> f64 {
        let step = |v: &[f64]| if v.len() > 1 { (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 } else { 1.0 };
        self.values.iter().sum::<f64>() * step(&self.alpha_re) * step(&self.alpha_im)
    }
}

/// Uniform grid of `n` points on [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Default grid: α ∈ [−6, 6]² at 121 × 121 points, wide enough for the squeezed states near g2 = 0.3.
pub fn default_wigner_axes() -> (Vec<f64>, Vec<f64>) {
    (linspace(-6.0, 6.0, 121), linspace(-6.0, 6.0, 121))
}

/// W(α) = (2/π) Tr[ρ D(α) Π D†(α)] = (2/π) Σ ρ_{nm} (−1)ⁿ ⟨m|D(2α)|n⟩,
/// restricted to the Fock support of ρ.
pub fn wigner(density: &DensityMatrix, alpha_re: &[f64], alpha_im: &[f64]) -> WignerGrid {
    let k = density.support(1e-18);
    let max_r2 = alpha_re
        .iter()
        .flat_map(|x| alpha_im.iter().map(move |y| x * x + y * y))
        .fold(0.0, f64::max);
    let warning = (4.0 * max_r2 > density.m as f64).then(|| {
        format!(
            "grid reaches |α|² = {max_r2:.3} against Fock truncation M = {}",
            density.m
        )
    });
    let values: Vec<f64> = alpha_re
        .par_iter()
        .flat_map_iter(|&x| {
            alpha_im.iter().map(move |&y| {
                let d = displacement_elements(Complex64::new(2.0 * x, 2.0 * y), k);
                let mut acc = ZERO;
                for n in 0..k {
                    let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
                    for m in 0..k {
                        acc += density.get(n, m) * d[m * k + n] * parity;
                    }
                }
                2.0 / std::f64::consts::PI * acc.re
            })
        })
        .collect();
    WignerGrid {
        alpha_re: alpha_re.to_vec(),
        alpha_im: alpha_im.to_vec(),
        values,
        warning,
    }
}
