//! Model parameters and the closed-form quantities derived from them.
//!
//! Energies are in units of the cavity frequency (ω = 1). Spin index 0 is
//! spin-up (σ_z = +1); its diagonal block carries `+g1` and `+g2`.

use serde::{Deserialize, Serialize};

use crate::error::{RabiError, Result};

/// Default upper limit on the two-photon coupling. The Bogoliubov frame
/// degenerates at g2 = 1/2.
pub const DEFAULT_G2_MAX: f64 = 0.49999;

/// Below this β the frame constants are large and series converge slowly.
pub const CONDITIONING_BETA: f64 = 1e-2;

/// Which Bogoliubov operator a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    A,
    B,
}

impl Family {
    pub fn other(self) -> Family {
        match self {
            Family::A => Family::B,
            Family::B => Family::A,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::A => write!(f, "A"),
            Family::B => write!(f, "B"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = RabiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Family::A),
            "B" | "b" => Ok(Family::B),
            other => Err(RabiError::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamLimits {
    pub g2_max: f64,
}

impl Default for ParamLimits {
    fn default() -> Self {
        ParamLimits {
            g2_max: DEFAULT_G2_MAX,
        }
    }
}

/// Physical inputs of the mixed Rabi Hamiltonian
/// `H = ε/2 σz − Δ/2 σx + a†a + σz [g1 (a† + a) + g2 (a†² + a²)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub delta: f64,
    pub g1: f64,
    pub g2: f64,
    #[serde(default)]
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(delta: f64, g1: f64, g2: f64) -> Result<Self> {
        Self::with_limits(delta, g1, g2, 0.0, ParamLimits::default())
    }

    pub fn with_bias(delta: f64, g1: f64, g2: f64, epsilon: f64) -> Result<Self> {
        Self::with_limits(delta, g1, g2, epsilon, ParamLimits::default())
    }

    /// Δ = 0 is accepted; the G-function code routes it to the decoupled
    /// (block-diagonal) branch.
    pub fn with_limits(
        delta: f64,
        g1: f64,
        g2: f64,
        epsilon: f64,
        limits: ParamLimits,
    ) -> Result<Self> {
        let p = ModelParams {
            delta,
            g1,
            g2,
            epsilon,
        };
        p.validate(limits)?;
        Ok(p)
    }

    pub fn validate(&self, limits: ParamLimits) -> Result<()> {
        let finite = [self.delta, self.g1, self.g2, self.epsilon]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(RabiError::InvalidParams("non-finite parameter".into()));
        }
        if self.delta < 0.0 {
            return Err(RabiError::InvalidParams(format!(
                "delta must be >= 0, got {}",
                self.delta
            )));
        }
        if self.g1 < 0.0 {
            return Err(RabiError::InvalidParams(format!(
                "g1 must be >= 0, got {}",
                self.g1
            )));
        }
        if !(limits.g2_max < 0.5) {
            return Err(RabiError::InvalidParams(format!(
                "g2 limit must stay below 1/2, got {}",
                limits.g2_max
            )));
        }
        if !(0.0..=limits.g2_max).contains(&self.g2) {
            return Err(RabiError::InvalidParams(format!(
                "g2 must lie in [0, {}], got {}",
                limits.g2_max, self.g2
            )));
        }
        Ok(())
    }

    pub fn with_g2(&self, g2: f64) -> ModelParams {
        ModelParams { g2, ..*self }
    }

    pub fn with_g1(&self, g1: f64) -> ModelParams {
        ModelParams { g1, ..*self }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> ModelParams {
        ModelParams { epsilon, ..*self }
    }

    pub fn with_delta(&self, delta: f64) -> ModelParams {
        ModelParams { delta, ..*self }
    }

    /// β = √(1 − 4 g2²).
    pub fn beta(&self) -> f64 {
        (1.0 - 4.0 * self.g2 * self.g2).sqrt()
    }
}

/// Constants of the Bogoliubov transformations
/// `A = u a + v a† + w` and `B = u a − v a† + w′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovFrame {
    pub beta: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub w_prime: f64,
    /// Squeeze parameter, r = arccosh u.
    pub r: f64,
    pub h_a: f64,
    pub h_b: f64,
    pub uv: f64,
}

impl BogoliubovFrame {
    /// tanh r = v / u.
    pub fn tanh_r(&self) -> f64 {
        self.v / self.u
    }

    /// Slope of Ω(n, E) = slope·n − E, equal to (1 + 4 g2²)/β.
    pub fn omega_slope(&self) -> f64 {
        self.u * self.u + self.v * self.v + 4.0 * self.uv * self.uv * self.beta
    }

    pub fn conditioning_warning(&self) -> Option<String> {
        (self.beta < CONDITIONING_BETA).then(|| {
            format!(
                "beta = {:.3e} is close to the collapse point; frame constants are ill-conditioned",
                self.beta
            )
        })
    }
}

pub fn build_frame(params: &ModelParams) -> Result<BogoliubovFrame> {
    let g1 = params.g1;
    let g2 = params.g2;
    if !(0.0..0.5).contains(&g2) {
        return Err(RabiError::InvalidParams(format!(
            "Bogoliubov frame undefined for g2 = {g2}"
        )));
    }
    let beta = params.beta();
    // 1 − β written without cancellation.
    let one_minus_beta = 4.0 * g2 * g2 / (1.0 + beta);
    let u = ((1.0 + beta) / (2.0 * beta)).sqrt();
    let v = (one_minus_beta / (2.0 * beta)).sqrt();
    let s = u + v;
    let d = u - v;
    // (u² + v²) = 1/β and v − u = −1/(u + v).
    let w = g1 / (beta * s);
    let w_prime = -g1 * s / beta;
    let uv = u * v;
    let h_a = v * v + d * d * w * w * (1.0 - 2.0 * g2) + 2.0 * g1 * d * w + 2.0 * g2 * uv;
    let h_b = v * v + s * s * w_prime * w_prime * (1.0 + 2.0 * g2) - 2.0 * g1 * s * w_prime
        + 2.0 * g2 * uv;
    Ok(BogoliubovFrame {
        beta,
        u,
        v,
        w,
        w_prime,
        r: u.acosh(),
        h_a,
        h_b,
        uv,
    })
}

/// n-th pole energy of the given family: β n − (1−β)/2 − g1²/(1 ± 2 g2).
pub fn pole_energy(family: Family, n: usize, params: &ModelParams) -> f64 {
    let g2 = params.g2;
    let beta = params.beta();
    let half_one_minus_beta = 2.0 * g2 * g2 / (1.0 + beta);
    let denom = match family {
        Family::A => 1.0 + 2.0 * g2,
        Family::B => 1.0 - 2.0 * g2,
    };
    beta * n as f64 - half_one_minus_beta - params.g1 * params.g1 / denom
}

/// Distance between same-index poles, pole_A(n) − pole_B(n) = 4 g2 g1² / β².
pub fn pole_gap(params: &ModelParams) -> f64 {
    let beta2 = 1.0 - 4.0 * params.g2 * params.g2;
    4.0 * params.g2 * params.g1 * params.g1 / beta2
}

/// Sorted pole energies of both families below `e_max`, tagged with family
/// and index.
pub fn poles_below(params: &ModelParams, e_max: f64) -> Vec<(f64, Family, usize)> {
    let mut out = Vec::new();
    for family in [Family::A, Family::B] {
        let mut n = 0;
        loop {
            let e = pole_energy(family, n, params);
            if e > e_max {
                break;
            }
            out.push((e, family, n));
            n += 1;
            if params.beta() == 0.0 {
                break;
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseLimits {
    /// Common limit of every A-family pole as g2 → 1/2.
    pub finite_a: f64,
    /// The B-family poles diverge to −∞ whenever g1 > 0; at g1 = 0 the
    /// B family coincides with A.
    pub divergent_b: bool,
}

pub fn collapse_limits(g1: f64) -> CollapseLimits {
    CollapseLimits {
        finite_a: -0.5 * (1.0 + g1 * g1),
        divergent_b: g1 > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_frame_without_coupling() {
        let p = ModelParams::new(0.5, 0.0, 0.0).unwrap();
        let f = build_frame(&p).unwrap();
        assert_eq!(f.beta, 1.0);
        assert_eq!(f.u, 1.0);
        assert_eq!(f.v, 0.0);
        assert_eq!(f.w, 0.0);
        assert_eq!(f.w_prime, 0.0);
    }

    #[test]
    fn frame_values_match_closed_form() {
        let p = ModelParams::new(0.5, 0.1, 0.2).unwrap();
        let f = build_frame(&p).unwrap();
        assert!(close(f.beta, 0.916515, 1e-6));
        assert!(close(f.u, 1.022519, 1e-6));
        assert!(close(f.v, 0.213413, 1e-6));
        assert!(close(f.w, 0.088281, 1e-6));
        assert!(close(f.w_prime, -0.134852, 1e-6));
        // w² = g1² / (β (1 + 2 g2))
        assert!(close(f.w * f.w, 0.01 / (f.beta * 1.4), 1e-14));
        assert!(close(f.r, f.u.acosh(), 0.0));
    }

    #[test]
    fn one_photon_limit_of_displacements() {
        let f = build_frame(&ModelParams::new(1.0, 0.1, 0.0).unwrap()).unwrap();
        assert!(close(f.w, 0.1, 1e-15));
        assert!(close(f.w_prime, -0.1, 1e-15));
        assert!(close(f.h_a, 0.03, 1e-15));
    }

    #[test]
    fn frame_normalization_across_g2() {
        for i in 0..=4999 {
            let g2 = i as f64 * 1e-4;
            let f = build_frame(&ModelParams::new(1.0, 0.3, g2).unwrap()).unwrap();
            let tol = 1e-12 * (f.u * f.u).max(1.0);
            assert!(close(f.u * f.u - f.v * f.v, 1.0, tol), "g2={g2}");
            assert!(close(f.u * f.u + f.v * f.v, 1.0 / f.beta, tol), "g2={g2}");
            assert!(close(f.omega_slope(), (1.0 + 4.0 * g2 * g2) / f.beta, tol));
        }
    }

    #[test]
    fn rejects_collapse_point() {
        assert!(ModelParams::new(1.0, 0.1, 0.5).is_err());
        assert!(ModelParams::new(1.0, 0.1, 0.499995).is_err());
        let lim = ParamLimits { g2_max: 0.4999999 };
        assert!(ModelParams::with_limits(1.0, 0.1, 0.499995, 0.0, lim).is_ok());
        assert!(ModelParams::with_limits(1.0, 0.1, 0.2, 0.0, ParamLimits { g2_max: 0.5 }).is_err());
        let raw = ModelParams {
            delta: 1.0,
            g1: 0.1,
            g2: 0.5,
            epsilon: 0.0,
        };
        assert!(build_frame(&raw).is_err());
        assert!(ModelParams::new(-1.0, 0.1, 0.2).is_err());
        assert!(ModelParams::new(1.0, -0.1, 0.2).is_err());
    }

    #[test]
    fn pole_values() {
        let p = ModelParams::new(0.5, 0.1, 0.2).unwrap();
        assert!(close(pole_energy(Family::A, 0, &p), -0.04888529, 1e-8));
        assert!(close(pole_energy(Family::B, 0, &p), -0.05840910, 1e-8));
        let free = ModelParams::new(0.5, 0.0, 0.0).unwrap();
        for k in 0..10 {
            assert_eq!(pole_energy(Family::A, k, &free), k as f64);
        }
    }

    #[test]
    fn pole_gap_values() {
        let p = ModelParams::new(0.5, 0.1, 0.2).unwrap();
        assert!(close(pole_gap(&p), 0.0095238, 1e-7));
        assert!(close(
            pole_gap(&p),
            pole_energy(Family::A, 0, &p) - pole_energy(Family::B, 0, &p),
            1e-15
        ));
        assert_eq!(pole_gap(&ModelParams::new(0.5, 0.0, 0.3).unwrap()), 0.0);
        assert!(close(
            pole_gap(&ModelParams::new(0.5, 1.0, 0.05).unwrap()),
            0.20202,
            1e-5
        ));
    }

    #[test]
    fn collapse_values() {
        assert!(close(collapse_limits(0.1).finite_a, -0.505, 1e-15));
        assert_eq!(collapse_limits(0.0).finite_a, -0.5);
        assert_eq!(collapse_limits(1.0).finite_a, -1.0);
        assert!(collapse_limits(0.1).divergent_b);
    }

    #[test]
    fn poles_approach_collapse_limits() {
        let g1 = 0.3;
        let mut last_dev = f64::INFINITY;
        let mut last_b0 = f64::INFINITY;
        for g2 in [0.49, 0.499, 0.4999] {
            let p = ModelParams::new(1.0, g1, g2).unwrap();
            let dev = (0..=10)
                .map(|n| (pole_energy(Family::A, n, &p) - collapse_limits(g1).finite_a).abs())
                .fold(0.0, f64::max);
            let b0 = pole_energy(Family::B, 0, &p);
            assert!(dev < last_dev);
            assert!(b0 < last_b0);
            last_dev = dev;
            last_b0 = b0;
        }
        assert!(last_b0 < -400.0);
    }

    #[test]
    fn poles_below_is_sorted_and_tagged() {
        let p = ModelParams::new(0.5, 0.1, 0.2).unwrap();
        let poles = poles_below(&p, 3.0);
        assert!(poles.windows(2).all(|w| w[0].0 <= w[1].0));
        for (e, fam, n) in &poles {
            assert_eq!(*e, pole_energy(*fam, *n, &p));
            assert!(*e <= 3.0);
        }
        assert_eq!(poles.len(), 8);
    }
}
