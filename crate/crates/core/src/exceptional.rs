//! Exceptional eigenvalues: levels sitting exactly on a pole line.
//!
//! At E = pole(family, m) the coefficient fₘ of that family must vanish and
//! eₘ becomes a free amplitude. The projection conditions then form a 5×5
//! system in (f₀, f₁, eₘ, f′₀, f′₁) for m ≥ 2, whose last row is the
//! recurrence value that would have been assigned to fₘ. For m < 2 the seed
//! fₘ disappears and the system is 4×4 in (f₁₋ₘ, eₘ, f′₀, f′₁).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::oracle_levels_below;
use crate::error::{RabiError, Result};
use crate::gfunction::{projected_column, GFunction, GOptions};
use crate::linalg::SmallMatrix;
use crate::model::{pole_energy, Family, ModelParams, DEFAULT_G2_MAX};
use crate::recurrence::{project_bundle, RecurrenceContext, Seed, POLE_GUARD};

/// Largest distance to a level for an accepted root.
pub const ORACLE_TOL: f64 = 1e-6;

/// Largest smallest-to-largest singular value ratio for an accepted root.
pub const RANK_TOL: f64 = 1e-8;

/// Bisection stops once the g2 bracket is this narrow.
pub const G2_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalProblem {
    pub family: Family,
    pub m: usize,
    pub delta: f64,
    pub g1: f64,
}

impl ExceptionalProblem {
    pub fn params(&self, g2: f64) -> Result<ModelParams> {
        if !(g2 > 0.0 && g2 < 0.5) {
            return Err(RabiError::InvalidParams(format!("g2 = {g2} outside (0, 0.5)")));
        }
        ModelParams::with_limits(self.delta, self.g1, g2, 0.0, crate::model::ParamLimits { g2_max: g2.max(DEFAULT_G2_MAX) })
    }

    /// The fixed energy at coupling `g2`.
    pub fn energy(&self, g2: f64) -> Result<f64> {
        Ok(pole_energy(self.family, self.m, &self.params(g2)?))
    }

    /// Unknowns in column order.
    pub fn unknowns(&self) -> Vec<String> {
        let (own, other) = match self.family {
            Family::A => (("f", "e"), "f′"),
            Family::B => (("f′", "e′"), "f"),
        };
        let mut out: Vec<String> = (0..2)
            .filter(|&i| self.m >= 2 || i != self.m)
            .map(|i| format!("{}{i}", own.0))
            .collect();
        out.push(format!("{}{}", own.1, self.m));
        out.extend((0..2).map(|i| format!("{other}{i}")));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcMatrix {
    pub entries: SmallMatrix,
    pub g2: f64,
    pub energy: f64,
    pub n_max: usize,
    /// Log-scale divided out of each column.
    pub col_scale: Vec<f64>,
    pub tail: f64,
    pub cancellation: f64,
}

impl ExcMatrix {
    pub fn det(&self) -> f64 {
        self.entries.det()
    }

    /// Smallest over largest singular value.
    pub fn rank_ratio(&self) -> f64 {
        let s = self.entries.singular_values();
        s[s.len() - 1] / s[0]
    }
}

/// Rejects energies within the guard of any pole of the other family.
fn check_other_family(problem: &ExceptionalProblem, params: &ModelParams, energy: f64) -> Result<()> {
    let other = problem.family.other();
    let p0 = pole_energy(other, 0, params);
    let n = ((energy - p0) / params.beta()).round().max(0.0) as usize;
    for k in n.saturating_sub(1)..=n + 1 {
        if (pole_energy(other, k, params) - energy).abs() < POLE_GUARD {
            return Err(RabiError::PoleCoincidence {
                family: problem.family,
                m: problem.m,
                other_n: k,
            });
        }
    }
    Ok(())
}

/// The exceptional determinant system at coupling `g2`.
pub fn exc_matrix(problem: &ExceptionalProblem, g2: f64) -> Result<ExcMatrix> {
    let params = problem.params(g2)?;
    if params.g1 == 0.0 {
        // Both pole families coincide; the enlarged system is undefined.
        return Err(RabiError::PoleCoincidence {
            family: problem.family,
            m: problem.m,
            other_n: problem.m,
        });
    }
    let energy = pole_energy(problem.family, problem.m, &params);
    check_other_family(problem, &params, energy)?;
    let g = GFunction::for_window(
        &params,
        GOptions {
            precision: Some(0),
            ..GOptions::default()
        },
        energy - 0.5,
        energy + 0.5,
    )?;
    let ctx = RecurrenceContext::with_frame(&params, g.frame.clone(), energy, g.n_max);
    let m = problem.m;
    let own_seeds: Vec<Seed> = match m {
        0 => vec![Seed::F1, Seed::EM(0)],
        1 => vec![Seed::F0, Seed::EM(1)],
        _ => vec![Seed::F0, Seed::F1, Seed::EM(m)],
    };
    let own = project_bundle(&ctx, problem.family, &own_seeds, Some(m), g.table(problem.family))?;
    let other_family = problem.family.other();
    let other = project_bundle(&ctx, other_family, &[Seed::F0, Seed::F1], None, g.table(other_family))?;

    let dim = if m >= 2 { 5 } else { 4 };
    let mut entries = SmallMatrix::zeros(dim);
    let mut col_scale = Vec::with_capacity(dim);
    let (mut tail, mut cancellation) = (0.0f64, 0.0f64);
    let columns = own
        .iter()
        .map(|p| (problem.family, p))
        .chain(other.iter().map(|p| (other_family, p)));
    for (j, (family, p)) in columns.enumerate() {
        let col = projected_column(family, p);
        for (i, v) in col.entries.iter().enumerate() {
            entries.set(i, j, *v);
        }
        if dim == 5 {
            entries.set(4, j, p.predicted_fm.unwrap_or(0.0));
        }
        col_scale.push(col.scale);
        tail = tail.max(col.tail);
        cancellation = cancellation.max(col.cancellation);
    }
    if dim == 5 {
        // The extra row is balanced against the projections; a positive
        // factor leaves the sign of the determinant alone.
        let peak = (0..dim).fold(0.0f64, |a, j| a.max(entries.get(4, j).abs()));
        if peak > 0.0 {
            for j in 0..dim {
                entries.set(4, j, entries.get(4, j) / peak);
            }
        }
    }
    Ok(ExcMatrix {
        entries,
        g2,
        energy,
        n_max: g.n_max,
        col_scale,
        tail,
        cancellation,
    })
}

/// Determinant of the column-scaled exceptional system; only its sign and
/// zeros carry meaning.
pub fn exc_g_value(problem: &ExceptionalProblem, g2: f64) -> Result<f64> {
    Ok(exc_matrix(problem, g2)?.det())
}

/// Default coupling grid: 500 points on [0.005, 0.495].
pub fn default_g2_grid() -> Vec<f64> {
    (0..500).map(|i| 0.005 + 0.49 * i as f64 / 499.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalRoot {
    pub family: Family,
    pub m: usize,
    pub g2_star: f64,
    pub energy: f64,
    /// Smallest over largest singular value of the system at the root.
    pub residual: f64,
    /// Distance from the fixed energy to the nearest converged level.
    pub oracle_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousRoot {
    pub g2: f64,
    pub energy: f64,
    pub residual: f64,
    pub oracle_gap: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalReport {
    pub problem: ExceptionalProblem,
    pub roots: Vec<ExceptionalRoot>,
    pub spurious: Vec<SpuriousRoot>,
    /// Grid points that could not be evaluated, with the reason.
    pub skipped: Vec<(f64, String)>,
}

fn sign_at(problem: &ExceptionalProblem, g2: f64) -> Result<f64> {
    let d = exc_g_value(problem, g2)?;
    if !d.is_finite() {
        return Err(RabiError::Overflow { n: 0 });
    }
    Ok(d.signum())
}

/// Sign changes of the exceptional determinant along `g2_grid`, refined by
/// bisection and checked for rank deficiency and against diagonalization.
pub fn find_exceptional_roots(problem: &ExceptionalProblem, g2_grid: &[f64]) -> Result<ExceptionalReport> {
    if g2_grid.iter().any(|&g| !(g > 0.0 && g < 0.5)) {
        return Err(RabiError::InvalidInput("g2 grid must lie inside (0, 0.5)".into()));
    }
    if g2_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RabiError::InvalidInput("g2 grid must be strictly ascending".into()));
    }
    if problem.g1 == 0.0 {
        // Coincidence at every g2, not a gap in the grid.
        return Err(RabiError::PoleCoincidence {
            family: problem.family,
            m: problem.m,
            other_n: problem.m,
        });
    }
    let signs: Vec<Result<f64>> = g2_grid.par_iter().map(|&g2| sign_at(problem, g2)).collect();
    let mut skipped = Vec::new();
    let mut brackets = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for (&g2, s) in g2_grid.iter().zip(signs) {
        match s {
            Ok(s) if s != 0.0 => {
                if let Some((g0, s0)) = last {
                    if s0 != s {
                        brackets.push((g0, g2, s0));
                    }
                }
                last = Some((g2, s));
            }
            Ok(_) => {
                last = None;
                skipped.push((g2, "determinant exactly zero".to_string()));
            }
            Err(e) => {
                // A gap in the grid: no bracket across it.
                last = None;
                skipped.push((g2, e.to_string()));
            }
        }
    }
    let refined: Vec<Result<Option<(f64, f64)>>> = brackets
        .par_iter()
        .map(|&(a, b, sa)| bisect_g2(problem, a, b, sa))
        .collect();
    let mut roots = Vec::new();
    let mut spurious = Vec::new();
    for r in refined {
        let Some((g2, residual)) = r? else { continue };
        let params = problem.params(g2)?;
        let energy = pole_energy(problem.family, problem.m, &params);
        let (levels, _) = oracle_levels_below(&params, energy + 1.0)?;
        let oracle_gap = levels.iter().map(|l| (l - energy).abs()).fold(f64::INFINITY, f64::min);
        let near_other = check_other_family_wide(problem, &params, energy);
        let reason = if let Some(n) = near_other {
            Some(format!("crosses pole n = {n} of the other family"))
        } else if residual > RANK_TOL {
            Some(format!("sign change without rank loss (ratio {residual:e})"))
        } else if oracle_gap > ORACLE_TOL {
            Some(format!("no level within {ORACLE_TOL:e} (gap {oracle_gap:e})"))
        } else {
            None
        };
        match reason {
            None => roots.push(ExceptionalRoot {
                family: problem.family,
                m: problem.m,
                g2_star: g2,
                energy,
                residual,
                oracle_gap,
            }),
            Some(reason) => spurious.push(SpuriousRoot {
                g2,
                energy,
                residual,
                oracle_gap,
                reason,
            }),
        }
    }
    Ok(ExceptionalReport {
        problem: *problem,
        roots,
        spurious,
        skipped,
    })
}

/// Index of an other-family pole within 1e−6 of `energy`, if any.
fn check_other_family_wide(problem: &ExceptionalProblem, params: &ModelParams, energy: f64) -> Option<usize> {
    let other = problem.family.other();
    let p0 = pole_energy(other, 0, params);
    let n = ((energy - p0) / params.beta()).round().max(0.0) as usize;
    (n.saturating_sub(1)..=n + 1).find(|&k| (pole_energy(other, k, params) - energy).abs() < ORACLE_TOL)
}

/// Bisection on g2; returns the midpoint and its rank ratio, or `None` if
/// the bracket hits an unevaluable point.
fn bisect_g2(problem: &ExceptionalProblem, mut a: f64, mut b: f64, sa: f64) -> Result<Option<(f64, f64)>> {
    while b - a > G2_TOL {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        match sign_at(problem, mid) {
            Ok(s) if s == 0.0 => {
                a = mid;
                b = mid;
            }
            Ok(s) if s == sa => a = mid,
            Ok(_) => b = mid,
            Err(RabiError::PoleCoincidence { .. } | RabiError::PoleProximity { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    let g2 = 0.5 * (a + b);
    // The smaller rank ratio of the two bracket ends stands for the root.
    let ratio = [a, b]
        .iter()
        .filter_map(|&g| exc_matrix(problem, g).ok())
        .map(|m| m.rank_ratio())
        .fold(f64::INFINITY, f64::min);
    Ok(Some((g2, ratio)))
}
