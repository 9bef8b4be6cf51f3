//! Arbitrary-precision evaluation of the 4×4 G-matrix.
//!
//! For small g2 and sizeable g1 the projected sums of the dominant seed
//! cancel over many orders of magnitude, so double precision cannot resolve
//! the determinant. This module repeats the overlap, recurrence and
//! determinant computations in MPFR floats at a caller-chosen precision.

use std::cmp::Ordering;

use rug::float::Round;
use rug::Assign;
use rug::ops::PowAssign;
use rug::Float;

use crate::error::{RabiError, Result};
use crate::model::{Family, ModelParams};
use crate::recurrence::POLE_GUARD;

struct FamilyData {
    /// +1 for A, −1 for B.
    sign: f64,
    poles: Vec<Float>,
    /// c k + h.
    diag: Vec<Float>,
    /// 2κ √k.
    kappa_sqrt: Vec<Float>,
    /// s / (2uv √((k+1)(k+2))).
    forward: Vec<Float>,
    /// rows[i][n] = ⟨projection[i] | n⟩.
    rows: [Vec<Float>; 2],
}

/// Precomputed high-precision data at fixed parameters and series length.
pub struct PreciseG {
    pub prec: u32,
    pub n_max: usize,
    half_delta: Float,
    /// 2uv √(k(k−1)).
    back: Vec<Float>,
    families: [FamilyData; 2],
}

impl std::fmt::Debug for PreciseG {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreciseG")
            .field("prec", &self.prec)
            .field("n_max", &self.n_max)
            .finish_non_exhaustive()
    }
}

/// Sign and ln |det| of the unscaled G-matrix, plus column-normalized
/// double-precision entries (row-major) and the column log-scales.
pub struct PreciseValue {
    pub sign: f64,
    pub log_abs: f64,
    pub entries: [[f64; 4]; 4],
    pub col_scale: [f64; 4],
    /// Bits cancelled in the worst column sum plus those cancelled in the
    /// determinant.
    pub lost_bits: i64,
    /// Binary exponent of the largest of the last 20 summands relative to
    /// its column.
    pub tail_bits: i64,
}

/// Column sums with the exponent bookkeeping used to judge precision.
struct ColumnSums {
    sums: [Float; 4],
    /// Largest summand exponent.
    peak_exp: i64,
    /// Largest summand exponent among the last 20 terms.
    tail_exp: i64,
}

fn exp_of(x: &Float) -> Option<i64> {
    x.get_exp().map(i64::from)
}

fn fl(prec: u32, x: f64) -> Float {
    Float::with_val(prec, x)
}

impl PreciseG {
    pub fn new(params: &ModelParams, n_max: usize, projection: [usize; 2], prec: u32) -> Result<Self> {
        if !(0.0..0.5).contains(&params.g2) {
            return Err(RabiError::InvalidParams(format!("g2 = {} outside [0, 1/2)", params.g2)));
        }
        let p = prec;
        let g1 = fl(p, params.g1);
        let g2 = fl(p, params.g2);
        let one = fl(p, 1.0);
        let beta = Float::with_val(p, 1 - Float::with_val(p, 4 * Float::with_val(p, &g2 * &g2))).sqrt();
        let u = Float::with_val(p, Float::with_val(p, &one + &beta) / Float::with_val(p, 2 * &beta)).sqrt();
        let v = Float::with_val(p, Float::with_val(p, &one - &beta) / Float::with_val(p, 2 * &beta)).sqrt();
        let s = Float::with_val(p, &u + &v);
        let d = Float::with_val(p, &u - &v);
        let w = Float::with_val(p, &g1 / Float::with_val(p, &beta * &s));
        let w_prime = -Float::with_val(p, Float::with_val(p, &g1 * &s) / &beta);
        let uv = Float::with_val(p, &u * &v);
        let two_g2 = Float::with_val(p, 2 * &g2);
        let h_a = Float::with_val(p, &v * &v)
            + Float::with_val(p, &d * &d) * Float::with_val(p, &w * &w) * Float::with_val(p, &one - &two_g2)
            + Float::with_val(p, 2 * &g1) * &d * &w
            + Float::with_val(p, &two_g2 * &uv);
        let h_b = Float::with_val(p, &v * &v)
            + Float::with_val(p, &s * &s)
                * Float::with_val(p, &w_prime * &w_prime)
                * Float::with_val(p, &one + &two_g2)
            - Float::with_val(p, 2 * &g1) * &s * &w_prime
            + Float::with_val(p, &two_g2 * &uv);
        let slope = Float::with_val(p, Float::with_val(p, &one + Float::with_val(p, 4 * Float::with_val(p, &g2 * &g2))) / &beta);
        let len = n_max + 1;
        let m_top = projection[0].max(projection[1]);
        let total = len + m_top + 2;
        let sqrt: Vec<Float> = (0..total + 2).map(|k| Float::with_val(p, k).sqrt()).collect();
        let g1_sq = Float::with_val(p, &g1 * &g1);
        let uv2 = Float::with_val(p, 2 * &uv);
        let half_one_minus_beta = Float::with_val(p, &one - &beta) / 2;
        let make = |family: Family| -> FamilyData {
            let (sign, sigma, kk, disp, kappa, h, denom) = match family {
                Family::A => (
                    1.0,
                    -1.0,
                    Float::with_val(p, &d * &w),
                    w.clone(),
                    Float::with_val(p, &d * &d) * &w,
                    h_a.clone(),
                    Float::with_val(p, &one + &two_g2),
                ),
                Family::B => (
                    -1.0,
                    1.0,
                    Float::with_val(p, &s * &w_prime),
                    w_prime.clone(),
                    Float::with_val(p, &s * &s) * &w_prime,
                    h_b.clone(),
                    Float::with_val(p, &one - &two_g2),
                ),
            };
            let shift = Float::with_val(p, &half_one_minus_beta + Float::with_val(p, &g1_sq / &denom));
            let poles = (0..len)
                .map(|n| Float::with_val(p, Float::with_val(p, &beta * n as u32) - &shift))
                .collect();
            // Vacuum row: c₀ = (cosh r)^{−1/2} exp(−disp² (1 + σ tanh r)/2),
            // cosh r = u and tanh r = v/u.
            let tanh = Float::with_val(p, &v / &u);
            let mut expo = Float::with_val(p, &disp * &disp);
            expo *= Float::with_val(p, &one + Float::with_val(p, sigma * &tanh));
            expo /= -2;
            let mut c0 = Float::with_val(p, &u);
            c0.pow_assign(-0.5f64);
            c0 *= expo.exp();
            let mut base = vec![Float::new(p); total];
            base[0] = c0;
            for n in 0..total - 1 {
                let mut next = Float::with_val(p, &kk * &base[n]);
                if n > 0 {
                    next -= Float::with_val(p, sigma * &v) * &sqrt[n] * &base[n - 1];
                }
                next /= Float::with_val(p, &u * &sqrt[n + 1]);
                base[n + 1] = next;
            }
            let mut coeff = vec![base];
            for m in 0..m_top {
                let c = &coeff[m];
                let width = c.len() - 1;
                let next: Vec<Float> = (0..width)
                    .map(|n| {
                        let mut acc = Float::with_val(p, Float::with_val(p, sigma * &v) * &sqrt[n + 1]) * &c[n + 1];
                        if n > 0 {
                            acc += Float::with_val(p, &u * &sqrt[n]) * &c[n - 1];
                        }
                        acc -= Float::with_val(p, &kk * &c[n]);
                        acc / &sqrt[m + 1]
                    })
                    .collect();
                coeff.push(next);
            }
            let rows = projection.map(|q| coeff[q][..len].to_vec());
            let kappa2 = Float::with_val(p, 2 * kappa);
            FamilyData {
                sign,
                diag: (0..len).map(|k| Float::with_val(p, &slope * k as u32) + &h).collect(),
                kappa_sqrt: (0..len + 1).map(|k| Float::with_val(p, &kappa2 * &sqrt[k])).collect(),
                forward: (0..len)
                    .map(|k| {
                        let den = Float::with_val(p, &uv2 * &sqrt[k + 1]) * &sqrt[k + 2];
                        Float::with_val(p, sign / den)
                    })
                    .collect(),
                poles,
                rows,
            }
        };
        let families = [make(Family::A), make(Family::B)];
        let back = (0..len)
            .map(|k| {
                if k >= 2 {
                    Float::with_val(p, &uv2 * &sqrt[k]) * &sqrt[k - 1]
                } else {
                    Float::new(p)
                }
            })
            .collect();
        Ok(PreciseG {
            prec,
            n_max,
            half_delta: fl(p, params.delta) / 2,
            back,
            families,
        })
    }

    /// Columns (Σx o₀, Σx o₁, Σy o₀, Σy o₁) for seeds f₀ and f₁ of one family.
    fn columns(&self, family: Family, energy: &Float) -> Result<[ColumnSums; 2]> {
        let p = self.prec;
        let fd = &self.families[family as usize];
        let len = self.n_max + 1;
        let guard = fl(p, POLE_GUARD);
        let zero = || Float::new(p);
        let mut out: Vec<ColumnSums> = Vec::with_capacity(2);
        let (mut dist, mut y, mut num, mut tmp) = (zero(), zero(), zero(), zero());
        let tail_start = len.saturating_sub(crate::recurrence::CERTIFY_STEP);
        for seed in 0..2 {
            let mut x = vec![zero(); len.max(2)];
            x[seed] = fl(p, 1.0);
            let mut sums = [zero(), zero(), zero(), zero()];
            let mut peak_exp = i64::MIN;
            let mut tail_exp = i64::MIN;
            for k in 0..len {
                dist.assign(&fd.poles[k] - energy);
                if dist.cmp_abs(&guard) == Some(Ordering::Less) {
                    return Err(RabiError::PoleProximity {
                        family,
                        n: k,
                        energy: energy.to_f64(),
                        distance: dist.abs().to_f64(),
                    });
                }
                y.assign(&self.half_delta * &x[k]);
                y /= &dist;
                for i in 0..2 {
                    for (j, amp) in [(i, &x[k]), (2 + i, &y)] {
                        tmp.assign(amp * &fd.rows[i][k]);
                        if let Some(e) = exp_of(&tmp) {
                            peak_exp = peak_exp.max(e);
                            if k >= tail_start {
                                tail_exp = tail_exp.max(e);
                            }
                        }
                        sums[j] += &tmp;
                    }
                }
                if k + 2 >= len {
                    continue;
                }
                // s [(c k − E + h) x_k − (Δ/2) y_k − 2κ (√k x_{k−1} + √(k+1) x_{k+1})
                //    − s 2uv √(k(k−1)) x_{k−2}] / (2uv √((k+1)(k+2)))
                num.assign(&fd.diag[k] - energy);
                num *= &x[k];
                tmp.assign(&self.half_delta * &y);
                num -= &tmp;
                tmp.assign(&fd.kappa_sqrt[k + 1] * &x[k + 1]);
                num -= &tmp;
                if k >= 1 {
                    tmp.assign(&fd.kappa_sqrt[k] * &x[k - 1]);
                    num -= &tmp;
                }
                if k >= 2 {
                    tmp.assign(&self.back[k] * &x[k - 2]);
                    if fd.sign > 0.0 {
                        num -= &tmp;
                    } else {
                        num += &tmp;
                    }
                }
                num *= &fd.forward[k];
                x[k + 2].assign(&num);
            }
            out.push(ColumnSums {
                sums,
                peak_exp,
                tail_exp,
            });
        }
        let second = out.pop().unwrap();
        let first = out.pop().unwrap();
        Ok([first, second])
    }

    pub fn evaluate(&self, energy: f64) -> Result<PreciseValue> {
        let p = self.prec;
        let e = fl(p, energy);
        let a = self.columns(Family::A, &e)?;
        let b = self.columns(Family::B, &e)?;
        // Columns in the order (f₀, f₁, f′₀, f′₁).
        let mut cols: Vec<[Float; 4]> = Vec::with_capacity(4);
        let mut lost_bits = 0i64;
        let mut tail_bits = i64::MIN;
        let mut col_exp_sum = 0i64;
        for (family, pair) in [(Family::A, a), (Family::B, b)] {
            for c in pair {
                let top = c.sums.iter().filter_map(exp_of).max();
                if let Some(top) = top {
                    lost_bits = lost_bits.max(c.peak_exp - top);
                    tail_bits = tail_bits.max(c.tail_exp.saturating_sub(top));
                    col_exp_sum += top;
                }
                let [xo0, xo1, yo0, yo1] = c.sums;
                cols.push(match family {
                    Family::A => [xo0, xo1, yo0, yo1],
                    Family::B => [-yo0, -yo1, -xo0, -xo1],
                });
            }
        }
        let mut entries = [[0.0; 4]; 4];
        let mut col_scale = [0.0; 4];
        for (j, col) in cols.iter().enumerate() {
            let peak = col
                .iter()
                .map(|z| z.clone().abs())
                .fold(Float::new(p), |acc, z| if z > acc { z } else { acc });
            if peak.is_zero() {
                continue;
            }
            col_scale[j] = Float::with_val(p, peak.ln_ref()).to_f64();
            for i in 0..4 {
                entries[i][j] = Float::with_val(p, &col[i] / &peak).to_f64_round(Round::Nearest);
            }
        }
        let (sign, log_abs) = determinant(cols, p);
        if log_abs.is_finite() {
            let det_exp = (log_abs / std::f64::consts::LN_2).round() as i64;
            lost_bits += (col_exp_sum - det_exp).max(0);
        }
        Ok(PreciseValue {
            sign,
            log_abs,
            entries,
            col_scale,
            lost_bits,
            tail_bits,
        })
    }
}

/// Sign and ln |det| by Gaussian elimination with partial pivoting.
fn determinant(cols: Vec<[Float; 4]>, p: u32) -> (f64, f64) {
    let n = cols.len();
    let mut m: Vec<Vec<Float>> = (0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect();
    let mut sign = 1.0;
    let mut log_abs = 0.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| m[i][c].clone().abs().partial_cmp(&m[j][c].clone().abs()).unwrap())
            .unwrap();
        if m[pivot][c].is_zero() {
            return (0.0, f64::NEG_INFINITY);
        }
        if pivot != c {
            m.swap(pivot, c);
            sign = -sign;
        }
        let piv = m[c][c].clone();
        if piv.is_sign_negative() {
            sign = -sign;
        }
        log_abs += Float::with_val(p, piv.clone().abs().ln_ref()).to_f64();
        for r in c + 1..n {
            let factor = Float::with_val(p, &m[r][c] / &piv);
            for k in c..n {
                let t = Float::with_val(p, &factor * &m[c][k]);
                m[r][k] -= t;
            }
        }
    }
    (sign, log_abs)
}
