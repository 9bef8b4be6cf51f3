//! Coefficient series of the Bogoliubov-frame expansions at a trial energy.
//!
//! In frame A the eigenstate is `Σ √n! (f_n |n⟩_A, e_n |n⟩_A)`, in frame B
//! `Σ √n! (e′_n |n⟩_B, f′_n |n⟩_B)`. The series here store the normalized
//! amplitudes `x_n = √n! f_n` and `y_n = √n! e_n`, which stay in floating
//! point range where the raw coefficients underflow. Projection gives
//!
//! ```text
//! y_n (pole(n) − E) = (Δ/2) x_n
//! 2uv √((n+1)(n+2)) x_{n+2} = s [ (c n − E + h) x_n − (Δ/2) y_n
//!                                − 2κ (√n x_{n−1} + √(n+1) x_{n+1})
//!                                − s 2uv √(n(n−1)) x_{n−2} ]
//! ```
//!
//! with `c = (1+4g2²)/β` and, for A, `s = +1`, `κ = (u−v)² w`, `h = h_A`;
//! for B, `s = −1`, `κ = (u+v)² w′`, `h = h_B`.

use serde::{Deserialize, Serialize};

use crate::error::{RabiError, Result};
use crate::fock::OverlapTable;
use crate::model::{build_frame, pole_energy, BogoliubovFrame, Family, ModelParams};

/// Minimum |pole − E| for a regular evaluation.
pub const POLE_GUARD: f64 = 1e-8;

/// A new index gets its own log-scale once its mantissa leaves
/// [1/RESCALE_THRESHOLD, RESCALE_THRESHOLD].
pub const RESCALE_THRESHOLD: f64 = 1e100;

/// Smallest series length ever used.
pub const MIN_SERIES_LENGTH: usize = 60;

/// Extra terms used when certifying a root against truncation.
pub const CERTIFY_STEP: usize = 20;

/// Series length that drives the tail of the projected sums below 1e−17.
///
/// The summands decay like (1+β)^{−n/2}, so slow convergence near collapse
/// is met with a longer series rather than a fixed count.
pub fn auto_series_length(beta: f64) -> usize {
    let needed = 2.0 * 1e17f64.ln() / (1.0 + beta).ln();
    MIN_SERIES_LENGTH.max(needed.ceil() as usize + CERTIFY_STEP)
}

/// Linear seed of a propagated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Seed {
    /// f₀ = 1, f₁ = 0.
    F0,
    /// f₀ = 0, f₁ = 1.
    F1,
    /// Exceptional seed: f_m = 0 and e_m = 1, every other seed zero.
    EM(usize),
}

impl Seed {
    fn initial(self) -> (f64, f64) {
        match self {
            Seed::F0 => (1.0, 0.0),
            Seed::F1 => (0.0, 1.0),
            Seed::EM(_) => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecurrenceContext {
    pub params: ModelParams,
    pub frame: BogoliubovFrame,
    pub energy: f64,
    /// Highest index n of the series.
    pub n_max: usize,
    pub omega_slope: f64,
}

impl RecurrenceContext {
    pub fn new(params: &ModelParams, energy: f64, n_max: usize) -> Result<Self> {
        let frame = build_frame(params)?;
        Ok(Self::with_frame(params, frame, energy, n_max))
    }

    pub fn with_frame(params: &ModelParams, frame: BogoliubovFrame, energy: f64, n_max: usize) -> Self {
        RecurrenceContext {
            params: *params,
            omega_slope: frame.omega_slope(),
            frame,
            energy,
            n_max,
        }
    }

    /// Ω(n, E) = c n − E.
    pub fn omega(&self, n: usize) -> f64 {
        self.omega_slope * n as f64 - self.energy
    }

    fn coefficients(&self, family: Family) -> (f64, f64, f64) {
        let f = &self.frame;
        match family {
            Family::A => (1.0, (f.u - f.v).powi(2) * f.w, f.h_a),
            Family::B => (-1.0, (f.u + f.v).powi(2) * f.w_prime, f.h_b),
        }
    }
}

/// e_n from f_n through the spin-coupling equation. Works equally on the
/// normalized amplitudes.
pub fn e_from_f(n: usize, f_n: f64, ctx: &RecurrenceContext, family: Family) -> Result<f64> {
    if f_n == 0.0 {
        return Ok(0.0);
    }
    let pole = pole_energy(family, n, &ctx.params);
    let distance = pole - ctx.energy;
    if distance.abs() < POLE_GUARD {
        return Err(RabiError::PoleProximity {
            family,
            n,
            energy: ctx.energy,
            distance: distance.abs(),
        });
    }
    Ok(0.5 * ctx.params.delta * f_n / distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeries {
    pub family: Family,
    pub seed: Seed,
    /// Mantissas of √n! f_n.
    pub f: Vec<f64>,
    /// Mantissas of √n! e_n.
    pub e: Vec<f64>,
    /// Per-index log-scale: √n! f_n = f[n] · e^{log_scale[n]}.
    pub log_scale: Vec<f64>,
    /// Mantissa the recurrence assigns to √m! f_m before it is forced to
    /// zero (exceptional propagation with m ≥ 2 only), at scale log_scale[m].
    pub predicted_fm: Option<f64>,
}

impl CoefficientSeries {
    /// x_n = √n! f_n.
    pub fn x(&self, n: usize) -> f64 {
        self.f[n] * self.log_scale[n].exp()
    }

    /// y_n = √n! e_n.
    pub fn y(&self, n: usize) -> f64 {
        self.e[n] * self.log_scale[n].exp()
    }

    /// The unnormalized coefficient f_n.
    pub fn raw_f(&self, n: usize) -> f64 {
        self.f[n] * (self.log_scale[n] - 0.5 * ln_factorial(n)).exp()
    }

    /// The unnormalized coefficient e_n.
    pub fn raw_e(&self, n: usize) -> f64 {
        self.e[n] * (self.log_scale[n] - 0.5 * ln_factorial(n)).exp()
    }

    /// Residual of the five-term relation at index n, relative to the
    /// largest term entering it.
    pub fn five_term_residual(&self, ctx: &RecurrenceContext, n: usize) -> f64 {
        let (s, kappa, h) = ctx.coefficients(self.family);
        let reference = self.log_scale[n];
        let x = |k: isize| {
            if k < 0 {
                0.0
            } else {
                let k = k as usize;
                self.f[k] * (self.log_scale[k] - reference).exp()
            }
        };
        let ni = n as isize;
        let nf = n as f64;
        let uv = ctx.frame.uv;
        let terms = [
            2.0 * uv * ((nf + 1.0) * (nf + 2.0)).sqrt() * x(ni + 2),
            (ctx.omega(n) + h) * x(ni),
            0.5 * ctx.params.delta * self.e[n],
            2.0 * kappa * nf.sqrt() * x(ni - 1),
            2.0 * kappa * (nf + 1.0).sqrt() * x(ni + 1),
            2.0 * uv * (nf * (nf - 1.0)).max(0.0).sqrt() * x(ni - 2),
        ];
        let rhs = s * (terms[1] - terms[2] - terms[3] - terms[4] - s * terms[5]);
        let size = terms.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if size == 0.0 {
            0.0
        } else {
            (terms[0] - rhs).abs() / size
        }
    }
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

struct Exceptional {
    m: usize,
}

fn check_seeds(seeds: &[Seed], exc: Option<&Exceptional>) -> Result<()> {
    for seed in seeds {
        match (seed, exc) {
            (Seed::EM(k), Some(ex)) if *k == ex.m => {}
            (Seed::EM(k), _) => {
                return Err(RabiError::InvalidInput(format!(
                    "seed EM({k}) needs exceptional propagation at m = {k}"
                )))
            }
            (Seed::F0, Some(ex)) if ex.m == 0 => {
                return Err(RabiError::InvalidInput("seed F0 is dropped when m = 0".into()))
            }
            (Seed::F1, Some(ex)) if ex.m == 1 => {
                return Err(RabiError::InvalidInput("seed F1 is dropped when m = 1".into()))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Chooses the log-scale of a freshly computed index from the largest new
/// mantissa across the bundle, expressed at `base`, and normalizes them.
fn settle_scale(values: &mut [&mut f64], base: f64) -> f64 {
    let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak == 0.0 || (1.0 / RESCALE_THRESHOLD..=RESCALE_THRESHOLD).contains(&peak) {
        return base;
    }
    for v in values.iter_mut() {
        **v /= peak;
    }
    base + peak.ln()
}

fn propagate_impl(
    ctx: &RecurrenceContext,
    family: Family,
    seeds: &[Seed],
    exc: Option<Exceptional>,
) -> Result<Vec<CoefficientSeries>> {
    check_seeds(seeds, exc.as_ref())?;
    let len = ctx.n_max + 1;
    let width = len.max(2);
    let (s, kappa, h) = ctx.coefficients(family);
    let uv = ctx.frame.uv;
    let half_delta = 0.5 * ctx.params.delta;
    let mut out: Vec<CoefficientSeries> = seeds
        .iter()
        .map(|&seed| {
            let mut f = vec![0.0; width];
            let (f0, f1) = seed.initial();
            f[0] = f0;
            f[1] = f1;
            CoefficientSeries {
                family,
                seed,
                f,
                e: vec![0.0; width],
                log_scale: Vec::new(),
                predicted_fm: None,
            }
        })
        .collect();
    let mut scale = vec![0.0f64; width];
    for k in 0..len {
        let kf = k as f64;
        let on_pole = exc.as_ref().is_some_and(|ex| ex.m == k);
        for series in out.iter_mut() {
            series.e[k] = if on_pole {
                if series.seed == Seed::EM(k) {
                    (-scale[k]).exp()
                } else {
                    0.0
                }
            } else {
                e_from_f(k, series.f[k], ctx, family)?
            };
        }
        if k + 2 >= len {
            continue;
        }
        // Everything is expressed at the scale of index k + 1.
        let base = scale[k + 1];
        let rel = |j: usize| (scale[j] - base).exp();
        let (r0, rm1, rm2) = (rel(k), if k >= 1 { rel(k - 1) } else { 0.0 }, if k >= 2 { rel(k - 2) } else { 0.0 });
        let denom = 2.0 * uv * ((kf + 1.0) * (kf + 2.0)).sqrt();
        let diag = ctx.omega(k) + h;
        let c_prev = kf.sqrt();
        let c_next = (kf + 1.0).sqrt();
        let c_prev2 = (kf * (kf - 1.0)).max(0.0).sqrt();
        let forced = exc.as_ref().is_some_and(|ex| ex.m == k + 2);
        for series in out.iter_mut() {
            let x = &series.f;
            let xm1 = if k >= 1 { x[k - 1] * rm1 } else { 0.0 };
            let xm2 = if k >= 2 { x[k - 2] * rm2 } else { 0.0 };
            let num = r0 * (diag * x[k] - half_delta * series.e[k]) - 2.0 * kappa * (c_prev * xm1 + c_next * x[k + 1])
                - s * 2.0 * uv * c_prev2 * xm2;
            let next = s * num / denom;
            if !next.is_finite() {
                return Err(RabiError::Overflow { n: k + 2 });
            }
            if forced {
                series.predicted_fm = Some(next);
                series.f[k + 2] = 0.0;
            } else {
                series.f[k + 2] = next;
            }
        }
        let mut fresh: Vec<&mut f64> = out
            .iter_mut()
            .map(|series| if forced { series.predicted_fm.as_mut().unwrap() } else { &mut series.f[k + 2] })
            .collect();
        scale[k + 2] = settle_scale(&mut fresh, base);
    }
    for series in out.iter_mut() {
        series.f.truncate(len);
        series.e.truncate(len);
        series.log_scale = scale[..len].to_vec();
    }
    Ok(out)
}

/// Propagates several seeds of one family together, sharing one scale.
pub fn propagate_bundle(
    ctx: &RecurrenceContext,
    family: Family,
    seeds: &[Seed],
) -> Result<Vec<CoefficientSeries>> {
    propagate_impl(ctx, family, seeds, None)
}

pub fn propagate(ctx: &RecurrenceContext, family: Family, seed: Seed) -> Result<CoefficientSeries> {
    Ok(propagate_bundle(ctx, family, &[seed])?.remove(0))
}

/// Propagation at E = pole_energy(family, m) with f_m held at zero and e_m a
/// free amplitude. For m < 2 the seed F_m no longer exists.
pub fn propagate_exceptional(
    ctx: &RecurrenceContext,
    family: Family,
    m: usize,
    seeds: &[Seed],
) -> Result<Vec<CoefficientSeries>> {
    let pole = pole_energy(family, m, &ctx.params);
    if (pole - ctx.energy).abs() > 1e-12 * pole.abs().max(1.0) {
        return Err(RabiError::NotOnPole {
            family,
            m,
            energy: ctx.energy,
        });
    }
    if m > ctx.n_max {
        return Err(RabiError::InvalidInput(format!(
            "exceptional index {m} exceeds series length {}",
            ctx.n_max
        )));
    }
    propagate_impl(ctx, family, seeds, Some(Exceptional { m }))
}

/// Projections of one propagated seed combination onto two bare Fock states:
/// `sums = [Σ x_n o₀(n), Σ x_n o₁(n), Σ y_n o₀(n), Σ y_n o₁(n)]` with
/// `o_i(n) = ⟨projection[i] | n⟩`, all scaled by e^{−log_scale}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub seed: Seed,
    pub sums: [f64; 4],
    /// The value the recurrence assigns to √m! f_m before it is forced to
    /// zero, on the same scale as `sums`.
    pub predicted_fm: Option<f64>,
    pub log_scale: f64,
    /// Largest of the last 20 summands relative to the largest sum.
    pub tail: f64,
    /// ln of the largest summand over the largest sum: the number of
    /// e-folds lost to cancellation.
    pub cancellation: f64,
}

/// Mantissas with a shared log-scale, accumulated without overflow.
#[derive(Clone, Copy)]
struct ScaledVec {
    m: [f64; 5],
    log: f64,
}

impl ScaledVec {
    const ZERO: ScaledVec = ScaledVec { m: [0.0; 5], log: 0.0 };

    fn is_zero(&self) -> bool {
        self.m.iter().all(|&v| v == 0.0)
    }

    /// self += values · e^{log}.
    fn add(&mut self, values: [f64; 5], log: f64) {
        if values.iter().all(|&v| v == 0.0) {
            return;
        }
        if self.is_zero() {
            *self = ScaledVec { m: values, log };
        } else if log > self.log {
            let r = (self.log - log).exp();
            for (a, v) in self.m.iter_mut().zip(values) {
                *a = *a * r + v;
            }
            self.log = log;
        } else {
            let r = (log - self.log).exp();
            for (a, v) in self.m.iter_mut().zip(values) {
                *a += v * r;
            }
        }
    }
}

struct Track {
    seed: Seed,
    /// Mantissas of x_{k−2}, x_{k−1}, x_k, x_{k+1} at the start of step k.
    w: [f64; 4],
    lw: f64,
    acc: ScaledVec,
    tail_log: f64,
    peak_log: f64,
}

/// Propagates several seeds of one family and projects them on the fly.
///
/// The seeds are re-orthonormalized after every step (modified Gram-Schmidt
/// on the four-term windows, later seeds against earlier ones). Every such
/// operation adds a multiple of one seed to a later one, so determinants
/// built from the returned columns are unchanged, while seeds that would
/// otherwise be swamped by the same dominant solution stay resolved.
pub fn project_bundle(
    ctx: &RecurrenceContext,
    family: Family,
    seeds: &[Seed],
    exceptional: Option<usize>,
    table: &OverlapTable,
) -> Result<Vec<Projection>> {
    let exc = exceptional.map(|m| Exceptional { m });
    check_seeds(seeds, exc.as_ref())?;
    if table.family != family || table.n_max < ctx.n_max {
        return Err(RabiError::InvalidInput(format!(
            "overlap table ({:?}, N = {}) does not cover {family:?} up to N = {}",
            table.family, table.n_max, ctx.n_max
        )));
    }
    if let Some(m) = exceptional {
        let pole = pole_energy(family, m, &ctx.params);
        if (pole - ctx.energy).abs() > 1e-12 * pole.abs().max(1.0) {
            return Err(RabiError::NotOnPole {
                family,
                m,
                energy: ctx.energy,
            });
        }
    }
    let n_max = ctx.n_max;
    let (s, kappa, h) = ctx.coefficients(family);
    let uv = ctx.frame.uv;
    let half_delta = 0.5 * ctx.params.delta;
    let tail_start = (n_max + 1).saturating_sub(CERTIFY_STEP);
    let mut tracks: Vec<Track> = seeds
        .iter()
        .map(|&seed| {
            let (f0, f1) = seed.initial();
            Track {
                seed,
                w: [0.0, 0.0, f0, f1],
                lw: 0.0,
                acc: ScaledVec::ZERO,
                tail_log: f64::NEG_INFINITY,
                peak_log: f64::NEG_INFINITY,
            }
        })
        .collect();
    let mut predicted = vec![false; tracks.len()];
    for k in 0..=n_max {
        let kf = k as f64;
        let on_pole = exceptional == Some(k);
        let forced = exceptional.is_some_and(|m| m >= 2 && m == k + 2);
        let (o0, o1) = (table.rows[0][k], table.rows[1][k]);
        let denom = 2.0 * uv * ((kf + 1.0) * (kf + 2.0)).sqrt();
        let diag = ctx.omega(k) + h;
        let c_prev = kf.sqrt();
        let c_next = (kf + 1.0).sqrt();
        let c_prev2 = (kf * (kf - 1.0)).max(0.0).sqrt();
        for (t, pred) in tracks.iter_mut().zip(predicted.iter_mut()) {
            let x = t.w[2];
            let y = if on_pole {
                if t.seed == Seed::EM(k) {
                    (-t.lw).exp()
                } else {
                    0.0
                }
            } else {
                e_from_f(k, x, ctx, family)?
            };
            let terms = [x * o0, x * o1, y * o0, y * o1, 0.0];
            let log = t.lw + table.log_scale[k];
            t.acc.add(terms, log);
            let big = terms.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if big > 0.0 {
                let big_log = big.ln() + log;
                t.peak_log = t.peak_log.max(big_log);
                if k >= tail_start {
                    t.tail_log = t.tail_log.max(big_log);
                }
            }
            let next = if k + 2 <= n_max {
                let w = &t.w;
                let num = diag * w[2] - half_delta * y - 2.0 * kappa * (c_prev * w[1] + c_next * w[3])
                    - s * 2.0 * uv * c_prev2 * w[0];
                s * num / denom
            } else {
                0.0
            };
            if !next.is_finite() {
                return Err(RabiError::Overflow { n: k + 2 });
            }
            let next = if forced {
                t.acc.add([0.0, 0.0, 0.0, 0.0, next], t.lw);
                *pred = true;
                0.0
            } else {
                next
            };
            t.w = [t.w[1], t.w[2], t.w[3], next];
        }
        orthonormalize(&mut tracks);
    }
    Ok(tracks
        .into_iter()
        .zip(predicted)
        .map(|(t, has_pred)| {
            let peak = t.acc.m[..4].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let (sums, pred, log_scale, tail, cancellation) = if peak > 0.0 {
                let sums = [t.acc.m[0] / peak, t.acc.m[1] / peak, t.acc.m[2] / peak, t.acc.m[3] / peak];
                let total = t.acc.log + peak.ln();
                let tail = (t.tail_log - total).exp();
                (sums, t.acc.m[4] / peak, total, tail, (t.peak_log - total).max(0.0))
            } else {
                ([0.0; 4], t.acc.m[4], t.acc.log, 0.0, 0.0)
            };
            Projection {
                seed: t.seed,
                sums,
                predicted_fm: has_pred.then_some(pred),
                log_scale,
                tail,
                cancellation,
            }
        })
        .collect())
}

fn orthonormalize(tracks: &mut [Track]) {
    for i in 0..tracks.len() {
        let (done, rest) = tracks.split_at_mut(i);
        let t = &mut rest[0];
        for prev in done.iter() {
            if prev.w.iter().all(|&v| v == 0.0) {
                continue;
            }
            let alpha: f64 = t.w.iter().zip(&prev.w).map(|(a, b)| a * b).sum();
            if alpha == 0.0 {
                continue;
            }
            for (a, b) in t.w.iter_mut().zip(&prev.w) {
                *a -= alpha * b;
            }
            let shifted = prev.acc.m.map(|v| -alpha * v);
            t.acc.add(shifted, t.lw - prev.lw + prev.acc.log);
        }
        let norm = t.w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in t.w.iter_mut() {
                *v /= norm;
            }
            t.lw += norm.ln();
        }
    }
}

/// Three-term recurrence of the purely one-photon model (g2 = 0, g1 > 0),
/// where the squeeze vanishes and only the seed f₀ is free:
/// `2κ √(n+1) x_{n+1} = (n − E + h) x_n − (Δ/2) y_n − 2κ √n x_{n−1}`.
pub fn propagate_one_photon(ctx: &RecurrenceContext, family: Family) -> Result<CoefficientSeries> {
    if ctx.params.g2 != 0.0 || ctx.params.g1 == 0.0 {
        return Err(RabiError::InvalidParams(
            "the three-term recurrence needs g2 = 0 and g1 > 0".into(),
        ));
    }
    let (_, kappa, h) = ctx.coefficients(family);
    let len = ctx.n_max + 1;
    let half_delta = 0.5 * ctx.params.delta;
    let mut f = vec![0.0; len + 1];
    let mut e = vec![0.0; len];
    let mut scale = vec![0.0f64; len + 1];
    f[0] = 1.0;
    for k in 0..len {
        e[k] = e_from_f(k, f[k], ctx, family)?;
        let kf = k as f64;
        let prev = if k >= 1 { f[k - 1] * (scale[k - 1] - scale[k]).exp() } else { 0.0 };
        let mut next = ((kf - ctx.energy + h) * f[k] - half_delta * e[k] - 2.0 * kappa * kf.sqrt() * prev)
            / (2.0 * kappa * (kf + 1.0).sqrt());
        if !next.is_finite() {
            return Err(RabiError::Overflow { n: k + 1 });
        }
        scale[k + 1] = settle_scale(&mut [&mut next], scale[k]);
        f[k + 1] = next;
    }
    f.truncate(len);
    scale.truncate(len);
    Ok(CoefficientSeries {
        family,
        seed: Seed::F0,
        f,
        e,
        log_scale: scale,
        predicted_fm: None,
    })
}
