//! The G-function: determinant of the 4×4 system obtained by projecting the
//! frame-A and frame-B expansions of one eigenstate onto two bare Fock
//! states. Its zeros between poles are the regular eigenvalues.
//!
//! Columns follow the unknowns (f₀, f₁, f′₀, f′₁); rows are G⁽⁰'⁰⁾, G⁽⁰'¹⁾,
//! G⁽¹'⁰⁾, G⁽¹'¹⁾:
//!
//! ```text
//! G⁽⁰'ᵐ⁾ = Σ x_n ⟨m|n⟩_A − Σ y′_n ⟨m|n⟩_B
//! G⁽¹'ᵐ⁾ = Σ y_n ⟨m|n⟩_A − Σ x′_n ⟨m|n⟩_B
//! ```
//!
//! Special parameter points are handled separately: at g2 = 0 the system
//! shrinks to the 2×2 one-photon determinant, at g1 = 0 it splits into two
//! parity blocks, and at Δ = 0 or g1 = g2 = 0 the spectrum is closed form.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RabiError, Result};
use crate::fock::{overlap_table_ladder, OverlapTable, DEFAULT_PROJECTION};
use crate::linalg::SmallMatrix;
use crate::precise::PreciseG;
use crate::model::{build_frame, pole_energy, pole_gap, BogoliubovFrame, Family, ModelParams};
use crate::recurrence::{
    auto_series_length, project_bundle, propagate_one_photon, CoefficientSeries, Projection, RecurrenceContext, Seed,
    CERTIFY_STEP, POLE_GUARD,
};

/// Width (in units of the pole guard) of the excluded band around a pole.
const GUARD_FACTOR: f64 = 10.0;

/// Certified roots may move by at most this much when N grows by 20.
pub const CERTIFY_TOL: f64 = 1e-8;

/// The last 20 summands of every projected sum must stay below this
/// fraction of the largest one.
pub const TAIL_TOL: f64 = 1e-18;

/// Longest series the automatic length selection will try.
pub const MAX_SERIES_LENGTH: usize = 1 << 15;

/// Cancellation (in e-folds) beyond which the G-matrix is evaluated in
/// multiple precision.
pub const CANCELLATION_LIMIT: f64 = 8.0;

/// Bits kept beyond those lost to cancellation.
pub const GUARD_BITS: i64 = 96;

/// Ceiling on the multiple-precision mantissa.
pub const MAX_PRECISION: u32 = 1 << 14;

fn initial_bits(loss: f64) -> u32 {
    (128 + (2.0 * loss / std::f64::consts::LN_2).ceil() as u32).div_ceil(64) * 64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GOptions {
    /// Series length; `None` picks one from β.
    pub n_max: Option<usize>,
    pub projection: [usize; 2],
    /// Sampling step for root search; `None` uses 0.01, with at least 16
    /// samples between neighbouring poles.
    pub resolution: Option<f64>,
    /// Bisection stops when the bracket is narrower than this.
    pub root_tol: f64,
    /// Re-run every root with N + 20 terms.
    pub certify: bool,
    /// Mantissa bits for multiple-precision evaluation; `None` decides from
    /// the cancellation seen in double precision, `Some(0)` forces doubles.
    pub precision: Option<u32>,
}

impl Default for GOptions {
    fn default() -> Self {
        GOptions {
            n_max: None,
            projection: DEFAULT_PROJECTION,
            resolution: None,
            root_tol: 1e-12,
            certify: true,
            precision: None,
        }
    }
}

/// Which form of the spectral problem applies at a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Generic 4×4 determinant.
    Full,
    /// g2 = 0: 2×2 one-photon determinant.
    OnePhoton,
    /// g1 = 0: the 4×4 matrix is block diagonal in photon parity.
    ParityBlocks,
    /// Δ = 0: the spin blocks decouple and the spectrum is the poles.
    Decoupled,
    /// g1 = g2 = 0: E = n ± Δ/2.
    Free,
}

pub fn regime(params: &ModelParams) -> Regime {
    if params.delta == 0.0 {
        Regime::Decoupled
    } else if params.g1 == 0.0 && params.g2 == 0.0 {
        Regime::Free
    } else if params.g2 == 0.0 {
        Regime::OnePhoton
    } else if params.g1 == 0.0 {
        Regime::ParityBlocks
    } else {
        Regime::Full
    }
}

/// Default root-search sampling step.
pub fn default_resolution(params: &ModelParams) -> f64 {
    let gap = pole_gap(params);
    if gap > 0.0 {
        (0.01f64).min(gap / 8.0)
    } else {
        0.01
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMatrix {
    pub entries: SmallMatrix,
    pub energy: f64,
    pub n_max: usize,
    /// Log-scale divided out of each column.
    pub col_scale: Vec<f64>,
    /// Sum of the column log-scales.
    pub scale_log: f64,
    /// Largest of the last 20 summands relative to the largest summand.
    pub tail: f64,
    /// Worst cancellation in the projected sums, in e-folds.
    pub cancellation: f64,
    /// Sign and ln |G| from a multiple-precision evaluation.
    pub precise: Option<(f64, f64)>,
}

impl GMatrix {
    /// Determinant of the column-scaled matrix.
    pub fn det(&self) -> f64 {
        match self.precise {
            Some((sign, log_abs)) => sign * (log_abs - self.scale_log).exp(),
            None => self.entries.det(),
        }
    }

    pub fn sign(&self) -> f64 {
        match self.precise {
            Some((sign, _)) => sign,
            None => self.entries.det().signum(),
        }
    }

    /// ln |G| of the unscaled determinant.
    pub fn log_abs_det(&self) -> f64 {
        match self.precise {
            Some((_, log_abs)) => log_abs,
            None => self.entries.det().abs().ln() + self.scale_log,
        }
    }

    /// Determinant of the rows and columns listed.
    pub fn minor(&self, idx: &[usize]) -> f64 {
        sub_matrix(&self.entries, idx, idx).det()
    }

    /// Log-scale carried by the columns listed.
    pub fn minor_scale(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&j| self.col_scale[j]).sum()
    }
}

fn sub_matrix(m: &SmallMatrix, rows: &[usize], cols: &[usize]) -> SmallMatrix {
    let mut out = SmallMatrix::zeros(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out.set(i, j, m.get(r, c));
        }
    }
    out
}

/// One projected column with its log-scale and relative tail weight.
pub(crate) struct Column {
    pub entries: [f64; 4],
    pub scale: f64,
    pub tail: f64,
    pub cancellation: f64,
}

/// Fills the four entries of a column from a propagated series. The sums
/// Σ x_n ⟨m|n⟩ are formed at a common scale, the largest summand.
pub(crate) fn column_entries(series: &CoefficientSeries, table: &OverlapTable) -> Column {
    let len = series.f.len().min(table.n_max + 1);
    let (amp0, amp1) = match series.family {
        Family::A => (&series.f, &series.e),
        Family::B => (&series.e, &series.f),
    };
    let mantissas = [(amp0, 0), (amp0, 1), (amp1, 0), (amp1, 1)];
    let term_log = |n: usize| series.log_scale[n] + table.log_scale[n];
    let mut peak = f64::NEG_INFINITY;
    for &(amp, i) in &mantissas {
        for n in 0..len {
            let t = (amp[n] * table.rows[i][n]).abs();
            if t > 0.0 {
                peak = peak.max(t.ln() + term_log(n));
            }
        }
    }
    if !peak.is_finite() {
        return Column {
            entries: [0.0; 4],
            scale: 0.0,
            tail: 0.0,
            cancellation: 0.0,
        };
    }
    let tail_start = len.saturating_sub(CERTIFY_STEP);
    let mut tail = 0.0f64;
    let mut entries = [0.0; 4];
    for (slot, &(amp, i)) in entries.iter_mut().zip(&mantissas) {
        let row = &table.rows[i];
        let mut acc = 0.0;
        for n in 0..len {
            let t = amp[n] * row[n] * (term_log(n) - peak).exp();
            if n >= tail_start {
                tail = tail.max(t.abs());
            }
            acc += t;
        }
        *slot = if series.family == Family::B { -acc } else { acc };
    }
    let largest = entries.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Column {
        entries,
        scale: peak,
        tail,
        cancellation: if largest > 0.0 { (-largest.ln()).max(0.0) } else { 0.0 },
    }
}

/// G-matrix column from an on-the-fly projection.
pub(crate) fn projected_column(family: Family, p: &Projection) -> Column {
    let [xo0, xo1, yo0, yo1] = p.sums;
    let entries = match family {
        Family::A => [xo0, xo1, yo0, yo1],
        Family::B => [-yo0, -yo1, -xo0, -xo1],
    };
    Column {
        entries,
        scale: p.log_scale,
        tail: p.tail,
        cancellation: p.cancellation,
    }
}

/// One determinant whose sign changes mark eigenvalues: the index set
/// selects rows and columns of the 4×4 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    All,
    Even,
    Odd,
}

impl Channel {
    fn indices(self) -> &'static [usize] {
        match self {
            Channel::All => &[0, 1, 2, 3],
            Channel::Even => &[0, 2],
            Channel::Odd => &[1, 3],
        }
    }
}

/// G-function evaluator at fixed parameters and series length.
#[derive(Debug, Clone)]
pub struct GFunction {
    pub params: ModelParams,
    pub frame: BogoliubovFrame,
    pub regime: Regime,
    pub n_max: usize,
    pub opts: GOptions,
    tables: [OverlapTable; 2],
    precise: Option<Arc<PreciseG>>,
}

impl GFunction {
    /// Evaluator with the requested series length, or one chosen by
    /// [`GFunction::for_window`] over the lowest few levels.
    pub fn new(params: &ModelParams, opts: GOptions) -> Result<Self> {
        let lb = ground_state_lower_bound(params);
        GFunction::for_window(params, opts, lb, lb + 4.0)
    }

    /// Evaluator whose series length, unless fixed in `opts`, is grown from
    /// the β-based estimate until the summand tails at energies across
    /// [lo, hi] fall below [`TAIL_TOL`].
    pub fn for_window(params: &ModelParams, opts: GOptions, lo: f64, hi: f64) -> Result<Self> {
        if params.epsilon != 0.0 {
            return Err(RabiError::InvalidParams(
                "the G-function is defined for the unbiased model (epsilon = 0)".into(),
            ));
        }
        let frame = build_frame(params)?;
        if let Some(n) = opts.n_max {
            if opts.precision.is_none() {
                // Fixed length: still decide the arithmetic from the window.
                let g = GFunction::build(params, frame, GOptions { precision: Some(0), ..opts }, n)?;
                let probes: Vec<f64> = (0..5)
                    .map(|i| nudge_off_poles(params, lo + (hi - lo) * (0.1 + 0.2 * i as f64)))
                    .collect();
                let loss = probes
                    .iter()
                    .filter_map(|&e| g.matrix(e).ok().map(|m| m.cancellation))
                    .fold(0.0, f64::max);
                if loss > CANCELLATION_LIMIT {
                    return g.with_precision(initial_bits(loss))?.refine_precision(&probes, false);
                }
                return Ok(GFunction { opts, ..g });
            }
            return GFunction::build(params, frame, opts, n);
        }
        let mut n = auto_series_length(frame.beta);
        let probes: Vec<f64> = (0..5)
            .map(|i| nudge_off_poles(params, lo + (hi - lo) * (0.1 + 0.2 * i as f64)))
            .collect();
        loop {
            let g = GFunction::build(params, frame.clone(), opts, n)?;
            if matches!(g.regime, Regime::Decoupled | Regime::Free) {
                return Ok(g);
            }
            let (tail, loss) = probes
                .par_iter()
                .filter_map(|&e| g.matrix(e).ok().map(|m| (m.tail, m.cancellation)))
                .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            if tail < TAIL_TOL {
                if opts.precision.is_none() && loss > CANCELLATION_LIMIT {
                    return g.with_precision(initial_bits(loss))?.refine_precision(&probes, true);
                }
                return Ok(g);
            }
            if n >= MAX_SERIES_LENGTH {
                return Err(RabiError::ConvergenceFailure(format!(
                    "projected sums not converged at N = {n} (tail {tail:e})"
                )));
            }
            n = (n + n / 4).min(MAX_SERIES_LENGTH);
        }
    }

    /// Raises the working precision until the bits cancelled at every probe
    /// leave [`GUARD_BITS`] to spare, and, when `grow` is set, lengthens the
    /// series until the tails measured in that precision fall below
    /// [`TAIL_TOL`]. Double-precision estimates saturate near 36 e-folds of
    /// cancellation, so only the multiple-precision sums can say how much
    /// was really lost.
    fn refine_precision(self, probes: &[f64], grow: bool) -> Result<Self> {
        let tail_bits = TAIL_TOL.log2().floor() as i64;
        let mut g = self;
        loop {
            let Some(pg) = g.precise.clone() else {
                return Ok(g);
            };
            let values: Vec<_> = probes.par_iter().filter_map(|&e| pg.evaluate(e).ok()).collect();
            let lost = values.iter().map(|v| v.lost_bits).max().unwrap_or(0);
            let tail = values.iter().map(|v| v.tail_bits).max().unwrap_or(i64::MIN);
            let need = (lost + GUARD_BITS).max(0) as u32;
            if need > pg.prec {
                let bits = (need + need / 4).div_ceil(64) * 64;
                if bits > MAX_PRECISION {
                    return Err(RabiError::ConvergenceFailure(format!(
                        "{lost} bits cancelled in the projected sums at N = {}",
                        g.n_max
                    )));
                }
                g = g.with_precision(bits)?;
                continue;
            }
            if grow && tail > tail_bits {
                if g.n_max >= MAX_SERIES_LENGTH {
                    return Err(RabiError::ConvergenceFailure(format!(
                        "projected sums not converged at N = {}",
                        g.n_max
                    )));
                }
                let n = (g.n_max + g.n_max / 4).min(MAX_SERIES_LENGTH);
                g = g.with_n_max(n)?;
                continue;
            }
            return Ok(g);
        }
    }

    fn build(params: &ModelParams, frame: BogoliubovFrame, opts: GOptions, n_max: usize) -> Result<Self> {
        if n_max < 4 {
            return Err(RabiError::InvalidInput(format!("series length {n_max} too short")));
        }
        let tables = [
            overlap_table_ladder(&frame, Family::A, n_max, opts.projection),
            overlap_table_ladder(&frame, Family::B, n_max, opts.projection),
        ];
        let reg = regime(params);
        let precise = match opts.precision {
            Some(bits) if bits > 0 && matches!(reg, Regime::Full | Regime::ParityBlocks) => {
                Some(Arc::new(PreciseG::new(params, n_max, opts.projection, bits)?))
            }
            _ => None,
        };
        Ok(GFunction {
            params: *params,
            frame,
            regime: reg,
            n_max,
            opts,
            tables,
            precise,
        })
    }

    /// Same evaluator with multiple-precision determinants at `bits` bits
    /// (0 for plain doubles).
    pub fn with_precision(&self, bits: u32) -> Result<Self> {
        GFunction::build(
            &self.params,
            self.frame.clone(),
            GOptions {
                precision: Some(bits),
                ..self.opts
            },
            self.n_max,
        )
    }

    /// Mantissa bits of the multiple-precision path, if active.
    pub fn precision(&self) -> Option<u32> {
        self.precise.as_ref().map(|p| p.prec)
    }

    /// Same parameters with a different series length.
    pub fn with_n_max(&self, n_max: usize) -> Result<Self> {
        GFunction::build(&self.params, self.frame.clone(), self.opts, n_max)
    }

    pub fn table(&self, family: Family) -> &OverlapTable {
        &self.tables[family as usize]
    }

    fn context(&self, energy: f64) -> RecurrenceContext {
        RecurrenceContext::with_frame(&self.params, self.frame.clone(), energy, self.n_max)
    }

    pub fn check_poles(&self, energy: f64) -> Result<()> {
        for family in [Family::A, Family::B] {
            let n = nearest_pole_index(family, energy, &self.params, self.n_max);
            let distance = (pole_energy(family, n, &self.params) - energy).abs();
            if distance < POLE_GUARD {
                return Err(RabiError::PoleProximity {
                    family,
                    n,
                    energy,
                    distance,
                });
            }
        }
        Ok(())
    }

    /// The G-matrix at `energy`: 4×4 in general, 2×2 for the one-photon
    /// reduction (rows G⁽⁰'⁰⁾, G⁽¹'⁰⁾, columns f₀, f′₀).
    pub fn matrix(&self, energy: f64) -> Result<GMatrix> {
        self.check_poles(energy)?;
        let ctx = self.context(energy);
        match self.regime {
            Regime::OnePhoton => {
                let mut m = SmallMatrix::zeros(2);
                let mut cols = Vec::with_capacity(2);
                for (j, family) in [Family::A, Family::B].into_iter().enumerate() {
                    let s = propagate_one_photon(&ctx, family)?;
                    let col = column_entries(&s, self.table(family));
                    m.set(0, j, col.entries[0]);
                    m.set(1, j, col.entries[2]);
                    cols.push(col);
                }
                Ok(self.assemble(m, energy, cols))
            }
            Regime::Free => Err(RabiError::InvalidParams(
                "g1 = g2 = 0 has no G-function; the spectrum is n ± Δ/2".into(),
            )),
            _ if self.precise.is_some() => {
                let v = self.precise.as_ref().unwrap().evaluate(energy)?;
                let mut m = SmallMatrix::zeros(4);
                for (i, row) in v.entries.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        m.set(i, j, *x);
                    }
                }
                Ok(GMatrix {
                    entries: m,
                    energy,
                    n_max: self.n_max,
                    col_scale: v.col_scale.to_vec(),
                    scale_log: v.col_scale.iter().sum(),
                    tail: 0.0,
                    cancellation: 0.0,
                    precise: Some((v.sign, v.log_abs)),
                })
            }
            _ => {
                let mut m = SmallMatrix::zeros(4);
                let mut cols = Vec::with_capacity(4);
                for (k, family) in [Family::A, Family::B].into_iter().enumerate() {
                    let bundle = project_bundle(&ctx, family, &[Seed::F0, Seed::F1], None, self.table(family))?;
                    for (j, p) in bundle.iter().enumerate() {
                        let col = projected_column(family, p);
                        for (i, v) in col.entries.iter().enumerate() {
                            m.set(i, 2 * k + j, *v);
                        }
                        cols.push(col);
                    }
                }
                Ok(self.assemble(m, energy, cols))
            }
        }
    }

    fn assemble(&self, entries: SmallMatrix, energy: f64, cols: Vec<Column>) -> GMatrix {
        let col_scale: Vec<f64> = cols.iter().map(|c| c.scale).collect();
        GMatrix {
            entries,
            energy,
            n_max: self.n_max,
            scale_log: col_scale.iter().sum(),
            col_scale,
            tail: cols.iter().fold(0.0, |a, c| a.max(c.tail)),
            cancellation: cols.iter().fold(0.0, |a, c| a.max(c.cancellation)),
            precise: None,
        }
    }

    /// Sign of G at `energy`; the magnitude carries the column scales only
    /// through [`GMatrix::scale_log`].
    pub fn value(&self, energy: f64) -> Result<f64> {
        Ok(self.matrix(energy)?.det())
    }

    /// Sign and ln |value| of one channel determinant.
    pub fn channel_value(&self, energy: f64, channel: Channel) -> Result<(f64, f64)> {
        let g = self.matrix(energy)?;
        match (self.regime, channel) {
            (Regime::OnePhoton, _) | (_, Channel::All) => Ok((g.sign(), g.log_abs_det())),
            (_, ch) => {
                let idx = ch.indices();
                let d = g.minor(idx);
                Ok((d.signum(), d.abs().ln() + g.minor_scale(idx)))
            }
        }
    }

    pub fn channels(&self) -> Vec<Channel> {
        match self.regime {
            Regime::ParityBlocks => vec![Channel::Even, Channel::Odd],
            _ => vec![Channel::All],
        }
    }
}

fn nearest_pole_index(family: Family, energy: f64, params: &ModelParams, n_max: usize) -> usize {
    let p0 = pole_energy(family, 0, params);
    let beta = params.beta();
    let n = ((energy - p0) / beta).round();
    n.clamp(0.0, n_max.max(1) as f64 * 4.0) as usize
}

pub fn g_matrix(energy: f64, params: &ModelParams, n_max: usize) -> Result<GMatrix> {
    GFunction::new(
        params,
        GOptions {
            n_max: Some(n_max),
            ..GOptions::default()
        },
    )?
    .matrix(energy)
}

pub fn g_value(energy: f64, params: &ModelParams, n_max: usize) -> Result<f64> {
    Ok(g_matrix(energy, params, n_max)?.det())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub energy: f64,
    pub sign: i8,
    /// ln |G|, including the column scales.
    pub log_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScan {
    pub points: Vec<ScanPoint>,
    pub poles: Vec<(f64, Family, usize)>,
    pub n_max: usize,
}

/// All poles of both families inside [lo, hi], sorted.
pub fn poles_in(params: &ModelParams, lo: f64, hi: f64) -> Vec<(f64, Family, usize)> {
    let mut out = Vec::new();
    if params.beta() <= 0.0 {
        return out;
    }
    for family in [Family::A, Family::B] {
        let mut n = 0;
        loop {
            let p = pole_energy(family, n, params);
            if p > hi {
                break;
            }
            if p >= lo {
                out.push((p, family, n));
            }
            n += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Grid evaluation of G on [lo, hi] skipping points within the pole guard.
pub fn scan(params: &ModelParams, lo: f64, hi: f64, resolution: f64, opts: GOptions) -> Result<SpectralScan> {
    if !(lo < hi) || !(resolution > 0.0) {
        return Err(RabiError::InvalidInput(format!(
            "scan needs lo < hi and a positive step (got {lo}, {hi}, {resolution})"
        )));
    }
    let g = GFunction::for_window(params, opts, lo, hi)?;
    let count = ((hi - lo) / resolution).floor() as usize + 1;
    let points: Vec<ScanPoint> = (0..count)
        .into_par_iter()
        .filter_map(|i| {
            let e = lo + i as f64 * resolution;
            let m = g.matrix(e).ok()?;
            let d = m.sign();
            Some(ScanPoint {
                energy: e,
                sign: if d > 0.0 {
                    1
                } else if d < 0.0 {
                    -1
                } else {
                    0
                },
                log_abs: m.log_abs_det(),
            })
        })
        .collect();
    Ok(SpectralScan {
        points,
        poles: poles_in(params, lo, hi),
        n_max: g.n_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub energy: f64,
    /// Sign-change bracket the root was refined from.
    pub bracket: (f64, f64),
    /// Width of the final bisection interval.
    pub residual: f64,
    pub n_used: usize,
    /// |root(N+20) − root(N)|; zero for closed-form branches.
    pub drift: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub params: ModelParams,
    pub window: (f64, f64),
    pub regime: Regime,
    pub roots: Vec<Root>,
    pub poles_a: Vec<f64>,
    pub poles_b: Vec<f64>,
    pub n_max: usize,
}

impl Spectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.energy).collect()
    }
}

/// Rigorous lower bound on the ground-state energy: the Δ = 0 ground
/// energy minus ‖(Δ/2)σ_x‖.
pub fn ground_state_lower_bound(params: &ModelParams) -> f64 {
    pole_energy(Family::A, 0, params).min(pole_energy(Family::B, 0, params)) - 0.5 * params.delta
}

fn sample_interval(a: f64, b: f64, a_is_pole: bool, b_is_pole: bool, resolution: f64) -> Vec<f64> {
    let guard = GUARD_FACTOR * POLE_GUARD;
    let lo = if a_is_pole { a + guard } else { a };
    let hi = if b_is_pole { b - guard } else { b };
    if !(lo < hi) {
        return Vec::new();
    }
    let len = hi - lo;
    let k = 16usize.max((len / resolution).ceil() as usize);
    let mut pts: Vec<f64> = (0..=k).map(|i| lo + len * i as f64 / k as f64).collect();
    for j in 2..=10 {
        let d = len * 10f64.powi(-j);
        if d <= guard {
            break;
        }
        if a_is_pole {
            pts.push(lo + d);
        }
        if b_is_pole {
            pts.push(hi - d);
        }
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    pts
}

struct Sample {
    e: f64,
    sign: f64,
    log_abs: f64,
}

fn evaluate(g: &GFunction, channel: Channel, e: f64) -> Result<Sample> {
    let (sign, log_abs) = g.channel_value(e, channel)?;
    Ok(Sample { e, sign, log_abs })
}

fn bisect(g: &GFunction, channel: Channel, mut a: f64, mut b: f64, sign_a: f64, tol: f64) -> Result<(f64, f64)> {
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let s = evaluate(g, channel, m)?.sign;
        if s == sign_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b), b - a))
}

/// Looks for a hidden pair of roots inside a valley of |G| between two
/// samples of equal sign. Returns a point of opposite sign if one exists.
fn probe_valley(g: &GFunction, channel: Channel, a: f64, b: f64, sign: f64) -> Result<Option<f64>> {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (a, b);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = evaluate(g, channel, c)?;
    let mut fd = evaluate(g, channel, d)?;
    for _ in 0..60 {
        for s in [&fc, &fd] {
            if s.sign != sign && s.sign != 0.0 {
                return Ok(Some(s.e));
            }
        }
        if hi - lo < 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc.log_abs < fd.log_abs {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = evaluate(g, channel, c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = evaluate(g, channel, d)?;
        }
    }
    Ok(None)
}

/// Sign-change brackets of one channel on the sample set.
fn brackets(g: &GFunction, channel: Channel, pts: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let samples: Vec<Sample> = pts
        .par_iter()
        .map(|&e| evaluate(g, channel, e))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for w in samples.windows(2) {
        if w[0].sign != w[1].sign && w[0].sign != 0.0 {
            out.push((w[0].e, w[1].e, w[0].sign));
        }
    }
    for w in samples.windows(3) {
        let valley = w[0].sign == w[1].sign
            && w[1].sign == w[2].sign
            && w[1].log_abs < w[0].log_abs
            && w[1].log_abs < w[2].log_abs;
        if valley {
            if let Some(x) = probe_valley(g, channel, w[0].e, w[2].e, w[1].sign)? {
                out.push((w[0].e, x, w[0].sign));
                out.push((x, w[2].e, -w[0].sign));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    Ok(out)
}

fn closed_form_roots(params: &ModelParams, lo: f64, hi: f64, regime: Regime) -> Vec<Root> {
    let mut energies: Vec<f64> = match regime {
        Regime::Decoupled => poles_in(params, lo, hi).into_iter().map(|p| p.0).collect(),
        Regime::Free => {
            let mut v = Vec::new();
            let half = 0.5 * params.delta;
            let mut n = 0usize;
            while n as f64 - half <= hi {
                for e in [n as f64 - half, n as f64 + half] {
                    if e >= lo && e <= hi {
                        v.push(e);
                    }
                }
                n += 1;
            }
            v
        }
        _ => unreachable!(),
    };
    energies.sort_by(|a, b| a.total_cmp(b));
    energies
        .into_iter()
        .map(|e| Root {
            energy: e,
            bracket: (e, e),
            residual: 0.0,
            n_used: 0,
            drift: 0.0,
            channel: Channel::All,
        })
        .collect()
}

/// Regular eigenvalues in [lo, hi] as zeros of the G-function, searched
/// only between consecutive poles of both families.
pub fn find_roots(params: &ModelParams, lo: f64, hi: f64, opts: GOptions) -> Result<Spectrum> {
    if !(lo < hi) {
        return Err(RabiError::InvalidInput(format!("empty window [{lo}, {hi}]")));
    }
    let poles = poles_in(params, lo - 1.0, hi + 1.0);
    for &(p, family, n) in &poles {
        for end in [lo, hi] {
            if (end - p).abs() < POLE_GUARD {
                return Err(RabiError::PoleProximity {
                    family,
                    n,
                    energy: end,
                    distance: (end - p).abs(),
                });
            }
        }
    }
    let reg = regime(params);
    let poles_a: Vec<f64> = poles.iter().filter(|p| p.1 == Family::A && p.0 >= lo && p.0 <= hi).map(|p| p.0).collect();
    let poles_b: Vec<f64> = poles.iter().filter(|p| p.1 == Family::B && p.0 >= lo && p.0 <= hi).map(|p| p.0).collect();
    if matches!(reg, Regime::Decoupled | Regime::Free) {
        return Ok(Spectrum {
            params: *params,
            window: (lo, hi),
            regime: reg,
            roots: closed_form_roots(params, lo, hi, reg),
            poles_a,
            poles_b,
            n_max: 0,
        });
    }
    let g = GFunction::for_window(params, opts, lo.max(ground_state_lower_bound(params)), hi)?;
    let certifier = if opts.certify {
        Some(g.with_n_max(g.n_max + CERTIFY_STEP)?)
    } else {
        None
    };
    // Every inter-pole interval gets at least 16 samples, which already
    // resolves the narrow A-B intervals at better than pole_gap/8.
    let resolution = opts.resolution.unwrap_or(0.01);
    let start = lo.max(ground_state_lower_bound(params) - 1e-9);
    let mut roots = Vec::new();
    if start < hi {
        // Interval ends: window ends and every distinct pole inside.
        let mut ends: Vec<(f64, bool)> = vec![(start, false)];
        for &(p, _, _) in &poles {
            if p > start && p < hi && ends.last().is_none_or(|l| p - l.0 > 0.0) {
                ends.push((p, true));
            }
        }
        ends.push((hi, false));
        for pair in ends.windows(2) {
            let ((a, a_pole), (b, b_pole)) = (pair[0], pair[1]);
            let pts = sample_interval(a, b, a_pole, b_pole, resolution);
            if pts.len() < 2 {
                continue;
            }
            for channel in g.channels() {
                for (x0, x1, sign0) in brackets(&g, channel, &pts)? {
                    let (e, width) = bisect(&g, channel, x0, x1, sign0, opts.root_tol)?;
                    let drift = match &certifier {
                        Some(c) => certify(c, channel, x0, x1, e, opts.root_tol)?,
                        None => 0.0,
                    };
                    roots.push(Root {
                        energy: e,
                        bracket: (x0, x1),
                        residual: width,
                        n_used: g.n_max,
                        drift,
                        channel,
                    });
                }
            }
        }
    }
    roots.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(Spectrum {
        params: *params,
        window: (lo, hi),
        regime: reg,
        roots,
        poles_a,
        poles_b,
        n_max: g.n_max,
    })
}

/// Re-locates a root with the longer series: the sign must still change
/// within ±CERTIFY_TOL of `e` (inside the original bracket), and the drift
/// is the distance to the refined zero.
fn certify(c: &GFunction, channel: Channel, x0: f64, x1: f64, e: f64, tol: f64) -> Result<f64> {
    let a = (e - CERTIFY_TOL).max(x0);
    let b = (e + CERTIFY_TOL).min(x1);
    let s0 = evaluate(c, channel, a)?.sign;
    let s1 = evaluate(c, channel, b)?.sign;
    if s0 == s1 {
        return Err(RabiError::UnstableRoot {
            energy: e,
            drift: f64::INFINITY,
            extra: CERTIFY_STEP,
        });
    }
    let (e2, _) = bisect(c, channel, a, b, s0, tol)?;
    Ok((e2 - e).abs())
}

/// Lowest `k` regular eigenvalues.
pub fn lowest_levels(params: &ModelParams, k: usize, opts: GOptions) -> Result<Spectrum> {
    let lo = ground_state_lower_bound(params) - 0.1;
    let lo = nudge_off_poles(params, lo);
    let mut width = (k as f64 + 2.0) * params.beta().max(0.05) + params.delta + 1.0;
    loop {
        let hi = nudge_off_poles(params, lo + width);
        let mut s = find_roots(params, lo, hi, opts)?;
        if s.roots.len() >= k || width > 1e4 {
            s.roots.truncate(k);
            return Ok(s);
        }
        width *= 2.0;
    }
}

fn nudge_off_poles(params: &ModelParams, e: f64) -> f64 {
    let mut e = e;
    for _ in 0..10 {
        let near = poles_in(params, e - 2.0 * POLE_GUARD, e + 2.0 * POLE_GUARD);
        if near.is_empty() {
            break;
        }
        e += 1e-6;
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g2: f64,
    pub levels: Vec<f64>,
    pub poles_a: Vec<f64>,
    pub poles_b: Vec<f64>,
    pub error: Option<String>,
}

/// Lowest `k` levels and the first `k` poles of each family at every g2.
/// Failures at single points are recorded and the sweep continues.
pub fn spectrum_sweep(base: &ModelParams, g2_grid: &[f64], k: usize, opts: GOptions) -> Vec<SweepRow> {
    g2_grid
        .par_iter()
        .map(|&g2| {
            let params = base.with_g2(g2);
            let poles = |f| (0..k).map(|n| pole_energy(f, n, &params)).collect();
            let result = params
                .validate(Default::default())
                .and_then(|_| lowest_levels(&params, k, opts));
            let (levels, error) = match result {
                Ok(s) => (s.energies(), None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            SweepRow {
                g2,
                levels,
                poles_a: poles(Family::A),
                poles_b: poles(Family::B),
                error,
            }
        })
        .collect()
}
