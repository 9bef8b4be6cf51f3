//! Truncated Fock-space operators and the overlap tables ⟨m|n⟩_A, ⟨m|n⟩_B.
//!
//! The Bogoliubov number states are `|n⟩_A = S(r) D†(w) |n⟩` and
//! `|n⟩_B = S†(r) D†(w′) |n⟩` with `S(r) = exp[(r/2)(a² − a†²)]` and
//! `D(w) = exp[w (a† − a)]`.
//!
//! Two routes produce the overlap rows. [`overlap_table`] multiplies
//! truncated matrix exponentials and certifies the result by enlarging the
//! truncation. [`overlap_table_ladder`] expands the bare Fock state `|m⟩` in
//! the Bogoliubov basis through the annihilation condition `a|0⟩ = 0`, which
//! gives an exact three-term recurrence with no truncation at all. The
//! G-function uses the ladder route; the matrix route is its check.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{RabiError, Result};
use crate::linalg::expm;
use crate::model::{BogoliubovFrame, Family};

/// Rows of the table are the projections onto these bare Fock states.
pub const DEFAULT_PROJECTION: [usize; 2] = [0, 1];

/// Added to the truncation when certifying convergence.
pub const TRUNCATION_STEP: usize = 50;

#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    pub dim: usize,
    pub entries: Mat<f64>,
    pub warning: Option<String>,
}

impl TruncatedOperator {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    /// max |UᵀU − I| over the leading `block` × `block` corner.
    pub fn orthogonality_defect(&self, block: usize) -> f64 {
        let utu = self.entries.transpose() * &self.entries;
        let mut worst = 0.0f64;
        for i in 0..block {
            for j in 0..block {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((utu[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Annihilation and creation matrices on the first `m` Fock states.
pub fn ladder_matrices(m: usize) -> Result<(TruncatedOperator, TruncatedOperator)> {
    if m < 2 {
        return Err(RabiError::InvalidInput(format!(
            "Fock truncation must be at least 2, got {m}"
        )));
    }
    let lower = Mat::from_fn(m, m, |i, j| {
        if j == i + 1 {
            (j as f64).sqrt()
        } else {
            0.0
        }
    });
    let raise = lower.transpose().to_owned();
    Ok((
        TruncatedOperator {
            dim: m,
            entries: lower,
            warning: None,
        },
        TruncatedOperator {
            dim: m,
            entries: raise,
            warning: None,
        },
    ))
}

/// Fock support needed by a squeezed state with parameter `r`.
pub fn squeeze_support(r: f64) -> usize {
    (20.0 * (2.0 * r.abs()).exp()).ceil() as usize
}

/// S(r) = exp[(r/2)(a² − a†²)] on the truncated space.
pub fn squeeze_matrix(r: f64, m: usize) -> Result<TruncatedOperator> {
    let (lower, raise) = ladder_matrices(m)?;
    let a2 = &lower.entries * &lower.entries;
    let ad2 = &raise.entries * &raise.entries;
    let gen = Mat::from_fn(m, m, |i, j| 0.5 * r * (a2[(i, j)] - ad2[(i, j)]));
    let warning = (squeeze_support(r) > m).then(|| {
        format!(
            "squeeze truncation M = {m} below the recommended {} for r = {r}",
            squeeze_support(r)
        )
    });
    Ok(TruncatedOperator {
        dim: m,
        entries: expm(&gen),
        warning,
    })
}

/// D(w) = exp[w (a† − a)] on the truncated space (real displacement).
pub fn displacement_matrix(w: f64, m: usize) -> Result<TruncatedOperator> {
    let (lower, raise) = ladder_matrices(m)?;
    let gen = Mat::from_fn(m, m, |i, j| w * (raise.entries[(i, j)] - lower.entries[(i, j)]));
    let needed = (4.0 * (w * w + 1.0)).ceil() as usize + TRUNCATION_STEP;
    let warning = (needed > m).then(|| {
        format!("displacement truncation M = {m} below the recommended {needed} for w = {w}")
    });
    Ok(TruncatedOperator {
        dim: m,
        entries: expm(&gen),
        warning,
    })
}

/// Projections of two bare Fock states onto the Bogoliubov number states of
/// one family: `rows[i][n] = ⟨projection[i] | n⟩_family` for n = 0..=n_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub family: Family,
    pub n_max: usize,
    pub projection: [usize; 2],
    /// Mantissas; the overlap is `rows[i][n] · e^{log_scale[n]}`.
    pub rows: [Vec<f64>; 2],
    pub log_scale: Vec<f64>,
    /// Fock truncation of the matrix route; `None` for the ladder route.
    pub truncation: Option<usize>,
}

impl OverlapTable {
    /// Mantissas of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// ⟨projection[i] | n⟩, which may underflow for large n.
    pub fn value(&self, i: usize, n: usize) -> f64 {
        self.rows[i][n] * self.log_scale[n].exp()
    }
}

/// max(200, 8N, 20 e^{2r}).
pub fn default_truncation(frame: &BogoliubovFrame, n_max: usize) -> usize {
    200usize.max(8 * n_max).max(squeeze_support(frame.r))
}

fn family_unitary(frame: &BogoliubovFrame, family: Family, m: usize) -> Result<Mat<f64>> {
    let s = squeeze_matrix(frame.r, m)?;
    let (squeeze, disp) = match family {
        Family::A => (s.entries, displacement_matrix(frame.w, m)?.entries),
        Family::B => (
            s.entries.transpose().to_owned(),
            displacement_matrix(frame.w_prime, m)?.entries,
        ),
    };
    // D†(w) is the transpose of the real orthogonal D(w).
    Ok(&squeeze * disp.transpose())
}

fn matrix_rows(
    frame: &BogoliubovFrame,
    family: Family,
    n_max: usize,
    m: usize,
    projection: [usize; 2],
) -> Result<[Vec<f64>; 2]> {
    let u = family_unitary(frame, family, m)?;
    Ok(projection.map(|p| (0..=n_max).map(|n| u[(p, n)]).collect()))
}

/// Overlap rows from explicit truncated matrix exponentials, certified by
/// recomputing at `m + 50` and requiring every entry to agree within 1e−10.
pub fn overlap_table(
    frame: &BogoliubovFrame,
    family: Family,
    n_max: usize,
    m: usize,
) -> Result<OverlapTable> {
    if 4 * n_max >= m {
        return Err(RabiError::InvalidInput(format!(
            "overlap table needs N < M/4 (N = {n_max}, M = {m})"
        )));
    }
    let projection = DEFAULT_PROJECTION;
    let rows = matrix_rows(frame, family, n_max, m, projection)?;
    let check = matrix_rows(frame, family, n_max, m + TRUNCATION_STEP, projection)?;
    let drift = rows
        .iter()
        .zip(check.iter())
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    if drift > 1e-10 {
        return Err(RabiError::TruncationNotConverged(drift));
    }
    Ok(OverlapTable {
        family,
        n_max,
        projection,
        rows,
        log_scale: vec![0.0; n_max + 1],
        truncation: Some(m),
    })
}

/// Mantissas are kept within [1/SCALE_LIMIT, SCALE_LIMIT] by rescaling.
pub const SCALE_LIMIT: f64 = 1e100;

/// Coefficients ⟨n|_X |m⟩ for every m ≤ `m_top` and n ≤ `len`, built by the
/// ladder recurrences. Writing `a = u X + σ v X† − k` (σ = −1 for A, +1 for
/// B), `a|0⟩ = 0` gives `u√(n+1) c_{n+1} = k c_n − σ v √n c_{n−1}` and
/// `|m+1⟩ = a†|m⟩/√(m+1)` raises the bare index.
///
/// Returns mantissas per row and one log-scale per index n shared by all
/// rows, so that ⟨n|_X |m⟩ = rows[m][n] · e^{scale[n]}.
fn ladder_coefficients(
    frame: &BogoliubovFrame,
    family: Family,
    len: usize,
    m_top: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (sigma, k, disp) = match family {
        Family::A => (-1.0, (frame.u - frame.v) * frame.w, frame.w),
        Family::B => (1.0, (frame.u + frame.v) * frame.w_prime, frame.w_prime),
    };
    let (u, v) = (frame.u, frame.v);
    let total = len + m_top + 2;
    let mut base = vec![0.0; total];
    let mut scale = vec![0.0; total];
    base[0] = 1.0;
    scale[0] = -0.5 * frame.r.cosh().ln() - 0.5 * disp * disp * (1.0 + sigma * frame.tanh_r());
    for n in 0..total - 1 {
        scale[n + 1] = scale[n];
        let prev = if n > 0 { base[n - 1] * (scale[n - 1] - scale[n]).exp() } else { 0.0 };
        base[n + 1] = (k * base[n] - sigma * v * (n as f64).sqrt() * prev) / (u * ((n + 1) as f64).sqrt());
        let peak = base[n].abs().max(base[n + 1].abs());
        if peak > 0.0 && !(1.0 / SCALE_LIMIT..=SCALE_LIMIT).contains(&peak) {
            let shift = peak.ln();
            base[n] /= peak;
            base[n + 1] /= peak;
            scale[n] += shift;
            scale[n + 1] += shift;
        }
    }
    let mut out = vec![base];
    for m in 0..m_top {
        let c = &out[m];
        let width = c.len() - 1;
        let next: Vec<f64> = (0..width)
            .map(|n| {
                let prev = if n > 0 { c[n - 1] * (scale[n - 1] - scale[n]).exp() } else { 0.0 };
                let after = c[n + 1] * (scale[n + 1] - scale[n]).exp();
                (u * (n as f64).sqrt() * prev + sigma * v * ((n + 1) as f64).sqrt() * after - k * c[n])
                    / ((m + 1) as f64).sqrt()
            })
            .collect();
        out.push(next);
    }
    (out, scale)
}

/// Overlap rows from the exact ladder recurrences (no truncation).
pub fn overlap_table_ladder(
    frame: &BogoliubovFrame,
    family: Family,
    n_max: usize,
    projection: [usize; 2],
) -> OverlapTable {
    let m_top = projection[0].max(projection[1]);
    let (coeffs, scale) = ladder_coefficients(frame, family, n_max + 1, m_top);
    let rows = projection.map(|p| coeffs[p][..=n_max].to_vec());
    OverlapTable {
        family,
        n_max,
        projection,
        rows,
        log_scale: scale[..=n_max].to_vec(),
        truncation: None,
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Matrix elements ⟨m|D(β)|n⟩ for m, n < `dim`, with complex β, from the
/// associated-Laguerre closed form. Row-major.
pub fn displacement_elements(beta: Complex64, dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    let x = beta.norm_sqr();
    if x == 0.0 {
        for i in 0..dim {
            out[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        return out;
    }
    let lnf = ln_factorials(dim);
    let ln_abs = beta.norm().ln();
    let phase = beta / beta.norm();
    for d in 0..dim {
        let len = dim - d;
        // L_j^{(d)}(x), j = 0..len
        let mut lag = vec![0.0; len];
        lag[0] = 1.0;
        if len > 1 {
            lag[1] = 1.0 + d as f64 - x;
        }
        for j in 1..len.saturating_sub(1) {
            let jf = j as f64;
            lag[j + 1] = ((2.0 * jf + 1.0 + d as f64 - x) * lag[j] - (jf + d as f64) * lag[j - 1])
                / (jf + 1.0);
        }
        let rot = phase.powi(d as i32);
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        for (j, l) in lag.iter().enumerate() {
            let mag = (0.5 * (lnf[j] - lnf[j + d]) + d as f64 * ln_abs - 0.5 * x).exp() * l;
            let (lo, hi) = (j, j + d);
            // ⟨hi|D|lo⟩ carries β^d, ⟨lo|D|hi⟩ carries (−β*)^d.
            out[hi * dim + lo] = rot * mag;
            if d > 0 {
                out[lo * dim + hi] = rot.conj() * (sign * mag);
            }
        }
    }
    out
}

/// Binary cache of overlap tables.
///
/// Layout (little endian): magic `MRABIOVL`, u32 version, u8 family,
/// 3 padding bytes, u64 n_max, u64 truncation (0 for the ladder route),
/// u64 × 2 projection, f64 g1, f64 g2, then the two mantissa rows and the
/// log-scale row, n_max + 1 f64 each.
pub mod cache {
    use super::*;

    pub const MAGIC: &[u8; 8] = b"MRABIOVL";
    pub const VERSION: u32 = 2;

    pub fn key(g1: f64, g2: f64, family: Family, n_max: usize, truncation: usize) -> String {
        let mut h = Sha256::new();
        h.update(g1.to_bits().to_le_bytes());
        h.update(g2.to_bits().to_le_bytes());
        h.update([family as u8]);
        h.update((n_max as u64).to_le_bytes());
        h.update((truncation as u64).to_le_bytes());
        h.finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn path(dir: &Path, g1: f64, g2: f64, table: &OverlapTable) -> PathBuf {
        dir.join(format!(
            "{}.ovl",
            key(g1, g2, table.family, table.n_max, table.truncation.unwrap_or(0))
        ))
    }

    pub fn encode(table: &OverlapTable, g1: f64, g2: f64) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 24 * (table.n_max + 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(table.family as u8);
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&(table.n_max as u64).to_le_bytes());
        out.extend_from_slice(&(table.truncation.unwrap_or(0) as u64).to_le_bytes());
        for p in table.projection {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        out.extend_from_slice(&g1.to_le_bytes());
        out.extend_from_slice(&g2.to_le_bytes());
        for row in table.rows.iter().chain(std::iter::once(&table.log_scale)) {
            for x in row {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    fn take<const K: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; K]> {
        let end = *pos + K;
        let slice = bytes
            .get(*pos..end)
            .ok_or_else(|| RabiError::Io("truncated overlap cache".into()))?;
        *pos = end;
        Ok(slice.try_into().unwrap())
    }

    /// Returns the table together with the stored (g1, g2).
    pub fn decode(bytes: &[u8]) -> Result<(OverlapTable, f64, f64)> {
        let mut pos = 0;
        if &take::<8>(bytes, &mut pos)? != MAGIC {
            return Err(RabiError::Io("bad overlap cache magic".into()));
        }
        let version = u32::from_le_bytes(take::<4>(bytes, &mut pos)?);
        if version != VERSION {
            return Err(RabiError::Io(format!("unsupported cache version {version}")));
        }
        let family = match take::<1>(bytes, &mut pos)?[0] {
            0 => Family::A,
            1 => Family::B,
            other => return Err(RabiError::Io(format!("bad family tag {other}"))),
        };
        take::<3>(bytes, &mut pos)?;
        let n_max = u64::from_le_bytes(take::<8>(bytes, &mut pos)?) as usize;
        let truncation = u64::from_le_bytes(take::<8>(bytes, &mut pos)?) as usize;
        let p0 = u64::from_le_bytes(take::<8>(bytes, &mut pos)?) as usize;
        let p1 = u64::from_le_bytes(take::<8>(bytes, &mut pos)?) as usize;
        let g1 = f64::from_le_bytes(take::<8>(bytes, &mut pos)?);
        let g2 = f64::from_le_bytes(take::<8>(bytes, &mut pos)?);
        let mut rows = [Vec::new(), Vec::new()];
        let mut log_scale = Vec::new();
        for row in rows.iter_mut().chain(std::iter::once(&mut log_scale)) {
            for _ in 0..=n_max {
                row.push(f64::from_le_bytes(take::<8>(bytes, &mut pos)?));
            }
        }
        if pos != bytes.len() {
            return Err(RabiError::Io("trailing bytes in overlap cache".into()));
        }
        let table = OverlapTable {
            family,
            n_max,
            projection: [p0, p1],
            rows,
            log_scale,
            truncation: (truncation > 0).then_some(truncation),
        };
        Ok((table, g1, g2))
    }

    pub fn store(dir: &Path, table: &OverlapTable, g1: f64, g2: f64) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = path(dir, g1, g2, table);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(&encode(table, g1, g2))?;
        Ok(path)
    }

    /// Loads a cached table if one exists for exactly these inputs.
    pub fn load(
        dir: &Path,
        g1: f64,
        g2: f64,
        family: Family,
        n_max: usize,
        truncation: usize,
    ) -> Result<Option<OverlapTable>> {
        let path = dir.join(format!("{}.ovl", key(g1, g2, family, n_max, truncation)));
        if !path.exists() {
            return Ok(None);
        }
        let mut bytes = Vec::new();
        std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
        let (table, g1_stored, g2_stored) = decode(&bytes)?;
        let matches = g1_stored.to_bits() == g1.to_bits()
            && g2_stored.to_bits() == g2.to_bits()
            && table.family == family
            && table.n_max == n_max;
        Ok(matches.then_some(table))
    }
}
