//! One function per command: compute, then tabulate.

use mixed_rabi::diag::{converged_levels_below, default_truncation, ground_state, HamiltonianSpec};
use mixed_rabi::dynamics::{dynamics_truncation, fidelity_series, sweep_order_parameters};
use mixed_rabi::effective::{compare_spectra, effective_ground_state, effective_params, magnetization_curve};
use mixed_rabi::exceptional::{default_g2_grid, find_exceptional_roots, ExceptionalProblem};
use mixed_rabi::gfunction::{find_roots, ground_state_lower_bound, scan, spectrum_sweep, GOptions};
use mixed_rabi::model::{build_frame, collapse_limits, pole_energy, pole_gap, Family, ModelParams, ParamLimits};
use mixed_rabi::observables::{default_wigner_axes, reduced_field_density, wigner};

use crate::config::{CommandKind, Grid, ModelChoice, RunConfig};
use crate::output::{Outcome, Table};
use crate::CliError;

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        CommandKind::Frame => frame(cfg),
        CommandKind::Gcurve => gcurve(cfg),
        CommandKind::Spectrum => spectrum(cfg),
        CommandKind::Sweep => sweep(cfg),
        CommandKind::Exceptional => exceptional(cfg),
        CommandKind::Diag => diag(cfg),
        CommandKind::Effective => effective(cfg),
        CommandKind::Dynamics => dynamics(cfg),
        CommandKind::Wigner => wigner_cmd(cfg),
        CommandKind::Transmission => transmission(cfg),
        CommandKind::OrderParams => order_params(cfg),
    }
}

fn params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    let p = &cfg.params;
    Ok(ModelParams::with_bias(p.delta, p.g1, p.g2, p.epsilon)?)
}

fn g_options(cfg: &RunConfig) -> GOptions {
    let n = &cfg.numeric;
    GOptions {
        n_max: n.n_max,
        resolution: n.resolution,
        root_tol: n.root_tol,
        precision: n.precision,
        ..GOptions::default()
    }
}

/// The configured window, or four units above the ground-state bound.
fn window(cfg: &RunConfig, params: &ModelParams) -> (f64, f64) {
    match cfg.numeric.window {
        Some([lo, hi]) => (lo, hi),
        None => {
            let lb = ground_state_lower_bound(params);
            (lb, lb + 4.0)
        }
    }
}

fn grid_or(grid: Option<Grid>, default: Grid) -> Vec<f64> {
    grid.unwrap_or(default).values()
}

fn frame(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let f = build_frame(&p)?;
    let k = cfg.numeric.levels.unwrap_or(5);
    let mut out = Outcome::default();
    let mut t = Table::new("frame", vec!["quantity", "value"], serde_json::json!({ "frame": f }));
    let scalars = [
        ("beta", f.beta),
        ("u", f.u),
        ("v", f.v),
        ("w", f.w),
        ("w_prime", f.w_prime),
        ("r", f.r),
        ("h_a", f.h_a),
        ("h_b", f.h_b),
        ("uv", f.uv),
        ("pole_gap", pole_gap(&p)),
        ("collapse_a", collapse_limits(p.g1).finite_a),
    ];
    for (name, v) in scalars {
        t.push(vec![name.into(), v.into()]);
        out.summary.push(format!("{name:>12} = {v:.16e}"));
    }
    let mut poles = Vec::new();
    for family in [Family::A, Family::B] {
        for n in 0..k {
            let e = pole_energy(family, n, &p);
            t.push(vec![format!("pole_{family}_{n}").into(), e.into()]);
            out.summary.push(format!("{:>12} = {e:.16e}", format!("pole_{family}_{n}")));
            poles.push(serde_json::json!({ "family": family, "n": n, "energy": e }));
        }
    }
    t.json["poles"] = serde_json::Value::Array(poles);
    t.json["pole_gap"] = pole_gap(&p).into();
    out.warnings.extend(f.conditioning_warning());
    out.tables.push(t);
    Ok(out)
}

fn gcurve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let (lo, hi) = window(cfg, &p);
    let step = cfg.numeric.resolution.unwrap_or(1e-3);
    let s = scan(&p, lo, hi, step, g_options(cfg))?;
    let mut out = Outcome::default();
    out.truncation("n_max", s.n_max);
    let mut t = Table::new("gcurve", vec!["E", "G_sign", "G_log_magnitude"], &s);
    for pt in &s.points {
        t.push(vec![pt.energy.into(), (pt.sign as i64).into(), pt.log_abs.into()]);
    }
    let mut poles = Table::new("poles", vec!["family", "n", "E"], &s.poles);
    for (e, family, n) in &s.poles {
        poles.push(vec![family.to_string().into(), (*n).into(), (*e).into()]);
    }
    out.summary.push(format!("{} samples on [{lo}, {hi}], {} poles, N = {}", s.points.len(), s.poles.len(), s.n_max));
    out.tables.extend([t, poles]);
    Ok(out)
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let (lo, hi) = window(cfg, &p);
    let s = find_roots(&p, lo, hi, g_options(cfg))?;
    let mut out = Outcome::default();
    out.truncation("n_max", s.n_max);
    out.note("regime", s.regime);
    let mut t = Table::new("spectrum", vec!["level_index", "E", "channel", "drift", "n_used"], &s);
    for (i, r) in s.roots.iter().enumerate() {
        t.push(vec![
            i.into(),
            r.energy.into(),
            format!("{:?}", r.channel).to_lowercase().into(),
            r.drift.into(),
            r.n_used.into(),
        ]);
        out.summary.push(format!("E_{i} = {:.16e}", r.energy));
    }
    out.tables.push(t);
    Ok(out)
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let k = cfg.numeric.levels.unwrap_or(6);
    let grid = grid_or(cfg.numeric.g2_grid, Grid::new(0.0, 0.48, 97));
    let rows = spectrum_sweep(&p, &grid, k, g_options(cfg));
    let mut out = Outcome::default();
    let mut levels = Table::new("sweep", vec!["g2", "level_index", "E"], &rows);
    let mut poles = Table::new("poles", vec!["g2", "family", "n", "E"], ());
    for r in &rows {
        for (i, e) in r.levels.iter().enumerate() {
            levels.push(vec![r.g2.into(), i.into(), (*e).into()]);
        }
        for (family, list) in [(Family::A, &r.poles_a), (Family::B, &r.poles_b)] {
            for (n, e) in list.iter().enumerate() {
                poles.push(vec![r.g2.into(), family.to_string().into(), n.into(), (*e).into()]);
            }
        }
        if let Some(e) = &r.error {
            out.warnings.push(format!("g2 = {}: {e}", r.g2));
        }
    }
    poles.json = levels.json.clone();
    out.summary.push(format!("{} g2 points, {} levels each", rows.len(), k));
    out.tables.extend([levels, poles]);
    Ok(out)
}

fn exceptional(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = &cfg.numeric;
    let problem = ExceptionalProblem {
        family: n.family.expect("validated"),
        m: n.m.expect("validated"),
        delta: cfg.params.delta,
        g1: cfg.params.g1,
    };
    let grid = n.g2_grid.map(|g| g.values()).unwrap_or_else(default_g2_grid);
    let report = find_exceptional_roots(&problem, &grid)?;
    let mut out = Outcome::default();
    let mut t = Table::new("exceptional", vec!["family", "m", "g2_star", "energy", "oracle_gap"], &report);
    for r in &report.roots {
        t.push(vec![
            r.family.to_string().into(),
            r.m.into(),
            r.g2_star.into(),
            r.energy.into(),
            r.oracle_gap.into(),
        ]);
        out.summary.push(format!("g2* = {:.16e}  E = {:.16e}", r.g2_star, r.energy));
    }
    for s in &report.spurious {
        out.warnings.push(format!("spurious sign change at g2 = {}: {}", s.g2, s.reason));
    }
    for (g2, why) in &report.skipped {
        out.warnings.push(format!("g2 = {g2} skipped: {why}"));
    }
    out.note("unknowns", problem.unknowns());
    out.summary.push(format!("{} exceptional roots", report.roots.len()));
    out.tables.push(t);
    Ok(out)
}

fn diag(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    p.validate(ParamLimits::default())?;
    let (lo, hi) = window(cfg, &p);
    let m0 = cfg.numeric.truncation.unwrap_or_else(|| default_truncation(p.g2));
    let (levels, m) = converged_levels_below(HamiltonianSpec::Full(p), hi, m0)?;
    let levels: Vec<f64> = levels.into_iter().filter(|&e| e >= lo).collect();
    let mut out = Outcome::default();
    out.truncation("fock_truncation", m);
    let mut t = Table::new("diag", vec!["level_index", "E"], serde_json::json!({ "levels": levels, "truncation": m }));
    for (i, e) in levels.iter().enumerate() {
        t.push(vec![i.into(), (*e).into()]);
        out.summary.push(format!("E_{i} = {e:.16e}"));
    }
    out.tables.push(t);
    Ok(out)
}

fn effective(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let grid = grid_or(cfg.numeric.g2_grid, Grid::new(0.0, 0.45, 46));
    let rows = magnetization_curve(p.delta, p.g1, &grid)?;
    let mut out = Outcome::default();
    let mut t = Table::new(
        "effective",
        vec!["g2", "epsilon_eff", "omega_eff", "g1_eff", "M_full", "M_eff"],
        &rows,
    );
    for r in &rows {
        let e = effective_params(&p.with_g2(r.g2));
        t.push(vec![
            r.g2.into(),
            e.epsilon_eff.into(),
            e.omega_eff.into(),
            e.g1_eff.into(),
            r.full.into(),
            r.effective.into(),
        ]);
    }
    out.note("effective_params", effective_params(&p));
    out.summary.push(format!("{} g2 points", rows.len()));
    out.tables.push(t);
    Ok(out)
}

fn dynamics(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let t_max = cfg.numeric.t_max.unwrap_or(20.0);
    let step = cfg.numeric.t_step.unwrap_or(0.02);
    let count = (t_max / step + 1e-9).floor() as usize + 1;
    let times: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
    let table = fidelity_series(&p, &times, cfg.numeric.truncation)?;
    let mut out = Outcome::default();
    out.truncation("fock_truncation", table.m);
    out.truncation("default_truncation", dynamics_truncation(&p));
    out.warnings.extend(table.warnings.iter().cloned());
    let mut t = Table::new("dynamics", vec!["t", "F_eff", "F_1P"], &table);
    for i in 0..table.times.len() {
        t.push(vec![table.times[i].into(), table.f_eff[i].into(), table.f_1p[i].into()]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    out.note("mean_F_eff", mean(&table.f_eff));
    out.note("mean_F_1P", mean(&table.f_1p));
    out.summary.push(format!(
        "mean F_eff = {:.6}, mean F_1P = {:.6} over {} times",
        mean(&table.f_eff),
        mean(&table.f_1p),
        table.times.len()
    ));
    out.tables.push(t);
    Ok(out)
}

fn wigner_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let model = cfg.numeric.model.unwrap_or(ModelChoice::Full);
    let (_, psi) = match model {
        ModelChoice::Full => ground_state(&p, cfg.numeric.truncation)?,
        ModelChoice::Effective => effective_ground_state(&p)?,
    };
    let (re, im) = match cfg.numeric.alpha_grid {
        Some(g) => (g.values(), g.values()),
        None => default_wigner_axes(),
    };
    let w = wigner(&reduced_field_density(&psi), &re, &im);
    let mut out = Outcome::default();
    out.truncation("fock_truncation", psi.m);
    out.warnings.extend(psi.leakage_warning());
    out.warnings.extend(w.warning.clone());
    out.note("normalization", w.normalization());
    let mut t = Table::new("wigner", vec!["alpha_re", "alpha_im", "W"], &w);
    for (i, x) in w.alpha_re.iter().enumerate() {
        for (j, y) in w.alpha_im.iter().enumerate() {
            t.push(vec![(*x).into(), (*y).into(), w.get(i, j).into()]);
        }
    }
    out.summary.push(format!("{} points, normalization {:.6}", w.values.len(), w.normalization()));
    out.tables.push(t);
    Ok(out)
}

fn transmission(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = params(cfg)?;
    let k = cfg.numeric.levels.unwrap_or(3);
    let grid = grid_or(cfg.numeric.eps_grid, Grid::new(-3.0, 3.0, 121));
    let table = compare_spectra(&p, &grid, k)?;
    let mut out = Outcome::default();
    out.note("symmetry_point", table.symmetry_point);
    out.note("omega_eff", table.omega_eff);
    let mut t = Table::new("transmission", vec!["epsilon", "model", "n", "delta_E"], &table);
    for r in &table.rows {
        t.push(vec![r.epsilon.into(), r.model.to_string().into(), r.n.into(), r.delta_e.into()]);
    }
    out.summary.push(format!(
        "{} rows, effective symmetry point epsilon = {:.6}",
        table.rows.len(),
        table.symmetry_point
    ));
    out.tables.push(t);
    Ok(out)
}

fn order_params(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g2_list = cfg.numeric.g2_list.clone().unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.4]);
    let ratios = grid_or(cfg.numeric.ratio_grid, Grid::new(0.0, 2.0, 41));
    let rows = sweep_order_parameters(cfg.params.delta, &g2_list, &ratios)?;
    let mut out = Outcome::default();
    let mut t = Table::new("order_params", vec!["ratio", "g2", "M", "N_ph"], &rows);
    for r in &rows {
        t.push(vec![r.ratio.into(), r.g2.into(), r.magnetization.into(), r.photon_number.into()]);
        if let Some(w) = &r.warning {
            out.warnings.push(format!("ratio {} g2 {}: {w}", r.ratio, r.g2));
        }
    }
    out.summary.push(format!("{} points", rows.len()));
    out.tables.push(t);
    Ok(out)
}
