use anyhow::Result;
use cascade_core::coupling::{self, gamma_zero_scan, geometric_indices, ScanGrid};
use cascade_core::gramian::{admissibility_constant, ingham_gap_profile, obs_constant_estimate};
use cascade_core::hum::{build_modal_system, hum_solve, noninv_scan, trajectory_eval, ModalSystem};
use cascade_core::linalg::SolverOptions;
use cascade_core::spaces::{build_weights, build_weights_on, sobolev_slope, Family};
use cascade_core::spectral::{adjoint_wave_trace_eval, hyperbolic_eigenvalue, hyperbolic_eigvec_eval, is_resonant, parabolic_eigenvalue};
use cascade_core::{CascadeError, ModalVector, ModeId, SpaceTag, Truncation, Variant, WeightSequence};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{Run, Table};
use crate::row;

fn weights_table(name: &str, w: &WeightSequence) -> Table {
    let mut t = Table::new(name, &["family", "index", "weight_log", "space_tag"]);
    for (fam, idx, lw) in w.rows() {
        let f = match fam {
            Family::Parabolic => "parabolic",
            Family::Hyperbolic => "hyperbolic",
        };
        t.push(row![f, idx, lw, w.space_tag.to_string()]);
    }
    t
}

pub fn spectrum(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    let l = p.length_l;
    let sc = &cfg.spectrum;
    let mut par = Table::new("parabolic", &["n", "lambda", "resonant"]);
    let mut resonant = vec![];
    for n in 1..=sc.n_p {
        let r = is_resonant(&p, n);
        if r {
            resonant.push(n);
        }
        par.push(row![n, parabolic_eigenvalue(&p, n), r]);
    }
    let mut hyp = Table::new("hyperbolic", &["m", "lambda_re", "lambda_im"]);
    for m in -(sc.n_h as i64)..=sc.n_h as i64 {
        let z = hyperbolic_eigenvalue(&p, m);
        hyp.push(row![m, z.re, z.im]);
    }
    let grid: Vec<f64> = (0..sc.grid_points).map(|i| l * i as f64 / (sc.grid_points - 1) as f64).collect();
    let mut modes = Table::new("hyperbolic_modes", &["m", "x", "phi2_re", "phi2_im", "phi3_re", "phi3_im"]);
    for m in -(sc.n_h as i64)..=sc.n_h as i64 {
        for &x in &grid {
            let (a, b) = hyperbolic_eigvec_eval(&p, m, x)?;
            modes.push(row![m, x, a.re, a.im, b.re, b.im]);
        }
    }
    run.tables.extend([par, hyp, modes]);
    if p.variant == Variant::WaveHeat {
        let mut g = Table::new("gamma", &["n", "gamma_log", "gamma_sign", "trace_L_log", "trace_L_sign"]);
        let mut traces = Table::new("adjoint_trace", &["n", "x", "psi3_log", "psi3_sign"]);
        for n in 1..=sc.n_p {
            let gv = coupling::gamma(&p, &cfg.profile, n)?;
            let tl = adjoint_wave_trace_eval(&p, &cfg.profile, n, l)?;
            g.push(row![n, gv.value.log_magnitude, gv.sign(), tl.log_magnitude, tl.real_sign()]);
            for &x in &grid {
                let v = adjoint_wave_trace_eval(&p, &cfg.profile, n, x)?;
                traces.push(row![n, x, v.log_magnitude, v.real_sign()]);
            }
        }
        run.tables.extend([g, traces]);
    }
    let tag = match p.variant {
        Variant::WaveHeat => SpaceTag::V,
        Variant::HeatWave => SpaceTag::VHW,
    };
    match build_weights(&p, &cfg.profile, tag, &Truncation::new(sc.n_p, sc.n_h)) {
        Ok(w) => run.tables.push(weights_table("weights", &w)),
        Err(CascadeError::VanishingCoupling { mode }) => run.warn(format!("weights skipped: vanishing coupling at {mode}")),
        Err(e) => return Err(e.into()),
    }
    if !resonant.is_empty() {
        run.warn(format!("resonant parabolic modes (lambda = 0): {resonant:?}"));
    }
    run.set("resonant_modes", &resonant);
    Ok(())
}

pub fn gamma_scan(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    let g = &cfg.gamma_scan;
    let grid = if g.lattice {
        ScanGrid::uniform(p.length_l, g.lattice_count)
    } else {
        if !(g.a >= 0.0 && g.b_lo >= 0.0 && g.b_hi <= p.length_l && g.b_lo < g.b_hi) {
            return Err(ConfigError("gamma_scan.a, gamma_scan.b_lo, gamma_scan.b_hi: need 0 <= a, 0 <= b_lo < b_hi <= L".into()).into());
        }
        ScanGrid::uniform_b(g.a, g.b_lo, g.b_hi, g.b_count)
    };
    let scan = gamma_zero_scan(&p, g.beta0, &grid, g.n_max, g.refine_tol)?;
    let mut samples = Table::new("gamma_scan", &["n", "a", "b", "gamma_log_magnitude", "sign"]);
    for s in &scan.samples {
        samples.push(row![s.n, s.a, s.b, s.gamma_log_magnitude, s.sign]);
    }
    let mut zeros = Table::new("zeros", &["n", "a", "b", "bracket"]);
    for z in &scan.zeros {
        zeros.push(row![z.n, z.a, z.b, z.bracket]);
    }
    let mut unresolved = Table::new("unresolved", &["n", "a", "b"]);
    for z in &scan.unresolved {
        unresolved.push(row![z.n, z.a, z.b]);
    }
    run.tables.extend([samples, zeros, unresolved]);
    if g.lattice {
        let mut mask = Table::new("mask", &["i", "j", "a", "b", "flagged"]);
        for c in &scan.mask {
            mask.push(row![c.i, c.j, grid.a_values[c.i], grid.b_values[c.j], c.flagged]);
        }
        run.tables.push(mask);
    }
    if scan.degenerate {
        run.warn("degenerate profile: beta0 = 0, every gamma_n vanishes");
    }
    let per_n: Vec<(u32, usize)> = (1..=g.n_max).map(|n| (n, scan.zeros_for(n).len())).collect();
    run.set("zero_count_per_n", per_n);
    run.set("zeros", &scan.zeros);
    Ok(())
}

fn random_unit(rng: &mut ChaCha8Rng, modes: &[ModeId]) -> ModalVector {
    let v: Vec<Complex64> = modes.iter().map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let s = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ModalVector::from_modes(modes, &v.iter().map(|z| z / s).collect::<Vec<_>>())
}

/// Steers `pairs` random unit-norm pairs and records controls, norms and residuals.
fn steer(sys: &ModalSystem, horizon: f64, pairs: usize, seed: u64, samples: usize, opts: &SolverOptions, run: &mut Run, prefix: &str) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut control = Table::new(&format!("{prefix}control"), &["pair", "s", "u_re", "u_im"]);
    let mut traj = Table::new(&format!("{prefix}trajectory"), &["pair", "t", "h_norm", "v_norm_log", "vprime_norm_log"]);
    let mut res = Table::new(&format!("{prefix}residuals"), &["pair", "mode", "residual_abs", "relative"]);
    let mut energy = Table::new(&format!("{prefix}energy"), &["pair", "energy_log", "condition", "precision_used"]);
    let times: Vec<f64> = (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64).collect();
    let mut worst = 0.0f64;
    for pair in 0..pairs {
        let init = random_unit(&mut rng, &sys.modes);
        let target = random_unit(&mut rng, &sys.modes);
        let sol = hum_solve(sys, &init, &target, horizon, opts)?;
        run.precision(sol.precision_used);
        for w in &sol.warnings {
            run.warn(w.clone());
        }
        for &s in &times {
            let u = sol.control(s);
            control.push(row![pair, s, u.re, u.im]);
        }
        for ts in trajectory_eval(sys, &sol, &init, &times)? {
            traj.push(row![pair, ts.t, ts.h_norm, ts.v_norm.log, ts.vprime_norm.log]);
        }
        for (k, m) in sys.modes.iter().enumerate() {
            let r = sol.endpoint_residual[k].norm();
            res.push(row![pair, m.to_string(), r, r / (1.0 + target.get(*m).norm())]);
        }
        energy.push(row![pair, sol.energy_log, sol.condition, format!("{:?}", sol.precision_used)]);
        worst = worst.max(sol.max_relative_residual);
    }
    run.tables.extend([control, traj, res, energy]);
    run.set(&format!("{prefix}max_relative_residual"), worst);
    Ok(())
}

pub fn hum(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    let h = &cfg.hum;
    let sys = build_modal_system(&p, &cfg.profile, &cfg.hum_truncation())?;
    steer(&sys, p.horizon_t, h.pairs, h.seed, h.samples, &cfg.solver_options()?, run, "")
}

pub fn noninv(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    if p.variant != Variant::WaveHeat {
        return Err(ConfigError("params.variant: noninv needs wave-heat".into()).into());
    }
    let nv = &cfg.noninv;
    let scan = noninv_scan(&p, &cfg.profile, p.horizon_t, nv.t, (nv.n_lo, nv.n_hi))?;
    let mut t = Table::new("noninv", &["n", "x_log", "x_sign", "ratio_log"]);
    for q in &scan.points {
        t.push(row![q.n, q.x_value.log_magnitude, q.x_value.real_sign(), q.ratio_log]);
    }
    run.tables.push(t);
    run.set("slope", scan.slope);
    run.set("expected_slope", scan.expected_slope);
    run.set("relative_deviation", (scan.slope / scan.expected_slope - 1.0).abs());
    run.set("strictly_increasing", scan.strictly_increasing);
    Ok(())
}

fn continuum_label(t: f64, l: f64) -> &'static str {
    if t > 2.0 * l {
        "yes"
    } else {
        "no continuum meaning"
    }
}

pub fn constants(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    let c = &cfg.constants;
    let opts = cfg.solver_options()?;
    let l = p.length_l;
    let rows = ingham_gap_profile(l, &c.t_list, &c.n_list, &opts)?;
    let mut gap = Table::new(
        "ingham_gap",
        &["T", "N_p", "N_h", "min_eig", "min_eig_log", "max_eig", "precision_used", "reliable", "continuum"],
    );
    for r in &rows {
        run.precision(r.precision);
        gap.push(row![r.horizon, 0u32, r.n_h, r.min_eig, r.min_eig_log, r.max_eig, format!("{:?}", r.precision), r.reliable, continuum_label(r.horizon, l)]);
    }
    let mut obs = Table::new("obs_constant", &["T", "N_p", "N_h", "min_eig", "min_eig_log", "max_eig_log", "precision_used", "continuum"]);
    let mut adm = Table::new("admissibility", &["T", "N_p", "N_h", "K_T"]);
    for &t in &c.t_list {
        let q = p.with_horizon(t);
        let tr = Truncation::new(c.n_p, c.n_h);
        let tag = match p.variant {
            Variant::WaveHeat => SpaceTag::Vprime,
            Variant::HeatWave => SpaceTag::VHWprime,
        };
        let w = build_weights(&q, &cfg.profile, tag, &tr)?;
        match obs_constant_estimate(&q, &cfg.profile, &tr, &w, &opts) {
            Ok(e) => {
                run.precision(e.precision);
                obs.push(row![t, c.n_p, c.n_h, e.min_eig, e.min_eig_log, e.max_eig_log, format!("{:?}", e.precision), continuum_label(t, l)]);
            }
            Err(CascadeError::IllConditioned { condition, precision, .. }) => {
                run.warn(format!("C_T at T = {t}: Gram matrix below resolution (condition {condition:e} at {precision:?})"));
            }
            Err(e) => return Err(e.into()),
        }
        let a = admissibility_constant(&q, &cfg.profile, &tr, &opts)?;
        for (nh, k) in a.profile {
            adm.push(row![t, c.n_p, nh, k]);
        }
        if t <= 2.0 * l {
            run.warn(format!("T = {t} <= 2L: rows are truncation-only, no continuum meaning"));
        }
    }
    run.tables.extend([gap, obs, adm]);
    Ok(())
}

pub fn hw(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let p = cfg.system_params()?;
    if p.variant != Variant::HeatWave {
        return Err(ConfigError("params.variant: hw needs heat-wave".into()).into());
    }
    let h = &cfg.hw;
    let mut gt = Table::new("gamma_hw", &["m", "gamma_log", "scaled_re", "scaled_im", "r_re", "r_im"]);
    for m in -h.m_table..=h.m_table {
        let g = coupling::gamma_hw_scaled(&p, &cfg.profile, m)?;
        gt.push(row![m, g.log_abs_gamma(p.length_l), g.scaled_value.re, g.scaled_value.im, g.r_m.re, g.r_m.im]);
    }
    let mut ob = Table::new("obs_hw", &["mode", "b_log", "b_phase"]);
    let tr = Truncation::new(h.n_p, h.n_h);
    for m in tr.modes() {
        let b = coupling::obs_coefficient(&p, &cfg.profile, m)?.value;
        ob.push(row![m.to_string(), b.log_magnitude, b.phase]);
    }
    let idx = geometric_indices(h.m_lo.max(16), h.m_hi, 24);
    let hyp: Vec<i64> = idx.iter().flat_map(|m| [*m as i64, -(*m as i64)]).collect();
    let w = build_weights_on(&p, &cfg.profile, SpaceTag::VHW, &[], &hyp)?;
    let slope = sobolev_slope(&w, Family::Hyperbolic, (h.m_lo.max(16), h.m_hi));
    let fit = coupling::gamma_hw_exponent_fit(&p, &cfg.profile, (h.m_lo, h.m_hi))?;
    let mut ft = Table::new("exponent_fit", &["m", "scaled_gamma_sq_log"]);
    for (m, y) in &fit.points {
        ft.push(row![*m, *y]);
    }
    run.tables.extend([gt, ob, weights_table("weights_hw", &w), ft]);
    run.set("exponent_p", fit.p);
    run.set("exponent_p_lower_half", fit.lower_half_p);
    run.set("exponent_p_upper_half", fit.upper_half_p);
    run.set("super_polynomial", fit.super_polynomial);
    if fit.super_polynomial {
        run.warn(format!("Gamma_m decays faster than any power over [{}, {}]", h.m_lo, h.m_hi));
    }
    match slope {
        Ok(s) => run.set("weight_slope", s.slope),
        Err(e) => run.warn(format!("weight slope: {e}")),
    }
    let sys = build_modal_system(&p, &cfg.profile, &tr)?;
    steer(&sys, p.horizon_t, 1, h.seed, cfg.hum.samples, &cfg.solver_options()?, run, "hum_")
}

pub fn dispatch(name: &str, cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    match name {
        "spectrum" => spectrum(cfg, run),
        "gamma-scan" => gamma_scan(cfg, run),
        "hum" => hum(cfg, run),
        "noninv" => noninv(cfg, run),
        "constants" => constants(cfg, run),
        "hw" => hw(cfg, run),
        other => Err(ConfigError(format!("unknown command {other}")).into()),
    }
}
