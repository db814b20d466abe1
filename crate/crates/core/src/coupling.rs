//! Coupling coefficients `gamma_n` (wave-heat) and `Gamma_m` (heat-wave),
//! boundary observation coefficients and the `(a, b)` zero-set scan.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CascadeError, Result};
use crate::quadrature::{self, QuadOptions};
use crate::scaled::{log_abs_sinh, log_sum_exp, ScaledComplex};
use crate::spectral::{
    hyperbolic_eigenvalue, is_resonant, parabolic_eigenvalue, CouplingProfile, ModeId, SystemParams, Variant,
};

/// A coupling coefficient counts as zero below this fraction of `int |beta| |sinh|`.
pub const VANISHING_RELATIVE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMethod {
    ClosedFormIndicator,
    ClosedFormConstant,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaValue {
    pub n: u32,
    pub value: ScaledComplex,
    pub method: GammaMethod,
    /// Relative error estimate (zero for closed forms).
    pub est_error: f64,
    /// `ln int_0^L |beta(s)| |sinh(lambda s)| ds`, the natural size of `gamma_n`.
    pub log_scale: f64,
}

impl GammaValue {
    pub fn is_vanishing(&self) -> bool {
        self.value.is_zero() || self.value.log_magnitude - self.log_scale < VANISHING_RELATIVE.ln()
    }

    pub fn sign(&self) -> f64 {
        self.value.real_sign()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaHW {
    pub m: i64,
    /// `e^{-r_m L} Gamma_m`.
    pub scaled_value: Complex64,
    pub r_m: Complex64,
    pub est_error: f64,
    /// `ln` of an upper bound of `|scaled_value|` used for the vanishing test.
    pub log_scale: f64,
}

impl GammaHW {
    pub fn log_abs_gamma(&self, l: f64) -> f64 {
        self.scaled_value.norm().ln() + self.r_m.re * l
    }

    pub fn is_vanishing(&self) -> bool {
        let a = self.scaled_value.norm();
        a == 0.0 || a.ln() - self.log_scale < VANISHING_RELATIVE.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsCoefficient {
    pub mode: ModeId,
    pub value: ScaledComplex,
}

/// `ln int_a^b |sinh(lambda s)| ds` for `0 <= a < b` (with `s` in place of sinh when `lambda = 0`).
fn log_int_abs_sinh(lam: f64, a: f64, b: f64) -> f64 {
    let al = lam.abs();
    if al == 0.0 {
        return (0.5 * (b * b - a * a)).ln();
    }
    // (cosh(|l| b) - cosh(|l| a)) / |l| = 2 sinh(|l|(a+b)/2) sinh(|l|(b-a)/2) / |l|
    LN_2 + log_abs_sinh(0.5 * al * (a + b)) + log_abs_sinh(0.5 * al * (b - a)) - al.ln()
}

fn gamma_log_scale(params: &SystemParams, profile: &CouplingProfile, lam: f64) -> f64 {
    let l = params.length_l;
    match profile.indicator_pieces(l) {
        Some(pieces) => log_sum_exp(
            pieces
                .iter()
                .filter(|(v, a, b)| *v != 0.0 && b > a)
                .map(|(v, a, b)| v.abs().ln() + log_int_abs_sinh(lam, *a, *b)),
        ),
        None => {
            let (lo, hi) = profile.support(l);
            if hi <= lo || profile.is_zero() {
                f64::NEG_INFINITY
            } else {
                profile.max_abs().ln() + log_int_abs_sinh(lam, lo, hi)
            }
        }
    }
}

fn effective_lambda(params: &SystemParams, n: u32) -> f64 {
    if is_resonant(params, n) {
        0.0
    } else {
        parabolic_eigenvalue(params, n)
    }
}

/// `gamma_n = int_0^L beta(s) sin(n pi s / L) sinh(lambda_{1,n} s) ds` by adaptive
/// quadrature with `e^{|lambda| s_end}` factored out.
pub fn gamma_quadrature(params: &SystemParams, profile: &CouplingProfile, n: u32) -> Result<GammaValue> {
    let l = params.length_l;
    let lam = effective_lambda(params, n);
    let k = n as f64 * PI / l;
    let log_scale = gamma_log_scale(params, profile, lam);
    let (lo, hi) = profile.support(l);
    if hi <= lo || profile.is_zero() {
        return Ok(GammaValue {
            n,
            value: ScaledComplex::ZERO,
            method: GammaMethod::Quadrature,
            est_error: 0.0,
            log_scale,
        });
    }
    let al = lam.abs();
    let sg = lam.signum();
    let mut extra = profile.breakpoints(l);
    if al > 0.0 {
        let mut d = 1.0 / al;
        while d < hi - lo {
            extra.push(hi - d);
            d *= 2.0;
        }
    }
    let nodes = quadrature::panel_nodes(lo, hi, &extra, PI / k);
    let bmax = profile.max_abs();
    let (r, shift) = if al == 0.0 {
        let opts = QuadOptions::scaled(bmax * hi * (hi - lo));
        let r = quadrature::integrate(|s| Complex64::new(profile.eval(s) * (k * s).sin() * s, 0.0), &nodes, &opts)?;
        (r, 0.0)
    } else {
        let opts = QuadOptions::scaled(bmax * (1.0 / al).min(hi - lo));
        let r = quadrature::integrate(
            |s| {
                // sinh(lam s) e^{-|lam| hi} = sign(lam) e^{|lam| (s - hi)} (1 - e^{-2 |lam| s}) / 2
                let sh = sg * (al * (s - hi)).exp() * (-(-2.0 * al * s).exp_m1()) * 0.5;
                Complex64::new(profile.eval(s) * (k * s).sin() * sh, 0.0)
            },
            &nodes,
            &opts,
        )?;
        (r, al * hi)
    };
    let value = ScaledComplex::from_real(r.value.re).scale_log(shift);
    let est_error = if r.value.re == 0.0 { 0.0 } else { r.error / r.value.re.abs() };
    Ok(GammaValue {
        n,
        value,
        method: GammaMethod::Quadrature,
        est_error,
        log_scale,
    })
}

/// Closed-form `gamma_n` for `beta = beta0` on `[a, b]`, zero elsewhere.
pub fn gamma_indicator_closed(params: &SystemParams, a: f64, b: f64, beta0: f64, n: u32) -> GammaValue {
    let l = params.length_l;
    let lam = effective_lambda(params, n);
    let k = n as f64 * PI / l;
    let log_scale = if beta0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        beta0.abs().ln() + log_int_abs_sinh(lam, a, b)
    };
    let value = indicator_value(lam, k, a, b, beta0);
    GammaValue {
        n,
        value,
        method: GammaMethod::ClosedFormIndicator,
        est_error: 0.0,
        log_scale,
    }
}

fn indicator_value(lam: f64, k: f64, a: f64, b: f64, beta0: f64) -> ScaledComplex {
    if beta0 == 0.0 {
        return ScaledComplex::ZERO;
    }
    if lam == 0.0 {
        let v = -beta0 / k * (b * (k * b).cos() - a * (k * a).cos()) + beta0 / (k * k) * ((k * b).sin() - (k * a).sin());
        return ScaledComplex::from_real(v);
    }
    let al = lam.abs();
    let sg = lam.signum();
    // Hyperbolic functions of lam*b and lam*a, all multiplied by e^{-|lam| b}.
    let e2b = (-2.0 * al * b).exp();
    let sinh_b = sg * (-(-2.0 * al * b).exp_m1()) * 0.5;
    let cosh_b = (1.0 + e2b) * 0.5;
    let ea = (al * (a - b)).exp();
    let eab = (-al * (a + b)).exp();
    let sinh_a = sg * (ea - eab) * 0.5;
    let cosh_a = (ea + eab) * 0.5;
    let bracket = -k * sinh_b * (k * b).cos() + k * sinh_a * (k * a).cos() + lam * cosh_b * (k * b).sin()
        - lam * cosh_a * (k * a).sin();
    ScaledComplex::from_real(beta0 * bracket / (lam * lam + k * k)).scale_log(al * b)
}

/// Closed-form `gamma_n` for `beta = beta0` on the whole interval.
pub fn gamma_constant_closed(params: &SystemParams, beta0: f64, n: u32) -> GammaValue {
    let l = params.length_l;
    let lam = effective_lambda(params, n);
    let k = n as f64 * PI / l;
    let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
    let log_scale = if beta0 == 0.0 {
        f64::NEG_INFINITY
    } else {
        beta0.abs().ln() + log_int_abs_sinh(lam, 0.0, l)
    };
    let value = if beta0 == 0.0 {
        ScaledComplex::ZERO
    } else if lam == 0.0 {
        ScaledComplex::from_real(-parity * beta0 * l * l / (n as f64 * PI))
    } else {
        let mu = -lam; // k^2 - c
        let sign = parity * beta0.signum() * mu.signum();
        ScaledComplex::from_signed_log(sign, beta0.abs().ln() + k.ln() - (mu * mu + k * k).ln() + log_abs_sinh(mu * l))
    };
    GammaValue {
        n,
        value,
        method: GammaMethod::ClosedFormConstant,
        est_error: 0.0,
        log_scale,
    }
}

/// `gamma_n` by the cheapest exact route for the profile kind.
pub fn gamma(params: &SystemParams, profile: &CouplingProfile, n: u32) -> Result<GammaValue> {
    let l = params.length_l;
    match profile {
        CouplingProfile::Constant { beta0 } => Ok(gamma_constant_closed(params, *beta0, n)),
        CouplingProfile::Indicator { beta0, a, b } => Ok(gamma_indicator_closed(params, *a, b.min(l), *beta0, n)),
        CouplingProfile::PiecewiseConstant { pieces } => {
            let lam = effective_lambda(params, n);
            let k = n as f64 * PI / l;
            let value: ScaledComplex = pieces.iter().map(|p| indicator_value(lam, k, p.a, p.b.min(l), p.value)).sum();
            Ok(GammaValue {
                n,
                value,
                method: GammaMethod::ClosedFormIndicator,
                est_error: 0.0,
                log_scale: gamma_log_scale(params, profile, lam),
            })
        }
        CouplingProfile::Sampled { .. } => gamma_quadrature(params, profile, n),
    }
}

/// Principal square root of `conj(lambda_{2,m}) - c`.
pub fn r_m(params: &SystemParams, m: i64) -> Complex64 {
    let z = hyperbolic_eigenvalue(params, m).conj() - params.reaction_c;
    let r = z.sqrt();
    if r.re == 0.0 && r.im < 0.0 {
        -r
    } else {
        r
    }
}

/// `e^{-r_m L} Gamma_m` with `Gamma_m = int_0^L beta(s) sinh(lambda_{2,m} s) sinh(conj(r_m) s) ds`.
pub fn gamma_hw_scaled(params: &SystemParams, profile: &CouplingProfile, m: i64) -> Result<GammaHW> {
    let l = params.length_l;
    let r = r_m(params, m);
    let rc = r.conj();
    let w = hyperbolic_eigenvalue(params, m).im;
    let (lo, hi) = profile.support(l);
    let bmax = profile.max_abs();
    // Bound: max|beta| int_lo^hi cosh(Re r s) e^{-Re r L} ds.
    let rr = r.re;
    let log_scale = if hi <= lo || bmax == 0.0 {
        f64::NEG_INFINITY
    } else if rr == 0.0 {
        bmax.ln() + (hi - lo).ln()
    } else {
        // (sinh(rr hi) - sinh(rr lo)) / rr = 2 cosh(rr (hi+lo)/2) sinh(rr (hi-lo)/2) / rr
        bmax.ln() + LN_2 + crate::scaled::log_cosh(0.5 * rr * (hi + lo)) + log_abs_sinh(0.5 * rr * (hi - lo))
            - rr.ln()
            - rr * l
    };
    if hi <= lo || profile.is_zero() {
        return Ok(GammaHW {
            m,
            scaled_value: Complex64::new(0.0, 0.0),
            r_m: r,
            est_error: 0.0,
            log_scale,
        });
    }
    let phase = Complex64::new(0.0, -2.0 * r.im * l).exp();
    let freq = w.abs() + r.im.abs() + rr;
    let mut extra = profile.breakpoints(l);
    if rr > 0.0 {
        let mut d = 1.0 / rr;
        while d < hi - lo {
            extra.push(hi - d);
            d *= 2.0;
        }
    }
    let nodes = quadrature::panel_nodes(lo, hi, &extra, PI / freq.max(PI / l));
    let l1 = bmax * if rr > 0.0 { (1.0 / rr).min(hi - lo) } else { hi - lo };
    let r_int = quadrature::integrate(
        |s| {
            // sinh(i w s) = i sin(w s); sinh(conj(r) s) e^{-r L} split into two decaying exponentials.
            let sh = Complex64::new(0.0, (w * s).sin());
            let grow = (rc * (s - l)).exp() * phase;
            let decay = (-rc * s - r * l).exp();
            profile.eval(s) * sh * (grow - decay) * 0.5
        },
        &nodes,
        &QuadOptions::scaled(l1),
    )?;
    let est_error = if r_int.value.norm() == 0.0 { 0.0 } else { r_int.error / r_int.value.norm() };
    Ok(GammaHW {
        m,
        scaled_value: r_int.value,
        r_m: r,
        est_error,
        log_scale,
    })
}

/// Boundary observation coefficient `B^* psi` of the adjoint eigenvector for `mode`.
pub fn obs_coefficient(params: &SystemParams, profile: &CouplingProfile, mode: ModeId) -> Result<ObsCoefficient> {
    let value = match params.variant {
        Variant::WaveHeat => match mode {
            ModeId::Parabolic(n) => {
                let g = gamma(params, profile, n)?;
                wh_parabolic_obs(params, n, g.value)
            }
            ModeId::Hyperbolic(m) => wh_hyperbolic_obs(params, m),
        },
        Variant::HeatWave => match mode {
            ModeId::Parabolic(n) => hw_parabolic_obs(params, n),
            ModeId::Hyperbolic(m) => hw_hyperbolic_obs(params, &gamma_hw_scaled(params, profile, m)?),
        },
    };
    Ok(ObsCoefficient { mode, value })
}

/// `sqrt(2/L) gamma_n / (lambda cosh(lambda L))`, or `sqrt(2/L) gamma_n` at resonance.
pub fn wh_parabolic_obs(params: &SystemParams, n: u32, gamma: ScaledComplex) -> ScaledComplex {
    let l = params.length_l;
    let norm = ScaledComplex::from_real((2.0 / l).sqrt());
    let lam = effective_lambda(params, n);
    if lam == 0.0 {
        return norm * gamma;
    }
    norm * gamma / (ScaledComplex::from_real(lam) * ScaledComplex::cosh(Complex64::new(lam * l, 0.0)))
}

/// `psi^3_{2,m}(L) = -conj(lambda) (2 sqrt(L) / (|2m+1| pi)) sinh(conj(lambda) L)`,
/// which reduces to `sign(2m+1) (-1)^m / sqrt(L)`.
pub fn wh_hyperbolic_obs(params: &SystemParams, m: i64) -> ScaledComplex {
    let sign = if 2 * m + 1 > 0 { 1.0 } else { -1.0 } * if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    ScaledComplex::from_real(sign / params.length_l.sqrt())
}

pub fn hw_parabolic_obs(params: &SystemParams, n: u32) -> ScaledComplex {
    let l = params.length_l;
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    ScaledComplex::from_real(sign * (2.0 / l).sqrt() * n as f64 * PI / l)
}

/// `Gamma_m / (sqrt(L) sinh(conj(r_m) L))` from the scaled pair.
pub fn hw_hyperbolic_obs(params: &SystemParams, g: &GammaHW) -> ScaledComplex {
    let l = params.length_l;
    let rc = g.r_m.conj();
    // Gamma / sinh(conj r L) = 2 S e^{2 i Im(r) L} / (1 - e^{-2 conj(r) L})
    let num = g.scaled_value * 2.0 * Complex64::new(0.0, 2.0 * g.r_m.im * l).exp();
    let den = Complex64::new(1.0, 0.0) - (-2.0 * rc * l).exp();
    ScaledComplex::from_complex(num / (den * l.sqrt()))
}

/// Lattice for the zero scan. Points with `a >= b` are outside the admissible set and skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
}

impl ScanGrid {
    pub fn uniform_b(a: f64, b_lo: f64, b_hi: f64, count: usize) -> Self {
        ScanGrid {
            a_values: vec![a],
            b_values: (0..count).map(|j| b_lo + (b_hi - b_lo) * j as f64 / (count - 1).max(1) as f64).collect(),
        }
    }

    pub fn uniform(l: f64, count: usize) -> Self {
        let v: Vec<f64> = (0..count).map(|j| l * j as f64 / (count - 1).max(1) as f64).collect();
        ScanGrid {
            a_values: v.clone(),
            b_values: v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub n: u32,
    pub a: f64,
    pub b: f64,
    pub gamma_log_magnitude: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoint {
    pub n: u32,
    pub a: f64,
    pub b: f64,
    /// Width of the final bracket along the edge.
    pub bracket: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFlag {
    pub i: usize,
    pub j: usize,
    /// Some `gamma_n` changes sign on the cell: candidate loss of controllability.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroScan {
    pub samples: Vec<ScanSample>,
    pub zeros: Vec<ZeroPoint>,
    /// Local minima of `|gamma_n| / scale` below `1e-6` with no sign change around them.
    pub unresolved: Vec<ZeroPoint>,
    pub mask: Vec<CellFlag>,
    pub degenerate: bool,
}

impl ZeroScan {
    pub fn zeros_for(&self, n: u32) -> Vec<ZeroPoint> {
        self.zeros.iter().copied().filter(|z| z.n == n).collect()
    }
}

fn indicator_gamma_at(params: &SystemParams, beta0: f64, n: u32, a: f64, b: f64) -> GammaValue {
    gamma_indicator_closed(params, a, b, beta0, n)
}

fn sign_of(g: &GammaValue) -> i8 {
    g.sign() as i8
}

/// Scans `gamma_n` for indicator profiles over an `(a, b)` lattice.
pub fn gamma_zero_scan(params: &SystemParams, beta0: f64, grid: &ScanGrid, n_max: u32, refine_tol: f64) -> Result<ZeroScan> {
    if n_max < 1 {
        return Err(CascadeError::invalid("n_max", "must be at least 1"));
    }
    if !(refine_tol > 0.0) {
        return Err(CascadeError::invalid("refine_tol", "must be positive"));
    }
    let l = params.length_l;
    let tol = 1e-14 * l;
    for v in grid.a_values.iter().chain(&grid.b_values) {
        if *v < -tol || *v > l + tol {
            return Err(CascadeError::Domain {
                value: *v,
                lower: 0.0,
                upper: l,
            });
        }
    }
    let na = grid.a_values.len();
    let nb = grid.b_values.len();
    if beta0 == 0.0 {
        return Ok(ZeroScan {
            samples: vec![],
            zeros: vec![],
            unresolved: vec![],
            mask: vec![],
            degenerate: true,
        });
    }
    let valid = |i: usize, j: usize| grid.a_values[i] < grid.b_values[j];

    struct PerN {
        samples: Vec<ScanSample>,
        zeros: Vec<ZeroPoint>,
        unresolved: Vec<ZeroPoint>,
        cells: Vec<bool>,
    }

    let per_n: Vec<PerN> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let vals: Vec<Option<GammaValue>> = (0..na * nb)
                .map(|idx| {
                    let (i, j) = (idx / nb, idx % nb);
                    valid(i, j).then(|| indicator_gamma_at(params, beta0, n, grid.a_values[i], grid.b_values[j]))
                })
                .collect();
            let at = |i: usize, j: usize| vals[i * nb + j];
            let mut samples = Vec::new();
            for i in 0..na {
                for j in 0..nb {
                    if let Some(g) = at(i, j) {
                        samples.push(ScanSample {
                            n,
                            a: grid.a_values[i],
                            b: grid.b_values[j],
                            gamma_log_magnitude: g.value.log_magnitude,
                            sign: sign_of(&g),
                        });
                    }
                }
            }
            let mut zeros = Vec::new();
            let mut unresolved = Vec::new();
            let refine = |p0: (f64, f64), p1: (f64, f64), s0: i8| {
                let len = ((p1.0 - p0.0).powi(2) + (p1.1 - p0.1).powi(2)).sqrt();
                let (mut t0, mut t1) = (0.0f64, 1.0f64);
                let pt = |t: f64| (p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1));
                while (t1 - t0) * len > refine_tol {
                    let tm = 0.5 * (t0 + t1);
                    if tm <= t0 || tm >= t1 {
                        break;
                    }
                    let (a, b) = pt(tm);
                    let s = sign_of(&indicator_gamma_at(params, beta0, n, a, b));
                    if s == 0 {
                        t0 = tm;
                        t1 = tm;
                        break;
                    }
                    if s == s0 {
                        t0 = tm;
                    } else {
                        t1 = tm;
                    }
                }
                let (a, b) = pt(0.5 * (t0 + t1));
                ZeroPoint {
                    n,
                    a,
                    b,
                    bracket: (t1 - t0) * len,
                }
            };
            // Edges along b (a fixed), then along a (b fixed).
            for i in 0..na {
                for j in 0..nb {
                    let Some(g0) = at(i, j) else { continue };
                    let s0 = sign_of(&g0);
                    if s0 == 0 {
                        zeros.push(ZeroPoint {
                            n,
                            a: grid.a_values[i],
                            b: grid.b_values[j],
                            bracket: 0.0,
                        });
                        continue;
                    }
                    if j + 1 < nb {
                        if let Some(g1) = at(i, j + 1) {
                            let s1 = sign_of(&g1);
                            if s1 != 0 && s1 != s0 {
                                zeros.push(refine((grid.a_values[i], grid.b_values[j]), (grid.a_values[i], grid.b_values[j + 1]), s0));
                            }
                        }
                    }
                    if i + 1 < na {
                        if let Some(g1) = at(i + 1, j) {
                            let s1 = sign_of(&g1);
                            if s1 != 0 && s1 != s0 {
                                zeros.push(refine((grid.a_values[i], grid.b_values[j]), (grid.a_values[i + 1], grid.b_values[j]), s0));
                            }
                        }
                    }
                }
            }
            // Tangential candidates along each b-line: interior local minima of |gamma|/scale.
            for i in 0..na {
                for j in 1..nb.saturating_sub(1) {
                    let (Some(gm), Some(g0), Some(gp)) = (at(i, j - 1), at(i, j), at(i, j + 1)) else { continue };
                    let rel = |g: &GammaValue| g.value.log_magnitude - g.log_scale;
                    let same = sign_of(&gm) == sign_of(&g0) && sign_of(&g0) == sign_of(&gp);
                    if same && rel(&g0) < rel(&gm) && rel(&g0) < rel(&gp) && rel(&g0) < (1e-6f64).ln() {
                        unresolved.push(ZeroPoint {
                            n,
                            a: grid.a_values[i],
                            b: grid.b_values[j],
                            bracket: grid.b_values[j + 1] - grid.b_values[j - 1],
                        });
                    }
                }
            }
            // Cells: squares of the lattice, or b-edges when a is fixed.
            let mut cells = Vec::new();
            let ci = if na > 1 { na - 1 } else { 1 };
            for i in 0..ci {
                for j in 0..nb.saturating_sub(1) {
                    let corners: Vec<(usize, usize)> = if na > 1 {
                        vec![(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)]
                    } else {
                        vec![(0, j), (0, j + 1)]
                    };
                    let signs: Vec<i8> = corners.iter().filter_map(|&(p, q)| at(p, q)).map(|g| sign_of(&g)).collect();
                    let flagged = signs.iter().any(|s| *s == 0)
                        || (signs.iter().any(|s| *s > 0) && signs.iter().any(|s| *s < 0));
                    cells.push(flagged);
                }
            }
            PerN {
                samples,
                zeros,
                unresolved,
                cells,
            }
        })
        .collect();

    let mut out = ZeroScan {
        samples: vec![],
        zeros: vec![],
        unresolved: vec![],
        mask: vec![],
        degenerate: false,
    };
    let ci = if na > 1 { na - 1 } else { 1 };
    let cj = nb.saturating_sub(1);
    let mut flags = vec![false; ci * cj];
    for p in per_n {
        out.samples.extend(p.samples);
        out.zeros.extend(p.zeros);
        out.unresolved.extend(p.unresolved);
        for (f, c) in flags.iter_mut().zip(p.cells) {
            *f |= c;
        }
    }
    for i in 0..ci {
        for j in 0..cj {
            out.mask.push(CellFlag {
                i,
                j,
                flagged: flags[i * cj + j],
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    /// Fitted exponent `p` (minus the log-log slope).
    pub p: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Slopes fitted separately on the lower and upper halves of the range (in log |m|).
    pub lower_half_p: f64,
    pub upper_half_p: f64,
    /// The decay accelerates across the range beyond what a power law allows.
    pub super_polynomial: bool,
    /// `(m, ln(|Gamma_m|^2 e^{-sqrt(2|m| pi L)}))`.
    pub points: Vec<(i64, f64)>,
}

/// Ordinary least squares `y = c0 + c1 x`; returns `(c0, c1, rms residual)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    (c0, c1, (rss / n).sqrt())
}

/// Geometric sample of `[lo, hi]` with about `per_decade` integers per decade.
pub fn geometric_indices(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    let decades = (hi as f64 / lo as f64).log10();
    let count = ((decades * per_decade as f64).ceil() as usize).max(2);
    let mut v: Vec<u64> = (0..=count)
        .map(|i| (lo as f64 * (hi as f64 / lo as f64).powf(i as f64 / count as f64)).round() as u64)
        .collect();
    v.dedup();
    v
}

/// Classifies a log-log data set: compares slopes on the two halves of the range.
/// Returns `(lower, upper, accelerating)`.
pub fn half_slopes(x: &[f64], y: &[f64]) -> (f64, f64, bool) {
    let mid = 0.5 * (x.iter().cloned().fold(f64::INFINITY, f64::min) + x.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let split = |upper: bool| -> (Vec<f64>, Vec<f64>) {
        x.iter()
            .zip(y)
            .filter(|(a, _)| if upper { **a >= mid } else { **a <= mid })
            .map(|(a, b)| (*a, *b))
            .unzip()
    };
    let (xl, yl) = split(false);
    let (xu, yu) = split(true);
    let s_lo = ols(&xl, &yl).1;
    let s_hi = ols(&xu, &yu).1;
    let accelerating = (s_hi - s_lo).abs() > 1.0 + 0.1 * s_lo.abs();
    (s_lo, s_hi, accelerating)
}

/// Fits `|Gamma_m|^2 e^{-sqrt(2|m| pi L)} ~ Cst |m|^{-p}` over `|m|` in `m_range`, both signs of `m`.
pub fn gamma_hw_exponent_fit(params: &SystemParams, profile: &CouplingProfile, m_range: (u64, u64)) -> Result<ExponentFit> {
    let lo = m_range.0.max(16);
    let hi = m_range.1;
    if hi < lo || (hi as f64) < 10.0 * lo as f64 {
        return Err(CascadeError::InsufficientRange {
            lower: lo as f64,
            upper: hi as f64,
            reason: "need at least one decade of |m| with |m| >= 16".into(),
        });
    }
    let l = params.length_l;
    let mags = geometric_indices(lo, hi, 16);
    let ms: Vec<i64> = mags.iter().flat_map(|&k| [k as i64, -(k as i64)]).collect();
    let vals: Vec<Result<(i64, f64)>> = ms
        .par_iter()
        .map(|&m| {
            let g = gamma_hw_scaled(params, profile, m)?;
            let y = 2.0 * g.log_abs_gamma(l) - (2.0 * m.unsigned_abs() as f64 * PI * l).sqrt();
            Ok((m, y))
        })
        .collect();
    let points: Vec<(i64, f64)> = vals.into_iter().collect::<Result<_>>()?;
    let finite: Vec<&(i64, f64)> = points.iter().filter(|p| p.1.is_finite()).collect();
    if finite.len() < 4 {
        return Err(CascadeError::InsufficientRange {
            lower: lo as f64,
            upper: hi as f64,
            reason: "coefficients vanish on most of the range".into(),
        });
    }
    let x: Vec<f64> = finite.iter().map(|p| (p.0.unsigned_abs() as f64).ln()).collect();
    let y: Vec<f64> = finite.iter().map(|p| p.1).collect();
    let (c0, c1, residual) = ols(&x, &y);
    let (s_lo, s_hi, accelerating) = half_slopes(&x, &y);
    Ok(ExponentFit {
        p: -c1,
        intercept: c0,
        residual,
        lower_half_p: -s_lo,
        upper_half_p: -s_hi,
        super_polynomial: accelerating && s_hi < s_lo,
        points,
    })
}
