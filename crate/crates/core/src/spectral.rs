//! Eigenstructure of the cascade generator and its adjoint.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling;
use crate::dd::Dd;
use crate::error::{CascadeError, Result};
use crate::quadrature::{self, gauss_legendre3, QuadOptions};
use crate::scaled::ScaledComplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    WaveHeat,
    HeatWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub length_l: f64,
    pub reaction_c: f64,
    pub horizon_t: f64,
    pub variant: Variant,
}

impl SystemParams {
    pub fn new(length_l: f64, reaction_c: f64, horizon_t: f64, variant: Variant) -> Result<Self> {
        let p = SystemParams {
            length_l,
            reaction_c,
            horizon_t,
            variant,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_l > 0.0 && self.length_l.is_finite()) {
            return Err(CascadeError::invalid("length_L", format!("must be positive and finite, got {}", self.length_l)));
        }
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(CascadeError::invalid("horizon_T", format!("must be positive and finite, got {}", self.horizon_t)));
        }
        if !self.reaction_c.is_finite() {
            return Err(CascadeError::invalid("reaction_c", "must be finite"));
        }
        Ok(())
    }

    pub fn with_horizon(&self, t: f64) -> Self {
        SystemParams { horizon_t: t, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeId {
    Parabolic(u32),
    Hyperbolic(i64),
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeId::Parabolic(n) => write!(f, "n={n}"),
            ModeId::Hyperbolic(m) => write!(f, "m={m}"),
        }
    }
}

/// Truncation of the modal expansion: parabolic `1..=n_p`, hyperbolic
/// `-n_h..=n_h`, or `-n_h-1..=n_h` when `conjugate_closed` (so that the set is
/// stable under `m -> -1-m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_p: u32,
    pub n_h: u32,
    #[serde(default)]
    pub conjugate_closed: bool,
}

impl Truncation {
    pub fn new(n_p: u32, n_h: u32) -> Self {
        Truncation {
            n_p,
            n_h,
            conjugate_closed: false,
        }
    }

    pub fn hyperbolic_range(&self) -> std::ops::RangeInclusive<i64> {
        let lo = -(self.n_h as i64) - i64::from(self.conjugate_closed);
        lo..=self.n_h as i64
    }

    pub fn modes(&self) -> Vec<ModeId> {
        let mut v: Vec<ModeId> = (1..=self.n_p).map(ModeId::Parabolic).collect();
        v.extend(self.hyperbolic_range().map(ModeId::Hyperbolic));
        v
    }

    pub fn contains(&self, mode: ModeId) -> bool {
        match mode {
            ModeId::Parabolic(n) => n >= 1 && n <= self.n_p,
            ModeId::Hyperbolic(m) => self.hyperbolic_range().contains(&m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

/// Coupling coefficient `beta` on `[0, L]`.
///
/// Sampled profiles are linearly interpolated between the nodes and vanish
/// outside the hull of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingProfile {
    Constant { beta0: f64 },
    Indicator { beta0: f64, a: f64, b: f64 },
    PiecewiseConstant { pieces: Vec<Piece> },
    Sampled { grid: Vec<f64>, values: Vec<f64> },
}

impl CouplingProfile {
    pub fn validate(&self, l: f64) -> Result<()> {
        let tol = 1e-14 * l;
        match self {
            CouplingProfile::Constant { beta0 } => {
                if !beta0.is_finite() {
                    return Err(CascadeError::invalid("beta0", "must be finite"));
                }
            }
            CouplingProfile::Indicator { beta0, a, b } => {
                if !beta0.is_finite() {
                    return Err(CascadeError::invalid("beta0", "must be finite"));
                }
                if !(*a >= 0.0 && a < b && *b <= l + tol) {
                    return Err(CascadeError::invalid("a, b", format!("need 0 <= a < b <= L, got a={a}, b={b}, L={l}")));
                }
            }
            CouplingProfile::PiecewiseConstant { pieces } => {
                let mut sorted = pieces.clone();
                sorted.sort_by(|x, y| x.a.total_cmp(&y.a));
                for p in &sorted {
                    if !(p.a >= 0.0 && p.a < p.b && p.b <= l + tol && p.value.is_finite()) {
                        return Err(CascadeError::invalid("pieces", format!("interval [{}, {}] not inside [0, {l}]", p.a, p.b)));
                    }
                }
                for w in sorted.windows(2) {
                    if w[1].a < w[0].b {
                        return Err(CascadeError::invalid("pieces", "intervals overlap"));
                    }
                }
            }
            CouplingProfile::Sampled { grid, values } => {
                if grid.len() != values.len() {
                    return Err(CascadeError::invalid("values", "length differs from grid"));
                }
                if grid.len() < 2 {
                    return Err(CascadeError::invalid("grid", "needs at least two nodes"));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(CascadeError::invalid("grid", "must be strictly increasing"));
                }
                if grid[0] < 0.0 || grid[grid.len() - 1] > l + tol {
                    return Err(CascadeError::invalid("grid", "must lie in [0, L]"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(CascadeError::invalid("values", "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CouplingProfile::Constant { beta0 } => *beta0,
            CouplingProfile::Indicator { beta0, a, b } => {
                if x >= *a && x <= *b {
                    *beta0
                } else {
                    0.0
                }
            }
            CouplingProfile::PiecewiseConstant { pieces } => pieces
                .iter()
                .find(|p| x >= p.a && x <= p.b)
                .map_or(0.0, |p| p.value),
            CouplingProfile::Sampled { grid, values } => {
                let n = grid.len();
                if x < grid[0] || x > grid[n - 1] {
                    return 0.0;
                }
                let i = match grid.binary_search_by(|g| g.total_cmp(&x)) {
                    Ok(i) => return values[i],
                    Err(i) => i,
                };
                let (x0, x1) = (grid[i - 1], grid[i]);
                let t = (x - x0) / (x1 - x0);
                values[i - 1] + t * (values[i] - values[i - 1])
            }
        }
    }

    /// Points where the profile or its derivative may jump.
    pub fn breakpoints(&self, l: f64) -> Vec<f64> {
        let mut v = match self {
            CouplingProfile::Constant { .. } => vec![],
            CouplingProfile::Indicator { a, b, .. } => vec![*a, *b],
            CouplingProfile::PiecewiseConstant { pieces } => pieces.iter().flat_map(|p| [p.a, p.b]).collect(),
            CouplingProfile::Sampled { grid, .. } => grid.clone(),
        };
        v.retain(|x| *x > 0.0 && *x < l);
        v.sort_by(|x, y| x.total_cmp(y));
        v.dedup();
        v
    }

    /// `[lo, hi]` outside which the profile vanishes.
    pub fn support(&self, l: f64) -> (f64, f64) {
        match self {
            CouplingProfile::Constant { .. } => (0.0, l),
            CouplingProfile::Indicator { a, b, .. } => (*a, b.min(l)),
            CouplingProfile::PiecewiseConstant { pieces } => {
                let nz: Vec<&Piece> = pieces.iter().filter(|p| p.value != 0.0).collect();
                if nz.is_empty() {
                    (0.0, 0.0)
                } else {
                    (
                        nz.iter().map(|p| p.a).fold(f64::INFINITY, f64::min),
                        nz.iter().map(|p| p.b).fold(0.0, f64::max).min(l),
                    )
                }
            }
            CouplingProfile::Sampled { grid, .. } => (grid[0], grid[grid.len() - 1].min(l)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CouplingProfile::Constant { beta0 } | CouplingProfile::Indicator { beta0, .. } => *beta0 == 0.0,
            CouplingProfile::PiecewiseConstant { pieces } => pieces.iter().all(|p| p.value == 0.0),
            CouplingProfile::Sampled { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            CouplingProfile::Constant { beta0 } | CouplingProfile::Indicator { beta0, .. } => beta0.abs(),
            CouplingProfile::PiecewiseConstant { pieces } => pieces.iter().map(|p| p.value.abs()).fold(0.0, f64::max),
            CouplingProfile::Sampled { values, .. } => values.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    /// Decomposition into `(beta0, a, b)` indicators when the profile is piecewise constant.
    pub fn indicator_pieces(&self, l: f64) -> Option<Vec<(f64, f64, f64)>> {
        match self {
            CouplingProfile::Constant { beta0 } => Some(vec![(*beta0, 0.0, l)]),
            CouplingProfile::Indicator { beta0, a, b } => Some(vec![(*beta0, *a, b.min(l))]),
            CouplingProfile::PiecewiseConstant { pieces } => {
                Some(pieces.iter().map(|p| (p.value, p.a, p.b.min(l))).collect())
            }
            CouplingProfile::Sampled { .. } => None,
        }
    }
}

pub fn parabolic_eigenvalue(params: &SystemParams, n: u32) -> f64 {
    let k = n as f64 * PI / params.length_l;
    params.reaction_c - k * k
}

pub fn parabolic_eigenvalue_dd(params: &SystemParams, n: u32) -> Dd {
    let k = Dd::PI * Dd::from_f64(n as f64) / Dd::from_f64(params.length_l);
    Dd::from_f64(params.reaction_c) - k * k
}

pub fn hyperbolic_eigenvalue(params: &SystemParams, m: i64) -> Complex64 {
    Complex64::new(0.0, (2 * m + 1) as f64 * PI / (2.0 * params.length_l))
}

pub fn hyperbolic_eigenvalue_dd(params: &SystemParams, m: i64) -> (Dd, Dd) {
    let w = Dd::PI * Dd::from_f64((2 * m + 1) as f64) / Dd::from_f64(2.0 * params.length_l);
    (Dd::ZERO, w)
}

/// Threshold below which `lambda_{1,n}` is treated as exactly zero.
pub fn resonance_threshold(params: &SystemParams) -> f64 {
    1e-9 * PI * PI / (params.length_l * params.length_l)
}

pub fn is_resonant(params: &SystemParams, n: u32) -> bool {
    parabolic_eigenvalue(params, n).abs() < resonance_threshold(params)
}

fn check_domain(x: f64, l: f64) -> Result<()> {
    if !(x >= 0.0 && x <= l) {
        return Err(CascadeError::Domain {
            value: x,
            lower: 0.0,
            upper: l,
        });
    }
    Ok(())
}

/// Second and third components of the hyperbolic eigenvector `phi_{2,m}` at `x`.
pub fn hyperbolic_eigvec_eval(params: &SystemParams, m: i64, x: f64) -> Result<(Complex64, Complex64)> {
    check_domain(x, params.length_l)?;
    let phi2 = phi2_raw(params, m, x);
    Ok((phi2, hyperbolic_eigenvalue(params, m) * phi2))
}

fn phi2_raw(params: &SystemParams, m: i64, x: f64) -> Complex64 {
    let w = hyperbolic_eigenvalue(params, m).im;
    let amp = 2.0 * params.length_l.sqrt() / ((2 * m + 1).unsigned_abs() as f64 * PI);
    // sinh(i w x) = i sin(w x)
    Complex64::new(0.0, amp * (w * x).sin())
}

/// `w = P_beta f`, i.e. the solution of `w'' = -beta f`, `w(0) = 0`, `w'(L) = 0`,
/// for `f` given by linear interpolation of samples on `grid`.
///
/// Uses `w(x) = int_0^L beta(s) f(s) min(s, x) ds`, integrated exactly on each
/// sub-panel between grid nodes and profile breakpoints.
pub fn p_beta_apply(l: f64, profile: &CouplingProfile, grid: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    if grid.len() < 3 {
        return Err(CascadeError::GridTooCoarse {
            nodes: grid.len(),
            required: 3,
        });
    }
    if f.len() != grid.len() {
        return Err(CascadeError::invalid("f", "length differs from grid"));
    }
    let tol = 1e-12 * l;
    if grid[0].abs() > tol || (grid[grid.len() - 1] - l).abs() > tol {
        return Err(CascadeError::Domain {
            value: if grid[0].abs() > tol { grid[0] } else { grid[grid.len() - 1] },
            lower: 0.0,
            upper: l,
        });
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CascadeError::invalid("grid", "must be strictly increasing"));
    }
    let breaks = profile.breakpoints(l);
    let n = grid.len();
    // first[i] = int_{x_i}^{x_{i+1}} s g(s) ds, zeroth[i] = int_{x_i}^{x_{i+1}} g(s) ds
    let mut zeroth = vec![0.0; n - 1];
    let mut first = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let (x0, x1) = (grid[i], grid[i + 1]);
        let (f0, f1) = (f[i], f[i + 1]);
        let mut cuts = vec![x0];
        cuts.extend(breaks.iter().copied().filter(|b| *b > x0 && *b < x1));
        cuts.push(x1);
        for w in cuts.windows(2) {
            // Evaluate beta strictly inside the sub-panel so jumps at the ends are not sampled.
            let mid = 0.5 * (w[0] + w[1]);
            let piecewise_const = !matches!(profile, CouplingProfile::Sampled { .. });
            for (s, wt) in gauss_legendre3(w[0], w[1]) {
                let beta = if piecewise_const { profile.eval(mid) } else { profile.eval(s) };
                let fs = f0 + (s - x0) / (x1 - x0) * (f1 - f0);
                let g = beta * fs;
                zeroth[i] += wt * g;
                first[i] += wt * s * g;
            }
        }
    }
    let mut w = vec![0.0; n];
    let mut tail = zeroth.iter().sum::<f64>();
    let mut head = 0.0;
    for i in 0..n {
        w[i] = head + grid[i] * tail;
        if i < n - 1 {
            head += first[i];
            tail -= zeroth[i];
        }
    }
    w[0] = 0.0;
    Ok(w)
}

/// `psi^3_{1,n}(x)`, the third component of the parabolic adjoint eigenvector.
pub fn adjoint_wave_trace_eval(params: &SystemParams, profile: &CouplingProfile, n: u32, x: f64) -> Result<ScaledComplex> {
    let g = coupling::gamma_quadrature(params, profile, n)?;
    adjoint_wave_trace_eval_with(params, profile, n, x, g.value)
}

/// Same as [`adjoint_wave_trace_eval`] with a precomputed `gamma_n`.
pub fn adjoint_wave_trace_eval_with(
    params: &SystemParams,
    profile: &CouplingProfile,
    n: u32,
    x: f64,
    gamma: ScaledComplex,
) -> Result<ScaledComplex> {
    let l = params.length_l;
    check_domain(x, l)?;
    let k = n as f64 * PI / l;
    let norm = (2.0 / l).sqrt();
    let lam = parabolic_eigenvalue(params, n);
    let (lo, hi) = profile.support(l);
    let breaks = profile.breakpoints(l);
    if is_resonant(params, n) {
        // sqrt(2/L) int_0^x int_tau^L beta sin = sqrt(2/L) int_0^L beta(s) sin(ks) min(s, x) ds
        if hi <= lo || profile.is_zero() {
            return Ok(ScaledComplex::ZERO);
        }
        let nodes = quadrature::panel_nodes(lo, hi, &[breaks.as_slice(), &[x]].concat(), PI / k);
        let opts = QuadOptions::scaled(profile.max_abs() * l * (hi - lo));
        let r = quadrature::integrate(|s| Complex64::new(profile.eval(s) * (k * s).sin() * s.min(x), 0.0), &nodes, &opts)?;
        return Ok(ScaledComplex::from_real(norm * r.value.re));
    }
    let pref = ScaledComplex::from_real(norm / lam);
    let term1 = gamma * pref * ScaledComplex::cosh(Complex64::new(lam * (x - l), 0.0))
        / ScaledComplex::cosh(Complex64::new(lam * l, 0.0));
    if x >= l || hi <= x || profile.is_zero() {
        return Ok(term1);
    }
    // int_x^L beta(s) sin(ks) sinh(lam (x - s)) ds with e^{|lam| (L - x)} factored out.
    let al = lam.abs();
    let sg = lam.signum();
    let start = x.max(lo);
    let mut extra: Vec<f64> = breaks.clone();
    let mut d = 1.0 / al;
    while d < l {
        extra.push(l - d);
        d *= 2.0;
    }
    let nodes = quadrature::panel_nodes(start, hi, &extra, PI / k);
    let opts = QuadOptions::scaled(profile.max_abs() * (1.0 / al).min(hi - start));
    let r = quadrature::integrate(
        |s| {
            let v = -profile.eval(s) * (k * s).sin() * sg * (al * (s - l)).exp() * (-(-2.0 * al * (s - x)).exp_m1()) * 0.5;
            Complex64::new(v, 0.0)
        },
        &nodes,
        &opts,
    )?;
    let term2 = pref * ScaledComplex::from_real(r.value.re).scale_log(al * (l - x));
    Ok(term1 + term2)
}
