//! Truncated modal control system and its minimum-energy (HUM) control.
//!
//! Mode `k` obeys `x_k' = lambda_k x_k + b_k u` with `b_k` the boundary
//! observation coefficient of the adjoint eigenvector. The minimum-norm
//! control is `u(s) = sum_j kappa_j e^{conj(lambda_j) (T - s)}`, `kappa_j = eta_j conj(b_j)`,
//! where `M eta = d` and `M[k, j] = b_k conj(b_j) int_0^T e^{(lambda_k + conj lambda_j) s} ds`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{gamma, obs_coefficient};
use crate::dd::Dd;
use crate::error::{CascadeError, Result};
use crate::gramian::{exp_gram, reduced_integral, ExponentialFamily, GramMatrix};
use crate::linalg::{c64, cexp, cof, mat_vec, solve_refined, Cholesky, Mat, Precision, Real, SolverOptions, C};
use crate::scaled::{log_abs_sinh, ScaledComplex};
use crate::spaces::{build_weights, nu_value, weighted_norm, LogNorm, ModalVector, SpaceTag, WeightSequence};
use crate::spectral::{
    hyperbolic_eigenvalue_dd, is_resonant, parabolic_eigenvalue, parabolic_eigenvalue_dd, CouplingProfile, ModeId,
    SystemParams, Truncation, Variant,
};

/// Per-mode endpoint tolerance: `|x_k(T) - target_k| <= tol (1 + |target_k|)`.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalSystem {
    pub params: SystemParams,
    pub truncation: Truncation,
    pub modes: Vec<ModeId>,
    pub eigenvalues: Vec<Complex64>,
    /// Low parts of the double-double eigenvalues.
    pub eigenvalues_lo: Vec<Complex64>,
    pub obs_coeffs: Vec<ScaledComplex>,
    pub weights_v: WeightSequence,
    pub weights_vprime: WeightSequence,
}

fn primal_eigenvalue_dd(params: &SystemParams, mode: ModeId) -> (Dd, Dd) {
    match mode {
        ModeId::Parabolic(n) => (parabolic_eigenvalue_dd(params, n), Dd::ZERO),
        ModeId::Hyperbolic(m) => hyperbolic_eigenvalue_dd(params, m),
    }
}

/// Assembles eigenvalues, observation coefficients and the `V`/`V'` weights.
pub fn build_modal_system(params: &SystemParams, profile: &CouplingProfile, truncation: &Truncation) -> Result<ModalSystem> {
    params.validate()?;
    profile.validate(params.length_l)?;
    let tag = match params.variant {
        Variant::WaveHeat => SpaceTag::V,
        Variant::HeatWave => SpaceTag::VHW,
    };
    // The weights carry the coupling checks (gamma_n for wave-heat, Gamma_m for heat-wave).
    let weights_v = build_weights(params, profile, tag, truncation)?;
    let weights_vprime = weights_v.dual();
    let modes = truncation.modes();
    let obs = modes
        .par_iter()
        .map(|m| obs_coefficient(params, profile, *m).map(|o| o.value))
        .collect::<Result<Vec<_>>>()?;
    if let Some(k) = obs.iter().position(|b| b.is_zero() || !b.is_finite()) {
        return Err(CascadeError::VanishingCoupling { mode: modes[k] });
    }
    let dd: Vec<(Dd, Dd)> = modes.iter().map(|m| primal_eigenvalue_dd(params, *m)).collect();
    Ok(ModalSystem {
        params: *params,
        truncation: *truncation,
        eigenvalues: dd.iter().map(|(r, i)| Complex64::new(r.hi, i.hi)).collect(),
        eigenvalues_lo: dd.iter().map(|(r, i)| Complex64::new(r.lo, i.lo)).collect(),
        modes,
        obs_coeffs: obs,
        weights_v,
        weights_vprime,
    })
}

impl ModalSystem {
    /// A system with prescribed eigenvalues and input coefficients and unit weights.
    pub fn custom(params: &SystemParams, modes: Vec<ModeId>, eigenvalues: Vec<Complex64>, obs_coeffs: Vec<ScaledComplex>) -> Result<Self> {
        if modes.len() != eigenvalues.len() || modes.len() != obs_coeffs.len() {
            return Err(CascadeError::invalid("modes", "lengths of modes, eigenvalues and coefficients differ"));
        }
        if let Some(k) = obs_coeffs.iter().position(|b| b.is_zero()) {
            return Err(CascadeError::VanishingCoupling { mode: modes[k] });
        }
        let mut w = WeightSequence {
            parabolic_log_weights: Default::default(),
            hyperbolic_log_weights: Default::default(),
            nu_or_sigma: 0.0,
            space_tag: SpaceTag::V,
        };
        for m in &modes {
            match m {
                ModeId::Parabolic(n) => {
                    w.parabolic_log_weights.insert(*n, 0.0);
                }
                ModeId::Hyperbolic(h) => {
                    w.hyperbolic_log_weights.insert(*h, 0.0);
                }
            }
        }
        let n = modes.len();
        Ok(ModalSystem {
            params: *params,
            truncation: Truncation::new(0, 0),
            modes,
            eigenvalues,
            eigenvalues_lo: vec![Complex64::new(0.0, 0.0); n],
            obs_coeffs,
            weights_vprime: w.dual(),
            weights_v: w,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn index_of(&self, mode: ModeId) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    fn eigenvalue<T: Real>(&self, k: usize) -> C<T> {
        let hi = self.eigenvalues[k];
        let lo = self.eigenvalues_lo[k];
        C::new(T::of(hi.re) + T::of(lo.re), T::of(hi.im) + T::of(lo.im))
    }

    /// Exponents `lambda_k`, amplitudes `b_k`: its Gram matrix is the HUM matrix `M`.
    pub fn family(&self, horizon: f64) -> Result<ExponentialFamily> {
        let dd: Vec<(Dd, Dd)> = (0..self.len())
            .map(|k| {
                let hi = self.eigenvalues[k];
                let lo = self.eigenvalues_lo[k];
                (Dd::from_f64(hi.re) + Dd::from_f64(lo.re), Dd::from_f64(hi.im) + Dd::from_f64(lo.im))
            })
            .collect();
        ExponentialFamily::from_dd(&dd, self.obs_coeffs.clone(), horizon)
    }

    /// Index of the mode whose eigenvalue is the conjugate of mode `k`'s, if present.
    pub fn conjugate_partner(&self, k: usize) -> Option<usize> {
        let target = self.eigenvalues[k].conj();
        (0..self.len()).find(|&j| (self.eigenvalues[j] - target).norm() <= 1e-14 * (1.0 + target.norm()))
    }

    /// The mode set is closed under conjugation and `b` respects it.
    pub fn supports_real_data(&self) -> bool {
        (0..self.len()).all(|k| match self.conjugate_partner(k) {
            Some(j) => {
                let a = self.obs_coeffs[j];
                let b = self.obs_coeffs[k].conj();
                ((a - b).log_magnitude - b.log_magnitude) < (1e-10f64).ln()
            }
            None => false,
        })
    }

    /// `x_{partner(k)} = conj(x_k)` for every mode.
    pub fn is_real_data(&self, v: &ModalVector) -> bool {
        (0..self.len()).all(|k| match self.conjugate_partner(k) {
            Some(j) => {
                let a = v.get(self.modes[j]);
                let b = v.get(self.modes[k]).conj();
                (a - b).norm() <= 1e-12 * (1.0 + b.norm())
            }
            None => false,
        })
    }
}

/// `kappa_k = mant_k e^{log_scale - p_k T}`, with `mant` kept in double-double.
#[derive(Debug, Clone, PartialEq)]
struct KappaRepr {
    mant_hi: Vec<Complex64>,
    mant_lo: Vec<Complex64>,
    log_scale: f64,
    shifts: Vec<f64>,
}

impl KappaRepr {
    fn mant<T: Real>(&self, j: usize) -> C<T> {
        let h = self.mant_hi[j];
        let l = self.mant_lo[j];
        C::new(T::of(h.re) + T::of(l.re), T::of(h.im) + T::of(l.im))
    }

    fn store<T: Real>(mant: &[C<T>], log_scale: f64, shifts: Vec<f64>) -> Self {
        let split = |x: T| {
            let hi = x.f64();
            let lo = (x - T::of(hi)).f64();
            (hi, lo)
        };
        let mut mant_hi = Vec::with_capacity(mant.len());
        let mut mant_lo = Vec::with_capacity(mant.len());
        for z in mant {
            let (rh, rl) = split(z.re);
            let (ih, il) = split(z.im);
            mant_hi.push(Complex64::new(rh, ih));
            mant_lo.push(Complex64::new(rl, il));
        }
        KappaRepr {
            mant_hi,
            mant_lo,
            log_scale,
            shifts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HumSolution {
    pub modes: Vec<ModeId>,
    pub horizon: f64,
    /// `eta`, one per mode.
    pub moment_coeffs: Vec<ScaledComplex>,
    /// `kappa_j = eta_j conj(b_j)`: coefficients of the control kernel.
    pub kappa: Vec<ScaledComplex>,
    pub gramian: GramMatrix,
    pub energy: f64,
    pub energy_log: f64,
    pub endpoint_residual: Vec<Complex64>,
    /// `max_k |residual_k| / (1 + |target_k|)`.
    pub max_relative_residual: f64,
    pub precision_used: Precision,
    /// Condition estimate of the unit-diagonal kernel.
    pub condition: f64,
    pub real_projected: bool,
    pub warnings: Vec<String>,
    repr: KappaRepr,
}

impl HumSolution {
    /// `u(s)` in scaled form.
    pub fn control_scaled(&self, s: f64) -> ScaledComplex {
        match self.precision_used {
            Precision::Double => control_in::<f64>(self, s),
            Precision::DoubleDouble => control_in::<Dd>(self, s),
        }
    }

    pub fn control(&self, s: f64) -> Complex64 {
        let u = self.control_scaled(s).to_complex();
        if self.real_projected {
            Complex64::new(u.re, 0.0)
        } else {
            u
        }
    }
}

fn control_in<T: Real>(sol: &HumSolution, s: f64) -> ScaledComplex {
    let t = sol.horizon;
    let mut acc = C::new(T::zero(), T::zero());
    for (j, lam) in sol.gramian.family.exponents.iter().enumerate() {
        let lo = sol.gramian.family.exponents_lo[j];
        let mu = C::new(T::of(lam.re) + T::of(lo.re), -(T::of(lam.im) + T::of(lo.im)));
        let arg = C::new(mu.re * T::of(t - s) - T::of(sol.repr.shifts[j] * t), mu.im * T::of(t - s));
        acc += sol.repr.mant::<T>(j) * cexp(arg);
    }
    ScaledComplex::from_complex(c64(acc)).scale_log(sol.repr.log_scale)
}

struct Solved {
    repr: KappaRepr,
    condition: f64,
    kernel_residual: f64,
}

fn solve_in<T: Real>(fam: &ExponentialFamily, rhs: &[ScaledComplex], horizon: f64) -> Option<Solved> {
    let n = fam.len();
    let ik = fam.reduced_kernel::<T>();
    let d: Vec<T> = (0..n).map(|j| ik.get(j, j).re).collect();
    if d.iter().any(|x| !(x.f64() > 0.0)) {
        return None;
    }
    let sd: Vec<T> = d.iter().map(|x| x.sqrt()).collect();
    let k = Mat::from_fn(n, |i, j| {
        if i == j {
            C::new(T::one(), T::zero())
        } else {
            let v = ik.get(i, j);
            let den = sd[i] * sd[j];
            C::new(v.re / den, v.im / den)
        }
    });
    let chol = Cholesky::factor(&k).ok()?;
    let condition = chol.condition_estimate(&k);
    let shifts = fam.exponents.iter().map(|z| z.re.max(0.0)).collect::<Vec<_>>();
    // r_k = d_k / (b_k e^{p_k T} sqrt(D_k)); overall scale pulled out.
    let ratio: Vec<ScaledComplex> = (0..n)
        .map(|j| rhs[j] / fam.amplitudes[j].scale_log(shifts[j] * horizon))
        .collect();
    let log_scale = ratio
        .iter()
        .filter(|r| !r.is_zero())
        .map(|r| r.log_magnitude)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if log_scale.is_finite() { log_scale } else { 0.0 };
    let r: Vec<C<T>> = (0..n)
        .map(|j| {
            let v = cof::<T>(ratio[j].to_complex_scaled(log_scale));
            C::new(v.re / sd[j], v.im / sd[j])
        })
        .collect();
    let (z, kernel_residual) = solve_refined(&k, &chol, &r);
    let mant: Vec<C<T>> = z.iter().zip(&sd).map(|(zi, s)| C::new(zi.re / *s, zi.im / *s)).collect();
    Some(Solved {
        repr: KappaRepr::store(&mant, log_scale, shifts),
        condition,
        kernel_residual,
    })
}

/// Energy `int_0^T |u|^2 = z^* K z`, `z_k = mant_k sqrt(D_k)`.
fn energy_in<T: Real>(fam: &ExponentialFamily, repr: &KappaRepr) -> f64 {
    let n = fam.len();
    let ik = fam.reduced_kernel::<T>();
    let mant: Vec<C<T>> = (0..n).map(|j| repr.mant::<T>(j)).collect();
    let v = mat_vec(&ik, &mant);
    let mut acc = T::zero();
    for j in 0..n {
        acc += (mant[j].conj() * v[j]).re;
    }
    let e = acc.f64();
    if e <= 0.0 {
        f64::NEG_INFINITY
    } else {
        e.ln() + 2.0 * repr.log_scale
    }
}

/// Modal state at time `t`, exact Duhamel formula.
fn state_in<T: Real>(sys: &ModalSystem, sol: &HumSolution, init: &[Complex64], t: f64) -> Vec<ScaledComplex> {
    let n = sys.len();
    let horizon = sol.horizon;
    let p = &sol.repr.shifts;
    let lams: Vec<C<T>> = (0..n).map(|k| sys.eigenvalue::<T>(k)).collect();
    let weights: Vec<C<T>> = (0..n)
        .map(|j| {
            let mu = lams[j].conj();
            let arg = C::new(
                mu.re * T::of(horizon - t) + T::of(p[j]) * (T::of(t) - T::of(horizon)),
                mu.im * T::of(horizon - t),
            );
            sol.repr.mant::<T>(j) * cexp(arg)
        })
        .collect();
    (0..n)
        .map(|k| {
            let mut inner = C::new(T::zero(), T::zero());
            for j in 0..n {
                inner += weights[j] * reduced_integral(lams[k] + lams[j].conj(), p[k] + p[j], t);
            }
            let forced = sys.obs_coeffs[k] * ScaledComplex::from_complex(c64(inner)).scale_log(sol.repr.log_scale + p[k] * t);
            let free = ScaledComplex::exp(sys.eigenvalues[k] * t) * ScaledComplex::from_complex(init[k]);
            free + forced
        })
        .collect()
}

fn state_at(sys: &ModalSystem, sol: &HumSolution, init: &[Complex64], t: f64) -> Vec<ScaledComplex> {
    match sol.precision_used {
        Precision::Double => state_in::<f64>(sys, sol, init, t),
        Precision::DoubleDouble => state_in::<Dd>(sys, sol, init, t),
    }
}

fn finish(sys: &ModalSystem, fam: &ExponentialFamily, mut repr: KappaRepr, precision: Precision, condition: f64, project: bool, horizon: f64) -> Result<HumSolution> {
    if project {
        let n = sys.len();
        let mut hi = repr.mant_hi.clone();
        let mut lo = repr.mant_lo.clone();
        for k in 0..n {
            let j = sys.conjugate_partner(k).unwrap_or(k);
            hi[k] = 0.5 * (repr.mant_hi[k] + repr.mant_hi[j].conj());
            lo[k] = 0.5 * (repr.mant_lo[k] + repr.mant_lo[j].conj());
        }
        repr.mant_hi = hi;
        repr.mant_lo = lo;
    }
    let energy_log = match precision {
        Precision::Double => energy_in::<f64>(fam, &repr),
        Precision::DoubleDouble => energy_in::<Dd>(fam, &repr),
    };
    let kappa: Vec<ScaledComplex> = (0..sys.len())
        .map(|j| {
            let m = Complex64::new(repr.mant_hi[j].re + repr.mant_lo[j].re, repr.mant_hi[j].im + repr.mant_lo[j].im);
            ScaledComplex::from_complex(m).scale_log(repr.log_scale - repr.shifts[j] * horizon)
        })
        .collect();
    let eta: Vec<ScaledComplex> = kappa
        .iter()
        .zip(&sys.obs_coeffs)
        .map(|(k, b)| if k.is_zero() { ScaledComplex::ZERO } else { *k / b.conj() })
        .collect();
    let mut warnings = vec![];
    if horizon <= 2.0 * sys.params.length_l {
        warnings.push(format!(
            "T = {horizon} <= 2L = {}: truncation-only result, no continuum meaning",
            2.0 * sys.params.length_l
        ));
    }
    Ok(HumSolution {
        modes: sys.modes.clone(),
        horizon,
        moment_coeffs: eta,
        kappa,
        gramian: exp_gram(fam)?,
        energy: energy_log.exp(),
        energy_log,
        endpoint_residual: vec![],
        max_relative_residual: 0.0,
        precision_used: precision,
        condition,
        real_projected: project,
        warnings,
        repr,
    })
}

/// HUM solution for given moment coefficients `eta` (no solve).
pub fn solution_from_moments(sys: &ModalSystem, eta: &[ScaledComplex], horizon: f64, precision: Precision) -> Result<HumSolution> {
    let fam = sys.family(horizon)?;
    let shifts: Vec<f64> = sys.eigenvalues.iter().map(|z| z.re.max(0.0)).collect();
    let kappa: Vec<ScaledComplex> = eta.iter().zip(&sys.obs_coeffs).map(|(e, b)| *e * b.conj()).collect();
    let log_scale = kappa
        .iter()
        .zip(&shifts)
        .filter(|(k, _)| !k.is_zero())
        .map(|(k, p)| k.log_magnitude + p * horizon)
        .fold(f64::NEG_INFINITY, f64::max);
    let log_scale = if log_scale.is_finite() { log_scale } else { 0.0 };
    let mant: Vec<C<f64>> = kappa
        .iter()
        .zip(&shifts)
        .map(|(k, p)| k.to_complex_scaled(log_scale - p * horizon))
        .collect();
    let repr = KappaRepr::store(&mant, log_scale, shifts);
    finish(sys, &fam, repr, precision, f64::NAN, false, horizon)
}

/// Minimum-energy control steering `init` to `target` in time `horizon`.
pub fn hum_solve(sys: &ModalSystem, init: &ModalVector, target: &ModalVector, horizon: f64, opts: &SolverOptions) -> Result<HumSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CascadeError::invalid("horizon_T", "must be positive and finite"));
    }
    for (mode, _) in init.entries().into_iter().chain(target.entries()) {
        if sys.index_of(mode).is_none() {
            return Err(CascadeError::SupportExceedsTruncation { mode });
        }
    }
    let x0 = init.to_modes(&sys.modes);
    let x1 = target.to_modes(&sys.modes);
    let d: Vec<ScaledComplex> = (0..sys.len())
        .map(|k| ScaledComplex::from_complex(x1[k]) - ScaledComplex::exp(sys.eigenvalues[k] * horizon) * ScaledComplex::from_complex(x0[k]))
        .collect();
    let project = sys.supports_real_data() && sys.is_real_data(init) && sys.is_real_data(target);
    let fam = sys.family(horizon)?;
    let ladder: &[Precision] = match opts.max_precision {
        Precision::Double => &[Precision::Double],
        Precision::DoubleDouble => &[Precision::Double, Precision::DoubleDouble],
    };
    let mut last_err = None;
    for (step, &prec) in ladder.iter().enumerate() {
        let can_escalate = step + 1 < ladder.len();
        let solved = match prec {
            Precision::Double => solve_in::<f64>(&fam, &d, horizon),
            Precision::DoubleDouble => solve_in::<Dd>(&fam, &d, horizon),
        };
        let Some(s) = solved else {
            last_err = Some(CascadeError::IllConditioned {
                condition: f64::INFINITY,
                residual: f64::NAN,
                precision: prec,
            });
            continue;
        };
        if can_escalate && s.condition > opts.escalate_condition {
            continue;
        }
        let mut sol = finish(sys, &fam, s.repr, prec, s.condition, project, horizon)?;
        let end = state_at(sys, &sol, &x0, horizon);
        let res: Vec<Complex64> = end.iter().zip(&x1).map(|(e, t)| (*e - ScaledComplex::from_complex(*t)).to_complex()).collect();
        let worst = res.iter().zip(&x1).map(|(r, t)| r.norm() / (1.0 + t.norm())).fold(0.0, f64::max);
        sol.endpoint_residual = res;
        sol.max_relative_residual = worst;
        let ok = worst <= ENDPOINT_TOLERANCE && s.condition <= opts.ill_threshold(prec);
        if ok {
            return Ok(sol);
        }
        last_err = Some(CascadeError::IllConditioned {
            condition: s.condition,
            residual: worst.max(s.kernel_residual),
            precision: prec,
        });
        if !can_escalate {
            break;
        }
    }
    Err(last_err.unwrap_or(CascadeError::IllConditioned {
        condition: f64::INFINITY,
        residual: f64::NAN,
        precision: opts.max_precision,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub coeffs: ModalVector,
    /// Pivot-space norm: `l2` norm of the modal coefficients.
    pub h_norm: f64,
    pub v_norm: LogNorm,
    pub vprime_norm: LogNorm,
}

/// Closed-form trajectory of the controlled system at each of `times`.
pub fn trajectory_eval(sys: &ModalSystem, sol: &HumSolution, init: &ModalVector, times: &[f64]) -> Result<Vec<TrajectorySample>> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= sol.horizon)) {
        return Err(CascadeError::Domain {
            value: *t,
            lower: 0.0,
            upper: sol.horizon,
        });
    }
    let x0 = init.to_modes(&sys.modes);
    times
        .par_iter()
        .map(|&t| {
            let (x, plain) = if t == 0.0 {
                (x0.iter().map(|z| ScaledComplex::from_complex(*z)).collect::<Vec<_>>(), x0.clone())
            } else {
                let x = state_at(sys, sol, &x0, t);
                let plain = x.iter().map(|z| z.to_complex()).collect();
                (x, plain)
            };
            let coeffs = ModalVector::from_modes(&sys.modes, &plain);
            let logs: Vec<(ModeId, f64)> = sys.modes.iter().zip(&x).filter(|(_, z)| !z.is_zero()).map(|(m, z)| (*m, z.log_magnitude)).collect();
            Ok(TrajectorySample {
                t,
                h_norm: coeffs.l2_norm(),
                v_norm: crate::spaces::weighted_norm_log(&logs, &sys.weights_v)?,
                vprime_norm: crate::spaces::weighted_norm_log(&logs, &sys.weights_vprime)?,
                coeffs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoninvPoint {
    pub n: u32,
    /// Own-mode state `x_{1,n}(t)` under the single-mode control `u_n`.
    pub x_value: ScaledComplex,
    /// `ln (n^8 / gamma_n^4 e^{2 nu n^2} |x|^2)`.
    pub ratio_log: f64,
}

/// State of mode `n` at time `t` under `u_n(s) = beta_n e^{lambda (T - s)}`, and the
/// log of the ratio of its `V` norm to the `V'` norm of the adjoint datum.
pub fn noninv_own_mode(params: &SystemParams, profile: &CouplingProfile, n: u32, t: f64, horizon: f64) -> Result<NoninvPoint> {
    if !(t > 0.0 && t < horizon) {
        return Err(CascadeError::Domain {
            value: t,
            lower: 0.0,
            upper: horizon,
        });
    }
    let p = SystemParams {
        variant: Variant::WaveHeat,
        horizon_t: horizon,
        ..*params
    };
    p.validate()?;
    let g = gamma(&p, profile, n)?;
    if g.is_vanishing() {
        return Err(CascadeError::VanishingCoupling {
            mode: ModeId::Parabolic(n),
        });
    }
    let beta = obs_coefficient(&p, profile, ModeId::Parabolic(n))?.value;
    // x = beta^2 e^{lambda T} sinh(lambda t) / lambda (beta^2 t at lambda = 0).
    let factor = if is_resonant(&p, n) {
        t.ln()
    } else {
        let lam = parabolic_eigenvalue(&p, n);
        lam * horizon + log_abs_sinh(lam * t) - lam.abs().ln()
    };
    let x_value = beta * beta * ScaledComplex::from_log_phase(factor, 0.0);
    let nf = n as f64;
    let nu = nu_value(&p, false);
    let ratio_log = 8.0 * nf.ln() - 4.0 * g.value.log_magnitude + 2.0 * nu * nf * nf + 2.0 * x_value.log_magnitude;
    Ok(NoninvPoint { n, x_value, ratio_log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoninvScan {
    pub points: Vec<NoninvPoint>,
    /// Least-squares coefficient of `n^2` in `ratio_log`.
    pub slope: f64,
    pub intercept: f64,
    /// `2 pi^2 (T + t) / L^2`.
    pub expected_slope: f64,
    pub strictly_increasing: bool,
}

pub fn noninv_scan(params: &SystemParams, profile: &CouplingProfile, horizon: f64, t: f64, n_range: (u32, u32)) -> Result<NoninvScan> {
    if n_range.0 < 1 || n_range.1 < n_range.0 + 2 {
        return Err(CascadeError::invalid("n_range", "need 1 <= lower and at least three indices"));
    }
    let points = (n_range.0..=n_range.1)
        .into_par_iter()
        .map(|n| noninv_own_mode(params, profile, n, t, horizon))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).powi(2)).collect();
    let y: Vec<f64> = points.iter().map(|p| p.ratio_log).collect();
    let (c0, c1, _) = crate::coupling::ols(&x, &y);
    let l = params.length_l;
    Ok(NoninvScan {
        strictly_increasing: y.windows(2).all(|w| w[1] > w[0]),
        points,
        slope: c1,
        intercept: c0,
        expected_slope: 2.0 * PI * PI * (horizon + t) / (l * l),
    })
}

/// `V` norms of `vec` and of `e^{A t} vec`.
pub fn semigroup_v_invariance_check(sys: &ModalSystem, vec: &ModalVector, t: f64) -> Result<(f64, f64)> {
    let before = weighted_norm(vec, &sys.weights_v)?;
    let mut logs = vec![];
    for (mode, x) in vec.entries() {
        let k = sys.index_of(mode).ok_or(CascadeError::SupportExceedsTruncation { mode })?;
        let z = ScaledComplex::exp(sys.eigenvalues[k] * t) * ScaledComplex::from_complex(x);
        if !z.is_zero() {
            logs.push((mode, z.log_magnitude));
        }
    }
    let after = crate::spaces::weighted_norm_log(&logs, &sys.weights_v)?;
    Ok((before.log, after.log))
}
