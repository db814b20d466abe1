//! Gram matrices of exponential families on `[0, T]` and the constants read
//! off their spectra.
//!
//! Entry `(j, k)` is `int_0^T c_j e^{l_j t} conj(c_k e^{l_k t}) dt`. The matrix is
//! assembled as `diag(s) K diag(s)^*` with `K` of unit diagonal, and only `K`
//! goes through a factorization.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::obs_coefficient;
use crate::dd::Dd;
use crate::error::{CascadeError, Result};
use crate::linalg::{c64, cexpm1, graded_eigen, Cholesky, GradedEigen, Mat, Precision, Real, SolverOptions, C};
use crate::scaled::ScaledComplex;
use crate::spaces::WeightSequence;
use crate::spectral::{
    hyperbolic_eigenvalue_dd, parabolic_eigenvalue_dd, CouplingProfile, ModeId, SystemParams, Truncation,
};

/// Exponents are kept as double-double pairs `hi + lo`; integer multiples of
/// `pi` rounded to double would move the smallest Gram eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFamily {
    pub exponents: Vec<Complex64>,
    #[serde(default)]
    pub exponents_lo: Vec<Complex64>,
    pub amplitudes: Vec<ScaledComplex>,
    pub horizon: f64,
}

impl ExponentialFamily {
    pub fn new(exponents: Vec<Complex64>, amplitudes: Vec<ScaledComplex>, horizon: f64) -> Result<Self> {
        let lo = vec![Complex64::new(0.0, 0.0); exponents.len()];
        Self::from_parts(exponents, lo, amplitudes, horizon)
    }

    pub fn from_dd(exponents: &[(Dd, Dd)], amplitudes: Vec<ScaledComplex>, horizon: f64) -> Result<Self> {
        let hi = exponents.iter().map(|(r, i)| Complex64::new(r.hi, i.hi)).collect();
        let lo = exponents.iter().map(|(r, i)| Complex64::new(r.lo, i.lo)).collect();
        Self::from_parts(hi, lo, amplitudes, horizon)
    }

    fn from_parts(exponents: Vec<Complex64>, exponents_lo: Vec<Complex64>, amplitudes: Vec<ScaledComplex>, horizon: f64) -> Result<Self> {
        if exponents.len() != amplitudes.len() {
            return Err(CascadeError::invalid("amplitudes", "length differs from exponents"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CascadeError::invalid("horizon", "must be positive and finite"));
        }
        let f = ExponentialFamily {
            exponents,
            exponents_lo,
            amplitudes,
            horizon,
        };
        for j in 0..f.len() {
            for k in 0..j {
                if f.exponent_dd(j) == f.exponent_dd(k) {
                    return Err(CascadeError::invalid("exponents", format!("entries {k} and {j} coincide")));
                }
            }
        }
        Ok(f)
    }

    /// `N` unit exponentials `i (2m+1) pi / (2L)` with `m` ordered `0, -1, 1, -2, ...`.
    pub fn hyperbolic_unit(l: f64, count: usize, horizon: f64) -> Result<Self> {
        let p = SystemParams::new(l, 0.0, horizon, crate::spectral::Variant::WaveHeat)?;
        let exps: Vec<(Dd, Dd)> = alternating_indices(count).into_iter().map(|m| hyperbolic_eigenvalue_dd(&p, m)).collect();
        Self::from_dd(&exps, vec![ScaledComplex::ONE; count], horizon)
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent_dd(&self, j: usize) -> (Dd, Dd) {
        let hi = self.exponents[j];
        let lo = self.exponents_lo.get(j).copied().unwrap_or_default();
        (Dd::from_f64(hi.re) + Dd::from_f64(lo.re), Dd::from_f64(hi.im) + Dd::from_f64(lo.im))
    }

    fn exponent<T: Real>(&self, j: usize) -> C<T> {
        let hi = self.exponents[j];
        let lo = self.exponents_lo.get(j).copied().unwrap_or_default();
        C::new(T::of(hi.re) + T::of(lo.re), T::of(hi.im) + T::of(lo.im))
    }

    /// `p_j = max(Re l_j, 0)`: growth factored out of row and column `j`.
    pub(crate) fn shifts(&self) -> Vec<f64> {
        self.exponents.iter().map(|z| z.re.max(0.0)).collect()
    }

    /// `e^{-(p_j + p_k) T} (e^{(l_j + conj l_k) T} - 1) / (l_j + conj l_k)` for all pairs.
    pub(crate) fn reduced_kernel<T: Real>(&self) -> Mat<C<T>> {
        let n = self.len();
        let p = self.shifts();
        let t = self.horizon;
        let rows: Vec<Vec<C<T>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let lj = self.exponent::<T>(j);
                (j..n).map(|k| reduced_integral(lj + self.exponent::<T>(k).conj(), p[j] + p[k], t)).collect()
            })
            .collect();
        let mut m = Mat::from_fn(n, |_, _| C::new(T::zero(), T::zero()));
        for (j, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let k = j + off;
                if j == k {
                    m.set(j, j, C::new(v.re, T::zero()));
                } else {
                    m.set(j, k, v);
                    m.set(k, j, v.conj());
                }
            }
        }
        m
    }
}

/// `m = 0, -1, 1, -2, 2, ...`, the first `count` of them.
pub fn alternating_indices(count: usize) -> Vec<i64> {
    (0..count as i64).map(|j| if j % 2 == 0 { j / 2 } else { -(j + 1) / 2 }).collect()
}

/// `e^{-P T} (e^{s T} - 1) / s`, assuming `P >= Re s`.
pub(crate) fn reduced_integral<T: Real>(s: C<T>, pp: f64, t: f64) -> C<T> {
    let tt = T::of(t);
    let st = C::new(s.re * tt, s.im * tt);
    let stf = c64(st);
    let decay = (T::of(-pp) * tt).exp();
    if stf.norm() < 1e-8 {
        let h = |x: f64| C::new(T::of(x), T::zero());
        let series = h(1.0) + st * (h(0.5) + st * (h(1.0 / 6.0) + st * (h(1.0 / 24.0) + st * h(1.0 / 120.0))));
        return C::new(series.re * tt * decay, series.im * tt * decay);
    }
    if stf.re < 600.0 {
        let q = cexpm1(st) / s;
        C::new(q.re * decay, q.im * decay)
    } else {
        let pt = T::of(pp) * tt;
        let a = cexpm1(C::new(st.re - pt, st.im));
        let b = (-pt).expm1();
        C::new(a.re - b, a.im) / s
    }
}

/// Unreduced `(e^{s T} - 1) / s` in scaled form.
pub fn exp_integral(s: Complex64, t: f64) -> ScaledComplex {
    let p = s.re.max(0.0);
    ScaledComplex::from_complex(reduced_integral::<f64>(s, p, t)).scale_log(p * t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    /// Row-major `n x n`.
    pub entries: Vec<ScaledComplex>,
    pub family: ExponentialFamily,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.family.len()
    }

    pub fn get(&self, j: usize, k: usize) -> ScaledComplex {
        self.entries[j * self.n() + k]
    }

    /// Entries as plain doubles; only meaningful when none overflows.
    pub fn to_complex(&self) -> Mat<Complex64> {
        Mat::from_fn(self.n(), |j, k| self.get(j, k).to_complex())
    }

    /// `Re <G xi, xi>` with `xi` applied as in the quadratic form `int |sum xi_k c_k e^{l_k t}|^2`.
    pub fn quadratic_form(&self, xi: &[ScaledComplex]) -> ScaledComplex {
        let n = self.n();
        let mut terms = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                terms.push(xi[j] * xi[k].conj() * self.get(j, k));
            }
        }
        terms.into_iter().sum()
    }
}

/// Closed-form Gram matrix of `family`.
pub fn exp_gram(family: &ExponentialFamily) -> Result<GramMatrix> {
    if family.is_empty() {
        return Err(CascadeError::invalid("family", "must be nonempty"));
    }
    let n = family.len();
    let k = family.reduced_kernel::<f64>();
    let p = family.shifts();
    let t = family.horizon;
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        for l in 0..n {
            let v = ScaledComplex::from_complex(k.get(j, l)).scale_log((p[j] + p[l]) * t);
            entries.push(family.amplitudes[j] * family.amplitudes[l].conj() * v);
        }
    }
    Ok(GramMatrix {
        entries,
        family: family.clone(),
    })
}

/// Spectrum of `diag(e^{g}) G diag(e^{g})` for a per-row log factor `g`.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    pub eigen: GradedEigen,
    pub precision: Precision,
    /// Condition estimate of the unit-diagonal kernel.
    pub condition: f64,
    /// Condition estimate exceeded the ceiling of the precision used.
    pub reliable: bool,
}

impl GramSpectrum {
    pub fn min_log(&self) -> f64 {
        self.eigen.log_eigenvalues.first().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn max_log(&self) -> f64 {
        self.eigen.log_eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn try_spectrum<T: Real>(family: &ExponentialFamily, log_factor: &[f64]) -> Option<(GradedEigen, f64)> {
    let ik = family.reduced_kernel::<T>();
    let n = family.len();
    let d: Vec<T> = (0..n).map(|j| ik.get(j, j).re).collect();
    if d.iter().any(|x| !(x.f64() > 0.0)) {
        return None;
    }
    let sd: Vec<T> = d.iter().map(|x| x.sqrt()).collect();
    let mut k = ik.clone();
    for j in 0..n {
        for l in 0..n {
            let v = ik.get(j, l);
            let den = sd[j] * sd[l];
            k.set(j, l, if j == l { C::new(T::one(), T::zero()) } else { C::new(v.re / den, v.im / den) });
        }
    }
    let chol = Cholesky::factor(&k).ok()?;
    let cond = chol.condition_estimate(&k);
    let p = family.shifts();
    let s: Vec<ScaledComplex> = (0..n)
        .map(|j| {
            family.amplitudes[j]
                * ScaledComplex::from_log_phase(p[j] * family.horizon + 0.5 * d[j].f64().ln() + log_factor[j], 0.0)
        })
        .collect();
    Some((graded_eigen(&chol, &s), cond))
}

/// Eigen-decomposition of the (row-weighted) Gram matrix, climbing from double
/// to double-double as needed. With `tolerate_ill`, an over-threshold condition
/// is reported through `reliable` instead of an error.
pub fn gram_spectrum(family: &ExponentialFamily, log_factor: &[f64], opts: &SolverOptions, tolerate_ill: bool) -> Result<GramSpectrum> {
    assert_eq!(log_factor.len(), family.len());
    if family.is_empty() {
        return Ok(GramSpectrum {
            eigen: GradedEigen {
                log_eigenvalues: vec![],
                vectors: vec![],
                sweeps: 0,
            },
            precision: Precision::Double,
            condition: 1.0,
            reliable: true,
        });
    }
    let ill = |cond: f64, p: Precision| CascadeError::IllConditioned {
        condition: cond,
        residual: f64::NAN,
        precision: p,
    };
    let double = try_spectrum::<f64>(family, log_factor);
    if let Some((e, cond)) = &double {
        if *cond <= opts.escalate_condition || opts.max_precision == Precision::Double {
            let reliable = *cond <= opts.ill_threshold(Precision::Double);
            if !reliable && !tolerate_ill {
                return Err(ill(*cond, Precision::Double));
            }
            return Ok(GramSpectrum {
                eigen: e.clone(),
                precision: Precision::Double,
                condition: *cond,
                reliable,
            });
        }
    } else if opts.max_precision == Precision::Double {
        return Err(ill(f64::INFINITY, Precision::Double));
    }
    match try_spectrum::<Dd>(family, log_factor) {
        Some((e, cond)) => {
            let reliable = cond <= opts.ill_threshold(Precision::DoubleDouble);
            if !reliable && !tolerate_ill {
                return Err(ill(cond, Precision::DoubleDouble));
            }
            Ok(GramSpectrum {
                eigen: e,
                precision: Precision::DoubleDouble,
                condition: cond,
                reliable,
            })
        }
        None => Err(ill(f64::INFINITY, Precision::DoubleDouble)),
    }
}

/// Exponent of the adjoint mode as seen at the observed boundary:
/// `lambda_{1,n}` or `conj(lambda_{2,m})`.
pub fn adjoint_exponent_dd(params: &SystemParams, mode: ModeId) -> (Dd, Dd) {
    match mode {
        ModeId::Parabolic(n) => (parabolic_eigenvalue_dd(params, n), Dd::ZERO),
        ModeId::Hyperbolic(m) => {
            let (r, i) = hyperbolic_eigenvalue_dd(params, m);
            (r, -i)
        }
    }
}

/// Family `{lambda_{1,n}} u {conj lambda_{2,m}}` with the boundary observation coefficients as amplitudes.
pub fn observation_family(params: &SystemParams, profile: &CouplingProfile, truncation: &Truncation) -> Result<(ExponentialFamily, Vec<ModeId>)> {
    let modes = truncation.modes();
    let amps = modes
        .par_iter()
        .map(|m| obs_coefficient(params, profile, *m).map(|o| o.value))
        .collect::<Result<Vec<_>>>()?;
    let exps: Vec<(Dd, Dd)> = modes.iter().map(|m| adjoint_exponent_dd(params, *m)).collect();
    Ok((ExponentialFamily::from_dd(&exps, amps, params.horizon_t)?, modes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsEstimate {
    pub min_eig: f64,
    pub min_eig_log: f64,
    pub max_eig_log: f64,
    pub modes: Vec<ModeId>,
    /// Coefficients `xi` of the minimizing adjoint state, unit in the dual norm.
    pub witness: Vec<ScaledComplex>,
    pub precision: Precision,
    pub condition: f64,
}

/// Truncated observability constant: smallest eigenvalue of the observation
/// Gram matrix in the metric of `weights` (normally a dual space).
pub fn obs_constant_estimate(
    params: &SystemParams,
    profile: &CouplingProfile,
    truncation: &Truncation,
    weights: &WeightSequence,
    opts: &SolverOptions,
) -> Result<ObsEstimate> {
    params.validate()?;
    let (family, modes) = observation_family(params, profile, truncation)?;
    let log_w = modes
        .iter()
        .map(|m| weights.log_weight(*m).ok_or(CascadeError::SupportExceedsTruncation { mode: *m }))
        .collect::<Result<Vec<_>>>()?;
    let factor: Vec<f64> = log_w.iter().map(|w| -0.5 * w).collect();
    let spec = gram_spectrum(&family, &factor, opts, false)?;
    let witness = if spec.eigen.vectors.is_empty() {
        vec![]
    } else {
        spec.eigen.vectors[0]
            .iter()
            .zip(&factor)
            .map(|(v, f)| ScaledComplex::from_complex(v.conj()).scale_log(*f))
            .collect()
    };
    let min_log = spec.min_log();
    Ok(ObsEstimate {
        min_eig: min_log.exp(),
        min_eig_log: min_log,
        max_eig_log: spec.max_log(),
        modes,
        witness,
        precision: spec.precision,
        condition: spec.condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityEstimate {
    pub k_t: f64,
    /// `(n_h, K_T)` over the doubling sequence.
    pub profile: Vec<(u32, f64)>,
    /// First `n_h` whose value moved by less than 1% from the previous one.
    pub plateau_at: Option<u32>,
}

/// Largest eigenvalue of the observation Gram matrix with unit weights, over
/// `n_h = 1, 2, 4, ...` up to `truncation.n_h` (parabolic part fixed at `n_p`).
pub fn admissibility_constant(
    params: &SystemParams,
    profile: &CouplingProfile,
    truncation: &Truncation,
    opts: &SolverOptions,
) -> Result<AdmissibilityEstimate> {
    params.validate()?;
    let mut sizes = vec![];
    let mut h = 1u32;
    while h < truncation.n_h {
        sizes.push(h);
        h *= 2;
    }
    sizes.push(truncation.n_h.max(if truncation.n_h == 0 { 0 } else { 1 }));
    sizes.dedup();
    let values = sizes
        .par_iter()
        .map(|&nh| {
            let tr = Truncation { n_h: nh, ..*truncation };
            let (family, _) = observation_family(params, profile, &tr)?;
            let spec = gram_spectrum(&family, &vec![0.0; family.len()], opts, true)?;
            let top = spec.max_log();
            Ok((nh, if top == f64::NEG_INFINITY { 0.0 } else { top.exp() }))
        })
        .collect::<Result<Vec<_>>>()?;
    let plateau_at = values
        .windows(2)
        .find(|w| w[0].1 > 0.0 && (w[1].1 - w[0].1).abs() <= 0.01 * w[0].1)
        .map(|w| w[1].0);
    Ok(AdmissibilityEstimate {
        k_t: values.last().map(|v| v.1).unwrap_or(0.0),
        profile: values,
        plateau_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub horizon: f64,
    pub n_h: u32,
    pub min_eig: f64,
    pub min_eig_log: f64,
    pub max_eig: f64,
    pub precision: Precision,
    pub reliable: bool,
}

/// Smallest and largest Gram eigenvalues of `N` unit exponentials `i(2m+1)pi/(2L)`.
pub fn ingham_gap_profile(l: f64, t_list: &[f64], n_list: &[u32], opts: &SolverOptions) -> Result<Vec<GapRow>> {
    if !(l > 0.0) {
        return Err(CascadeError::invalid("length_L", "must be positive"));
    }
    if let Some(t) = t_list.iter().find(|t| !(**t > 0.0)) {
        return Err(CascadeError::invalid("T_list", format!("horizons must be positive, got {t}")));
    }
    let grid: Vec<(f64, u32)> = t_list.iter().flat_map(|t| n_list.iter().map(move |n| (*t, *n))).collect();
    grid.par_iter()
        .map(|&(t, n)| {
            if n == 0 {
                return Ok(GapRow {
                    horizon: t,
                    n_h: 0,
                    min_eig: 0.0,
                    min_eig_log: f64::NEG_INFINITY,
                    max_eig: 0.0,
                    precision: Precision::Double,
                    reliable: true,
                });
            }
            let fam = ExponentialFamily::hyperbolic_unit(l, n as usize, t)?;
            match gram_spectrum(&fam, &vec![0.0; n as usize], opts, true) {
                Ok(s) => Ok(GapRow {
                    horizon: t,
                    n_h: n,
                    min_eig: s.min_log().exp(),
                    min_eig_log: s.min_log(),
                    max_eig: s.max_log().exp(),
                    precision: s.precision,
                    reliable: s.reliable,
                }),
                // Not even positive definite at the highest precision: the smallest eigenvalue is below resolution.
                Err(CascadeError::IllConditioned { precision, .. }) => Ok(GapRow {
                    horizon: t,
                    n_h: n,
                    min_eig: 0.0,
                    min_eig_log: f64::NEG_INFINITY,
                    max_eig: f64::NAN,
                    precision,
                    reliable: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;
    use crate::spaces::{build_weights, SpaceTag};
    use crate::spectral::Variant;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite trapezoid on `panels` panels of the Gram integrand.
    fn trapezoid_gram(exps: &[Complex64], amps: &[Complex64], t: f64, panels: usize) -> Vec<Complex64> {
        let n = exps.len();
        let h = t / panels as f64;
        let mut g = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..=panels {
            let x = i as f64 * h;
            let w = if i == 0 || i == panels { 0.5 * h } else { h };
            let f: Vec<Complex64> = exps.iter().zip(amps).map(|(l, c)| c * (l * x).exp()).collect();
            for j in 0..n {
                for k in 0..n {
                    g[j * n + k] += f[j] * f[k].conj() * w;
                }
            }
        }
        g
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn scalar_examples() {
        let f = ExponentialFamily::new(vec![Complex64::new(-0.7, 0.0)], vec![ScaledComplex::ONE], 2.0).unwrap();
        let g = exp_gram(&f).unwrap().get(0, 0).to_complex();
        let exact = ((-1.4f64 * 2.0).exp() - 1.0) / -1.4;
        assert!((g.re - exact).abs() < 1e-15 && g.im == 0.0);
        let f = ExponentialFamily::new(vec![Complex64::new(0.0, 3.3)], vec![ScaledComplex::ONE], 1.7).unwrap();
        assert!((exp_gram(&f).unwrap().get(0, 0).re() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn three_member_family_against_trapezoid() {
        let exps = vec![Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-2.0, 0.0)];
        let amps = vec![Complex64::new(1.0, 0.0); 3];
        let f = ExponentialFamily::new(exps.clone(), amps.iter().map(|a| (*a).into()).collect(), 1.0).unwrap();
        let g = exp_gram(&f).unwrap();
        let q = trapezoid_gram(&exps, &amps, 1.0, 100_000);
        for j in 0..3 {
            for k in 0..3 {
                let a = g.get(j, k).to_complex();
                assert!((a - q[j * 3 + k]).norm() < 1e-8 * a.norm(), "({j},{k})");
            }
        }
    }

    #[test]
    fn random_families_against_trapezoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let t = rng.gen_range(0.2..3.0);
            let exps: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-8.0..8.0))).collect();
            let amps: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
            let f = ExponentialFamily::new(exps.clone(), amps.iter().map(|a| (*a).into()).collect(), t).unwrap();
            let g = exp_gram(&f).unwrap();
            let q = trapezoid_gram(&exps, &amps, t, 100_000);
            for j in 0..n {
                for k in 0..n {
                    let a = g.get(j, k).to_complex();
                    let scale = (g.get(j, j).abs() * g.get(k, k).abs()).sqrt();
                    assert!((a - q[j * n + k]).norm() < 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn removable_singularity_is_continuous() {
        let t = 1.3;
        for eps in [1e-7, 1e-9, 1e-11, 0.0] {
            let s = Complex64::new(eps, -eps);
            let v = exp_integral(s, t).to_complex();
            let mut exact = Complex64::new(0.0, 0.0);
            let mut term = Complex64::new(t, 0.0);
            for k in 1..12 {
                exact += term;
                term *= s * t / (k as f64 + 1.0);
            }
            assert!((v - exact).norm() < 1e-14 * t);
        }
        // Cancelling real parts with a growing member.
        let f = ExponentialFamily::new(
            vec![Complex64::new(3.0, 0.0), Complex64::new(-3.0, 1e-12)],
            vec![ScaledComplex::ONE; 2],
            1.0,
        )
        .unwrap();
        let g = exp_gram(&f).unwrap();
        assert!((g.get(0, 1).to_complex() - Complex64::new(1.0, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn rejects_repeated_exponents() {
        let z = Complex64::new(0.0, 1.0);
        assert!(ExponentialFamily::new(vec![z, z], vec![ScaledComplex::ONE; 2], 1.0).is_err());
    }

    #[test]
    fn single_unit_exponential_has_eigenvalue_t() {
        let rows = ingham_gap_profile(1.0, &[0.7, 2.5], &[1], &opts()).unwrap();
        for r in rows {
            assert!((r.min_eig - r.horizon).abs() < 1e-14);
        }
    }

    #[test]
    fn gram_is_hermitian_psd_and_spectrum_matches_dense_solver() {
        let f = ExponentialFamily::hyperbolic_unit(1.0, 9, 2.2).unwrap();
        let g = exp_gram(&f).unwrap();
        let m = g.to_complex();
        for j in 0..9 {
            for k in 0..9 {
                assert!((m.get(j, k) - m.get(k, j).conj()).norm() < 1e-15);
            }
        }
        let dense = hermitian_eigenvalues(&m);
        let trace: f64 = (0..9).map(|j| m.get(j, j).re).sum();
        assert!(dense[0] >= -1e-10 * trace);
        let s = gram_spectrum(&f, &[0.0; 9], &opts(), false).unwrap();
        for (a, b) in dense.iter().zip(&s.eigen.log_eigenvalues) {
            assert!((a - b.exp()).abs() < 1e-12 * trace);
        }
    }

    #[test]
    fn monotone_in_horizon() {
        let f1 = ExponentialFamily::hyperbolic_unit(1.0, 6, 1.1).unwrap();
        let f2 = ExponentialFamily::hyperbolic_unit(1.0, 6, 2.9).unwrap();
        let a = exp_gram(&f1).unwrap().to_complex();
        let b = exp_gram(&f2).unwrap().to_complex();
        let d = Mat::from_fn(6, |j, k| b.get(j, k) - a.get(j, k));
        let ev = hermitian_eigenvalues(&d);
        assert!(ev[0] >= -1e-12);
    }

    #[test]
    fn ingham_threshold_values() {
        let rows = ingham_gap_profile(1.0, &[2.5, 1.5], &[16, 64], &opts()).unwrap();
        let get = |t: f64, n: u32| rows.iter().find(|r| r.horizon == t && r.n_h == n).unwrap();
        assert!((get(2.5, 16).min_eig - 2.0).abs() < 1e-9);
        assert!((get(2.5, 64).min_eig - 2.0).abs() < 1e-9);
        assert!((get(1.5, 16).min_eig / 8.69e-5 - 1.0).abs() < 0.01);
        assert_eq!(get(1.5, 64).precision, Precision::DoubleDouble);
        assert!(get(1.5, 64).min_eig < 1e-15);
    }

    #[test]
    fn short_horizon_decays() {
        let rows = ingham_gap_profile(1.0, &[1.0], &[2, 4, 8, 12], &opts()).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].min_eig < 0.2 * w[0].min_eig);
        }
    }

    #[test]
    fn double_ceiling_reports_ill_conditioning() {
        let o = SolverOptions {
            max_precision: Precision::Double,
            ..opts()
        };
        let f = ExponentialFamily::hyperbolic_unit(1.0, 64, 1.5).unwrap();
        assert!(matches!(gram_spectrum(&f, &[0.0; 64], &o, false), Err(CascadeError::IllConditioned { .. })));
    }

    #[test]
    fn witness_reproduces_min_eigenvalue() {
        let p = SystemParams::new(1.0, 0.5, 2.5, Variant::WaveHeat).unwrap();
        let prof = CouplingProfile::Constant { beta0: 1.0 };
        let tr = Truncation::new(2, 2);
        let w = build_weights(&p, &prof, SpaceTag::V0prime, &tr).unwrap();
        let est = obs_constant_estimate(&p, &prof, &tr, &w, &opts()).unwrap();
        let (fam, modes) = observation_family(&p, &prof, &tr).unwrap();
        // Direct quadrature of int |sum c_k xi_k e^{l_k t}|^2 over 2*10^5 trapezoid panels.
        let panels = 200_000;
        let h = 2.5 / panels as f64;
        let mut acc = 0.0;
        for i in 0..=panels {
            let t = i as f64 * h;
            let wt = if i == 0 || i == panels { 0.5 * h } else { h };
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..modes.len() {
                s += (fam.amplitudes[k] * est.witness[k]).to_complex() * (fam.exponents[k] * t).exp();
            }
            acc += wt * s.norm_sqr();
        }
        let norm_sq: f64 = est
            .witness
            .iter()
            .zip(&modes)
            .map(|(x, m)| x.abs().powi(2) * w.log_weight(*m).unwrap().exp())
            .sum();
        assert!((norm_sq - 1.0).abs() < 1e-10);
        assert!((acc - est.min_eig).abs() < 1e-6 * est.min_eig, "{acc} vs {}", est.min_eig);
        // Same value through the assembled Gram matrix.
        let g = exp_gram(&fam).unwrap();
        let q = g.quadratic_form(&est.witness).re();
        assert!((q - est.min_eig).abs() < 1e-8 * est.min_eig);
    }

    #[test]
    fn obs_estimate_nonincreasing_in_truncation() {
        let p = SystemParams::new(1.0, 0.0, 2.5, Variant::WaveHeat).unwrap();
        let prof = CouplingProfile::Constant { beta0: 1.0 };
        let mut last = f64::INFINITY;
        for nh in [1u32, 2, 4, 8] {
            let tr = Truncation::new(3, nh);
            let w = build_weights(&p, &prof, SpaceTag::V0prime, &tr).unwrap();
            let e = obs_constant_estimate(&p, &prof, &tr, &w, &opts()).unwrap();
            assert!(e.min_eig > 0.0);
            assert!(e.min_eig <= last * (1.0 + 1e-9));
            last = e.min_eig;
        }
    }

    #[test]
    fn hyperbolic_obs_constant_stabilizes_above_threshold() {
        let p = SystemParams::new(1.0, 0.0, 2.5, Variant::WaveHeat).unwrap();
        let prof = CouplingProfile::Constant { beta0: 1.0 };
        let est = |nh: u32, t: f64| {
            let q = p.with_horizon(t);
            let tr = Truncation::new(0, nh);
            let w = build_weights(&q, &prof, SpaceTag::Vprime, &tr).unwrap();
            obs_constant_estimate(&q, &prof, &tr, &w, &opts()).unwrap().min_eig
        };
        let (a, b) = (est(16, 2.5), est(64, 2.5));
        assert!((b / a - 1.0).abs() < 0.1);
        let (a, b) = (est(8, 1.5), est(32, 1.5));
        assert!(b < 0.1 * a);
    }

    #[test]
    fn admissibility_plateau_and_parabolic_tail() {
        let p = SystemParams::new(1.0, 0.0, 2.5, Variant::WaveHeat).unwrap();
        let prof = CouplingProfile::Constant { beta0: 1.0 };
        let k = admissibility_constant(&p, &prof, &Truncation::new(0, 128), &opts()).unwrap();
        assert!(k.plateau_at.is_some_and(|n| n <= 128));
        for w in k.profile.windows(2) {
            assert!(w[1].1 >= w[0].1 * (1.0 - 1e-12));
        }
        let a = admissibility_constant(&p, &prof, &Truncation::new(10, 16), &opts()).unwrap().k_t;
        let b = admissibility_constant(&p, &prof, &Truncation::new(14, 16), &opts()).unwrap().k_t;
        assert!((b / a - 1.0).abs() < 0.05);
        let zero = ExponentialFamily::new(vec![Complex64::new(-1.0, 0.0), Complex64::new(-4.0, 0.0)], vec![ScaledComplex::ZERO; 2], 2.5).unwrap();
        let z = gram_spectrum(&zero, &[0.0, 0.0], &opts(), true).unwrap();
        assert_eq!(z.max_log(), f64::NEG_INFINITY);
    }

    #[test]
    fn alternating_order() {
        assert_eq!(alternating_indices(5), vec![0, -1, 1, -2, 2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn prop_gram_psd(seed in 0u64..1000, n in 1usize..6, t in 0.3f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exps: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-6.0..6.0))).collect();
            let amps: Vec<ScaledComplex> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).into()).collect();
            let f = ExponentialFamily::new(exps, amps, t).unwrap();
            let m = exp_gram(&f).unwrap().to_complex();
            let ev = hermitian_eigenvalues(&m);
            let trace: f64 = (0..n).map(|j| m.get(j, j).re).sum();
            prop_assert!(ev[0] >= -1e-10 * trace);
        }
    }
}
