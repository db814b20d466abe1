//! Weighted sequence spaces in which the cascades are controllable or observable.
//!
//! A state is identified with its modal coefficients; each space is a diagonal
//! weight on those coefficients. Weights are stored as natural logs because the
//! parabolic ones leave the double range after a dozen modes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{self, gamma, gamma_hw_scaled, half_slopes, ols};
use crate::error::{CascadeError, Result};
use crate::scaled::log_sum_exp;
use crate::spectral::{CouplingProfile, ModeId, SystemParams, Truncation, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceTag {
    V,
    Vprime,
    V0,
    V0prime,
    VHW,
    VHWprime,
    V0HW,
    V0HWprime,
}

impl SpaceTag {
    pub const ALL: [SpaceTag; 8] = [
        SpaceTag::V,
        SpaceTag::Vprime,
        SpaceTag::V0,
        SpaceTag::V0prime,
        SpaceTag::VHW,
        SpaceTag::VHWprime,
        SpaceTag::V0HW,
        SpaceTag::V0HWprime,
    ];

    pub fn variant(self) -> Variant {
        match self {
            SpaceTag::V | SpaceTag::Vprime | SpaceTag::V0 | SpaceTag::V0prime => Variant::WaveHeat,
            _ => Variant::HeatWave,
        }
    }

    pub fn is_dual(self) -> bool {
        matches!(self, SpaceTag::Vprime | SpaceTag::V0prime | SpaceTag::VHWprime | SpaceTag::V0HWprime)
    }

    pub fn is_null(self) -> bool {
        matches!(self, SpaceTag::V0 | SpaceTag::V0prime | SpaceTag::V0HW | SpaceTag::V0HWprime)
    }

    pub fn dual(self) -> SpaceTag {
        match self {
            SpaceTag::V => SpaceTag::Vprime,
            SpaceTag::Vprime => SpaceTag::V,
            SpaceTag::V0 => SpaceTag::V0prime,
            SpaceTag::V0prime => SpaceTag::V0,
            SpaceTag::VHW => SpaceTag::VHWprime,
            SpaceTag::VHWprime => SpaceTag::VHW,
            SpaceTag::V0HW => SpaceTag::V0HWprime,
            SpaceTag::V0HWprime => SpaceTag::V0HW,
        }
    }

    /// The primal space of the pair.
    pub fn primal(self) -> SpaceTag {
        if self.is_dual() {
            self.dual()
        } else {
            self
        }
    }
}

impl fmt::Display for SpaceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpaceTag::V => "V",
            SpaceTag::Vprime => "Vprime",
            SpaceTag::V0 => "V0",
            SpaceTag::V0prime => "V0prime",
            SpaceTag::VHW => "VHW",
            SpaceTag::VHWprime => "VHWprime",
            SpaceTag::V0HW => "V0HW",
            SpaceTag::V0HWprime => "V0HWprime",
        })
    }
}

impl std::str::FromStr for SpaceTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SpaceTag::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown space `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Parabolic,
    Hyperbolic,
}

/// Diagonal weights of one space. The key sets are the truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSequence {
    pub parabolic_log_weights: BTreeMap<u32, f64>,
    pub hyperbolic_log_weights: BTreeMap<i64, f64>,
    /// `nu` for the wave-heat spaces, `sigma` for the heat-wave ones.
    pub nu_or_sigma: f64,
    pub space_tag: SpaceTag,
}

impl WeightSequence {
    pub fn log_weight(&self, mode: ModeId) -> Option<f64> {
        match mode {
            ModeId::Parabolic(n) => self.parabolic_log_weights.get(&n).copied(),
            ModeId::Hyperbolic(m) => self.hyperbolic_log_weights.get(&m).copied(),
        }
    }

    pub fn dual(&self) -> WeightSequence {
        WeightSequence {
            parabolic_log_weights: self.parabolic_log_weights.iter().map(|(k, v)| (*k, -v)).collect(),
            hyperbolic_log_weights: self.hyperbolic_log_weights.iter().map(|(k, v)| (*k, -v)).collect(),
            nu_or_sigma: self.nu_or_sigma,
            space_tag: self.space_tag.dual(),
        }
    }

    /// `(family, index, log_weight)` rows in index order.
    pub fn rows(&self) -> Vec<(Family, i64, f64)> {
        let mut out: Vec<(Family, i64, f64)> =
            self.parabolic_log_weights.iter().map(|(n, w)| (Family::Parabolic, *n as i64, *w)).collect();
        out.extend(self.hyperbolic_log_weights.iter().map(|(m, w)| (Family::Hyperbolic, *m, *w)));
        out
    }
}

/// Finitely supported modal coefficients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalVector {
    pub parabolic_coeffs: BTreeMap<u32, Complex64>,
    pub hyperbolic_coeffs: BTreeMap<i64, Complex64>,
}

impl ModalVector {
    pub fn zero() -> Self {
        ModalVector::default()
    }

    pub fn get(&self, mode: ModeId) -> Complex64 {
        match mode {
            ModeId::Parabolic(n) => self.parabolic_coeffs.get(&n).copied(),
            ModeId::Hyperbolic(m) => self.hyperbolic_coeffs.get(&m).copied(),
        }
        .unwrap_or_default()
    }

    pub fn set(&mut self, mode: ModeId, v: Complex64) {
        match mode {
            ModeId::Parabolic(n) => {
                self.parabolic_coeffs.insert(n, v);
            }
            ModeId::Hyperbolic(m) => {
                self.hyperbolic_coeffs.insert(m, v);
            }
        }
    }

    pub fn from_modes(modes: &[ModeId], values: &[Complex64]) -> Self {
        let mut v = ModalVector::zero();
        for (m, x) in modes.iter().zip(values) {
            v.set(*m, *x);
        }
        v
    }

    pub fn to_modes(&self, modes: &[ModeId]) -> Vec<Complex64> {
        modes.iter().map(|m| self.get(*m)).collect()
    }

    pub fn entries(&self) -> Vec<(ModeId, Complex64)> {
        let mut v: Vec<(ModeId, Complex64)> =
            self.parabolic_coeffs.iter().map(|(n, x)| (ModeId::Parabolic(*n), *x)).collect();
        v.extend(self.hyperbolic_coeffs.iter().map(|(m, x)| (ModeId::Hyperbolic(*m), *x)));
        v
    }

    /// Unweighted `l2` norm of the coefficients.
    pub fn l2_norm(&self) -> f64 {
        self.entries().iter().map(|(_, x)| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> ModalVector {
        ModalVector {
            parabolic_coeffs: self.parabolic_coeffs.iter().map(|(k, v)| (*k, v * s)).collect(),
            hyperbolic_coeffs: self.hyperbolic_coeffs.iter().map(|(k, v)| (*k, v * s)).collect(),
        }
    }

    pub fn add(&self, other: &ModalVector) -> ModalVector {
        let mut out = self.clone();
        for (m, x) in other.entries() {
            out.set(m, out.get(m) + x);
        }
        out
    }

    /// Unweighted pairing `sum x_k conj(y_k)`.
    pub fn pairing(&self, other: &ModalVector) -> Complex64 {
        self.entries().iter().map(|(m, x)| x * other.get(*m).conj()).sum()
    }
}

/// A norm reported in log-space, with its value when representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNorm {
    pub log: f64,
    pub value: Option<f64>,
}

impl LogNorm {
    pub fn from_log(log: f64) -> Self {
        LogNorm {
            log,
            value: (log < 300.0).then(|| log.exp()),
        }
    }
}

/// `2 pi^2 (1 + T/L) / L`, or `2 pi^2 / L` for the null-controllability spaces.
pub fn nu_value(params: &SystemParams, null_mode: bool) -> f64 {
    let l = params.length_l;
    if null_mode {
        2.0 * PI * PI / l
    } else {
        2.0 * PI * PI * (1.0 + params.horizon_t / l) / l
    }
}

/// `2 pi^2 T / L^2`, or zero for the null spaces.
pub fn sigma_value(params: &SystemParams, null_mode: bool) -> f64 {
    if null_mode {
        0.0
    } else {
        2.0 * PI * PI * params.horizon_t / (params.length_l * params.length_l)
    }
}

/// Weights on explicit index sets.
pub fn build_weights_on(
    params: &SystemParams,
    profile: &CouplingProfile,
    tag: SpaceTag,
    parabolic: &[u32],
    hyperbolic: &[i64],
) -> Result<WeightSequence> {
    params.validate()?;
    profile.validate(params.length_l)?;
    let p = SystemParams {
        variant: tag.variant(),
        ..*params
    };
    let primal = tag.primal();
    let sign = if tag.is_dual() { -1.0 } else { 1.0 };
    let l = p.length_l;
    let (coef, par, hyp): (f64, Vec<(u32, f64)>, Vec<(i64, f64)>) = match primal.variant() {
        Variant::WaveHeat => {
            let nu = nu_value(&p, primal.is_null());
            let par = parabolic
                .par_iter()
                .map(|&n| {
                    let g = gamma(&p, profile, n)?;
                    if g.is_vanishing() {
                        return Err(CascadeError::VanishingCoupling {
                            mode: ModeId::Parabolic(n),
                        });
                    }
                    let nf = n as f64;
                    Ok((n, sign * (4.0 * nf.ln() - 2.0 * g.value.log_magnitude + nu * nf * nf)))
                })
                .collect::<Result<Vec<_>>>()?;
            (nu, par, hyperbolic.iter().map(|m| (*m, 0.0)).collect())
        }
        Variant::HeatWave => {
            let sigma = sigma_value(&p, primal.is_null());
            let par = parabolic
                .iter()
                .map(|&n| {
                    let nf = n as f64;
                    (n, sign * (sigma * nf * nf - 2.0 * nf.ln()))
                })
                .collect();
            let hyp = hyperbolic
                .par_iter()
                .map(|&m| {
                    let g = gamma_hw_scaled(&p, profile, m)?;
                    if g.is_vanishing() {
                        return Err(CascadeError::VanishingCoupling {
                            mode: ModeId::Hyperbolic(m),
                        });
                    }
                    let w = (2.0 * m.unsigned_abs() as f64 * PI * l).sqrt() - 2.0 * g.log_abs_gamma(l);
                    Ok((m, sign * w))
                })
                .collect::<Result<Vec<_>>>()?;
            (sigma, par, hyp)
        }
    };
    Ok(WeightSequence {
        parabolic_log_weights: par.into_iter().collect(),
        hyperbolic_log_weights: hyp.into_iter().collect(),
        nu_or_sigma: coef,
        space_tag: tag,
    })
}

/// Weights of `tag` on the modes of `truncation`.
pub fn build_weights(params: &SystemParams, profile: &CouplingProfile, tag: SpaceTag, truncation: &Truncation) -> Result<WeightSequence> {
    let par: Vec<u32> = (1..=truncation.n_p).collect();
    let hyp: Vec<i64> = truncation.hyperbolic_range().collect();
    build_weights_on(params, profile, tag, &par, &hyp)
}

/// `sqrt(sum w_k |x_k|^2)`, accumulated in log-space.
pub fn weighted_norm(vec: &ModalVector, weights: &WeightSequence) -> Result<LogNorm> {
    let mut terms = Vec::new();
    for (mode, x) in vec.entries() {
        let Some(lw) = weights.log_weight(mode) else {
            if x == Complex64::new(0.0, 0.0) {
                continue;
            }
            return Err(CascadeError::SupportExceedsTruncation { mode });
        };
        if x.norm() > 0.0 {
            terms.push(lw + 2.0 * x.norm().ln());
        }
    }
    Ok(LogNorm::from_log(0.5 * log_sum_exp(terms)))
}

/// Same as [`weighted_norm`] for coefficients given in log-magnitude form.
pub fn weighted_norm_log(entries: &[(ModeId, f64)], weights: &WeightSequence) -> Result<LogNorm> {
    let mut terms = Vec::new();
    for (mode, log_abs) in entries {
        let lw = weights
            .log_weight(*mode)
            .ok_or(CascadeError::SupportExceedsTruncation { mode: *mode })?;
        terms.push(lw + 2.0 * log_abs);
    }
    Ok(LogNorm::from_log(0.5 * log_sum_exp(terms)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub n: u32,
    pub log_weight: f64,
    pub log_asymptote: f64,
    /// `w_n / asymptote`.
    pub ratio: f64,
}

/// Compares the exact parabolic weight of an indicator profile with its
/// large-`n` expansion.
pub fn wn_asymptotic_compare(
    params: &SystemParams,
    a: f64,
    b: f64,
    beta0: f64,
    n_range: (u32, u32),
    null_mode: bool,
) -> Result<Vec<AsymptoticRow>> {
    params.validate()?;
    let l = params.length_l;
    let c = params.reaction_c;
    let profile = CouplingProfile::Indicator { beta0, a, b };
    profile.validate(l)?;
    if n_range.0 < 1 || n_range.1 < n_range.0 {
        return Err(CascadeError::invalid("n_range", "need 1 <= lower <= upper"));
    }
    let p = SystemParams {
        variant: Variant::WaveHeat,
        ..*params
    };
    let nu = nu_value(&p, null_mode);
    (n_range.0..=n_range.1)
        .map(|n| {
            let g = coupling::gamma_indicator_closed(&p, a, b, beta0, n);
            if g.is_vanishing() {
                return Err(CascadeError::VanishingCoupling {
                    mode: ModeId::Parabolic(n),
                });
            }
            let nf = n as f64;
            let k = nf * PI / l;
            let log_weight = 4.0 * nf.ln() - 2.0 * g.value.log_magnitude + nu * nf * nf;
            let theta = l / (nf * PI);
            let den = (k * b - theta).sin() - (-(k * k - c) * (b - a)).exp() * (k * a - theta).sin();
            let log_asymptote = (4.0 * PI.powi(4) / (beta0 * beta0 * l.powi(4))).ln()
                + 8.0 * nf.ln()
                + (nu - 2.0 * PI * PI * b / (l * l)) * nf * nf
                + 2.0 * c * b
                - 2.0 * den.abs().ln();
            Ok(AsymptoticRow {
                n,
                log_weight,
                log_asymptote,
                ratio: (log_weight - log_asymptote).exp(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub first_half_slope: f64,
    pub second_half_slope: f64,
    pub points: usize,
}

/// Least-squares slope of `log w` against `log |index|` over `index_range`
/// (magnitudes; hyperbolic indices of both signs are used).
pub fn sobolev_slope(weights: &WeightSequence, family: Family, index_range: (u64, u64)) -> Result<SlopeFit> {
    let (lo, hi) = index_range;
    if lo == 0 || (hi as f64) < 10.0 * lo as f64 {
        return Err(CascadeError::InsufficientRange {
            lower: lo as f64,
            upper: hi as f64,
            reason: "need at least one decade of indices".into(),
        });
    }
    let pts: Vec<(f64, f64)> = match family {
        Family::Parabolic => weights
            .parabolic_log_weights
            .iter()
            .filter(|(n, _)| (lo..=hi).contains(&(**n as u64)))
            .map(|(n, w)| ((*n as f64).ln(), *w))
            .collect(),
        Family::Hyperbolic => weights
            .hyperbolic_log_weights
            .iter()
            .filter(|(m, _)| (lo..=hi).contains(&m.unsigned_abs()))
            .map(|(m, w)| ((m.unsigned_abs() as f64).ln(), *w))
            .collect(),
    };
    let span = |p: &[(f64, f64)]| {
        let mn = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let mx = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        mx - mn
    };
    if pts.len() < 4 || span(&pts) < 10f64.ln() - 1e-12 {
        return Err(CascadeError::InsufficientRange {
            lower: lo as f64,
            upper: hi as f64,
            reason: "weights do not cover a decade inside the range".into(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (s1, s2, accelerating) = half_slopes(&x, &y);
    if accelerating {
        return Err(CascadeError::NonPolynomialWeights {
            trend: s2 - s1,
            first_slope: s1,
            last_slope: s2,
        });
    }
    let (c0, c1, residual) = ols(&x, &y);
    Ok(SlopeFit {
        slope: c1,
        intercept: c0,
        residual,
        first_half_slope: s1,
        second_half_slope: s2,
        points: x.len(),
    })
}
