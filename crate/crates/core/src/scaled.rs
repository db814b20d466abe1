//! Complex numbers stored as `(log|z|, arg z)`.
//!
//! The coupling coefficients and observation coefficients of the cascades
//! span hundreds of orders of magnitude (`cosh(n^2 pi^2)` already overflows
//! for `n = 9` on the unit interval), so every quantity that carries one of
//! these exponentials is kept in this representation until it is combined
//! into an O(1) result.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    if phase > -PI && phase <= PI {
        return phase;
    }
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    if p <= -PI {
        p += 2.0 * PI;
    }
    p
}

/// Numerically stable `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically stable `ln(sum_i e^{x_i})`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln cosh(x)` for any real `x`.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln |sinh(x)|` for any real `x` (`-inf` at zero).
pub fn log_abs_sinh(x: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        return f64::NEG_INFINITY;
    }
    if a < 1.0 {
        return a.sinh().ln();
    }
    a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2
}

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledComplex {
    /// Natural log of the modulus; `-inf` encodes zero.
    pub log_magnitude: f64,
    /// Argument in `(-pi, pi]`; always `0` for zero.
    pub phase: f64,
}

impl ScaledComplex {
    pub const ZERO: ScaledComplex = ScaledComplex {
        log_magnitude: f64::NEG_INFINITY,
        phase: 0.0,
    };
    pub const ONE: ScaledComplex = ScaledComplex {
        log_magnitude: 0.0,
        phase: 0.0,
    };

    pub fn from_log_phase(log_magnitude: f64, phase: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY || log_magnitude.is_nan() && phase.is_nan() {
            return Self::ZERO;
        }
        ScaledComplex {
            log_magnitude,
            phase: wrap_phase(phase),
        }
    }

    pub fn from_real(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            ScaledComplex {
                log_magnitude: x.abs().ln(),
                phase: if x < 0.0 { PI } else { 0.0 },
            }
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re == 0.0 && z.im == 0.0 {
            Self::ZERO
        } else {
            // hypot avoids overflow in |z|^2.
            ScaledComplex {
                log_magnitude: z.re.hypot(z.im).ln(),
                phase: wrap_phase(z.im.atan2(z.re)),
            }
        }
    }

    /// `sign * e^{log_magnitude}` for a real quantity already known in log form.
    pub fn from_signed_log(sign: f64, log_magnitude: f64) -> Self {
        if sign == 0.0 {
            Self::ZERO
        } else {
            Self::from_log_phase(log_magnitude, if sign < 0.0 { PI } else { 0.0 })
        }
    }

    /// `e^z` for complex `z`.
    pub fn exp(z: Complex64) -> Self {
        Self::from_log_phase(z.re, z.im)
    }

    /// `cosh(z)` with the dominant exponential factored out.
    pub fn cosh(z: Complex64) -> Self {
        // cosh z = e^{s z}/2 * (1 + e^{-2 s z}), s = sign(Re z).
        let s = if z.re >= 0.0 { 1.0 } else { -1.0 };
        let sz = z * s;
        let tail = (-2.0 * sz).exp();
        Self::exp(sz) * Self::from_complex((Complex64::new(1.0, 0.0) + tail) * 0.5)
    }

    /// `sinh(z)` with the dominant exponential factored out.
    pub fn sinh(z: Complex64) -> Self {
        if z.re.abs() < 1.0 {
            return Self::from_complex(z.sinh());
        }
        let s = if z.re >= 0.0 { 1.0 } else { -1.0 };
        let sz = z * s;
        let tail = (-2.0 * sz).exp();
        Self::exp(sz) * Self::from_complex((Complex64::new(1.0, 0.0) - tail) * (0.5 * s))
    }

    pub fn is_zero(&self) -> bool {
        self.log_magnitude == f64::NEG_INFINITY
    }

    pub fn is_finite(&self) -> bool {
        self.log_magnitude < f64::INFINITY && !self.log_magnitude.is_nan()
    }

    pub fn abs(&self) -> f64 {
        self.log_magnitude.exp()
    }

    pub fn conj(&self) -> Self {
        if self.is_zero() {
            *self
        } else {
            Self::from_log_phase(self.log_magnitude, -self.phase)
        }
    }

    pub fn recip(&self) -> Self {
        Self::from_log_phase(-self.log_magnitude, -self.phase)
    }

    pub fn powi(&self, k: i32) -> Self {
        if self.is_zero() {
            return if k == 0 { Self::ONE } else { Self::ZERO };
        }
        Self::from_log_phase(self.log_magnitude * k as f64, self.phase * k as f64)
    }

    pub fn sqrt(&self) -> Self {
        if self.is_zero() {
            return *self;
        }
        Self::from_log_phase(0.5 * self.log_magnitude, 0.5 * self.phase)
    }

    /// Multiplies by `e^{shift}` (real shift).
    pub fn scale_log(&self, shift: f64) -> Self {
        if self.is_zero() {
            *self
        } else {
            Self::from_log_phase(self.log_magnitude + shift, self.phase)
        }
    }

    /// Plain complex value; overflows to infinity or underflows to zero outside f64 range.
    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_magnitude.exp(), self.phase)
    }

    /// The value divided by `e^{shift}`, as a plain complex number.
    pub fn to_complex_scaled(&self, shift: f64) -> Complex64 {
        self.scale_log(-shift).to_complex()
    }

    pub fn re(&self) -> f64 {
        self.to_complex().re
    }

    pub fn im(&self) -> f64 {
        self.to_complex().im
    }

    /// `+1`, `-1` or `0` for values on the real axis (sign of the real part otherwise).
    pub fn real_sign(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else if self.phase.cos() >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `|Im z| / |z|`; zero for the zero value.
    pub fn relative_imag(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.phase.sin().abs()
        }
    }
}

impl Default for ScaledComplex {
    fn default() -> Self {
        Self::ZERO
    }
}

impl fmt::Debug for ScaledComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({:.6}) * e^(i {:.6})", self.log_magnitude, self.phase)
    }
}

impl From<f64> for ScaledComplex {
    fn from(x: f64) -> Self {
        Self::from_real(x)
    }
}

impl From<Complex64> for ScaledComplex {
    fn from(z: Complex64) -> Self {
        Self::from_complex(z)
    }
}

impl Mul for ScaledComplex {
    type Output = ScaledComplex;
    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        Self::from_log_phase(self.log_magnitude + rhs.log_magnitude, self.phase + rhs.phase)
    }
}

impl Div for ScaledComplex {
    type Output = ScaledComplex;
    fn div(self, rhs: Self) -> Self {
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::from_log_phase(self.log_magnitude - rhs.log_magnitude, self.phase - rhs.phase)
    }
}

impl Neg for ScaledComplex {
    type Output = ScaledComplex;
    fn neg(self) -> Self {
        if self.is_zero() {
            self
        } else {
            Self::from_log_phase(self.log_magnitude, self.phase + PI)
        }
    }
}

impl Add for ScaledComplex {
    type Output = ScaledComplex;
    fn add(self, rhs: Self) -> Self {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        // Rescale relative to the larger magnitude and add in plain arithmetic.
        let (big, small) = if self.log_magnitude >= rhs.log_magnitude {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let rel = small.log_magnitude - big.log_magnitude;
        // Work in the frame of `big` so that equal or opposite phases combine exactly.
        let d = small.phase - big.phase;
        let (sn, cs) = if d == 0.0 {
            (0.0, 1.0)
        } else if d.abs() == std::f64::consts::PI {
            (0.0, -1.0)
        } else {
            d.sin_cos()
        };
        let r = rel.exp();
        let s = Self::from_complex(Complex64::new(1.0 + r * cs, r * sn));
        if s.is_zero() {
            return Self::ZERO;
        }
        Self::from_log_phase(s.log_magnitude + big.log_magnitude, s.phase + big.phase)
    }
}

impl Sub for ScaledComplex {
    type Output = ScaledComplex;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl std::iter::Sum for ScaledComplex {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        // Accumulate relative to the running maximum to avoid repeated rescaling loss.
        let items: Vec<ScaledComplex> = iter.collect();
        let max = items
            .iter()
            .map(|x| x.log_magnitude)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let total: Complex64 = items.iter().map(|x| x.to_complex_scaled(max)).sum();
        Self::from_complex(total).scale_log(max)
    }
}
