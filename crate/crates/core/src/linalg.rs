//! Dense Hermitian kernels in double and double-double precision.
//!
//! The Gram matrices met here have the form `diag(s) K diag(s)^*` where `K`
//! has unit diagonal and `s` spans hundreds of orders of magnitude. Only `K`
//! carries genuine ill-conditioning, so it is factored in working precision
//! while `s` is applied through exact binary exponents.

use std::fmt;
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_complex::{Complex, Complex64};
use num_traits::{Num, NumAssign};
use serde::{Deserialize, Serialize};

use crate::dd::{pow2, Dd};
use crate::scaled::ScaledComplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Double,
    DoubleDouble,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Double => "double",
            Precision::DoubleDouble => "double-double",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "double" | "f64" => Ok(Precision::Double),
            "double-double" | "double_double" | "dd" => Ok(Precision::DoubleDouble),
            other => Err(format!("unknown precision `{other}` (expected double or double-double)")),
        }
    }
}

/// Controls the precision ladder shared by the Gram eigensolver and the HUM solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Highest precision the ladder may climb to.
    pub max_precision: Precision,
    /// Escalate from double when the condition estimate of the normalized kernel exceeds this.
    pub escalate_condition: f64,
    /// Condition estimate above which double precision is declared unusable.
    pub ill_condition_double: f64,
    /// Same, for double-double.
    pub ill_condition_dd: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_precision: Precision::DoubleDouble,
            escalate_condition: 1e12,
            ill_condition_double: 1e15,
            ill_condition_dd: 1e30,
        }
    }
}

impl SolverOptions {
    pub fn ill_threshold(&self, p: Precision) -> f64 {
        match p {
            Precision::Double => self.ill_condition_double,
            Precision::DoubleDouble => self.ill_condition_dd,
        }
    }
}

/// Scalar field usable by the generic kernels.
pub trait Real:
    Copy
    + Send
    + Sync
    + Num
    + NumAssign
    + Neg<Output = Self>
    + PartialOrd
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + fmt::Debug
    + 'static
{
    const EPS: f64;
    const PRECISION: Precision;
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn expm1(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn ldexp(self, k: i32) -> Self;
    fn pi() -> Self;
}

impl Real for f64 {
    const EPS: f64 = f64::EPSILON;
    const PRECISION: Precision = Precision::Double;
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn expm1(self) -> Self {
        f64::exp_m1(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn ldexp(self, k: i32) -> Self {
        if (-1000..=1000).contains(&k) {
            self * pow2(k)
        } else {
            let h = k / 2;
            self * pow2(h) * pow2(k - h)
        }
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
}

impl Real for Dd {
    const EPS: f64 = Dd::EPSILON;
    const PRECISION: Precision = Precision::DoubleDouble;
    fn of(x: f64) -> Self {
        Dd::from_f64(x)
    }
    fn f64(self) -> f64 {
        self.to_f64()
    }
    fn sqrt(self) -> Self {
        Dd::sqrt(self)
    }
    fn abs(self) -> Self {
        Dd::abs(self)
    }
    fn exp(self) -> Self {
        Dd::exp(self)
    }
    fn expm1(self) -> Self {
        Dd::expm1(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        Dd::sin_cos(self)
    }
    fn ldexp(self, k: i32) -> Self {
        if (-1000..=1000).contains(&k) {
            Dd::ldexp(self, k)
        } else {
            let h = k / 2;
            Dd::ldexp(Dd::ldexp(self, h), k - h)
        }
    }
    fn pi() -> Self {
        Dd::PI
    }
}

pub type C<T> = Complex<T>;

#[inline]
pub fn cz<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

#[inline]
pub fn cof<T: Real>(z: Complex64) -> C<T> {
    C::new(T::of(z.re), T::of(z.im))
}

#[inline]
pub fn c64<T: Real>(z: C<T>) -> Complex64 {
    Complex64::new(z.re.f64(), z.im.f64())
}

#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

/// `e^z - 1` for complex `z` without cancellation near zero.
pub fn cexpm1<T: Real>(z: C<T>) -> C<T> {
    // Re: expm1(x) cos y - 2 sin^2(y/2); Im: e^x sin y.
    let (s, c) = z.im.sin_cos();
    let (sh, _) = (z.im * T::of(0.5)).sin_cos();
    let em1 = z.re.expm1();
    let re = em1 * c - T::of(2.0) * sh * sh;
    let im = (em1 + T::one()) * s;
    C::new(re, im)
}

pub fn cexp<T: Real>(z: C<T>) -> C<T> {
    let (s, c) = z.im.sin_cos();
    let e = z.re.exp();
    C::new(e * c, e * s)
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Mat { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }
}

/// Lower Cholesky factor `K = L L^*` of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Real> {
    pub l: Mat<C<T>>,
}

/// Index of the failing pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite(pub usize);

impl<T: Real> Cholesky<T> {
    pub fn factor(k: &Mat<C<T>>) -> Result<Self, NotPositiveDefinite> {
        let n = k.n;
        let mut l = Mat::from_fn(n, |_, _| cz::<T>());
        for j in 0..n {
            let mut d = k.get(j, j).re;
            for p in 0..j {
                d -= l.get(j, p).norm_sqr();
            }
            if !(d > T::zero()) {
                return Err(NotPositiveDefinite(j));
            }
            let djj = d.sqrt();
            l.set(j, j, C::new(djj, T::zero()));
            for i in (j + 1)..n {
                let mut s = k.get(i, j);
                for p in 0..j {
                    s -= l.get(i, p) * l.get(j, p).conj();
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn n(&self) -> usize {
        self.l.n
    }

    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.n();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s -= self.l.get(i, p) * y[p];
            }
            y[i] = s / self.l.get(i, i).re;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in (i + 1)..n {
                s -= self.l.get(p, i).conj() * y[p];
            }
            y[i] = s / self.l.get(i, i).re;
        }
        y
    }

    /// Smallest squared pivot; bounds the smallest eigenvalue from above.
    pub fn min_pivot_sq(&self) -> f64 {
        (0..self.n())
            .map(|i| {
                let v = self.l.get(i, i).re.f64();
                v * v
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Condition estimate of the factored matrix `k`: a few steps of power and
    /// inverse power iteration, combined with the pivot bound.
    pub fn condition_estimate(&self, k: &Mat<C<T>>) -> f64 {
        let n = self.n();
        if n == 0 {
            return 1.0;
        }
        let start: Vec<C<T>> = (0..n)
            .map(|i| C::new(T::of(1.0 + 0.37 * ((i * 7919) % 13) as f64), T::of(0.1 * (i % 5) as f64)))
            .collect();
        let norm = |v: &[C<T>]| v.iter().map(|z| z.norm_sqr().f64()).sum::<f64>().sqrt();
        let scale = |v: &mut Vec<C<T>>| {
            let s = norm(v);
            if s > 0.0 {
                let inv = T::of(1.0 / s);
                for z in v.iter_mut() {
                    *z = *z * inv;
                }
            }
        };
        let mut v = start.clone();
        scale(&mut v);
        let mut inv_growth = 1.0;
        for _ in 0..6 {
            let w = self.solve(&v);
            inv_growth = norm(&w);
            v = w;
            scale(&mut v);
        }
        let mut u = start;
        scale(&mut u);
        let mut growth = 1.0;
        for _ in 0..6 {
            let w = mat_vec(k, &u);
            growth = norm(&w);
            u = w;
            scale(&mut u);
        }
        let inv_bound = inv_growth.max(1.0 / self.min_pivot_sq());
        growth.max(1.0) * inv_bound
    }
}

pub fn mat_vec<T: Real>(k: &Mat<C<T>>, v: &[C<T>]) -> Vec<C<T>> {
    let n = k.n;
    (0..n)
        .map(|i| {
            let mut s = cz::<T>();
            for j in 0..n {
                s += k.get(i, j) * v[j];
            }
            s
        })
        .collect()
}

/// Solves `K z = b` by Cholesky with a few steps of iterative refinement.
/// Returns the solution and the relative residual `|b - K z| / |b|`.
pub fn solve_refined<T: Real>(k: &Mat<C<T>>, chol: &Cholesky<T>, b: &[C<T>]) -> (Vec<C<T>>, f64) {
    let norm = |v: &[C<T>]| v.iter().map(|z| z.norm_sqr().f64()).sum::<f64>().sqrt();
    let bn = norm(b).max(f64::MIN_POSITIVE);
    let mut z = chol.solve(b);
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        let kz = mat_vec(k, &z);
        let r: Vec<C<T>> = b.iter().zip(&kz).map(|(bi, ki)| *bi - *ki).collect();
        let rel = norm(&r) / bn;
        best = rel;
        if rel < 4.0 * T::EPS {
            break;
        }
        let dz = chol.solve(&r);
        for (zi, di) in z.iter_mut().zip(dz) {
            *zi += di;
        }
    }
    let kz = mat_vec(k, &z);
    let r: Vec<C<T>> = b.iter().zip(&kz).map(|(bi, ki)| *bi - *ki).collect();
    let rel = norm(&r) / bn;
    (z, rel.min(best.max(rel)))
}

/// Eigen-decomposition of `A = diag(s) K diag(s)^*` from the Cholesky factor of `K`.
#[derive(Debug, Clone)]
pub struct GradedEigen {
    /// Natural logs of the eigenvalues, ascending (`-inf` for exact zeros).
    pub log_eigenvalues: Vec<f64>,
    /// Unit eigenvectors, column `j` for eigenvalue `j`, stored as `vectors[j][i]`.
    pub vectors: Vec<Vec<Complex64>>,
    pub sweeps: usize,
}

struct ScaledColumn<T: Real> {
    exp2: i64,
    g: Vec<C<T>>,
}

fn col_norm_sq<T: Real>(g: &[C<T>]) -> T {
    let mut s = T::zero();
    for z in g {
        s += z.norm_sqr();
    }
    s
}

fn renormalize<T: Real>(c: &mut ScaledColumn<T>) {
    let nsq = col_norm_sq(&c.g).f64();
    if nsq == 0.0 || !nsq.is_finite() {
        return;
    }
    // Keep the mantissa norm near 1.
    let k = (0.5 * nsq.log2()).round() as i64;
    if k != 0 {
        let f = T::one().ldexp(-(k as i32));
        for z in c.g.iter_mut() {
            *z = C::new(z.re * f, z.im * f);
        }
        c.exp2 += k;
    }
}

/// One-sided (Hestenes) Jacobi on `G = L^* diag(conj s)`; `G^* G = A`.
///
/// Columns carry separate binary exponents so that `s` may exceed the double
/// range. Accuracy of each eigenvalue is relative, governed by the condition
/// of `K` rather than that of `A`.
pub fn graded_eigen<T: Real>(chol: &Cholesky<T>, s: &[ScaledComplex]) -> GradedEigen {
    let n = chol.n();
    assert_eq!(n, s.len());
    let ln2 = std::f64::consts::LN_2;
    let mut cols: Vec<ScaledColumn<T>> = (0..n)
        .map(|j| {
            let sj = s[j];
            let (exp2, sigma) = if sj.is_zero() {
                (0i64, Complex64::new(0.0, 0.0))
            } else {
                let e = (sj.log_magnitude / ln2).floor();
                let frac = sj.log_magnitude - e * ln2;
                (e as i64, Complex64::from_polar(frac.exp(), -sj.phase))
            };
            let sig = cof::<T>(sigma);
            let g = (0..n)
                .map(|i| if i <= j { chol.l.get(j, i).conj() * sig } else { cz::<T>() })
                .collect();
            let mut c = ScaledColumn { exp2, g };
            renormalize(&mut c);
            c
        })
        .collect();
    let mut v: Vec<Vec<C<T>>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { C::new(T::one(), T::zero()) } else { cz::<T>() }).collect())
        .collect();

    let tol = 8.0 * T::EPS;
    let mut sweeps = 0;
    for sweep in 0..100 {
        sweeps = sweep + 1;
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (left, right) = cols.split_at_mut(j);
                let ci = &mut left[i];
                let cj = &mut right[0];
                let a = col_norm_sq(&ci.g);
                let b = col_norm_sq(&cj.g);
                if a.f64() == 0.0 || b.f64() == 0.0 {
                    continue;
                }
                let mut gam = cz::<T>();
                for (x, y) in ci.g.iter().zip(&cj.g) {
                    gam += x.conj() * *y;
                }
                let gabs = cabs(gam);
                if gabs.f64() <= tol * (a.f64() * b.f64()).sqrt() {
                    continue;
                }
                rotated = true;
                let delta = cj.exp2 - ci.exp2;
                let dabs = delta.unsigned_abs().min(4000) as i32;
                let two = T::of(2.0);
                let z = if delta >= 0 {
                    (b - a.ldexp(-2 * dabs)) / (two * gabs)
                } else {
                    (b.ldexp(-2 * dabs) - a) / (two * gabs)
                };
                let four_neg = T::one().ldexp(-2 * dabs);
                let zabs = z.abs();
                let sgn = if z.f64() >= 0.0 { T::one() } else { -T::one() };
                let tau = sgn / (zabs + (four_neg + z * z).sqrt());
                let c = T::one() / (T::one() + four_neg * tau * tau).sqrt();
                let ph = C::new(gam.re / gabs, -gam.im / gabs); // e^{-i phi}
                let ct = c * tau;
                let (fi_j, fj_i) = if delta >= 0 {
                    (ct, ct * four_neg)
                } else {
                    (ct * four_neg, ct)
                };
                for k in 0..n {
                    let gi = ci.g[k];
                    let gj = cj.g[k] * ph;
                    ci.g[k] = C::new(gi.re * c, gi.im * c) - C::new(gj.re * fi_j, gj.im * fi_j);
                    cj.g[k] = C::new(gi.re * fj_i, gi.im * fj_i) + C::new(gj.re * c, gj.im * c);
                }
                renormalize(ci);
                renormalize(cj);
                let t = tau.ldexp(-dabs);
                let st = c * t;
                let (vl, vr) = v.split_at_mut(j);
                let vi = &mut vl[i];
                let vj = &mut vr[0];
                for k in 0..n {
                    let xi = vi[k];
                    let xj = vj[k] * ph;
                    vi[k] = C::new(xi.re * c, xi.im * c) - C::new(xj.re * st, xj.im * st);
                    vj[k] = C::new(xi.re * st, xi.im * st) + C::new(xj.re * c, xj.im * c);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|j| {
            let nsq = col_norm_sq(&cols[j].g).f64();
            let le = if nsq == 0.0 {
                f64::NEG_INFINITY
            } else {
                nsq.ln() + 2.0 * cols[j].exp2 as f64 * ln2
            };
            (le, v[j].iter().map(|z| c64(*z)).collect())
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    GradedEigen {
        log_eigenvalues: pairs.iter().map(|p| p.0).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        sweeps,
    }
}

/// Eigenvalues of a small Hermitian matrix by cyclic two-sided Jacobi (double precision).
pub fn hermitian_eigenvalues(a: &Mat<Complex64>) -> Vec<f64> {
    let n = a.n;
    let mut m = a.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m.get(i, j).norm_sqr();
                }
            }
        }
        let diag: f64 = (0..n).map(|i| m.get(i, i).re.powi(2)).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                let g = apq.norm();
                if g == 0.0 {
                    continue;
                }
                let app = m.get(p, p).re;
                let aqq = m.get(q, q).re;
                let zeta = (aqq - app) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = apq / g; // e^{i phi}
                // Columns p, q of the unitary: [c, s e^{i phi}; -s e^{-i phi}, c] applied as J^* M J.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, mkp * c - mkq * e.conj() * s);
                    m.set(k, q, mkp * e * s + mkq * c);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, mpk * c - mqk * e * s);
                    m.set(q, k, mpk * e.conj() * s + mqk * c);
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m.get(i, i).re).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}
