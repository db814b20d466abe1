//! Globally adaptive 7/15-point Gauss-Kronrod quadrature for complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{CascadeError, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 10_000,
        }
    }
}

impl QuadOptions {
    /// Tolerances for an integrand whose L1 norm is about `l1`: the absolute
    /// target sits a few hundred ulps above the roundoff floor of the sum.
    pub fn scaled(l1: f64) -> Self {
        QuadOptions {
            abs_tol: 1e-13 * l1.max(f64::MIN_POSITIVE),
            ..QuadOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub subdivisions: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    let value = k * h;
    let error = ((k - g) * h).norm();
    Panel { a, b, value, error }
}

/// Integrates `f` over `[nodes[0], nodes.last()]`, starting from the panels
/// delimited by `nodes` (sorted; duplicates ignored).
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, nodes: &[f64], opts: &QuadOptions) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    for w in nodes.windows(2) {
        if w[1] > w[0] {
            let p = kronrod(&f, w[0], w[1]);
            value += p.value;
            error += p.error;
            heap.push(p);
        }
    }
    let mut subdivisions = heap.len();
    let target = |v: Complex64| opts.abs_tol.max(opts.rel_tol * v.norm());
    while error > target(value) {
        if subdivisions >= opts.max_subdivisions {
            return Err(CascadeError::QuadratureNonConvergence {
                achieved: error,
                tolerance: target(value),
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel at floating-point resolution; nothing left to gain.
            return Err(CascadeError::QuadratureNonConvergence {
                achieved: error,
                tolerance: target(value),
            });
        }
        let l = kronrod(&f, worst.a, mid);
        let r = kronrod(&f, mid, worst.b);
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        subdivisions += 1;
        // Resum periodically to stop drift from the running updates.
        if subdivisions % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    value = heap.iter().map(|p| p.value).sum();
    error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        subdivisions,
    })
}

/// Sorted panel boundaries on `[a, b]` that contain `breaks` and have width at most `max_width`.
pub fn panel_nodes(a: f64, b: f64, breaks: &[f64], max_width: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = vec![a, b];
    pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let k = if max_width > 0.0 && max_width.is_finite() {
            ((len / max_width).ceil() as usize).clamp(1, 4096)
        } else {
            1
        };
        for i in 0..k {
            out.push(w[0] + len * i as f64 / k as f64);
        }
    }
    out.push(b);
    out
}

/// Nodes and weights of the 3-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre3(a: f64, b: f64) -> [(f64, f64); 3] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let x = (0.6f64).sqrt();
    [
        (c - h * x, h * 5.0 / 9.0),
        (c, h * 8.0 / 9.0),
        (c + h * x, h * 5.0 / 9.0),
    ]
}
