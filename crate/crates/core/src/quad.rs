//! Adaptive Gauss–Legendre quadrature on finite intervals.
//!
//! Every integral in the crate is first transformed so that the integrand is
//! smooth on a closed interval (endpoint inverse square roots are removed by a
//! `sin²` substitution at the call site), so a Gauss rule with bisection is
//! enough.

use std::ops::{Add, Mul, Sub};
use std::sync::LazyLock;

use num_complex::Complex64;

use crate::error::{Result, TopError};

const ORDER: usize = 16;
const MAX_DEPTH: u32 = 48;
const MAX_RULES: usize = 200_000;
const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Values that can be summed by the quadrature rule.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

static RULE: LazyLock<Rule> = LazyLock::new(legendre_rule);

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule() -> Rule {
    let n = ORDER;
    let mut nodes = [0.0; ORDER];
    let mut weights = [0.0; ORDER];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Rule { nodes, weights }
}

/// Fixed 16-point Gauss–Legendre rule on [a, b].
pub fn gauss_legendre<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> T {
    rule_with_abs(f, a, b).0
}

/// The rule applied to `f` and to `|f|`.
fn rule_with_abs<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let rule = &*RULE;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = T::zero();
    let mut abs = 0.0;
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        let v = f(mid + half * x);
        acc = acc + v * (*w);
        abs += v.magnitude() * w;
    }
    (acc * half, abs * half.abs())
}

/// Adaptive bisection with a relative tolerance on the whole integral.
pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<T> {
    integrate_with(f, a, b, rel_tol, 0.0)
}

/// As [`integrate`], accepting an error of `max(rel_tol ∫|f|, abs_tol)`.
pub fn integrate_with<T: QuadValue, F: Fn(f64) -> T>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (coarse, abs) = rule_with_abs(&f, a, b);
    // relative to ∫|f| so that cancelling integrands still terminate
    let tol = (rel_tol * abs).max(abs_tol).max(1e-300);
    let mut budget = Budget { ok: true, rules: 0 };
    let value = refine(&f, a, b, coarse, tol, 0, &mut budget);
    if budget.ok {
        Ok(value)
    } else {
        Err(TopError::Quadrature(format!(
            "no convergence on [{a}, {b}] at tolerance {rel_tol:e}"
        )))
    }
}

struct Budget {
    ok: bool,
    rules: usize,
}

fn refine<T: QuadValue, F: Fn(f64) -> T>(
    f: &F,
    a: f64,
    b: f64,
    whole: T,
    tol: f64,
    depth: u32,
    budget: &mut Budget,
) -> T {
    budget.rules += 2;
    let m = 0.5 * (a + b);
    let (left, abs_l) = rule_with_abs(f, a, m);
    let (right, abs_r) = rule_with_abs(f, m, b);
    let both = left + right;
    // never ask for less than rounding noise
    let tol = tol.max(ROUNDING * (abs_l + abs_r));
    if (both - whole).magnitude() <= tol {
        return both;
    }
    if depth >= MAX_DEPTH || budget.rules >= MAX_RULES {
        budget.ok = false;
        return both;
    }
    // Floor keeps roundoff from forcing needless bisection.
    let sub_tol = 0.5 * tol;
    refine(f, a, m, left, sub_tol, depth + 1, budget) + refine(f, m, b, right, sub_tol, depth + 1, budget)
}
