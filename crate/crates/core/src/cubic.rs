//! Real roots of monic cubics `u³ + c2 u² + c1 u + c0`.
//!
//! The trigonometric form handles the three-real-root case without complex
//! arithmetic. Each root is then polished with Newton's method, and nearly
//! coincident pairs are re-derived from the critical point between them, which
//! keeps double roots accurate to `√ε` of the coefficient noise instead of
//! losing half the digits.

use std::f64::consts::PI;

/// Outcome of [`solve_monic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CubicRoots {
    /// Three real roots, ascending (multiplicities repeated).
    Three([f64; 3]),
    /// A single real root; the other two are a complex-conjugate pair.
    One(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonicCubic {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl MonicCubic {
    pub fn from_roots(r: [f64; 3]) -> Self {
        MonicCubic {
            c2: -(r[0] + r[1] + r[2]),
            c1: r[0] * r[1] + r[0] * r[2] + r[1] * r[2],
            c0: -(r[0] * r[1] * r[2]),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        ((u + self.c2) * u + self.c1) * u + self.c0
    }

    pub fn deriv(&self, u: f64) -> f64 {
        (3.0 * u + 2.0 * self.c2) * u + self.c1
    }

    pub fn second_deriv(&self, u: f64) -> f64 {
        6.0 * u + 2.0 * self.c2
    }

    /// Bound on the rounding error of [`MonicCubic::eval`] at `u`.
    pub fn eval_noise(&self, u: f64) -> f64 {
        let a = u.abs();
        32.0 * f64::EPSILON * (((a + self.c2.abs()) * a + self.c1.abs()) * a + self.c0.abs())
    }

    /// Critical points (zeros of the derivative), ascending, if real.
    pub fn critical_points(&self) -> Option<(f64, f64)> {
        let mut disc = self.c2 * self.c2 - 3.0 * self.c1;
        if disc < 0.0 {
            if disc < -64.0 * f64::EPSILON * (self.c2 * self.c2 + 3.0 * self.c1.abs()) {
                return None;
            }
            disc = 0.0;
        }
        let sq = disc.sqrt();
        // stable quadratic formula for 3u² + 2c2 u + c1
        let q = -(self.c2 + self.c2.signum() * sq);
        let (x1, x2) = if q != 0.0 { (q / 3.0, self.c1 / q) } else { (0.0, 0.0) };
        Some((x1.min(x2), x1.max(x2)))
    }
}

fn newton_polish(f: &MonicCubic, mut x: f64) -> f64 {
    for _ in 0..4 {
        let fx = f.eval(x);
        let d = f.deriv(x);
        if fx == 0.0 || d == 0.0 {
            break;
        }
        let next = x - fx / d;
        if !next.is_finite() || f.eval(next).abs() >= fx.abs() {
            break;
        }
        x = next;
    }
    x
}

/// Re-derives a close pair of roots around the critical point `c` from the
/// local quadratic model, snapping to a double root when `f(c)` is noise.
fn refine_pair(f: &MonicCubic, c: f64) -> (f64, f64) {
    let fc = f.eval(c);
    let f2 = f.second_deriv(c);
    if fc.abs() <= f.eval_noise(c) || f2 == 0.0 {
        return (c, c);
    }
    let ratio = -2.0 * fc / f2;
    if ratio <= 0.0 {
        return (c, c);
    }
    let d = ratio.sqrt();
    (newton_polish(f, c - d), newton_polish(f, c + d))
}

pub fn solve_monic(f: &MonicCubic) -> CubicRoots {
    let shift = f.c2 / 3.0;
    let p = f.c1 - f.c2 * shift;
    let q = 2.0 * shift * shift * shift - shift * f.c1 + f.c0;
    let scale = 1.0 + f.c2.abs() + f.c1.abs().sqrt() + f.c0.abs().cbrt();

    let mut roots = if p < 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = 3.0 * q / (p * m);
        if arg.abs() <= 1.0 + 1e-12 {
            let theta = arg.clamp(-1.0, 1.0).acos() / 3.0;
            let mut r = [0.0; 3];
            for (k, slot) in r.iter_mut().enumerate() {
                *slot = m * (theta - 2.0 * PI * k as f64 / 3.0).cos() - shift;
            }
            Some(r)
        } else {
            None
        }
    } else if p == 0.0 && q == 0.0 {
        Some([-shift; 3])
    } else {
        None
    };

    if roots.is_none() {
        // One real root by the discriminant — unless a double root has been
        // pushed just past the boundary by rounding.
        if let Some((lo, hi)) = f.critical_points() {
            for c in [lo, hi] {
                if f.eval(c).abs() <= f.eval_noise(c) {
                    let other = -f.c2 - 2.0 * c;
                    roots = Some([c, c, newton_polish(f, other)]);
                }
            }
        }
    }

    let Some(mut r) = roots else {
        // Cardano with the cancellation-free choice of cube root
        let disc = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let a = -q.signum() * (0.5 * q.abs() + disc).cbrt();
        let t = if a != 0.0 { a - p / (3.0 * a) } else { 0.0 };
        return CubicRoots::One(newton_polish(f, t - shift));
    };

    for x in r.iter_mut() {
        *x = newton_polish(f, *x);
    }
    r.sort_by(|a, b| a.total_cmp(b));
    // close pairs: rebuild from the critical point between them
    if let Some((lo, hi)) = f.critical_points() {
        let cluster = 1e-4 * scale;
        if r[1] - r[0] < cluster {
            let (a, b) = refine_pair(f, lo);
            r[0] = a;
            r[1] = b;
        }
        if r[2] - r[1] < cluster {
            let (a, b) = refine_pair(f, hi);
            r[1] = a;
            r[2] = b;
        }
        r.sort_by(|a, b| a.total_cmp(b));
    }
    CubicRoots::Three(r)
}
