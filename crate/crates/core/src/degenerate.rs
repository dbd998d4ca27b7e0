//! Closed forms for coinciding branch points.
//!
//! When two roots of `R(u)` meet, the hyperelliptic curve collapses to an
//! elliptic one and time and the Cayley–Klein parameters become
//! Weierstrass functions of the uniformizing variable `x = ∫du/w`:
//!
//! * `e3 = e4`: `R = 4(u − e1)(u − e2)(u + e3)`, `u = ℘(x − ω₂) + (e1 + e2 − e3)/3`,
//! * `e2 = e3 = 1` (aperiodic): `R = 4(u − e1)(u² − e4²)`, `u = ℘(x − ω₃) + e1/3`,
//! * `e1 = e2`: regular precession, stable,
//! * `e4 → ∞` with `A/p` fixed: the Lagrange top.
//!
//! The elliptic `w` is tied to the hyperelliptic one by `w_h = (u − e3) w/2`
//! and `w_h = (1 − u) w/2` respectively, so that on a real motion `x` runs
//! along `+i` (`e3 = e4`) or `−i` (aperiodic) from `x = 0`. Spin about the
//! figure axis enters as the factor `diag(e^{iτt/2}, e^{−iτt/2})` on the
//! right, as in [`crate::reduction`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{state_from_omega, TopParams, TopState};
use crate::elliptic::{context_from_cubic, inverse_real, log_sigma_w, wp, wp_prime, zeta_w, WeierstrassContext};
use crate::error::{Result, TopError};
use crate::quad::integrate;
use crate::reduction::{omega_from_reduced, BranchPoints, ReducedConstants, DEGENERACY_TOL};
use crate::su2::{SpecialUnitary, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn i() -> C64 {
    c(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Generic,
    /// `e1 = e2`.
    StablePrecession,
    /// `e2 = e3 = 1`.
    Aperiodic,
    E3EqualsE4,
    LagrangeLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyKind {
    pub kind: Degeneracy,
    /// The gap that triggered the classification, or the smallest gap.
    pub gap: f64,
}

/// Classifies the root configuration. `lagrange_e4` flags the Lagrange
/// limit when `e4` exceeds it.
pub fn detect(bp: &BranchPoints, tol: f64, lagrange_e4: Option<f64>) -> DegeneracyKind {
    let g12 = bp.e2 - bp.e1;
    let g23 = (1.0 - bp.e2).abs().max((bp.e3 - 1.0).abs());
    let g34 = (bp.e3 - bp.e4).abs();
    let kind = if g12 < tol {
        DegeneracyKind { kind: Degeneracy::StablePrecession, gap: g12 }
    } else if g23 < tol {
        DegeneracyKind { kind: Degeneracy::Aperiodic, gap: g23 }
    } else if g34 < tol {
        DegeneracyKind { kind: Degeneracy::E3EqualsE4, gap: g34 }
    } else {
        DegeneracyKind { kind: Degeneracy::Generic, gap: g12.min(g23).min(g34) }
    };
    match lagrange_e4 {
        Some(limit) if kind.kind == Degeneracy::Generic && bp.e4 >= limit => {
            DegeneracyKind { kind: Degeneracy::LagrangeLimit, gap: 1.0 / bp.e4 }
        }
        _ => kind,
    }
}

/// Rates of a regular precession at height `e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecessionRates {
    /// `dφ/dt = (l − ne)/(A(1 − e²))`.
    pub phi_rate: f64,
    /// `⟨ω, r⟩ = n/C`.
    pub spin_rate: f64,
    /// `max(|f(e)|, |f′(e)|)` for the reduced cubic `f`.
    pub residual: f64,
}

pub const DOUBLE_ROOT_TOL: f64 = 1e-9;

pub fn precession_rates(e: f64, consts: &ReducedConstants) -> Result<PrecessionRates> {
    if !(e > -1.0 && e < 1.0) {
        return Err(TopError::InvalidParameter(format!("precession height must satisfy |e| < 1, got {e}")));
    }
    let f = consts.cubic();
    let residual = f.eval(e).abs().max(f.deriv(e).abs());
    if !(residual < DOUBLE_ROOT_TOL) {
        return Err(TopError::InvalidParameter(format!("u = {e} is not a double root (residual {residual:.3e})")));
    }
    let TopParams { a, c, .. } = consts.params;
    Ok(PrecessionRates { phi_rate: (consts.l - consts.n * e) / (a * (1.0 - e * e)), spin_rate: consts.n / c, residual })
}

/// Finds `z` with `℘(z) = value` and `℘′(z) ≈ slope`.
fn locate(ctx: &WeierstrassContext, value: f64, slope: C64) -> Result<C64> {
    let z = inverse_real(value, ctx)?;
    let d = wp_prime(z, ctx)?;
    let z = if (d - slope).norm() <= (d + slope).norm() { z } else { -z };
    let miss = (wp_prime(z, ctx)? - slope).norm();
    if miss > 1e-6 * (1.0 + slope.norm()) {
        return Err(TopError::RootFinding(format!("no point with ℘ = {value} and ℘′ = {slope} (miss {miss:.3e})")));
    }
    Ok(z)
}

/// Solves `T(y) = target` for increasing `T` on `[lo, hi]` given `T` and `T′`.
fn invert_increasing<F>(f: F, target: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, d) = f(y)?;
        let err = v - target;
        if err > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let newton = y - err / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + y.abs()) {
            return Ok(next);
        }
        y = next;
    }
    Ok(y)
}

/// `diag(e^{iτt/2}, e^{−iτt/2})` applied on the right.
fn spin(phi: SpecialUnitary, tau: f64, t: f64) -> SpecialUnitary {
    let e = C64::from_polar(1.0, 0.5 * tau * t);
    let ec = e.conj();
    SpecialUnitary { alpha: phi.alpha * e, beta: phi.beta * ec, gamma: phi.gamma * e, delta: phi.delta * ec }
}

/// `u'` from `du/dx = w` and `dt/dx`.
fn u_rate(w: C64, dt_dx: C64) -> f64 {
    (w / dt_dx).re
}

/// Closed-form solution for `e3 = e4`, starting at `u = e2` (most upright).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E3E4Solution {
    pub ctx: WeierstrassContext,
    /// `x` over `(u, w) = (−1, w₋₁)` and `(+1, w₊₁)`.
    pub a: C64,
    pub b: C64,
    pub k: [C64; 4],
    pub l: [C64; 4],
    /// `(e1 + e2 − e3)/3`.
    pub shift: f64,
    /// Elliptic `w(±1)`.
    pub w_plus: f64,
    pub w_minus: f64,
    pub e: [f64; 3],
    pub consts: ReducedConstants,
}

pub fn e3e4_solution(bp: &BranchPoints, consts: &ReducedConstants, params: &TopParams) -> Result<E3E4Solution> {
    bp.validate()?;
    if (bp.e3 - bp.e4).abs() >= DEGENERACY_TOL.max(1e-8 * bp.e4) {
        return Err(TopError::Inapplicable(format!("e3 = {} and e4 = {} do not coincide", bp.e3, bp.e4)));
    }
    let [e1, e2, e3] = bp.roots();
    let ctx = context_from_cubic(e1, e2, -e3)?;
    let shift = (e1 + e2 - e3) / 3.0;
    let (wh_plus, wh_minus) = consts.w_pm1();
    let w_plus = 2.0 * wh_plus / (1.0 - e3);
    let w_minus = 2.0 * wh_minus / (-1.0 - e3);
    let w2 = ctx.omega2;
    let a = locate(&ctx, -1.0 - shift, c(w_minus, 0.0))? + w2;
    let b = locate(&ctx, 1.0 - shift, c(w_plus, 0.0))? + w2;
    let sig = |z: C64| log_sigma_w(z, &ctx);
    let k1 = (0.5 * (1.0 + e2)).sqrt() * (sig(w2) - sig(a)).exp();
    let k2 = i() * (0.5 * (1.0 - e2)).max(0.0).sqrt() * (sig(w2) - sig(b)).exp();
    let l1 = c(w_minus / (2.0 * (e3 - 1.0)), 0.0) + zeta_w(a - w2, &ctx)?;
    let l3 = c(w_plus / (2.0 * (1.0 + e3)), 0.0) + zeta_w(b - w2, &ctx)?;
    Ok(E3E4Solution {
        ctx,
        a,
        b,
        k: [k1, k2, k2, k1],
        l: [l1, -l3, l3, -l1],
        shift,
        w_plus,
        w_minus,
        e: [e1, e2, e3],
        consts: ReducedConstants { params: *params, ..*consts },
    })
}

impl E3E4Solution {
    pub fn u(&self, x: C64) -> Result<C64> {
        Ok(wp(x - self.ctx.omega2, &self.ctx)? + self.shift)
    }

    pub fn w(&self, x: C64) -> Result<C64> {
        wp_prime(x - self.ctx.omega2, &self.ctx)
    }

    /// `t = i√(2s)(ζ(x − ω₂) + ζ(ω₂) − (e1 + e2 + 2e3)x/3)`.
    pub fn time(&self, x: C64) -> Result<C64> {
        let [e1, e2, e3] = self.e;
        let w2 = self.ctx.omega2;
        let z = zeta_w(x - w2, &self.ctx)? + self.ctx.eta2 - x * ((e1 + e2 + 2.0 * e3) / 3.0);
        Ok(i() * (2.0 * self.consts.params.s).sqrt() * z)
    }

    /// `dt/dx = −i√(2s)(u + e3)`.
    pub fn dt_dx(&self, x: C64) -> Result<C64> {
        Ok(-i() * (2.0 * self.consts.params.s).sqrt() * (self.u(x)? + self.e[2]))
    }

    fn log_entries(&self, x: C64) -> [C64; 4] {
        let ctx = &self.ctx;
        let w2 = ctx.omega2;
        let ls = |z: C64| log_sigma_w(z, ctx);
        let (a, b) = (self.a, self.b);
        let quot = [ls(x - a) - ls(x - w2), ls(x + b) - ls(x + w2), ls(x - b) - ls(x - w2), ls(x + a) - ls(x + w2)];
        std::array::from_fn(|j| self.k[j].ln() + self.l[j] * x + quot[j])
    }

    /// `α, β, γ, δ` at `x` (without the spin factor).
    pub fn cayley_klein(&self, x: C64) -> Result<SpecialUnitary> {
        let ctx = &self.ctx;
        for z in [x - ctx.omega2, x + ctx.omega2] {
            if near_lattice(ctx, z) {
                return Err(TopError::Pole(format!("Cayley–Klein quotients have a pole at x = {x}")));
            }
        }
        let [alpha, beta, gamma, delta] = self.log_entries(x).map(|v| v.exp());
        Ok(SpecialUnitary { alpha, beta, gamma, delta })
    }

    /// Physical `x = iy` at time `t ≥ 0`.
    pub fn x_of_t(&self, t: f64) -> Result<C64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(TopError::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
        }
        let period_y = 2.0 * self.ctx.omega1.im.abs();
        let period_t = self.time(i() * period_y)?.re;
        let k = (t / period_t).floor();
        let rest = t - k * period_t;
        let y = invert_increasing(
            |y| Ok((self.time(i() * y)?.re, (i() * self.dt_dx(i() * y)?).re)),
            rest,
            0.0,
            period_y,
        )?;
        Ok(i() * (y + k * period_y))
    }

    /// Attitude at time `t`, spin included.
    pub fn attitude(&self, t: f64) -> Result<SpecialUnitary> {
        let x = self.x_of_t(t)?;
        let period_y = 2.0 * self.ctx.omega1.im.abs();
        let k = (x.im / period_y).floor();
        let x0 = x - i() * (k * period_y);
        let base = self.log_entries(x0);
        // shifting x by −2ω₁ multiplies each entry by a constant
        let shift = -self.ctx.omega1 * 2.0;
        let step = self.log_entries(x0 + shift);
        let [alpha, beta, gamma, delta] = std::array::from_fn(|j| (base[j] + (step[j] - base[j]) * k).exp());
        Ok(spin(SpecialUnitary { alpha, beta, gamma, delta }, self.consts.tau(), t))
    }

    pub fn u_dot(&self, t: f64) -> Result<f64> {
        let x = self.x_of_t(t)?;
        Ok(u_rate(self.w(x)?, self.dt_dx(x)?))
    }

    /// The mechanical state at time `t`.
    pub fn state(&self, t: f64) -> Result<TopState> {
        let phi = self.attitude(t)?;
        let omega = omega_from_reduced(&phi, &self.consts, self.u_dot(t)?)?;
        state_from_omega(phi, omega, t, &self.consts.params)
    }
}

fn near_lattice(ctx: &WeierstrassContext, z: C64) -> bool {
    let m = (z.re / (2.0 * ctx.omega2.re)).round();
    let n = (z.im / (2.0 * ctx.omega1.im)).round();
    (z - ctx.omega2 * (2.0 * m) - ctx.omega1 * (2.0 * n)).norm() < 1e-13
}

pub fn e3e4_time(x: C64, sol: &E3E4Solution) -> Result<C64> {
    sol.time(x)
}

pub fn e3e4_cayley_klein(x: C64, sol: &E3E4Solution) -> Result<SpecialUnitary> {
    sol.cayley_klein(x)
}

/// Closed-form solution for `e2 = e3 = 1`, starting at `u = e1` and creeping
/// up to the upright position as `t → ∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AperiodicSolution {
    pub ctx: WeierstrassContext,
    pub a: C64,
    /// Lies on the physical ray `x = −iy`, at `y = y_limit`.
    pub b: C64,
    /// `−w₋₁/(2w₊₁)`.
    pub p_exp: C64,
    pub k: C64,
    pub l: C64,
    pub w_minus: f64,
    /// Imaginary; `w₊₁ = 2i√((1 − e1)(e4² − 1))`, the value met along the motion.
    pub w_plus: C64,
    pub e1: f64,
    pub e4: f64,
    pub y_limit: f64,
    pub consts: ReducedConstants,
}

pub fn aperiodic_solution(bp: &BranchPoints, consts: &ReducedConstants, params: &TopParams) -> Result<AperiodicSolution> {
    bp.validate()?;
    if (1.0 - bp.e2).abs() >= DEGENERACY_TOL || (bp.e3 - 1.0).abs() >= DEGENERACY_TOL {
        return Err(TopError::Inapplicable(format!("e2 = {} and e3 = {} are not both 1", bp.e2, bp.e3)));
    }
    let (e1, e4) = (bp.e1, bp.e4);
    if 1.0 - e1 < DEGENERACY_TOL {
        return Err(TopError::Degenerate("e1 = 1: the top stands upright and does not move".into()));
    }
    let ctx = context_from_cubic(e1, e4, -e4)?;
    let shift = e1 / 3.0;
    let w_minus = consts.w_pm1().1;
    let w_plus = c(0.0, 2.0 * ((1.0 - e1) * (e4 * e4 - 1.0)).sqrt());
    let w3 = ctx.omega3;
    let a = locate(&ctx, -1.0 - shift, c(w_minus, 0.0))? + w3;
    // b on the ray x = −iy, where ℘(x − ω₃) = ℘(ω₃ + iy) climbs from c2 to c3
    let w1 = ctx.omega1.im.abs();
    let u_on_ray = |y: f64| -> Result<f64> { Ok(wp(c(0.0, -y) - w3, &ctx)?.re + shift) };
    let (mut lo, mut hi) = (0.0, w1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if u_on_ray(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y_limit = 0.5 * (lo + hi);
    let b = c(0.0, -y_limit);
    let slope = wp_prime(b - w3, &ctx)?;
    if (slope - w_plus).norm() > 1e-6 * (1.0 + w_plus.norm()) {
        return Err(TopError::RootFinding(format!("℘′ at b is {slope}, expected {w_plus}")));
    }
    let p_exp = -c(w_minus, 0.0) / (w_plus * 2.0);
    let ls = |z: C64| log_sigma_w(z, &ctx);
    let k = (0.5 * (1.0 + e1)).sqrt() * (ls(w3) - ls(a)).exp();
    let l = c(w_minus / 4.0 - w_minus / (1.0 - e4 * e4), 0.0)
        + zeta_w(a - w3, &ctx)?
        + p_exp * (zeta_w(a + b, &ctx)? - zeta_w(a - b, &ctx)?);
    Ok(AperiodicSolution {
        ctx,
        a,
        b,
        p_exp,
        k,
        l,
        w_minus,
        w_plus,
        e1,
        e4,
        y_limit,
        consts: ReducedConstants { params: *params, ..*consts },
    })
}

impl AperiodicSolution {
    pub fn u(&self, x: C64) -> Result<C64> {
        Ok(wp(x - self.ctx.omega3, &self.ctx)? + self.e1 / 3.0)
    }

    pub fn w(&self, x: C64) -> Result<C64> {
        wp_prime(x - self.ctx.omega3, &self.ctx)
    }

    /// `log(−σ(x − b)/σ(x + b))` continued from `0` at `x = 0` along the
    /// segment `[0, x]`.
    pub fn log_ratio(&self, x: C64) -> Result<C64> {
        let ctx = &self.ctx;
        let b = self.b;
        let raw = |z: C64| log_sigma_w(z - b, ctx) - log_sigma_w(z + b, ctx);
        for target in [b, -b] {
            let along = ((target * x.conj()).re / x.norm_sqr().max(1e-300)).clamp(0.0, 1.0);
            if (x * along - target).norm() < 1e-12 {
                return Err(TopError::Pole(format!("the segment to x = {x} meets the branch point {target}")));
            }
        }
        let mut steps = 64;
        'outer: loop {
            let mut prev = raw(c(0.0, 0.0));
            let mut acc = c(0.0, 0.0);
            let n = steps;
            for j in 1..=n {
                let cur = raw(x * (j as f64 / n as f64));
                let mut d = cur - prev;
                d.im -= 2.0 * PI * (d.im / (2.0 * PI)).round();
                if d.im.abs() > 1.0 && steps < 1 << 16 {
                    steps *= 4;
                    continue 'outer;
                }
                acc += d;
                prev = cur;
            }
            return Ok(acc);
        }
    }

    /// `t/(i√(2s)) = −ζ(x − ω₃) − ζ(ω₃) + (1 + e1/3)x
    ///   + ((1 − e4²)/w₊₁)(L(x) + 2(ζ(ω₃) + ζ(b − ω₃))x)`.
    pub fn time(&self, x: C64) -> Result<C64> {
        let ctx = &self.ctx;
        let w3 = ctx.omega3;
        let i2 = -zeta_w(x - w3, ctx)? - ctx.eta3 + x * (1.0 + self.e1 / 3.0);
        let i1 = (self.log_ratio(x)? + (ctx.eta3 + zeta_w(self.b - w3, ctx)?) * x * 2.0) / self.w_plus;
        Ok(i() * (2.0 * self.consts.params.s).sqrt() * (i2 + i1 * (1.0 - self.e4 * self.e4)))
    }

    /// `dt/dx = i√(2s)(u² − e4²)/(u − 1)`.
    pub fn dt_dx(&self, x: C64) -> Result<C64> {
        let u = self.u(x)?;
        Ok(i() * (2.0 * self.consts.params.s).sqrt() * (u * u - self.e4 * self.e4) / (u - 1.0))
    }

    /// `d log α/dx = l + ζ(x − a) − ζ(x − ω₃) + p(ζ(x − b) − ζ(x + b))`.
    pub fn dlog_alpha(&self, x: C64) -> Result<C64> {
        let ctx = &self.ctx;
        Ok(self.l + zeta_w(x - self.a, ctx)? - zeta_w(x - ctx.omega3, ctx)?
            + self.p_exp * (zeta_w(x - self.b, ctx)? - zeta_w(x + self.b, ctx)?))
    }

    /// `α, β, γ, δ` at `x` (without spin); `β = γ = i√((1 − u)/2)`.
    pub fn cayley_klein(&self, x: C64) -> Result<SpecialUnitary> {
        let ctx = &self.ctx;
        let w3 = ctx.omega3;
        let ls = |z: C64| log_sigma_w(z, ctx);
        let lr = self.log_ratio(x)?;
        let u = self.u(x)?;
        let log_k = self.k.ln();
        let alpha = (log_k + self.l * x + ls(x - self.a) - ls(x - w3) + self.p_exp * lr).exp();
        let delta = (log_k - self.l * x + ls(x + self.a) - ls(x + w3) - self.p_exp * lr).exp();
        let beta = i() * ((c(1.0, 0.0) - u) * 0.5).sqrt();
        Ok(SpecialUnitary { alpha, beta, gamma: beta, delta })
    }

    /// Physical `x = −iy`, `0 ≤ y < y_limit`, at time `t ≥ 0`.
    pub fn x_of_t(&self, t: f64) -> Result<C64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(TopError::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
        }
        let y = invert_increasing(
            |y| {
                let x = c(0.0, -y);
                Ok((self.time(x)?.re, (-i() * self.dt_dx(x)?).re))
            },
            t,
            0.0,
            self.y_limit * (1.0 - 1e-15),
        )?;
        Ok(c(0.0, -y))
    }

    pub fn attitude(&self, t: f64) -> Result<SpecialUnitary> {
        let x = self.x_of_t(t)?;
        Ok(spin(self.cayley_klein(x)?, self.consts.tau(), t))
    }

    pub fn u_dot(&self, t: f64) -> Result<f64> {
        let x = self.x_of_t(t)?;
        Ok(u_rate(self.w(x)?, self.dt_dx(x)?))
    }

    pub fn state(&self, t: f64) -> Result<TopState> {
        let phi = self.attitude(t)?;
        let omega = omega_from_reduced(&phi, &self.consts, self.u_dot(t)?)?;
        state_from_omega(phi, omega, t, &self.consts.params)
    }
}

pub fn aperiodic_time(x: C64, sol: &AperiodicSolution) -> Result<C64> {
    sol.time(x)
}

pub fn aperiodic_cayley_klein(x: C64, sol: &AperiodicSolution) -> Result<SpecialUnitary> {
    sol.cayley_klein(x)
}

/// `t = √(A/2p) ∫ du/√((u − e1)(u − e2)(u − e3))` between two heights in
/// `[e1, e2]`: the limit `e4 → ∞` with `A/p` fixed.
pub fn lagrange_limit_time(u_from: f64, u_to: f64, roots: [f64; 3], a: f64, p: f64) -> Result<f64> {
    let [e1, e2, e3] = roots;
    if !(a > 0.0 && p > 0.0) {
        return Err(TopError::InvalidParameter("A and p must be positive".into()));
    }
    if !(e1 < e2 && e2 < e3) || e2 - e1 < DEGENERACY_TOL || e3 - e2 < DEGENERACY_TOL {
        return Err(TopError::Degenerate(format!("roots ({e1}, {e2}, {e3}) must be distinct and increasing")));
    }
    let inside = |u: f64| u >= e1 - 1e-12 && u <= e2 + 1e-12;
    if !(inside(u_from) && inside(u_to)) {
        return Err(TopError::InvalidParameter(format!("[{u_from}, {u_to}] is not inside [{e1}, {e2}]")));
    }
    let theta = |u: f64| (((u - e1) / (e2 - e1)).clamp(0.0, 1.0)).sqrt().asin();
    let (t0, t1) = (theta(u_from.min(u_to)), theta(u_from.max(u_to)));
    // u = e1 + (e2 − e1) sin²θ turns du/√cubic into 2dθ/√(e3 − u)
    let val = integrate(
        |th: f64| {
            let s = th.sin();
            2.0 / (e3 - e1 - (e2 - e1) * s * s).sqrt()
        },
        t0,
        t1,
        1e-13,
    )?;
    Ok((a / (2.0 * p)).sqrt() * val)
}

/// Logarithmic differentials of `α, β, γ, δ` per `du` in the Lagrange
/// limit: `((w ± w∓₁)/(2(u ± 1)))/w`.
pub fn lagrange_log_differentials(u: C64, w: C64, w_pm: (C64, C64)) -> [C64; 4] {
    let (wp, wm) = w_pm;
    let plus = 1.0 / ((u + 1.0) * 2.0 * w);
    let minus = 1.0 / ((u - 1.0) * 2.0 * w);
    [plus * (w + wm), minus * (w - wp), minus * (w + wp), plus * (w - wm)]
}
