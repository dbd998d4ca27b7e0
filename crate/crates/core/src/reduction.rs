//! The reduced one-degree-of-freedom system in `u = ⟨r, k⟩`.
//!
//! With the first integrals fixed, `u` obeys
//!
//! ```text
//! −(s/2)(u² − e4²) u'² = f(u) = (1/p)(1−u²)(h − n²/2C − pu) − (l − nu)²/(2Ap),
//! ```
//!
//! a monic cubic with roots `e1 ≤ e2 ≤ 1 ≤ e3`. Times and Cayley–Klein
//! parameters are integrals on the curve `w² = R(u) = f(u)(u² − e4²)`.
//! Along a real motion `u` oscillates in `[e1, e2]` and `w = iσ√(−R)` with
//! `σ` the sign of `u'`, which makes `dt = −i√(s/2)(u² − e4²) du/w` positive.
//! Integrands are written in `θ` with `u = e1 + (e2 − e1) sin²θ`, which
//! removes the square-root singularities at the turning points.

use std::f64::consts::FRAC_PI_2;
use std::ops::{Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::cubic::{solve_monic, CubicRoots, MonicCubic};
use crate::dynamics::{FirstIntegrals, TopParams, TopState};
use crate::error::{Result, TopError};
use crate::quad::integrate;
use crate::su2::{SpecialUnitary, Su2Vector, C64};

/// Root gaps below this are treated as coincident.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Slack allowed when checking `−1 ≤ e1 ≤ e2 ≤ 1 ≤ e3` on computed roots.
const ROOT_SLACK: f64 = 1e-10;

const QUAD_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedConstants {
    pub l: f64,
    pub n: f64,
    pub h: f64,
    pub params: TopParams,
}

impl ReducedConstants {
    pub fn new(l: f64, n: f64, h: f64, params: TopParams) -> Self {
        ReducedConstants { l, n, h, params }
    }

    pub fn from_integrals(fi: &FirstIntegrals, params: &TopParams) -> Self {
        ReducedConstants { l: fi.l, n: fi.n, h: fi.h, params: *params }
    }

    /// Coefficients of `f` as a monic cubic.
    pub fn cubic(&self) -> MonicCubic {
        let TopParams { a, c, p, .. } = self.params;
        let big_h = self.h - self.n * self.n / (2.0 * c);
        let two_ap = 2.0 * a * p;
        MonicCubic {
            c2: -big_h / p - self.n * self.n / two_ap,
            c1: -1.0 + 2.0 * self.l * self.n / two_ap,
            c0: big_h / p - self.l * self.l / two_ap,
        }
    }

    /// `w(+1)` and `w(−1)` with the signs `√(s/2)(1 − e4²)(l ∓ n)/A`,
    /// i.e. `−√(s/2)(l ∓ n)/(ps)`, the ones matching `w = iσ√(−R)`.
    pub fn w_pm1(&self) -> (f64, f64) {
        let k = -(0.5 * self.params.s).sqrt() / self.params.ps();
        (k * (self.l - self.n), k * (self.l + self.n))
    }

    pub fn tau(&self) -> f64 {
        self.params.tau(self.n)
    }
}

/// `(1/p)(1−u²)(h − n²/2C − pu) − (l − nu)²/(2Ap)`.
pub fn reduced_rhs(u: f64, consts: &ReducedConstants) -> f64 {
    let TopParams { a, c, p, .. } = consts.params;
    let (l, n, h) = (consts.l, consts.n, consts.h);
    let lnu = l - n * u;
    (1.0 - u * u) * (h - n * n / (2.0 * c) - p * u) / p - lnu * lnu / (2.0 * a * p)
}

/// One of the four `(l, n)` solutions sharing a set of roots.
///
/// Writing `l − n = ±√P` and `l + n = ±√Q`, the variants are the four sign
/// pairs. `Mirror` is `(l, n) → (−l, −n)`; the swapped pairs exchange `l`
/// and `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Primary,
    Mirror,
    Swapped,
    SwappedMirror,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Primary, Branch::Mirror, Branch::Swapped, Branch::SwappedMirror];

    /// Signs of `(l − n, l + n)`; those of `(w₊₁, w₋₁)` are opposite.
    pub fn signs(self) -> (f64, f64) {
        match self {
            Branch::Primary => (1.0, 1.0),
            Branch::Mirror => (-1.0, -1.0),
            Branch::Swapped => (-1.0, 1.0),
            Branch::SwappedMirror => (1.0, -1.0),
        }
    }

    pub fn from_signs(plus: f64, minus: f64) -> Branch {
        match (plus >= 0.0, minus >= 0.0) {
            (true, true) => Branch::Primary,
            (false, false) => Branch::Mirror,
            (false, true) => Branch::Swapped,
            (true, false) => Branch::SwappedMirror,
        }
    }

    pub fn index(self) -> usize {
        Branch::ALL.iter().position(|b| *b == self).unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoints {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    /// Sign of `w₊₁`; +1 when `w₊₁ = 0`.
    pub sign_w_plus: f64,
    /// Sign of `w₋₁`; +1 when `w₋₁ = 0`.
    pub sign_w_minus: f64,
}

impl BranchPoints {
    /// Validated construction; `e4` comes from the parameters.
    pub fn new(e1: f64, e2: f64, e3: f64, params: &TopParams, branch: Branch) -> Result<Self> {
        let (lmn, lpn) = branch.signs();
        let (sign_w_plus, sign_w_minus) = (-lmn, -lpn);
        let bp = BranchPoints { e1, e2, e3, e4: params.e4(), sign_w_plus, sign_w_minus };
        bp.validate()?;
        Ok(bp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.e1 >= -1.0 - ROOT_SLACK
            && self.e1 <= self.e2
            && self.e2 <= 1.0 + ROOT_SLACK
            && self.e3 >= 1.0 - ROOT_SLACK
            && self.e4 > 1.0
            && [self.e1, self.e2, self.e3, self.e4].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(TopError::Infeasible(format!(
                "branch points must satisfy -1 <= e1 <= e2 <= 1 <= e3 and e4 > 1, got ({}, {}, {}, {})",
                self.e1, self.e2, self.e3, self.e4
            )))
        }
    }

    /// The branch encoded by the `w` signs. When a root sits at `±1` one of
    /// `w±1` vanishes and its sign is taken from the other.
    pub fn branch(&self) -> Branch {
        let (mut lmn, mut lpn) = (-self.sign_w_plus, -self.sign_w_minus);
        if (1.0 - self.e2) * (self.e3 - 1.0) == 0.0 {
            lmn = lpn;
        } else if 1.0 + self.e1 == 0.0 {
            lpn = lmn;
        }
        Branch::from_signs(lmn, lpn)
    }

    pub fn roots(&self) -> [f64; 3] {
        [self.e1, self.e2, self.e3]
    }

    pub fn e4_squared(&self) -> f64 {
        self.e4 * self.e4
    }

    /// `(u − e1)(u − e2)(u − e3)`.
    pub fn cubic(&self, u: f64) -> f64 {
        (u - self.e1) * (u - self.e2) * (u - self.e3)
    }

    /// `u` at angle `θ` of the turning-point substitution.
    pub fn u_of_theta(&self, theta: f64) -> f64 {
        let s = theta.sin();
        self.e1 + (self.e2 - self.e1) * s * s
    }

    pub fn theta_of_u(&self, u: f64) -> f64 {
        let gap = self.e2 - self.e1;
        if gap <= 0.0 {
            return 0.0;
        }
        ((u - self.e1) / gap).clamp(0.0, 1.0).sqrt().asin()
    }
}

/// Solves for the branch points and records the canonical `w` signs.
pub fn branch_points(consts: &ReducedConstants) -> Result<BranchPoints> {
    consts.params.validate()?;
    let (l, n, h) = (consts.l, consts.n, consts.h);
    if !(l.is_finite() && n.is_finite() && h.is_finite()) {
        return Err(TopError::InvalidParameter("first integrals must be finite".into()));
    }
    let roots = match solve_monic(&consts.cubic()) {
        CubicRoots::Three(r) => r,
        CubicRoots::One(x) => {
            return Err(TopError::Infeasible(format!(
                "the reduced cubic has a single real root {x}; no admissible interval"
            )))
        }
    };
    if !roots.iter().all(|x| x.is_finite()) {
        return Err(TopError::RootFinding(format!("non-finite roots {roots:?}")));
    }
    let [mut e1, mut e2, mut e3] = roots;
    if e1 < -1.0 - ROOT_SLACK || e2 > 1.0 + ROOT_SLACK || e3 < 1.0 - ROOT_SLACK {
        return Err(TopError::Infeasible(format!("roots ({e1}, {e2}, {e3}) leave no oscillation band in [-1, 1]")));
    }
    // f(±1) ≤ 0 exactly, so roots just across ±1 are rounding
    e1 = e1.max(-1.0);
    e2 = e2.min(1.0);
    e3 = e3.max(1.0);
    let (wp, wm) = consts.w_pm1();
    Ok(BranchPoints {
        e1,
        e2,
        e3,
        e4: consts.params.e4(),
        sign_w_plus: if wp < 0.0 { -1.0 } else { 1.0 },
        sign_w_minus: if wm < 0.0 { -1.0 } else { 1.0 },
    })
}

/// Recovers `(l, n, h)` from the roots on the requested branch.
pub fn constants_from_roots(bp: &BranchPoints, params: &TopParams, branch: Branch) -> Result<ReducedConstants> {
    params.validate()?;
    bp.validate()?;
    let (a, p) = (params.a, params.p);
    let [e1, e2, e3] = bp.roots();
    let big_p = (2.0 * a * p * (1.0 - e1) * (1.0 - e2) * (e3 - 1.0)).max(0.0);
    let big_q = (2.0 * a * p * (1.0 + e1) * (1.0 + e2) * (1.0 + e3)).max(0.0);
    if (big_p == 0.0 || big_q == 0.0) && matches!(branch, Branch::Swapped | Branch::SwappedMirror) {
        return Err(TopError::BranchUnavailable {
            index: branch.index(),
            reason: "a root at u = ±1 forces l = ±n; only the primary and mirror branches exist".into(),
        });
    }
    let (sp, sm) = branch.signs();
    let l_minus_n = sp * big_p.sqrt();
    let l_plus_n = sm * big_q.sqrt();
    let l = 0.5 * (l_plus_n + l_minus_n);
    let n = 0.5 * (l_plus_n - l_minus_n);
    let h = -p * e1 * e2 * e3 + n * n / (2.0 * params.c) + l * l / (2.0 * a);
    Ok(ReducedConstants { l, n, h, params: *params })
}

/// `R(u) = (u − e1)(u − e2)(u − e3)(u² − e4²)`, for real or complex `u`.
pub fn r_poly<T>(u: T, bp: &BranchPoints) -> T
where
    T: Copy + Mul<Output = T> + Sub<f64, Output = T>,
{
    (u - bp.e1) * (u - bp.e2) * (u - bp.e3) * (u * u - bp.e4_squared())
}

/// Canonical `(w₊₁, w₋₁)`; `bp` is only used to check consistency of signs
/// in debug builds.
pub fn w_at_pm1(bp: &BranchPoints, consts: &ReducedConstants) -> (f64, f64) {
    let w = consts.w_pm1();
    debug_assert!(w.0 == 0.0 || w.0.signum() == bp.sign_w_plus || bp.e3 - 1.0 < 1e-6);
    w
}

/// Direction of motion along a monotone piece of the nutation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    /// `u' > 0`, from `e1` towards `e2`.
    Rising,
    /// `u' < 0`.
    Falling,
}

impl Leg {
    pub fn sigma(self) -> f64 {
        match self {
            Leg::Rising => 1.0,
            Leg::Falling => -1.0,
        }
    }

    pub fn flip(self) -> Leg {
        match self {
            Leg::Rising => Leg::Falling,
            Leg::Falling => Leg::Rising,
        }
    }
}

fn require_band(bp: &BranchPoints) -> Result<()> {
    bp.validate()?;
    if bp.e2 - bp.e1 < DEGENERACY_TOL {
        return Err(TopError::Degenerate(format!(
            "e1 = {} and e2 = {} coincide: regular precession, use the degenerate solutions",
            bp.e1, bp.e2
        )));
    }
    if bp.e3 - bp.e2 < DEGENERACY_TOL {
        return Err(TopError::Degenerate(format!(
            "e2 = {} and e3 = {} coincide: aperiodic motion, use the degenerate solutions",
            bp.e2, bp.e3
        )));
    }
    Ok(())
}

/// `dt/dθ` along the band (positive).
pub fn dt_dtheta(theta: f64, bp: &BranchPoints, params: &TopParams) -> f64 {
    let u = bp.u_of_theta(theta);
    (2.0 * params.s * (bp.e4_squared() - u * u) / (bp.e3 - u)).sqrt()
}

/// Time for `u` to travel monotonically between two values in `[e1, e2]`.
pub fn time_between(bp: &BranchPoints, params: &TopParams, u_from: f64, u_to: f64) -> Result<f64> {
    require_band(bp)?;
    let (t0, t1) = (bp.theta_of_u(u_from), bp.theta_of_u(u_to));
    let lo = t0.min(t1);
    let hi = t0.max(t1);
    integrate(|th: f64| dt_dtheta(th, bp, params), lo, hi, QUAD_TOL)
}

/// Time from `u = e1` to `u = e2`:
/// `∫ √(s(e4² − u²) / (2(u − e1)(e2 − u)(e3 − u))) du`.
pub fn nutation_half_period(bp: &BranchPoints, params: &TopParams) -> Result<f64> {
    require_band(bp)?;
    integrate(|th: f64| dt_dtheta(th, bp, params), 0.0, FRAC_PI_2, QUAD_TOL)
}

/// Coefficients of `du` in `dα/α, dβ/β, dγ/γ, dδ/δ` for a spherical top at
/// a point `(u, w)` of the curve.
pub fn log_differentials(u: C64, w: C64, bp: &BranchPoints, w_pm: (f64, f64)) -> [C64; 4] {
    let (wp, wm) = w_pm;
    let e4s = bp.e4_squared();
    let k = (u * u - e4s) / (1.0 - e4s);
    let inv_w = 1.0 / w;
    let plus = 1.0 / ((u + 1.0) * 2.0);
    let minus = 1.0 / ((u - 1.0) * 2.0);
    [
        plus * (w + k * wm) * inv_w,
        minus * (w - k * wp) * inv_w,
        minus * (w + k * wp) * inv_w,
        plus * (w - k * wm) * inv_w,
    ]
}

/// The physical value of `w` over `u ∈ (e1, e2)` on a leg.
pub fn physical_w(u: f64, bp: &BranchPoints, leg: Leg) -> C64 {
    C64::new(0.0, leg.sigma() * (-r_poly(u, bp)).max(0.0).sqrt())
}

/// A monotone stretch of the nutation between two `u`-values in `[e1, e2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UPath {
    pub u_from: f64,
    pub u_to: f64,
}

impl UPath {
    pub fn leg(&self) -> Leg {
        if self.u_to >= self.u_from {
            Leg::Rising
        } else {
            Leg::Falling
        }
    }
}

/// Propagates a Cayley–Klein matrix along a monotone leg by exponentiating
/// the logarithmic integrals, including the axial rotation `τ` for `A ≠ C`.
pub fn cayley_klein_quadrature(
    bp: &BranchPoints,
    consts: &ReducedConstants,
    path: UPath,
    start: &SpecialUnitary,
) -> Result<SpecialUnitary> {
    require_band(bp)?;
    let lo = bp.e1 - ROOT_SLACK;
    let hi = bp.e2 + ROOT_SLACK;
    for u in [path.u_from, path.u_to] {
        if !(lo..=hi).contains(&u) {
            return Err(TopError::InvalidParameter(format!("path endpoint u = {u} is outside [e1, e2]")));
        }
    }
    let w_pm = consts.w_pm1();
    for (u, pole, w) in [(path.u_from, -1.0, w_pm.1), (path.u_to, -1.0, w_pm.1), (path.u_from, 1.0, w_pm.0), (path.u_to, 1.0, w_pm.0)] {
        if (u - pole).abs() < 1e-12 && w != 0.0 {
            return Err(TopError::Pole(format!("path reaches u = {pole} where the logarithmic integrals diverge")));
        }
    }
    if path.u_from == path.u_to {
        return Ok(*start);
    }
    let leg = path.leg();
    let integrand = log_integrand_theta(bp, consts, leg);
    let (th0, th1) = (bp.theta_of_u(path.u_from), bp.theta_of_u(path.u_to));
    let logs = integrate(|th: f64| Quad4(integrand(th)), th0, th1, QUAD_TOL)?.0;
    let entries = [start.alpha, start.beta, start.gamma, start.delta];
    let [alpha, beta, gamma, delta] = std::array::from_fn(|i| entries[i] * logs[i].exp());
    Ok(SpecialUnitary { alpha, beta, gamma, delta })
}

/// `d log(α, β, γ, δ)/dθ` on a leg, where θ increases with `u`.
pub fn log_integrand_theta(bp: &BranchPoints, consts: &ReducedConstants, leg: Leg) -> impl Fn(f64) -> [C64; 4] {
    let bp = *bp;
    let w_pm = consts.w_pm1();
    let tau = consts.tau();
    let sigma = leg.sigma();
    let s = consts.params.s;
    move |th: f64| {
        let u = bp.u_of_theta(th);
        let du = (bp.e2 - bp.e1) * (2.0 * th).sin();
        let e4s = bp.e4_squared();
        let root = ((bp.e3 - u) * (e4s - u * u)).sqrt();
        // du/w per dθ: −2iσ/√((e3 − u)(e4² − u²)); dt/dθ = σ √(2s(e4² − u²)/(e3 − u))
        let du_over_w = C64::new(0.0, -2.0 * sigma / root);
        let dt = sigma * (2.0 * s * (e4s - u * u) / (bp.e3 - u)).sqrt();
        let k = (u * u - e4s) / (1.0 - e4s);
        let (wp, wm) = w_pm;
        let a_part = C64::new(du / (2.0 * (u + 1.0)), 0.0) + du_over_w * (k * wm / (2.0 * (u + 1.0)));
        let d_part = C64::new(du / (2.0 * (u + 1.0)), 0.0) - du_over_w * (k * wm / (2.0 * (u + 1.0)));
        let b_part = C64::new(du / (2.0 * (u - 1.0)), 0.0) - du_over_w * (k * wp / (2.0 * (u - 1.0)));
        let g_part = C64::new(du / (2.0 * (u - 1.0)), 0.0) + du_over_w * (k * wp / (2.0 * (u - 1.0)));
        let spin = C64::new(0.0, 0.5 * tau * dt);
        [a_part + spin, b_part - spin, g_part + spin, d_part - spin]
    }
}

#[derive(Clone, Copy)]
struct Quad4([C64; 4]);

impl std::ops::Add for Quad4 {
    type Output = Quad4;
    fn add(self, o: Quad4) -> Quad4 {
        Quad4(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl std::ops::Sub for Quad4 {
    type Output = Quad4;
    fn sub(self, o: Quad4) -> Quad4 {
        Quad4(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl Mul<f64> for Quad4 {
    type Output = Quad4;
    fn mul(self, k: f64) -> Quad4 {
        Quad4(self.0.map(|z| z * k))
    }
}

impl crate::quad::QuadValue for Quad4 {
    fn zero() -> Self {
        Quad4([C64::new(0.0, 0.0); 4])
    }
    fn magnitude(self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `u'²` from the reduced equation, clamped at zero at the turning points.
pub fn u_dot_squared(u: f64, consts: &ReducedConstants) -> f64 {
    let p = &consts.params;
    let f = reduced_rhs(u, consts);
    (f / (0.5 * p.s * (p.e4_squared() - u * u))).max(0.0)
}

/// Attitude with axis in the `(e2, e3)` plane at height `u`, tip on the
/// positive imaginary axis: `α = δ = √((1+u)/2)`, `β = γ = i√((1−u)/2)`.
pub fn standard_attitude(u: f64) -> SpecialUnitary {
    let a = (0.5 * (1.0 + u)).max(0.0).sqrt();
    let b = (0.5 * (1.0 - u)).max(0.0).sqrt();
    SpecialUnitary::from_alpha_beta(C64::new(a, 0.0), C64::new(0.0, b))
}

/// Angular velocity realizing `(l, n)`, height `u` and rate `u'` at attitude
/// `phi`, from the decomposition in the basis `(r, k, [r, k])`:
/// `(1 − u²)ω = (n(1−u²)/C − (l − nu)u/A) r + ((l − nu)/A) k + u' [r, k]`.
pub fn omega_from_reduced(phi: &SpecialUnitary, consts: &ReducedConstants, u_dot: f64) -> Result<Su2Vector> {
    let r = phi.axis();
    let u = r.x3;
    let sin2 = 1.0 - u * u;
    if sin2 < 1e-12 {
        return Err(TopError::Degenerate("axis is vertical; the (r, k, [r, k]) basis degenerates".into()));
    }
    let TopParams { a, c, .. } = consts.params;
    let (l, n) = (consts.l, consts.n);
    let q = r.cross(Su2Vector::e3());
    let lnu = l - n * u;
    let v = r * (n * sin2 / c - lnu * u / a) + Su2Vector::e3() * (lnu / a) + q * u_dot;
    Ok(v * (1.0 / sin2))
}

/// State at height `u0` on the given leg with the standard attitude.
pub fn initial_state(consts: &ReducedConstants, u0: f64, leg: Leg) -> Result<TopState> {
    let phi = standard_attitude(u0);
    let ud = leg.sigma() * u_dot_squared(u0, consts).sqrt();
    let omega = omega_from_reduced(&phi, consts, ud)?;
    crate::dynamics::state_from_omega(phi, omega, 0.0, &consts.params)
}

/// Residual of `(s/2)(e4² − u²)u'² = f(u)` at a state, relative to one plus
/// the magnitudes of the coefficients of `f`.
pub fn reduced_residual(state: &TopState, consts: &ReducedConstants) -> Result<f64> {
    let p = &consts.params;
    let u = state.phi.u();
    let ud = crate::dynamics::u_dot(state, p)?;
    let lhs = 0.5 * p.s * (p.e4_squared() - u * u) * ud * ud;
    let f = consts.cubic();
    let scale = 1.0 + f.c2.abs() + f.c1.abs() + f.c0.abs();
    Ok((lhs - reduced_rhs(u, consts)).abs() / scale)
}

/// Half-period measured on the ODE: the time between the first maximum and
/// the following minimum of `u`, each located as a zero of `u'` by regula
/// falsi on sub-step integrations. Starting exactly at a turning point would
/// put an `O(√ε)` error on the first zero.
pub fn measured_half_period(consts: &ReducedConstants, bp: &BranchPoints, dt: f64) -> Result<f64> {
    let params = consts.params;
    let estimate = nutation_half_period(bp, &params)?;
    let start = initial_state(consts, bp.e1, Leg::Rising)?;
    let (t_max, at_max) = next_turning_point(&start, 1.0, estimate, dt, &params)?;
    let (t_min, _) = next_turning_point(&at_max, -1.0, estimate, dt, &params)?;
    Ok(t_min - t_max)
}

/// First zero of `u'` after `start.t + estimate/2` where `u'` leaves the sign
/// `sigma`; returns its time and a state just past it.
fn next_turning_point(
    start: &TopState,
    sigma: f64,
    estimate: f64,
    dt: f64,
    params: &TopParams,
) -> Result<(f64, TopState)> {
    use crate::dynamics::{advance_to, simulate_with, u_dot};
    let mut before = *start;
    let mut after = None;
    simulate_with(start, dt, start.t + 3.0 * estimate + 10.0 * dt, params, |s| {
        let ud = sigma * u_dot(s, params).unwrap_or(f64::NAN);
        if s.t > start.t + 0.5 * estimate && !(ud > 0.0) {
            after = Some(*s);
            return false;
        }
        before = *s;
        true
    })?;
    let after = after.ok_or_else(|| TopError::RootFinding("u' did not change sign within three estimates".into()))?;
    let g = |t: f64| -> Result<f64> { u_dot(&advance_to(&before, t, dt, params)?, params) };
    let (mut a, mut b) = (before.t, after.t);
    let (mut ga, mut gb) = (g(a)?, g(b)?);
    let mut side = 0;
    for _ in 0..100 {
        if (b - a).abs() < 1e-14 * b.abs() {
            break;
        }
        let t = (a * gb - b * ga) / (gb - ga);
        let gt = g(t)?;
        if gt == 0.0 {
            return Ok((t, after));
        }
        if (gt > 0.0) == (ga > 0.0) {
            a = t;
            ga = gt;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            gb = gt;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    Ok((0.5 * (a + b), after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{advance_to, first_integrals, momentum_to_omega, simulate_with, u_dot};
    use proptest::prelude::*;

    fn params() -> TopParams {
        TopParams::new(1.1, 0.9, 0.8, 1.3).unwrap()
    }

    fn sample_bp(params: &TopParams) -> BranchPoints {
        BranchPoints::new(-0.3, 0.6, 1.7, params, Branch::Primary).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let c = ReducedConstants::new(0.7, -0.4, 2.0, params());
        let (a, p) = (c.params.a, c.params.p);
        assert!((reduced_rhs(1.0, &c) + (1.1f64).powi(2) / (2.0 * a * p)).abs() < 1e-15);
        assert!((reduced_rhs(-1.0, &c) + (0.3f64).powi(2) / (2.0 * a * p)).abs() < 1e-15);
        let u0 = (2.0 - 0.16 / (2.0 * c.params.c)) / p - 0.49 / (2.0 * a * p);
        assert!((reduced_rhs(0.0, &c) - u0).abs() < 1e-15);
        let f = c.cubic();
        for u in [-0.8, 0.1, 0.9, 2.5] {
            assert!((f.eval(u) - reduced_rhs(u, &c)).abs() < 1e-13);
        }
    }

    #[test]
    fn e4_example() {
        let p = TopParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let bp = branch_points(&constants_from_roots(&BranchPoints::new(0.1, 0.5, 2.0, &p, Branch::Primary).unwrap(), &p, Branch::Primary).unwrap()).unwrap();
        assert!((bp.e4 - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sleeping_compatible_root() {
        let p = params();
        let c = ReducedConstants::new(1.2, 1.2, 3.0, p);
        assert_eq!(reduced_rhs(1.0, &c), 0.0);
        let bp = branch_points(&c).unwrap();
        assert!(bp.roots().iter().any(|e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn generic_roots_back_substitute() {
        let p = params();
        let c = ReducedConstants::new(0.5, 0.9, 2.2, p);
        let bp = branch_points(&c).unwrap();
        for e in bp.roots() {
            assert!(c.cubic().eval(e).abs() < 1e-12);
        }
        // bisection oracle on the sign change of reduced_rhs inside [-1, 1]
        let mut lo = -1.0;
        let mut hi = 0.5 * (bp.e1 + bp.e2);
        assert!(reduced_rhs(lo, &c) < 0.0 && reduced_rhs(hi, &c) > 0.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if reduced_rhs(mid, &c) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((lo - bp.e1).abs() < 1e-12);
    }

    #[test]
    fn infeasible_constants() {
        let p = params();
        // enormous tilt energy deficit: f < 0 everywhere on [-1, 1]
        let c = ReducedConstants::new(3.0, 0.0, -5.0, p);
        assert!(matches!(branch_points(&c), Err(TopError::Infeasible(_))));
    }

    #[test]
    fn constants_round_trip_all_branches() {
        let p = params();
        let bp = sample_bp(&p);
        for br in Branch::ALL {
            let c = constants_from_roots(&bp, &p, br).unwrap();
            let back = branch_points(&c).unwrap();
            for (x, y) in back.roots().iter().zip(bp.roots()) {
                assert!((x - y).abs() < 1e-10, "{br:?}: {:?} vs {:?}", back.roots(), bp.roots());
            }
            assert_eq!(back.branch(), br);
            // u = ±1 relations
            assert!((reduced_rhs(1.0, &c) + (c.l - c.n).powi(2) / (2.0 * p.a * p.p)).abs() < 1e-12);
        }
        let c = constants_from_roots(&bp, &p, Branch::Primary).unwrap();
        let m = constants_from_roots(&bp, &p, Branch::Mirror).unwrap();
        assert!((c.l + m.l).abs() < 1e-14 && (c.n + m.n).abs() < 1e-14 && (c.h - m.h).abs() < 1e-14);
        let s = constants_from_roots(&bp, &p, Branch::Swapped).unwrap();
        assert!((s.l - c.n).abs() < 1e-14 && (s.n - c.l).abs() < 1e-14);
    }

    #[test]
    fn root_at_one_forces_l_equal_n() {
        let p = params();
        let bp = BranchPoints::new(0.2, 1.0, 1.8, &p, Branch::Primary).unwrap();
        let c = constants_from_roots(&bp, &p, Branch::Primary).unwrap();
        assert!((c.l - c.n).abs() < 1e-14);
        assert!(matches!(constants_from_roots(&bp, &p, Branch::Swapped), Err(TopError::BranchUnavailable { .. })));
        assert!(constants_from_roots(&bp, &p, Branch::Mirror).is_ok());
    }

    #[test]
    fn r_poly_identities() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::Primary).unwrap();
        assert_eq!(r_poly(bp.e1, &bp), 0.0);
        let (wp, wm) = w_at_pm1(&bp, &c);
        assert!((r_poly(1.0, &bp) - (c.l - c.n).powi(2) / (2.0 * p.p * p.p * p.s)).abs() < 1e-12);
        assert!((wp * wp - r_poly(1.0, &bp)).abs() < 1e-12);
        assert!((wm * wm - r_poly(-1.0, &bp)).abs() < 1e-12);
        for i in 0..=40 {
            let u = -1.5 + 0.075 * i as f64;
            let rhs = (u * u - 1.0 - p.a / p.ps()) * reduced_rhs(u, &c);
            assert!((r_poly(u, &bp) - rhs).abs() < 1e-11);
        }
        let z = C64::new(0.3, 0.2);
        let rz = r_poly(z, &bp);
        let direct = (z - bp.e1) * (z - bp.e2) * (z - bp.e3) * (z * z - bp.e4_squared());
        assert!((rz - direct).norm() < 1e-15);
    }

    #[test]
    fn w_signs() {
        let p = params();
        let eq = ReducedConstants::new(0.4, 0.4, 1.0, p);
        assert_eq!(eq.w_pm1().0, 0.0);
        let opp = ReducedConstants::new(0.4, -0.4, 1.0, p);
        assert_eq!(opp.w_pm1().1, 0.0);
        for (l, n) in [(1.0, 0.3), (0.3, 1.0), (-0.7, 0.2), (2.0, -2.5)] {
            let (wp, wm) = ReducedConstants::new(l, n, 1.0, p).w_pm1();
            assert_eq!((wp * wm).signum(), (l * l - n * n).signum());
        }
    }

    #[test]
    fn half_period_properties() {
        let p = params();
        let bp = sample_bp(&p);
        for i in 1..50 {
            assert!(dt_dtheta(i as f64 * FRAC_PI_2 / 50.0, &bp, &p) > 0.0);
        }
        let t = nutation_half_period(&bp, &p).unwrap();
        // scaling s by 4 at fixed roots (A/p adjusted to keep e4) doubles it
        let p4 = TopParams { s: 4.0 * p.s, a: 4.0 * p.a, ..p };
        let bp4 = BranchPoints { e4: p4.e4(), ..bp };
        assert!((bp4.e4 - bp.e4).abs() < 1e-15);
        assert!((nutation_half_period(&bp4, &p4).unwrap() - 2.0 * t).abs() < 1e-12 * t);
        // direct u-quadrature with the endpoint singularities
        let direct = integrate(
            |x: f64| {
                // u = e1 + (e2 - e1)(1 - cos πx)/2 is a gentler substitution
                let gap = bp.e2 - bp.e1;
                let u = bp.e1 + gap * 0.5 * (1.0 - (std::f64::consts::PI * x).cos());
                let du = gap * 0.5 * std::f64::consts::PI * (std::f64::consts::PI * x).sin();
                (p.s * (bp.e4_squared() - u * u) / (2.0 * (u - bp.e1) * (bp.e2 - u) * (bp.e3 - u))).sqrt() * du
            },
            0.0,
            1.0,
            1e-13,
        )
        .unwrap();
        assert!((direct - t).abs() < 1e-10 * t);
        let degenerate = BranchPoints { e2: bp.e1, ..bp };
        assert!(matches!(nutation_half_period(&degenerate, &p), Err(TopError::Degenerate(_))));
    }

    #[test]
    fn half_period_matches_simulation() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::Swapped).unwrap();
        let s0 = initial_state(&c, bp.e1, Leg::Rising).unwrap();
        let fi = first_integrals(&s0, &p).unwrap();
        assert!((fi.l - c.l).abs() < 1e-12 && (fi.n - c.n).abs() < 1e-12 && (fi.h - c.h).abs() < 1e-12);
        let want = nutation_half_period(&bp, &p).unwrap();
        // find the time of the first maximum of u by a root of u'
        let dt = 1e-3;
        let mut prev = s0;
        let mut bracket = None;
        simulate_with(&s0, dt, 3.0 * want, &p, |s| {
            if s.t > 0.0 && u_dot(s, &p).unwrap() < 0.0 {
                bracket = Some((prev, *s));
                return false;
            }
            prev = *s;
            true
        })
        .unwrap();
        let (mut lo, hi) = bracket.expect("u' changes sign");
        let mut span = hi.t - lo.t;
        for _ in 0..40 {
            span *= 0.5;
            let mid = advance_to(&lo, lo.t + span, dt, &p).unwrap();
            if u_dot(&mid, &p).unwrap() > 0.0 {
                lo = mid;
            }
        }
        assert!((lo.t - want).abs() < 1e-6 * want, "ode {} vs quadrature {want}", lo.t);
        assert!((lo.phi.u() - bp.e2).abs() < 1e-9);
    }

    #[test]
    fn omega_decomposition_consistent() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::SwappedMirror).unwrap();
        let u0 = 0.2;
        let s = initial_state(&c, u0, Leg::Falling).unwrap();
        let w = momentum_to_omega(s.m, &s.phi, &p).unwrap();
        let fi = first_integrals(&s, &p).unwrap();
        assert!((fi.l - c.l).abs() < 1e-12 && (fi.n - c.n).abs() < 1e-12 && (fi.h - c.h).abs() < 1e-12);
        let ud = u_dot(&s, &p).unwrap();
        assert!(ud < 0.0 && (ud * ud - u_dot_squared(u0, &c)).abs() < 1e-12);
        assert!((s.phi.u() - u0).abs() < 1e-15);
        assert!(w.norm() > 0.0);
    }

    #[test]
    fn log_differentials_sum_and_poles() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::Primary).unwrap();
        let w_pm = c.w_pm1();
        for i in 1..20 {
            let u = bp.e1 + (bp.e2 - bp.e1) * i as f64 / 20.0;
            let w = physical_w(u, &bp, Leg::Rising);
            let d = log_differentials(C64::new(u, 0.0), w, &bp, w_pm);
            assert!((d[0] + d[3] - 1.0 / (u + 1.0)).norm() < 1e-12);
            assert!((d[1] + d[2] - 1.0 / (u - 1.0)).norm() < 1e-12);
        }
        // residues at u = −1 on the sheet w → w₋₁, and at u = +1 with w → ±w₊₁
        for eps in [1e-7, -1e-7] {
            let u = C64::new(-1.0 + eps, 0.0);
            let w = r_poly(u, &bp).sqrt() * w_pm.1.signum();
            let d = log_differentials(u, w, &bp, w_pm);
            assert!(((u + 1.0) * d[0] - 1.0).norm() < 1e-6);
            assert!(((u + 1.0) * d[3]).norm() < 1e-6);
            let u = C64::new(1.0 + eps, 0.0);
            let w = r_poly(u, &bp).sqrt() * w_pm.0.signum();
            let d = log_differentials(u, w, &bp, w_pm);
            assert!(((u - 1.0) * d[2] - 1.0).norm() < 1e-6);
            assert!(((u - 1.0) * d[1]).norm() < 1e-6);
            let d = log_differentials(u, -w, &bp, w_pm);
            assert!(((u - 1.0) * d[1] - 1.0).norm() < 1e-6);
        }
    }

    #[test]
    fn quadrature_matches_simulation_on_a_leg() {
        for p in [params(), TopParams::new(1.0, 1.0, 0.5, 2.0).unwrap()] {
            let bp = sample_bp(&p);
            let c = constants_from_roots(&bp, &p, Branch::Swapped).unwrap();
            let s0 = initial_state(&c, bp.e1, Leg::Rising).unwrap();
            let path = UPath { u_from: bp.e1, u_to: bp.e2 };
            assert_eq!(cayley_klein_quadrature(&bp, &c, UPath { u_from: 0.1, u_to: 0.1 }, &s0.phi).unwrap(), s0.phi);
            let g = cayley_klein_quadrature(&bp, &c, path, &s0.phi).unwrap();
            assert!(g.group_residual() < 1e-8);
            let t_half = nutation_half_period(&bp, &p).unwrap();
            let s1 = advance_to(&s0, t_half, 1e-3, &p).unwrap();
            assert!(g.max_entry_diff(&s1.phi) < 1e-6, "{:?} vs {:?}", g, s1.phi);
            // and back down
            let back = cayley_klein_quadrature(&bp, &c, UPath { u_from: bp.e2, u_to: 0.0 }, &g).unwrap();
            let t_back = time_between(&bp, &p, bp.e2, 0.0).unwrap();
            let s2 = advance_to(&s1, t_half + t_back, 1e-3, &p).unwrap();
            assert!(back.max_entry_diff(&s2.phi) < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn round_trip_random_roots(e1 in -0.95f64..0.9, gap in 0.01f64..0.9, e3 in 1.01f64..4.0, b in 0usize..4) {
            let e2 = (e1 + gap).min(0.99);
            let p = params();
            let bp = BranchPoints::new(e1, e2, e3, &p, Branch::ALL[b]).unwrap();
            let c = constants_from_roots(&bp, &p, Branch::ALL[b]).unwrap();
            let back = branch_points(&c).unwrap();
            prop_assert!((back.e1 - e1).abs() < 1e-10 && (back.e2 - e2).abs() < 1e-10 && (back.e3 - e3).abs() < 1e-10);
            let c2 = constants_from_roots(&back, &p, Branch::ALL[b]).unwrap();
            prop_assert!((c2.l - c.l).abs() < 1e-10 && (c2.n - c.n).abs() < 1e-10 && (c2.h - c.h).abs() < 1e-10);
        }
    }

    #[test]
    fn measured_half_period_matches_quadrature() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::Swapped).unwrap();
        let quad = nutation_half_period(&bp, &p).unwrap();
        let ode = measured_half_period(&c, &bp, 1e-3).unwrap();
        assert!((quad - ode).abs() < 1e-9 * quad, "{quad} vs {ode}");
    }

    #[test]
    fn reduced_residual_vanishes_on_trajectories() {
        let p = params();
        let bp = sample_bp(&p);
        let c = constants_from_roots(&bp, &p, Branch::Primary).unwrap();
        let s0 = initial_state(&c, 0.1, Leg::Falling).unwrap();
        simulate_with(&s0, 1e-3, 3.0, &p, |s| {
            assert!(reduced_residual(s, &c).unwrap() < 1e-12);
            true
        })
        .unwrap();
        // a wrong rate shows up at first order
        let fast = TopState { m: s0.m * 1.01, ..s0 };
        assert!(reduced_residual(&fast, &c).unwrap() > 1e-4);
    }
}
