//! The curve traced by the tip in the supporting plane.
//!
//! The tip sits at `c = 2sαβ`, which in polar form is `ρ e^{iφ}` with
//! `ρ = s√(1 − u²)`. Its angular speed is `(l − nu)/(A(1 − u²))`; when the
//! signs of `w₊₁` and `w₋₁` differ this vanishes inside `(−1, 1)`, and the
//! curve develops loops or cusps depending on where the zero falls relative
//! to the nutation band.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::TopParams;
use crate::error::{Result, TopError};
use crate::quad::{integrate, integrate_with};
use crate::reduction::{dt_dtheta, r_poly, BranchPoints, Leg, ReducedConstants};
use crate::su2::{SpecialUnitary, C64};

/// Default relative width of the cusp band.
pub const CUSP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TipSample {
    pub t: f64,
    pub u: f64,
    pub rho: f64,
    /// Unwrapped polar angle.
    pub phi: f64,
    pub c: C64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipKind {
    Smooth,
    Cusp,
    Loop,
}

impl std::fmt::Display for TipKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TipKind::Smooth => "smooth",
            TipKind::Cusp => "cusp",
            TipKind::Loop => "loop",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TipClass {
    pub kind: TipKind,
    /// `(1 − e1 e2)/(e2 − e1)`, compared against `e3`.
    pub threshold: f64,
    /// Absolute half-width of the band counted as a cusp.
    pub band: f64,
    /// Whether `w₊₁` and `w₋₁` have strictly opposite signs.
    pub opposite_signs: bool,
}

/// `c = 2sαβ`.
pub fn tip_point(phi: &SpecialUnitary, s: f64) -> C64 {
    phi.alpha * phi.beta * (2.0 * s)
}

/// `dφ/dt = (l − nu)/(A(1 − u²))`.
pub fn dphi_dt(u: f64, consts: &ReducedConstants) -> f64 {
    (consts.l - consts.n * u) / (consts.params.a * (1.0 - u * u))
}

/// `dφ/du` on the given leg, from `i dφ = ½ K (w₋₁/(u+1) − w₊₁/(u−1)) du/w`
/// with `K = (u² − e4²)/(1 − e4²)`.
pub fn dphi_du(u: f64, bp: &BranchPoints, w_pm: (f64, f64), leg: Leg) -> Result<f64> {
    if !(u > -1.0 && u < 1.0) {
        return Err(TopError::InvalidParameter(format!("dφ/du needs -1 < u < 1, got {u}")));
    }
    let minus_r = -r_poly(u, bp);
    if !(u > bp.e1 && u < bp.e2) || minus_r <= 0.0 {
        return Err(TopError::TurningPoint { u });
    }
    let (wp, wm) = w_pm;
    let e4s = bp.e4_squared();
    let k = (u * u - e4s) / (1.0 - e4s);
    // 1/(i w) with w = iσ√(−R) is −σ/√(−R)
    Ok(-leg.sigma() * 0.5 * k * (wm / (u + 1.0) - wp / (u - 1.0)) / minus_r.sqrt())
}

/// `dφ/dθ` for `u = e1 + (e2 − e1) sin²θ`, with `θ` oriented along the leg.
///
/// The factor `sin θ cos θ` of `√(−R)` cancels against `du/dθ`, which keeps
/// the integrand smooth up to the turning points.
pub fn dphi_dtheta(theta: f64, bp: &BranchPoints, w_pm: (f64, f64), leg: Leg) -> f64 {
    let u = bp.u_of_theta(theta);
    let (wp, wm) = w_pm;
    let e4s = bp.e4_squared();
    let k = (u * u - e4s) / (1.0 - e4s);
    let rest = ((bp.e3 - u) * (e4s - u * u)).sqrt();
    -leg.sigma() * k * (wm / (u + 1.0) - wp / (u - 1.0)) / rest
}

/// Loop/cusp/smooth criterion for the tip curve.
pub fn classify(bp: &BranchPoints, consts: &ReducedConstants, tol: f64) -> Result<TipClass> {
    if bp.e1 <= -1.0 || bp.e2 >= 1.0 {
        return Err(TopError::Inapplicable(format!(
            "the criterion needs -1 < e1 and e2 < 1, got e1 = {}, e2 = {}",
            bp.e1, bp.e2
        )));
    }
    let (wp, wm) = consts.w_pm1();
    let threshold = if bp.e2 > bp.e1 { (1.0 - bp.e1 * bp.e2) / (bp.e2 - bp.e1) } else { f64::INFINITY };
    let band = tol * bp.e3.max(1.0);
    let opposite_signs = wp * wm < 0.0;
    let kind = if !opposite_signs {
        TipKind::Smooth
    } else if (threshold - bp.e3).abs() <= band {
        TipKind::Cusp
    } else if threshold < bp.e3 {
        TipKind::Loop
    } else {
        TipKind::Smooth
    };
    Ok(TipClass { kind, threshold, band, opposite_signs })
}

fn sample(t: f64, u: f64, phi: f64, s: f64) -> TipSample {
    let rho = s * (1.0 - u * u).max(0.0).sqrt();
    TipSample { t, u, rho, phi, c: C64::from_polar(rho, phi) }
}

/// Samples the tip curve over whole nutation periods, starting at `u = e1`
/// with the tip on the positive imaginary axis (`φ = π/2`), matching
/// [`crate::reduction::standard_attitude`].
pub fn trace_curve(
    bp: &BranchPoints,
    consts: &ReducedConstants,
    params: &TopParams,
    n_periods: usize,
    samples_per_leg: usize,
) -> Result<Vec<TipSample>> {
    if bp.e2 - bp.e1 < crate::reduction::DEGENERACY_TOL || bp.e3 - bp.e2 < crate::reduction::DEGENERACY_TOL {
        return Err(TopError::Degenerate("the tracer needs a nondegenerate nutation band".into()));
    }
    if samples_per_leg == 0 {
        return Err(TopError::InvalidParameter("samples_per_leg must be at least 1".into()));
    }
    let w_pm = consts.w_pm1();
    let mut out = Vec::with_capacity(1 + 2 * n_periods * samples_per_leg);
    let (mut t, mut phi) = (0.0, FRAC_PI_2);
    out.push(sample(t, bp.e1, phi, params.s));
    let mut leg = Leg::Rising;
    for _ in 0..2 * n_periods {
        for j in 0..samples_per_leg {
            let frac = |j: usize| j as f64 / samples_per_leg as f64 * FRAC_PI_2;
            let (th0, th1) = match leg {
                Leg::Rising => (frac(j), frac(j + 1)),
                Leg::Falling => (FRAC_PI_2 - frac(j), FRAC_PI_2 - frac(j + 1)),
            };
            let lo = th0.min(th1);
            let hi = th0.max(th1);
            t += integrate(|th: f64| dt_dtheta(th, bp, params), lo, hi, 1e-13)?;
            // dφ = (dφ/du)(du/dθ) dθ with θ signed along the leg
            let dphi = integrate_with(|th: f64| dphi_dtheta(th, bp, w_pm, leg), th0, th1, 1e-13, 1e-15 * (th1 - th0).abs())?;
            phi += dphi;
            let u = match (leg, j + 1 == samples_per_leg) {
                (Leg::Rising, true) => bp.e2,
                (Leg::Falling, true) => bp.e1,
                _ => bp.u_of_theta(th1),
            };
            out.push(sample(t, u, phi, params.s));
        }
        leg = leg.flip();
    }
    Ok(out)
}

fn orient(a: C64, b: C64, c: C64) -> f64 {
    (b - a).re * (c - a).im - (b - a).im * (c - a).re
}

fn segments_cross(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Proper crossings between non-adjacent segments whose unwrapped angles lie
/// within `π` of each other.
///
/// A curve with monotone `φ` is a polar graph over any window shorter than
/// `2π`, so it has no such crossings; the windowing ignores the crossings
/// every wobbly arc makes with its own earlier turns around the origin.
pub fn self_intersections(samples: &[TipSample]) -> usize {
    let n = samples.len();
    if n < 4 {
        return 0;
    }
    let mid: Vec<f64> = samples.windows(2).map(|w| 0.5 * (w[0].phi + w[1].phi)).collect();
    let span: Vec<f64> = samples.windows(2).map(|w| 0.5 * (w[0].phi - w[1].phi).abs()).collect();
    let mut count = 0;
    for i in 0..n - 1 {
        for j in i + 2..n - 1 {
            if (mid[i] - mid[j]).abs() - span[i] - span[j] >= PI {
                continue;
            }
            if segments_cross(samples[i].c, samples[i + 1].c, samples[j].c, samples[j + 1].c) {
                count += 1;
            }
        }
    }
    count
}
