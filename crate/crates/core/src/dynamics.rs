//! Equations of motion of the toy top on SU(2).
//!
//! The state is the attitude `Φ` together with the fixed-frame momentum `m`.
//! Writing `r = Φ k Φ⁻¹` for the symmetry axis, `k = e3` for the vertical and
//! `q = [r, k]`, the Lagrangian is
//!
//! ```text
//! L = (A/2)|ω|² + ((C−A)/2)⟨ω,r⟩² + (ps/2)⟨q,ω⟩² − p⟨r,k⟩
//! ```
//!
//! and the motion obeys `m' = [ω, m] + DL`, `Φ' = ωΦ`.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopError};
use crate::su2::{renormalize, Mat2, SpecialUnitary, Su2Vector, GROUP_TOL};

/// Largest accepted condition number of the momentum form.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopParams {
    /// Transverse moment of inertia about the center of mass.
    pub a: f64,
    /// Axial moment of inertia.
    pub c: f64,
    /// Distance from the tip to the center of mass.
    pub s: f64,
    /// Mass times `s` (gravity is 1).
    pub p: f64,
}

impl TopParams {
    pub fn new(a: f64, c: f64, s: f64, p: f64) -> Result<Self> {
        let params = TopParams { a, c, s, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("A", self.a), ("C", self.c), ("s", self.s), ("p", self.p)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TopError::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.c > 2.0 * self.a {
            warn!("C = {} exceeds 2A = {}; no rigid body has these moments", self.c, 2.0 * self.a);
        }
        Ok(())
    }

    pub fn ps(&self) -> f64 {
        self.p * self.s
    }

    /// `e4 = √(1 + A/(ps))`.
    pub fn e4(&self) -> f64 {
        self.e4_squared().sqrt()
    }

    pub fn e4_squared(&self) -> f64 {
        1.0 + self.a / self.ps()
    }

    /// Rate of the spherical-reduction rotation, `(1/C − 1/A) n`.
    pub fn tau(&self, n: f64) -> f64 {
        (1.0 / self.c - 1.0 / self.a) * n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopState {
    pub phi: SpecialUnitary,
    pub m: Su2Vector,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FirstIntegrals {
    pub h: f64,
    pub l: f64,
    pub n: f64,
}

/// Axis `r` and `q = r × k` of an attitude.
fn frame(phi: &SpecialUnitary) -> (Su2Vector, Su2Vector) {
    let r = phi.axis();
    (r, r.cross(Su2Vector::e3()))
}

pub fn kinetic_energy(phi: &SpecialUnitary, omega: Su2Vector, params: &TopParams) -> f64 {
    let (r, q) = frame(phi);
    let wr = omega.dot(r);
    let wq = omega.dot(q);
    0.5 * params.a * omega.dot(omega) + 0.5 * (params.c - params.a) * wr * wr + 0.5 * params.ps() * wq * wq
}

pub fn potential_energy(phi: &SpecialUnitary, params: &TopParams) -> f64 {
    params.p * phi.u()
}

fn momentum_in_frame(r: Su2Vector, q: Su2Vector, omega: Su2Vector, params: &TopParams) -> Su2Vector {
    omega * params.a + r * ((params.c - params.a) * omega.dot(r)) + q * (params.ps() * omega.dot(q))
}

pub fn momentum(phi: &SpecialUnitary, omega: Su2Vector, params: &TopParams) -> Su2Vector {
    let (r, q) = frame(phi);
    momentum_in_frame(r, q, omega, params)
}

/// Condition number of the momentum form at an attitude.
pub fn momentum_condition(phi: &SpecialUnitary, params: &TopParams) -> f64 {
    let (_, q) = frame(phi);
    let big = params.a + params.ps() * q.dot(q);
    params.a.max(params.c).max(big) / params.a.min(params.c)
}

fn omega_in_frame(r: Su2Vector, q: Su2Vector, m: Su2Vector, params: &TopParams) -> Su2Vector {
    // r ⊥ q, so the form is diagonal in (r, q/|q|, r×q/|q|): eigenvalues C, A+ps|q|², A
    let (a, ps) = (params.a, params.ps());
    let q2 = q.dot(q);
    m * (1.0 / a) + r * ((1.0 / params.c - 1.0 / a) * m.dot(r)) - q * (ps * m.dot(q) / (a * (a + ps * q2)))
}

pub fn momentum_to_omega(m: Su2Vector, phi: &SpecialUnitary, params: &TopParams) -> Result<Su2Vector> {
    let condition = momentum_condition(phi, params);
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(TopError::SingularMomentumForm { condition });
    }
    let (r, q) = frame(phi);
    Ok(omega_in_frame(r, q, m, params))
}

fn dl_in_frame(r: Su2Vector, q: Su2Vector, omega: Su2Vector, params: &TopParams) -> Su2Vector {
    let k = Su2Vector::e3();
    r.cross(omega) * ((params.c - params.a) * omega.dot(r)) + r.cross(k.cross(omega)) * (params.ps() * q.dot(omega))
        - q * params.p
}

/// Derivative of the Lagrangian along left translations of the attitude at
/// fixed fixed-frame angular velocity: `⟨DL, η⟩ = d/dε L(e^{εη}Φ, ω)`.
pub fn dl(phi: &SpecialUnitary, omega: Su2Vector, params: &TopParams) -> Su2Vector {
    let (r, q) = frame(phi);
    dl_in_frame(r, q, omega, params)
}

pub fn first_integrals(state: &TopState, params: &TopParams) -> Result<FirstIntegrals> {
    let omega = momentum_to_omega(state.m, &state.phi, params)?;
    let h = kinetic_energy(&state.phi, omega, params) + potential_energy(&state.phi, params);
    Ok(FirstIntegrals { h, l: state.m.x3, n: state.m.dot(state.phi.axis()) })
}

/// Angular velocity of a state.
pub fn omega(state: &TopState, params: &TopParams) -> Result<Su2Vector> {
    momentum_to_omega(state.m, &state.phi, params)
}

/// `u' = ⟨ω, [r, k]⟩`.
pub fn u_dot(state: &TopState, params: &TopParams) -> Result<f64> {
    let (r, q) = frame(&state.phi);
    Ok(omega_in_frame(r, q, state.m, params).dot(q))
}

/// Stage values of RK4 act on a scaled quaternion-type matrix
/// `(a, b) ↦ [[a, b], [−conj b, conj a]]`, which `Φ' = ωΦ` keeps in form.
#[derive(Clone, Copy)]
struct Stage {
    a: Complex64,
    b: Complex64,
    m: Su2Vector,
}

impl Stage {
    fn axis(&self) -> Su2Vector {
        // Ad by λU equals Ad by U; divide the closed form by λ²
        let norm = self.a.norm_sqr() + self.b.norm_sqr();
        let ab = self.a * self.b;
        Su2Vector::new(-2.0 * ab.re, -2.0 * ab.im, self.a.norm_sqr() - self.b.norm_sqr()) * (1.0 / norm)
    }

    fn add(&self, d: &Stage, h: f64) -> Stage {
        Stage { a: self.a + d.a * h, b: self.b + d.b * h, m: self.m + d.m * h }
    }
}

fn vector_field(y: &Stage, params: &TopParams) -> Stage {
    let r = y.axis();
    let q = r.cross(Su2Vector::e3());
    let w = omega_in_frame(r, q, y.m, params);
    let m_dot = w.cross(y.m) + dl_in_frame(r, q, w, params);
    // ωΦ with ω = ½[[iω3, −ω2+iω1], [ω2+iω1, −iω3]], Φ = [[a, b], [−b̄, ā]]
    let w00 = Complex64::new(0.0, 0.5 * w.x3);
    let w01 = Complex64::new(-0.5 * w.x2, 0.5 * w.x1);
    let a_dot = w00 * y.a - w01 * y.b.conj();
    let b_dot = w00 * y.b + w01 * y.a.conj();
    Stage { a: a_dot, b: b_dot, m: m_dot }
}

/// One classical Runge–Kutta step followed by projection onto the group.
pub fn step(state: &TopState, dt: f64, params: &TopParams) -> Result<TopState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TopError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let condition = momentum_condition(&state.phi, params);
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(TopError::SingularMomentumForm { condition });
    }
    let y = Stage { a: state.phi.alpha, b: state.phi.beta, m: state.m };
    let k1 = vector_field(&y, params);
    let k2 = vector_field(&y.add(&k1, 0.5 * dt), params);
    let k3 = vector_field(&y.add(&k2, 0.5 * dt), params);
    let k4 = vector_field(&y.add(&k3, dt), params);
    let h6 = dt / 6.0;
    let a = y.a + (k1.a + k2.a * 2.0 + k3.a * 2.0 + k4.a) * h6;
    let b = y.b + (k1.b + k2.b * 2.0 + k3.b * 2.0 + k4.b) * h6;
    let m = y.m + (k1.m + k2.m * 2.0 + k3.m * 2.0 + k4.m) * h6;
    let raw = Mat2::new(a, b, -b.conj(), a.conj());
    let phi = renormalize(&raw)?;
    Ok(TopState { phi, m, t: state.t + dt })
}

/// Fixed-step trajectory from `initial.t` to `t_end`; the last step is
/// shortened to land on `t_end` exactly.
pub fn simulate(initial: &TopState, dt: f64, t_end: f64, params: &TopParams) -> Result<Vec<TopState>> {
    let mut out = Vec::new();
    simulate_with(initial, dt, t_end, params, |s| {
        out.push(*s);
        true
    })?;
    Ok(out)
}

/// Like [`simulate`] but hands each state to `visit` instead of storing it;
/// integration stops early when `visit` returns false.
pub fn simulate_with<F>(initial: &TopState, dt: f64, t_end: f64, params: &TopParams, mut visit: F) -> Result<TopState>
where
    F: FnMut(&TopState) -> bool,
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TopError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= initial.t) {
        return Err(TopError::InvalidParameter(format!("t_end = {t_end} precedes the initial time {}", initial.t)));
    }
    initial.phi.check(GROUP_TOL)?;
    let mut state = *initial;
    if !visit(&state) {
        return Ok(state);
    }
    let span = t_end - initial.t;
    let steps = (span / dt - 1e-9).ceil().max(0.0) as u64;
    for i in 1..=steps {
        let target = if i == steps { t_end } else { initial.t + i as f64 * dt };
        let mut next = step(&state, target - state.t, params)?;
        next.t = target;
        state = next;
        if !visit(&state) {
            break;
        }
    }
    Ok(state)
}

/// Integrates from `state` to time `t` in steps no longer than `dt`.
pub fn advance_to(state: &TopState, t: f64, dt: f64, params: &TopParams) -> Result<TopState> {
    simulate_with(state, dt, t, params, |_| true)
}

/// Builds a state from attitude and angular velocity.
pub fn state_from_omega(phi: SpecialUnitary, omega: Su2Vector, t: f64, params: &TopParams) -> Result<TopState> {
    phi.check(GROUP_TOL)?;
    Ok(TopState { phi, m: momentum(&phi, omega, params), t })
}

/// The same motion run backwards: `ω → −ω` is `m → −m`.
pub fn time_reversed(state: &TopState) -> TopState {
    TopState { m: -state.m, ..*state }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::su2::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tilted(theta: f64) -> SpecialUnitary {
        // rotation about e1 by theta: u = cos theta
        SpecialUnitary::exp(Su2Vector::new(theta, 0.0, 0.0))
    }

    fn params() -> TopParams {
        TopParams::new(1.0, 0.8, 0.7, 1.3).unwrap()
    }

    fn random_state(rng: &mut impl Rng, params: &TopParams) -> TopState {
        let phi = SpecialUnitary::exp(Su2Vector::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0)));
        let w = Su2Vector::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-5.0..5.0));
        state_from_omega(phi, w, 0.0, params).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(TopParams::new(1.0, 1.0, 1.0, 1.0).is_ok());
        assert!(matches!(TopParams::new(0.0, 1.0, 1.0, 1.0), Err(TopError::InvalidParameter(_))));
        assert!(TopParams::new(1.0, 1.0, f64::NAN, 1.0).is_err());
        // C > 2A warns only
        assert!(TopParams::new(1.0, 3.0, 1.0, 1.0).is_ok());
        assert!((TopParams::new(1.0, 1.0, 1.0, 1.0).unwrap().e4() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn energies_examples() {
        let p = params();
        let up = SpecialUnitary::identity();
        assert_eq!(kinetic_energy(&up, Su2Vector::ZERO, &p), 0.0);
        let w = 2.5;
        let t = kinetic_energy(&up, Su2Vector::new(0.0, 0.0, w), &p);
        assert!((t - 0.5 * p.c * w * w).abs() < 1e-14);
        assert!((potential_energy(&up, &p) - p.p).abs() < 1e-15);
        assert!((potential_energy(&tilted(std::f64::consts::PI), &p) + p.p).abs() < 1e-14);
        assert!(potential_energy(&tilted(std::f64::consts::FRAC_PI_2), &p).abs() < 1e-14);
    }

    #[test]
    fn momentum_examples() {
        let p = params();
        let up = SpecialUnitary::identity();
        let w = Su2Vector::new(0.0, 0.0, 1.7);
        assert!((momentum(&up, w, &p) - w * p.c).max_abs() < 1e-15);
        let sph = TopParams::new(1.2, 1.2, 1.0, 1.0).unwrap();
        let any = Su2Vector::new(0.3, -0.4, 0.9);
        assert!((momentum(&up, any, &sph) - any * 1.2).max_abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = random_state(&mut rng, &p);
            let w = momentum_to_omega(s.m, &s.phi, &p).unwrap();
            let r = s.phi.axis();
            let ik = p.a * w.x3 + (p.c - p.a) * w.dot(r) * r.x3;
            assert!((s.m.x3 - ik).abs() < 1e-12);
            assert!((s.m.dot(r) - p.c * w.dot(r)).abs() < 1e-12);
            // T = ½⟨ω, m⟩
            assert!((kinetic_energy(&s.phi, w, &p) - 0.5 * w.dot(s.m)).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_inverse() {
        let p = params();
        assert_eq!(momentum_to_omega(Su2Vector::ZERO, &tilted(0.4), &p).unwrap(), Su2Vector::ZERO);
        let sph = TopParams::new(2.0, 2.0, 1.0, 1.0).unwrap();
        let w = momentum_to_omega(Su2Vector::new(0.0, 0.0, 3.0), &SpecialUnitary::identity(), &sph).unwrap();
        assert!((w - Su2Vector::new(0.0, 0.0, 1.5)).max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = random_state(&mut rng, &p);
            let w = momentum_to_omega(s.m, &s.phi, &p).unwrap();
            let back = momentum(&s.phi, w, &p);
            assert!((back - s.m).max_abs() <= 1e-12 * s.m.norm().max(1.0));
        }
        let extreme = TopParams { a: 1.0, c: 1e-13, s: 1.0, p: 1.0 };
        assert!(matches!(
            momentum_to_omega(Su2Vector::e1(), &SpecialUnitary::identity(), &extreme),
            Err(TopError::SingularMomentumForm { .. })
        ));
    }

    fn lagrangian(phi: &SpecialUnitary, omega: Su2Vector, p: &TopParams) -> f64 {
        kinetic_energy(phi, omega, p) - potential_energy(phi, p)
    }

    #[test]
    fn dl_examples() {
        let p = params();
        let up = SpecialUnitary::identity();
        assert!(dl(&up, Su2Vector::new(0.0, 0.0, 3.0), &p).max_abs() < 1e-15);
        let side = tilted(std::f64::consts::FRAC_PI_2);
        let g = dl(&side, Su2Vector::ZERO, &p);
        assert!((g.norm() - p.p).abs() < 1e-14);
    }

    #[test]
    fn dl_matches_directional_derivative() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let s = random_state(&mut rng, &p);
            let w = momentum_to_omega(s.m, &s.phi, &p).unwrap();
            let d = dl(&s.phi, w, &p);
            let eps = 1e-5;
            for (i, eta) in [Su2Vector::e1(), Su2Vector::e2(), Su2Vector::e3()].into_iter().enumerate() {
                let plus = SpecialUnitary::exp(eta * eps).mul(&s.phi);
                let minus = SpecialUnitary::exp(eta * -eps).mul(&s.phi);
                let fd = (lagrangian(&plus, w, &p) - lagrangian(&minus, w, &p)) / (2.0 * eps);
                assert!((fd - d.to_array()[i]).abs() < 1e-8, "component {i}: fd {fd}, dl {}", d.to_array()[i]);
            }
        }
    }

    #[test]
    fn sleeping_top_is_fixed() {
        let p = params();
        let s0 = state_from_omega(SpecialUnitary::identity(), Su2Vector::new(0.0, 0.0, 4.0), 0.0, &p).unwrap();
        let end = advance_to(&s0, 10.0, 1e-3, &p).unwrap();
        assert!((end.phi.u() - 1.0).abs() < 1e-10);
        assert!((end.m - s0.m).max_abs() < 1e-10);
        let fi = first_integrals(&s0, &p).unwrap();
        assert!((fi.l - 4.0 * p.c).abs() < 1e-14 && (fi.n - 4.0 * p.c).abs() < 1e-14);
        assert!((fi.h - (0.5 * p.c * 16.0 + p.p)).abs() < 1e-13);
    }

    #[test]
    fn reversibility() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let s0 = random_state(&mut rng, &p);
            let s1 = advance_to(&s0, 1.0, 1e-3, &p).unwrap();
            let mut back = time_reversed(&s1);
            back.t = 0.0;
            let s2 = time_reversed(&advance_to(&back, 1.0, 1e-3, &p).unwrap());
            assert!(s2.phi.max_entry_diff(&s0.phi) < 1e-8);
            assert!((s2.m - s0.m).max_abs() < 1e-8);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s0 = random_state(&mut rng, &p);
        let t = 2.0;
        let reference = advance_to(&s0, t, 0.05 / 16.0, &p).unwrap();
        let err = |dt: f64| {
            let s = advance_to(&s0, t, dt, &p).unwrap();
            s.phi.max_entry_diff(&reference.phi).max((s.m - reference.m).max_abs())
        };
        let (e1, e2) = (err(0.05), err(0.025));
        let ratio = e1 / e2;
        assert!(ratio > 8.0 && ratio < 32.0, "ratio {ratio}");
    }

    #[test]
    fn simulate_edges() {
        let p = params();
        let s0 = state_from_omega(tilted(0.3), Su2Vector::new(0.1, 0.0, 2.0), 1.5, &p).unwrap();
        assert_eq!(simulate(&s0, 0.01, 1.5, &p).unwrap().len(), 1);
        let traj = simulate(&s0, 0.01, 1.555, &p).unwrap();
        assert_eq!(traj.len(), 7);
        assert_eq!(traj.last().unwrap().t, 1.555);
        assert!(traj.iter().all(|s| s.phi.group_residual() < 1e-12));
        assert!(simulate(&s0, 0.0, 2.0, &p).is_err());
        assert!(simulate(&s0, 0.1, 1.0, &p).is_err());
        let bad = TopState { phi: SpecialUnitary { alpha: C64::new(2.0, 0.0), ..s0.phi }, ..s0 };
        assert!(simulate(&bad, 0.1, 2.0, &p).is_err());
    }

    #[test]
    fn short_run_conserves() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s0 = random_state(&mut rng, &p);
        let f0 = first_integrals(&s0, &p).unwrap();
        let end = advance_to(&s0, 5.0, 1e-3, &p).unwrap();
        let f1 = first_integrals(&end, &p).unwrap();
        let scale = s0.m.norm();
        assert!((f1.h - f0.h).abs() < 1e-10 * (f0.h.abs() + p.p));
        assert!((f1.l - f0.l).abs() < 1e-10 * scale);
        assert!((f1.n - f0.n).abs() < 1e-10 * scale);
    }
}
