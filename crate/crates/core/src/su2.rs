//! The group SU(2) and its Lie algebra su(2) ≅ ℝ³.
//!
//! A vector `x = (x1, x2, x3)` is identified with the trace-free skew-hermitian
//! matrix `½[[i x3, -x2 + i x1], [x2 + i x1, -i x3]]`. Under this identification
//! the matrix commutator is the cross product and `-2 Tr(xy)` is the dot
//! product. An attitude is a unit-determinant matrix `[[α, β], [γ, δ]]` with
//! `δ = conj(α)`, `γ = -conj(β)` (the Cayley–Klein parameters); it acts on
//! vectors by conjugation.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TopError};

pub type C64 = Complex64;

/// Default tolerance for group-membership and tangency checks.
pub const GROUP_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);

/// A real 3-vector, read as an element of su(2).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Su2Vector {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl Su2Vector {
    pub const ZERO: Su2Vector = Su2Vector::new(0.0, 0.0, 0.0);

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Su2Vector { x1, x2, x3 }
    }

    pub const fn e1() -> Self {
        Su2Vector::new(1.0, 0.0, 0.0)
    }

    pub const fn e2() -> Self {
        Su2Vector::new(0.0, 1.0, 0.0)
    }

    pub const fn e3() -> Self {
        Su2Vector::new(0.0, 0.0, 1.0)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Su2Vector::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2 + self.x3 * o.x3
    }

    pub fn cross(self, o: Self) -> Self {
        Su2Vector::new(
            self.x2 * o.x3 - self.x3 * o.x2,
            self.x3 * o.x1 - self.x1 * o.x3,
            self.x1 * o.x2 - self.x2 * o.x1,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(self) -> f64 {
        self.x1.abs().max(self.x2.abs()).max(self.x3.abs())
    }

    /// Orthogonal projection of an arbitrary 2×2 matrix onto su(2), returned
    /// together with the Frobenius norm of the discarded part.
    pub fn from_matrix(m: &Mat2) -> (Self, f64) {
        let v = Su2Vector::new(
            m.0[0][1].im + m.0[1][0].im,
            m.0[1][0].re - m.0[0][1].re,
            m.0[0][0].im - m.0[1][1].im,
        );
        let residual = (*m - vec_to_matrix(v)).frobenius();
        (v, residual)
    }
}

impl Add for Su2Vector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Su2Vector::new(self.x1 + o.x1, self.x2 + o.x2, self.x3 + o.x3)
    }
}

impl Sub for Su2Vector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Su2Vector::new(self.x1 - o.x1, self.x2 - o.x2, self.x3 - o.x3)
    }
}

impl Neg for Su2Vector {
    type Output = Self;
    fn neg(self) -> Self {
        Su2Vector::new(-self.x1, -self.x2, -self.x3)
    }
}

impl Mul<f64> for Su2Vector {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Su2Vector::new(self.x1 * k, self.x2 * k, self.x3 * k)
    }
}

impl Mul<Su2Vector> for f64 {
    type Output = Su2Vector;
    fn mul(self, v: Su2Vector) -> Su2Vector {
        v * self
    }
}

/// A general complex 2×2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn identity() -> Self {
        Mat2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn zero() -> Self {
        Mat2([[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2::new(a, C64::new(0.0, 0.0), C64::new(0.0, 0.0), d)
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn conj_transpose(&self) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn scale(&self, k: C64) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0] * k, m[0][1] * k, m[1][0] * k, m[1][1] * k)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.conj_transpose() * *self;
        // eigenvalues of a 2×2 hermitian matrix
        let a = g.0[0][0].re;
        let d = g.0[1][1].re;
        let b = g.0[0][1].norm();
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean + rad).max(0.0).sqrt()
    }
}

impl Add for Mat2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

impl Mul for Mat2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// An attitude: the Cayley–Klein parameters of an SU(2) matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialUnitary {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
}

impl SpecialUnitary {
    pub fn identity() -> Self {
        SpecialUnitary::from_alpha_beta(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    }

    /// Builds `[[α, β], [-conj β, conj α]]` without normalising.
    pub fn from_alpha_beta(alpha: C64, beta: C64) -> Self {
        SpecialUnitary { alpha, beta, gamma: -beta.conj(), delta: alpha.conj() }
    }

    /// Accepts four entries only if they satisfy the group constraints.
    pub fn new(alpha: C64, beta: C64, gamma: C64, delta: C64, tol: f64) -> Result<Self> {
        let g = SpecialUnitary { alpha, beta, gamma, delta };
        g.check(tol)?;
        Ok(g)
    }

    /// Unchecked conversion from a matrix.
    pub fn from_matrix_unchecked(m: &Mat2) -> Self {
        SpecialUnitary { alpha: m.0[0][0], beta: m.0[0][1], gamma: m.0[1][0], delta: m.0[1][1] }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.alpha, self.beta, self.gamma, self.delta)
    }

    /// Inverse from the adjugate; equals the conjugate transpose on the group.
    pub fn inverse(&self) -> Self {
        SpecialUnitary { alpha: self.delta, beta: -self.beta, gamma: -self.gamma, delta: self.alpha }
    }

    /// Largest violation of `αδ - βγ = 1`, `δ = conj α`, `γ = -conj β`.
    pub fn group_residual(&self) -> f64 {
        let det = self.alpha * self.delta - self.beta * self.gamma;
        (det - 1.0)
            .norm()
            .max((self.delta - self.alpha.conj()).norm())
            .max((self.gamma + self.beta.conj()).norm())
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let residual = self.group_residual();
        if residual.is_finite() && residual <= tol {
            Ok(())
        } else {
            Err(TopError::NotInGroup { residual })
        }
    }

    /// Conjugation `Φ x Φ⁻¹` without a membership check.
    pub fn rotate(&self, x: Su2Vector) -> Su2Vector {
        let m = self.matrix() * vec_to_matrix(x) * self.inverse().matrix();
        Su2Vector::from_matrix(&m).0
    }

    /// The top's axis `r = Φ k Φ⁻¹` for `k = e3`, assuming `Φ` is in the group.
    pub fn axis(&self) -> Su2Vector {
        let ab = self.alpha * self.beta;
        Su2Vector::new(-2.0 * ab.re, -2.0 * ab.im, self.alpha.norm_sqr() - self.beta.norm_sqr())
    }

    /// `u = ⟨r, k⟩ = αδ + βγ`.
    pub fn u(&self) -> f64 {
        (self.alpha * self.delta + self.beta * self.gamma).re
    }

    /// Group exponential of `v` read as an su(2) element.
    pub fn exp(v: Su2Vector) -> Self {
        let theta = v.norm();
        let half = 0.5 * theta;
        let coef = if theta > 1e-8 { 2.0 * half.sin() / theta } else { 1.0 - theta * theta / 24.0 };
        let x = vec_to_matrix(v).scale(C64::new(coef, 0.0));
        let m = Mat2::identity().scale(C64::new(half.cos(), 0.0)) + x;
        SpecialUnitary::from_matrix_unchecked(&m)
    }

    pub fn mul(&self, o: &SpecialUnitary) -> SpecialUnitary {
        SpecialUnitary::from_matrix_unchecked(&(self.matrix() * o.matrix()))
    }

    pub fn max_entry_diff(&self, o: &SpecialUnitary) -> f64 {
        (self.alpha - o.alpha)
            .norm()
            .max((self.beta - o.beta).norm())
            .max((self.gamma - o.gamma).norm())
            .max((self.delta - o.delta).norm())
    }
}

/// `(x1, x2, x3) ↦ ½[[i x3, -x2 + i x1], [x2 + i x1, -i x3]]`.
pub fn vec_to_matrix(v: Su2Vector) -> Mat2 {
    Mat2::new(
        I * (0.5 * v.x3),
        C64::new(-0.5 * v.x2, 0.5 * v.x1),
        C64::new(0.5 * v.x2, 0.5 * v.x1),
        -I * (0.5 * v.x3),
    )
}

/// Lie bracket, i.e. the cross product.
pub fn bracket(x: Su2Vector, y: Su2Vector) -> Su2Vector {
    x.cross(y)
}

/// Scalar product `⟨x, y⟩ = -2 Tr(xy)`, i.e. the dot product.
pub fn inner(x: Su2Vector, y: Su2Vector) -> f64 {
    x.dot(y)
}

/// `Φ X Φ⁻¹`, rejecting `Φ` outside the group.
pub fn adjoint_rotate(phi: &SpecialUnitary, x: Su2Vector) -> Result<Su2Vector> {
    phi.check(GROUP_TOL)?;
    Ok(phi.rotate(x))
}

fn su2_part(m: &Mat2, tol: f64) -> Result<Su2Vector> {
    let (v, residual) = Su2Vector::from_matrix(m);
    if residual <= tol * m.frobenius().max(1.0) {
        Ok(v)
    } else {
        Err(TopError::NotTangent { residual })
    }
}

/// Fixed-frame angular velocity `ω = Φ' Φ⁻¹`.
pub fn angular_velocity_fixed(phi: &SpecialUnitary, phi_dot: &Mat2) -> Result<Su2Vector> {
    phi.check(GROUP_TOL)?;
    su2_part(&(*phi_dot * phi.inverse().matrix()), GROUP_TOL)
}

/// Body-frame angular velocity `Ω = Φ⁻¹ Φ'`.
pub fn angular_velocity_body(phi: &SpecialUnitary, phi_dot: &Mat2) -> Result<Su2Vector> {
    phi.check(GROUP_TOL)?;
    su2_part(&(phi.inverse().matrix() * *phi_dot), GROUP_TOL)
}

/// A point of the extended complex plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ComplexPoint {
    Finite(C64),
    Infinity,
}

impl ComplexPoint {
    pub fn finite(self) -> Option<C64> {
        match self {
            ComplexPoint::Finite(z) => Some(z),
            ComplexPoint::Infinity => None,
        }
    }
}

/// Inverse stereographic projection from the north pole.
pub fn stereo_inverse(z: ComplexPoint) -> Su2Vector {
    match z {
        ComplexPoint::Infinity => Su2Vector::e3(),
        ComplexPoint::Finite(z) => {
            let r2 = z.norm_sqr();
            if !r2.is_finite() {
                return Su2Vector::e3();
            }
            let d = r2 + 1.0;
            Su2Vector::new(2.0 * z.re / d, 2.0 * z.im / d, (r2 - 1.0) / d)
        }
    }
}

/// `z ↦ (αz + β)/(γz + δ)` on the extended plane.
pub fn mobius_apply(phi: &SpecialUnitary, z: ComplexPoint) -> ComplexPoint {
    let zero = C64::new(0.0, 0.0);
    match z {
        ComplexPoint::Infinity => {
            if phi.gamma == zero {
                ComplexPoint::Infinity
            } else {
                ComplexPoint::Finite(phi.alpha / phi.gamma)
            }
        }
        ComplexPoint::Finite(z) => {
            let den = phi.gamma * z + phi.delta;
            if den == zero {
                ComplexPoint::Infinity
            } else {
                ComplexPoint::Finite((phi.alpha * z + phi.beta) / den)
            }
        }
    }
}

/// Nearest group element to a drifted matrix.
///
/// The quaternion-type matrices `[[a, b], [-conj b, conj a]]` form a real
/// 4-dimensional subspace containing SU(2) as its unit sphere, so projecting
/// onto the subspace and normalising gives the Frobenius-nearest element.
pub fn renormalize(m: &Mat2) -> Result<SpecialUnitary> {
    let a = 0.5 * (m.0[0][0] + m.0[1][1].conj());
    let b = 0.5 * (m.0[0][1] - m.0[1][0].conj());
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(TopError::TooFarFromGroup { distance: f64::INFINITY });
    }
    let g = SpecialUnitary::from_alpha_beta(a / norm, b / norm);
    let distance = (*m - g.matrix()).spectral_norm();
    if distance > 0.1 {
        return Err(TopError::TooFarFromGroup { distance });
    }
    Ok(g)
}
