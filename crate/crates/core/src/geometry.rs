//! Real and complex 3-vector algebra and the map between isotropic complex
//! vectors and oriented orthonormal frames.
//!
//! The inner product on `C^3` is the C-bilinear extension of the Euclidean
//! one, `<a, b> = sum a_k b_k`; Hermitian products are written explicitly as
//! `<conj(a), b>` (see [`Complex3::hdot`]).

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config;

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("frame vector is not isotropic: |<z,z>| = {isotropy:.3e}, |<conj z,z> - 1| = {norm:.3e}")]
    NonIsotropicInput { isotropy: f64, norm: f64 },
    #[error("axes are not orthonormal: |v|^2-1 = {v:.3e}, |w|^2-1 = {w:.3e}, <v,w> = {vw:.3e}")]
    NotOrthonormal { v: f64, w: f64, vw: f64 },
}

/// A real 3-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Real3(pub [f64; 3]);

impl Real3 {
    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Real3([x1, x2, x3])
    }

    pub const fn zero() -> Self {
        Real3([0.0; 3])
    }

    /// Standard basis vector `e_{i+1}`.
    pub fn basis(i: usize) -> Self {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        Real3(v)
    }

    pub fn dot(&self, o: &Real3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Real3) -> Real3 {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Real3([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Real3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self / n)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn to_complex(self) -> Complex3 {
        Complex3(self.0.map(|c| C64::new(c, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Some unit vector orthogonal to `self` (assumed nonzero), chosen
    /// deterministically from the smallest component.
    pub fn any_orthogonal(&self) -> Real3 {
        let a = self.0.map(f64::abs);
        let k = if a[0] <= a[1] && a[0] <= a[2] {
            0
        } else if a[1] <= a[2] {
            1
        } else {
            2
        };
        let t = self.cross(&Real3::basis(k));
        t.normalized().unwrap_or(Real3::basis((k + 1) % 3))
    }
}

impl Add for Real3 {
    type Output = Real3;
    fn add(self, o: Real3) -> Real3 {
        Real3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Real3 {
    fn add_assign(&mut self, o: Real3) {
        *self = *self + o;
    }
}

impl Sub for Real3 {
    type Output = Real3;
    fn sub(self, o: Real3) -> Real3 {
        Real3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Real3 {
    fn sub_assign(&mut self, o: Real3) {
        *self = *self - o;
    }
}

impl Neg for Real3 {
    type Output = Real3;
    fn neg(self) -> Real3 {
        Real3(self.0.map(|c| -c))
    }
}

impl Mul<f64> for Real3 {
    type Output = Real3;
    fn mul(self, s: f64) -> Real3 {
        Real3(self.0.map(|c| c * s))
    }
}

impl Mul<Real3> for f64 {
    type Output = Real3;
    fn mul(self, v: Real3) -> Real3 {
        v * self
    }
}

impl std::ops::Div<f64> for Real3 {
    type Output = Real3;
    fn div(self, s: f64) -> Real3 {
        Real3(self.0.map(|c| c / s))
    }
}

impl Index<usize> for Real3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Real3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// A complex 3-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Complex3(pub [C64; 3]);

impl Complex3 {
    pub const fn new(z1: C64, z2: C64, z3: C64) -> Self {
        Complex3([z1, z2, z3])
    }

    pub fn zero() -> Self {
        Complex3([C64::new(0.0, 0.0); 3])
    }

    pub fn from_parts(re: Real3, im: Real3) -> Self {
        Complex3([
            C64::new(re[0], im[0]),
            C64::new(re[1], im[1]),
            C64::new(re[2], im[2]),
        ])
    }

    pub fn re(&self) -> Real3 {
        Real3(self.0.map(|c| c.re))
    }

    pub fn im(&self) -> Real3 {
        Real3(self.0.map(|c| c.im))
    }

    pub fn conj(&self) -> Complex3 {
        Complex3(self.0.map(|c| c.conj()))
    }

    /// Bilinear product `<a, b>`.
    pub fn dot(&self, o: &Complex3) -> C64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    /// Bilinear product with a real vector.
    pub fn dot_real(&self, o: &Real3) -> C64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    /// Hermitian product `<conj(self), o>`.
    pub fn hdot(&self, o: &Complex3) -> C64 {
        self.conj().dot(o)
    }

    pub fn cross(&self, o: &Complex3) -> Complex3 {
        complex_cross(self, o)
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Hermitian norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: C64) -> Complex3 {
        Complex3(self.0.map(|c| c * s))
    }

    pub fn normalized(&self) -> Option<Complex3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }
}

impl Add for Complex3 {
    type Output = Complex3;
    fn add(self, o: Complex3) -> Complex3 {
        Complex3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Complex3 {
    fn add_assign(&mut self, o: Complex3) {
        *self = *self + o;
    }
}

impl Sub for Complex3 {
    type Output = Complex3;
    fn sub(self, o: Complex3) -> Complex3 {
        Complex3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Complex3 {
    fn sub_assign(&mut self, o: Complex3) {
        *self = *self - o;
    }
}

impl Neg for Complex3 {
    type Output = Complex3;
    fn neg(self) -> Complex3 {
        Complex3(self.0.map(|c| -c))
    }
}

impl Mul<f64> for Complex3 {
    type Output = Complex3;
    fn mul(self, s: f64) -> Complex3 {
        Complex3(self.0.map(|c| c * s))
    }
}

impl Mul<C64> for Complex3 {
    type Output = Complex3;
    fn mul(self, s: C64) -> Complex3 {
        self.scale(s)
    }
}

impl Index<usize> for Complex3 {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Complex3 {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

/// Real 3x3 matrix, row major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub fn identity() -> Self {
        Mat3::diagonal(1.0)
    }

    pub fn diagonal(d: f64) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = d;
        }
        Mat3(m)
    }

    /// Matrix of `v -> u x v`.
    pub fn skew(u: &Real3) -> Self {
        Mat3([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
    }

    pub fn mul_vec(&self, v: &Real3) -> Real3 {
        let m = &self.0;
        Real3([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn mul_cvec(&self, v: &Complex3) -> Complex3 {
        let m = &self.0;
        let row = |r: usize| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
        Complex3([row(0), row(1), row(2)])
    }

    /// Bilinear form `a^T M b`.
    pub fn form(&self, a: &Real3, b: &Real3) -> f64 {
        a.dot(&self.mul_vec(b))
    }

    /// Bilinear (not sesquilinear) form on complex vectors.
    pub fn cform(&self, a: &Complex3, b: &Complex3) -> C64 {
        a.dot(&self.mul_cvec(b))
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Mat3> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        let mut inv = [[0.0; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                // cofactor of (j, i)
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                *cell = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / d;
            }
        }
        Some(Mat3(inv))
    }

    pub fn scaled(&self, s: f64) -> Mat3 {
        Mat3(self.0.map(|r| r.map(|c| c * s)))
    }

    pub fn add(&self, o: &Mat3) -> Mat3 {
        let mut m = self.0;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += o.0[i][j];
            }
        }
        Mat3(m)
    }
}

/// Determinant of the complex matrix with columns `a | b | c`.
pub fn det3(a: &Complex3, b: &Complex3, c: &Complex3) -> C64 {
    a.dot(&b.cross(c))
}

/// The cross product, C-linearly extended to `C^3`.
pub fn complex_cross(a: &Complex3, b: &Complex3) -> Complex3 {
    Complex3([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// An isotropic unit vector `z = (v + i w)/sqrt(2)` encoding the oriented
/// orthonormal frame `(u, v, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicFrame {
    pub z: Complex3,
}

impl IsotropicFrame {
    pub fn new(z: Complex3) -> Result<Self, GeometryError> {
        let f = IsotropicFrame { z };
        f.check(config::constraint_tol())?;
        Ok(f)
    }

    /// Residuals `(|<z,z>|, |<conj z, z> - 1|)`.
    pub fn residuals(&self) -> (f64, f64) {
        (self.z.dot(&self.z).norm(), (self.z.hdot(&self.z).re - 1.0).abs())
    }

    fn check(&self, tol: f64) -> Result<(), GeometryError> {
        let (isotropy, norm) = self.residuals();
        if isotropy > tol || norm > tol || !self.z.is_finite() {
            return Err(GeometryError::NonIsotropicInput { isotropy, norm });
        }
        Ok(())
    }

    /// The real axes `(v, w)`.
    pub fn axes(&self) -> (Real3, Real3) {
        let s = std::f64::consts::SQRT_2;
        (self.z.re() * s, self.z.im() * s)
    }

    /// A deterministic frame whose direction is the unit vector `u`.
    pub fn for_direction(u: &Real3) -> Self {
        let w = u.any_orthogonal();
        let v = w.cross(u);
        IsotropicFrame {
            z: Complex3::from_parts(v, w) * std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        IsotropicFrame {
            z: self.z.scale(C64::from_polar(1.0, theta)),
        }
    }
}

/// `u = (conj(z) x z)/i`.
pub fn direction_of_frame(f: &IsotropicFrame) -> Result<Real3, GeometryError> {
    let tol = config::constraint_tol();
    f.check(tol)?;
    let c = f.z.conj().cross(&f.z);
    // c is purely imaginary up to rounding
    let residue = c.re().max_abs();
    if residue > tol {
        let (isotropy, norm) = f.residuals();
        return Err(GeometryError::NonIsotropicInput { isotropy, norm });
    }
    Ok(c.im())
}

/// `z = (v + i w)/sqrt(2)` for an orthonormal pair `(v, w)`.
pub fn frame_of_axes(v: &Real3, w: &Real3) -> Result<IsotropicFrame, GeometryError> {
    let tol = config::constraint_tol();
    let rv = v.norm_sq() - 1.0;
    let rw = w.norm_sq() - 1.0;
    let vw = v.dot(w);
    if rv.abs() > tol || rw.abs() > tol || vw.abs() > tol || !(v.is_finite() && w.is_finite()) {
        return Err(GeometryError::NotOrthonormal { v: rv, w: rw, vw });
    }
    Ok(IsotropicFrame {
        z: Complex3::from_parts(*v, *w) * std::f64::consts::FRAC_1_SQRT_2,
    })
}
