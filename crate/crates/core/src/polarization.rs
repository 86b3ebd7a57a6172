//! Polarization observables of a ray state `(u, e)`: spin, helicity,
//! classification, Jones and Stokes vectors, and the rank-one projector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, LINEAR_TOL};
use crate::geometry::{direction_of_frame, Complex3, GeometryError, IsotropicFrame, Mat3, Real3, C64, I};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("state violates constraints: |<u,u>-1| = {u:.3e}, |<conj e,e>-1| = {e:.3e}, |<u,e>| = {ue:.3e}")]
    ConstraintViolation { u: f64, e: f64, ue: f64 },
    #[error("vector is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("polarization vector leaves the wave plane by {0:.3e}")]
    OutOfPlane(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Euclidean constraint residuals `(|<u,u>-1|, |<conj e,e>-1|, |<u,e>|)`.
pub fn constraint_residuals(u: &Real3, e: &Complex3) -> (f64, f64, f64) {
    (
        (u.norm_sq() - 1.0).abs(),
        (e.norm_sq() - 1.0).abs(),
        e.dot_real(u).norm(),
    )
}

pub(crate) fn check_state(u: &Real3, e: &Complex3) -> Result<(), PolarizationError> {
    let tol = config::constraint_tol();
    let (ru, re, rue) = constraint_residuals(u, e);
    if ru > tol || re > tol || rue > tol || !u.is_finite() || !e.is_finite() {
        return Err(PolarizationError::ConstraintViolation { u: ru, e: re, ue: rue });
    }
    Ok(())
}

/// Circular-basis amplitudes `(psi_+, psi_-)` with `|psi_+|^2 + |psi_-|^2 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JonesVector {
    pub psi_plus: C64,
    pub psi_minus: C64,
}

impl JonesVector {
    pub fn new(psi_plus: C64, psi_minus: C64) -> Result<Self, PolarizationError> {
        let j = JonesVector { psi_plus, psi_minus };
        j.check()?;
        Ok(j)
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(psi_plus: C64, psi_minus: C64) -> Result<Self, PolarizationError> {
        let n = (psi_plus.norm_sqr() + psi_minus.norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(PolarizationError::NotNormalized(n * n));
        }
        Ok(JonesVector { psi_plus: psi_plus / n, psi_minus: psi_minus / n })
    }

    pub fn norm_sq(&self) -> f64 {
        self.psi_plus.norm_sqr() + self.psi_minus.norm_sqr()
    }

    fn check(&self) -> Result<(), PolarizationError> {
        let n2 = self.norm_sq();
        if (n2 - 1.0).abs() > config::constraint_tol() || !n2.is_finite() {
            return Err(PolarizationError::NotNormalized(n2));
        }
        Ok(())
    }

    /// Hermitian overlap `<conj(self), other>`.
    pub fn overlap(&self, other: &JonesVector) -> C64 {
        self.psi_plus.conj() * other.psi_plus + self.psi_minus.conj() * other.psi_minus
    }

    pub fn with_phase(&self, theta: f64) -> Self {
        let p = C64::from_polar(1.0, theta);
        JonesVector { psi_plus: self.psi_plus * p, psi_minus: self.psi_minus * p }
    }
}

/// Stokes observables in units of action: `s_k = hbar psi* sigma_k psi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn as_real3(&self) -> Real3 {
        Real3::new(self.s1, self.s2, self.s3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Helicity {
    Right,
    Left,
}

impl Helicity {
    pub fn sign(self) -> i8 {
        match self {
            Helicity::Right => 1,
            Helicity::Left => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarizationClass {
    Circular(Helicity),
    Linear,
    Elliptic(Helicity),
}

/// Spin function `(hbar/i) <u, conj(e) x e>`.
pub fn spin(u: &Real3, e: &Complex3, hbar: f64) -> Result<f64, PolarizationError> {
    check_state(u, e)?;
    Ok(spin_unchecked(u, e, hbar))
}

/// `conj(e) x e` is purely imaginary, so the spin is `hbar Im<u, conj(e) x e>`.
pub(crate) fn spin_unchecked(u: &Real3, e: &Complex3, hbar: f64) -> f64 {
    hbar * e.conj().cross(e).im().dot(u)
}

/// Sign of the spin; 0 for linear polarization.
pub fn helicity(u: &Real3, e: &Complex3) -> Result<i8, PolarizationError> {
    check_state(u, e)?;
    let c = e.conj().cross(e);
    if c.norm() < LINEAR_TOL {
        return Ok(0);
    }
    let s = c.im().dot(u);
    Ok(if s > 0.0 { 1 } else { -1 })
}

pub fn classify(u: &Real3, e: &Complex3) -> Result<PolarizationClass, PolarizationError> {
    check_state(u, e)?;
    let tol = config::constraint_tol();
    let chirality = |s: f64| if s > 0.0 { Helicity::Right } else { Helicity::Left };
    let c = e.conj().cross(e);
    let s = c.im().dot(u);
    if e.dot(e).norm() < tol {
        Ok(PolarizationClass::Circular(chirality(s)))
    } else if c.norm() < LINEAR_TOL {
        Ok(PolarizationClass::Linear)
    } else {
        Ok(PolarizationClass::Elliptic(chirality(s)))
    }
}

/// `(u, e) = ((conj z x z)/i, psi_+ z + psi_- conj z)`.
pub fn jones_to_polarization(
    f: &IsotropicFrame,
    psi: &JonesVector,
) -> Result<(Real3, Complex3), PolarizationError> {
    psi.check()?;
    let u = direction_of_frame(f)?;
    let e = f.z.scale(psi.psi_plus) + f.z.conj().scale(psi.psi_minus);
    Ok((u, e))
}

/// Inverse of [`jones_to_polarization`]: `psi_+ = <conj z, e>`, `psi_- = <z, e>`.
pub fn polarization_to_jones(f: &IsotropicFrame, e: &Complex3) -> Result<JonesVector, PolarizationError> {
    direction_of_frame(f)?;
    let z = f.z;
    let psi_plus = z.conj().dot(e);
    let psi_minus = z.dot(e);
    let recon = z.scale(psi_plus) + z.conj().scale(psi_minus);
    let off = (*e - recon).norm();
    if off > config::constraint_tol() {
        return Err(PolarizationError::OutOfPlane(off));
    }
    JonesVector::new(psi_plus, psi_minus)
}

pub fn stokes(psi: &JonesVector, hbar: f64) -> Result<StokesVector, PolarizationError> {
    psi.check()?;
    let c = psi.psi_plus.conj() * psi.psi_minus;
    Ok(StokesVector {
        s1: hbar * 2.0 * c.re,
        s2: hbar * 2.0 * c.im,
        s3: hbar * (psi.psi_plus.norm_sqr() - psi.psi_minus.norm_sqr()),
    })
}

/// Hermitian rank-one projector `pi = e e*`, acting as `v -> e <conj e, v>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationProjector(pub [[C64; 3]; 3]);

impl PolarizationProjector {
    pub fn apply(&self, v: &Complex3) -> Complex3 {
        let m = &self.0;
        let row = |r: usize| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
        Complex3::new(row(0), row(1), row(2))
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// `hbar Tr(i pi j(u))` with `j(u) v = u x v`.
    pub fn spin(&self, u: &Real3, hbar: f64) -> f64 {
        let j = Mat3::skew(u);
        let mut tr = C64::new(0.0, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                tr += self.0[a][b] * j.0[b][a];
            }
        }
        hbar * (I * tr).re
    }

    /// Largest entry-wise deviation from `pi^2 = pi`, `pi = pi*`, `Tr pi = 1`, `pi u = 0`.
    pub fn max_residual(&self, u: &Real3) -> f64 {
        let m = &self.0;
        let mut r: f64 = (self.trace() - 1.0).norm();
        for a in 0..3 {
            for b in 0..3 {
                let sq: C64 = (0..3).map(|k| m[a][k] * m[k][b]).sum();
                r = r.max((sq - m[a][b]).norm());
                r = r.max((m[a][b] - m[b][a].conj()).norm());
            }
        }
        r.max(self.apply(&u.to_complex()).norm())
    }

    pub fn max_diff(&self, other: &PolarizationProjector) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                d = d.max((self.0[a][b] - other.0[a][b]).norm());
            }
        }
        d
    }
}

pub fn projector(e: &Complex3) -> Result<PolarizationProjector, PolarizationError> {
    let n2 = e.norm_sq();
    if (n2 - 1.0).abs() > config::constraint_tol() || !n2.is_finite() {
        return Err(PolarizationError::NotNormalized(n2));
    }
    let mut m = [[C64::new(0.0, 0.0); 3]; 3];
    for (a, row) in m.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = e[a] * e[b].conj();
        }
    }
    Ok(PolarizationProjector(m))
}
