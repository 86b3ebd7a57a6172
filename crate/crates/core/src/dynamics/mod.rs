//! Ray dynamics on the evolution space of triples `(x, u, e)`: the one-form
//! and presymplectic two-form, the kernel (foliation) vector fields, a
//! constraint-projecting integrator and discrete connection holonomies.

mod foliation;
mod holonomy;
mod integrate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, Constants};
use crate::geometry::{Complex3, Mat3, Real3, C64, I};
use crate::metric::{contract_christoffel, contract_christoffel_real, riemann_tensor, Christoffel, MetricError, MetricField, Riemann};
use crate::polarization::PolarizationError;

pub use foliation::{
    fermat_velocity_split, foliation_vector_fermat, foliation_vector_flat, foliation_vector_general, FermatVelocity,
};
pub use holonomy::{
    connection_holonomy, geodesic_polygon, latitude_loop, wrap_phase, HolonomyKind, HolonomyLoop,
};
pub use integrate::{integrate, Diagnostics, FoliationField, Trajectory, TrajectoryPoint, TRAJECTORY_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("singular denominator: |1 - lambdabar^2 R(E, conj E, E, conj E)| = {0:.3e}")]
    SingularDenominator(f64),
    #[error("invalid integration parameters: {0}")]
    InvalidParameters(String),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("loop is not closed: |<conj first, last>| = {overlap:.6}")]
    LoopNotClosed { overlap: f64 },
    #[error("loop needs at least two samples")]
    EmptyLoop,
}

impl DynamicsError {
    /// Step index for errors raised during integration.
    pub fn step(&self) -> Option<usize> {
        match self {
            DynamicsError::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }

    /// The error with any step annotation stripped.
    pub fn root(&self) -> &DynamicsError {
        match self {
            DynamicsError::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}

/// A point `(x, u, e)` of the evolution space. In curved mode the components
/// are the coordinate fields `(X, U, E)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    pub x: Real3,
    pub u: Real3,
    pub e: Complex3,
}

impl RayState {
    pub fn new(x: Real3, u: Real3, e: Complex3) -> Self {
        RayState { x, u, e }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.u.is_finite() && self.e.is_finite()
    }

    pub(crate) fn add_scaled(&self, t: &Tangent, h: f64) -> RayState {
        RayState { x: self.x + t.dx * h, u: self.u + t.du * h, e: self.e + t.de * h }
    }
}

/// Coordinate rates `(dx, du, de)` at a state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub dx: Real3,
    pub du: Real3,
    pub de: Complex3,
}

impl Tangent {
    pub fn zero() -> Self {
        Tangent::default()
    }

    pub fn scaled(&self, h: f64) -> Tangent {
        Tangent { dx: self.dx * h, du: self.du * h, de: self.de * h }
    }

    pub fn add(&self, o: &Tangent) -> Tangent {
        Tangent { dx: self.dx + o.dx, du: self.du + o.du, de: self.de + o.de }
    }

    /// Euclidean norm on `R^3 x R^3 x C^3`.
    pub fn norm(&self) -> f64 {
        (self.dx.norm_sq() + self.du.norm_sq() + self.de.norm_sq()).sqrt()
    }
}

/// Lagrange multipliers fixing the parametrization of the foliation.
/// `alpha` is the speed of the base point (unit Euclidean norm in Fermat and
/// flat mode, unit g-norm in curved mode); `beta` rotates the phase of `e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliationGauge {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FoliationGauge {
    fn default() -> Self {
        FoliationGauge { alpha: 1.0, beta: 0.0 }
    }
}

impl FoliationGauge {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, DynamicsError> {
        if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(DynamicsError::InvalidParameters(format!("gauge alpha = {alpha}, beta = {beta}")));
        }
        Ok(FoliationGauge { alpha, beta })
    }
}

/// Metric data at one point.
#[derive(Clone, Copy, Debug)]
pub struct LocalGeometry {
    pub g: Mat3,
    pub gamma: Christoffel,
    pub riemann: Riemann,
    pub volume_density: f64,
}

impl LocalGeometry {
    pub fn at(m: &dyn MetricField, x: &Real3) -> Result<Self, MetricError> {
        Ok(LocalGeometry {
            g: m.metric(x)?,
            gamma: m.christoffel(x)?,
            riemann: riemann_tensor(m, x)?,
            volume_density: m.volume_density(x)?,
        })
    }

    pub fn flat() -> Self {
        LocalGeometry {
            g: Mat3::identity(),
            gamma: [[[0.0; 3]; 3]; 3],
            riemann: Riemann::zero(),
            volume_density: 1.0,
        }
    }

    /// Hermitian product `g(conj a, b)`.
    pub fn herm(&self, a: &Complex3, b: &Complex3) -> C64 {
        self.g.cform(&a.conj(), b)
    }

    /// Covariant rates from coordinate rates.
    pub fn covariant(&self, s: &RayState, t: &Tangent) -> (Real3, Complex3) {
        let du = t.du + contract_christoffel_real(&self.gamma, &s.u, &t.dx);
        let de = t.de + contract_christoffel(&self.gamma, &s.e, &t.dx);
        (du, de)
    }

    /// Coordinate rates from covariant rates.
    pub fn coordinate(&self, s: &RayState, dx: Real3, du_cov: Real3, de_cov: Complex3) -> Tangent {
        Tangent {
            dx,
            du: du_cov - contract_christoffel_real(&self.gamma, &s.u, &dx),
            de: de_cov - contract_christoffel(&self.gamma, &s.e, &dx),
        }
    }

    /// `(|g(u,u) - 1|, |g(conj e, e) - 1|, |g(u, e)|)`.
    pub fn residuals(&self, s: &RayState) -> (f64, f64, f64) {
        (
            (self.g.form(&s.u, &s.u) - 1.0).abs(),
            (self.herm(&s.e, &s.e) - 1.0).norm(),
            self.g.cform(&s.u.to_complex(), &s.e).norm(),
        )
    }

    pub fn check(&self, s: &RayState) -> Result<(), PolarizationError> {
        let (u, e, ue) = self.residuals(s);
        let tol = config::constraint_tol();
        if u > tol || e > tol || ue > tol || !s.is_finite() {
            return Err(PolarizationError::ConstraintViolation { u, e, ue });
        }
        Ok(())
    }

    /// Projects a raw triple of (coordinate displacement, covariant `dU`,
    /// covariant `dE`) onto the tangent space of the constraints at `s`, and
    /// returns it as coordinate rates.
    pub fn tangent_from_covariant(&self, s: &RayState, dx: Real3, du_cov: Real3, de_cov: Complex3) -> Tangent {
        let g = &self.g;
        let du = du_cov - s.u * (g.form(&s.u, &du_cov) / g.form(&s.u, &s.u));
        let uc = s.u.to_complex();
        let c = g.cform(&uc, &de_cov) + g.cform(&du.to_complex(), &s.e);
        let mut de = de_cov - uc * c;
        let r = self.herm(&s.e, &de).re;
        de -= s.e * r;
        self.coordinate(s, dx, du, de)
    }
}

fn check_metric_state(m: &dyn MetricField, s: &RayState, want_curvature: bool) -> Result<LocalGeometry, DynamicsError> {
    let geom = if want_curvature {
        LocalGeometry::at(m, &s.x)?
    } else {
        LocalGeometry {
            g: m.metric(&s.x)?,
            gamma: m.christoffel(&s.x)?,
            riemann: Riemann::zero(),
            volume_density: m.volume_density(&s.x)?,
        }
    };
    geom.check(s)?;
    Ok(geom)
}

pub(crate) fn oneform_at(geom: &LocalGeometry, c: &Constants, s: &RayState, dy: &Tangent) -> C64 {
    let (_, de_cov) = geom.covariant(s, dy);
    // -(hbar/i) = i hbar
    C64::new(c.p_color * geom.g.form(&s.u, &dy.dx), 0.0) + I * c.hbar * geom.herm(&s.e, &de_cov)
}

/// The one-form `p g(U, dX) - (hbar/i) g(conj E, d^nabla E)` evaluated on `dy`.
pub fn oneform(m: &dyn MetricField, c: &Constants, s: &RayState, dy: &Tangent) -> Result<f64, DynamicsError> {
    let geom = check_metric_state(m, s, false)?;
    Ok(oneform_at(&geom, c, s, dy).re)
}

pub(crate) fn twoform_at(geom: &LocalGeometry, c: &Constants, s: &RayState, a: &Tangent, b: &Tangent) -> C64 {
    let g = &geom.g;
    let (du_a, de_a) = geom.covariant(s, a);
    let (du_b, de_b) = geom.covariant(s, b);
    let fermat = c.p_color * (g.form(&du_a, &b.dx) - g.form(&du_b, &a.dx));
    let curv = geom.riemann.apply(&a.dx.to_complex(), &b.dx.to_complex(), &s.e);
    let curv = geom.herm(&s.e, &curv);
    let pol = geom.herm(&de_a, &de_b) - geom.herm(&de_b, &de_a);
    C64::new(fermat, 0.0) + I * c.hbar * (curv + pol)
}

/// The presymplectic two-form, including the curvature term
/// `-(hbar/i) g(conj E, R(dX, d'X) E)`.
pub fn twoform(
    m: &dyn MetricField,
    c: &Constants,
    s: &RayState,
    dy: &Tangent,
    dy2: &Tangent,
) -> Result<f64, DynamicsError> {
    let geom = check_metric_state(m, s, true)?;
    Ok(twoform_at(&geom, c, s, dy, dy2).re)
}

/// Intrinsic spin `(hbar/i) Vol(U, conj E, E)`.
pub fn intrinsic_spin(m: &dyn MetricField, s: &RayState, hbar: f64) -> Result<f64, DynamicsError> {
    let geom = check_metric_state(m, s, false)?;
    Ok(intrinsic_spin_at(&geom, s, hbar))
}

pub(crate) fn intrinsic_spin_at(geom: &LocalGeometry, s: &RayState, hbar: f64) -> f64 {
    let c = s.e.conj().cross(&s.e);
    hbar * geom.volume_density * c.im().dot(&s.u)
}
