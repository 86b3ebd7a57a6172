//! Kernel vector fields of the two-form.

use serde::{Deserialize, Serialize};

use super::{check_metric_state, DynamicsError, FoliationGauge, LocalGeometry, RayState, Tangent};
use crate::config::SINGULAR_TOL;
use crate::geometry::{Mat3, Real3, C64, I};
use crate::metric::{FermatMedium, MetricField};
use crate::polarization::{check_state, spin_unchecked};

/// Free flow `dx = alpha u`, `du = 0`, `de = i beta e`.
pub fn foliation_vector_flat(s: &RayState, gauge: &FoliationGauge) -> Result<Tangent, DynamicsError> {
    check_state(&s.u, &s.e)?;
    Ok(flat_unchecked(s, gauge))
}

pub(crate) fn flat_unchecked(s: &RayState, gauge: &FoliationGauge) -> Tangent {
    Tangent { dx: s.u * gauge.alpha, du: Real3::zero(), de: s.e * (I * gauge.beta) }
}

/// Kernel of the two-form on an arbitrary Riemannian metric, with
/// `||dX||_g = alpha`.
pub fn foliation_vector_general(
    m: &dyn MetricField,
    s: &RayState,
    lambdabar: f64,
    gauge: &FoliationGauge,
) -> Result<Tangent, DynamicsError> {
    let geom = check_metric_state(m, s, true)?;
    general_at(&geom, s, lambdabar, gauge)
}

pub(crate) fn general_at(
    geom: &LocalGeometry,
    s: &RayState,
    lambdabar: f64,
    gauge: &FoliationGauge,
) -> Result<Tangent, DynamicsError> {
    let g = &geom.g;
    let r = &geom.riemann;
    let e = s.e;
    let eb = e.conj();
    let uc = s.u.to_complex();
    let lb2 = lambdabar * lambdabar;

    let r_u = r.apply(&e, &eb, &uc);
    let r_eeb_u_eb = g.cform(&eb, &r_u);
    let r_eeb_u_e = g.cform(&e, &r_u);
    let r_eeb_e_eb = g.cform(&eb, &r.apply(&e, &eb, &e));
    let delta = C64::new(1.0, 0.0) - r_eeb_e_eb * lb2;
    if delta.norm() <= SINGULAR_TOL {
        return Err(DynamicsError::SingularDenominator(delta.norm()));
    }

    let dx_raw = (uc + (e * r_eeb_u_eb - eb * r_eeb_u_e) * (lb2 / delta)).re();
    let speed = g.form(&dx_raw, &dx_raw).sqrt();
    let alpha = gauge.alpha / speed;
    let dx = dx_raw * alpha;

    // (lambdabar / i) R(E, conj E) dX
    let du_cov = r.apply(&e, &eb, &dx.to_complex()).scale(-I * lambdabar).re();
    let de_cov = e * (I * gauge.beta) - uc * (r_eeb_u_e * (alpha * lambdabar) / (I * delta));
    Ok(geom.coordinate(s, dx, du_cov, de_cov))
}

/// Velocity of the slow-gradient Fermat flow in the gauge `alpha p = 1`,
/// split into the canonical momentum part and the spin-dependent part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermatVelocity {
    /// `p / p_color = n (u + (s/p) g x u)`.
    pub canonical: Real3,
    /// `(s/p) (p / p_color) x g`.
    pub anomalous: Real3,
    /// `lambdabar |g|`, the expansion parameter of the slow-gradient regime.
    pub regime: f64,
}

pub fn fermat_velocity_split(medium: &FermatMedium, s: &RayState, lambdabar: f64) -> Result<FermatVelocity, DynamicsError> {
    check_state(&s.u, &s.e)?;
    medium.domain().check(&s.x, 0.0)?;
    let (n, gn) = medium.eval_unchecked(&s.x)?;
    let gv = gn * (-1.0 / (n * n));
    let ls = lambdabar * spin_unchecked(&s.u, &s.e, 1.0);
    let canonical = (s.u + gv.cross(&s.u) * ls) * n;
    Ok(FermatVelocity { canonical, anomalous: canonical.cross(&gv) * ls, regime: lambdabar * gv.norm() })
}

/// Slow-gradient kernel field in Euclidean variables `(x, u, e)`.
///
/// Momentum and velocity follow the truncated kernel equations. The
/// direction `u` is recovered from the canonical momentum by differentiating
/// `p / n = p_color (u + (s/p) g x u)` along the flow, and `e` co-rotates with
/// `u` so that it stays transverse with constant spin.
pub fn foliation_vector_fermat(
    medium: &FermatMedium,
    s: &RayState,
    lambdabar: f64,
    gauge: &FoliationGauge,
) -> Result<Tangent, DynamicsError> {
    check_state(&s.u, &s.e)?;
    fermat_unchecked(medium, s, lambdabar, gauge)
}

pub(crate) fn fermat_unchecked(
    medium: &FermatMedium,
    s: &RayState,
    lambdabar: f64,
    gauge: &FoliationGauge,
) -> Result<Tangent, DynamicsError> {
    medium.domain().check(&s.x, 0.0)?;
    let u = s.u;
    let (n, gn) = medium.eval_unchecked(&s.x)?;
    let gvec = |x: &Real3| -> Result<Real3, DynamicsError> {
        let (n, gn) = medium.eval_unchecked(x)?;
        Ok(gn * (-1.0 / (n * n)))
    };
    let gv = gn * (-1.0 / (n * n));
    let ls = lambdabar * spin_unchecked(&u, &s.e, 1.0) / u.norm_sq();

    let ph = (u + gv.cross(&u) * ls) * n;
    let v = ph + ph.cross(&gv) * ls;
    let a = gauge.alpha / v.norm();
    let dx = v * a;
    let dp = gv * (-a * n * n * n);

    let dg = if ls == 0.0 {
        Real3::zero()
    } else {
        let h = 1e-6 * medium.domain().scale();
        (gvec(&(s.x + dx * h))? - gvec(&(s.x - dx * h))?) / (2.0 * h)
    };
    let rhs = (dp - ph * (gn.dot(&dx) / n)) / n - dg.cross(&u) * ls;
    let m = Mat3::identity().add(&Mat3::skew(&gv).scaled(ls));
    let du = m.inverse().map(|mi| mi.mul_vec(&rhs)).unwrap_or(rhs);
    let du = du - u * (du.dot(&u) / u.norm_sq());
    let de = s.e * (I * gauge.beta) - u.to_complex() * (s.e.dot_real(&du) / u.norm_sq());
    Ok(Tangent { dx, du, de })
}
