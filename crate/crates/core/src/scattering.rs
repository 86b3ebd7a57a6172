//! Scattering of a ray at a flat interface between two homogeneous media:
//! momentum maps, refraction and reflection, and the spin-dependent
//! transverse shift fixed by conservation of the angular momentum about the
//! normal.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, Constants};
use crate::dynamics::RayState;
use crate::geometry::{Complex3, IsotropicFrame, Real3, C64};
use crate::polarization::{check_state, polarization_to_jones, spin_unchecked, PolarizationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScatterError {
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error("invalid interface: {0}")]
    InvalidInterface(String),
    #[error("grazing incidence: |<u, n>| = {0:.3e}")]
    GrazingIncidence(f64),
    #[error("normal incidence: the shift is defined as zero there")]
    NormalIncidenceDegenerate,
    #[error("momentum norm {got} does not match the color {want} of the incoming medium")]
    ColorMismatch { got: f64, want: f64 },
    #[error("ray moves away from the interface (hit parameter {0:.3e})")]
    WrongSide(f64),
    #[error("spin model returned {0}, outside [-hbar, hbar]")]
    SpinOutOfRange(f64),
}

/// A plane through `point` with unit `normal` pointing into medium 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub normal: Real3,
    pub point: Real3,
    pub n1: f64,
    pub n2: f64,
}

impl InterfaceSpec {
    pub fn new(normal: Real3, point: Real3, n1: f64, n2: f64) -> Result<Self, ScatterError> {
        let s = InterfaceSpec { normal, point, n1, n2 };
        s.validate()?;
        if !(n1 > 0.0 && n2 > 0.0) {
            return Err(ScatterError::InvalidInterface(format!("indices must be positive, got {n1}, {n2}")));
        }
        Ok(s)
    }

    /// Like [`InterfaceSpec::new`] but admits negative indices. Experimental.
    pub fn with_signed_indices(normal: Real3, point: Real3, n1: f64, n2: f64) -> Result<Self, ScatterError> {
        let s = InterfaceSpec { normal, point, n1, n2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScatterError> {
        let r = (self.normal.norm() - 1.0).abs();
        if r > config::constraint_tol() || !self.normal.is_finite() {
            return Err(ScatterError::InvalidInterface(format!("normal is not a unit vector (|n| - 1 = {r:.3e})")));
        }
        if !self.point.is_finite() || !(self.n1.is_finite() && self.n2.is_finite()) || self.n1 == 0.0 || self.n2 == 0.0 {
            return Err(ScatterError::InvalidInterface(format!("indices {}, {}", self.n1, self.n2)));
        }
        Ok(())
    }

    /// Normal oriented along the propagation direction `v`, with the
    /// incoming and outgoing indices on that side.
    fn oriented(&self, v: &Real3) -> (Real3, f64, f64) {
        if v.dot(&self.normal) >= 0.0 {
            (self.normal, self.n1, self.n2)
        } else {
            (-self.normal, self.n2, self.n1)
        }
    }
}

/// Euclidean momentum map: angular momentum `ell` and linear momentum `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumMapValue {
    pub ell: Real3,
    pub p_vec: Real3,
}

impl MomentumMapValue {
    /// `<ell, p> / |p|`, which equals the spin.
    pub fn helicity_projection(&self) -> f64 {
        self.ell.dot(&self.p_vec) / self.p_vec.norm()
    }
}

/// `ell = x x p + s u`, `p = p_color u` in vacuum.
pub fn momentum_map(s: &RayState, c: &Constants) -> Result<MomentumMapValue, ScatterError> {
    momentum_map_in_medium(s, c, 1.0)
}

/// Momentum map in a homogeneous medium of index `n`, where `p = n p_color u`.
pub fn momentum_map_in_medium(s: &RayState, c: &Constants, n: f64) -> Result<MomentumMapValue, ScatterError> {
    check_state(&s.u, &s.e)?;
    let p_vec = s.u * (n * c.p_color);
    let spin = spin_unchecked(&s.u, &s.e, c.hbar);
    Ok(MomentumMapValue { ell: s.x.cross(&p_vec) + s.u * spin, p_vec })
}

/// Requested branch at the interface.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    #[default]
    Refraction,
    Reflection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SnelOutcome {
    Refracted(Real3),
    Reflected(Real3),
    TotalInternalReflection(Real3),
}

impl SnelOutcome {
    pub fn p_out(&self) -> Real3 {
        match *self {
            SnelOutcome::Refracted(p) | SnelOutcome::Reflected(p) | SnelOutcome::TotalInternalReflection(p) => p,
        }
    }

    pub fn is_transmitted(&self) -> bool {
        matches!(self, SnelOutcome::Refracted(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            SnelOutcome::Refracted(_) => "Refracted",
            SnelOutcome::Reflected(_) => "Reflected",
            SnelOutcome::TotalInternalReflection(_) => "TotalInternalReflection",
        }
    }
}

/// Vector Snel-Descartes law: the tangential momentum is kept and the normal
/// component is fixed by the color of the outgoing medium. Total internal
/// reflection is returned when refraction has no real solution.
pub fn snel_descartes(p_in: &Real3, iface: &InterfaceSpec, p_color: f64, branch: Branch) -> Result<SnelOutcome, ScatterError> {
    iface.validate()?;
    let norm = p_in.norm();
    // the side follows the ray direction, which for a negative index is -p
    let side = |n_in: f64| *p_in * (n_in.signum() / norm);
    let (mut nrm, mut n_in, mut n_out) = iface.oriented(p_in);
    if n_in < 0.0 {
        (nrm, n_in, n_out) = iface.oriented(&side(n_in));
    }
    let want = p_color * n_in.abs();
    if (norm - want).abs() > config::constraint_tol() * want.max(1.0) {
        return Err(ScatterError::ColorMismatch { got: norm, want });
    }
    let cos_in = side(n_in).dot(&nrm);
    if cos_in.abs() < config::constraint_tol() {
        return Err(ScatterError::GrazingIncidence(cos_in.abs()));
    }
    let pn = p_in.dot(&nrm);
    let pt = *p_in - nrm * pn;
    let reflected = *p_in - nrm * (2.0 * pn);
    if branch == Branch::Reflection {
        return Ok(SnelOutcome::Reflected(reflected));
    }
    let k2 = (p_color * n_out).powi(2) - pt.norm_sq();
    if k2 < 0.0 {
        return Ok(SnelOutcome::TotalInternalReflection(reflected));
    }
    let root = n_out.signum() * k2.sqrt();
    Ok(SnelOutcome::Refracted(*p_in + nrm * (root - pn)))
}

/// `dq = [s2 <n, u2> - s1 <n, u1>] / |n x p1|^2 (n x p1)`.
pub fn transverse_shift(
    s1: f64,
    s2: f64,
    u1: &Real3,
    u2: &Real3,
    iface: &InterfaceSpec,
    p1: &Real3,
) -> Result<Real3, ScatterError> {
    let n = iface.normal;
    let np = n.cross(p1);
    let d2 = np.norm_sq();
    if d2.sqrt() <= 1e-12 * p1.norm() {
        return Err(ScatterError::NormalIncidenceDegenerate);
    }
    let (c1, c2) = (n.dot(u1), n.dot(u2));
    let sum = c1 + c2;
    // c2 - c1 through the tangential parts avoids cancellation near normal incidence
    let diff = if sum.abs() > 0.5 * (c1.abs() + c2.abs()) {
        (n.cross(u1).norm_sq() - n.cross(u2).norm_sq()) / sum
    } else {
        c2 - c1
    };
    let num = 0.5 * (s2 - s1) * sum + 0.5 * (s1 + s2) * diff;
    Ok(np * (num / d2))
}

type SpinFn = dyn Fn(f64, &Real3, &Real3, &SnelOutcome) -> f64 + Send + Sync;

/// Rule fixing the outgoing spin, which the conservation laws leave free.
#[derive(Clone, Default)]
pub enum SpinTransferModel {
    #[default]
    Conserving,
    /// `f(s1, u1, u2, outcome) -> s2`.
    Custom(Arc<SpinFn>),
}

impl fmt::Debug for SpinTransferModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpinTransferModel::Conserving => f.write_str("Conserving"),
            SpinTransferModel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SpinTransferModel {
    pub fn custom(f: impl Fn(f64, &Real3, &Real3, &SnelOutcome) -> f64 + Send + Sync + 'static) -> Self {
        SpinTransferModel::Custom(Arc::new(f))
    }

    pub fn apply(&self, s1: f64, u1: &Real3, u2: &Real3, out: &SnelOutcome) -> f64 {
        match self {
            SpinTransferModel::Conserving => s1,
            SpinTransferModel::Custom(f) => f(s1, u1, u2, out),
        }
    }
}

/// Result of [`scatter`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterReport {
    pub state_out: RayState,
    pub outcome: SnelOutcome,
    pub hit_point: Real3,
    pub spin_in: f64,
    pub spin_out: f64,
    pub shift: Real3,
    pub shift_over_lambdabar: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub n_in: f64,
    pub n_out: f64,
    /// Set when the outgoing polarization is not circular: the conservation
    /// laws fix its spin but not the orientation of its ellipse, which is
    /// carried over from the incoming state by convention.
    pub ellipse_orientation_underdetermined: bool,
}

fn angle_to_normal(n: &Real3, u: &Real3) -> f64 {
    n.cross(u).norm().atan2(n.dot(u).abs())
}

/// Transports `e1` to the plane orthogonal to `u2`: the component along
/// `n x u1` is kept and the in-plane axis is rotated with the direction; the
/// circular amplitudes are then rescaled to realize `s2`.
fn transport_polarization(n: &Real3, u1: &Real3, e1: &Complex3, u2: &Real3, s2_over_hbar: f64) -> Result<Complex3, ScatterError> {
    let c = n.cross(u1);
    let sig = if c.norm() > 1e-12 { c / c.norm() } else { u1.any_orthogonal() };
    let pi1 = sig.cross(u1);
    let pi2 = sig.cross(u2).normalized().unwrap_or(pi1);
    let a = e1.dot_real(&sig);
    let b = e1.dot_real(&pi1);
    let moved = sig.to_complex() * a + pi2.to_complex() * b;
    let frame = IsotropicFrame { z: Complex3::from_parts(pi2, sig) * std::f64::consts::FRAC_1_SQRT_2 };
    let psi = polarization_to_jones(&frame, &moved)?;
    let t = s2_over_hbar.clamp(-1.0, 1.0);
    let (mp, mm) = (((1.0 + t) / 2.0).sqrt(), ((1.0 - t) / 2.0).sqrt());
    let phase = |z: C64| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) };
    let pp = phase(psi.psi_plus) * mp;
    let pm = phase(psi.psi_minus) * mm;
    Ok(frame.z * pp + frame.z.conj() * pm)
}

/// Scatters a ray at the interface. The outgoing ray leaves from the hit
/// point displaced by the transverse shift, so that the angular momentum
/// about the normal is conserved for any spin model.
pub fn scatter(
    state_in: &RayState,
    iface: &InterfaceSpec,
    model: &SpinTransferModel,
    c: &Constants,
    branch: Branch,
) -> Result<ScatterReport, ScatterError> {
    check_state(&state_in.u, &state_in.e)?;
    iface.validate()?;
    let u1 = state_in.u;
    let cos1 = u1.dot(&iface.normal);
    if cos1.abs() < config::constraint_tol() {
        return Err(ScatterError::GrazingIncidence(cos1.abs()));
    }
    let t = (iface.point - state_in.x).dot(&iface.normal) / cos1;
    if t < -1e-12 * (1.0 + state_in.x.norm() + iface.point.norm()) {
        return Err(ScatterError::WrongSide(t));
    }
    let hit = state_in.x + u1 * t;
    let (nrm, n_in, n_out) = iface.oriented(&u1);
    let p1 = u1 * (c.p_color * n_in);
    let outcome = snel_descartes(&p1, iface, c.p_color, branch)?;
    let n_after = if outcome.is_transmitted() { n_out } else { n_in };
    let u2 = (outcome.p_out() * (1.0 / (c.p_color * n_after))).normalized().unwrap_or(u1);

    let s1 = spin_unchecked(&u1, &state_in.e, c.hbar);
    let s2 = model.apply(s1, &u1, &u2, &outcome);
    if !(s2.abs() <= c.hbar * (1.0 + 1e-12)) {
        return Err(ScatterError::SpinOutOfRange(s2));
    }
    let shift = match transverse_shift(s1, s2, &u1, &u2, iface, &p1) {
        Ok(d) => d,
        Err(ScatterError::NormalIncidenceDegenerate) => Real3::zero(),
        Err(e) => return Err(e),
    };
    let e2 = transport_polarization(&nrm, &u1, &state_in.e, &u2, s2 / c.hbar)?;
    let circular = (s2.abs() - c.hbar).abs() <= config::constraint_tol() * c.hbar;
    Ok(ScatterReport {
        state_out: RayState::new(hit + shift, u2, e2),
        outcome,
        hit_point: hit,
        spin_in: s1,
        spin_out: s2,
        shift_over_lambdabar: shift.norm() / c.lambdabar(),
        shift,
        theta1: angle_to_normal(&nrm, &u1),
        theta2: angle_to_normal(&nrm, &u2),
        n_in,
        n_out: n_after,
        ellipse_orientation_underdetermined: !circular,
    })
}

/// Residuals of the interface conservation laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `|<n, ell_2> - <n, ell_1>|`.
    pub angular: f64,
    /// `|n x p_2 - n x p_1|`.
    pub tangential: f64,
}

impl ConservationReport {
    pub fn passes(&self, tol_angular: f64, tol_tangential: f64) -> bool {
        self.angular <= tol_angular && self.tangential <= tol_tangential
    }
}

/// Compares the SE(2) momenta `L = <n, ell>` and `P = n x p` of an incoming
/// and an outgoing state, with positions measured from the interface point.
/// The outgoing medium is inferred from the side `out.u` points to.
pub fn conservation_check(input: &RayState, out: &RayState, iface: &InterfaceSpec, c: &Constants) -> ConservationReport {
    let n = iface.normal;
    let (_, n_in, n_out) = iface.oriented(&input.u);
    let transmitted = input.u.dot(&n).signum() == out.u.dot(&n).signum();
    let n_after = if transmitted { n_out } else { n_in };
    let mm = |s: &RayState, idx: f64| {
        let p = s.u * (c.p_color * idx);
        let spin = spin_unchecked(&s.u, &s.e, c.hbar);
        let ell = (s.x - iface.point).cross(&p) + s.u * spin;
        (n.dot(&ell), n.cross(&p))
    };
    let (l1, pp1) = mm(input, n_in);
    let (l2, pp2) = mm(out, n_after);
    ConservationReport { angular: (l2 - l1).abs(), tangential: (pp2 - pp1).norm() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frame_of_axes;
    use crate::polarization::{jones_to_polarization, spin, JonesVector};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn iface(n1: f64, n2: f64) -> InterfaceSpec {
        InterfaceSpec::new(Real3::basis(2), Real3::zero(), n1, n2).unwrap()
    }

    /// Incoming ray in the x-z plane at angle `theta` to +e3, circular.
    fn incoming(theta: f64, x: Real3, psi: JonesVector) -> RayState {
        let u = Real3::new(theta.sin(), 0.0, theta.cos());
        let f = IsotropicFrame::for_direction(&u);
        let (_, e) = jones_to_polarization(&f, &psi).unwrap();
        RayState::new(x, u, e)
    }

    fn right() -> JonesVector {
        JonesVector::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn momentum_map_examples() {
        let k = Constants::new(1.0, 2.0);
        let f = frame_of_axes(&Real3::basis(1), &Real3::basis(2)).unwrap();
        let s = RayState::new(Real3::zero(), Real3::basis(0), f.z);
        let m = momentum_map(&s, &k).unwrap();
        assert!((m.ell - Real3::basis(0)).max_abs() < 1e-15);
        assert_eq!(m.p_vec, Real3::basis(0) * 2.0);
        let s = RayState::new(Real3::basis(1), Real3::basis(0), Real3::basis(1).to_complex());
        let m = momentum_map(&s, &k).unwrap();
        // oracle: e2 x (p e1) = -p e3
        assert_eq!(m.ell, Real3::basis(2) * -2.0);
        assert!(momentum_map(&RayState { u: Real3::basis(1), ..s }, &k).is_err());
    }

    #[test]
    fn snel_examples() {
        let p = 1.0;
        let t1 = FRAC_PI_4;
        let p_in = Real3::new(t1.sin(), 0.0, t1.cos());
        let out = snel_descartes(&p_in, &iface(1.0, 1.5), p, Branch::Refraction).unwrap();
        let SnelOutcome::Refracted(p2) = out else { panic!("{out:?}") };
        let u2 = p2 / 1.5;
        let t2 = u2[0].atan2(u2[2]);
        // oracle: scalar Snel law
        let oracle = (t1.sin() / 1.5).asin();
        assert_abs_diff_eq!(oracle.to_degrees(), 28.1255, epsilon = 1e-4);
        assert_abs_diff_eq!(t2, oracle, epsilon = 1e-14);
        assert_eq!(p2[0], p_in[0]);

        let normal = snel_descartes(&Real3::basis(2), &iface(1.0, 1.5), p, Branch::Refraction).unwrap();
        assert_eq!(normal.p_out() / 1.5, Real3::basis(2));

        let t = 60f64.to_radians();
        let p_in = Real3::new(t.sin(), 0.0, t.cos()) * 1.5;
        let out = snel_descartes(&p_in, &iface(1.5, 1.0), p, Branch::Refraction).unwrap();
        let SnelOutcome::TotalInternalReflection(pr) = out else { panic!("{out:?}") };
        assert_abs_diff_eq!((pr - Real3::new(p_in[0], 0.0, -p_in[2])).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((1.0f64 / 1.5).asin().to_degrees(), 41.81, epsilon = 1e-2);

        let refl = snel_descartes(&Real3::new(t.sin(), 0.0, t.cos()), &iface(1.0, 1.5), p, Branch::Reflection).unwrap();
        assert!(matches!(refl, SnelOutcome::Reflected(_)));

        let graze = snel_descartes(&Real3::basis(0), &iface(1.0, 1.5), p, Branch::Refraction);
        assert!(matches!(graze, Err(ScatterError::GrazingIncidence(_))));
        let wrong = snel_descartes(&(Real3::basis(2) * 2.0), &iface(1.0, 1.5), p, Branch::Refraction);
        assert!(matches!(wrong, Err(ScatterError::ColorMismatch { .. })));
    }

    #[test]
    fn snel_from_medium_two() {
        // a ray travelling against the normal starts in medium 2
        let t = 0.3_f64;
        let p_in = Real3::new(t.sin(), 0.0, -t.cos()) * 1.5;
        let out = snel_descartes(&p_in, &iface(1.0, 1.5), 1.0, Branch::Refraction).unwrap();
        let p2 = out.p_out();
        assert!(out.is_transmitted());
        assert_abs_diff_eq!(p2.norm(), 1.0, epsilon = 1e-15);
        assert!(p2[2] < 0.0);
        assert_abs_diff_eq!(p2[0], p_in[0], epsilon = 1e-15);
    }

    #[test]
    fn negative_index_refraction() {
        let t = 0.4_f64;
        let p_in = Real3::new(t.sin(), 0.0, t.cos());
        let i = InterfaceSpec::with_signed_indices(Real3::basis(2), Real3::zero(), 1.0, -1.5).unwrap();
        assert!(InterfaceSpec::new(Real3::basis(2), Real3::zero(), 1.0, -1.5).is_err());
        let p2 = snel_descartes(&p_in, &i, 1.0, Branch::Refraction).unwrap().p_out();
        assert_abs_diff_eq!(p2.norm(), 1.5, epsilon = 1e-15);
        // momentum points back, the ray (u = p / (p n2)) still enters medium 2
        assert!(p2[2] < 0.0);
        assert!((p2 / -1.5)[2] > 0.0);
    }

    #[test]
    fn shift_examples() {
        let i = iface(1.0, 1.5);
        let t1 = FRAC_PI_4;
        let u1 = Real3::new(t1.sin(), 0.0, t1.cos());
        let p1 = u1;
        let u2 = snel_descartes(&p1, &i, 1.0, Branch::Refraction).unwrap().p_out() / 1.5;
        assert_eq!(transverse_shift(0.0, 0.0, &u1, &u2, &i, &p1).unwrap(), Real3::zero());
        assert!(matches!(
            transverse_shift(1.0, 1.0, &Real3::basis(2), &Real3::basis(2), &i, &Real3::basis(2)),
            Err(ScatterError::NormalIncidenceDegenerate)
        ));
        let d = transverse_shift(1.0, 1.0, &u1, &u2, &i, &p1).unwrap();
        // oracle: scalar evaluation with theta2 from Snel
        let t2 = (t1.sin() / 1.5).asin();
        let oracle = (t2.cos() - t1.cos()) / t1.sin();
        assert_abs_diff_eq!(oracle, 0.24722, epsilon = 1e-5);
        assert_abs_diff_eq!(d.norm(), oracle, epsilon = 1e-14);
        assert_abs_diff_eq!(d.dot(&p1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.dot(&i.normal), 0.0, epsilon = 1e-15);
        // flipping the reference normal leaves the shift unchanged
        let flipped = InterfaceSpec { normal: -i.normal, ..i };
        let d2 = transverse_shift(1.0, 1.0, &u1, &u2, &flipped, &p1).unwrap();
        assert_abs_diff_eq!((d - d2).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn scatter_normal_incidence() {
        let k = Constants::default();
        let s = incoming(0.0, Real3::new(0.3, -0.2, -1.0), right());
        let r = scatter(&s, &iface(1.0, 1.5), &SpinTransferModel::Conserving, &k, Branch::Refraction).unwrap();
        assert_eq!(r.shift, Real3::zero());
        assert_eq!(r.state_out.u, s.u);
        assert_eq!(r.state_out.x, Real3::new(0.3, -0.2, 0.0));
        assert_abs_diff_eq!(r.spin_out, r.spin_in, epsilon = 1e-15);
        assert!(!r.ellipse_orientation_underdetermined);
    }

    #[test]
    fn scatter_45_degrees() {
        let k = Constants::new(0.1, 1.0);
        let s = incoming(FRAC_PI_4, Real3::new(-1.0, 0.0, -1.0), right());
        let i = iface(1.0, 1.5);
        let r = scatter(&s, &i, &SpinTransferModel::Conserving, &k, Branch::Refraction).unwrap();
        let t2 = (FRAC_PI_4.sin() / 1.5).asin();
        let oracle = (t2.cos() - FRAC_PI_4.cos()) / FRAC_PI_4.sin();
        assert_abs_diff_eq!(r.shift_over_lambdabar, oracle, epsilon = 1e-12);
        let np = i.normal.cross(&s.u);
        assert_abs_diff_eq!(r.shift.normalized().unwrap().dot(&np.normalized().unwrap()), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.theta2, t2, epsilon = 1e-14);
        assert_abs_diff_eq!(spin(&r.state_out.u, &r.state_out.e, k.hbar).unwrap(), k.hbar, epsilon = 1e-14);
        let audit = conservation_check(&s, &r.state_out, &i, &k);
        assert!(audit.passes(1e-12, 1e-13), "{audit:?}");
    }

    #[test]
    fn scatter_rejects_bad_input() {
        let k = Constants::default();
        let s = incoming(0.3, Real3::new(0.0, 0.0, 1.0), right());
        assert!(matches!(
            scatter(&s, &iface(1.0, 1.5), &SpinTransferModel::Conserving, &k, Branch::Refraction),
            Err(ScatterError::WrongSide(_))
        ));
        let model = SpinTransferModel::custom(|_, _, _, _| 2.0);
        let s = incoming(0.3, Real3::new(0.0, 0.0, -1.0), right());
        assert!(matches!(
            scatter(&s, &iface(1.0, 1.5), &model, &k, Branch::Refraction),
            Err(ScatterError::SpinOutOfRange(_))
        ));
    }

    #[test]
    fn audit_detects_perturbations() {
        let k = Constants::default();
        let i = iface(1.0, 1.5);
        let s = incoming(0.6, Real3::new(-1.0, 0.5, -1.0), right());
        let r = scatter(&s, &i, &SpinTransferModel::Conserving, &k, Branch::Refraction).unwrap();
        let np = i.normal.cross(&(s.u * (k.p_color * i.n1)));
        let mut moved = r.state_out;
        moved.x += np * (0.1 / np.norm());
        let audit = conservation_check(&s, &moved, &i, &k);
        // oracle: linearity of the triple product
        assert_abs_diff_eq!(audit.angular, 0.1 * np.norm(), epsilon = 1e-12);
        let mut tilted = r.state_out;
        tilted.u = (tilted.u + Real3::basis(1) * 0.01).normalized().unwrap();
        assert!(conservation_check(&s, &tilted, &i, &k).tangential > 1e-3);
    }

    #[test]
    fn reflection_branch_conserves() {
        let k = Constants::new(0.5, 2.0);
        let i = InterfaceSpec::new(Real3::new(0.0, 0.6, 0.8), Real3::new(0.1, 0.2, 0.3), 1.3, 1.1).unwrap();
        let psi = JonesVector::normalized(C64::new(0.8, 0.1), C64::new(0.3, -0.4)).unwrap();
        let u = Real3::new(0.5, 0.1, 0.9).normalized().unwrap();
        let f = IsotropicFrame::for_direction(&u);
        let (_, e) = jones_to_polarization(&f, &psi).unwrap();
        let s = RayState::new(Real3::new(0.0, -1.0, -1.0), u, e);
        for branch in [Branch::Refraction, Branch::Reflection] {
            let r = scatter(&s, &i, &SpinTransferModel::Conserving, &k, branch).unwrap();
            assert!(conservation_check(&s, &r.state_out, &i, &k).passes(1e-12, 1e-13));
            assert!(r.ellipse_orientation_underdetermined);
            crate::polarization::check_state(&r.state_out.u, &r.state_out.e).unwrap();
        }
    }

    fn arb_case() -> impl Strategy<Value = (f64, f64, f64, f64, [f64; 4], f64)> {
        (
            0.0..(PI / 2.0 - 1e-3),
            0.0..std::f64::consts::TAU,
            0.5..3.0f64,
            0.5..3.0f64,
            proptest::array::uniform4(-1.0..1.0f64),
            -1.0..1.0f64,
        )
    }

    proptest! {
        #[test]
        fn scatter_invariants((t, ph, n1, n2, j, s2) in arb_case()) {
            let k = Constants::new(0.7, 1.3);
            let i = InterfaceSpec::new(Real3::basis(2), Real3::new(0.2, 0.1, 0.0), n1, n2).unwrap();
            let u = Real3::new(t.sin() * ph.cos(), t.sin() * ph.sin(), t.cos());
            let Ok(psi) = JonesVector::normalized(C64::new(j[0], j[1]), C64::new(j[2], j[3])) else { return Ok(()) };
            let (_, e) = jones_to_polarization(&IsotropicFrame::for_direction(&u), &psi).unwrap();
            let s = RayState::new(Real3::new(0.3, -0.4, -2.0), u, e);
            let target = s2 * k.hbar;
            for model in [SpinTransferModel::Conserving, SpinTransferModel::custom(move |_, _, _, _| target)] {
                let r = scatter(&s, &i, &model, &k, Branch::Refraction).unwrap();
                let p1 = s.u * (k.p_color * n1);
                let p2 = r.outcome.p_out();
                prop_assert!((i.normal.cross(&p1) - i.normal.cross(&p2)).norm() <= 1e-13 * p1.norm());
                let n_after = if r.outcome.is_transmitted() { n2 } else { n1 };
                prop_assert!((p2.norm() - k.p_color * n_after).abs() <= 1e-13 * p2.norm().max(1.0));
                prop_assert!(r.shift.dot(&p1).abs() <= 1e-12);
                prop_assert!(r.shift.dot(&i.normal).abs() <= 1e-12);
                let audit = conservation_check(&s, &r.state_out, &i, &k);
                if r.shift != Real3::zero() || (r.spin_out - r.spin_in).abs() < 1e-15 {
                    prop_assert!(audit.angular < 1e-12 * k.hbar.max(1.0), "{:?}", audit);
                }
                let out_spin = spin(&r.state_out.u, &r.state_out.e, k.hbar).unwrap();
                prop_assert!((out_spin - r.spin_out).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_vanishes_continuously(t in 1e-9..1e-3f64) {
            let i = iface(1.0, 1.5);
            let k = Constants::default();
            let a = scatter(&incoming(t, Real3::new(0.0, 0.0, -1.0), right()), &i, &SpinTransferModel::Conserving, &k, Branch::Refraction).unwrap();
            let b = scatter(&incoming(t * 0.5, Real3::new(0.0, 0.0, -1.0), right()), &i, &SpinTransferModel::Conserving, &k, Branch::Refraction).unwrap();
            prop_assert!(b.shift_over_lambdabar <= a.shift_over_lambdabar);
            prop_assert!(a.shift_over_lambdabar < 1e-3);
        }
    }
}
