//! Riemannian metrics on a coordinate box: evaluation, Christoffel symbols,
//! curvature and volume form, plus the conformally flat Fermat family
//! `g = n^2 delta` built from a refractive-index profile.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{det3, Complex3, Mat3, Real3, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point {x:?} lies outside the domain (required margin {margin:.3e})")]
    DomainExit { x: [f64; 3], margin: f64 },
    #[error("refractive index {n} is not positive at {x:?}")]
    NonPositiveIndex { x: [f64; 3], n: f64 },
    #[error("index gradient disagrees with finite differences at {x:?}: analytic {analytic:?}, numeric {numeric:?}")]
    InconsistentGradient { x: [f64; 3], analytic: [f64; 3], numeric: [f64; 3] },
    #[error("metric is not positive definite at {x:?}")]
    NotPositiveDefinite { x: [f64; 3] },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

/// Axis-aligned coordinate box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min: Real3,
    pub max: Real3,
}

impl Domain {
    pub fn new(min: Real3, max: Real3) -> Result<Self, MetricError> {
        let d = Domain { min, max };
        d.validate()?;
        Ok(d)
    }

    pub fn cube(half: f64) -> Self {
        Domain { min: Real3::new(-half, -half, -half), max: Real3::new(half, half, half) }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(MetricError::InvalidDomain("non-finite bounds".into()));
        }
        if (0..3).any(|i| self.min[i] >= self.max[i]) {
            return Err(MetricError::InvalidDomain(format!("empty box {:?}..{:?}", self.min.0, self.max.0)));
        }
        Ok(())
    }

    /// Longest edge.
    pub fn scale(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).fold(0.0, f64::max)
    }

    pub fn contains_with_margin(&self, x: &Real3, margin: f64) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] + margin && x[i] <= self.max[i] - margin)
    }

    pub fn check(&self, x: &Real3, margin: f64) -> Result<(), MetricError> {
        if self.contains_with_margin(x, margin) {
            Ok(())
        } else {
            Err(MetricError::DomainExit { x: x.0, margin })
        }
    }

    pub fn center(&self) -> Real3 {
        (self.min + self.max) * 0.5
    }
}

/// `Gamma^l_ij` stored as `c[l][i][j]`.
pub type Christoffel = [[[f64; 3]; 3]; 3];

/// Curvature tensor `R^l_{kij}` stored as `r[l][k][i][j]`, with
/// `(R(A,B)C)^l = R^l_{kij} C^k A^i B^j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Riemann(pub [[[[f64; 3]; 3]; 3]; 3]);

impl Riemann {
    pub fn zero() -> Self {
        Riemann([[[[0.0; 3]; 3]; 3]; 3])
    }

    /// `R(a, b) c`, complex-linear in every slot.
    pub fn apply(&self, a: &Complex3, b: &Complex3, c: &Complex3) -> Complex3 {
        let mut out = Complex3::zero();
        for l in 0..3 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let r = self.0[l][k][i][j];
                        if r != 0.0 {
                            acc += c[k] * a[i] * b[j] * r;
                        }
                    }
                }
            }
            out[l] = acc;
        }
        out
    }

    /// `R(a, b, c, d) = g(d, R(a, b) c)`.
    pub fn lowered(&self, g: &Mat3, a: &Complex3, b: &Complex3, c: &Complex3, d: &Complex3) -> C64 {
        g.cform(d, &self.apply(a, b, c))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().flatten().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A Riemannian metric on a coordinate box.
pub trait MetricField: Send + Sync {
    fn domain(&self) -> &Domain;

    /// `g_ij(x)`.
    fn metric(&self, x: &Real3) -> Result<Mat3, MetricError>;

    /// `Gamma^l_ij(x)`.
    fn christoffel(&self, x: &Real3) -> Result<Christoffel, MetricError>;

    /// Finite-difference step used for curvature.
    fn fd_step(&self) -> f64 {
        1e-4 * self.domain().scale()
    }

    /// Whether the metric is the Euclidean one everywhere.
    fn is_flat(&self) -> bool {
        false
    }

    fn volume_density(&self, x: &Real3) -> Result<f64, MetricError> {
        Ok(self.metric(x)?.det().sqrt())
    }
}

/// `Gamma^l_jk V^j W^k`.
pub fn contract_christoffel(c: &Christoffel, v: &Complex3, w: &Real3) -> Complex3 {
    let mut out = Complex3::zero();
    for l in 0..3 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..3 {
            for k in 0..3 {
                acc += v[j] * (c[l][j][k] * w[k]);
            }
        }
        out[l] = acc;
    }
    out
}

/// Real version of [`contract_christoffel`].
pub fn contract_christoffel_real(c: &Christoffel, v: &Real3, w: &Real3) -> Real3 {
    let mut out = Real3::zero();
    for l in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[l] += c[l][j][k] * v[j] * w[k];
            }
        }
    }
    out
}

/// Connection correction `Gamma^l_jk V^j dX^k` of the covariant differential.
pub fn covariant_increment(m: &dyn MetricField, x: &Real3, v: &Complex3, dx: &Real3) -> Result<Complex3, MetricError> {
    Ok(contract_christoffel(&m.christoffel(x)?, v, dx))
}

/// `sqrt(det g) det(a | b | c)`.
pub fn volume_form(
    m: &dyn MetricField,
    x: &Real3,
    a: &Real3,
    b: &Complex3,
    c: &Complex3,
) -> Result<C64, MetricError> {
    Ok(det3(&a.to_complex(), b, c) * m.volume_density(x)?)
}

/// Fourth-order central difference weights at offsets -2h, -h, +h, +2h.
const FD5: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];

/// Curvature from Christoffel symbols, with derivatives of `Gamma` by
/// fourth-order central differences. Requires a margin of `2 fd_step`.
pub fn riemann_tensor(m: &dyn MetricField, x: &Real3) -> Result<Riemann, MetricError> {
    let h = m.fd_step();
    m.domain().check(x, 2.0 * h)?;
    let g0 = m.christoffel(x)?;
    if m.is_flat() {
        return Ok(Riemann::zero());
    }
    // dg[i][l][j][k] = d_i Gamma^l_jk
    let mut dg = [[[[0.0; 3]; 3]; 3]; 3];
    for (i, dgi) in dg.iter_mut().enumerate() {
        for &(off, w) in FD5.iter() {
            let xs = *x + Real3::basis(i) * (off * h);
            let gs = m.christoffel(&xs)?;
            for l in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        dgi[l][j][k] += w * gs[l][j][k];
                    }
                }
            }
        }
        for row in dgi.iter_mut().flatten() {
            for v in row.iter_mut() {
                *v /= 12.0 * h;
            }
        }
    }
    let mut r = Riemann::zero();
    for l in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let mut v = dg[i][l][j][k] - dg[j][l][i][k];
                    for mm in 0..3 {
                        v += g0[l][i][mm] * g0[mm][j][k] - g0[l][j][mm] * g0[mm][i][k];
                    }
                    r.0[l][k][i][j] = v;
                    r.0[l][k][j][i] = -v;
                }
            }
        }
    }
    Ok(r)
}

type ScalarFn = Arc<dyn Fn(&Real3) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Real3) -> Real3 + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Real3) -> Mat3 + Send + Sync>;

/// Builtin refractive-index profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexProfile {
    Constant { n: f64 },
    /// `n0 + <k, x>`.
    Linear { n0: f64, k: Real3 },
    /// `n0 exp(<k, x>)`.
    Exponential { n0: f64, k: Real3 },
    /// Maxwell fish-eye `2 n0 / (1 + |x|^2 / a^2)`, a round sphere of
    /// curvature `1 / (n0 a)^2`.
    FishEye {
        #[serde(default = "one")]
        n0: f64,
        #[serde(default = "one")]
        a: f64,
    },
    /// Luneburg lens `sqrt(2 - |x|^2 / r^2)`.
    Luneburg {
        #[serde(default = "one")]
        radius: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl IndexProfile {
    pub fn n(&self, x: &Real3) -> f64 {
        match *self {
            IndexProfile::Constant { n } => n,
            IndexProfile::Linear { n0, k } => n0 + k.dot(x),
            IndexProfile::Exponential { n0, k } => n0 * k.dot(x).exp(),
            IndexProfile::FishEye { n0, a } => 2.0 * n0 / (1.0 + x.norm_sq() / (a * a)),
            IndexProfile::Luneburg { radius } => (2.0 - x.norm_sq() / (radius * radius)).sqrt(),
        }
    }

    pub fn grad_n(&self, x: &Real3) -> Real3 {
        match *self {
            IndexProfile::Constant { .. } => Real3::zero(),
            IndexProfile::Linear { k, .. } => k,
            IndexProfile::Exponential { n0, k } => k * (n0 * k.dot(x).exp()),
            IndexProfile::FishEye { n0, a } => {
                let d = 1.0 + x.norm_sq() / (a * a);
                *x * (-4.0 * n0 / (a * a * d * d))
            }
            IndexProfile::Luneburg { radius } => *x * (-1.0 / (radius * radius * self.n(x))),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, IndexProfile::Constant { .. })
    }
}

/// A refractive-index field on a box.
#[derive(Clone)]
pub struct FermatMedium {
    n: ScalarFn,
    grad_n: VectorFn,
    domain: Domain,
    profile: Option<IndexProfile>,
}

impl fmt::Debug for FermatMedium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FermatMedium")
            .field("domain", &self.domain)
            .field("profile", &self.profile)
            .finish_non_exhaustive()
    }
}

/// Sample points used by the construction-time checks: the box corners pulled
/// in by 10%, face centers and the center.
fn probe_points(d: &Domain) -> Vec<Real3> {
    let c = d.center();
    let half = (d.max - d.min) * 0.45;
    let mut pts = vec![c];
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                pts.push(c + Real3::new(sx * half[0], sy * half[1], sz * half[2]));
            }
        }
    }
    for i in 0..3 {
        for s in [-1.0, 1.0] {
            let mut p = c;
            p[i] += s * half[i];
            pts.push(p);
        }
    }
    pts
}

impl FermatMedium {
    /// Builds a medium from user closures, checking `n > 0` and the gradient
    /// against central differences at sample points.
    pub fn new(
        n: impl Fn(&Real3) -> f64 + Send + Sync + 'static,
        grad_n: impl Fn(&Real3) -> Real3 + Send + Sync + 'static,
        domain: Domain,
    ) -> Result<Self, MetricError> {
        let m = FermatMedium { n: Arc::new(n), grad_n: Arc::new(grad_n), domain, profile: None };
        m.validate()?;
        Ok(m)
    }

    pub fn from_profile(profile: IndexProfile, domain: Domain) -> Result<Self, MetricError> {
        let p1 = profile.clone();
        let p2 = profile.clone();
        let m = FermatMedium {
            n: Arc::new(move |x| p1.n(x)),
            grad_n: Arc::new(move |x| p2.grad_n(x)),
            domain,
            profile: Some(profile),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), MetricError> {
        self.domain.validate()?;
        let h = 1e-5 * self.domain.scale();
        for x in probe_points(&self.domain) {
            let n = (self.n)(&x);
            if !(n > 0.0 && n.is_finite()) {
                return Err(MetricError::NonPositiveIndex { x: x.0, n });
            }
            let g = (self.grad_n)(&x);
            let mut fd = Real3::zero();
            for i in 0..3 {
                let e = Real3::basis(i) * h;
                fd[i] = ((self.n)(&(x + e)) - (self.n)(&(x - e))) / (2.0 * h);
            }
            let tol = 1e-5 * (1.0 + g.norm() + n / self.domain.scale());
            if !((fd - g).norm() <= tol) {
                return Err(MetricError::InconsistentGradient { x: x.0, analytic: g.0, numeric: fd.0 });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn profile(&self) -> Option<&IndexProfile> {
        self.profile.as_ref()
    }

    pub fn is_constant(&self) -> bool {
        self.profile.as_ref().is_some_and(IndexProfile::is_constant)
    }

    /// Index and gradient at `x`, without the domain check.
    pub(crate) fn eval_unchecked(&self, x: &Real3) -> Result<(f64, Real3), MetricError> {
        let n = (self.n)(x);
        if !(n > 0.0 && n.is_finite()) {
            return Err(MetricError::NonPositiveIndex { x: x.0, n });
        }
        Ok((n, (self.grad_n)(x)))
    }

    pub fn n(&self, x: &Real3) -> Result<f64, MetricError> {
        self.domain.check(x, 0.0)?;
        Ok(self.eval_unchecked(x)?.0)
    }

    pub fn grad_n(&self, x: &Real3) -> Result<Real3, MetricError> {
        self.domain.check(x, 0.0)?;
        Ok(self.eval_unchecked(x)?.1)
    }

    /// `g = grad(1/n) = -grad(n) / n^2`.
    pub fn g_vec(&self, x: &Real3) -> Result<Real3, MetricError> {
        self.domain.check(x, 0.0)?;
        let (n, gn) = self.eval_unchecked(x)?;
        Ok(gn * (-1.0 / (n * n)))
    }
}

/// The Fermat metric `n^2 delta` with analytic Christoffel symbols.
#[derive(Clone, Debug)]
pub struct FermatMetric {
    medium: FermatMedium,
    fd_step: f64,
}

pub fn fermat_metric(medium: FermatMedium) -> FermatMetric {
    let fd_step = 1e-4 * medium.domain.scale();
    FermatMetric { medium, fd_step }
}

impl FermatMetric {
    pub fn medium(&self) -> &FermatMedium {
        &self.medium
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }
}

impl MetricField for FermatMetric {
    fn domain(&self) -> &Domain {
        &self.medium.domain
    }

    fn metric(&self, x: &Real3) -> Result<Mat3, MetricError> {
        let n = self.medium.n(x)?;
        Ok(Mat3::diagonal(n * n))
    }

    fn christoffel(&self, x: &Real3) -> Result<Christoffel, MetricError> {
        self.medium.domain.check(x, 0.0)?;
        let (n, dn) = self.medium.eval_unchecked(x)?;
        let mut c = [[[0.0; 3]; 3]; 3];
        for (k, ck) in c.iter_mut().enumerate() {
            for (i, row) in ck.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    if k == i {
                        s += dn[j];
                    }
                    if k == j {
                        s += dn[i];
                    }
                    if i == j {
                        s -= dn[k];
                    }
                    *v = s / n;
                }
            }
        }
        Ok(c)
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }

    fn is_flat(&self) -> bool {
        self.medium.profile.as_ref().is_some_and(|p| matches!(p, IndexProfile::Constant { n } if *n == 1.0))
    }

    fn volume_density(&self, x: &Real3) -> Result<f64, MetricError> {
        Ok(self.medium.n(x)?.powi(3))
    }
}

/// An arbitrary metric given by a closure; Christoffel symbols come from
/// fourth-order central differences of `g`.
#[derive(Clone)]
pub struct GeneralMetric {
    g: MatrixFn,
    domain: Domain,
    fd_step: f64,
    g_step: f64,
}

impl fmt::Debug for GeneralMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralMetric")
            .field("domain", &self.domain)
            .field("fd_step", &self.fd_step)
            .finish_non_exhaustive()
    }
}

fn is_positive_definite(m: &Mat3) -> bool {
    let a = &m.0;
    let sym = (0..3).all(|i| (0..3).all(|j| (a[i][j] - a[j][i]).abs() <= 1e-12 * (a[i][j].abs() + a[j][i].abs() + 1.0)));
    sym && a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0 && m.det() > 0.0
}

impl GeneralMetric {
    pub fn new(g: impl Fn(&Real3) -> Mat3 + Send + Sync + 'static, domain: Domain) -> Result<Self, MetricError> {
        domain.validate()?;
        let s = domain.scale();
        let m = GeneralMetric { g: Arc::new(g), domain, fd_step: 1e-4 * s, g_step: 1e-3 * s };
        for x in probe_points(&m.domain) {
            m.metric(&x)?;
        }
        Ok(m)
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }
}

impl MetricField for GeneralMetric {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn metric(&self, x: &Real3) -> Result<Mat3, MetricError> {
        self.domain.check(x, 0.0)?;
        let g = (self.g)(x);
        if !is_positive_definite(&g) {
            return Err(MetricError::NotPositiveDefinite { x: x.0 });
        }
        Ok(g)
    }

    fn christoffel(&self, x: &Real3) -> Result<Christoffel, MetricError> {
        let g = self.metric(x)?;
        let ginv = g.inverse().ok_or(MetricError::NotPositiveDefinite { x: x.0 })?;
        let h = self.g_step;
        // dg[k][i][j] = d_k g_ij
        let mut dg = [[[0.0; 3]; 3]; 3];
        for (k, dgk) in dg.iter_mut().enumerate() {
            for &(off, w) in FD5.iter() {
                let gs = (self.g)(&(*x + Real3::basis(k) * (off * h)));
                for i in 0..3 {
                    for j in 0..3 {
                        dgk[i][j] += w * gs.0[i][j] / (12.0 * h);
                    }
                }
            }
        }
        let mut c = [[[0.0; 3]; 3]; 3];
        for (l, cl) in c.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for mm in 0..3 {
                        s += ginv.0[l][mm] * (dg[i][mm][j] + dg[j][mm][i] - dg[mm][i][j]);
                    }
                    cl[i][j] = 0.5 * s;
                }
            }
        }
        Ok(c)
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }
}

/// The Euclidean metric on a box.
#[derive(Clone, Debug)]
pub struct FlatMetric {
    domain: Domain,
}

impl FlatMetric {
    pub fn new(domain: Domain) -> Self {
        FlatMetric { domain }
    }
}

impl MetricField for FlatMetric {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn metric(&self, x: &Real3) -> Result<Mat3, MetricError> {
        self.domain.check(x, 0.0)?;
        Ok(Mat3::identity())
    }

    fn christoffel(&self, x: &Real3) -> Result<Christoffel, MetricError> {
        self.domain.check(x, 0.0)?;
        Ok([[[0.0; 3]; 3]; 3])
    }

    fn is_flat(&self) -> bool {
        true
    }

    fn volume_density(&self, x: &Real3) -> Result<f64, MetricError> {
        self.domain.check(x, 0.0)?;
        Ok(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fish_eye() -> FermatMetric {
        fermat_metric(FermatMedium::from_profile(IndexProfile::FishEye { n0: 1.0, a: 1.0 }, Domain::cube(2.0)).unwrap())
    }

    fn exp_metric(k: Real3) -> FermatMetric {
        fermat_metric(FermatMedium::from_profile(IndexProfile::Exponential { n0: 1.0, k }, Domain::cube(2.0)).unwrap())
    }

    fn rand_point(rng: &mut ChaCha8Rng, r: f64) -> Real3 {
        Real3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
    }

    fn rand_c3(rng: &mut ChaCha8Rng) -> Complex3 {
        let mut v = Complex3::zero();
        for i in 0..3 {
            v[i] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        v
    }

    #[test]
    fn constant_index_is_flat() {
        let m = fermat_metric(FermatMedium::from_profile(IndexProfile::Constant { n: 1.0 }, Domain::cube(1.0)).unwrap());
        let x = Real3::new(0.1, 0.2, -0.3);
        let c = m.christoffel(&x).unwrap();
        assert!(c.iter().flatten().flatten().all(|v| *v == 0.0));
        assert_eq!(riemann_tensor(&m, &x).unwrap().max_abs(), 0.0);

        // a constant index other than 1 is still flat, through the generic path
        let m = fermat_metric(FermatMedium::from_profile(IndexProfile::Constant { n: 1.7 }, Domain::cube(1.0)).unwrap());
        assert!(riemann_tensor(&m, &x).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn exponential_christoffels() {
        let k = Real3::new(0.3, -0.2, 0.5);
        let m = exp_metric(k);
        let c = m.christoffel(&Real3::new(0.4, 0.1, -0.7)).unwrap();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let expect = d(l, i) * k[j] + d(l, j) * k[i] - d(i, j) * k[l];
                    assert_abs_diff_eq!(c[l][i][j], expect, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn covariant_increment_examples() {
        let kappa = 0.7;
        let m = exp_metric(Real3::new(kappa, 0.0, 0.0));
        let x = Real3::new(0.2, 0.3, 0.1);
        let v = Real3::basis(1).to_complex();
        let out = covariant_increment(&m, &x, &v, &Real3::basis(0)).unwrap();
        assert_abs_diff_eq!((out - v * kappa).norm(), 0.0, epsilon = 1e-14);
        let twice = covariant_increment(&m, &x, &v, &(Real3::basis(0) * 2.0)).unwrap();
        assert_abs_diff_eq!((twice - out * 2.0).norm(), 0.0, epsilon = 1e-14);
        let flat = FlatMetric::new(Domain::cube(1.0));
        assert_eq!(covariant_increment(&flat, &x, &v, &Real3::basis(0)).unwrap(), Complex3::zero());
    }

    #[test]
    fn volume_form_examples() {
        let e = |i| Real3::basis(i).to_complex();
        let flat = FlatMetric::new(Domain::cube(1.0));
        let x = Real3::new(0.1, 0.0, 0.2);
        assert_abs_diff_eq!((volume_form(&flat, &x, &Real3::basis(0), &e(1), &e(2)).unwrap() - 1.0).norm(), 0.0);
        let m = fish_eye();
        let n = m.medium().n(&x).unwrap();
        let v = volume_form(&m, &x, &Real3::basis(0), &e(1), &e(2)).unwrap();
        assert_abs_diff_eq!((v - n.powi(3)).norm(), 0.0, epsilon = 1e-14);
        // sqrt(det(n^2 delta)) through the generic path
        assert_abs_diff_eq!(m.metric(&x).unwrap().det().sqrt(), n.powi(3), epsilon = 1e-14);
        let z = Complex3::new(C64::new(0.0, 1.0), C64::new(0.3, 0.0), C64::new(0.0, 0.0));
        assert_eq!(volume_form(&m, &x, &Real3::basis(2), &z, &z).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn domain_exit() {
        let m = fish_eye();
        let outside = Real3::new(2.5, 0.0, 0.0);
        assert!(matches!(m.metric(&outside), Err(MetricError::DomainExit { .. })));
        assert!(matches!(m.christoffel(&outside), Err(MetricError::DomainExit { .. })));
        let edge = Real3::new(2.0 - m.fd_step(), 0.0, 0.0);
        assert!(matches!(riemann_tensor(&m, &edge), Err(MetricError::DomainExit { .. })));
    }

    #[test]
    fn medium_validation() {
        let d = Domain::cube(1.0);
        assert!(matches!(
            FermatMedium::new(|x: &Real3| 1.0 + x[0], |_| Real3::zero(), d),
            Err(MetricError::InconsistentGradient { .. })
        ));
        assert!(matches!(
            FermatMedium::new(|x: &Real3| x[0], |_| Real3::basis(0), d),
            Err(MetricError::NonPositiveIndex { .. })
        ));
        assert!(FermatMedium::new(|x: &Real3| 1.0 + 0.1 * x[0], |_| Real3::basis(0) * 0.1, d).is_ok());
        assert!(Domain::new(Real3::new(0.0, 0.0, 0.0), Real3::new(1.0, 0.0, 1.0)).is_err());
    }

    /// `g(d, R(a,b)c) = K (g(b,c) g(a,d) - g(a,c) g(b,d))` for constant curvature K.
    fn constant_curvature(g: &Mat3, k: f64, a: &Complex3, b: &Complex3, c: &Complex3, d: &Complex3) -> C64 {
        (g.cform(b, c) * g.cform(a, d) - g.cform(a, c) * g.cform(b, d)) * k
    }

    #[test]
    fn fish_eye_has_unit_curvature() {
        let m = fish_eye();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = rand_point(&mut rng, 1.5);
            let g = m.metric(&x).unwrap();
            let r = riemann_tensor(&m, &x).unwrap();
            let (a, b, c, d) = (rand_c3(&mut rng), rand_c3(&mut rng), rand_c3(&mut rng), rand_c3(&mut rng));
            let got = r.lowered(&g, &a, &b, &c, &d);
            let want = constant_curvature(&g, 1.0, &a, &b, &c, &d);
            let scale = g.0[0][0] * g.0[0][0];
            assert!((got - want).norm() < 1e-6 * scale, "{got} vs {want}");

            // R(E, conj E, E, conj E) for a g-unit circular E equals K
            let n = g.0[0][0].sqrt();
            let e = Complex3::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0)) * (std::f64::consts::FRAC_1_SQRT_2 / n);
            let b = r.lowered(&g, &e, &e.conj(), &e, &e.conj());
            assert!((b - 1.0).norm() < 1e-5);
        }
    }

    #[test]
    fn scaled_fish_eye_curvature() {
        let (n0, a) = (1.5, 0.8);
        let m = fermat_metric(FermatMedium::from_profile(IndexProfile::FishEye { n0, a }, Domain::cube(1.0)).unwrap());
        let x = Real3::new(0.2, -0.1, 0.3);
        let g = m.metric(&x).unwrap();
        let r = riemann_tensor(&m, &x).unwrap();
        let e = |i| Real3::basis(i).to_complex();
        let got = r.lowered(&g, &e(0), &e(1), &e(1), &e(0));
        let want = constant_curvature(&g, 1.0 / (n0 * a).powi(2), &e(0), &e(1), &e(1), &e(0));
        assert!((got - want).norm() < 1e-6 * g.0[0][0].powi(2));
    }

    #[test]
    fn pair_symmetry_and_antisymmetry() {
        let m = fermat_metric(
            FermatMedium::from_profile(IndexProfile::Linear { n0: 1.5, k: Real3::new(0.1, -0.2, 0.3) }, Domain::cube(1.0)).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = rand_point(&mut rng, 0.8);
            let g = m.metric(&x).unwrap();
            let r = riemann_tensor(&m, &x).unwrap();
            let (a, b, c, d) = (rand_c3(&mut rng), rand_c3(&mut rng), rand_c3(&mut rng), rand_c3(&mut rng));
            let swapped = r.lowered(&g, &b, &a, &c, &d);
            assert!((r.lowered(&g, &a, &b, &c, &d) + swapped).norm() < 1e-14);
            let lhs = r.lowered(&g, &a, &b, &c, &d);
            let rhs = r.lowered(&g, &c, &d, &a, &b);
            assert!((lhs - rhs).norm() < 1e-8, "{lhs} {rhs}");
        }
    }

    #[test]
    fn general_metric_matches_fermat() {
        let fe = fish_eye();
        let p = IndexProfile::FishEye { n0: 1.0, a: 1.0 };
        let gm = GeneralMetric::new(move |x| Mat3::diagonal(p.n(x).powi(2)), Domain::cube(2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = rand_point(&mut rng, 1.5);
            let a = fe.christoffel(&x).unwrap();
            let b = gm.christoffel(&x).unwrap();
            for l in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((a[l][i][j] - b[l][i][j]).abs() < 1e-6);
                    }
                }
            }
        }
        let x = Real3::new(0.3, 0.2, -0.4);
        let g = gm.metric(&x).unwrap();
        let r = riemann_tensor(&gm, &x).unwrap();
        let e = |i| Real3::basis(i).to_complex();
        let got = r.lowered(&g, &e(0), &e(2), &e(2), &e(0));
        let want = constant_curvature(&g, 1.0, &e(0), &e(2), &e(2), &e(0));
        assert!((got - want).norm() < 1e-5, "{got} {want}");
    }

    #[test]
    fn general_metric_rejects_indefinite() {
        let r = GeneralMetric::new(|_| Mat3([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]), Domain::cube(1.0));
        assert!(matches!(r, Err(MetricError::NotPositiveDefinite { .. })));
    }

    fn metric_derivative(m: &dyn MetricField, x: &Real3, dx: &Real3) -> Mat3 {
        let h = 1e-5;
        let gp = m.metric(&(*x + *dx * h)).unwrap();
        let gm = m.metric(&(*x - *dx * h)).unwrap();
        gp.add(&gm.scaled(-1.0)).scaled(0.5 / h)
    }

    proptest! {
        #[test]
        fn metric_compatibility(
            x in proptest::array::uniform3(-1.2..1.2f64),
            dx in proptest::array::uniform3(-1.0..1.0f64),
            which in 0usize..3,
        ) {
            let m: Box<dyn MetricField> = match which {
                0 => Box::new(fish_eye()),
                1 => Box::new(exp_metric(Real3::new(0.2, 0.5, -0.3))),
                _ => {
                    let p = IndexProfile::Luneburg { radius: 1.0 };
                    Box::new(fermat_metric(FermatMedium::from_profile(p, Domain::cube(0.9)).unwrap()))
                }
            };
            let x = Real3(x) * (m.domain().scale() / 2.4 * 0.9);
            let dx = Real3(dx);
            let g = m.metric(&x).unwrap();
            let c = m.christoffel(&x).unwrap();
            let num = metric_derivative(m.as_ref(), &x, &dx);
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            s += (g.0[l][j] * c[l][i][k] + g.0[i][l] * c[l][j][k]) * dx[k];
                        }
                    }
                    prop_assert!((s - num.0[i][j]).abs() < 1e-6, "{} {}", s, num.0[i][j]);
                }
            }
        }

        #[test]
        fn analytic_christoffels_match_finite_differences(x in proptest::array::uniform3(-1.0..1.0f64)) {
            let k = Real3::new(0.4, -0.1, 0.25);
            let fm = exp_metric(k);
            let p = IndexProfile::Exponential { n0: 1.0, k };
            let gm = GeneralMetric::new(move |x| Mat3::diagonal(p.n(x).powi(2)), Domain::cube(2.0)).unwrap();
            let x = Real3(x);
            let a = fm.christoffel(&x).unwrap();
            let b = gm.christoffel(&x).unwrap();
            for l in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert!((a[l][i][j] - b[l][i][j]).abs() < 1e-6);
                        prop_assert_eq!(a[l][i][j], a[l][j][i]);
                    }
                }
            }
        }
    }
}
