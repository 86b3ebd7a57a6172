//! Fixed-step RK4 with projection back onto the constraints after each step.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::foliation::{fermat_unchecked, flat_unchecked, general_at};
use super::{intrinsic_spin_at, DynamicsError, FoliationGauge, LocalGeometry, RayState, Tangent};
use crate::config::{Constants, SLOW_GRADIENT_WARN};
use crate::geometry::{Mat3, C64};
use crate::metric::{Domain, FermatMedium, MetricField};
use crate::polarization::spin_unchecked;

/// Which kernel field to integrate.
#[derive(Clone, Copy)]
pub enum FoliationField<'a> {
    /// Free flow, optionally confined to a box.
    Flat { constants: Constants, domain: Option<Domain> },
    /// Full kernel on a Riemannian metric, in coordinate variables `(X, U, E)`.
    General { metric: &'a dyn MetricField, constants: Constants },
    /// Slow-gradient Fermat flow, in Euclidean variables `(x, u, e)`.
    Fermat { medium: &'a FermatMedium, constants: Constants },
}

impl FoliationField<'_> {
    fn constants(&self) -> &Constants {
        match self {
            FoliationField::Flat { constants, .. }
            | FoliationField::General { constants, .. }
            | FoliationField::Fermat { constants, .. } => constants,
        }
    }

    fn rate(&self, s: &RayState, gauge: &FoliationGauge) -> Result<Tangent, DynamicsError> {
        match *self {
            FoliationField::Flat { domain, .. } => {
                if let Some(d) = domain {
                    d.check(&s.x, 0.0)?;
                }
                Ok(flat_unchecked(s, gauge))
            }
            FoliationField::General { metric, constants } => {
                let geom = LocalGeometry::at(metric, &s.x)?;
                general_at(&geom, s, constants.lambdabar(), gauge)
            }
            FoliationField::Fermat { medium, constants } => fermat_unchecked(medium, s, constants.lambdabar(), gauge),
        }
    }

    fn metric_at(&self, s: &RayState) -> Result<Mat3, DynamicsError> {
        match self {
            FoliationField::General { metric, .. } => Ok(metric.metric(&s.x)?),
            FoliationField::Flat { domain: Some(d), .. } => {
                d.check(&s.x, 0.0)?;
                Ok(Mat3::identity())
            }
            FoliationField::Fermat { medium, .. } => {
                medium.n(&s.x)?;
                Ok(Mat3::identity())
            }
            FoliationField::Flat { domain: None, .. } => Ok(Mat3::identity()),
        }
    }

    fn project(&self, s: &RayState) -> Result<RayState, DynamicsError> {
        let g = self.metric_at(s)?;
        let u = s.u / g.form(&s.u, &s.u).sqrt();
        let uc = u.to_complex();
        let e = s.e - uc * g.cform(&uc, &s.e);
        let e = e * (1.0 / g.cform(&e.conj(), &e).re.sqrt());
        Ok(RayState { x: s.x, u, e })
    }

    fn diagnose(&self, s: &RayState) -> Result<Diagnostics, DynamicsError> {
        let c = self.constants();
        match *self {
            FoliationField::General { metric, .. } => {
                let geom = LocalGeometry {
                    g: metric.metric(&s.x)?,
                    gamma: [[[0.0; 3]; 3]; 3],
                    riemann: crate::metric::Riemann::zero(),
                    volume_density: metric.volume_density(&s.x)?,
                };
                let (ru, re, rue) = geom.residuals(s);
                Ok(Diagnostics {
                    spin: intrinsic_spin_at(&geom, s, c.hbar),
                    color: c.p_color,
                    residual_u: ru,
                    residual_e: re,
                    residual_ue: rue,
                    regime: 0.0,
                })
            }
            FoliationField::Flat { .. } | FoliationField::Fermat { .. } => {
                let (ru, re, rue) = LocalGeometry::flat().residuals(s);
                let mut d = Diagnostics {
                    spin: spin_unchecked(&s.u, &s.e, c.hbar),
                    color: c.p_color,
                    residual_u: ru,
                    residual_e: re,
                    residual_ue: rue,
                    regime: 0.0,
                };
                if let FoliationField::Fermat { medium, .. } = *self {
                    let (n, gn) = medium.eval_unchecked(&s.x)?;
                    let gv = gn * (-1.0 / (n * n));
                    let ls = c.lambdabar() * spin_unchecked(&s.u, &s.e, 1.0);
                    let ph = (s.u + gv.cross(&s.u) * ls) * n;
                    d.color = c.p_color * ph.norm() / n;
                    d.regime = c.lambdabar() * gv.norm();
                }
                Ok(d)
            }
        }
    }
}

/// Per-step invariant diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Spin in action units; intrinsic (volume-form) spin in curved mode.
    pub spin: f64,
    /// `|p| / n` in Fermat mode, the constant color otherwise.
    pub color: f64,
    pub residual_u: f64,
    pub residual_e: f64,
    pub residual_ue: f64,
    /// `lambdabar |grad(1/n)|` in Fermat mode, 0 otherwise.
    pub regime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub s: f64,
    pub state: RayState,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub warnings: Vec<String>,
}

pub const TRAJECTORY_HEADER: &str =
    "s,x1,x2,x3,u1,u2,u3,re_e1,re_e2,re_e3,im_e1,im_e2,im_e3,spin,residual_u,residual_e,residual_ue";

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&TrajectoryPoint> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    pub fn max_spin_drift(&self) -> f64 {
        let Some(s0) = self.first().map(|p| p.diagnostics.spin) else { return 0.0 };
        self.points.iter().map(|p| (p.diagnostics.spin - s0).abs()).fold(0.0, f64::max)
    }

    pub fn max_color_drift(&self) -> f64 {
        let Some(c0) = self.first().map(|p| p.diagnostics.color) else { return 0.0 };
        self.points.iter().map(|p| (p.diagnostics.color - c0).abs()).fold(0.0, f64::max)
    }

    /// Largest `(residual_u, residual_e, residual_ue)` over the trajectory.
    pub fn max_residuals(&self) -> (f64, f64, f64) {
        self.points.iter().fold((0.0_f64, 0.0_f64, 0.0_f64), |(a, b, c), p| {
            let d = &p.diagnostics;
            (a.max(d.residual_u), b.max(d.residual_e), c.max(d.residual_ue))
        })
    }

    pub fn max_regime(&self) -> f64 {
        self.points.iter().map(|p| p.diagnostics.regime).fold(0.0, f64::max)
    }

    pub fn path_length(&self) -> f64 {
        match (self.first(), self.last()) {
            (Some(a), Some(b)) => b.s - a.s,
            _ => 0.0,
        }
    }

    /// Writes the trajectory as CSV with the columns of [`TRAJECTORY_HEADER`].
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for p in &self.points {
            let (x, u, e, d) = (&p.state.x, &p.state.u, &p.state.e, &p.diagnostics);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.s, x[0], x[1], x[2], u[0], u[1], u[2], e[0].re, e[1].re, e[2].re, e[0].im, e[1].im, e[2].im,
                d.spin, d.residual_u, d.residual_e, d.residual_ue
            )?;
        }
        Ok(())
    }
}

/// Integrates `field` from `state0` for `n_steps` RK4 steps of size `ds`
/// (in the gauge's parametrization; arclength for `alpha = 1`). The
/// polarization phase rotation `i beta e` is integrated exactly. Errors carry
/// the index of the failing step.
pub fn integrate(
    field: &FoliationField<'_>,
    state0: &RayState,
    ds: f64,
    n_steps: usize,
    gauge: &FoliationGauge,
) -> Result<Trajectory, DynamicsError> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(DynamicsError::InvalidParameters(format!("step size {ds}")));
    }
    FoliationGauge::new(gauge.alpha, gauge.beta)?;
    let at = |step: usize| move |e: DynamicsError| DynamicsError::AtStep { step, source: Box::new(e) };

    // validate the initial state against the ambient metric
    let g0 = field.metric_at(state0).map_err(at(0))?;
    let geom0 = LocalGeometry { g: g0, ..LocalGeometry::flat() };
    geom0.check(state0).map_err(|e| at(0)(e.into()))?;

    let mut traj = Trajectory { points: Vec::with_capacity(n_steps + 1), warnings: Vec::new() };
    let mut s = *state0;
    let mut warned = false;
    let mut push = |traj: &mut Trajectory, k: usize, s: &RayState| -> Result<(), DynamicsError> {
        let d = field.diagnose(s).map_err(at(k))?;
        if d.regime > SLOW_GRADIENT_WARN && !warned {
            warned = true;
            traj.warnings.push(format!(
                "step {k}: lambdabar |grad(1/n)| = {:.3e} exceeds {SLOW_GRADIENT_WARN}; slow-gradient approximation is unreliable",
                d.regime
            ));
        }
        traj.points.push(TrajectoryPoint { s: k as f64 * ds, state: *s, diagnostics: d });
        Ok(())
    };
    push(&mut traj, 0, &s)?;
    // The phase flow of the gauge commutes with the rest of the field, so it
    // is split off and applied exactly after each RK4 step.
    let gauge0 = FoliationGauge { alpha: gauge.alpha, beta: 0.0 };
    let phase = C64::from_polar(1.0, gauge.beta * ds);
    for k in 1..=n_steps {
        let step = |s: &RayState| -> Result<RayState, DynamicsError> {
            let k1 = field.rate(s, &gauge0)?;
            let k2 = field.rate(&s.add_scaled(&k1, 0.5 * ds), &gauge0)?;
            let k3 = field.rate(&s.add_scaled(&k2, 0.5 * ds), &gauge0)?;
            let k4 = field.rate(&s.add_scaled(&k3, ds), &gauge0)?;
            let incr = k1.add(&k2.scaled(2.0)).add(&k3.scaled(2.0)).add(&k4);
            let mut next = s.add_scaled(&incr, ds / 6.0);
            next.e = next.e * phase;
            if !next.is_finite() {
                return Err(DynamicsError::InvalidParameters("non-finite state".into()));
            }
            field.project(&next)
        };
        s = step(&s).map_err(at(k))?;
        push(&mut traj, k, &s)?;
    }
    Ok(traj)
}
