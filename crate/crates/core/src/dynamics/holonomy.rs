//! Discrete U(1) holonomies of the Berry connection on frames and the
//! Pancharatnam connection on Jones vectors.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::config;
use crate::geometry::{Complex3, IsotropicFrame, Real3, C64};
use crate::polarization::JonesVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolonomyKind {
    Berry,
    Pancharatnam,
}

/// A closed loop of samples; the last sample must agree with the first up to
/// a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HolonomyLoop {
    Berry(Vec<IsotropicFrame>),
    Pancharatnam(Vec<JonesVector>),
}

impl HolonomyLoop {
    pub fn kind(&self) -> HolonomyKind {
        match self {
            HolonomyLoop::Berry(_) => HolonomyKind::Berry,
            HolonomyLoop::Pancharatnam(_) => HolonomyKind::Pancharatnam,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            HolonomyLoop::Berry(v) => v.len(),
            HolonomyLoop::Pancharatnam(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_phase(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn accumulate(overlaps: impl Iterator<Item = C64>, closing: C64) -> Result<f64, DynamicsError> {
    if (closing.norm() - 1.0).abs() > config::constraint_tol() {
        return Err(DynamicsError::LoopNotClosed { overlap: closing.norm() });
    }
    let total: f64 = overlaps.map(|c| c.arg()).sum::<f64>() + closing.arg();
    Ok(wrap_phase(total))
}

/// Sum of `arg <conj z_k, z_{k+1}>` around the loop, including the closing
/// step from the last sample back to the first, wrapped to `(-pi, pi]`.
/// Invariant under independent phase changes of the samples.
pub fn connection_holonomy(lp: &HolonomyLoop) -> Result<f64, DynamicsError> {
    if lp.len() < 2 {
        return Err(DynamicsError::EmptyLoop);
    }
    match lp {
        HolonomyLoop::Berry(f) => {
            let ov = |a: &Complex3, b: &Complex3| a.hdot(b);
            let closing = ov(&f[f.len() - 1].z, &f[0].z);
            accumulate(f.windows(2).map(|w| ov(&w[0].z, &w[1].z)), closing)
        }
        HolonomyLoop::Pancharatnam(p) => {
            let closing = p[p.len() - 1].overlap(&p[0]);
            accumulate(p.windows(2).map(|w| w[0].overlap(&w[1])), closing)
        }
    }
}

/// Frames `z = (e_theta + i e_phi)/sqrt2` carried once around the circle of
/// colatitude `theta` on the direction sphere; `n + 1` samples with the last
/// equal to the first.
pub fn latitude_loop(theta: f64, n: usize) -> Vec<IsotropicFrame> {
    let (st, ct) = theta.sin_cos();
    (0..=n)
        .map(|k| {
            let phi = TAU * (k % n.max(1)) as f64 / n.max(1) as f64;
            let (sp, cp) = phi.sin_cos();
            let v = Real3::new(ct * cp, ct * sp, -st);
            let w = Real3::new(-sp, cp, 0.0);
            IsotropicFrame { z: Complex3::from_parts(v, w) * std::f64::consts::FRAC_1_SQRT_2 }
        })
        .collect()
}

/// Samples the closed polygon of Poincare-sphere geodesics through
/// `vertices`, `per_edge` samples per edge, repeating the first vertex at the
/// end.
pub fn geodesic_polygon(vertices: &[JonesVector], per_edge: usize) -> Vec<JonesVector> {
    let per_edge = per_edge.max(1);
    let mut out = Vec::with_capacity(vertices.len() * per_edge + 1);
    for (i, a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        // align the phase of b with a so the chord stays horizontal
        let ov = a.overlap(&b);
        let b = if ov.norm() > 0.0 { b.with_phase(-ov.arg()) } else { b };
        for k in 0..per_edge {
            let t = k as f64 / per_edge as f64;
            let pp = a.psi_plus * (1.0 - t) + b.psi_plus * t;
            let pm = a.psi_minus * (1.0 - t) + b.psi_minus * t;
            if let Ok(j) = JonesVector::normalized(pp, pm) {
                out.push(j);
            }
        }
    }
    if let Some(first) = vertices.first() {
        out.push(*first);
    }
    out
}
