//! Polarized ray tracing in inhomogeneous isotropic media.
//!
//! A ray is a point `(x, u, e)` of the constraint manifold of positions, unit
//! directions and unit transverse complex polarization vectors. Trajectories
//! are integral curves of the kernel of a presymplectic two-form; the
//! [`dynamics`] module evaluates that kernel for flat space, arbitrary
//! Riemannian metrics and Fermat media in the slow-gradient regime, and
//! integrates it. [`scattering`] handles sharp planar interfaces, including
//! the spin-dependent transverse shift.

pub mod config;
pub mod dynamics;
pub mod geometry;
pub mod metric;
pub mod polarization;
pub mod scattering;
pub mod scenario;

pub use config::Constants;
pub use dynamics::{
    connection_holonomy, foliation_vector_fermat, foliation_vector_flat, foliation_vector_general,
    integrate, oneform, twoform, DynamicsError, FoliationField, FoliationGauge, HolonomyLoop,
    RayState, Tangent, Trajectory,
};
pub use geometry::{complex_cross, direction_of_frame, frame_of_axes, Complex3, IsotropicFrame, Real3, C64};
pub use metric::{
    covariant_increment, fermat_metric, riemann_tensor, volume_form, Domain, FermatMedium, FermatMetric,
    GeneralMetric, IndexProfile, MetricError, MetricField, Riemann,
};
pub use polarization::{
    classify, helicity, jones_to_polarization, polarization_to_jones, projector, spin, stokes, Helicity,
    JonesVector, PolarizationClass, PolarizationError, PolarizationProjector, StokesVector,
};
pub use scattering::{
    conservation_check, momentum_map, scatter, snel_descartes, transverse_shift, Branch, InterfaceSpec,
    MomentumMapValue, ScatterError, ScatterReport, SnelOutcome, SpinTransferModel,
};
