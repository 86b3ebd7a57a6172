//! JSON scenarios and the runs driven from them: trajectory traces, interface
//! sweeps, holonomy loops and the invariant check suite.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, Constants};
use crate::dynamics::{
    connection_holonomy, integrate, latitude_loop, twoform_at, DynamicsError, FoliationField, FoliationGauge,
    HolonomyKind, HolonomyLoop, LocalGeometry, RayState, Trajectory,
};
use crate::geometry::{direction_of_frame, frame_of_axes, Complex3, IsotropicFrame, Real3, C64};
use crate::metric::{fermat_metric, Domain, FermatMedium, IndexProfile};
use crate::polarization::{
    constraint_residuals, jones_to_polarization, polarization_to_jones, spin_unchecked, JonesVector,
};
use crate::scattering::{
    conservation_check, scatter, Branch, InterfaceSpec, ScatterError, SpinTransferModel,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Columns of the scatter sweep CSV.
pub const SWEEP_HEADER: &str = "theta1_deg,branch,theta2_deg,s1,s2,shift_over_lambdabar";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario ({invariant}): {detail}")]
    Validation { invariant: &'static str, detail: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

fn invalid(invariant: &'static str, detail: impl fmt::Display) -> ScenarioError {
    ScenarioError::Validation { invariant, detail: detail.to_string() }
}

fn default_ds() -> f64 {
    1e-2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flat,
    Fermat,
    Riemannian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub profile: IndexProfile,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationSpec {
    /// Circular amplitudes over the frame `(v + i w)/sqrt2`; without `axes` the
    /// frame is the standard one for `u0`.
    Jones {
        psi_plus: C64,
        psi_minus: C64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        axes: Option<[Real3; 2]>,
    },
    Explicit { e: Complex3 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub x0: Real3,
    pub u0: Real3,
    pub polarization: PolarizationSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_ds")]
    pub ds: f64,
    pub n_steps: usize,
    pub mode: Mode,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinModelSpec {
    #[default]
    Conserving,
    /// `s2 = -s1`.
    Reversed,
    /// Fixed outgoing spin in units of hbar.
    Fixed { spin: f64 },
}

impl SpinModelSpec {
    pub fn model(&self, hbar: f64) -> SpinTransferModel {
        match *self {
            SpinModelSpec::Conserving => SpinTransferModel::Conserving,
            SpinModelSpec::Reversed => SpinTransferModel::custom(|s, _, _, _| -s),
            SpinModelSpec::Fixed { spin } => SpinTransferModel::custom(move |_, _, _, _| spin * hbar),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceBlock {
    pub normal: Real3,
    pub point: Real3,
    pub n1: f64,
    pub n2: f64,
    #[serde(default)]
    pub spin_model: SpinModelSpec,
    #[serde(default)]
    pub branch: Branch,
    /// Admit negative indices (experimental).
    #[serde(default)]
    pub allow_negative_index: bool,
}

impl InterfaceBlock {
    pub fn spec(&self) -> Result<InterfaceSpec, ScatterError> {
        if self.allow_negative_index {
            InterfaceSpec::with_signed_indices(self.normal, self.point, self.n1, self.n2)
        } else {
            InterfaceSpec::new(self.normal, self.point, self.n1, self.n2)
        }
    }
}

fn th_spin() -> f64 {
    1e-8
}
fn th_residual() -> f64 {
    config::DEFAULT_CONSTRAINT_TOL
}
fn th_color() -> f64 {
    1e-6
}

/// Pass thresholds of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Maximal spin drift in units of hbar.
    #[serde(default = "th_spin")]
    pub spin_drift: f64,
    #[serde(default = "th_residual")]
    pub residual: f64,
    /// Maximal color drift relative to the color.
    #[serde(default = "th_color")]
    pub color_drift: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { spin_drift: th_spin(), residual: th_residual(), color_drift: th_color() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub constants: Constants,
    pub medium: MediumSpec,
    pub ray: RaySpec,
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceBlock>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Seed of the random probes of the check suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        let c = &self.constants;
        if !(c.hbar > 0.0 && c.hbar.is_finite() && c.p_color > 0.0 && c.p_color.is_finite()) {
            return Err(invalid("constants: hbar > 0 and p_color > 0", format!("{c:?}")));
        }
        let medium = self.medium()?;
        let tol = config::constraint_tol();
        let r = &self.ray;
        if !r.x0.is_finite() || !medium.domain().contains_with_margin(&r.x0, 0.0) {
            return Err(invalid("ray.x0 inside medium.domain", format!("{:?}", r.x0.0)));
        }
        if !((r.u0.norm() - 1.0).abs() <= tol) {
            return Err(invalid("unit direction |u0| = 1", format!("|u0| = {}", r.u0.norm())));
        }
        self.initial_euclidean()?;
        let it = &self.integrator;
        if !(it.ds > 0.0 && it.ds.is_finite()) || it.n_steps == 0 || !it.beta.is_finite() {
            return Err(invalid("integrator: ds > 0, n_steps > 0", format!("{it:?}")));
        }
        if it.mode == Mode::Flat && !medium.is_constant() {
            return Err(invalid("flat mode requires a constant index", format!("{:?}", self.medium.profile)));
        }
        if let Some(iface) = &self.interface {
            iface.spec().map_err(|e| invalid("interface", e))?;
            if let SpinModelSpec::Fixed { spin } = iface.spin_model {
                if !(spin.abs() <= 1.0) {
                    return Err(invalid("interface.spin_model: |spin| <= 1", spin));
                }
            }
        }
        let t = &self.thresholds;
        if !(t.spin_drift > 0.0 && t.residual > 0.0 && t.color_drift > 0.0) {
            return Err(invalid("thresholds > 0", format!("{t:?}")));
        }
        Ok(())
    }

    pub fn medium(&self) -> Result<FermatMedium, ScenarioError> {
        FermatMedium::from_profile(self.medium.profile.clone(), self.medium.domain).map_err(|e| invalid("medium", e))
    }

    /// Initial `(x, u, e)` with Euclidean normalization.
    pub fn initial_euclidean(&self) -> Result<RayState, ScenarioError> {
        let r = &self.ray;
        let e = match r.polarization {
            PolarizationSpec::Jones { psi_plus, psi_minus, axes } => {
                let psi = JonesVector::new(psi_plus, psi_minus).map_err(|e| invalid("jones |psi| = 1", e))?;
                let frame = match axes {
                    None => IsotropicFrame::for_direction(&r.u0),
                    Some([v, w]) => {
                        let f = frame_of_axes(&v, &w).map_err(|e| invalid("polarization axes orthonormal", e))?;
                        let d = direction_of_frame(&f).map_err(|e| invalid("polarization axes orthonormal", e))?;
                        if (d - r.u0).norm() > config::constraint_tol() {
                            return Err(invalid("polarization axes: v x w = u0", format!("{:?}", d.0)));
                        }
                        f
                    }
                };
                jones_to_polarization(&frame, &psi).map_err(|e| invalid("jones |psi| = 1", e))?.1
            }
            PolarizationSpec::Explicit { e } => e,
        };
        let (ru, re, rue) = constraint_residuals(&r.u0, &e);
        let tol = config::constraint_tol();
        if ru > tol || re > tol || rue > tol || !e.is_finite() {
            return Err(invalid(
                "|u| = 1, |e| = 1, <u, e> = 0",
                format!("residuals ({ru:.3e}, {re:.3e}, {rue:.3e})"),
            ));
        }
        Ok(RayState::new(r.x0, r.u0, e))
    }

    fn gauge(&self, beta: f64) -> Result<FoliationGauge, ScenarioError> {
        Ok(FoliationGauge::new(1.0, beta)?)
    }
}

/// Summary of a trace against the scenario thresholds. Lengths are given in
/// raw units and in units of the reduced wavelength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub mode: Mode,
    pub steps: usize,
    pub lambdabar: f64,
    pub max_spin_drift: f64,
    pub max_spin_drift_hbar: f64,
    pub max_residual_u: f64,
    pub max_residual_e: f64,
    pub max_residual_ue: f64,
    pub max_color_drift: f64,
    pub max_regime: f64,
    pub path_length: f64,
    pub path_length_over_lambdabar: f64,
    pub displacement: f64,
    pub displacement_over_lambdabar: f64,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
    pub violations: Vec<String>,
    pub passed: bool,
}

impl InvariantReport {
    fn build(s: &Scenario, traj: &Trajectory, wall: f64) -> Self {
        let c = &s.constants;
        let lb = c.lambdabar();
        let drift = traj.max_spin_drift();
        let (ru, re, rue) = traj.max_residuals();
        let color = traj.max_color_drift();
        let d = match (traj.first(), traj.last()) {
            (Some(a), Some(b)) => (b.state.x - a.state.x).norm(),
            _ => 0.0,
        };
        let t = &s.thresholds;
        let mut violations = Vec::new();
        if !(drift <= t.spin_drift * c.hbar) {
            violations.push(format!("spin drift {:.3e} hbar exceeds {:.1e}", drift / c.hbar, t.spin_drift));
        }
        for (name, v) in [("residual_u", ru), ("residual_e", re), ("residual_ue", rue)] {
            if !(v <= t.residual) {
                violations.push(format!("{name} {v:.3e} exceeds {:.1e}", t.residual));
            }
        }
        // the truncated color p |u + (s/p) g x u| itself varies by up to (lambdabar |g|)^2 / 2
        let regime = traj.max_regime();
        if !(color <= (t.color_drift + 0.5 * regime * regime) * c.p_color) {
            violations.push(format!("color drift {:.3e} exceeds {:.1e}", color / c.p_color, t.color_drift));
        }
        let path = traj.path_length();
        InvariantReport {
            mode: s.integrator.mode,
            steps: traj.len().saturating_sub(1),
            lambdabar: lb,
            max_spin_drift: drift,
            max_spin_drift_hbar: drift / c.hbar,
            max_residual_u: ru,
            max_residual_e: re,
            max_residual_ue: rue,
            max_color_drift: color,
            max_regime: traj.max_regime(),
            path_length: path,
            path_length_over_lambdabar: path / lb,
            displacement: d,
            displacement_over_lambdabar: d / lb,
            wall_clock_s: wall,
            warnings: traj.warnings.clone(),
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug)]
pub struct TraceOutput {
    pub trajectory: Trajectory,
    pub report: InvariantReport,
}

impl TraceOutput {
    pub fn csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.trajectory.write_csv(&mut buf).expect("writing to memory");
        buf
    }

    /// Writes `trajectory.csv` and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf), ScenarioError> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join("trajectory.csv");
        let json = dir.join("report.json");
        std::fs::write(&csv, self.csv())?;
        std::fs::write(&json, self.report.to_json())?;
        Ok((csv, json))
    }
}

fn trace_with(s: &Scenario, beta: f64, n_steps: usize) -> Result<TraceOutput, ScenarioError> {
    let start = Instant::now();
    let medium = s.medium()?;
    let c = s.constants;
    let state0 = s.initial_euclidean()?;
    let gauge = s.gauge(beta)?;
    let ds = s.integrator.ds;
    let trajectory = match s.integrator.mode {
        Mode::Flat => {
            let n = medium.n(&state0.x).map_err(DynamicsError::from)?;
            // a constant index only rescales the color
            let field = FoliationField::Flat {
                constants: Constants::new(c.hbar, c.p_color * n),
                domain: Some(*medium.domain()),
            };
            integrate(&field, &state0, ds, n_steps, &gauge)?
        }
        Mode::Fermat => integrate(&FoliationField::Fermat { medium: &medium, constants: c }, &state0, ds, n_steps, &gauge)?,
        Mode::Riemannian => {
            let n0 = medium.n(&state0.x).map_err(DynamicsError::from)?;
            let metric = fermat_metric(medium);
            let s0 = RayState::new(state0.x, state0.u / n0, state0.e * (1.0 / n0));
            integrate(&FoliationField::General { metric: &metric, constants: c }, &s0, ds, n_steps, &gauge)?
        }
    };
    let report = InvariantReport::build(s, &trajectory, start.elapsed().as_secs_f64());
    Ok(TraceOutput { trajectory, report })
}

/// Integrates the scenario ray. Errors carry the failing step index.
pub fn run_trace(s: &Scenario) -> Result<TraceOutput, ScenarioError> {
    if s.interface.is_some() {
        return Err(invalid("trace requires a scenario without an interface block", "use scatter"));
    }
    trace_with(s, s.integrator.beta, s.integrator.n_steps)
}

/// Incidence angles `theta_min..=theta_max` in degrees, `steps` points.
pub fn theta_grid(theta_min: f64, theta_max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![theta_min],
        _ => (0..steps).map(|k| theta_min + (theta_max - theta_min) * k as f64 / (steps - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta1_deg: f64,
    pub branch: Option<String>,
    pub theta2_deg: f64,
    pub s1: f64,
    pub s2: f64,
    pub shift: Real3,
    pub shift_norm: f64,
    pub shift_over_lambdabar: f64,
    pub residual_angular: f64,
    pub residual_tangential: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub lambdabar: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    pub fn errors(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn max_residuals(&self) -> (f64, f64) {
        self.rows
            .iter()
            .fold((0.0_f64, 0.0_f64), |(a, t), r| (a.max(r.residual_angular), t.max(r.residual_tangential)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &self.rows {
            match &r.branch {
                Some(b) => writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.theta1_deg, b, r.theta2_deg, r.s1, r.s2, r.shift_over_lambdabar
                )?,
                None => writeln!(w, "{},Error,,,,", r.theta1_deg)?,
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }
}

/// Incoming ray at `theta` from the normal, in the plane of the normal and a
/// fixed tangent, one unit before the interface point.
fn incidence_state(iface: &InterfaceSpec, psi: &JonesVector, theta: f64) -> Result<RayState, ScatterError> {
    let n = iface.normal;
    let t = n.any_orthogonal();
    let u = (t * theta.sin() + n * theta.cos()).normalized().unwrap_or(n);
    let (_, e) = jones_to_polarization(&IsotropicFrame::for_direction(&u), psi)?;
    Ok(RayState::new(iface.point - u, u, e))
}

fn sweep_row(s: &Scenario, iface: &InterfaceSpec, model: &SpinTransferModel, psi: &JonesVector, deg: f64) -> SweepRow {
    let c = &s.constants;
    let branch = s.interface.map(|i| i.branch).unwrap_or_default();
    let result = incidence_state(iface, psi, deg.to_radians())
        .and_then(|st| scatter(&st, iface, model, c, branch).map(|r| (st, r)));
    match result {
        Ok((st, r)) => {
            let audit = conservation_check(&st, &r.state_out, iface, c);
            SweepRow {
                theta1_deg: deg,
                branch: Some(r.outcome.name().to_string()),
                theta2_deg: r.theta2.to_degrees(),
                s1: r.spin_in,
                s2: r.spin_out,
                shift: r.shift,
                shift_norm: r.shift.norm(),
                shift_over_lambdabar: r.shift_over_lambdabar,
                residual_angular: audit.angular,
                residual_tangential: audit.tangential,
                error: None,
            }
        }
        Err(e) => SweepRow {
            theta1_deg: deg,
            branch: None,
            theta2_deg: f64::NAN,
            s1: f64::NAN,
            s2: f64::NAN,
            shift: Real3::zero(),
            shift_norm: f64::NAN,
            shift_over_lambdabar: f64::NAN,
            residual_angular: 0.0,
            residual_tangential: 0.0,
            error: Some(e.to_string()),
        },
    }
}

/// Scatters the scenario polarization at each incidence angle (degrees) in
/// parallel. Rows keep the order of `thetas`; failures are recorded per row.
pub fn run_scatter_sweep(s: &Scenario, thetas: &[f64]) -> Result<SweepOutput, ScenarioError> {
    let block = s.interface.ok_or_else(|| invalid("scatter requires an interface block", "missing"))?;
    let iface = block.spec()?;
    let model = block.spin_model.model(s.constants.hbar);
    let st = s.initial_euclidean()?;
    let psi = polarization_to_jones(&IsotropicFrame::for_direction(&st.u), &st.e).map_err(ScatterError::from)?;
    let rows = thetas.par_iter().map(|&d| sweep_row(s, &iface, &model, &psi, d)).collect();
    Ok(SweepOutput { lambdabar: s.constants.lambdabar(), rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyReport {
    pub kind: HolonomyKind,
    pub samples: usize,
    pub phase: f64,
    pub phase_over_2pi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solid_angle: Option<f64>,
}

/// Parses a loop file: a JSON array of frames `z` (`[[re, im]; 3]`) for
/// Berry loops, or of Jones vectors (`[[re, im]; 2]`) for Pancharatnam loops.
pub fn parse_loop(kind: HolonomyKind, text: &str) -> Result<HolonomyLoop, ScenarioError> {
    let perr = |e: serde_json::Error| ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() };
    match kind {
        HolonomyKind::Berry => {
            let zs: Vec<Complex3> = serde_json::from_str(text).map_err(perr)?;
            let frames = zs
                .into_iter()
                .enumerate()
                .map(|(i, z)| IsotropicFrame::new(z).map_err(|e| invalid("loop sample is an isotropic frame", format!("sample {i}: {e}"))))
                .collect::<Result<_, _>>()?;
            Ok(HolonomyLoop::Berry(frames))
        }
        HolonomyKind::Pancharatnam => {
            let ps: Vec<[C64; 2]> = serde_json::from_str(text).map_err(perr)?;
            let js = ps
                .into_iter()
                .enumerate()
                .map(|(i, [a, b])| JonesVector::new(a, b).map_err(|e| invalid("loop sample is a unit Jones vector", format!("sample {i}: {e}"))))
                .collect::<Result<_, _>>()?;
            Ok(HolonomyLoop::Pancharatnam(js))
        }
    }
}

impl HolonomyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("holonomy report serializes")
    }
}

pub fn loop_holonomy(lp: &HolonomyLoop) -> Result<HolonomyReport, ScenarioError> {
    let phase = connection_holonomy(lp)?;
    Ok(HolonomyReport {
        kind: lp.kind(),
        samples: lp.len(),
        phase,
        phase_over_2pi: phase / std::f64::consts::TAU,
        solid_angle: None,
    })
}

/// Berry phase around the circle of colatitude `theta_deg`.
pub fn latitude_holonomy(theta_deg: f64, samples: usize) -> Result<HolonomyReport, ScenarioError> {
    if samples < 2 || !theta_deg.is_finite() {
        return Err(invalid("latitude loop: samples >= 2", samples));
    }
    let theta = theta_deg.to_radians();
    let mut r = loop_holonomy(&HolonomyLoop::Berry(latitude_loop(theta, samples)))?;
    r.solid_angle = Some(std::f64::consts::TAU * (1.0 - theta.cos()));
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn measure(&mut self, name: &str, value: f64, threshold: f64, detail: impl Into<String>) {
        self.checks.push(CheckOutcome {
            name: name.into(),
            passed: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: detail.into(),
        });
    }

    fn flag(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckOutcome { name: name.into(), passed, value: None, threshold: None, detail: detail.into() });
    }

    fn failed(&mut self, name: &str, e: impl fmt::Display) {
        self.flag(name, false, e.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("check report serializes")
    }
}

const KERNEL_STATES: usize = 5;
const KERNEL_PROBES: usize = 20;
const GAUGE_STEPS: usize = 500;

fn rand_vec(rng: &mut ChaCha8Rng) -> Real3 {
    Real3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_cvec(rng: &mut ChaCha8Rng) -> Complex3 {
    Complex3::from_parts(rand_vec(rng), rand_vec(rng))
}

/// `max |sigma(V, d')| / |d'|` over random constraint tangents at states near
/// the scenario's initial state, in the Fermat metric of the medium.
fn kernel_residual(s: &Scenario, rng: &mut ChaCha8Rng) -> Result<f64, ScenarioError> {
    let medium = s.medium()?;
    let st = s.initial_euclidean()?;
    let metric = fermat_metric(medium.clone());
    let lb = s.constants.lambdabar();
    let mut worst = 0.0_f64;
    for k in 0..KERNEL_STATES {
        // the initial state, then random polarizations and nearby positions
        let (x, e) = if k == 0 {
            (st.x, st.e)
        } else {
            let dx = rand_vec(rng) * (0.01 * medium.domain().scale());
            let x = if medium.domain().contains_with_margin(&(st.x + dx), 0.0) { st.x + dx } else { st.x };
            let raw = rand_cvec(rng);
            let e = raw - st.u.to_complex() * raw.dot_real(&st.u);
            (x, e.normalized().unwrap_or(st.e))
        };
        let n = medium.n(&x).map_err(DynamicsError::from)?;
        let state = RayState::new(x, st.u / n, e * (1.0 / n));
        let geom = LocalGeometry::at(&metric, &x).map_err(DynamicsError::from)?;
        let v = crate::dynamics::foliation_vector_general(&metric, &state, lb, &FoliationGauge::default())?;
        for _ in 0..KERNEL_PROBES {
            let t = geom.tangent_from_covariant(&state, rand_vec(rng), rand_vec(rng), rand_cvec(rng));
            let val = twoform_at(&geom, &s.constants, &state, &v, &t).re;
            worst = worst.max(val.abs() / t.norm());
        }
    }
    Ok(worst)
}

fn observables(t: &Trajectory) -> Vec<(Real3, Real3, f64)> {
    t.points.iter().map(|p| (p.state.x, p.state.u, p.diagnostics.spin)).collect()
}

/// Runs the invariant suite on a scenario: schema round trip, constraint and
/// spin-range checks at the initial state, kernel membership, and either the
/// trace invariants (with determinism and gauge independence) or, for
/// scenarios with an interface, the scattering conservation laws.
pub fn run_check(s: &Scenario) -> CheckReport {
    let mut rep = CheckReport::default();
    let tol = config::constraint_tol();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.unwrap_or(0));

    match parse_scenario(&s.to_json()) {
        Ok(back) => rep.flag("schema_round_trip", back == *s, "load -> serialize -> load"),
        Err(e) => rep.failed("schema_round_trip", e),
    }
    let st = match s.initial_euclidean() {
        Ok(st) => st,
        Err(e) => {
            rep.failed("initial_constraints", e);
            return rep;
        }
    };
    let (ru, re, rue) = constraint_residuals(&st.u, &st.e);
    rep.measure("initial_constraints", ru.max(re).max(rue), tol, "max(|u|-1, |e|-1, |<u,e>|)");
    let spin = spin_unchecked(&st.u, &st.e, s.constants.hbar);
    rep.measure("spin_range", spin.abs() - s.constants.hbar, 1e-12 * s.constants.hbar, format!("spin = {spin}"));

    match kernel_residual(s, &mut rng) {
        Ok(v) => rep.measure("kernel_membership", v, 1e-6, "max |sigma(V, d')| / |d'|"),
        Err(e) => rep.failed("kernel_membership", e),
    }

    if s.interface.is_some() {
        check_interface(s, &mut rep);
        return rep;
    }

    let out = match run_trace(s) {
        Ok(o) => o,
        Err(e) => {
            rep.failed("trace", e);
            return rep;
        }
    };
    let r = &out.report;
    rep.measure("spin_drift", r.max_spin_drift_hbar, s.thresholds.spin_drift, "units of hbar");
    rep.measure(
        "constraint_residuals",
        r.max_residual_u.max(r.max_residual_e).max(r.max_residual_ue),
        s.thresholds.residual,
        "max over the trajectory",
    );
    rep.measure(
        "color_drift",
        r.max_color_drift / s.constants.p_color,
        s.thresholds.color_drift + 0.5 * r.max_regime * r.max_regime,
        "relative, allowing (lambdabar |g|)^2 / 2",
    );
    match run_trace(s) {
        Ok(again) => rep.flag("determinism", again.csv() == out.csv(), "two runs give byte-identical CSV"),
        Err(e) => rep.failed("determinism", e),
    }
    let n = s.integrator.n_steps.min(GAUGE_STEPS);
    let beta = s.integrator.beta;
    match (trace_with(s, beta, n), trace_with(s, beta + 1.0, n)) {
        (Ok(a), Ok(b)) => {
            let diff = observables(&a.trajectory)
                .iter()
                .zip(observables(&b.trajectory))
                .map(|(p, q)| (p.0 - q.0).max_abs().max((p.1 - q.1).max_abs()).max((p.2 - q.2).abs() / s.constants.hbar))
                .fold(0.0, f64::max);
            rep.measure("gauge_independence", diff, 1e-9, format!("beta and beta + 1 over {n} steps"));
        }
        (Err(e), _) | (_, Err(e)) => rep.failed("gauge_independence", e),
    }
    rep
}

fn check_interface(s: &Scenario, rep: &mut CheckReport) {
    let Some(block) = s.interface else { return };
    let grid = theta_grid(0.0, 89.0, 1000);
    let sweep = match run_scatter_sweep(s, &grid) {
        Ok(sw) => sw,
        Err(e) => {
            rep.failed("scatter_sweep", e);
            return;
        }
    };
    let errors = sweep.errors();
    rep.flag("scatter_sweep", errors == 0, format!("{} rows, {errors} errors", sweep.rows.len()));
    let (ang, tan) = sweep.max_residuals();
    rep.measure("angular_momentum_conservation", ang, 1e-12, "max |L2 - L1|");
    let p1 = s.constants.p_color * block.n1.abs().max(block.n2.abs());
    rep.measure("tangential_momentum_conservation", tan, 1e-13 * p1, "max |n x p2 - n x p1|");
    let normal = sweep.rows.first().map(|r| r.shift_norm).unwrap_or(f64::NAN);
    rep.measure("normal_incidence_shift", normal, 0.0, "shift at theta = 0");
    if block.n1.abs() > block.n2.abs() && block.branch == Branch::Refraction {
        let crit = (block.n2 / block.n1).abs().asin().to_degrees();
        let onset = sweep
            .rows
            .iter()
            .find(|r| r.branch.as_deref() == Some("TotalInternalReflection"))
            .map(|r| r.theta1_deg)
            .unwrap_or(f64::INFINITY);
        let step = grid[1] - grid[0];
        rep.measure("tir_onset", (onset - crit).abs(), step, format!("critical angle {crit:.6} deg"));
    }
}
