//! Python bindings. Vectors cross the boundary as 3-tuples of floats or
//! complex numbers; structured results come back as dicts or JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spinoptics::scenario::{self, Scenario};
use spinoptics::{
    frame_of_axes, jones_to_polarization, Branch, Complex3, Constants, InterfaceSpec, JonesVector, RayState, Real3,
    SpinTransferModel, C64,
};

type V3 = (f64, f64, f64);
type Z3 = (C64, C64, C64);

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn r3(v: V3) -> Real3 {
    Real3([v.0, v.1, v.2])
}

fn v3(v: Real3) -> V3 {
    (v.0[0], v.0[1], v.0[2])
}

fn c3(z: Z3) -> Complex3 {
    Complex3([z.0, z.1, z.2])
}

fn z3(z: Complex3) -> Z3 {
    (z.0[0], z.0[1], z.0[2])
}

fn branch(name: &str) -> PyResult<Branch> {
    match name {
        "refraction" => Ok(Branch::Refraction),
        "reflection" => Ok(Branch::Reflection),
        other => Err(err(format!("unknown branch {other:?}, expected refraction or reflection"))),
    }
}

/// A point of the ray phase space: position, unit direction, polarization.
#[pyclass(name = "RayState", module = "pyspinoptics", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyRayState(RayState);

#[pymethods]
impl PyRayState {
    #[new]
    fn new(x: V3, u: V3, e: Z3) -> Self {
        PyRayState(RayState::new(r3(x), r3(u), c3(e)))
    }

    /// State with polarization built from Jones amplitudes in the frame
    /// spanned by the orthonormal axes `v, w` (direction `v x w`).
    #[staticmethod]
    fn from_jones(x: V3, v: V3, w: V3, psi_plus: C64, psi_minus: C64) -> PyResult<Self> {
        let f = frame_of_axes(&r3(v), &r3(w)).map_err(err)?;
        let psi = JonesVector::new(psi_plus, psi_minus).map_err(err)?;
        let (u, e) = jones_to_polarization(&f, &psi).map_err(err)?;
        Ok(PyRayState(RayState::new(r3(x), u, e)))
    }

    #[getter]
    fn x(&self) -> V3 {
        v3(self.0.x)
    }

    #[getter]
    fn u(&self) -> V3 {
        v3(self.0.u)
    }

    #[getter]
    fn e(&self) -> Z3 {
        z3(self.0.e)
    }

    #[pyo3(signature = (hbar = 1.0))]
    fn spin(&self, hbar: f64) -> PyResult<f64> {
        spinoptics::spin(&self.0.u, &self.0.e, hbar).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("RayState(x={:?}, u={:?})", self.x(), self.u())
    }
}

/// Planar interface between two homogeneous media.
#[pyclass(name = "Interface", module = "pyspinoptics", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInterface(InterfaceSpec);

#[pymethods]
impl PyInterface {
    #[new]
    #[pyo3(signature = (normal, n1, n2, point = (0.0, 0.0, 0.0)))]
    fn new(normal: V3, n1: f64, n2: f64, point: V3) -> PyResult<Self> {
        InterfaceSpec::new(r3(normal), r3(point), n1, n2).map(PyInterface).map_err(err)
    }

    #[getter]
    fn normal(&self) -> V3 {
        v3(self.0.normal)
    }

    #[getter]
    fn point(&self) -> V3 {
        v3(self.0.point)
    }

    #[getter]
    fn n1(&self) -> f64 {
        self.0.n1
    }

    #[getter]
    fn n2(&self) -> f64 {
        self.0.n2
    }
}

/// Result of integrating a scenario.
#[pyclass(name = "Trace", module = "pyspinoptics", frozen)]
struct PyTrace(scenario::TraceOutput);

#[pymethods]
impl PyTrace {
    fn __len__(&self) -> usize {
        self.0.trajectory.len()
    }

    #[getter]
    fn s(&self) -> Vec<f64> {
        self.0.trajectory.points.iter().map(|p| p.s).collect()
    }

    #[getter]
    fn positions(&self) -> Vec<V3> {
        self.0.trajectory.points.iter().map(|p| v3(p.state.x)).collect()
    }

    #[getter]
    fn directions(&self) -> Vec<V3> {
        self.0.trajectory.points.iter().map(|p| v3(p.state.u)).collect()
    }

    #[getter]
    fn states(&self) -> Vec<PyRayState> {
        self.0.trajectory.points.iter().map(|p| PyRayState(p.state)).collect()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.report.passed
    }

    /// Invariant report as JSON.
    fn report_json(&self) -> String {
        self.0.report.to_json()
    }

    fn csv(&self) -> String {
        String::from_utf8(self.0.csv()).expect("csv is utf-8")
    }
}

/// A validated scenario file.
#[pyclass(name = "Scenario", module = "pyspinoptics", frozen)]
struct PyScenario(Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        scenario::load_scenario(path).map(PyScenario).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        scenario::parse_scenario(text).map(PyScenario).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn trace(&self, py: Python<'_>) -> PyResult<PyTrace> {
        py.detach(|| scenario::run_trace(&self.0)).map(PyTrace).map_err(err)
    }

    /// Sweep of the interface over incidence angles in degrees; returns JSON.
    fn scatter_sweep(&self, py: Python<'_>, thetas_deg: Vec<f64>) -> PyResult<String> {
        py.detach(|| scenario::run_scatter_sweep(&self.0, &thetas_deg)).map(|s| s.to_json()).map_err(err)
    }

    /// Runs the invariant suite; returns `(passed, json)`.
    fn check(&self, py: Python<'_>) -> (bool, String) {
        let rep = py.detach(|| scenario::run_check(&self.0));
        (rep.passed(), rep.to_json())
    }
}

/// Spin `hbar Im <u, conj(e) x e>` of a polarized direction.
#[pyfunction]
#[pyo3(signature = (u, e, hbar = 1.0))]
fn spin(u: V3, e: Z3, hbar: f64) -> PyResult<f64> {
    spinoptics::spin(&r3(u), &c3(e), hbar).map_err(err)
}

/// Stokes components `(s1, s2, s3)` of a Jones vector.
#[pyfunction]
#[pyo3(signature = (psi_plus, psi_minus, hbar = 1.0))]
fn stokes(psi_plus: C64, psi_minus: C64, hbar: f64) -> PyResult<V3> {
    let psi = JonesVector::new(psi_plus, psi_minus).map_err(err)?;
    let s = spinoptics::stokes(&psi, hbar).map_err(err)?;
    Ok((s.s1, s.s2, s.s3))
}

/// Outgoing momentum and outcome name for an incident momentum.
#[pyfunction]
#[pyo3(signature = (p_in, interface, p_color = 1.0, branch = "refraction"))]
fn snel_descartes(p_in: V3, interface: &PyInterface, p_color: f64, branch: &str) -> PyResult<(String, V3)> {
    let out = spinoptics::snel_descartes(&r3(p_in), &interface.0, p_color, self::branch(branch)?).map_err(err)?;
    Ok((out.name().to_string(), v3(out.p_out())))
}

/// Spin-dependent transverse shift at the interface.
#[pyfunction]
fn transverse_shift(s1: f64, s2: f64, u1: V3, u2: V3, interface: &PyInterface, p1: V3) -> PyResult<V3> {
    spinoptics::transverse_shift(s1, s2, &r3(u1), &r3(u2), &interface.0, &r3(p1)).map(v3).map_err(err)
}

/// Scatters a ray at the interface with the spin-conserving model.
#[pyfunction]
#[pyo3(signature = (state, interface, hbar = 1.0, p_color = 1.0, branch = "refraction"))]
fn scatter<'py>(
    py: Python<'py>,
    state: &PyRayState,
    interface: &PyInterface,
    hbar: f64,
    p_color: f64,
    branch: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let c = Constants::new(hbar, p_color);
    let r = spinoptics::scatter(&state.0, &interface.0, &SpinTransferModel::Conserving, &c, self::branch(branch)?)
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("state_out", PyRayState(r.state_out))?;
    d.set_item("outcome", r.outcome.name())?;
    d.set_item("hit_point", v3(r.hit_point))?;
    d.set_item("spin_in", r.spin_in)?;
    d.set_item("spin_out", r.spin_out)?;
    d.set_item("shift", v3(r.shift))?;
    d.set_item("shift_over_lambdabar", r.shift_over_lambdabar)?;
    d.set_item("theta1", r.theta1)?;
    d.set_item("theta2", r.theta2)?;
    d.set_item("ellipse_orientation_underdetermined", r.ellipse_orientation_underdetermined)?;
    Ok(d)
}

/// Berry phase of circular polarization transported around a latitude
/// circle at colatitude `theta_deg`; returns `(phase, solid_angle)`.
#[pyfunction]
#[pyo3(signature = (theta_deg, samples = 10_000))]
fn latitude_holonomy(theta_deg: f64, samples: usize) -> PyResult<(f64, Option<f64>)> {
    let r = scenario::latitude_holonomy(theta_deg, samples).map_err(err)?;
    Ok((r.phase, r.solid_angle))
}

/// Geometric phase of a closed loop given in the CLI loop-file format.
#[pyfunction]
fn loop_holonomy(kind: &str, loop_json: &str) -> PyResult<f64> {
    let kind = match kind {
        "berry" => spinoptics::dynamics::HolonomyKind::Berry,
        "pancharatnam" => spinoptics::dynamics::HolonomyKind::Pancharatnam,
        other => return Err(err(format!("unknown loop kind {other:?}"))),
    };
    let lp = scenario::parse_loop(kind, loop_json).map_err(err)?;
    scenario::loop_holonomy(&lp).map(|r| r.phase).map_err(err)
}

#[pymodule]
fn pyspinoptics(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRayState>()?;
    m.add_class::<PyInterface>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(spin, m)?)?;
    m.add_function(wrap_pyfunction!(stokes, m)?)?;
    m.add_function(wrap_pyfunction!(snel_descartes, m)?)?;
    m.add_function(wrap_pyfunction!(transverse_shift, m)?)?;
    m.add_function(wrap_pyfunction!(scatter, m)?)?;
    m.add_function(wrap_pyfunction!(latitude_holonomy, m)?)?;
    m.add_function(wrap_pyfunction!(loop_holonomy, m)?)?;
    Ok(())
}
