//! Python bindings. Matrices cross the boundary as nested lists of floats.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sivo_core::infotheory::{DiscreteDistribution, GaussianBelief};
use sivo_core::io_eval::{self, TrajectoryRecord};
use sivo_core::selection::{self, CandidateFeature, Strategy};
use sivo_core::semantics::{aggregate_mc, SemanticBelief, Taxonomy};
use sivo_core::sim::SequenceResult;
use sivo_core::SivoError;

fn to_py(e: SivoError) -> PyErr {
    match e {
        SivoError::Io(_) => PyOSError::new_err(e.to_string()),
        SivoError::EstimatorDiverged { .. } | SivoError::DivergedUpdate { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dmatrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn fixed<const R: usize, const C: usize>(rows: &[Vec<f64>]) -> PyResult<SMatrix<f64, R, C>> {
    let d = dmatrix(rows)?;
    if d.shape() != (R, C) {
        return Err(PyValueError::new_err(format!("expected a {R}x{C} matrix, got {}x{}", d.nrows(), d.ncols())));
    }
    Ok(SMatrix::from_fn(|i, j| d[(i, j)]))
}

fn semantic_belief(samples: Vec<Vec<f64>>) -> PyResult<SemanticBelief> {
    let dists = samples
        .into_iter()
        .map(DiscreteDistribution::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    aggregate_mc(dists).map_err(to_py)
}

fn candidate(jacobian: &[Vec<f64>], noise: &[Vec<f64>], samples: Vec<Vec<f64>>) -> PyResult<CandidateFeature> {
    let j = fixed::<3, 6>(jacobian)?;
    let q: Matrix3<f64> = fixed(noise)?;
    CandidateFeature::from_jacobian(0, j, q, semantic_belief(samples)?).map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Mutual information in bits between the listed components and the rest.
#[pyfunction]
fn gaussian_mutual_information(covariance: Vec<Vec<f64>>, part_a: Vec<usize>) -> PyResult<f64> {
    let g = GaussianBelief::from_covariance(dmatrix(&covariance)?).map_err(to_py)?;
    sivo_core::infotheory::gaussian_mutual_information(&g, &part_a).map_err(to_py)
}

#[pyfunction]
fn mutual_information_score(
    pose_covariance: Vec<Vec<f64>>,
    jacobian: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
) -> PyResult<f64> {
    let sigma: Matrix6<f64> = fixed(&pose_covariance)?;
    let c = candidate(&jacobian, &noise, vec![vec![1.0]])?;
    selection::mutual_information_score(&sigma, &c).map_err(to_py)
}

/// Scores one candidate against the default taxonomy. `samples` holds one
/// softmax vector per stochastic forward pass.
#[pyfunction]
fn sivo_score<'py>(
    py: Python<'py>,
    pose_covariance: Vec<Vec<f64>>,
    jacobian: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    samples: Vec<Vec<f64>>,
    threshold_bits: f64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let sigma: Matrix6<f64> = fixed(&pose_covariance)?;
    let c = candidate(&jacobian, &noise, samples)?;
    let s = selection::sivo_score(&sigma, &c, threshold_bits, &Taxonomy::default()).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("mutual_information_bits", s.mutual_information_bits)?;
    d.set_item("classification_entropy_bits", s.classification_entropy_bits)?;
    d.set_item("delta_h_bits", s.delta_h_bits)?;
    d.set_item("argmax_class", c.semantics.argmax_class())?;
    d.set_item("selected", s.selected)?;
    d.set_item("rejection_reason", s.rejection_reason.as_str())?;
    Ok(d)
}

/// Entropy in bits of the averaged class distribution.
#[pyfunction]
fn classification_entropy(samples: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(semantic_belief(samples)?.entropy_bits())
}

#[pyfunction]
fn map_reduction(baseline: usize, test: usize) -> PyResult<f64> {
    io_eval::map_reduction(baseline, test).map_err(to_py)
}

/// Trajectory error statistics for two pose files given as text.
#[pyfunction]
#[pyo3(signature = (gt, est, stride = 1))]
fn kitti_errors<'py>(py: Python<'py>, gt: &str, est: &str, stride: usize) -> PyResult<Bound<'py, PyAny>> {
    let gt = io_eval::parse_kitti_poses(gt).map_err(to_py)?;
    let est = io_eval::parse_kitti_poses(est).map_err(to_py)?;
    let report = io_eval::kitti_errors(&gt, &est, stride).map_err(to_py)?;
    json_to_py(py, &report.to_json())
}

#[pyclass(name = "Scenario", module = "sivo", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: sivo_core::scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = sivo_core::scenario::Scenario::from_toml(text).map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let inner = sivo_core::scenario::Scenario::load(&path).map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    #[staticmethod]
    fn default_loop() -> Self {
        PyScenario {
            inner: sivo_core::scenario::Scenario::default_loop(),
        }
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.trajectory.frames
    }

    #[setter]
    fn set_frames(&mut self, frames: usize) {
        self.inner.trajectory.frames = frames;
    }

    /// Runs one strategy. Unset knobs fall back to the scenario's own.
    #[pyo3(signature = (strategy = "sivo-batch", threshold_bits = None, mc_samples = None))]
    fn run(
        &self,
        py: Python<'_>,
        strategy: &str,
        threshold_bits: Option<f64>,
        mc_samples: Option<usize>,
    ) -> PyResult<RunResult> {
        let strategy: Strategy = strategy.parse().map_err(to_py)?;
        let mut cfg = self.inner.selection.config_for(strategy);
        if let Some(h) = threshold_bits {
            cfg.threshold_bits = h;
        }
        if let Some(n) = mc_samples {
            cfg.mc_samples = n;
        }
        let scenario = self.inner.clone();
        let result = py
            .detach(move || -> sivo_core::Result<SequenceResult> {
                scenario.validate()?;
                cfg.validate()?;
                let world = scenario.build_world()?;
                let trajectory = scenario.build_trajectory()?;
                scenario.run(&world, &trajectory, &cfg)
            })
            .map_err(to_py)?;
        Ok(RunResult { inner: result })
    }
}

#[pyclass(module = "sivo")]
struct RunResult {
    inner: SequenceResult,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn map_points(&self) -> usize {
        self.inner.map_points()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.beliefs.len()
    }

    #[getter]
    fn final_position_error(&self) -> f64 {
        self.inner.final_position_error()
    }

    /// Estimated trajectory as pose-file text (world-from-camera rows).
    fn trajectory_text(&self) -> String {
        io_eval::write_kitti_poses(&TrajectoryRecord::from_camera_from_world(&self.inner.estimated()))
    }

    fn ground_truth_text(&self) -> String {
        io_eval::write_kitti_poses(&TrajectoryRecord::from_camera_from_world(&self.inner.ground_truth))
    }

    fn selection_report(&self) -> String {
        io_eval::write_selection_report(&self.inner.reports)
    }

    /// Error statistics of this run against its own ground truth.
    #[pyo3(signature = (stride = 1))]
    fn error_report<'py>(&self, py: Python<'py>, stride: usize) -> PyResult<Bound<'py, PyAny>> {
        let gt = TrajectoryRecord::from_camera_from_world(&self.inner.ground_truth);
        let est = TrajectoryRecord::from_camera_from_world(&self.inner.estimated());
        let report = io_eval::kitti_errors(&gt, &est, stride).map_err(to_py)?;
        json_to_py(py, &report.to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(label={:?}, frames={}, map_points={})",
            self.inner.label,
            self.inner.beliefs.len(),
            self.inner.map_points()
        )
    }
}

#[pymodule]
fn sivo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(gaussian_mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information_score, m)?)?;
    m.add_function(wrap_pyfunction!(sivo_score, m)?)?;
    m.add_function(wrap_pyfunction!(classification_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(map_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(kitti_errors, m)?)?;
    Ok(())
}
