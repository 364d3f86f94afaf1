//! Python bindings: optics, view geometry, combo solving, layer design,
//! rendering and decoding. Images cross the boundary as nested lists.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qrtag::designer::{
    aggregate, solve_all_combos, solve_combo as solve_one, ComboRequest, PixelCombo,
    ViewTargetStack,
};
use qrtag::factorization::SolverConfig;
use qrtag::imaging::{self, Levels};
use qrtag::marker::{self, BinaryLayer, LayerRole};
use qrtag::optics::{self, GlassSpec};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

pub fn to_array<T: Copy>(rows: &[Vec<T>]) -> Result<Array2<T>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err("empty image".into());
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(format!(
            "row {i} has {} entries, row 0 has {c}",
            rows[i].len()
        ));
    }
    Ok(Array2::from_shape_fn((r, c), |(i, j)| rows[i][j]))
}

pub fn to_rows<T: Copy>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn glass(thickness_um: f64, n1: f64, n0: f64) -> GlassSpec {
    GlassSpec {
        thickness_um,
        n0,
        n1,
        pixel_pitch_um: None,
    }
}

/// Lateral displacement in micrometres of a ray through the glass at `theta_deg`.
#[pyfunction]
#[pyo3(signature = (theta_deg, thickness_um=510.0, n1=1.46, n0=1.0))]
fn offset_for_angle(theta_deg: f64, thickness_um: f64, n1: f64, n0: f64) -> PyResult<f64> {
    optics::offset_for_angle(&glass(thickness_um, n1, n0), theta_deg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (offset_um, thickness_um=510.0, n1=1.46, n0=1.0))]
fn angle_for_offset(offset_um: f64, thickness_um: f64, n1: f64, n0: f64) -> PyResult<f64> {
    optics::angle_for_offset(&glass(thickness_um, n1, n0), offset_um).map_err(err)
}

#[pyclass(name = "Levels", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyLevels(Levels);

#[pymethods]
impl PyLevels {
    #[new]
    #[pyo3(signature = (low=0.2, high=0.5))]
    fn new(low: f64, high: f64) -> PyResult<Self> {
        Levels::new(low, high).map(Self).map_err(err)
    }
    #[getter]
    fn low(&self) -> f64 {
        self.0.low
    }
    #[getter]
    fn high(&self) -> f64 {
        self.0.high
    }
    fn midpoint(&self) -> f64 {
        self.0.midpoint()
    }
    fn __repr__(&self) -> String {
        format!("Levels(low={}, high={})", self.0.low, self.0.high)
    }
}

#[pyclass(name = "CellSpec", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyCellSpec(marker::CellSpec);

#[pymethods]
impl PyCellSpec {
    #[new]
    #[pyo3(signature = (scale, margin=0))]
    fn new(scale: usize, margin: usize) -> PyResult<Self> {
        marker::CellSpec::new(scale, margin).map(Self).map_err(err)
    }
    #[getter]
    fn scale(&self) -> usize {
        self.0.scale
    }
    #[getter]
    fn margin(&self) -> usize {
        self.0.margin
    }
    #[getter]
    fn cell_side(&self) -> usize {
        self.0.cell_side()
    }
    fn __repr__(&self) -> String {
        format!("CellSpec(scale={}, margin={})", self.0.scale, self.0.margin)
    }
}

#[pyclass(name = "ViewSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyViewSpec(marker::ViewSpec);

#[pymethods]
impl PyViewSpec {
    #[new]
    #[pyo3(signature = (grid_k, shift_step=1))]
    fn new(grid_k: usize, shift_step: usize) -> PyResult<Self> {
        marker::ViewSpec::new(grid_k, shift_step)
            .map(Self)
            .map_err(err)
    }
    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }
    #[getter]
    fn center_index(&self) -> usize {
        self.0.center_index()
    }
    #[getter]
    fn offsets(&self) -> Vec<(i64, i64)> {
        self.0.offsets.clone()
    }
    /// `(u, v)` layer shift of the 1-based view `index`.
    fn offset(&self, index: usize) -> PyResult<(i64, i64)> {
        self.0.offset(index).map_err(err)
    }
    fn __repr__(&self) -> String {
        format!(
            "ViewSpec(grid_k={}, shift_step={})",
            self.0.grid_k, self.0.shift_step
        )
    }
}

fn solver(restarts: usize, seed: u64) -> SolverConfig {
    let mut cfg = SolverConfig {
        restarts,
        ..Default::default()
    };
    cfg.wnmf.seed = seed;
    cfg
}

/// Solve one combo word; returns a dict with `front`, `rear`, `values`, `rms`.
#[pyfunction]
#[pyo3(signature = (bits, cell, view, levels=None, restarts=8, seed=0))]
fn solve_combo<'py>(
    py: Python<'py>,
    bits: u32,
    cell: &PyCellSpec,
    view: &PyViewSpec,
    levels: Option<&PyLevels>,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let combo = PixelCombo::new(bits, view.0.count()).map_err(err)?;
    let levels = levels.map_or_else(Levels::default, |l| l.0);
    let (entry, _) =
        solve_one(combo, &cell.0, &view.0, levels, &solver(restarts, seed)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("front", to_rows(entry.front.pixels()))?;
    d.set_item("rear", to_rows(entry.rear.pixels()))?;
    d.set_item("values", entry.values)?;
    d.set_item("rms", entry.rms)?;
    Ok(d)
}

/// A solved two-layer design.
#[pyclass(name = "Design", frozen)]
struct PyDesign {
    front: BinaryLayer,
    rear: BinaryLayer,
    cell: marker::CellSpec,
    view: marker::ViewSpec,
    levels: Levels,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn front(&self) -> Vec<Vec<u8>> {
        to_rows(self.front.pixels())
    }
    #[getter]
    fn rear(&self) -> Vec<Vec<u8>> {
        to_rows(self.rear.pixels())
    }
    /// Rendered grayscale image of the 1-based view `index`.
    fn render(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        imaging::render_view(&self.front, &self.rear, &self.view, index, &self.cell)
            .map(|a| to_rows(&a))
            .map_err(err)
    }
    /// Rendered view binarized at the level midpoint.
    fn decode(&self, index: usize) -> PyResult<Vec<Vec<u8>>> {
        let img = imaging::render_view(&self.front, &self.rear, &self.view, index, &self.cell)
            .map_err(err)?;
        Ok(to_rows(&imaging::decode_bits(&img, &self.levels)))
    }
}

/// Design front and rear layers for one bit code per view (row-major view
/// order). Only the combos the codes use are solved.
#[pyfunction]
#[pyo3(signature = (codes, cell, view, levels=None, restarts=8, seed=0, jobs=1))]
#[allow(clippy::too_many_arguments)]
fn design(
    py: Python<'_>,
    codes: Vec<Vec<Vec<u8>>>,
    cell: &PyCellSpec,
    view: &PyViewSpec,
    levels: Option<&PyLevels>,
    restarts: usize,
    seed: u64,
    jobs: usize,
) -> PyResult<PyDesign> {
    let levels = levels.map_or_else(Levels::default, |l| l.0);
    let bits = codes
        .iter()
        .map(|c| to_array(c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let stack = ViewTargetStack::from_bits(&bits, view.0.clone(), levels).map_err(err)?;
    let cfg = solver(restarts, seed);
    let (cell, view) = (cell.0, view.0.clone());
    let (front, rear) = py
        .detach(|| {
            let (cache, report) = solve_all_combos(
                &cell,
                &view,
                levels,
                &cfg,
                &ComboRequest::for_stack(&stack),
                jobs,
            )?;
            if let Some((c, e)) = report.failures.first() {
                return Err(qrtag::Error::InvalidParameter(format!(
                    "combo {c} failed: {e}"
                )));
            }
            aggregate(&stack, &cache, &cell)
        })
        .map_err(err)?;
    Ok(PyDesign {
        front,
        rear,
        cell,
        view,
        levels,
    })
}

/// Render a view of explicit front/rear layers.
#[pyfunction]
fn render_view(
    front: Vec<Vec<u8>>,
    rear: Vec<Vec<u8>>,
    view: &PyViewSpec,
    index: usize,
    cell: &PyCellSpec,
) -> PyResult<Vec<Vec<f64>>> {
    let front = BinaryLayer::new(to_array(&front).map_err(err)?, LayerRole::Front).map_err(err)?;
    let rear = BinaryLayer::new(to_array(&rear).map_err(err)?, LayerRole::Rear).map_err(err)?;
    imaging::render_view(&front, &rear, &view.0, index, &cell.0)
        .map(|a| to_rows(&a))
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (image, levels=None))]
fn decode_bits(image: Vec<Vec<f64>>, levels: Option<&PyLevels>) -> PyResult<Vec<Vec<u8>>> {
    let levels = levels.map_or_else(Levels::default, |l| l.0);
    Ok(to_rows(&imaging::decode_bits(
        &to_array(&image).map_err(err)?,
        &levels,
    )))
}

#[pymodule]
fn pyqrtag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyLevels>()?;
    m.add_class::<PyCellSpec>()?;
    m.add_class::<PyViewSpec>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(offset_for_angle, m)?)?;
    m.add_function(wrap_pyfunction!(angle_for_offset, m)?)?;
    m.add_function(wrap_pyfunction!(solve_combo, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(render_view, m)?)?;
    m.add_function(wrap_pyfunction!(decode_bits, m)?)?;
    Ok(())
}
