//! Python bindings: `import ddt`.
//!
//! Build with `cargo build -p ddt-python --release --features extension-module`
//! and put `libddt.so` on the path as `ddt.so`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use ddt_core::augment::{self, FilterPolicy};
use ddt_core::evaluate;
use ddt_core::heatmap as hm;
use ddt_core::io::{self as dio, Layer};
use ddt_core::localize::{self as loc, LayerModel, Method, ResultsFile};
use ddt_core::stats::CovarianceAccumulator;
use ddt_core::synth::{self, SynthSpec};
use ddt_core::transform;

create_exception!(ddt, DdtError, PyException, "Raised for any pipeline failure.");

fn err(e: impl std::fmt::Display) -> PyErr {
    DdtError::new_err(e.to_string())
}

fn parse_method(s: &str) -> PyResult<Method> {
    match s {
        "ddt" => Ok(Method::Ddt),
        "ddt-plus" | "ddt_plus" => Ok(Method::DdtPlus),
        "scda" => Ok(Method::Scda),
        _ => Err(PyValueError::new_err(format!("unknown method {s:?}; expected ddt, ddt-plus or scda"))),
    }
}

fn parse_layer(s: &str) -> PyResult<Layer> {
    match s {
        "last" => Ok(Layer::Last),
        "prev" => Ok(Layer::Prev),
        _ => Err(PyValueError::new_err(format!("unknown layer {s:?}; expected last or prev"))),
    }
}

#[pyclass(name = "BoundingBox", module = "ddt", frozen, eq, hash, from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PyBox(ddt_core::BoundingBox);

#[pymethods]
impl PyBox {
    #[new]
    fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> PyResult<Self> {
        ddt_core::BoundingBox::new(xmin, ymin, xmax, ymax).map(PyBox).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn xmin(&self) -> u32 {
        self.0.xmin
    }

    #[getter]
    fn ymin(&self) -> u32 {
        self.0.ymin
    }

    #[getter]
    fn xmax(&self) -> u32 {
        self.0.xmax
    }

    #[getter]
    fn ymax(&self) -> u32 {
        self.0.ymax
    }

    fn area(&self) -> u64 {
        self.0.area()
    }

    fn as_tuple(&self) -> (u32, u32, u32, u32) {
        (self.0.xmin, self.0.ymin, self.0.xmax, self.0.ymax)
    }

    fn __repr__(&self) -> String {
        format!("BoundingBox({}, {}, {}, {})", self.0.xmin, self.0.ymin, self.0.xmax, self.0.ymax)
    }
}

#[pyclass(name = "DescriptorTensor", module = "ddt", frozen)]
struct PyTensor(dio::DescriptorTensor);

#[pymethods]
impl PyTensor {
    /// `data` is row-major, channels fastest: index (i*w + j)*d + c.
    #[new]
    fn new(h: usize, w: usize, d: usize, data: Vec<f32>) -> PyResult<Self> {
        dio::DescriptorTensor::new(h, w, d, data).map(PyTensor).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        dio::read_descriptor_file(path).map(PyTensor).map_err(err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        dio::write_descriptor_file(&self.0, path).map_err(err)
    }

    #[staticmethod]
    fn decode(bytes: &[u8]) -> PyResult<Self> {
        dio::DescriptorTensor::decode(bytes).map(PyTensor).map_err(err)
    }

    fn encode<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.encode())
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.h(), self.0.w(), self.0.d())
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn cell(&self, i: usize, j: usize) -> PyResult<Vec<f32>> {
        if i >= self.0.h() || j >= self.0.w() {
            return Err(PyValueError::new_err(format!("cell ({i}, {j}) outside {}x{}", self.0.h(), self.0.w())));
        }
        Ok(self.0.cell(i, j).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("DescriptorTensor(h={}, w={}, d={})", self.0.h(), self.0.w(), self.0.d())
    }
}

#[pyclass(name = "Manifest", module = "ddt", frozen)]
struct PyManifest(dio::ImageSetManifest);

#[pymethods]
impl PyManifest {
    /// Loads a manifest; `check` also reads and validates every descriptor file.
    #[staticmethod]
    #[pyo3(signature = (path, check = true))]
    fn load(path: PathBuf, check: bool) -> PyResult<Self> {
        let m = if check { dio::load_manifest(path) } else { dio::load_manifest_unchecked(path) };
        m.map(PyManifest).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dio::write_manifest(&self.0, path).map_err(err)
    }

    #[getter]
    fn set_name(&self) -> &str {
        &self.0.set_name
    }

    fn ids(&self) -> Vec<String> {
        self.0.images.iter().map(|r| r.id.clone()).collect()
    }

    fn has_layer(&self, layer: &str) -> PyResult<bool> {
        Ok(self.0.has_layer(parse_layer(layer)?))
    }

    fn gt_boxes(&self, id: &str) -> PyResult<Option<Vec<PyBox>>> {
        let rec = self.0.get(id).ok_or_else(|| PyValueError::new_err(format!("unknown image id {id:?}")))?;
        Ok(rec.gt_boxes.as_ref().map(|bs| bs.iter().copied().map(PyBox).collect()))
    }

    fn noisy_label(&self, id: &str) -> PyResult<Option<bool>> {
        let rec = self.0.get(id).ok_or_else(|| PyValueError::new_err(format!("unknown image id {id:?}")))?;
        Ok(rec.noisy)
    }

    fn load_layer(&self, id: &str, layer: &str) -> PyResult<PyTensor> {
        let rec = self.0.get(id).ok_or_else(|| PyValueError::new_err(format!("unknown image id {id:?}")))?;
        rec.load_layer(parse_layer(layer)?).map(PyTensor).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Manifest({:?}, {} images)", self.0.set_name, self.0.len())
    }
}

#[pyclass(name = "LocalizationResult", module = "ddt", frozen, from_py_object)]
#[derive(Clone)]
struct PyLocResult(ddt_core::LocalizationResult);

#[pymethods]
impl PyLocResult {
    #[getter]
    fn image_id(&self) -> &str {
        &self.0.image_id
    }

    #[getter]
    fn bbox(&self) -> Option<PyBox> {
        self.0.bbox.map(PyBox)
    }

    #[getter]
    fn noisy(&self) -> bool {
        self.0.noisy
    }

    #[getter]
    fn noise_rate(&self) -> f64 {
        self.0.noise_rate
    }

    #[getter]
    fn component_size(&self) -> u64 {
        self.0.component_size
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.as_str()
    }

    fn __repr__(&self) -> String {
        let b = self.0.bbox.map_or("None".to_string(), |b| PyBox(b).__repr__());
        format!("LocalizationResult({:?}, bbox={b}, noise_rate={})", self.0.image_id, self.0.noise_rate)
    }
}

#[pyclass(name = "SetStatistics", module = "ddt", frozen)]
struct PyStats(ddt_core::SetStatistics);

#[pymethods]
impl PyStats {
    /// Pools every cell of `tensors` and keeps the top `top_k` components.
    #[staticmethod]
    #[pyo3(signature = (tensors, top_k = 2))]
    fn fit(tensors: Vec<PyRef<'_, PyTensor>>, top_k: usize) -> PyResult<Self> {
        let d = tensors.first().ok_or_else(|| PyValueError::new_err("no tensors"))?.0.d();
        let mut acc = CovarianceAccumulator::new(d);
        for t in &tensors {
            acc.accumulate(&t.0).map_err(err)?;
        }
        acc.finalize(top_k).map(PyStats).map_err(err)
    }

    #[getter]
    fn count(&self) -> u64 {
        self.0.total_count()
    }

    fn mean(&self) -> Vec<f64> {
        self.0.mean().to_vec()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    /// 1-based principal direction.
    fn component(&self, k: usize) -> PyResult<Vec<f64>> {
        self.0.component(k).map(<[f64]>::to_vec).ok_or_else(|| PyValueError::new_err(format!("component {k} not retained")))
    }

    /// Indicator map of `tensor` on component `k`, as rows.
    #[pyo3(signature = (tensor, k = 1))]
    fn project(&self, tensor: &PyTensor, k: usize) -> PyResult<Vec<Vec<f64>>> {
        let m = transform::project("", &tensor.0, &self.0, k).map_err(err)?;
        Ok(m.values.chunks(m.w).map(<[f64]>::to_vec).collect())
    }
}

fn unwrap_results(results: &[PyLocResult]) -> Vec<ddt_core::LocalizationResult> {
    results.iter().map(|r| r.0.clone()).collect()
}

/// Runs `method` ("ddt", "ddt-plus" or "scda") over every image.
#[pyfunction]
#[pyo3(signature = (manifest, method = "ddt", top_k = 2))]
fn localize(py: Python<'_>, manifest: &PyManifest, method: &str, top_k: usize) -> PyResult<Vec<PyLocResult>> {
    let method = parse_method(method)?;
    let m = &manifest.0;
    let out = py.detach(|| match method {
        Method::Ddt => loc::ddt_localize(m, top_k),
        Method::DdtPlus => loc::ddt_plus_localize(m, top_k),
        Method::Scda => loc::scda_localize(m),
    });
    Ok(out.map_err(err)?.into_iter().map(PyLocResult).collect())
}

#[pyfunction]
fn write_results(results: Vec<PyLocResult>, method: &str, path: PathBuf) -> PyResult<()> {
    let file = ResultsFile::new(parse_method(method)?, unwrap_results(&results));
    loc::write_results(&file, path).map_err(err)
}

/// Returns `(method, results)`.
#[pyfunction]
fn read_results(path: PathBuf) -> PyResult<(&'static str, Vec<PyLocResult>)> {
    let file = loc::read_results(path).map_err(err)?;
    Ok((file.method.as_str(), file.results.into_iter().map(PyLocResult).collect()))
}

#[pyfunction]
fn iou(a: &PyBox, b: &PyBox) -> f64 {
    evaluate::iou(&a.0, &b.0)
}

/// CorLoc report as a dict with the same keys as the JSON report.
#[pyfunction]
fn corloc<'py>(py: Python<'py>, results: Vec<PyLocResult>, manifest: &PyManifest) -> PyResult<Bound<'py, PyDict>> {
    let report = evaluate::corloc(&unwrap_results(&results), &manifest.0).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("corloc", report.corloc)?;
    out.set_item("evaluated", report.evaluated)?;
    out.set_item("correct", report.correct)?;
    let per_image = PyList::empty(py);
    for p in &report.per_image {
        let e = PyDict::new(py);
        e.set_item("id", &p.id)?;
        e.set_item("iou", p.iou)?;
        e.set_item("correct", p.correct)?;
        per_image.append(e)?;
    }
    out.set_item("per_image", per_image)?;
    Ok(out)
}

type RocRow = (f64, f64, f64);

/// Returns `(points, auc)` with points as `(threshold, fpr, tpr)`.
#[pyfunction]
fn noise_roc(results: Vec<PyLocResult>, manifest: &PyManifest) -> PyResult<(Vec<RocRow>, f64)> {
    let curve = evaluate::noise_roc(&unwrap_results(&results), &manifest.0).map_err(err)?;
    Ok((curve.points.iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect(), curve.auc))
}

/// Keeps images whose noise rate is strictly above `threshold`.
#[pyfunction]
#[pyo3(signature = (results, manifest, threshold = 0.0))]
fn filter_dataset(results: Vec<PyLocResult>, manifest: &PyManifest, threshold: f64) -> PyResult<PyManifest> {
    let policy = FilterPolicy::new(threshold).map_err(|e| PyValueError::new_err(e.to_string()))?;
    augment::filter_dataset(&unwrap_results(&results), &manifest.0, policy).map(PyManifest).map_err(err)
}

/// Writes one VOC XML per non-noisy image; returns the count written.
#[pyfunction]
fn export_voc(results: Vec<PyLocResult>, manifest: &PyManifest, category: &str, out_dir: PathBuf) -> PyResult<usize> {
    augment::export_voc(&unwrap_results(&results), &manifest.0, category, out_dir).map_err(err)
}

/// Writes the normalized map of component `component` for image `id` as a PGM.
#[pyfunction]
#[pyo3(signature = (manifest, id, out, component = 1, layer = "last"))]
fn heatmap(manifest: &PyManifest, id: &str, out: PathBuf, component: usize, layer: &str) -> PyResult<()> {
    let layer = parse_layer(layer)?;
    let rec = manifest.0.get(id).ok_or_else(|| PyValueError::new_err(format!("unknown image id {id:?}")))?;
    let tensor = rec.load_layer(layer).map_err(err)?;
    let model = LayerModel::fit(&manifest.0, layer, component).map_err(err)?;
    let map = transform::project(&rec.id, &tensor, &model.stats, component).map_err(err)?;
    let img = hm::render(&map, rec.height as usize, rec.width as usize);
    hm::write_pgm(&img, out).map_err(err)
}

/// Generates a planted-signal set into `out_dir` and returns its manifest.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 0, images = 20, h = 16, w = 16, d = 64, separation = 8.0, noisy = 2, two_layer = false))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    out_dir: PathBuf,
    seed: u64,
    images: usize,
    h: usize,
    w: usize,
    d: usize,
    separation: f64,
    noisy: usize,
    two_layer: bool,
) -> PyResult<PyManifest> {
    let mut spec = SynthSpec::planted(seed, images, h, w, d, separation, noisy);
    spec.two_layer = two_layer;
    py.detach(|| synth::generate(&spec, &out_dir)).map(PyManifest).map_err(err)
}

#[pymodule]
fn ddt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DdtError", m.py().get_type::<DdtError>())?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyManifest>()?;
    m.add_class::<PyLocResult>()?;
    m.add_class::<PyStats>()?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(write_results, m)?)?;
    m.add_function(wrap_pyfunction!(read_results, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(corloc, m)?)?;
    m.add_function(wrap_pyfunction!(noise_roc, m)?)?;
    m.add_function(wrap_pyfunction!(filter_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(export_voc, m)?)?;
    m.add_function(wrap_pyfunction!(heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
