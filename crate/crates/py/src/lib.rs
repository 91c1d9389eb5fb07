//! Python bindings for the `serocs` crate.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serocs::baselines::mcmc::{mc_confset as mc_set, McConfidenceSet};
use serocs::baselines::ProposalMode;
use serocs::confset::{EvidenceOptions, ScanOptions};
use serocs::{Axis, Condition, GridSpec, LrtOptions, LrtTail, McmcOptions, Method, ParamGrid};

fn err(e: serocs::Error) -> PyErr {
    match e {
        serocs::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_method(s: &str) -> PyResult<Method> {
    match s {
        "basic" => Ok(Method::Basic),
        "alt" => Ok(Method::Alt),
        "both" => Ok(Method::Both),
        _ => Err(PyValueError::new_err(format!(
            "unknown method `{s}` (basic, alt, both)"
        ))),
    }
}

fn parse_axis(s: &str) -> PyResult<Axis> {
    match s {
        "p" => Ok(Axis::P),
        "q" => Ok(Axis::Q),
        "pi" => Ok(Axis::Pi),
        _ => Err(PyValueError::new_err(format!("unknown axis `{s}` (p, q, pi)"))),
    }
}

fn parse_grid(grid: Option<&str>, design: &serocs::StudyDesign) -> PyResult<ParamGrid> {
    match grid {
        None => Ok(ParamGrid::default_for(design)),
        Some(text) => {
            let spec: GridSpec = text.parse().map_err(err)?;
            ParamGrid::from_spec(&spec, design).map_err(err)
        }
    }
}

fn intervals(v: Vec<serocs::Interval>) -> Vec<(f64, f64)> {
    v.into_iter().map(|i| (i.lo, i.hi)).collect()
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct StudyDesign(serocs::StudyDesign);

#[pymethods]
impl StudyDesign {
    #[new]
    fn new(n_cal_neg: u32, n_cal_pos: u32, n_main: u32) -> PyResult<Self> {
        serocs::StudyDesign::new(n_cal_neg, n_cal_pos, n_main)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn n_cal_neg(&self) -> u32 {
        self.0.n_cal_neg
    }

    #[getter]
    fn n_cal_pos(&self) -> u32 {
        self.0.n_cal_pos
    }

    #[getter]
    fn n_main(&self) -> u32 {
        self.0.n_main
    }

    fn sample_space_size(&self) -> u64 {
        self.0.sample_space_size()
    }

    fn __repr__(&self) -> String {
        format!(
            "StudyDesign({}, {}, {})",
            self.0.n_cal_neg, self.0.n_cal_pos, self.0.n_main
        )
    }
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PositiveCounts(serocs::PositiveCounts);

#[pymethods]
impl PositiveCounts {
    #[new]
    fn new(s_cal_neg: u32, s_cal_pos: u32, s_main: u32) -> Self {
        Self(serocs::PositiveCounts::new(s_cal_neg, s_cal_pos, s_main))
    }

    #[getter]
    fn s_cal_neg(&self) -> u32 {
        self.0.s_cal_neg
    }

    #[getter]
    fn s_cal_pos(&self) -> u32 {
        self.0.s_cal_pos
    }

    #[getter]
    fn s_main(&self) -> u32 {
        self.0.s_main
    }

    fn __repr__(&self) -> String {
        format!(
            "PositiveCounts({}, {}, {})",
            self.0.s_cal_neg, self.0.s_cal_pos, self.0.s_main
        )
    }
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone, Copy)]
struct ParamPoint(serocs::ParamPoint);

#[pymethods]
impl ParamPoint {
    #[new]
    fn new(p: f64, q: f64, k: u32) -> PyResult<Self> {
        serocs::ParamPoint::new(p, q, k).map(Self).map_err(err)
    }

    /// Rounds `pi * n_main` to the nearest infected count.
    #[staticmethod]
    fn from_prevalence(p: f64, q: f64, pi: f64, design: &StudyDesign) -> PyResult<Self> {
        serocs::ParamPoint::from_prevalence(p, q, pi, &design.0)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    #[getter]
    fn k(&self) -> u32 {
        self.0.k
    }

    fn prevalence(&self, design: &StudyDesign) -> f64 {
        self.0.prevalence(&design.0)
    }

    fn __repr__(&self) -> String {
        format!("ParamPoint(p={:?}, q={:?}, k={})", self.0.p, self.0.q, self.0.k)
    }
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Dataset(serocs::Dataset);

#[pymethods]
impl Dataset {
    #[new]
    fn new(label: String, design: &StudyDesign, observed: &PositiveCounts) -> PyResult<Self> {
        serocs::Dataset::new(label, design.0, observed.0).map(Self).map_err(err)
    }

    #[getter]
    fn label(&self) -> &str {
        &self.0.label
    }

    #[getter]
    fn design(&self) -> StudyDesign {
        StudyDesign(self.0.design)
    }

    #[getter]
    fn observed(&self) -> PositiveCounts {
        PositiveCounts(self.0.observed)
    }

    fn to_toml(&self) -> String {
        serocs::serialize_dataset(&self.0)
    }

    fn __repr__(&self) -> String {
        let (d, s) = (self.0.design, self.0.observed);
        format!(
            "Dataset({:?}, design=({}, {}, {}), observed=({}, {}, {}))",
            self.0.label, d.n_cal_neg, d.n_cal_pos, d.n_main, s.s_cal_neg, s.s_cal_pos, s.s_main
        )
    }
}

#[pyclass(frozen)]
struct ConfidenceSet(serocs::ConfidenceSet);

#[pymethods]
impl ConfidenceSet {
    fn __len__(&self) -> usize {
        self.0.records.len()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.to_string()
    }

    fn member_count(&self, method: &str) -> PyResult<usize> {
        Ok(self.0.member_count(parse_method(method)?))
    }

    /// Projected intervals as `(lo, hi)` pairs, optionally conditioned on fixed
    /// values of the other axes.
    #[pyo3(signature = (axis = "pi", method = "alt", p = None, q = None, pi = None))]
    fn project(
        &self,
        axis: &str,
        method: &str,
        p: Option<f64>,
        q: Option<f64>,
        pi: Option<f64>,
    ) -> PyResult<Vec<(f64, f64)>> {
        let cond = Condition { p, q, pi };
        serocs::project_interval(&self.0, parse_axis(axis)?, &cond, parse_method(method)?)
            .map(intervals)
            .map_err(err)
    }

    /// Rows of `(p, q, k, evidence_basic, evidence_alt, in_basic, in_alt)`.
    #[allow(clippy::type_complexity)]
    fn records(&self) -> Vec<(f64, f64, u32, Option<f64>, Option<f64>, bool, bool)> {
        self.0
            .records
            .iter()
            .map(|r| {
                (
                    r.theta.p,
                    r.theta.q,
                    r.theta.k,
                    r.evidence_basic,
                    r.evidence_alt,
                    r.in_basic,
                    r.in_alt,
                )
            })
            .collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        serocs::io::confset_to_csv(&self.0).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        serocs::io::confset_to_json(&self.0).map_err(err)
    }

    /// Writes CSV or JSON depending on the file extension.
    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        let format = serocs::io::Format::from_path(&path).unwrap_or(serocs::io::Format::Csv);
        serocs::io::write_confset(&self.0, &path, format).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ConfidenceSet({:?}, points={}, basic={}, alt={})",
            self.0.dataset,
            self.0.records.len(),
            self.0.member_count(Method::Basic),
            self.0.member_count(Method::Alt)
        )
    }
}

#[pyclass(frozen)]
struct MleFit(serocs::MleFit);

#[pymethods]
impl MleFit {
    #[getter]
    fn theta(&self) -> ParamPoint {
        ParamPoint(self.0.theta)
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.0.log_likelihood
    }

    fn prevalence(&self, design: &StudyDesign) -> f64 {
        self.0.prevalence(&design.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "MleFit(theta={:?}, log_likelihood={:?})",
            self.0.theta, self.0.log_likelihood
        )
    }
}

#[pyclass(frozen)]
struct Chain(serocs::Chain);

#[pymethods]
impl Chain {
    fn __len__(&self) -> usize {
        self.0.samples.len()
    }

    #[getter]
    fn acceptance_rate(&self) -> f64 {
        self.0.acceptance_rate
    }

    #[getter]
    fn loglik_trace(&self) -> Vec<f64> {
        self.0.loglik_trace.clone()
    }

    /// Post-burn-in `(p, q, pi)` samples.
    fn samples(&self) -> Vec<(f64, f64, f64)> {
        self.0.samples.iter().map(|s| s.rates()).collect()
    }

    fn prevalences(&self) -> Vec<f64> {
        self.0.prevalences()
    }

    #[pyo3(signature = (level = 0.95))]
    fn credible_interval(&self, level: f64) -> PyResult<(f64, f64)> {
        self.0.credible_interval(level).map(|i| (i.lo, i.hi)).map_err(err)
    }
}

#[pyclass(frozen)]
struct McSet(McConfidenceSet);

#[pymethods]
impl McSet {
    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold
    }

    fn member_count(&self) -> usize {
        self.0.member_count()
    }

    #[pyo3(signature = (axis = "pi", p = None, q = None, pi = None))]
    fn project(&self, axis: &str, p: Option<f64>, q: Option<f64>, pi: Option<f64>) -> PyResult<Vec<(f64, f64)>> {
        self.0
            .project(parse_axis(axis)?, &Condition { p, q, pi })
            .map(intervals)
            .map_err(err)
    }
}

#[pyfunction]
fn dataset_names() -> Vec<&'static str> {
    serocs::data::builtin_names().to_vec()
}

#[pyfunction]
fn builtin_dataset(name: &str) -> PyResult<Dataset> {
    serocs::builtin_dataset(name).map(Dataset).map_err(err)
}

#[pyfunction]
fn parse_dataset(source: &str) -> PyResult<Dataset> {
    serocs::parse_dataset(source).map(Dataset).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (datasets, shared_calibration = false))]
fn combine(datasets: Vec<Dataset>, shared_calibration: bool) -> PyResult<Dataset> {
    let inner: Vec<serocs::Dataset> = datasets.into_iter().map(|d| d.0).collect();
    serocs::combine(&inner, shared_calibration).map(Dataset).map_err(err)
}

#[pyfunction]
fn joint_density(observed: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> PyResult<f64> {
    serocs::joint_density(&observed.0, &theta.0, &design.0).map_err(err)
}

#[pyfunction]
fn basic_evidence(observed: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> PyResult<f64> {
    serocs::basic_evidence(&observed.0, &theta.0, &design.0).map_err(err)
}

#[pyfunction]
fn alt_evidence(observed: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> PyResult<f64> {
    serocs::alt_evidence(&observed.0, &theta.0, &design.0).map_err(err)
}

/// Scans a grid given as `"p=min:max:step,q=...,pi=..."`; omitted axes use
/// the defaults.
#[pyfunction]
#[pyo3(signature = (dataset, grid = None, alpha = 0.05, method = "both", workers = 1, prune_tol = -100.0))]
fn scan(
    py: Python<'_>,
    dataset: &Dataset,
    grid: Option<&str>,
    alpha: f64,
    method: &str,
    workers: usize,
    prune_tol: f64,
) -> PyResult<ConfidenceSet> {
    let grid = parse_grid(grid, &dataset.0.design)?;
    let options = ScanOptions {
        alpha,
        method: parse_method(method)?,
        workers,
        evidence: EvidenceOptions {
            prune_tol,
            ..EvidenceOptions::default()
        },
    };
    let data = &dataset.0;
    py.detach(|| serocs::confset::scan_grid_with(&grid, data, &options, None))
        .map(ConfidenceSet)
        .map_err(err)
}

#[pyfunction]
fn read_confset(path: std::path::PathBuf) -> PyResult<ConfidenceSet> {
    serocs::io::read_confset(&path).map(ConfidenceSet).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dataset, starts = 8, seed = 0))]
fn mle(py: Python<'_>, dataset: &Dataset, starts: usize, seed: u64) -> PyResult<MleFit> {
    let data = &dataset.0;
    py.detach(|| serocs::mle(data, starts, seed)).map(MleFit).map_err(err)
}

/// Returns `(t_obs, pvalue, reject)`.
#[pyfunction]
#[pyo3(signature = (theta, dataset, r = 200, seed = 0, tail = "upper", alpha = 0.05, starts = 8))]
#[allow(clippy::too_many_arguments)]
fn lrt_pvalue(
    py: Python<'_>,
    theta: &ParamPoint,
    dataset: &Dataset,
    r: usize,
    seed: u64,
    tail: &str,
    alpha: f64,
    starts: usize,
) -> PyResult<(f64, f64, bool)> {
    let tail = match tail {
        "upper" => LrtTail::Upper,
        "conventional" => LrtTail::Conventional,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown tail `{tail}` (upper, conventional)"
            )))
        }
    };
    let opts = LrtOptions { tail, alpha, starts };
    let (t, data) = (theta.0, &dataset.0);
    py.detach(|| serocs::lrt_pvalue(&t, data, r, seed, &opts))
        .map(|res| (res.t_obs, res.pvalue, res.reject))
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (dataset, iters = 200_000, burn = 0.2, proposal_sd = 0.25, proposal = "random-walk", seed = 0))]
fn mcmc(
    py: Python<'_>,
    dataset: &Dataset,
    iters: usize,
    burn: f64,
    proposal_sd: f64,
    proposal: &str,
    seed: u64,
) -> PyResult<Chain> {
    let mode = match proposal {
        "random-walk" => ProposalMode::RandomWalk,
        "independence" => ProposalMode::Independence,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown proposal `{proposal}` (random-walk, independence)"
            )))
        }
    };
    let opts = McmcOptions {
        iters,
        burn_frac: burn,
        proposal_sd,
        mode,
        seed,
    };
    let data = &dataset.0;
    py.detach(|| serocs::mh_sample(data, &opts)).map(Chain).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (chain, dataset, grid = None))]
fn mc_confset(py: Python<'_>, chain: &Chain, dataset: &Dataset, grid: Option<&str>) -> PyResult<McSet> {
    let grid = parse_grid(grid, &dataset.0.design)?;
    let (c, data) = (&chain.0, &dataset.0);
    py.detach(|| mc_set(c, data, &grid)).map(McSet).map_err(err)
}

#[pymodule]
fn pyserocs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<StudyDesign>()?;
    m.add_class::<PositiveCounts>()?;
    m.add_class::<ParamPoint>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<ConfidenceSet>()?;
    m.add_class::<MleFit>()?;
    m.add_class::<Chain>()?;
    m.add_class::<McSet>()?;
    m.add_function(wrap_pyfunction!(dataset_names, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(parse_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(joint_density, m)?)?;
    m.add_function(wrap_pyfunction!(basic_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(alt_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(read_confset, m)?)?;
    m.add_function(wrap_pyfunction!(mle, m)?)?;
    m.add_function(wrap_pyfunction!(lrt_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(mcmc, m)?)?;
    m.add_function(wrap_pyfunction!(mc_confset, m)?)?;
    Ok(())
}
