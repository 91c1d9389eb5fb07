//! Confidence sets by inverting density-level tests over a parameter grid.
//!
//! For a parameter `theta` and observed counts `s_obs`, with `z = f(s_obs | theta)`:
//!
//! * basic evidence: `z * nu(z)`, where `nu(z)` counts retained sample points
//!   with `0 < f(s | theta) <= z`;
//! * alternative evidence: the total probability of retained points with
//!   `f(s | theta) <= z`.
//!
//! `theta` is accepted at level `alpha` when the evidence is strictly greater
//! than `alpha`. The alternative set is always contained in the basic one.
//!
//! Both quantities are computed without materialising the sample space: the
//! two calibration factors depend only on `(p, q)`, so their products are
//! sorted once per `(p, q)` pair, and each main-study value then needs a
//! single binary search.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{
    binomial_window, log_joint_unchecked, main_window, mass_deficit_bound, Dataset, DensityTable, ParamPoint,
    PositiveCounts, StudyDesign, Window, DEFAULT_PRUNE_TOL,
};

/// Two log-densities closer than this are treated as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-12;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceOptions {
    pub prune_tol: f64,
    pub tie_tol: f64,
}

impl Default for EvidenceOptions {
    fn default() -> Self {
        Self {
            prune_tol: DEFAULT_PRUNE_TOL,
            tie_tol: DEFAULT_TIE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Basic,
    Alt,
    Both,
}

impl Method {
    pub fn includes_basic(self) -> bool {
        matches!(self, Method::Basic | Method::Both)
    }

    pub fn includes_alt(self) -> bool {
        matches!(self, Method::Alt | Method::Both)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Basic => "basic",
            Method::Alt => "alt",
            Method::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    P,
    Q,
    Pi,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::P => "p",
            Axis::Q => "q",
            Axis::Pi => "pi",
        })
    }
}

// ---------------------------------------------------------------------------
// level sets over explicit density lists

/// `(nu, mass)` of the values at or below `z` (ties within `tie_tol` in log
/// space count as equal). Zero densities are ignored.
pub fn level_set_of(values: &[f64], z: f64, tie_tol: f64) -> (u64, f64) {
    let threshold = z * tie_tol.exp();
    values
        .iter()
        .filter(|&&v| v > 0.0 && v <= threshold)
        .fold((0, 0.0), |(n, m), &v| (n + 1, m + v))
}

/// Largest total probability shared by a group of tied density values.
pub fn max_tied_mass(values: &[f64], tie_tol: f64) -> f64 {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let factor = tie_tol.exp();
    let mut best = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let limit = sorted[i] * factor;
        let mut mass = 0.0;
        let mut j = i;
        while j < sorted.len() && sorted[j] <= limit {
            mass += sorted[j];
            j += 1;
        }
        best = best.max(mass);
        i = j;
    }
    best
}

// ---------------------------------------------------------------------------
// per-theta evidence

/// Level-set summary of the pruned density at the observed level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub observed_density: f64,
    pub nu: u64,
    pub mass_at_or_below: f64,
    pub mass_deficit: f64,
}

impl LevelSummary {
    pub fn basic(&self) -> f64 {
        self.observed_density * self.nu as f64
    }

    /// Alternative evidence. Points tied with the observed level are credited
    /// at most the observed density, which keeps it below the basic evidence.
    pub fn alt(&self) -> f64 {
        self.mass_at_or_below.min(self.basic()).min(1.0)
    }
}

/// Sorted products of the two calibration windows for one `(p, q)` pair.
#[derive(Debug, Clone)]
pub struct CalibrationPair {
    pub p: f64,
    pub q: f64,
    cal_neg: Window,
    cal_pos: Window,
    products: Vec<f64>,
    prefix: Vec<f64>,
    observed: Option<f64>,
}

impl CalibrationPair {
    fn build(cal_neg: Window, cal_pos: Window, p: f64, q: f64, observed: Option<&PositiveCounts>) -> Self {
        let mut products = Vec::with_capacity(cal_neg.len() * cal_pos.len());
        for a in &cal_neg.values {
            for b in &cal_pos.values {
                products.push(a * b);
            }
        }
        products.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(products.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for v in &products {
            acc += v;
            prefix.push(acc);
        }
        let observed = observed.and_then(|s| Some(cal_neg.get(s.s_cal_neg)? * cal_pos.get(s.s_cal_pos)?));
        Self {
            p,
            q,
            cal_neg,
            cal_pos,
            products,
            prefix,
            observed,
        }
    }

    /// `(nu, mass)` over the product of this pair with a main-study window.
    fn level_set(&self, main: &Window, threshold: f64) -> (u64, f64) {
        let mut nu = 0u64;
        let mut mass = 0.0;
        for &c in &main.values {
            let limit = threshold / c;
            let idx = self.products.partition_point(|&v| v <= limit);
            nu += idx as u64;
            mass += c * self.prefix[idx];
        }
        (nu, mass)
    }
}

/// Evaluates evidence for one dataset at arbitrary parameter points.
#[derive(Debug, Clone)]
pub struct EvidenceEngine {
    design: StudyDesign,
    observed: PositiveCounts,
    options: EvidenceOptions,
}

impl EvidenceEngine {
    pub fn new(design: StudyDesign, observed: PositiveCounts, options: EvidenceOptions) -> Result<Self> {
        design.validate()?;
        design.check_counts(&observed)?;
        Ok(Self {
            design,
            observed,
            options,
        })
    }

    pub fn for_dataset(dataset: &Dataset, options: EvidenceOptions) -> Result<Self> {
        Self::new(dataset.design, dataset.observed, options)
    }

    pub fn options(&self) -> &EvidenceOptions {
        &self.options
    }

    pub fn calibration(&self, p: f64, q: f64) -> CalibrationPair {
        let tol = self.options.prune_tol;
        CalibrationPair::build(
            binomial_window(self.design.n_cal_neg, p, tol),
            binomial_window(self.design.n_cal_pos, q, tol),
            p,
            q,
            Some(&self.observed),
        )
    }

    /// Evidence at infected count `k`, reusing the calibration products.
    pub fn evaluate_with(&self, pair: &CalibrationPair, k: u32) -> LevelSummary {
        let theta = ParamPoint {
            p: pair.p,
            q: pair.q,
            k,
        };
        let main = main_window(&theta, self.design.n_main, self.options.prune_tol);
        let z = match (pair.observed, main.get(self.observed.s_main)) {
            (Some(ab), Some(c)) => ab * c,
            _ => log_joint_unchecked(&self.observed, &theta, &self.design, None).exp(),
        };
        let (nu, mass) = if z > 0.0 {
            pair.level_set(&main, z * self.options.tie_tol.exp())
        } else {
            (0, 0.0)
        };
        LevelSummary {
            observed_density: z,
            nu,
            mass_at_or_below: mass,
            mass_deficit: mass_deficit_bound(&pair.cal_neg, &pair.cal_pos, &main, self.options.prune_tol),
        }
    }

    pub fn evaluate(&self, theta: &ParamPoint) -> Result<LevelSummary> {
        self.design.check_theta(theta)?;
        let pair = self.calibration(theta.p, theta.q);
        Ok(self.evaluate_with(&pair, theta.k))
    }
}

/// `nu(z)`: number of retained points of `table` with `0 < f <= z`, with
/// values tied to `z` within [`DEFAULT_TIE_TOL`] counted as equal.
pub fn nu_level_count(z: f64, table: &DensityTable) -> u64 {
    if z <= 0.0 {
        return 0;
    }
    let pair = CalibrationPair::build(
        table.cal_neg.clone(),
        table.cal_pos.clone(),
        table.theta.p,
        table.theta.q,
        None,
    );
    pair.level_set(&table.main, z * DEFAULT_TIE_TOL.exp()).0
}

/// Basic evidence `f(s_obs | theta) * nu(f(s_obs | theta))` with default pruning.
pub fn basic_evidence(s_obs: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> Result<f64> {
    Ok(EvidenceEngine::new(*design, *s_obs, EvidenceOptions::default())?
        .evaluate(theta)?
        .basic())
}

/// Alternative evidence: probability of sample points no more likely than `s_obs`.
pub fn alt_evidence(s_obs: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> Result<f64> {
    Ok(EvidenceEngine::new(*design, *s_obs, EvidenceOptions::default())?
        .evaluate(theta)?
        .alt())
}

/// Largest probability mass sharing one density level under `theta`; bounds how
/// far the alternative construction can be from exact.
pub fn epsilon_bound(theta: &ParamPoint, design: &StudyDesign) -> Result<f64> {
    let table = crate::model::density_table(theta, design, DEFAULT_PRUNE_TOL)?;
    Ok(max_tied_mass(&table.values(), DEFAULT_TIE_TOL))
}

// ---------------------------------------------------------------------------
// grids

/// Inclusive arithmetic range `min:max:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || !min.is_finite() || !max.is_finite() || max < min {
            return Err(domain(format!("invalid axis range {min}:{max}:{step}")));
        }
        Ok(Self { min, max, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

impl FromStr for AxisRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| domain(format!("bad number `{t}` in axis range `{s}`")))
        };
        match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Self::new(v, v, 1.0)
            }
            [a, b, c] => Self::new(num(a)?, num(b)?, num(c)?),
            _ => Err(domain(format!("axis range `{s}` must be `v` or `min:max:step`"))),
        }
    }
}

/// Grid specification in user units; prevalence is converted to infected counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p: AxisRange,
    pub q: AxisRange,
    pub pi: AxisRange,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            p: AxisRange {
                min: 0.0,
                max: 0.05,
                step: 0.0005,
            },
            q: AxisRange {
                min: 0.6,
                max: 1.0,
                step: 0.005,
            },
            pi: AxisRange {
                min: 0.0,
                max: 0.2,
                step: 0.001,
            },
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `p=0:0.05:0.0005,q=0.6:1:0.005,pi=0:0.2:0.001`; omitted axes keep
    /// their defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = GridSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, range) = part
                .split_once('=')
                .ok_or_else(|| domain(format!("grid axis `{part}` must look like name=min:max:step")))?;
            let range: AxisRange = range.parse()?;
            match name.trim() {
                "p" => spec.p = range,
                "q" => spec.q = range,
                "pi" => spec.pi = range,
                other => return Err(domain(format!("unknown grid axis `{other}`"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub k_values: Vec<u32>,
}

impl ParamGrid {
    /// Builds a grid; axes are sorted and deduplicated.
    pub fn new(mut p_values: Vec<f64>, mut q_values: Vec<f64>, mut k_values: Vec<u32>) -> Result<Self> {
        for (name, axis) in [("p", &mut p_values), ("q", &mut q_values)] {
            if axis.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(domain(format!("grid axis {name} has values outside [0, 1]")));
            }
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        k_values.sort_unstable();
        k_values.dedup();
        if p_values.is_empty() || q_values.is_empty() || k_values.is_empty() {
            return Err(domain("parameter grid is empty"));
        }
        Ok(Self {
            p_values,
            q_values,
            k_values,
        })
    }

    /// The default grid: `p` in `0..0.05` step 0.0005, `q` in `0.6..1` step
    /// 0.005 and `k` from 0 to 20% prevalence in steps of `round(0.001 n_main)`.
    pub fn default_for(design: &StudyDesign) -> Self {
        let spec = GridSpec::default();
        let n = design.n_main;
        let step = ((0.001 * n as f64).round() as u32).max(1);
        let k_max = (spec.pi.max * n as f64).round() as u32;
        Self {
            p_values: spec.p.values(),
            q_values: spec.q.values(),
            k_values: (0..=k_max.min(n)).step_by(step as usize).collect(),
        }
    }

    pub fn from_spec(spec: &GridSpec, design: &StudyDesign) -> Result<Self> {
        let n = design.n_main as f64;
        let pis = spec.pi.values();
        if pis.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(domain("grid axis pi has values outside [0, 1]"));
        }
        let ks = pis.iter().map(|pi| (pi * n).round() as u32).collect();
        Self::new(spec.p.values(), spec.q.values(), ks)
    }

    pub fn len(&self) -> usize {
        self.p_values.len() * self.q_values.len() * self.k_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis indices of the record at canonical position `idx`.
    pub fn indices(&self, idx: usize) -> (usize, usize, usize) {
        let nk = self.k_values.len();
        let nq = self.q_values.len();
        (idx / (nq * nk), (idx / nk) % nq, idx % nk)
    }

    pub fn point(&self, idx: usize) -> ParamPoint {
        let (i, j, l) = self.indices(idx);
        ParamPoint {
            p: self.p_values[i],
            q: self.q_values[j],
            k: self.k_values[l],
        }
    }

    pub fn points(&self) -> impl Iterator<Item = ParamPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn check_design(&self, design: &StudyDesign) -> Result<()> {
        match self.k_values.last() {
            Some(&k) if k > design.n_main => Err(domain(format!(
                "grid infected count {k} exceeds n_main = {}",
                design.n_main
            ))),
            _ => Ok(()),
        }
    }

    fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::P => self.p_values.len(),
            Axis::Q => self.q_values.len(),
            Axis::Pi => self.k_values.len(),
        }
    }

    fn axis_value(&self, axis: Axis, i: usize, n_main: u32) -> f64 {
        match axis {
            Axis::P => self.p_values[i],
            Axis::Q => self.q_values[i],
            Axis::Pi => self.k_values[i] as f64 / n_main as f64,
        }
    }
}

// ---------------------------------------------------------------------------
// scanning

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEvidence {
    pub theta: ParamPoint,
    pub evidence_basic: Option<f64>,
    pub evidence_alt: Option<f64>,
    pub in_basic: bool,
    pub in_alt: bool,
    pub mass_deficit: f64,
}

impl PointEvidence {
    fn from_summary(theta: ParamPoint, summary: &LevelSummary, alpha: f64, method: Method) -> Self {
        let basic = method.includes_basic().then(|| summary.basic());
        let alt = method.includes_alt().then(|| summary.alt());
        Self {
            theta,
            evidence_basic: basic,
            evidence_alt: alt,
            in_basic: basic.is_some_and(|e| e > alpha),
            in_alt: alt.is_some_and(|e| e > alpha),
            mass_deficit: summary.mass_deficit,
        }
    }

    pub fn accepted(&self, method: Method) -> bool {
        match method {
            Method::Basic => self.in_basic,
            Method::Alt => self.in_alt,
            Method::Both => self.in_basic && self.in_alt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub dataset: String,
    pub design: StudyDesign,
    pub observed: PositiveCounts,
    pub alpha: f64,
    pub method: Method,
    pub prune_tol: f64,
    pub grid: ParamGrid,
    pub records: Vec<PointEvidence>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub alpha: f64,
    pub method: Method,
    pub workers: usize,
    pub evidence: EvidenceOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            method: Method::Both,
            workers: 1,
            evidence: EvidenceOptions::default(),
        }
    }
}

pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Evaluates every grid point with default pruning.
pub fn scan_grid(
    grid: &ParamGrid,
    dataset: &Dataset,
    alpha: f64,
    method: Method,
    workers: usize,
) -> Result<ConfidenceSet> {
    let options = ScanOptions {
        alpha,
        method,
        workers,
        ..ScanOptions::default()
    };
    scan_grid_with(grid, dataset, &options, None)
}

/// Evaluates every grid point in parallel. Records come back in canonical
/// `(p, q, k)` order whatever the worker count.
pub fn scan_grid_with(
    grid: &ParamGrid,
    dataset: &Dataset,
    options: &ScanOptions,
    progress: Option<Progress<'_>>,
) -> Result<ConfidenceSet> {
    if grid.is_empty() {
        return Err(domain("parameter grid is empty"));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(domain(format!("alpha = {} outside (0, 1)", options.alpha)));
    }
    grid.check_design(&dataset.design)?;
    let engine = EvidenceEngine::for_dataset(dataset, options.evidence)?;
    let pairs: Vec<(f64, f64)> = grid
        .p_values
        .iter()
        .flat_map(|&p| grid.q_values.iter().map(move |&q| (p, q)))
        .collect();
    let done = AtomicUsize::new(0);
    let total = grid.len();
    let run = || {
        pairs
            .par_iter()
            .map(|&(p, q)| {
                let pair = engine.calibration(p, q);
                let block: Vec<PointEvidence> = grid
                    .k_values
                    .iter()
                    .map(|&k| {
                        let summary = engine.evaluate_with(&pair, k);
                        PointEvidence::from_summary(ParamPoint { p, q, k }, &summary, options.alpha, options.method)
                    })
                    .collect();
                if let Some(report) = progress {
                    let n = done.fetch_add(block.len(), Ordering::Relaxed) + block.len();
                    report(n, total);
                }
                block
            })
            .collect::<Vec<_>>()
    };
    let blocks = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| domain(format!("cannot start worker pool: {e}")))?
        .install(run);
    Ok(ConfidenceSet {
        dataset: dataset.label.clone(),
        design: dataset.design,
        observed: dataset.observed,
        alpha: options.alpha,
        method: options.method,
        prune_tol: options.evidence.prune_tol,
        grid: grid.clone(),
        records: blocks.into_iter().flatten().collect(),
    })
}

// ---------------------------------------------------------------------------
// projection

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

/// Fixed values for the axes not being projected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub pi: Option<f64>,
}

impl FromStr for Condition {
    type Err = Error;

    /// Parses `p=0.005,q=0.9`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cond = Condition::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| domain(format!("condition `{part}` must look like axis=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| domain(format!("bad condition value in `{part}`")))?;
            match name.trim() {
                "p" => cond.p = Some(value),
                "q" => cond.q = Some(value),
                "pi" => cond.pi = Some(value),
                other => return Err(domain(format!("unknown condition axis `{other}`"))),
            }
        }
        Ok(cond)
    }
}

const VALUE_MATCH_TOL: f64 = 1e-9;

fn match_value(values: &[f64], v: f64, axis: &str) -> Result<usize> {
    values
        .iter()
        .position(|x| (x - v).abs() <= VALUE_MATCH_TOL)
        .ok_or_else(|| domain(format!("condition {axis} = {v} is not a grid value")))
}

fn resolve_condition(grid: &ParamGrid, n_main: u32, cond: &Condition) -> Result<[Option<usize>; 3]> {
    let p = cond.p.map(|v| match_value(&grid.p_values, v, "p")).transpose()?;
    let q = cond.q.map(|v| match_value(&grid.q_values, v, "q")).transpose()?;
    let k = cond
        .pi
        .map(|pi| {
            let n = n_main as f64;
            let k = (pi * n).round();
            if (pi - k / n).abs() > 0.5 / n + VALUE_MATCH_TOL {
                return Err(domain(format!("condition pi = {pi} is not a grid value")));
            }
            grid.k_values
                .iter()
                .position(|&x| x as f64 == k)
                .ok_or_else(|| domain(format!("condition pi = {pi} is not a grid value")))
        })
        .transpose()?;
    Ok([p, q, k])
}

/// Projects per-record membership flags (canonical grid order) onto one axis.
pub fn project_flags(
    grid: &ParamGrid,
    n_main: u32,
    flags: &[bool],
    axis: Axis,
    condition: &Condition,
) -> Result<Vec<Interval>> {
    if flags.len() != grid.len() {
        return Err(domain("membership flags do not match the grid"));
    }
    let fixed = resolve_condition(grid, n_main, condition)?;
    let mut hit = vec![false; grid.axis_len(axis)];
    for (idx, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
        let (i, j, l) = grid.indices(idx);
        let at = [i, j, l];
        if fixed.iter().zip(at).any(|(f, a)| f.is_some_and(|f| f != a)) {
            continue;
        }
        let a = match axis {
            Axis::P => i,
            Axis::Q => j,
            Axis::Pi => l,
        };
        hit[a] = true;
    }
    let mut intervals = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for (i, &h) in hit.iter().enumerate() {
        run = match (run, h) {
            (None, true) => Some((i, i)),
            (Some((s, _)), true) => Some((s, i)),
            (Some((s, e)), false) => {
                intervals.push((s, e));
                None
            }
            (None, false) => None,
        };
    }
    intervals.extend(run);
    Ok(intervals
        .into_iter()
        .map(|(s, e)| Interval {
            lo: grid.axis_value(axis, s, n_main),
            hi: grid.axis_value(axis, e, n_main),
        })
        .collect())
}

impl ConfidenceSet {
    pub fn flags(&self, method: Method) -> Vec<bool> {
        self.records.iter().map(|r| r.accepted(method)).collect()
    }

    pub fn member_count(&self, method: Method) -> usize {
        self.records.iter().filter(|r| r.accepted(method)).count()
    }

    pub fn max_mass_deficit(&self) -> f64 {
        self.records.iter().map(|r| r.mass_deficit).fold(0.0, f64::max)
    }

    pub fn record(&self, theta: &ParamPoint) -> Option<&PointEvidence> {
        self.records.iter().find(|r| {
            r.theta.k == theta.k
                && (r.theta.p - theta.p).abs() <= VALUE_MATCH_TOL
                && (r.theta.q - theta.q).abs() <= VALUE_MATCH_TOL
        })
    }
}

/// Minimal closed intervals covering the accepted values along `axis`, after
/// slicing at the conditioning values. Non-contiguous membership gives several
/// intervals.
pub fn project_interval(
    set: &ConfidenceSet,
    axis: Axis,
    condition: &Condition,
    method: Method,
) -> Result<Vec<Interval>> {
    if method == Method::Both {
        return Err(domain("projection needs a single method (basic or alt)"));
    }
    let computed = match method {
        Method::Basic => set.method.includes_basic(),
        _ => set.method.includes_alt(),
    };
    if !computed {
        return Err(domain(format!(
            "confidence set was scanned without the {method} method"
        )));
    }
    project_flags(&set.grid, set.design.n_main, &set.flags(method), axis, condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{density_table, joint_density};

    fn tiny() -> (StudyDesign, PositiveCounts) {
        (StudyDesign::new(3, 4, 6).unwrap(), PositiveCounts::new(1, 3, 2))
    }

    /// Evidence by explicit enumeration of the full sample space.
    fn enumerate(design: &StudyDesign, s_obs: &PositiveCounts, theta: &ParamPoint) -> (f64, f64) {
        let z = joint_density(s_obs, theta, design).unwrap();
        let mut values = Vec::new();
        for a in 0..=design.n_cal_neg {
            for b in 0..=design.n_cal_pos {
                for c in 0..=design.n_main {
                    values.push(joint_density(&PositiveCounts::new(a, b, c), theta, design).unwrap());
                }
            }
        }
        let (nu, mass) = level_set_of(&values, z, DEFAULT_TIE_TOL);
        (z * nu as f64, mass)
    }

    #[test]
    fn engine_matches_enumeration_on_tiny_design() {
        let (d, s) = tiny();
        let engine = EvidenceEngine::new(d, s, EvidenceOptions::default()).unwrap();
        for (p, q, k) in [(0.1, 0.8, 2), (0.3, 0.6, 0), (0.05, 0.95, 6), (0.4, 0.4, 3)] {
            let theta = ParamPoint::new(p, q, k).unwrap();
            let got = engine.evaluate(&theta).unwrap();
            let (basic, alt) = enumerate(&d, &s, &theta);
            assert!((got.basic() - basic).abs() < 1e-12 * basic.max(1.0), "{theta:?}");
            assert!((got.alt() - alt.min(basic)).abs() < 1e-12, "{theta:?}");
        }
    }

    #[test]
    fn nu_edges() {
        let (d, _) = tiny();
        let table = density_table(&ParamPoint::new(0.2, 0.7, 3).unwrap(), &d, DEFAULT_PRUNE_TOL).unwrap();
        assert_eq!(nu_level_count(0.0, &table), 0);
        assert_eq!(nu_level_count(1.0, &table), table.len() as u64);
        let mut last = 0;
        for z in [1e-6, 1e-4, 1e-3, 1e-2, 0.05] {
            let n = nu_level_count(z, &table);
            assert!(n >= last);
            last = n;
        }
    }

    #[test]
    fn impossible_observation_has_zero_evidence() {
        let d = StudyDesign::new(401, 197, 3330).unwrap();
        let s = PositiveCounts::new(2, 178, 50);
        let theta = ParamPoint::new(0.0, 1.0, 0).unwrap();
        assert_eq!(basic_evidence(&s, &theta, &d).unwrap(), 0.0);
        assert_eq!(alt_evidence(&s, &theta, &d).unwrap(), 0.0);
    }

    #[test]
    fn mode_has_full_alt_evidence() {
        let values = [0.5, 0.2, 0.2, 0.1];
        let (_, mass) = level_set_of(&values, 0.5, DEFAULT_TIE_TOL);
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tied_mass() {
        assert!((max_tied_mass(&[0.25; 4], DEFAULT_TIE_TOL) - 1.0).abs() < 1e-15);
        assert!((max_tied_mass(&[0.5, 0.5], DEFAULT_TIE_TOL) - 1.0).abs() < 1e-15);
        assert!((max_tied_mass(&[0.6, 0.3, 0.1], DEFAULT_TIE_TOL) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn grid_spec_parsing() {
        let spec: GridSpec = "p=0:0.05:0.0005,q=0.6:1:0.005,pi=0:0.2:0.001".parse().unwrap();
        assert_eq!(spec.p.values().len(), 101);
        assert_eq!(spec.q.values().len(), 81);
        assert_eq!(*spec.q.values().last().unwrap(), 1.0);
        assert!("p=0:0.05".parse::<GridSpec>().is_err());
        assert!("r=0:1:0.1".parse::<GridSpec>().is_err());
        assert!("p=0:0.05:0".parse::<GridSpec>().is_err());
        let d = StudyDesign::new(401, 197, 3330).unwrap();
        let grid = ParamGrid::from_spec(&"pi=0:0.01:0.001".parse().unwrap(), &d).unwrap();
        assert_eq!(grid.k_values, vec![0, 3, 7, 10, 13, 17, 20, 23, 27, 30, 33]);
    }

    #[test]
    fn default_grid_shape() {
        let d = StudyDesign::new(401, 197, 3330).unwrap();
        let grid = ParamGrid::default_for(&d);
        assert_eq!(grid.p_values.len(), 101);
        assert_eq!(grid.q_values.len(), 81);
        assert_eq!(grid.k_values[1], 3);
        assert!(*grid.k_values.last().unwrap() <= 666);
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(ParamGrid::new(vec![], vec![0.9], vec![1]).is_err());
        assert!(ParamGrid::new(vec![1.2], vec![0.9], vec![1]).is_err());
    }

    #[test]
    fn projection_reports_gaps_and_conditions() {
        let grid = ParamGrid::new(vec![0.1, 0.2], vec![0.9], vec![0, 1, 2, 3, 4]).unwrap();
        // p = 0.1: members at k = 0, 1, 3; p = 0.2: member at k = 4
        let flags = vec![true, true, false, true, false, false, false, false, false, true];
        let all = project_flags(&grid, 10, &flags, Axis::Pi, &Condition::default()).unwrap();
        assert_eq!(all, vec![Interval { lo: 0.0, hi: 0.1 }, Interval { lo: 0.3, hi: 0.4 }]);
        let sliced = project_flags(
            &grid,
            10,
            &flags,
            Axis::Pi,
            &Condition {
                p: Some(0.2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(sliced, vec![Interval { lo: 0.4, hi: 0.4 }]);
        let off_grid = Condition {
            p: Some(0.15),
            ..Default::default()
        };
        assert!(project_flags(&grid, 10, &flags, Axis::Pi, &off_grid).is_err());
        let off_pi = Condition {
            pi: Some(0.55),
            ..Default::default()
        };
        assert!(project_flags(&grid, 10, &flags, Axis::P, &off_pi).is_err());
    }

    #[test]
    fn condition_parsing() {
        let c: Condition = "p=0.005, q=0.9".parse().unwrap();
        assert_eq!(c.p, Some(0.005));
        assert_eq!(c.q, Some(0.9));
        assert!("x=1".parse::<Condition>().is_err());
    }
}
