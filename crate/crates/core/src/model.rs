//! Study designs, parameter points and the exact joint density of the three
//! positive counts.
//!
//! The joint statistic is `S = (S_cal_neg, S_cal_pos, S_main)` with
//!
//! ```text
//! S_cal_neg ~ Binom(n_cal_neg, p)
//! S_cal_pos ~ Binom(n_cal_pos, q)
//! S_main    ~ Binom(k, q) + Binom(n_main - k, p)
//! ```
//!
//! where `k` is the number of infected participants in the main study. All
//! probabilities are computed in natural-log space and exponentiated only at
//! the end.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, invalid, Result};
use crate::rng;

/// Default per-factor log-probability cutoff used when pruning the sample space.
pub const DEFAULT_PRUNE_TOL: f64 = -100.0;

/// Extra log-margin applied to the two convolution components of the main
/// factor, so the convolved values near the cutoff are accurate.
const COMPONENT_MARGIN: f64 = 36.84; // ~ ln(1e16)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StudyDesign {
    pub n_cal_neg: u32,
    pub n_cal_pos: u32,
    pub n_main: u32,
}

impl StudyDesign {
    pub fn new(n_cal_neg: u32, n_cal_pos: u32, n_main: u32) -> Result<Self> {
        let design = Self {
            n_cal_neg,
            n_cal_pos,
            n_main,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_main == 0 {
            return Err(invalid("n_main", "main study must have at least one participant"));
        }
        Ok(())
    }

    /// Number of points in the full sample space.
    pub fn sample_space_size(&self) -> u64 {
        (self.n_cal_neg as u64 + 1) * (self.n_cal_pos as u64 + 1) * (self.n_main as u64 + 1)
    }

    pub fn check_counts(&self, s: &PositiveCounts) -> Result<()> {
        if s.s_cal_neg > self.n_cal_neg {
            return Err(invalid(
                "s_cal_neg",
                format!("{} exceeds n_cal_neg = {}", s.s_cal_neg, self.n_cal_neg),
            ));
        }
        if s.s_cal_pos > self.n_cal_pos {
            return Err(invalid(
                "s_cal_pos",
                format!("{} exceeds n_cal_pos = {}", s.s_cal_pos, self.n_cal_pos),
            ));
        }
        if s.s_main > self.n_main {
            return Err(invalid(
                "s_main",
                format!("{} exceeds n_main = {}", s.s_main, self.n_main),
            ));
        }
        Ok(())
    }

    pub fn check_theta(&self, theta: &ParamPoint) -> Result<()> {
        theta.validate()?;
        if theta.k > self.n_main {
            return Err(domain(format!(
                "infected count k = {} exceeds n_main = {}",
                theta.k, self.n_main
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PositiveCounts {
    pub s_cal_neg: u32,
    pub s_cal_pos: u32,
    pub s_main: u32,
}

impl PositiveCounts {
    pub fn new(s_cal_neg: u32, s_cal_pos: u32, s_main: u32) -> Self {
        Self {
            s_cal_neg,
            s_cal_pos,
            s_main,
        }
    }
}

/// A parameter triple. Prevalence is carried as the integer number of infected
/// main-study participants; `pi = k / n_main` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    /// False positive rate.
    pub p: f64,
    /// True positive rate.
    pub q: f64,
    /// Infected count in the main study.
    pub k: u32,
}

impl ParamPoint {
    pub fn new(p: f64, q: f64, k: u32) -> Result<Self> {
        let theta = Self { p, q, k };
        theta.validate()?;
        Ok(theta)
    }

    /// Maps a real prevalence onto the nearest infected count, `k = round(pi * n_main)`.
    pub fn from_prevalence(p: f64, q: f64, pi: f64, design: &StudyDesign) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(domain(format!("prevalence {pi} outside [0, 1]")));
        }
        let k = (pi * design.n_main as f64).round() as u32;
        Self::new(p, q, k.min(design.n_main))
    }

    pub fn prevalence(&self, design: &StudyDesign) -> f64 {
        self.k as f64 / design.n_main as f64
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(domain(format!("false positive rate p = {} outside [0, 1]", self.p)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(domain(format!("true positive rate q = {} outside [0, 1]", self.q)));
        }
        Ok(())
    }
}

/// A labelled study: design plus observed positive counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub label: String,
    pub design: StudyDesign,
    pub observed: PositiveCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl Dataset {
    pub fn new(label: impl Into<String>, design: StudyDesign, observed: PositiveCounts) -> Result<Self> {
        let dataset = Self {
            label: label.into(),
            design,
            observed,
            notes: None,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = Some(notes.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.design.check_counts(&self.observed)
    }
}

// ---------------------------------------------------------------------------
// log-space binomial kernel

const LN_FACTORIAL_TABLE: usize = 1 << 15;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..LN_FACTORIAL_TABLE)
            .map(|n| if n < 2 { 0.0 } else { ln_gamma(n as f64 + 1.0) })
            .collect()
    })
}

/// `ln(n!)`, tabulated for small `n`.
pub fn ln_factorial(n: u32) -> f64 {
    let table = ln_factorial_table();
    match table.get(n as usize) {
        Some(v) => *v,
        None => ln_gamma(n as f64 + 1.0),
    }
}

#[inline]
fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial log-pmf with the logs of the success and failure probabilities
/// precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogBinomial {
    pub n: u32,
    ln_s: f64,
    ln_1ms: f64,
    s: f64,
}

impl LogBinomial {
    pub fn new(n: u32, s: f64) -> Self {
        Self {
            n,
            ln_s: s.ln(),
            ln_1ms: (-s).ln_1p(),
            s,
        }
    }

    #[inline]
    pub fn ln_pmf(&self, k: u32) -> f64 {
        if k > self.n {
            return f64::NEG_INFINITY;
        }
        if self.s == 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if self.s == 1.0 {
            return if k == self.n { 0.0 } else { f64::NEG_INFINITY };
        }
        ln_choose(self.n, k) + k as f64 * self.ln_s + (self.n - k) as f64 * self.ln_1ms
    }

    pub fn mode(&self) -> u32 {
        (((self.n as f64 + 1.0) * self.s).floor() as u32).min(self.n)
    }
}

/// `ln d(k; n, s)`, the log-probability of `k` successes in `n` trials.
///
/// Degenerate success probabilities give exact masses: `s = 0` puts all mass on
/// `k = 0` and `s = 1` on `k = n`. Impossible outcomes return negative infinity.
pub fn binom_log_pmf(k: u32, n: u32, s: f64) -> Result<f64> {
    if k > n {
        return Err(domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(domain(format!("success probability {s} outside [0, 1]")));
    }
    Ok(LogBinomial::new(n, s).ln_pmf(k))
}

/// Natural log of `sum_i exp(x_i)` over the given log-terms.
pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log-probability of `s_main` main-study positives.
///
/// Sums `d(j; k, q) * d(s_main - j; n_main - k, p)` over the feasible range of
/// true positives `j`. With `prune = Some(tol)`, terms whose log falls more than
/// `|tol|` below the largest term are skipped, which bounds the relative error
/// by `(min(s_main, k) + 1) * exp(tol)`.
pub fn log_main_pmf(s_main: u32, theta: &ParamPoint, design: &StudyDesign, prune: Option<f64>) -> Result<f64> {
    design.check_theta(theta)?;
    if s_main > design.n_main {
        return Err(domain(format!("s_main = {s_main} exceeds n_main = {}", design.n_main)));
    }
    Ok(log_main_pmf_unchecked(s_main, theta, design.n_main, prune))
}

pub(crate) fn log_main_pmf_unchecked(s_main: u32, theta: &ParamPoint, n_main: u32, prune: Option<f64>) -> f64 {
    let infected = LogBinomial::new(theta.k, theta.q);
    let healthy = LogBinomial::new(n_main - theta.k, theta.p);
    let lo = s_main.saturating_sub(n_main - theta.k);
    let hi = s_main.min(theta.k);
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (lo..=hi)
        .map(|j| infected.ln_pmf(j) + healthy.ln_pmf(s_main - j))
        .collect();
    match prune {
        None => log_sum_exp(&terms),
        Some(tol) => {
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return max;
            }
            let cut = max + tol;
            let sum: f64 = terms.iter().filter(|&&t| t >= cut).map(|t| (t - max).exp()).sum();
            max + sum.ln()
        }
    }
}

/// Probability of `s_main` positives in the main study under `theta`.
pub fn main_pmf(s_main: u32, theta: &ParamPoint, design: &StudyDesign) -> Result<f64> {
    Ok(log_main_pmf(s_main, theta, design, None)?.exp())
}

/// `ln f(s | theta)`, optionally with relative pruning of the main-study
/// convolution.
pub fn log_joint_density(
    s: &PositiveCounts,
    theta: &ParamPoint,
    design: &StudyDesign,
    prune: Option<f64>,
) -> Result<f64> {
    design.check_theta(theta)?;
    design.check_counts(s)?;
    Ok(log_joint_unchecked(s, theta, design, prune))
}

pub(crate) fn log_joint_unchecked(
    s: &PositiveCounts,
    theta: &ParamPoint,
    design: &StudyDesign,
    prune: Option<f64>,
) -> f64 {
    let neg = LogBinomial::new(design.n_cal_neg, theta.p).ln_pmf(s.s_cal_neg);
    let pos = LogBinomial::new(design.n_cal_pos, theta.q).ln_pmf(s.s_cal_pos);
    if neg == f64::NEG_INFINITY || pos == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    neg + pos + log_main_pmf_unchecked(s.s_main, theta, design.n_main, prune)
}

/// The joint density `f(s | theta)`.
pub fn joint_density(s: &PositiveCounts, theta: &ParamPoint, design: &StudyDesign) -> Result<f64> {
    Ok(log_joint_density(s, theta, design, None)?.exp())
}

// ---------------------------------------------------------------------------
// pruned factor windows

/// Contiguous run of pmf values `values[i] = P(X = start + i)`, in linear space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: u32,
    pub values: Vec<f64>,
    /// Number of support points outside the window.
    pub dropped: u64,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> u32 {
        self.start + self.values.len() as u32
    }

    pub fn get(&self, x: u32) -> Option<f64> {
        if x < self.start {
            return None;
        }
        self.values.get((x - self.start) as usize).copied()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    fn point_mass(at: u32, support: u32) -> Self {
        Self {
            start: at,
            values: vec![1.0],
            dropped: support as u64,
        }
    }
}

/// Window of `Binom(n, s)` where the log-pmf exceeds `log_tol`. The mode is
/// always retained.
pub fn binomial_window(n: u32, s: f64, log_tol: f64) -> Window {
    if s == 0.0 {
        return Window::point_mass(0, n);
    }
    if s == 1.0 {
        return Window::point_mass(n, n);
    }
    let dist = LogBinomial::new(n, s);
    let mode = dist.mode();
    let mut lo = mode;
    while lo > 0 && dist.ln_pmf(lo - 1) > log_tol {
        lo -= 1;
    }
    let mut hi = mode;
    while hi < n && dist.ln_pmf(hi + 1) > log_tol {
        hi += 1;
    }
    Window {
        start: lo,
        values: (lo..=hi).map(|x| dist.ln_pmf(x).exp()).collect(),
        dropped: n as u64 + 1 - (hi - lo + 1) as u64,
    }
}

/// Pruned pmf of `S_main`: the convolution of the two component windows,
/// trimmed to entries above `exp(log_tol)`.
pub fn main_window(theta: &ParamPoint, n_main: u32, log_tol: f64) -> Window {
    let component_tol = log_tol - COMPONENT_MARGIN;
    let infected = binomial_window(theta.k, theta.q, component_tol);
    let healthy = binomial_window(n_main - theta.k, theta.p, component_tol);
    let mut conv = vec![0.0; infected.len() + healthy.len() - 1];
    for (i, a) in infected.values.iter().enumerate() {
        for (j, b) in healthy.values.iter().enumerate() {
            conv[i + j] += a * b;
        }
    }
    let cut = log_tol.exp();
    let peak = conv
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > conv[best] { i } else { best });
    let mut lo = peak;
    while lo > 0 && conv[lo - 1] > cut {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < conv.len() && conv[hi + 1] > cut {
        hi += 1;
    }
    let start = infected.start + healthy.start + lo as u32;
    let kept = (hi - lo + 1) as u64;
    Window {
        start,
        values: conv[lo..=hi].to_vec(),
        dropped: n_main as u64 + 1 - kept,
    }
}

/// The pruned joint density of `S` under a fixed parameter, stored in product
/// form: every retained point is a triple drawn from the three factor windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub theta: ParamPoint,
    pub design: StudyDesign,
    pub prune_tol: f64,
    pub cal_neg: Window,
    pub cal_pos: Window,
    pub main: Window,
    pub total_mass: f64,
}

impl DensityTable {
    /// Number of retained sample points.
    pub fn len(&self) -> usize {
        self.cal_neg.len() * self.cal_pos.len() * self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fraction of the full sample space kept after pruning.
    pub fn retained_fraction(&self) -> f64 {
        self.len() as f64 / self.design.sample_space_size() as f64
    }

    pub fn get(&self, s: &PositiveCounts) -> Option<f64> {
        Some(self.cal_neg.get(s.s_cal_neg)? * self.cal_pos.get(s.s_cal_pos)? * self.main.get(s.s_main)?)
    }

    /// Certified upper bound on `1 - total_mass`: every dropped point of a
    /// factor has probability at most `exp(prune_tol)`, plus the truncation
    /// of the main-factor components.
    pub fn mass_deficit_bound(&self) -> f64 {
        mass_deficit_bound(&self.cal_neg, &self.cal_pos, &self.main, self.prune_tol)
    }

    pub fn entries(&self) -> impl Iterator<Item = (PositiveCounts, f64)> + '_ {
        self.cal_neg.values.iter().enumerate().flat_map(move |(i, a)| {
            self.cal_pos.values.iter().enumerate().flat_map(move |(j, b)| {
                self.main.values.iter().enumerate().map(move |(m, c)| {
                    (
                        PositiveCounts::new(
                            self.cal_neg.start + i as u32,
                            self.cal_pos.start + j as u32,
                            self.main.start + m as u32,
                        ),
                        a * b * c,
                    )
                })
            })
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries().map(|(_, v)| v).collect()
    }
}

pub(crate) fn mass_deficit_bound(cal_neg: &Window, cal_pos: &Window, main: &Window, prune_tol: f64) -> f64 {
    let cut = prune_tol.exp();
    let component = 2.0 * (main.dropped + main.len() as u64) as f64 * (prune_tol - COMPONENT_MARGIN).exp();
    (cal_neg.dropped + cal_pos.dropped + main.dropped) as f64 * cut + component
}

pub fn density_table(theta: &ParamPoint, design: &StudyDesign, prune_tol: f64) -> Result<DensityTable> {
    design.check_theta(theta)?;
    let cal_neg = binomial_window(design.n_cal_neg, theta.p, prune_tol);
    let cal_pos = binomial_window(design.n_cal_pos, theta.q, prune_tol);
    let main = main_window(theta, design.n_main, prune_tol);
    let total_mass = cal_neg.mass() * cal_pos.mass() * main.mass();
    Ok(DensityTable {
        theta: *theta,
        design: *design,
        prune_tol,
        cal_neg,
        cal_pos,
        main,
        total_mass,
    })
}

// ---------------------------------------------------------------------------
// simulation

pub(crate) fn simulate_with<R: Rng + ?Sized>(theta: &ParamPoint, design: &StudyDesign, rng: &mut R) -> PositiveCounts {
    let mut draw = |n: u32, s: f64| -> u32 {
        if n == 0 {
            return 0;
        }
        Binomial::new(n as u64, s)
            .expect("success probability checked on construction")
            .sample(rng) as u32
    };
    let s_cal_neg = draw(design.n_cal_neg, theta.p);
    let s_cal_pos = draw(design.n_cal_pos, theta.q);
    let true_pos = draw(theta.k, theta.q);
    let false_pos = draw(design.n_main - theta.k, theta.p);
    PositiveCounts::new(s_cal_neg, s_cal_pos, true_pos + false_pos)
}

/// Draws one study outcome under `theta`. The same `(seed, theta, design)`
/// always gives the same counts.
pub fn simulate_study(theta: &ParamPoint, design: &StudyDesign, seed: u64) -> Result<PositiveCounts> {
    design.check_theta(theta)?;
    let mut stream = rng::stream(seed, rng::Purpose::Simulate, 0);
    Ok(simulate_with(theta, design, &mut stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn santa_clara() -> StudyDesign {
        StudyDesign::new(401, 197, 3330).unwrap()
    }

    #[test]
    fn degenerate_binomials() {
        assert_eq!(binom_log_pmf(0, 401, 0.0).unwrap(), 0.0);
        assert_eq!(binom_log_pmf(401, 401, 1.0).unwrap(), 0.0);
        assert_eq!(binom_log_pmf(3, 401, 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(binom_log_pmf(400, 401, 1.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(binom_log_pmf(0, 0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn binom_domain_errors() {
        assert!(binom_log_pmf(5, 4, 0.5).is_err());
        assert!(binom_log_pmf(1, 4, 1.5).is_err());
        assert!(binom_log_pmf(1, 4, -0.1).is_err());
    }

    #[test]
    fn ln_factorial_beyond_table() {
        let n = LN_FACTORIAL_TABLE as u32 + 10;
        assert_relative_eq!(ln_factorial(n), ln_gamma(n as f64 + 1.0), max_relative = 1e-14);
        assert_relative_eq!(ln_factorial(10), 3628800f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn main_pmf_collapses_without_infections() {
        let d = santa_clara();
        let theta = ParamPoint::new(0.015, 0.80, 0).unwrap();
        let direct = binom_log_pmf(50, 3330, 0.015).unwrap().exp();
        assert_relative_eq!(main_pmf(50, &theta, &d).unwrap(), direct, max_relative = 1e-13);
    }

    #[test]
    fn main_pmf_rejects_bad_k() {
        let d = StudyDesign::new(1, 1, 10).unwrap();
        let theta = ParamPoint { p: 0.1, q: 0.9, k: 11 };
        assert!(main_pmf(3, &theta, &d).is_err());
    }

    #[test]
    fn empty_calibration_arms_contribute_one() {
        let d = StudyDesign::new(0, 0, 20).unwrap();
        let theta = ParamPoint::new(0.1, 0.7, 4).unwrap();
        let s = PositiveCounts::new(0, 0, 5);
        assert_relative_eq!(
            joint_density(&s, &theta, &d).unwrap(),
            main_pmf(5, &theta, &d).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn equal_rates_make_k_unidentified() {
        let d = StudyDesign::new(30, 20, 60).unwrap();
        let plain = binom_log_pmf(9, 60, 0.2).unwrap().exp();
        for k in [0, 7, 31, 60] {
            let theta = ParamPoint::new(0.2, 0.2, k).unwrap();
            assert_relative_eq!(main_pmf(9, &theta, &d).unwrap(), plain, max_relative = 1e-12);
        }
    }

    #[test]
    fn tiny_design_table_is_complete() {
        let d = StudyDesign::new(2, 2, 3).unwrap();
        let theta = ParamPoint::new(0.3, 0.6, 1).unwrap();
        let table = density_table(&theta, &d, DEFAULT_PRUNE_TOL).unwrap();
        assert!(table.len() <= 36);
        assert!((table.total_mass - 1.0).abs() < 1e-12);
        for (s, v) in table.entries() {
            assert_relative_eq!(v, joint_density(&s, &theta, &d).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn window_bounds_at_degenerate_rates() {
        let w = binomial_window(10, 1.0, -30.0);
        assert_eq!(w.start, 10);
        assert_eq!(w.values, vec![1.0]);
        assert_eq!(w.dropped, 10);
    }

    #[test]
    fn prevalence_rounds_to_nearest_count() {
        let d = santa_clara();
        let theta = ParamPoint::from_prevalence(0.005, 0.9, 0.012, &d).unwrap();
        assert_eq!(theta.k, 40);
        assert!(ParamPoint::from_prevalence(0.005, 0.9, 1.2, &d).is_err());
    }

    #[test]
    fn simulate_deterministic_extremes() {
        let d = StudyDesign::new(17, 23, 40).unwrap();
        let theta = ParamPoint::new(0.0, 1.0, 40).unwrap();
        for seed in 0..5 {
            assert_eq!(
                simulate_study(&theta, &d, seed).unwrap(),
                PositiveCounts::new(0, 23, 40)
            );
        }
    }

    #[test]
    fn design_requires_main_participants() {
        assert!(StudyDesign::new(10, 10, 0).is_err());
        assert!(StudyDesign::new(0, 0, 1).is_ok());
    }
}
