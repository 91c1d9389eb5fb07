//! Simulated likelihood-ratio test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::mle::{mle_counts, DEFAULT_STARTS};
use crate::error::{domain, Error, Result};
use crate::model::{log_joint_density, simulate_with, Dataset, ParamPoint, PositiveCounts, StudyDesign};
use crate::rng::{child_seed, stream, Purpose};

/// Which side of the observed statistic counts toward the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LrtTail {
    /// Fraction of draws with `t >= t_obs`.
    #[default]
    Upper,
    /// Fraction of draws with `t <= t_obs`.
    Conventional,
}

impl std::fmt::Display for LrtTail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LrtTail::Upper => "upper",
            LrtTail::Conventional => "conventional",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LrtOptions {
    pub tail: LrtTail,
    pub alpha: f64,
    pub starts: usize,
}

impl Default for LrtOptions {
    fn default() -> Self {
        Self {
            tail: LrtTail::Upper,
            alpha: 0.05,
            starts: DEFAULT_STARTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub theta: ParamPoint,
    pub t_obs: f64,
    pub pvalue: f64,
    pub reject: bool,
}

/// Relative slack when comparing simulated statistics to the observed one.
const TIE_SLACK: f64 = 1e-9;

/// `f(s | theta) / max f(s | .)`, in `[0, 1]`.
pub fn lrt_statistic(
    s: &PositiveCounts,
    theta: &ParamPoint,
    design: &StudyDesign,
    starts: usize,
    seed: u64,
) -> Result<f64> {
    let num = log_joint_density(s, theta, design, None)?;
    if num == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let best = match mle_counts(design, s, starts, seed) {
        Ok(fit) => fit.log_likelihood,
        Err(Error::Optimization { best_loglik, .. }) => best_loglik,
        Err(e) => return Err(e),
    };
    let den = best.max(num);
    if den == f64::NEG_INFINITY {
        return Err(domain("likelihood-ratio denominator is zero"));
    }
    Ok((num - den).exp().min(1.0))
}

/// P-value of `t_obs` against simulated statistics.
pub fn pvalue_from_draws(t_obs: f64, draws: &[f64], tail: LrtTail) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    let slack = TIE_SLACK * t_obs.abs().max(f64::MIN_POSITIVE);
    let hits = draws
        .iter()
        .filter(|&&t| match tail {
            LrtTail::Upper => t >= t_obs - slack,
            LrtTail::Conventional => t <= t_obs + slack,
        })
        .count();
    hits as f64 / draws.len() as f64
}

/// Simulated statistics for `r` draws from `f(. | theta)`, in draw order.
pub fn simulate_statistics(
    theta: &ParamPoint,
    design: &StudyDesign,
    r: usize,
    starts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..r as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, Purpose::LrtDraws, j);
            let s = simulate_with(theta, design, &mut rng);
            lrt_statistic(&s, theta, design, starts, child_seed(seed, j))
        })
        .collect()
}

pub fn lrt_pvalue(theta: &ParamPoint, dataset: &Dataset, r: usize, seed: u64, opts: &LrtOptions) -> Result<LrtResult> {
    if r == 0 {
        return Err(domain("at least one simulation is required"));
    }
    dataset.design.check_theta(theta)?;
    let t_obs = lrt_statistic(&dataset.observed, theta, &dataset.design, opts.starts, seed)?;
    let draws = simulate_statistics(theta, &dataset.design, r, opts.starts, seed)?;
    let pvalue = pvalue_from_draws(t_obs, &draws, opts.tail);
    Ok(LrtResult {
        theta: *theta,
        t_obs,
        pvalue,
        reject: pvalue <= opts.alpha,
    })
}
