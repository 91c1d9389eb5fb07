//! Multi-start maximum likelihood on the logit scale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::bfgs::{minimize, BfgsOptions};
use crate::baselines::likelihood::Likelihood;
use crate::baselines::logit::{sigmoid, NaturalParams};
use crate::error::{Error, Result};
use crate::model::{Dataset, ParamPoint, PositiveCounts, StudyDesign};
use crate::rng::{stream, Purpose};

pub const DEFAULT_STARTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    /// Optimum with the infected count rounded to an integer.
    pub theta: ParamPoint,
    /// Exact log-likelihood at `theta`.
    pub log_likelihood: f64,
    /// Continuous optimum of the relaxed likelihood.
    pub psi: NaturalParams,
    pub converged_starts: usize,
}

impl MleFit {
    pub fn prevalence(&self, design: &StudyDesign) -> f64 {
        self.theta.prevalence(design)
    }
}

fn moment_start(design: &StudyDesign, s: &PositiveCounts) -> [f64; 3] {
    let rate = |x: u32, n: u32, fallback: f64| if n == 0 { fallback } else { x as f64 / n as f64 };
    let p = rate(s.s_cal_neg, design.n_cal_neg, 0.01).clamp(1e-4, 0.5);
    let q = rate(s.s_cal_pos, design.n_cal_pos, 0.9).clamp(0.5, 1.0 - 1e-4);
    let r = s.s_main as f64 / design.n_main as f64;
    let pi = if q > p {
        ((r - p) / (q - p)).clamp(1e-3, 0.999)
    } else {
        1e-3
    };
    [logit(p), logit(q), logit(pi)]
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn random_start<R: Rng>(rng: &mut R) -> [f64; 3] {
    let p: f64 = rng.random_range(0.0..0.05);
    let q: f64 = rng.random_range(0.6..1.0);
    let pi: f64 = rng.random_range(0.0..0.2);
    [
        logit(p.clamp(1e-4, 1.0 - 1e-4)),
        logit(q.clamp(1e-4, 1.0 - 1e-4)),
        logit(pi.clamp(1e-4, 1.0 - 1e-4)),
    ]
}

/// Maximises the likelihood of `observed` under `design`.
///
/// The first start is the method-of-moments point, the rest are uniform on
/// `[0, 0.05] x [0.6, 1] x [0, 0.2]`.
pub fn mle_counts(design: &StudyDesign, observed: &PositiveCounts, starts: usize, seed: u64) -> Result<MleFit> {
    design.check_counts(observed)?;
    let starts = starts.max(1);
    let lik = Likelihood::new(*design, *observed);
    let opts = BfgsOptions::default();
    let mut rng = stream(seed, Purpose::MleStarts, 0);

    let mut best: Option<([f64; 3], f64)> = None;
    let mut best_converged: Option<([f64; 3], f64)> = None;
    let mut converged = 0;
    for i in 0..starts {
        let x0 = if i == 0 {
            moment_start(design, observed)
        } else {
            random_start(&mut rng)
        };
        let r = minimize(
            |x: &[f64; 3]| {
                let (f, g) = lik.relaxed_with_grad(x);
                (-f, g.map(|v| -v))
            },
            x0,
            &opts,
        );
        let ll = -r.f;
        if !ll.is_finite() {
            continue;
        }
        if best.is_none_or(|b| ll > b.1) {
            best = Some((r.x, ll));
        }
        if r.converged {
            converged += 1;
            if best_converged.is_none_or(|b| ll > b.1) {
                best_converged = Some((r.x, ll));
            }
        }
    }
    let Some((psi, _)) = best_converged else {
        let (x, ll) = best.unwrap_or(([f64::NAN; 3], f64::NEG_INFINITY));
        return Err(Error::Optimization {
            starts,
            best_point: x.map(sigmoid),
            best_loglik: ll,
        });
    };

    // Polish (p, q) at the rounded count and its neighbours with the exact
    // integer-k likelihood.
    let n = design.n_main;
    let k0 = (sigmoid(psi[2]) * n as f64).round() as u32;
    let mut fit: Option<(ParamPoint, f64)> = None;
    for k in k0.saturating_sub(1)..=(k0 + 1).min(n) {
        let r = minimize(
            |x: &[f64; 2]| {
                let (f, g) = lik.at_count_with_grad(x[0], x[1], k);
                (-f, g.map(|v| -v))
            },
            [psi[0], psi[1]],
            &opts,
        );
        let ll = lik.at_count(r.x[0], r.x[1], k);
        if ll.is_finite() && fit.is_none_or(|b| ll > b.1) {
            let theta = ParamPoint::new(sigmoid(r.x[0]), sigmoid(r.x[1]), k)?;
            fit = Some((theta, ll));
        }
    }
    let (theta, log_likelihood) = fit.ok_or_else(|| Error::Optimization {
        starts,
        best_point: psi.map(sigmoid),
        best_loglik: f64::NEG_INFINITY,
    })?;
    Ok(MleFit {
        theta,
        log_likelihood,
        psi: NaturalParams::from_array(psi),
        converged_starts: converged,
    })
}

pub fn mle(dataset: &Dataset, starts: usize, seed: u64) -> Result<MleFit> {
    mle_counts(&dataset.design, &dataset.observed, starts, seed)
}
