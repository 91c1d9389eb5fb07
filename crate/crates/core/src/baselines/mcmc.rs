//! Metropolis-Hastings on the logit scale under a flat prior, and the Monte
//! Carlo confidence set built from the chain.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::likelihood::{psi_limit, Likelihood};
use crate::baselines::logit::NaturalParams;
use crate::baselines::mle::{mle, DEFAULT_STARTS};
use crate::confset::{project_flags, Axis, Condition, Interval, ParamGrid};
use crate::error::{domain, Result};
use crate::model::{log_joint_unchecked, Dataset, LogBinomial, ParamPoint};
use crate::rng::{stream, Purpose};
use crate::stats::quantile;

pub const DEFAULT_ITERS: usize = 200_000;
pub const DEFAULT_BURN_FRAC: f64 = 0.2;
pub const DEFAULT_PROPOSAL_SD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalMode {
    /// `psi' ~ N(psi, sd^2 I)`.
    #[default]
    RandomWalk,
    /// `psi' ~ N(psi_hat, sd^2 I)` around the MLE, with the Hastings correction.
    Independence,
}

#[derive(Debug, Clone, Copy)]
pub struct McmcOptions {
    pub iters: usize,
    pub burn_frac: f64,
    pub proposal_sd: f64,
    pub mode: ProposalMode,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            burn_frac: DEFAULT_BURN_FRAC,
            proposal_sd: DEFAULT_PROPOSAL_SD,
            mode: ProposalMode::RandomWalk,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Post-burn-in states.
    pub samples: Vec<NaturalParams>,
    pub acceptance_rate: f64,
    /// Log-likelihood of the current state, every iteration.
    pub loglik_trace: Vec<f64>,
    /// Whether each iteration's proposal was accepted.
    pub accepted: Vec<bool>,
    pub burn_in: usize,
    pub seed: u64,
    pub proposal_sd: f64,
    pub mode: ProposalMode,
}

impl Chain {
    pub fn iterations(&self) -> usize {
        self.loglik_trace.len()
    }

    pub fn prevalences(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rates().2).collect()
    }

    /// Central credible interval for prevalence.
    pub fn credible_interval(&self, level: f64) -> Result<Interval> {
        let pis = self.prevalences();
        let tail = (1.0 - level) / 2.0;
        match (quantile(&pis, tail), quantile(&pis, 1.0 - tail)) {
            (Some(lo), Some(hi)) => Ok(Interval { lo, hi }),
            _ => Err(domain("chain has no samples")),
        }
    }
}

pub fn mh_sample(dataset: &Dataset, opts: &McmcOptions) -> Result<Chain> {
    if opts.iters < 1000 {
        return Err(domain(format!("iters = {} below the minimum of 1000", opts.iters)));
    }
    if !(0.0..=0.9).contains(&opts.burn_frac) {
        return Err(domain(format!("burn fraction {} outside [0, 0.9]", opts.burn_frac)));
    }
    if !(opts.proposal_sd >= 0.0 && opts.proposal_sd.is_finite()) {
        return Err(domain(format!(
            "proposal sd {} must be finite and nonnegative",
            opts.proposal_sd
        )));
    }
    dataset.validate()?;
    let center = mle(dataset, DEFAULT_STARTS, opts.seed)?.psi.to_array();
    let lik = Likelihood::new(dataset.design, dataset.observed);
    let limit = psi_limit();
    let sd = opts.proposal_sd;
    let log_q = |x: &[f64; 3]| -> f64 {
        if sd == 0.0 {
            return 0.0;
        }
        -x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() / (2.0 * sd * sd)
    };

    let mut rng = stream(opts.seed, Purpose::Mcmc, 0);
    let mut state = center;
    let mut ll = lik.relaxed(&state);
    let burn_in = (opts.iters as f64 * opts.burn_frac).floor() as usize;
    let mut samples = Vec::with_capacity(opts.iters - burn_in);
    let mut trace = Vec::with_capacity(opts.iters);
    let mut accepted = Vec::with_capacity(opts.iters);
    let mut n_acc = 0usize;
    for it in 0..opts.iters {
        let base = match opts.mode {
            ProposalMode::RandomWalk => state,
            ProposalMode::Independence => center,
        };
        let mut prop = base;
        for v in prop.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
        let u: f64 = rng.random();
        let inside = prop.iter().all(|v| v.abs() <= limit);
        let mut take = false;
        if inside {
            let ll_prop = lik.relaxed(&prop);
            let mut log_ratio = ll_prop - ll;
            if opts.mode == ProposalMode::Independence {
                log_ratio += log_q(&state) - log_q(&prop);
            }
            if ll_prop.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio) {
                state = prop;
                ll = ll_prop;
                take = true;
            }
        }
        n_acc += take as usize;
        trace.push(ll);
        accepted.push(take);
        if it >= burn_in {
            samples.push(NaturalParams::from_array(state));
        }
    }
    Ok(Chain {
        samples,
        acceptance_rate: n_acc as f64 / opts.iters as f64,
        loglik_trace: trace,
        accepted,
        burn_in,
        seed: opts.seed,
        proposal_sd: sd,
        mode: opts.mode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfidenceSet {
    pub dataset: String,
    pub n_main: u32,
    /// 95th percentile of the likelihood over the chain.
    pub threshold: f64,
    pub grid: ParamGrid,
    /// Likelihood of the observed counts at each grid point, canonical order.
    pub likelihood: Vec<f64>,
    pub members: Vec<bool>,
}

impl McConfidenceSet {
    pub fn member_count(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn project(&self, axis: Axis, condition: &Condition) -> Result<Vec<Interval>> {
        project_flags(&self.grid, self.n_main, &self.members, axis, condition)
    }
}

/// Likelihood of the observed counts at the rounded chain states.
pub fn chain_likelihoods(chain: &Chain, dataset: &Dataset) -> Vec<f64> {
    let n = dataset.design.n_main;
    chain
        .samples
        .iter()
        .map(|s| {
            let (p, q, pi) = s.rates();
            let theta = ParamPoint {
                p,
                q,
                k: ((pi * n as f64).round() as u32).min(n),
            };
            log_joint_unchecked(&dataset.observed, &theta, &dataset.design, None).exp()
        })
        .collect()
}

/// Grid points whose likelihood reaches the 95th percentile of the chain's
/// likelihood values.
pub fn mc_confset(chain: &Chain, dataset: &Dataset, grid: &ParamGrid) -> Result<McConfidenceSet> {
    if chain.samples.is_empty() {
        return Err(domain("chain has no samples"));
    }
    dataset.validate()?;
    grid.check_design(&dataset.design)?;
    let values = chain_likelihoods(chain, dataset);
    let threshold = quantile(&values, 0.95).ok_or_else(|| domain("chain has no samples"))?;
    let d = &dataset.design;
    let s = &dataset.observed;
    let likelihood: Vec<f64> = grid
        .p_values
        .par_iter()
        .flat_map_iter(|&p| {
            let neg = LogBinomial::new(d.n_cal_neg, p).ln_pmf(s.s_cal_neg);
            grid.q_values.iter().flat_map(move |&q| {
                let pos = LogBinomial::new(d.n_cal_pos, q).ln_pmf(s.s_cal_pos);
                grid.k_values.iter().map(move |&k| {
                    let theta = ParamPoint { p, q, k };
                    let main = crate::model::log_main_pmf_unchecked(s.s_main, &theta, d.n_main, None);
                    (neg + pos + main).exp()
                })
            })
        })
        .collect();
    let members = likelihood.iter().map(|&f| f > 0.0 && f >= threshold).collect();
    Ok(McConfidenceSet {
        dataset: dataset.label.clone(),
        n_main: d.n_main,
        threshold,
        grid: grid.clone(),
        likelihood,
        members,
    })
}
