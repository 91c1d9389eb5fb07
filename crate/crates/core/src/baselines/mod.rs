//! Likelihood-based reference procedures: a simulated likelihood-ratio test
//! and a Monte Carlo confidence set from a Metropolis-Hastings chain.

pub mod bfgs;
pub mod likelihood;
pub mod logit;
pub mod lrt;
pub mod mcmc;
pub mod mle;

pub use likelihood::Likelihood;
pub use logit::{logit_clamped, sigmoid, NaturalParams, DEFAULT_LOGIT_EPS};
pub use lrt::{lrt_pvalue, lrt_statistic, pvalue_from_draws, LrtOptions, LrtResult, LrtTail};
pub use mcmc::{mc_confset, mh_sample, Chain, McConfidenceSet, McmcOptions, ProposalMode};
pub use mle::{mle, mle_counts, MleFit};
