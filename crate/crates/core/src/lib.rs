//! Finite-sample confidence sets for disease prevalence and serology test
//! error rates, built by inverting density-level tests over a parameter grid.

pub mod baselines;
pub mod cli;
pub mod confset;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod rng;
pub mod stats;

pub use baselines::{
    lrt_pvalue, lrt_statistic, mc_confset, mh_sample, mle, Chain, LrtOptions, LrtTail, McConfidenceSet, McmcOptions,
    MleFit, NaturalParams, ProposalMode,
};
pub use confset::{
    alt_evidence, basic_evidence, epsilon_bound, nu_level_count, project_interval, scan_grid, scan_grid_with, Axis,
    Condition, ConfidenceSet, EvidenceEngine, EvidenceOptions, GridSpec, Interval, Method, ParamGrid, PointEvidence,
    ScanOptions,
};
pub use data::{builtin_dataset, combine, parse_dataset, serialize_dataset, DatasetCatalog};
pub use error::{Error, Result};
pub use model::{
    binom_log_pmf, density_table, joint_density, main_pmf, simulate_study, Dataset, DensityTable, ParamPoint,
    PositiveCounts, StudyDesign,
};
