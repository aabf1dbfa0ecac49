//! Random walks with a reward for visits to the strip [0, a], conditioned to stay nonnegative.
//!
//! The crate computes the return kernels of the walk killed below zero, the
//! associated spectral objects (critical point, free energy, tilted Markov
//! renewal), exact partition functions for the (p,q) walk, and exact samplers
//! of the polymer measure.

use std::fmt;
use std::str::FromStr;

pub mod error;
pub mod experiments;
pub mod increments;
pub mod kernel;
pub mod ladder;
pub mod numerics;
pub mod paths;
pub mod pq;
pub mod renewal;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use increments::IncrementLaw;
pub use kernel::{build, build_continuous, build_pq, KernelOptions, ReturnKernel};
pub use ladder::{estimate_ladder, LadderTables};
pub use paths::{
    contact_stats, reference_sampler, rescale, sample_continuous, sample_pq, scaling_test, sup_quantiles,
    LatticeSampler, Marginals, PathSample, PathSummary, ReferenceKind,
};
pub use pq::{constants, PQConstants};
pub use renewal::{green_function, partition_asymptotics, partition_log_z, MarkovRenewalProcess, RenewalKernel};
pub use spectral::{build_tilted, critical_beta, delta, free_energy, TiltedKernel};

/// Whether the endpoint S_N is left free or forced into the strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Free,
    Constrained,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Free => "free",
            Boundary::Constrained => "constrained",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" | "f" => Ok(Boundary::Free),
            "constrained" | "c" => Ok(Boundary::Constrained),
            other => Err(error::invalid(format!("unknown boundary '{other}' (expected free or constrained)"))),
        }
    }
}
