//! Rare-event probabilities for Poisson counts whose rate is an average of
//! resampled random rates, and their use in staffing infinite-server queues.
//!
//! The count of interest is `Pois(N X̄)` where `X̄` averages `N^α` independent
//! copies of a random rate `X`. The crate provides
//!
//! * cumulant generating functions and rate functions for several rate laws ([`rates`]),
//! * Poisson large-deviation building blocks ([`poisson_ldp`]),
//! * logarithmic and exact asymptotics in every regime of `α` ([`tail_asymptotics`]),
//! * exact negative binomial results for gamma rates ([`gamma_exact`]),
//! * crude and importance-sampling estimators ([`sampling`]),
//! * the infinite-server queue layer ([`queue`]) and staffing rules ([`staffing`]).

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gamma_exact;
pub mod numerics;
pub mod output;
pub mod poisson_ldp;
pub mod queue;
pub mod rates;
pub mod sampling;
pub mod staffing;
pub mod tail_asymptotics;

pub use error::{Error, Result};
pub use queue::{ServiceKind, ServiceTime};
pub use rates::{RateDistribution, RateKind};
