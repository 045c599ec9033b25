//! Content-centric multicast beamforming and base-station clustering for
//! cache-enabled cloud radio access networks.
//!
//! Each scheduling interval groups users by requested content, then picks
//! multicast beamformers and serving BS clusters that minimize
//! `eta * transmit power + backhaul`, where a BS pays the group's rate in
//! backhaul whenever it serves content it has not cached. The crate solves
//! this through a semidefinite relaxation, a smooth concave surrogate of the
//! cluster-size count, and reweighted (difference-of-convex) iterations, and
//! reproduces power/backhaul tradeoff studies on simulated networks.
//!
//! | module | contents |
//! |---|---|
//! | [`netgen`] | BS layouts, user drops, channels, noise |
//! | [`content`] | Zipf catalogs, cache placement, requests, multicast groups |
//! | [`conic`] | linear SDP model and interior-point solver |
//! | [`optimizer`] | surrogates, reweighted iteration, beamformer recovery |
//! | [`experiments`] | cost model, intervals, sweeps, unicast baseline, oracle |
//! | [`config`] | flat `key = value` run configuration |
//!
//! ```
//! use cachecast::experiments::{run_interval, Cell, SweepSpec};
//!
//! let spec = SweepSpec::default();
//! let report = run_interval(&spec, Cell { eta: 1.0, cache_size: 2 }, 0).unwrap();
//! if report.feasible {
//!     assert!(report.network_cost >= report.backhaul);
//! }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod conic;
pub mod content;
pub mod error;
pub mod experiments;
pub mod netgen;
pub mod optimizer;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/relaxation.md")]
    mod relaxation {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    mod surrogates {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
