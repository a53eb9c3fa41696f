//! Transfer-learning contextual dynamic pricing.
//!
//! An experimentation engine around an adaptive-partitioning UCB pricing
//! policy (TLDP) that can warm-start from a pre-collected source dataset
//! gathered under covariate shift: source and target share the reward
//! function `f(x, p)` but draw covariates from different distributions.
//!
//! The crate is organised along the pipeline of a pricing experiment:
//!
//! - [`geometry`]: l∞-ball arithmetic over the joint covariate-price cube
//!   `[0,1]^{d+1}`, including the domain-slice computation (a ball's price
//!   territory at a fixed covariate, minus strictly smaller balls) and
//!   uniform sampling from interval unions.
//! - [`policy`]: the TLDP state machine: source-seeded ball statistics,
//!   index-based ball selection, price sampling and the nested partition
//!   loop.
//! - [`env`]: synthetic environments: uniform target covariates, a
//!   radially-weighted source covariate law with prescribed transfer
//!   exponent, piecewise-uniform source price densities with prescribed
//!   exploration coefficient, and the two reward families with their
//!   noise models.
//! - [`oracle`]: optimal-price oracles (closed-form where available,
//!   grid search elsewhere) and per-step regret accounting.
//! - [`harness`]: seeded replications, parallel experiment execution,
//!   CSV emission and the invariant self-test suite.
//! - [`plot`]: minimal SVG line charts for summary CSVs.
//! - [`stats`]: means, deviations, a paired t-test and a KS statistic.
//!
//! Everything is deterministic given an experiment spec and a base seed:
//! each replication derives independent ChaCha streams for source
//! generation, target covariates, policy randomness and reward noise.

pub mod config;
pub mod env;
pub mod geometry;
pub mod harness;
pub mod oracle;
pub mod plot;
pub mod policy;
pub mod stats;
