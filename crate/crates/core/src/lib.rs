//! Opinion dynamics on directed weighted trust networks with a single
//! stubborn agent.
//!
//! The library models a group of `K` agents holding opinions in `[0, 1]`.
//! Agent `0` is *stubborn*: it trusts only itself and never moves. Every
//! other agent repeatedly averages the opinions (or observed actions) of
//! the agents it trusts. Two update rules are provided:
//!
//! * [`dynamics::degroot_run`] — the deterministic DeGroot rule
//!   `x[n+1] = T x[n]`, which converges to a consensus on the stubborn
//!   agent's opinion whenever the stubborn agent influences the rest of
//!   the network.
//! * [`dynamics::ra_run`] — a stochastic variant in which agents observe
//!   random binary *actions* of their neighbours instead of true opinions:
//!   `X[n+1] = (1 - alpha) X[n] + alpha T A[n]` with
//!   `A_k[n] ~ Bernoulli(X_k[n])`.
//!
//! The [`spectral`] module computes the objects that control both limits
//! (Perron root and left eigenvector of the interior block, consensus
//! gains, truncated Neumann sums), and [`analysis`] checks the stochastic
//! model's convergence structure against closed-form one-step moments.
//!
//! # Orientation convention
//!
//! Trust matrices are row-oriented: `t[i][j]` is the weight agent `i`
//! places on agent `j`, so an edge `j -> i` ("`i` listens to `j`") is a
//! **positive entry in row `i`, column `j`**. Influence therefore flows
//! along columns. All public functions follow this convention; see
//! [`network::TrustMatrix`].

// Index loops over `(i, j)` mirror the matrix subscripts in the math;
// iterator rewrites hide that correspondence.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod generate;
pub mod matrix;
pub mod network;
pub mod rng;
pub mod spectral;

mod exec;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
