//! Price-aware session-based recommendation.
//!
//! This crate implements a recommender that models *what* a user is
//! browsing and *how much they are willing to pay* at the same time.
//! Items, their price levels, and their categories become nodes of a
//! heterogeneous hypergraph; message passing over that graph produces
//! item representations; two attention read-outs extract a price
//! preference and an interest preference from the current session; and
//! a co-guided fusion step lets each preference reshape the other
//! before scoring candidates.
//!
//! The main pieces:
//!
//! - [`dataset`]: CSV loading, sessionization, filtering, splits, and
//!   logistic price discretization.
//! - [`hypergraph`]: the heterogeneous graph and its typed neighbor
//!   sets.
//! - [`tensor`], [`tape`], [`optim`]: a small dense `f64` matrix type,
//!   reverse-mode differentiation, and Adam.
//! - [`model`]: the network itself — embedding, aggregation, message
//!   passing, preference extraction, co-guided fusion, scoring, and
//!   the training loop.
//! - [`baselines`]: popularity and session-kNN reference models.
//! - [`metrics`]: precision@k and MRR@k.
//! - [`config`], [`cli`]: the TOML-configured command-line front end.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod hypergraph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::Error;
