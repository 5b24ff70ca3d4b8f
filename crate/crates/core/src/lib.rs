//! k-anonymization for set-valued data: market baskets and query-log threads.
//!
//! A dataset of item sets is k-anonymous when every record's set is identical
//! to the sets of at least k-1 other records. This crate makes a dataset
//! k-anonymous by adding and deleting items, trying to keep the number of
//! edits small:
//!
//! * [`greedy`] — a set-cover style greedy that solves the suppression
//!   relaxation and converts stars to flips via per-column majorities.
//! * [`kgroup`] — a load-balanced facility-location local search over the
//!   Hamming metric, repaired to a minimum load of k per open facility.
//! * [`oracle`] — exact brute force over partitions, for small instances;
//!   ground truth for the approximation-ratio tests.
//! * [`pipeline`] — the end-to-end query-log flow: session threading,
//!   keyword LSH, MinHash clustering, per-cluster anonymization, and
//!   translation of edits back into query text.

pub mod error;
pub mod flip;
pub mod greedy;
pub mod io;
pub mod kgroup;
pub mod minhash;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod threader;

pub use error::Error;
