//! Matched filtering for chirp signals with a Grover-style search layer.
//!
//! [`dsp`] and [`bank`] are the classical front end; [`amplify`] holds the
//! closed-form search and counting statistics, [`qsim`] a small state-vector
//! simulator that reproduces them gate by gate, and [`pipeline`] ties both to
//! a matched-filter oracle with oracle-call accounting. [`cw`] scales the cost
//! model to continuous-wave searches.

pub mod amplify;
pub mod bank;
pub mod cw;
pub mod dsp;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod qsim;

pub use error::{Error, Result};
