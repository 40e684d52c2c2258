//! Frequentist operating characteristics of hypothesis tests that borrow
//! from external data through power priors.
//!
//! Each borrowing test is compared with the *test calibrated to borrowing*:
//! the no-borrowing z-test run at the borrowing test's own size. The crate
//! covers one-arm trials and two-arm hybrid-control trials with normal
//! endpoints and known variance, for fixed and random external data.

pub mod borrow;
pub mod oc_onearm;
pub mod oc_twoarm;
pub mod region;
pub mod runner;
pub mod error;
pub mod statmath;

pub use error::{Error, Result};
