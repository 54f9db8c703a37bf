//! RANSAC anomaly detection with selective p-values computed over the exact
//! truncation region of the detection event.

pub mod error;
pub mod intervals;
pub mod linreg;
pub mod par;
pub mod ransac;
pub mod stats;
pub mod inference;
pub mod truncation;
pub mod pipeline;
pub mod experiments;
pub mod io;

pub use error::{Error, Result};
