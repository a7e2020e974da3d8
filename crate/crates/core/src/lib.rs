//! Prediction on feature-evolvable data streams where old features vanish
//! at unpredictable times.
//!
//! The pipeline has four stages:
//!
//! 1. an online linear model is trained on the previous feature space
//!    ([`models`]);
//! 2. the fragmentary overlap period is completed row by row against the row
//!    space of the earlier data, which is tracked with a Frequent Directions
//!    sketch ([`sketch`], [`completion`]);
//! 3. a least-squares map from the current space back to the previous space
//!    is accumulated over the overlap ([`mapper`]);
//! 4. old-space and new-space models are combined by a parameter-free,
//!    potential-based expert ensemble that supports sleeping experts
//!    ([`ensemble`]).
//!
//! [`sim`] turns tabular datasets into evolving streams and [`experiment`]
//! runs the full method roster across overlap settings.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod config;
pub mod ensemble;
mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod mapper;
pub mod models;
pub mod parallel;
pub mod sim;
pub mod sketch;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
