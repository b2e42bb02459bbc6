//! GP-assisted metadata-balance acquisition.
//!
//! Measures how a learner's out-of-sample score responds to the category
//! balance of its training data, fits a Gaussian-process surrogate to that
//! surface, and extrapolates along scaled transects (a cone of equivalent
//! moves) to choose the category split of the next batch of data.

pub mod acquisition;
pub mod balance_experiment;
pub mod cli;
pub mod conic;
pub mod dataset;
pub mod gp;
pub mod learner;
pub mod seed;
