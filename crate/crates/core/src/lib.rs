//! Forecasting high-dimensional functional time series with a two-fold
//! dimension reduction: dynamic functional principal components within each
//! population, then factor models across populations on each component's
//! scores.

pub mod artifact;
pub mod baseline;
pub mod dfpca;
pub mod error;
pub mod eval;
pub mod factor;
pub mod forecast;
pub mod harness;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod simgen;

pub use error::{Error, Result};
pub use panel::{FunctionalPanel, Grid, SplitSpec};
pub use pipeline::{CommonOrder, HdftsModel, PipelineConfig};
