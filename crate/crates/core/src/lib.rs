//! Data-centric tooling for infrared-visible image fusion.
//!
//! - [`imgio`]: codecs, rasters, patch geometry and channel statistics
//! - [`alignment`]: Top-K selective per-channel gamma alignment of an external dataset
//! - [`augment`]: weak (crop) / aggressive (blur) views and the annealed self-supervised loss
//! - [`metrics`]: the nine fusion-quality metrics (EN, MI, SD, SF, AG, VIF, SCD, Qabf, SSIM)
//! - [`losses`]: forward evaluators for the reconstruction and fusion training objectives
//! - [`report`]: distribution comparisons, metric tables and degradation reports

pub mod alignment;
pub mod augment;
mod error;
pub mod filter;
pub mod imgio;
pub mod losses;
pub mod metrics;
pub mod report;

pub use error::{Error, Result};
pub use imgio::{Channel, GrayRaster, Histogram256, Patch, RgbRaster};
