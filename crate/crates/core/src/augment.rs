//! Weak/aggressive view generation and the annealed self-supervised loss.
//!
//! The weak view is a random crop of the fused image; the aggressive view is
//! a Gaussian blur of the weak view. Their squared difference, weighted by a
//! cosine-annealed `theta`, is the self-supervised loss.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::imgio::{GrayRaster, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub crop_size: u32,
    pub blur_sigma: f64,
    /// Defaults to `ceil(3 * blur_sigma)`.
    pub kernel_radius: Option<usize>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_size: 32,
            blur_sigma: 1.0,
            kernel_radius: None,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn radius(&self) -> usize {
        self.kernel_radius
            .unwrap_or_else(|| filter::default_radius(self.blur_sigma))
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 {
            return Err(Error::InvalidParameter("crop size must be positive".into()));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "blur sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        if self.radius() == 0 {
            return Err(Error::InvalidParameter("kernel radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cosine annealing of the self-supervised weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SslSchedule {
    pub theta_init: f64,
    pub total_steps: u64,
}

impl SslSchedule {
    pub const DEFAULT_THETA_INIT: f64 = 0.1;

    pub fn new(theta_init: f64, total_steps: u64) -> Result<Self> {
        if !(theta_init.is_finite() && theta_init >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_init must be non-negative, got {theta_init}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::InvalidParameter("total steps must be at least 1".into()));
        }
        Ok(Self {
            theta_init,
            total_steps,
        })
    }
}

/// `theta_init * (cos(pi * m / M) + 1) / 2`.
pub fn theta_at(schedule: &SslSchedule, step: u64) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::InvalidParameter(format!(
            "step {step} outside 0..={}",
            schedule.total_steps
        )));
    }
    // endpoints are pinned so they are exact regardless of cos rounding
    if step == 0 {
        return Ok(schedule.theta_init);
    }
    if step == schedule.total_steps {
        return Ok(0.0);
    }
    let phase = PI * step as f64 / schedule.total_steps as f64;
    Ok((schedule.theta_init * (phase.cos() + 1.0) / 2.0).max(0.0))
}

/// Random crop with a uniform origin drawn from a ChaCha8 stream seeded by `seed`.
pub fn weak_augment(fused: &GrayRaster, config: &AugmentConfig, seed: u64) -> Result<(GrayRaster, Rect)> {
    let size = config.crop_size;
    if size == 0 || size > fused.width() || size > fused.height() {
        return Err(Error::InvalidParameter(format!(
            "crop size {size} does not fit a {}x{} image",
            fused.width(),
            fused.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.random_range(0..=fused.width() - size);
    let y = rng.random_range(0..=fused.height() - size);
    let rect = Rect::new(x, y, size, size);
    Ok((fused.crop(rect)?, rect))
}

/// Separable Gaussian blur, unit-sum kernel of radius `radius`, reflect-101 borders.
pub fn gaussian_blur(image: &GrayRaster, sigma: f64, radius: usize) -> GrayRaster {
    let kernel = filter::gaussian_kernel(sigma, radius);
    let data = filter::convolve_separable(
        image.data(),
        image.width() as usize,
        image.height() as usize,
        &kernel,
    );
    GrayRaster::from_clamped(image.width(), image.height(), data)
        .expect("blur preserves dimensions")
}

pub fn aggressive_augment(weak: &GrayRaster, config: &AugmentConfig) -> Result<GrayRaster> {
    config.validate()?;
    Ok(gaussian_blur(weak, config.blur_sigma, config.radius()))
}

/// `theta * mean((weak - aggressive)^2)`.
pub fn ssl_loss(weak: &GrayRaster, aggressive: &GrayRaster, theta: f64) -> Result<f64> {
    weak.ensure_same_dims(aggressive)?;
    let sq: f64 = weak
        .data()
        .iter()
        .zip(aggressive.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(theta * sq / weak.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedViews {
    pub weak: GrayRaster,
    pub aggressive: GrayRaster,
    pub crop_rect: Rect,
    pub blur_sigma: f64,
}

/// Record written per image by batch view generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub stem: String,
    pub rect: [u32; 4],
    pub sigma: f64,
    pub m: u64,
    pub theta: f64,
    pub ssl_loss: f64,
}

/// Weak crop, blur, schedule lookup and loss in one step. The crop uses
/// `config.seed`.
pub fn generate_views(
    fused: &GrayRaster,
    config: &AugmentConfig,
    schedule: &SslSchedule,
    step: u64,
) -> Result<(AugmentedViews, f64)> {
    config.validate()?;
    let (weak, crop_rect) = weak_augment(fused, config, config.seed)?;
    let aggressive = aggressive_augment(&weak, config)?;
    let theta = theta_at(schedule, step)?;
    let loss = ssl_loss(&weak, &aggressive, theta)?;
    Ok((
        AugmentedViews {
            weak,
            aggressive,
            crop_rect,
            blur_sigma: config.blur_sigma,
        },
        loss,
    ))
}

/// Seed for image `index` of a batch.
pub fn batch_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}
