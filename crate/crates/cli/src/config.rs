//! Flat `key = value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crossalign::alignment::{AlignmentConfig, GammaMode};
use crossalign::augment::{AugmentConfig, SslSchedule};
use crossalign::imgio::CropMode;
use crossalign::losses::{GradientOperator, LossWeights};
use crossalign::metrics::MetricConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: Option<usize>,
    pub patch_size: u32,
    pub gamma_mode: GammaMode,
    pub crop_mode: CropMode,
    pub patches_per_image: usize,
    pub seed: u64,
    pub crop_size: u32,
    pub blur_sigma: f64,
    pub kernel_radius: Option<usize>,
    pub theta_init: f64,
    pub total_steps: Option<u64>,
    pub weights: LossWeights,
    pub metrics: MetricConfig,
    pub gradient_operator: GradientOperator,
}

impl Default for RunConfig {
    fn default() -> Self {
        let align = AlignmentConfig::new(1);
        let augment = AugmentConfig::default();
        Self {
            k: None,
            patch_size: align.patch_size,
            gamma_mode: align.gamma_mode,
            crop_mode: align.crop_mode,
            patches_per_image: align.patches_per_image,
            seed: 0,
            crop_size: augment.crop_size,
            blur_sigma: augment.blur_sigma,
            kernel_radius: augment.kernel_radius,
            theta_init: SslSchedule::DEFAULT_THETA_INIT,
            total_steps: None,
            weights: LossWeights::default(),
            metrics: MetricConfig::default(),
            gradient_operator: GradientOperator::Sobel,
        }
    }
}

pub const KEYS: &[&str] = &[
    "k",
    "patch_size",
    "gamma_mode",
    "crop_mode",
    "patches_per_image",
    "seed",
    "crop_size",
    "blur_sigma",
    "kernel_radius",
    "theta_init",
    "total_steps",
    "alpha1",
    "alpha2",
    "alpha3",
    "alpha4",
    "lambda",
    "mu",
    "zeta",
    "mi_aggregation",
    "vif_aggregation",
    "ssim_aggregation",
    "gradient_operator",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Validation(format!("bad value for {key}: {value:?} ({e})")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "k" => self.k = Some(parse(key, value)?),
            "patch_size" => self.patch_size = parse(key, value)?,
            "gamma_mode" => self.gamma_mode = parse(key, value)?,
            "crop_mode" => self.crop_mode = parse(key, value)?,
            "patches_per_image" => self.patches_per_image = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "crop_size" => self.crop_size = parse(key, value)?,
            "blur_sigma" => self.blur_sigma = parse(key, value)?,
            "kernel_radius" => self.kernel_radius = Some(parse(key, value)?),
            "theta_init" => self.theta_init = parse(key, value)?,
            "total_steps" => self.total_steps = Some(parse(key, value)?),
            "alpha1" => self.weights.alpha1 = parse(key, value)?,
            "alpha2" => self.weights.alpha2 = parse(key, value)?,
            "alpha3" => self.weights.alpha3 = parse(key, value)?,
            "alpha4" => self.weights.alpha4 = parse(key, value)?,
            "lambda" => self.weights.lambda = parse(key, value)?,
            "mu" => self.weights.mu = parse(key, value)?,
            "zeta" => self.weights.zeta = parse(key, value)?,
            "mi_aggregation" => self.metrics.mi = parse(key, value)?,
            "vif_aggregation" => self.metrics.vif = parse(key, value)?,
            "ssim_aggregation" => self.metrics.ssim = parse(key, value)?,
            "gradient_operator" => self.gradient_operator = parse(key, value)?,
            _ => {
                return Err(CliError::Validation(format!(
                    "unknown config key {key:?} (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Validation(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn alignment(&self, k: usize) -> AlignmentConfig {
        AlignmentConfig {
            k,
            patch_size: self.patch_size,
            gamma_mode: self.gamma_mode,
            seed: self.seed,
            crop_mode: self.crop_mode,
            patches_per_image: self.patches_per_image,
        }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            crop_size: self.crop_size,
            blur_sigma: self.blur_sigma,
            kernel_radius: self.kernel_radius,
            seed: self.seed,
        }
    }

    pub fn schedule(&self, total_steps: u64) -> Result<SslSchedule, CliError> {
        Ok(SslSchedule::new(self.theta_init, total_steps)?)
    }

    /// Checks every value that has a domain restriction.
    pub fn validate(&self) -> Result<(), CliError> {
        self.alignment(self.k.unwrap_or(1)).validate()?;
        self.augment().validate()?;
        self.weights.validate()?;
        SslSchedule::new(self.theta_init, self.total_steps.unwrap_or(1))?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(k) = self.k {
            line("k", k.to_string());
        }
        line("patch_size", self.patch_size.to_string());
        line("gamma_mode", self.gamma_mode.to_string());
        line("crop_mode", self.crop_mode.to_string());
        line("patches_per_image", self.patches_per_image.to_string());
        line("seed", self.seed.to_string());
        line("crop_size", self.crop_size.to_string());
        line("blur_sigma", self.blur_sigma.to_string());
        if let Some(r) = self.kernel_radius {
            line("kernel_radius", r.to_string());
        }
        line("theta_init", self.theta_init.to_string());
        if let Some(m) = self.total_steps {
            line("total_steps", m.to_string());
        }
        let w = &self.weights;
        line("alpha1", w.alpha1.to_string());
        line("alpha2", w.alpha2.to_string());
        line("alpha3", w.alpha3.to_string());
        line("alpha4", w.alpha4.to_string());
        line("lambda", w.lambda.to_string());
        line("mu", w.mu.to_string());
        line("zeta", w.zeta.to_string());
        line("mi_aggregation", self.metrics.mi.to_string());
        line("vif_aggregation", self.metrics.vif.to_string());
        line("ssim_aggregation", self.metrics.ssim.to_string());
        line("gradient_operator", self.gradient_operator.to_string());
        out
    }
}
