//! Forward evaluators for the two-stage fusion training objective.
//!
//! Nothing here computes gradients; the functions score images and feature
//! maps produced elsewhere so an external training pipeline can be checked.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentedViews};
use crate::error::{Error, Result};
use crate::filter;
use crate::imgio::GrayRaster;
use crate::metrics::{self, FusionTriple};

const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const FMAP_HEADER: usize = 16;

/// `C×H×W` tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: u32,
    height: u32,
    width: u32,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: u32, height: u32, width: u32, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "feature map shape must be positive, got {channels}x{height}x{width}"
            )));
        }
        let n = channels as usize * height as usize * width as usize;
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {channels}x{height}x{width} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature map holds non-finite values".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (u32, u32, u32) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<FeatureMap> {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Parses the `FMAP` container: magic, three little-endian `u32`
    /// (`C`, `H`, `W`), then `C·H·W` little-endian `f32`.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::FeatureMap {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < FMAP_HEADER {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..4] != FMAP_MAGIC {
            return Err(bad("missing FMAP magic".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (c, h, w) = (dim(0), dim(1), dim(2));
        if c == 0 || h == 0 || w == 0 {
            return Err(bad(format!("zero dimension in shape {c}x{h}x{w}")));
        }
        let n = (c as u64)
            .checked_mul(h as u64)
            .and_then(|v| v.checked_mul(w as u64))
            .ok_or_else(|| bad("shape overflows".into()))?;
        let expected = n
            .checked_mul(4)
            .and_then(|v| v.checked_add(FMAP_HEADER as u64))
            .ok_or_else(|| bad("shape overflows".into()))?;
        if bytes.len() as u64 != expected {
            return Err(bad(format!(
                "expected {expected} bytes for shape {c}x{h}x{w}, found {}",
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes[FMAP_HEADER..]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        Ok(Self {
            channels: c,
            height: h,
            width: w,
            data,
        })
    }

    /// Serializes with values narrowed to `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FMAP_HEADER + 4 * self.data.len());
        out.extend_from_slice(FMAP_MAGIC);
        for d in [self.channels, self.height, self.width] {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// High- and low-frequency features of both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompFeatures {
    pub hf_ir: FeatureMap,
    pub hf_vis: FeatureMap,
    pub lf_ir: FeatureMap,
    pub lf_vis: FeatureMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub lambda: f64,
    pub mu: f64,
    pub zeta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 2.0,
            alpha2: 2.0,
            alpha3: 1.0,
            alpha4: 1.0,
            lambda: 1.0,
            mu: 10.0,
            zeta: 1.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("alpha4", self.alpha4),
            ("lambda", self.lambda),
            ("mu", self.mu),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.zeta.is_finite() && self.zeta > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zeta must exceed 1, got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

/// Gradient magnitude used by the similarity loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientOperator {
    #[default]
    Sobel,
    ForwardDiff,
}

impl std::str::FromStr for GradientOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sobel" => Ok(GradientOperator::Sobel),
            "forward-diff" | "forward_diff" => Ok(GradientOperator::ForwardDiff),
            other => Err(Error::InvalidParameter(format!(
                "gradient operator must be sobel or forward-diff, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for GradientOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientOperator::Sobel => "sobel",
            GradientOperator::ForwardDiff => "forward-diff",
        })
    }
}

/// Per-pixel gradient magnitude on the `[0, 1]` scale, reflect-101 borders.
pub fn gradient_magnitude(image: &GrayRaster, op: GradientOperator) -> Vec<f64> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let d = image.data();
    match op {
        GradientOperator::Sobel => {
            let (gx, gy) = filter::sobel(d, w, h);
            gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
        }
        GradientOperator::ForwardDiff => {
            let mut out = Vec::with_capacity(d.len());
            for y in 0..h {
                for x in 0..w {
                    let here = d[y * w + x];
                    let right = d[y * w + filter::reflect101(x as isize + 1, w)];
                    let below = d[filter::reflect101(y as isize + 1, h) * w + x];
                    out.push((right - here).hypot(below - here));
                }
            }
            out
        }
    }
}

/// Mean squared error on the `[0, 1]` scale.
pub fn mse(a: &GrayRaster, b: &GrayRaster) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `MSE + lambda * (1 - SSIM)`.
pub fn recon_loss(original: &GrayRaster, reconstructed: &GrayRaster, lambda: f64) -> Result<f64> {
    let mse = mse(original, reconstructed)?;
    let ssim = metrics::ssim(original, reconstructed)?;
    Ok(mse + lambda * (1.0 - ssim))
}

/// Pearson correlation over all entries; `0` when either map is constant.
pub fn pearson_corr(a: &FeatureMap, b: &FeatureMap) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "feature shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(metrics::pearson(&a.data, &b.data))
}

/// `corr(hf_ir, hf_vis)^2 / (corr(lf_ir, lf_vis) + zeta)`.
pub fn decomp_loss(features: &DecompFeatures, zeta: f64) -> Result<f64> {
    if !(zeta.is_finite() && zeta > 1.0) {
        return Err(Error::InvalidParameter(format!("zeta must exceed 1, got {zeta}")));
    }
    let hf = pearson_corr(&features.hf_ir, &features.hf_vis)?;
    let lf = pearson_corr(&features.lf_ir, &features.lf_vis)?;
    Ok(hf * hf / (lf + zeta))
}

/// Intensity L1 to the pixelwise source maximum plus `mu` times the gradient
/// L1 to the pixelwise maximum source gradient, both per-pixel means.
pub fn sim_loss(
    ir: &GrayRaster,
    vis: &GrayRaster,
    fused: &GrayRaster,
    mu: f64,
    op: GradientOperator,
) -> Result<f64> {
    ir.ensure_same_dims(vis)?;
    ir.ensure_same_dims(fused)?;
    let n = ir.len() as f64;
    let intensity: f64 = ir
        .data()
        .iter()
        .zip(vis.data())
        .zip(fused.data())
        .map(|((a, b), f)| (f - a.max(*b)).abs())
        .sum::<f64>()
        / n;
    let (gi, gv, gf) = (
        gradient_magnitude(ir, op),
        gradient_magnitude(vis, op),
        gradient_magnitude(fused, op),
    );
    let gradient: f64 = gi
        .iter()
        .zip(&gv)
        .zip(&gf)
        .map(|((a, b), f)| (f - a.max(*b)).abs())
        .sum::<f64>()
        / n;
    Ok(intensity + mu * gradient)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub name: String,
    pub value: f64,
    pub weight: f64,
}

impl LossTerm {
    pub fn contribution(&self) -> f64 {
        self.weight * self.value
    }
}

/// Named terms with weights and their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: Vec<LossTerm>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(terms: Vec<LossTerm>) -> Self {
        let total = terms.iter().map(LossTerm::contribution).sum();
        Self { terms, total }
    }

    pub fn term(&self, name: &str) -> Option<&LossTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Recomputes the total from the parts.
    pub fn recomposed(&self) -> f64 {
        self.terms.iter().map(LossTerm::contribution).sum()
    }
}

fn term(name: &str, value: f64, weight: f64) -> LossTerm {
    LossTerm {
        name: name.to_string(),
        value,
        weight,
    }
}

/// Stage-one objective: both reconstructions plus `alpha1` times decomposition.
pub fn total_recon_loss(
    ir_pair: (&GrayRaster, &GrayRaster),
    vis_pair: (&GrayRaster, &GrayRaster),
    features: &DecompFeatures,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    Ok(LossBreakdown::from_terms(vec![
        term("ir_rec", recon_loss(ir_pair.0, ir_pair.1, weights.lambda)?, 1.0),
        term("vis_rec", recon_loss(vis_pair.0, vis_pair.1, weights.lambda)?, 1.0),
        term("dec", decomp_loss(features, weights.zeta)?, weights.alpha1),
    ]))
}

/// Stage-two objective: `alpha2 * dec + alpha3 * sim + alpha4 * ssl`.
pub fn total_fusion_loss(
    triple: &FusionTriple,
    features: &DecompFeatures,
    views: &AugmentedViews,
    theta: f64,
    weights: &LossWeights,
    op: GradientOperator,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let sim = sim_loss(triple.ir(), triple.vis(), triple.fused(), weights.mu, op)?;
    let ssl = augment::ssl_loss(&views.weak, &views.aggressive, theta)?;
    Ok(LossBreakdown::from_terms(vec![
        term("dec", decomp_loss(features, weights.zeta)?, weights.alpha2),
        term("sim", sim, weights.alpha3),
        term("ssl", ssl, weights.alpha4),
    ]))
}
