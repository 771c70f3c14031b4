//! Gradient-based edge preservation (Xydeas–Petrović Qabf).

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::filter;
use crate::imgio::GrayRaster;

use super::FusionTriple;

/// Sigmoid constants for the strength (`g`) and orientation (`alpha`) scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QabfParams {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
}

pub const QABF_PARAMS: QabfParams = QabfParams {
    gamma_g: 0.9994,
    kappa_g: -15.0,
    sigma_g: 0.5,
    gamma_a: 0.9879,
    kappa_a: -22.0,
    sigma_a: 0.8,
};

impl QabfParams {
    pub fn strength_score(&self, g: f64) -> f64 {
        self.gamma_g / (1.0 + (self.kappa_g * (g - self.sigma_g)).exp())
    }

    pub fn orientation_score(&self, a: f64) -> f64 {
        self.gamma_a / (1.0 + (self.kappa_a * (a - self.sigma_a)).exp())
    }

    /// Score of a perfectly preserved edge.
    pub fn perfect(&self) -> f64 {
        self.strength_score(1.0) * self.orientation_score(1.0)
    }
}

struct EdgeField {
    magnitude: Vec<f64>,
    angle: Vec<f64>,
}

fn edge_field(image: &GrayRaster) -> EdgeField {
    let (gx, gy) = filter::sobel(image.data(), image.width() as usize, image.height() as usize);
    let magnitude = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let angle = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| {
            if x == 0.0 {
                if y == 0.0 {
                    0.0
                } else {
                    FRAC_PI_2
                }
            } else {
                (y / x).atan()
            }
        })
        .collect();
    EdgeField { magnitude, angle }
}

/// Per-pixel preservation scores `Q^{XF}` of `source` edges in `fused`.
fn preservation(source: &EdgeField, fused: &EdgeField, params: &QabfParams) -> Vec<f64> {
    (0..source.magnitude.len())
        .map(|i| {
            let (gs, gf) = (source.magnitude[i], fused.magnitude[i]);
            let hi = gs.max(gf);
            let strength = if hi > 0.0 { gs.min(gf) / hi } else { 0.0 };
            let orientation = 1.0 - (fused.angle[i] - source.angle[i]).abs() / FRAC_PI_2;
            params.strength_score(strength) * params.orientation_score(orientation)
        })
        .collect()
}

/// Qabf with explicit constants; `0` when neither source has any gradient.
pub fn qabf_pair(
    a: &GrayRaster,
    b: &GrayRaster,
    fused: &GrayRaster,
    params: &QabfParams,
) -> Result<f64> {
    a.ensure_same_dims(b)?;
    a.ensure_same_dims(fused)?;
    if a.width() < 3 || a.height() < 3 {
        return Err(Error::InvalidParameter(format!(
            "Qabf needs at least 3x3 pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (ea, eb, ef) = (edge_field(a), edge_field(b), edge_field(fused));
    let qa = preservation(&ea, &ef, params);
    let qb = preservation(&eb, &ef, params);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..qa.len() {
        let (wa, wb) = (ea.magnitude[i], eb.magnitude[i]);
        num += qa[i] * wa + qb[i] * wb;
        den += wa + wb;
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

pub fn qabf(triple: &FusionTriple) -> Result<f64> {
    qabf_pair(triple.ir(), triple.vis(), triple.fused(), &QABF_PARAMS)
}
