use crate::error::{Error, Result};
use crate::filter;
use crate::imgio::GrayRaster;

use super::scaled;

pub const SSIM_SIGMA: f64 = 1.5;
/// 11×11 window.
pub const SSIM_RADIUS: usize = 5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Single-scale SSIM on the 0–255 scale, averaged over the valid window positions.
pub fn ssim(a: &GrayRaster, b: &GrayRaster) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let win = 2 * SSIM_RADIUS as u32 + 1;
    if a.width() < win || a.height() < win {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs at least {win}x{win} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    let kernel = filter::gaussian_kernel(SSIM_SIGMA, SSIM_RADIUS);
    let x = scaled(a);
    let y = scaled(b);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();

    let blur = |d: &[f64]| filter::convolve_valid(d, w, h, &kernel).0;
    let (mu_x, mu_y) = (blur(&x), blur(&y));
    let (e_xx, e_yy, e_xy) = (blur(&xx), blur(&yy), blur(&xy));

    let n = mu_x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sxx = e_xx[i] - mx * mx;
        let syy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        acc += ((2.0 * mx * my + SSIM_C1) * (2.0 * sxy + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2));
    }
    Ok(acc / n as f64)
}
