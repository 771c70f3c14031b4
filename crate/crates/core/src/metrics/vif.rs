//! Pixel-domain visual information fidelity (VIFP).
//!
//! Four dyadic scales. At scale `s` (1-based) the Gaussian has
//! `sigma = (2^(5-s) + 1) / 5` and radius `ceil(3 sigma)`; scales after the
//! first low-pass and decimate both images by 2 before local statistics are
//! taken. Filtering keeps the image size with reflect-101 borders so a 32×32
//! input still yields all four scales.

use crate::error::{Error, Result};
use crate::filter;
use crate::imgio::GrayRaster;

use super::{scaled, Aggregation, FusionTriple};

pub const VIF_SCALES: usize = 4;
/// HVS noise variance on the 0–255 scale.
pub const VIF_NOISE_VAR: f64 = 2.0;
const EPS: f64 = 1e-10;

pub(crate) fn scale_sigma(scale: usize) -> f64 {
    ((1usize << (VIF_SCALES + 1 - scale)) + 1) as f64 / 5.0
}

fn decimate(data: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(nw * nh);
    for y in (0..h).step_by(2) {
        for x in (0..w).step_by(2) {
            out.push(data[y * w + x]);
        }
    }
    (out, nw, nh)
}

/// VIF of `distorted` against `reference`.
pub fn vif_pair(reference: &GrayRaster, distorted: &GrayRaster) -> Result<f64> {
    reference.ensure_same_dims(distorted)?;
    let min = 1u32 << (VIF_SCALES + 1);
    if reference.width() < min || reference.height() < min {
        return Err(Error::InvalidParameter(format!(
            "VIF needs at least {min}x{min} pixels for {VIF_SCALES} scales, got {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    let (mut w, mut h) = (reference.width() as usize, reference.height() as usize);
    let mut r = scaled(reference);
    let mut d = scaled(distorted);
    let mut num = 0.0;
    let mut den = 0.0;
    for scale in 1..=VIF_SCALES {
        let sigma = scale_sigma(scale);
        let kernel = filter::gaussian_kernel(sigma, filter::default_radius(sigma));
        let blur = |x: &[f64], w, h| filter::convolve_separable(x, w, h, &kernel);
        if scale > 1 {
            let (rr, nw, nh) = decimate(&blur(&r, w, h), w, h);
            let (dd, _, _) = decimate(&blur(&d, w, h), w, h);
            r = rr;
            d = dd;
            w = nw;
            h = nh;
        }
        let rr: Vec<f64> = r.iter().map(|v| v * v).collect();
        let dd: Vec<f64> = d.iter().map(|v| v * v).collect();
        let rd: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
        let (mu1, mu2) = (blur(&r, w, h), blur(&d, w, h));
        let (e11, e22, e12) = (blur(&rr, w, h), blur(&dd, w, h), blur(&rd, w, h));

        for i in 0..w * h {
            let mut s1 = (e11[i] - mu1[i] * mu1[i]).max(0.0);
            let s2 = (e22[i] - mu2[i] * mu2[i]).max(0.0);
            let s12 = e12[i] - mu1[i] * mu2[i];

            let mut g = s12 / (s1 + EPS);
            let mut sv = s2 - g * s12;
            if s1 < EPS {
                g = 0.0;
                sv = s2;
                s1 = 0.0;
            }
            if s2 < EPS {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = s2;
                g = 0.0;
            }
            if sv <= EPS {
                sv = EPS;
            }
            num += (1.0 + g * g * s1 / (sv + VIF_NOISE_VAR)).log10();
            den += (1.0 + s1 / VIF_NOISE_VAR).log10();
        }
    }
    if den <= 0.0 {
        // flat reference carries no information
        return Ok(0.0);
    }
    Ok((num / den).max(0.0))
}

/// Two-source VIF of the fused image, combined per `agg`.
pub fn vif(triple: &FusionTriple, agg: Aggregation) -> Result<f64> {
    let (a, b) = rayon::join(
        || vif_pair(triple.ir(), triple.fused()),
        || vif_pair(triple.vis(), triple.fused()),
    );
    Ok(agg.combine(a?, b?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: u32, h: u32, k: u32) -> GrayRaster {
        GrayRaster::from_fn(w, h, |x, y| ((x * k + y * 7 + x * y) % 31) as f64 / 30.0).unwrap()
    }

    #[test]
    fn scale_parameters() {
        let sigmas: Vec<f64> = (1..=4).map(scale_sigma).collect();
        assert_eq!(sigmas, vec![17.0 / 5.0, 9.0 / 5.0, 5.0 / 5.0, 3.0 / 5.0]);
    }

    #[test]
    fn self_fidelity_is_one() {
        let x = texture(40, 36, 3);
        assert!((vif_pair(&x, &x).unwrap() - 1.0).abs() < 1e-6);
        let t = FusionTriple::new(x.clone(), x.clone(), x).unwrap();
        assert!((vif(&t, Aggregation::Sum).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_fused_has_no_fidelity() {
        let a = texture(32, 32, 3);
        let b = texture(32, 32, 5);
        let f = GrayRaster::constant(32, 32, 0.5).unwrap();
        let t = FusionTriple::new(a, b, f).unwrap();
        assert!(vif(&t, Aggregation::Sum).unwrap() <= 0.05);
    }

    #[test]
    fn too_small_rejected() {
        let x = texture(31, 40, 3);
        assert!(vif_pair(&x, &x).is_err());
    }
}
