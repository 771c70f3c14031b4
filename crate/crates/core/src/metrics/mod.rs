//! Fusion-quality metrics on `(infrared, visible, fused)` triples.
//!
//! Intensity-scaled metrics (SD, SF, AG, VIF and the SSIM constants) work on
//! the 0–255 code scale. Histogram-based metrics (EN, MI) bin values with the
//! codec rounding rule.

mod qabf;
mod ssim;
mod vif;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{encode_code, GrayRaster};

pub use qabf::{qabf, qabf_pair, QabfParams, QABF_PARAMS};
pub use ssim::{ssim, SSIM_C1, SSIM_C2, SSIM_RADIUS, SSIM_SIGMA};
pub use vif::{vif, vif_pair, VIF_NOISE_VAR, VIF_SCALES};

/// `(infrared, visible, fused)` with equal dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTriple {
    ir: GrayRaster,
    vis: GrayRaster,
    fused: GrayRaster,
}

impl FusionTriple {
    pub fn new(ir: GrayRaster, vis: GrayRaster, fused: GrayRaster) -> Result<Self> {
        ir.ensure_same_dims(&vis)?;
        ir.ensure_same_dims(&fused)?;
        Ok(Self { ir, vis, fused })
    }

    pub fn ir(&self) -> &GrayRaster {
        &self.ir
    }

    pub fn vis(&self) -> &GrayRaster {
        &self.vis
    }

    pub fn fused(&self) -> &GrayRaster {
        &self.fused
    }

    pub fn rotate180(&self) -> FusionTriple {
        FusionTriple {
            ir: self.ir.rotate180(),
            vis: self.vis.rotate180(),
            fused: self.fused.rotate180(),
        }
    }
}

/// How a two-source metric combines its per-source values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Mean,
}

impl Aggregation {
    pub fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Aggregation::Sum => a + b,
            Aggregation::Mean => (a + b) / 2.0,
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::InvalidParameter(format!(
                "aggregation must be sum or mean, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub mi: Aggregation,
    pub vif: Aggregation,
    pub ssim: Aggregation,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            mi: Aggregation::Sum,
            vif: Aggregation::Sum,
            ssim: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub en: f64,
    pub mi: f64,
    pub sd: f64,
    pub sf: f64,
    pub ag: f64,
    pub vif: f64,
    pub scd: f64,
    pub qabf: f64,
    pub ssim: f64,
}

impl MetricReport {
    /// Column names in table order.
    pub const NAMES: [&'static str; 9] = ["EN", "MI", "SD", "SF", "AG", "VIF", "SCD", "Qabf", "SSIM"];

    pub fn values(&self) -> [f64; 9] {
        [
            self.en, self.mi, self.sd, self.sf, self.ag, self.vif, self.scd, self.qabf, self.ssim,
        ]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        Self {
            en: v[0],
            mi: v[1],
            sd: v[2],
            sf: v[3],
            ag: v[4],
            vif: v[5],
            scd: v[6],
            qabf: v[7],
            ssim: v[8],
        }
    }

    /// Names of fields outside their admissible range.
    pub fn range_violations(&self) -> Vec<&'static str> {
        let tol = 1e-9;
        let mut bad = Vec::new();
        let mut check = |name, ok: bool| {
            if !ok {
                bad.push(name);
            }
        };
        check("EN", (-tol..=8.0 + tol).contains(&self.en));
        check("SSIM", (-1.0 - tol..=1.0 + tol).contains(&self.ssim));
        check("Qabf", (-tol..=1.0 + tol).contains(&self.qabf));
        check("SCD", (-2.0 - tol..=2.0 + tol).contains(&self.scd));
        check("MI", self.mi >= -tol);
        check("SD", self.sd >= 0.0);
        check("SF", self.sf >= 0.0);
        check("AG", self.ag >= 0.0);
        check("VIF", self.vif >= 0.0);
        bad
    }
}

pub(crate) fn scaled(image: &GrayRaster) -> Vec<f64> {
    image.data().iter().map(|v| v * 255.0).collect()
}

fn shannon(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Shannon entropy in bits over the 256-bin histogram.
pub fn entropy(image: &GrayRaster) -> f64 {
    let h = crate::imgio::histogram(image.data());
    shannon(h.bins.iter().copied(), h.total as f64)
}

/// Mutual information in bits from the 256×256 joint histogram.
pub fn mutual_information(a: &GrayRaster, b: &GrayRaster) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let mut joint = vec![0u64; 256 * 256];
    let mut pa = [0u64; 256];
    let mut pb = [0u64; 256];
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (i, j) = (encode_code(x) as usize, encode_code(y) as usize);
        joint[i * 256 + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for i in 0..256 {
        if pa[i] == 0 {
            continue;
        }
        for j in 0..256 {
            let c = joint[i * 256 + j];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (c as f64 * n / (pa[i] as f64 * pb[j] as f64)).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

pub fn fusion_mi(triple: &FusionTriple, agg: Aggregation) -> f64 {
    let a = mutual_information(&triple.fused, &triple.ir).expect("triple dims checked");
    let b = mutual_information(&triple.fused, &triple.vis).expect("triple dims checked");
    agg.combine(a, b)
}

/// Population standard deviation on the 0–255 scale.
pub fn std_dev(image: &GrayRaster) -> f64 {
    let v = scaled(image);
    // shifted by the first sample so flat images come out exactly zero
    let origin = v[0];
    let n = v.len() as f64;
    let offset = v.iter().map(|x| x - origin).sum::<f64>() / n;
    (v.iter().map(|x| (x - origin - offset) * (x - origin - offset)).sum::<f64>() / n).sqrt()
}

fn check_min_size(image: &GrayRaster, min: u32, what: &str) -> Result<()> {
    if image.width() < min || image.height() < min {
        return Err(Error::InvalidParameter(format!(
            "{what} needs at least {min}x{min} pixels, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Row and column frequencies: RMS of horizontal and vertical first differences.
pub fn row_column_frequency(image: &GrayRaster) -> Result<(f64, f64)> {
    check_min_size(image, 2, "spatial frequency")?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let v = scaled(image);
    let mut rf = 0.0;
    let mut cf = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let d = v[y * w + x + 1] - v[y * w + x];
                rf += d * d;
            }
            if y + 1 < h {
                let d = v[(y + 1) * w + x] - v[y * w + x];
                cf += d * d;
            }
        }
    }
    Ok((
        (rf / (h * (w - 1)) as f64).sqrt(),
        (cf / ((h - 1) * w) as f64).sqrt(),
    ))
}

/// `sqrt(RF^2 + CF^2)`.
pub fn spatial_frequency(image: &GrayRaster) -> Result<f64> {
    let (rf, cf) = row_column_frequency(image)?;
    Ok((rf * rf + cf * cf).sqrt())
}

/// Mean of `sqrt((dx^2 + dy^2) / 2)` over the `(H-1)×(W-1)` forward-difference grid.
pub fn average_gradient(image: &GrayRaster) -> Result<f64> {
    check_min_size(image, 2, "average gradient")?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let v = scaled(image);
    let mut acc = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let dx = v[y * w + x + 1] - v[y * w + x];
            let dy = v[(y + 1) * w + x] - v[y * w + x];
            acc += ((dx * dx + dy * dy) / 2.0).sqrt();
        }
    }
    Ok(acc / ((h - 1) * (w - 1)) as f64)
}

/// Pearson correlation; `0` when either argument is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson on unequal lengths");
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    if a.is_empty() || constant(a) || constant(b) {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// `corr(F - B, A) + corr(F - A, B)` with `A = ir`, `B = vis`, `F = fused`.
pub fn scd(triple: &FusionTriple) -> f64 {
    let (a, b, f) = (triple.ir.data(), triple.vis.data(), triple.fused.data());
    let f_minus_b: Vec<f64> = f.iter().zip(b).map(|(f, b)| f - b).collect();
    let f_minus_a: Vec<f64> = f.iter().zip(a).map(|(f, a)| f - a).collect();
    pearson(&f_minus_b, a) + pearson(&f_minus_a, b)
}

pub fn fusion_ssim(triple: &FusionTriple, agg: Aggregation) -> Result<f64> {
    Ok(agg.combine(
        ssim(&triple.fused, &triple.ir)?,
        ssim(&triple.fused, &triple.vis)?,
    ))
}

/// All nine metrics of a triple. EN, SD, SF and AG describe the fused image.
pub fn evaluate_all(triple: &FusionTriple, config: &MetricConfig) -> Result<MetricReport> {
    let f = &triple.fused;
    let ((en, sd), (sf, ag)) = rayon::join(
        || (entropy(f), std_dev(f)),
        || (spatial_frequency(f), average_gradient(f)),
    );
    let ((mi, scd), (vif, (qabf, ssim))) = rayon::join(
        || (fusion_mi(triple, config.mi), scd(triple)),
        || {
            rayon::join(
                || vif(triple, config.vif),
                || rayon::join(|| qabf(triple), || fusion_ssim(triple, config.ssim)),
            )
        },
    );
    Ok(MetricReport {
        en,
        mi,
        sd,
        sf: sf?,
        ag: ag?,
        vif: vif?,
        scd,
        qabf: qabf?,
        ssim: ssim?,
    })
}

/// Evaluates many triples in parallel, preserving input order.
pub fn evaluate_batch(triples: &[FusionTriple], config: &MetricConfig) -> Vec<Result<MetricReport>> {
    triples.par_iter().map(|t| evaluate_all(t, config)).collect()
}
