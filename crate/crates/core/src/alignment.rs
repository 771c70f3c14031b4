//! Top-K selective channel alignment.
//!
//! External patches are ranked by how close their per-channel mean
//! intensities are to the target dataset's, the `k` closest are kept, and a
//! single per-channel gamma `v -> v^(1/gamma)` is fitted on the selection and
//! applied to every selected patch.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{self, Channel, CropMode, Patch, RgbRaster};

/// Lower/upper end of the bisection bracket for `GammaMode::MeanExact`.
pub const GAMMA_BRACKET: (f64, f64) = (1.0 / 64.0, 64.0);
/// Maximum tolerated gap between fitted and target mean, `[0, 1]` scale.
pub const MEAN_TOLERANCE: f64 = 1e-6;
const BISECTION_STEPS: usize = 200;

/// Per-channel mean intensities on the 8-bit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean_r: f64,
    pub mean_g: f64,
    pub mean_b: f64,
}

impl ChannelStats {
    pub fn from_array(m: [f64; 3]) -> Self {
        Self {
            mean_r: m[0],
            mean_g: m[1],
            mean_b: m[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.mean_r, self.mean_g, self.mean_b]
    }

    pub fn get(&self, channel: Channel) -> f64 {
        self.to_array()[channel.index()]
    }

    pub fn of_raster(raster: &RgbRaster) -> Self {
        Self::from_array(Channel::ALL.map(|c| imgio::channel_mean(raster, c)))
    }

    /// Mean over patches of per-patch channel means.
    pub fn mean_of<'a>(rasters: impl IntoIterator<Item = &'a RgbRaster>) -> Result<Self> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for r in rasters {
            let s = Self::of_raster(r).to_array();
            for c in 0..3 {
                sum[c] += s[c];
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("no patches to average".into()));
        }
        Ok(Self::from_array(sum.map(|s| s / n as f64)))
    }
}

/// Per-channel gamma exponents; `1` is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTriple {
    pub gamma_r: f64,
    pub gamma_g: f64,
    pub gamma_b: f64,
}

impl GammaTriple {
    pub const IDENTITY: GammaTriple = GammaTriple {
        gamma_r: 1.0,
        gamma_g: 1.0,
        gamma_b: 1.0,
    };

    pub fn new(gamma_r: f64, gamma_g: f64, gamma_b: f64) -> Result<Self> {
        let g = Self {
            gamma_r,
            gamma_g,
            gamma_b,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma, gamma)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.gamma_r, self.gamma_g, self.gamma_b]
    }

    pub fn get(&self, channel: Channel) -> f64 {
        self.to_array()[channel.index()]
    }

    fn validate(&self) -> Result<()> {
        for g in self.to_array() {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be positive and finite, got {g}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPatch {
    pub patch: Patch,
    pub diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// `gamma = ln(source/255) / ln(target/255)`: maps the aggregate mean exactly.
    #[default]
    ClosedForm,
    /// Bisection so the empirical mean of the transformed pixels hits the target.
    MeanExact,
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" => Ok(GammaMode::ClosedForm),
            "mean_exact" => Ok(GammaMode::MeanExact),
            other => Err(Error::InvalidParameter(format!(
                "gamma mode must be closed_form or mean_exact, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for GammaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GammaMode::ClosedForm => "closed_form",
            GammaMode::MeanExact => "mean_exact",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub k: usize,
    pub patch_size: u32,
    pub gamma_mode: GammaMode,
    pub seed: u64,
    pub crop_mode: CropMode,
    /// Patches drawn per image in random crop mode.
    pub patches_per_image: usize,
}

impl AlignmentConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            patch_size: 64,
            gamma_mode: GammaMode::ClosedForm,
            seed: 0,
            crop_mode: CropMode::Grid,
            patches_per_image: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.patch_size < 8 {
            return Err(Error::InvalidParameter(format!(
                "patch size must be at least 8, got {}",
                self.patch_size
            )));
        }
        if self.crop_mode == CropMode::Random && self.patches_per_image == 0 {
            return Err(Error::InvalidParameter(
                "random cropping needs at least one patch per image".into(),
            ));
        }
        Ok(())
    }
}

/// Channel statistics of the target patch set.
pub fn target_stats(patches: &[Patch]) -> Result<ChannelStats> {
    if patches.is_empty() {
        return Err(Error::Empty("target patch list is empty".into()));
    }
    ChannelStats::mean_of(patches.iter().map(|p| &p.raster))
}

/// Sum over channels of `|patch mean - target mean|`, 8-bit scale.
pub fn patch_diff(patch: &Patch, target: &ChannelStats) -> f64 {
    let own = ChannelStats::of_raster(&patch.raster);
    Channel::ALL
        .iter()
        .map(|&c| (own.get(c) - target.get(c)).abs())
        .sum()
}

/// Diffs are ranked on a grid of `2^-20` intensity levels, so diffs that are
/// mathematically equal but reached through different rounding still tie.
pub const DIFF_RESOLUTION: f64 = 1.0 / (1u64 << 20) as f64;

/// Ranking key of a diff: its index on the [`DIFF_RESOLUTION`] grid.
pub fn diff_key(diff: f64) -> u64 {
    (diff / DIFF_RESOLUTION).round() as u64
}

fn rank_order(a: (f64, &Patch), b: (f64, &Patch)) -> Ordering {
    diff_key(a.0)
        .cmp(&diff_key(b.0))
        .then_with(|| a.1.source_id.cmp(&b.1.source_id))
        .then_with(|| a.1.origin.cmp(&b.1.origin))
}

/// The `k` patches closest to `target`, ascending by diff; ties (equal
/// [`diff_key`]) go to the smaller `(source_id, origin)`.
pub fn select_top_k(patches: &[Patch], target: &ChannelStats, k: usize) -> Result<Vec<RankedPatch>> {
    if k > patches.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {} candidate patches",
            patches.len()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<(f64, usize)> = patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| (patch_diff(p, target), i))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| {
        rank_order((a.0, &patches[a.1]), (b.0, &patches[b.1]))
    };
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, order);
        ranked.truncate(k);
    }
    ranked.sort_by(order);
    Ok(ranked
        .into_iter()
        .map(|(diff, i)| RankedPatch {
            patch: patches[i].clone(),
            diff,
        })
        .collect())
}

/// Distinct pixel values of one channel with their multiplicities.
#[derive(Debug, Clone, Default)]
pub struct PixelPopulation {
    values: Vec<(f64, u64)>,
    total: u64,
}

impl PixelPopulation {
    pub fn from_patches(patches: &[Patch], channel: Channel) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for p in patches {
            for &v in p.raster.plane(channel) {
                *counts.entry(v.to_bits()).or_default() += 1;
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_values(values: &[f64]) -> Self {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for &v in values {
            *counts.entry(v.to_bits()).or_default() += 1;
        }
        Self::from_counts(counts)
    }

    fn from_counts(counts: BTreeMap<u64, u64>) -> Self {
        let total = counts.values().sum();
        Self {
            values: counts.into_iter().map(|(b, n)| (f64::from_bits(b), n)).collect(),
            total,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Mean on the `[0, 1]` scale.
    pub fn mean(&self) -> f64 {
        self.transformed_mean(1.0)
    }

    /// Mean of `v^(1/gamma)` on the `[0, 1]` scale.
    pub fn transformed_mean(&self, gamma: f64) -> f64 {
        let e = 1.0 / gamma;
        let sum: f64 = self
            .values
            .iter()
            .map(|&(v, n)| gamma_map(v, e) * n as f64)
            .sum();
        sum / self.total as f64
    }

    fn single_value(&self) -> Option<f64> {
        match self.values.as_slice() {
            [(v, _)] => Some(*v),
            _ => None,
        }
    }
}

#[inline]
fn gamma_map(v: f64, exponent: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        v.powf(exponent)
    }
}

fn check_open_mean(name: &str, mean: f64) -> Result<()> {
    if mean.is_finite() && mean > 0.0 && mean < 255.0 {
        Ok(())
    } else {
        Err(Error::GammaFit(format!(
            "{name} mean {mean} is not strictly inside (0, 255)"
        )))
    }
}

/// `ln(source/255) / ln(target/255)`.
pub fn fit_gamma_closed_form(source_mean: f64, target_mean: f64) -> Result<f64> {
    check_open_mean("source", source_mean)?;
    check_open_mean("target", target_mean)?;
    Ok((source_mean / 255.0).ln() / (target_mean / 255.0).ln())
}

/// Gamma such that the mean of `v^(1/gamma)` over `population` equals
/// `target_mean / 255`, found by bisection in log-gamma over [`GAMMA_BRACKET`].
pub fn fit_gamma_mean_exact(population: &PixelPopulation, target_mean: f64) -> Result<f64> {
    if population.is_empty() {
        return Err(Error::Empty("no pixels to fit gamma on".into()));
    }
    check_open_mean("source", population.mean() * 255.0)?;
    check_open_mean("target", target_mean)?;
    if let Some(v) = population.single_value() {
        // constant population: the transformed mean is v^(1/gamma) itself
        return fit_gamma_closed_form(v * 255.0, target_mean);
    }
    let t = target_mean / 255.0;
    let (mut lo, mut hi) = (GAMMA_BRACKET.0.ln(), GAMMA_BRACKET.1.ln());
    let (f_lo, f_hi) = (
        population.transformed_mean(lo.exp()),
        population.transformed_mean(hi.exp()),
    );
    if t < f_lo - MEAN_TOLERANCE || t > f_hi + MEAN_TOLERANCE {
        return Err(Error::GammaFit(format!(
            "target mean {target_mean} not reachable for gamma in [1/64, 64] \
             (reachable {:.4}..{:.4})",
            f_lo * 255.0,
            f_hi * 255.0
        )));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if population.transformed_mean(mid.exp()) < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let gamma = (0.5 * (lo + hi)).exp();
    let reached = population.transformed_mean(gamma);
    if (reached - t).abs() > MEAN_TOLERANCE {
        return Err(Error::GammaFit(format!(
            "bisection stalled at mean {} for target {target_mean}",
            reached * 255.0
        )));
    }
    Ok(gamma)
}

/// Fits one channel's gamma. `MeanExact` needs the selected patches.
pub fn fit_gamma(
    source_mean: f64,
    target_mean: f64,
    mode: GammaMode,
    patches: Option<&[Patch]>,
    channel: Channel,
) -> Result<f64> {
    match mode {
        GammaMode::ClosedForm => fit_gamma_closed_form(source_mean, target_mean),
        GammaMode::MeanExact => {
            check_open_mean("source", source_mean)?;
            let patches = patches.ok_or_else(|| {
                Error::InvalidParameter("mean_exact gamma fitting needs the selected patches".into())
            })?;
            fit_gamma_mean_exact(&PixelPopulation::from_patches(patches, channel), target_mean)
        }
    }
}

/// Maps every value `v` of channel `c` to `v^(1/gamma_c)`.
pub fn apply_gamma(raster: &RgbRaster, gammas: &GammaTriple) -> Result<RgbRaster> {
    gammas.validate()?;
    let mut out = raster.clone();
    for c in Channel::ALL {
        let g = gammas.get(c);
        if g != 1.0 {
            let e = 1.0 / g;
            out = out.map_plane(c, |v| gamma_map(v, e));
        }
    }
    Ok(out)
}

/// Result of aligning an in-memory patch set.
#[derive(Debug, Clone)]
pub struct AlignmentOutcome {
    pub selected: Vec<RankedPatch>,
    pub aligned: Vec<Patch>,
    pub report: AlignmentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub target: ChannelStats,
    /// Aggregate means of the selected external patches before the transform.
    pub before: ChannelStats,
    /// Same after the transform, before re-quantization.
    pub after: ChannelStats,
    pub gamma: GammaTriple,
    pub gamma_mode: GammaMode,
    pub k: usize,
    pub candidate_count: usize,
    pub target_patch_count: usize,
}

impl AlignmentReport {
    pub fn abs_diff_before(&self, channel: Channel) -> f64 {
        (self.before.get(channel) - self.target.get(channel)).abs()
    }

    pub fn abs_diff_after(&self, channel: Channel) -> f64 {
        (self.after.get(channel) - self.target.get(channel)).abs()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "channel,target_mean,external_mean_before,external_mean_after,gamma,abs_diff_before,abs_diff_after\n",
        );
        for c in Channel::ALL {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.name(),
                self.target.get(c),
                self.before.get(c),
                self.after.get(c),
                self.gamma.get(c),
                self.abs_diff_before(c),
                self.abs_diff_after(c)
            );
        }
        out
    }
}

/// Runs ranking, selection, gamma fitting and transformation on patch sets.
pub fn align_patches(
    external: &[Patch],
    target: &[Patch],
    config: &AlignmentConfig,
) -> Result<AlignmentOutcome> {
    config.validate()?;
    if external.is_empty() {
        return Err(Error::Empty("no external patches".into()));
    }
    let target_means = target_stats(target)?;
    let selected = select_top_k(external, &target_means, config.k)?;
    let selected_patches: Vec<Patch> = selected.iter().map(|r| r.patch.clone()).collect();
    let before = ChannelStats::mean_of(selected_patches.iter().map(|p| &p.raster))?;

    let fitted: Vec<f64> = Channel::ALL
        .par_iter()
        .map(|&c| {
            fit_gamma(
                before.get(c),
                target_means.get(c),
                config.gamma_mode,
                Some(&selected_patches),
                c,
            )
        })
        .collect::<Result<_>>()?;
    let gamma = GammaTriple::new(fitted[0], fitted[1], fitted[2])?;

    let aligned: Vec<Patch> = selected_patches
        .par_iter()
        .map(|p| {
            Ok(Patch {
                raster: apply_gamma(&p.raster, &gamma)?,
                source_id: p.source_id.clone(),
                origin: p.origin,
            })
        })
        .collect::<Result<_>>()?;
    let after = ChannelStats::mean_of(aligned.iter().map(|p| &p.raster))?;

    Ok(AlignmentOutcome {
        report: AlignmentReport {
            target: target_means,
            before,
            after,
            gamma,
            gamma_mode: config.gamma_mode,
            k: config.k,
            candidate_count: external.len(),
            target_patch_count: target.len(),
        },
        selected,
        aligned,
    })
}

/// An image that could not be decoded during a batch scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Crops every decodable image of `dir` into patches. Image `i` (in sorted
/// file order) uses seed `seed ^ i` in random mode.
pub fn load_patches(dir: &Path, config: &AlignmentConfig) -> Result<(Vec<Patch>, Vec<SkippedFile>)> {
    let paths = imgio::list_images(dir)?;
    let loaded: Vec<(PathBuf, Result<Vec<Patch>>)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let patches = imgio::load_rgb(path).and_then(|img| {
                imgio::grid_patches(
                    &img,
                    &imgio::sanitized_stem(path),
                    config.patch_size,
                    config.seed ^ i as u64,
                    config.crop_mode,
                    config.patches_per_image,
                )
            });
            (path.clone(), patches)
        })
        .collect();
    let mut patches = Vec::new();
    let mut skipped = Vec::new();
    for (path, result) in loaded {
        match result {
            Ok(p) => patches.extend(p),
            Err(e) if e.is_io() => return Err(e),
            Err(e) => skipped.push(SkippedFile {
                path,
                reason: e.to_string(),
            }),
        }
    }
    if patches.is_empty() {
        return Err(Error::Empty(format!(
            "no usable images in {}",
            dir.display()
        )));
    }
    Ok((patches, skipped))
}

#[derive(Debug, Clone)]
pub struct AlignmentRun {
    pub report: AlignmentReport,
    pub written: Vec<PathBuf>,
    pub skipped: Vec<SkippedFile>,
}

pub const REPORT_CSV: &str = "alignment_report.csv";
pub const REPORT_JSON: &str = "alignment_report.json";
pub const PATCH_SUBDIR: &str = "patches";

#[derive(Serialize)]
struct Provenance<'a> {
    source_id: &'a str,
    x: u32,
    y: u32,
    diff: f64,
    file: String,
}

#[derive(Serialize)]
struct ReportSidecar<'a> {
    config: &'a AlignmentConfig,
    report: &'a AlignmentReport,
    patches: Vec<Provenance<'a>>,
    skipped: &'a [SkippedFile],
}

/// End-to-end alignment of two image directories.
///
/// Writes the aligned patches under `out_dir/patches/`, plus
/// `alignment_report.csv` and `alignment_report.json` in `out_dir`.
pub fn align_dataset(
    external_dir: &Path,
    target_dir: &Path,
    out_dir: &Path,
    config: &AlignmentConfig,
) -> Result<AlignmentRun> {
    config.validate()?;
    let (target, mut skipped) = load_patches(target_dir, config)?;
    let (external, skipped_ext) = load_patches(external_dir, config)?;
    skipped.extend(skipped_ext);
    let outcome = align_patches(&external, &target, config)?;

    let patch_dir = out_dir.join(PATCH_SUBDIR);
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let written: Vec<PathBuf> = outcome
        .aligned
        .par_iter()
        .map(|p| {
            let path = patch_dir.join(p.file_name());
            imgio::save_rgb(&p.raster, &path)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let csv_path = out_dir.join(REPORT_CSV);
    fs::write(&csv_path, outcome.report.to_csv()).map_err(|e| Error::io(&csv_path, e))?;

    let sidecar = ReportSidecar {
        config,
        report: &outcome.report,
        patches: outcome
            .selected
            .iter()
            .map(|r| Provenance {
                source_id: &r.patch.source_id,
                x: r.patch.origin.0,
                y: r.patch.origin.1,
                diff: r.diff,
                file: r.patch.file_name(),
            })
            .collect(),
        skipped: &skipped,
    };
    let json_path = out_dir.join(REPORT_JSON);
    let json = serde_json::to_string_pretty(&sidecar).expect("report serializes");
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    Ok(AlignmentRun {
        report: outcome.report,
        written,
        skipped,
    })
}
