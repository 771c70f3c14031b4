//! Rasters, codecs, patch geometry and per-channel statistics.
//!
//! Pixels are held as `f64` in `[0, 1]`. The 8-bit code domain only appears
//! at the codec boundary: code `c` decodes to `c / 255` and a value `v`
//! encodes to `floor(v * 255 + 0.5)` clamped to `[0, 255]`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extensions picked up by directory scans.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm"];

/// Encode a real value to an 8-bit code with round-half-up.
#[inline]
pub fn encode_code(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[inline]
pub fn decode_code(c: u8) -> f64 {
    f64::from(c) / 255.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
        }
    }
}

/// Single-plane image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl GrayRaster {
    /// Builds a raster, rejecting empty sizes, length mismatches and values
    /// outside `[0, 1]`.
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "raster size must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Clamps every value into `[0, 1]` instead of rejecting.
    pub fn from_clamped(width: u32, height: u32, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: u32, height: u32, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn crop(&self, rect: Rect) -> Result<GrayRaster> {
        rect.check_within(self.width, self.height)?;
        Ok(GrayRaster {
            width: rect.w,
            height: rect.h,
            data: crop_plane(&self.data, self.width, rect),
        })
    }

    /// Rotates by 180 degrees.
    pub fn rotate180(&self) -> GrayRaster {
        let mut data = self.data.clone();
        data.reverse();
        GrayRaster { data, ..*self }
    }

    pub fn transpose(&self) -> GrayRaster {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[x * h + y] = self.data[y * w + x];
            }
        }
        GrayRaster {
            width: self.height,
            height: self.width,
            data,
        }
    }

    pub fn ensure_same_dims(&self, other: &GrayRaster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn to_rgb(&self) -> RgbRaster {
        RgbRaster {
            width: self.width,
            height: self.height,
            planes: [self.data.clone(), self.data.clone(), self.data.clone()],
        }
    }
}

/// Three-plane (R, G, B) image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    width: u32,
    height: u32,
    planes: [Vec<f64>; 3],
}

impl RgbRaster {
    pub fn new(width: u32, height: u32, planes: [Vec<f64>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "raster size must be at least 1x1, got {width}x{height}"
            )));
        }
        let n = width as usize * height as usize;
        for plane in &planes {
            if plane.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "plane of {} values for a {width}x{height} raster",
                    plane.len()
                )));
            }
            if let Some(v) = plane.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParameter(format!(
                    "pixel value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn constant(width: u32, height: u32, rgb: [f64; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.map(|v| vec![v; n]))
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f64; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (plane, v) in planes.iter_mut().zip(px) {
                    plane.push(v);
                }
            }
        }
        Self::new(width, height, planes)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn plane(&self, channel: Channel) -> &[f64] {
        &self.planes[channel.index()]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = y as usize * self.width as usize + x as usize;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    /// Applies `f` to every value of one plane, clamping the result into `[0, 1]`.
    pub fn map_plane(&self, channel: Channel, f: impl Fn(f64) -> f64) -> RgbRaster {
        let mut out = self.clone();
        for v in &mut out.planes[channel.index()] {
            *v = f(*v).clamp(0.0, 1.0);
        }
        out
    }

    pub fn plane_raster(&self, channel: Channel) -> GrayRaster {
        GrayRaster {
            width: self.width,
            height: self.height,
            data: self.planes[channel.index()].clone(),
        }
    }

    /// Values as 8-bit codes, interleaved RGB.
    pub fn to_codes(&self) -> Vec<u8> {
        let n = self.planes[0].len();
        let mut out = Vec::with_capacity(n * 3);
        for i in 0..n {
            for plane in &self.planes {
                out.push(encode_code(plane[i]));
            }
        }
        out
    }
}

/// Axis-aligned rectangle `(x, y, w, h)` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    fn check_within(&self, width: u32, height: u32) -> Result<()> {
        let fits = self.w >= 1
            && self.h >= 1
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height);
        if fits {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width,
                height,
            })
        }
    }
}

fn crop_plane(plane: &[f64], width: u32, rect: Rect) -> Vec<f64> {
    let mut out = Vec::with_capacity(rect.w as usize * rect.h as usize);
    for row in rect.y..rect.y + rect.h {
        let start = row as usize * width as usize + rect.x as usize;
        out.extend_from_slice(&plane[start..start + rect.w as usize]);
    }
    out
}

fn decode_dynamic(img: DynamicImage, path: &Path) -> Result<(RgbRaster, bool)> {
    let (width, height) = (img.width(), img.height());
    match img.color() {
        ColorType::L8 | ColorType::La8 => {
            let gray = img.into_luma8();
            let plane: Vec<f64> = gray.as_raw().iter().map(|&c| decode_code(c)).collect();
            let raster = RgbRaster::new(width, height, [plane.clone(), plane.clone(), plane])?;
            Ok((raster, true))
        }
        ColorType::Rgb8 | ColorType::Rgba8 => {
            let rgb = img.into_rgb8();
            let n = width as usize * height as usize;
            let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
            for px in rgb.as_raw().chunks_exact(3) {
                for (plane, &c) in planes.iter_mut().zip(px) {
                    plane.push(decode_code(c));
                }
            }
            Ok((RgbRaster::new(width, height, planes)?, false))
        }
        _ => Err(Error::UnsupportedDepth {
            path: path.to_path_buf(),
        }),
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads an 8-bit RGB or grayscale PNG/PGM; grayscale is replicated to three planes.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbRaster> {
    let path = path.as_ref();
    decode_dynamic(open_image(path)?, path).map(|(raster, _)| raster)
}

/// Loads an image as a single plane. Grayscale sources are taken as-is;
/// colour sources go through [`to_gray`].
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayRaster> {
    let path = path.as_ref();
    let (raster, is_gray) = decode_dynamic(open_image(path)?, path)?;
    Ok(if is_gray {
        raster.plane_raster(Channel::R)
    } else {
        to_gray(&raster)
    })
}

fn write_image(img: DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

/// Writes an 8-bit RGB PNG.
pub fn save_rgb(raster: &RgbRaster, path: impl AsRef<Path>) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(raster.width, raster.height, raster.to_codes())
            .expect("buffer length matches raster dimensions");
    write_image(DynamicImage::ImageRgb8(buf), path.as_ref())
}

/// Writes an 8-bit grayscale PNG.
pub fn save_gray(raster: &GrayRaster, path: impl AsRef<Path>) -> Result<()> {
    let codes = raster.data.iter().map(|&v| encode_code(v)).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(raster.width, raster.height, codes)
        .expect("buffer length matches raster dimensions");
    write_image(DynamicImage::ImageLuma8(buf), path.as_ref())
}

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// BT.601 luma.
pub fn to_gray(raster: &RgbRaster) -> GrayRaster {
    let [r, g, b] = &raster.planes;
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
        })
        .collect();
    GrayRaster {
        width: raster.width,
        height: raster.height,
        data,
    }
}

/// Output pixel `(i, j)` is input pixel `(x + i, y + j)`.
pub fn crop(raster: &RgbRaster, rect: Rect) -> Result<RgbRaster> {
    rect.check_within(raster.width, raster.height)?;
    Ok(RgbRaster {
        width: rect.w,
        height: rect.h,
        planes: [
            crop_plane(&raster.planes[0], raster.width, rect),
            crop_plane(&raster.planes[1], raster.width, rect),
            crop_plane(&raster.planes[2], raster.width, rect),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    #[default]
    Grid,
    Random,
}

impl std::str::FromStr for CropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(CropMode::Grid),
            "random" => Ok(CropMode::Random),
            other => Err(Error::InvalidParameter(format!(
                "crop mode must be grid or random, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for CropMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CropMode::Grid => "grid",
            CropMode::Random => "random",
        })
    }
}

/// A square crop together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub raster: RgbRaster,
    pub source_id: String,
    pub origin: (u32, u32),
}

impl Patch {
    /// File name used when the patch is written to disk.
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.png", self.source_id, self.origin.0, self.origin.1)
    }
}

/// Cuts `size`×`size` patches out of `raster`.
///
/// Grid mode tiles from `(0, 0)` without overlap and drops the right/bottom
/// remainder. Random mode draws `count` origins uniformly from a ChaCha8
/// stream seeded with `seed`.
pub fn grid_patches(
    raster: &RgbRaster,
    source_id: &str,
    size: u32,
    seed: u64,
    mode: CropMode,
    count: usize,
) -> Result<Vec<Patch>> {
    if size == 0 || size > raster.width.min(raster.height) {
        return Err(Error::InvalidParameter(format!(
            "patch size {size} does not fit a {}x{} image",
            raster.width, raster.height
        )));
    }
    let origins: Vec<(u32, u32)> = match mode {
        CropMode::Grid => {
            let (nx, ny) = (raster.width / size, raster.height / size);
            (0..ny)
                .flat_map(|j| (0..nx).map(move |i| (i * size, j * size)))
                .collect()
        }
        CropMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    (
                        rng.random_range(0..=raster.width - size),
                        rng.random_range(0..=raster.height - size),
                    )
                })
                .collect()
        }
    };
    origins
        .into_iter()
        .map(|(x, y)| {
            Ok(Patch {
                raster: crop(raster, Rect::new(x, y, size, size))?,
                source_id: source_id.to_string(),
                origin: (x, y),
            })
        })
        .collect()
}

/// Mean of one plane on the 8-bit scale `[0, 255]`.
pub fn channel_mean(raster: &RgbRaster, channel: Channel) -> f64 {
    plane_mean(raster.plane(channel)) * 255.0
}

pub(crate) fn plane_mean(plane: &[f64]) -> f64 {
    plane.iter().sum::<f64>() / plane.len() as f64
}

/// 256-bin histogram of 8-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub bins: [u64; 256],
    pub total: u64,
}

impl Default for Histogram256 {
    fn default() -> Self {
        Self {
            bins: [0; 256],
            total: 0,
        }
    }
}

impl Histogram256 {
    pub fn add(&mut self, values: &[f64]) {
        for &v in values {
            self.bins[encode_code(v) as usize] += 1;
        }
        self.total += values.len() as u64;
    }

    pub fn merge(&mut self, other: &Histogram256) {
        for (a, b) in self.bins.iter_mut().zip(other.bins.iter()) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Bin frequencies; all zero for an empty histogram.
    pub fn normalized(&self) -> [f64; 256] {
        let mut out = [0.0; 256];
        if self.total > 0 {
            let total = self.total as f64;
            for (o, &b) in out.iter_mut().zip(self.bins.iter()) {
                *o = b as f64 / total;
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for (i, c) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{i},{c}");
        }
        out
    }
}

/// Histogram of a plane, bin = `round(v * 255)`.
pub fn histogram(values: &[f64]) -> Histogram256 {
    let mut h = Histogram256::default();
    h.add(values);
    h
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if is_image && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// File stem restricted to `[A-Za-z0-9_-]`; other characters become `-`.
pub fn sanitized_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy())
        .unwrap_or_default()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '-'
            }
        })
        .collect()
}
