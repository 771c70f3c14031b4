//! Separable filtering on row-major `f64` planes.
//!
//! Border handling is reflect-101 (`dcb|abcd|cba`), extended periodically
//! when the kernel radius exceeds the plane size.

/// Normalized 1-D Gaussian with `2 * radius + 1` taps.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Radius `ceil(3 sigma)`, at least 1.
pub fn default_radius(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

/// Maps a possibly out-of-range coordinate into `0..n` by reflect-101.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Same-size separable convolution (rows then columns) with a symmetric kernel.
pub fn convolve_separable(data: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * row[reflect101(x as isize + t as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for (t, &k) in kernel.iter().enumerate() {
            let src = reflect101(y as isize + t as isize - r, height) * width;
            let dst = y * width;
            for x in 0..width {
                out[dst + x] += k * tmp[src + x];
            }
        }
    }
    out
}

/// Separable convolution keeping only positions where the kernel fits
/// entirely; returns the filtered plane and its `(width, height)`.
pub fn convolve_valid(
    data: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64],
) -> (Vec<f64>, usize, usize) {
    let n = kernel.len();
    if width < n || height < n {
        return (Vec::new(), 0, 0);
    }
    let (ow, oh) = (width - n + 1, height - n + 1);
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&row[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (t, &k) in kernel.iter().enumerate() {
            let src = (y + t) * ow;
            for x in 0..ow {
                out[y * ow + x] += k * tmp[src + x];
            }
        }
    }
    (out, ow, oh)
}

/// 3×3 Sobel responses `(gx, gy)` with reflect-101 borders.
///
/// `gx` responds to intensity increasing to the right, `gy` downward.
pub fn sobel(data: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; data.len()];
    let mut gy = vec![0.0; data.len()];
    let at = |x: isize, y: isize| data[reflect101(y, height) * width + reflect101(x, width)];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let (tl, tc, tr) = (at(x - 1, y - 1), at(x, y - 1), at(x + 1, y - 1));
            let (ml, mr) = (at(x - 1, y), at(x + 1, y));
            let (bl, bc, br) = (at(x - 1, y + 1), at(x, y + 1), at(x + 1, y + 1));
            let i = y as usize * width + x as usize;
            gx[i] = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
            gy[i] = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
        }
    }
    (gx, gy)
}
