//! Canny edge detection on the Rec. 601 luma plane.
//!
//! Stages: 5×5 Gaussian blur, Sobel gradients, non-maximum suppression along
//! the quantized gradient direction, and double-threshold hysteresis with
//! 8-connectivity. Borders replicate the nearest pixel. Thresholds apply to
//! the Sobel magnitude `sqrt(gx² + gy²)` of intensities on the 0–255 scale.

use serde::{Deserialize, Serialize};

use super::{KpiError, Region};
use crate::image::Pixels;

/// Blur kernel radius; the kernel is `2 * RADIUS + 1` pixels wide.
pub const BLUR_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { sigma: 1.4, low: 50.0, high: 150.0 }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<(), KpiError> {
        if !(self.sigma > 0.0) || !(self.low >= 0.0) || !(self.high >= self.low) {
            return Err(KpiError::InvalidDefinition(format!(
                "canny parameters need sigma > 0 and 0 <= low <= high, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Binary edge map over a region, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMask {
    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// Luma on the 0–255 scale. Integer weights keep white at exactly 255.
#[inline]
pub fn luma([r, g, b]: [f64; 3]) -> f64 {
    (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0
}

/// Runs Canny on the pixels of `region` alone.
pub fn canny<P: Pixels + ?Sized>(img: &P, region: &Region, params: &CannyParams) -> Result<EdgeMask, KpiError> {
    params.validate()?;
    region.check(img.width(), img.height())?;
    let side = 2 * BLUR_RADIUS + 1;
    if region.w < side || region.h < side {
        return Err(KpiError::RegionTooSmall { w: region.w, h: region.h });
    }
    let (w, h) = (region.w, region.h);
    let plane: Vec<f64> = region.coords().map(|(x, y)| luma(img.rgb(x, y))).collect();
    let blurred = gaussian_blur(&plane, w, h, params.sigma);
    let (gx, gy) = sobel(&blurred, w, h);
    let magnitude: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let thin = non_maximum_suppression(&magnitude, &gx, &gy, w, h);
    Ok(EdgeMask { width: w, height: h, edges: hysteresis(&thin, w, h, params.low, params.high) })
}

fn gaussian_kernel(sigma: f64) -> [f64; 2 * BLUR_RADIUS + 1] {
    let mut k = [0.0; 2 * BLUR_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - BLUR_RADIUS as f64;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn clamped(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable blur: horizontal pass, then vertical pass.
fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = BLUR_RADIUS as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * row[clamped(x as isize + d, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * tmp[clamped(y as isize + d, h) * w + x]).sum();
        }
    }
    out
}

fn sobel(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| src[clamped(y, h) * w + clamped(x, w)];
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

const TAN_22_5: f64 = std::f64::consts::SQRT_2 - 1.0;
const TAN_67_5: f64 = std::f64::consts::SQRT_2 + 1.0;

/// Keeps a pixel when its magnitude is at least that of both neighbors along
/// the gradient direction (quantized to 0°, 45°, 90°, 135°). Neighbors
/// outside the region count as zero.
fn non_maximum_suppression(mag: &[f64], gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let get = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize { 0.0 } else { mag[y as usize * w + x as usize] }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let (dx, dy): (isize, isize) = if ay < ax * TAN_22_5 {
                (1, 0)
            } else if ay > ax * TAN_67_5 {
                (0, 1)
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (1, 1)
            } else {
                (-1, 1)
            };
            let (xi, yi) = (x as isize, y as isize);
            if m >= get(xi + dx, yi + dy) && m >= get(xi - dx, yi - dy) {
                out[i] = m;
            }
        }
    }
    out
}

/// Strong pixels seed a flood fill through 8-connected weak pixels.
fn hysteresis(thin: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut edges = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && m > 0.0 {
            edges[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= low && thin[j] > 0.0 {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edges
}
