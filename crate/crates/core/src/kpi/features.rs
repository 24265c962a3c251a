//! Per-frame visual features and detection counts.

use serde::{Deserialize, Serialize};

use super::canny::{CannyParams, canny, luma};
use super::{KpiError, Region};
use crate::image::Pixels;
use crate::ingest::{BBox, PredictionLog};

/// Mean Rec. 601 luma over the region.
pub fn luminosity<P: Pixels + ?Sized>(img: &P, region: &Region) -> Result<f64, KpiError> {
    region.check(img.width(), img.height())?;
    let sum: f64 = region.coords().map(|(x, y)| luma(img.rgb(x, y))).sum();
    Ok(sum / region.pixel_count() as f64)
}

/// Per-channel mean over the region.
pub fn average_color<P: Pixels + ?Sized>(img: &P, region: &Region) -> Result<[f64; 3], KpiError> {
    region.check(img.width(), img.height())?;
    let mut acc = [0.0; 3];
    for (x, y) in region.coords() {
        let p = img.rgb(x, y);
        acc[0] += p[0];
        acc[1] += p[1];
        acc[2] += p[2];
    }
    let n = region.pixel_count() as f64;
    Ok(acc.map(|c| c / n))
}

/// Fraction of region pixels that Canny marks as edges.
pub fn edge_fraction<P: Pixels + ?Sized>(img: &P, region: &Region, params: &CannyParams) -> Result<f64, KpiError> {
    let mask = canny(img, region, params)?;
    Ok(mask.count() as f64 / region.pixel_count() as f64)
}

/// The five per-region features used throughout: average color, luminosity
/// and edge fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFeatures {
    pub avg_color: [f64; 3],
    pub luminosity: f64,
    pub edge_fraction: f64,
}

pub fn region_features<P: Pixels + ?Sized>(
    img: &P,
    region: &Region,
    params: &CannyParams,
) -> Result<RegionFeatures, KpiError> {
    Ok(RegionFeatures {
        avg_color: average_color(img, region)?,
        luminosity: luminosity(img, region)?,
        edge_fraction: edge_fraction(img, region, params)?,
    })
}

/// Features averaged over a set of boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFeatures {
    pub features: RegionFeatures,
    /// True when there were no usable boxes and whole-frame values stand in.
    pub sentinel: bool,
}

/// Unweighted mean of per-box features.
///
/// With no boxes, the whole-frame features are returned and `sentinel` is
/// set. Boxes smaller than the blur kernel still contribute color and
/// luminosity; they are left out of the edge average, which falls back to
/// the whole-frame edge fraction when no box is large enough.
pub fn box_region_features<P: Pixels + ?Sized>(
    img: &P,
    boxes: &[BBox],
    params: &CannyParams,
) -> Result<BoxFeatures, KpiError> {
    let whole = Region::whole(img.width(), img.height());
    if boxes.is_empty() {
        return Ok(BoxFeatures { features: region_features(img, &whole, params)?, sentinel: true });
    }
    let mut color = [0.0; 3];
    let mut lum = 0.0;
    let mut edges = 0.0;
    let mut edge_boxes = 0usize;
    for b in boxes {
        let region = Region::from_box(b);
        let c = average_color(img, &region)?;
        (0..3).for_each(|i| color[i] += c[i]);
        lum += luminosity(img, &region)?;
        match edge_fraction(img, &region, params) {
            Ok(e) => {
                edges += e;
                edge_boxes += 1;
            }
            Err(KpiError::RegionTooSmall { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let n = boxes.len() as f64;
    let edge_fraction =
        if edge_boxes > 0 { edges / edge_boxes as f64 } else { super::features::edge_fraction(img, &whole, params)? };
    Ok(BoxFeatures {
        features: RegionFeatures { avg_color: color.map(|c| c / n), luminosity: lum / n, edge_fraction },
        sentinel: false,
    })
}

/// Number of boxes carrying `label` in one frame.
pub fn detection_count(log: &PredictionLog, frame: usize, label: &str) -> usize {
    log.labeled(frame, label).count()
}
