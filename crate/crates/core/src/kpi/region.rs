use serde::{Deserialize, Serialize};

use super::KpiError;
use crate::ingest::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    WholeFrame,
    GridCell { row: usize, col: usize },
    BoxRegion,
}

/// A pixel rectangle inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub kind: RegionKind,
}

impl Region {
    pub fn whole(width: usize, height: usize) -> Self {
        Self { x: 0, y: 0, w: width, h: height, kind: RegionKind::WholeFrame }
    }

    /// Cell `(row, col)` of a `rows × cols` grid. Cell edges are at
    /// `floor(i * extent / n)`, so cells tile the frame exactly.
    pub fn grid_cell(
        width: usize,
        height: usize,
        rows: usize,
        cols: usize,
        row: usize,
        col: usize,
    ) -> Result<Self, KpiError> {
        if rows == 0 || cols == 0 || row >= rows || col >= cols {
            return Err(KpiError::InvalidDefinition(format!("grid cell ({row}, {col}) outside a {rows}x{cols} grid")));
        }
        let x0 = col * width / cols;
        let x1 = (col + 1) * width / cols;
        let y0 = row * height / rows;
        let y1 = (row + 1) * height / rows;
        Ok(Self { x: x0, y: y0, w: x1 - x0, h: y1 - y0, kind: RegionKind::GridCell { row, col } })
    }

    pub fn from_box(b: &BBox) -> Self {
        Self { x: b.x as usize, y: b.y as usize, w: b.w as usize, h: b.h as usize, kind: RegionKind::BoxRegion }
    }

    pub fn pixel_count(&self) -> usize {
        self.w * self.h
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64 && px < (self.x + self.w) as f64 && py >= self.y as f64 && py < (self.y + self.h) as f64
    }

    /// Checks the region against frame bounds.
    pub(crate) fn check(&self, width: usize, height: usize) -> Result<(), KpiError> {
        if self.w == 0 || self.h == 0 {
            return Err(KpiError::EmptyRegion);
        }
        if self.x + self.w > width || self.y + self.h > height {
            return Err(KpiError::RegionOutOfBounds);
        }
        Ok(())
    }

    pub(crate) fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| (x, y)))
    }
}
