//! Axis-aligned box arithmetic: IoU, union boxes and mapping boxes into the
//! discrete frame of a union box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in scene units, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Finite coordinates with strictly positive extent.
    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
            x2: self.x2.min(other.x2),
            y2: self.y2.min(other.y2),
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = match a.intersection(b) {
        Some(i) => i.area(),
        None => return 0.0,
    };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Minimal box enclosing a human box and its paired object box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnionBox {
    pub bbox: BBox,
    pub human: BBox,
    pub object: BBox,
}

pub fn union_box(human: &BBox, object: &BBox) -> UnionBox {
    UnionBox {
        bbox: BBox {
            x1: human.x1.min(object.x1),
            y1: human.y1.min(object.y1),
            x2: human.x2.max(object.x2),
            y2: human.y2.max(object.y2),
        },
        human: *human,
        object: *object,
    }
}

/// Inclusive cell range `[x1, x2] x [y1, y2]` inside a `grid x grid` frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl CellBox {
    pub fn cells(&self) -> usize {
        (self.x2 - self.x1 + 1) * (self.y2 - self.y1 + 1)
    }
}

/// Continuous position in the union frame, in cell units (`0..=grid`).
/// The x and y axes scale independently.
pub fn frame_coords(x: f64, y: f64, frame: &BBox, grid: usize) -> (f64, f64) {
    let g = grid as f64;
    (
        (x - frame.x1) / frame.width() * g,
        (y - frame.y1) / frame.height() * g,
    )
}

fn cell_span(lo: f64, hi: f64, grid: usize) -> (usize, usize) {
    let last = grid as i64 - 1;
    let a = (lo.round() as i64).clamp(0, last);
    let b = ((hi.round() as i64) - 1).clamp(0, last);
    (a as usize, b.max(a) as usize)
}

/// Map `b` into the `grid x grid` frame of `u`, clipped to the frame.
/// Edges round half away from zero; every box keeps at least one cell per axis.
pub fn normalize_to_union(b: &BBox, u: &UnionBox, grid: usize) -> Result<CellBox> {
    if grid < 2 {
        return Err(Error::Domain(format!("grid must be >= 2, got {grid}")));
    }
    let clipped = b.intersection(&u.bbox).ok_or(Error::OutsideFrame)?;
    let (fx1, fy1) = frame_coords(clipped.x1, clipped.y1, &u.bbox, grid);
    let (fx2, fy2) = frame_coords(clipped.x2, clipped.y2, &u.bbox, grid);
    let (x1, x2) = cell_span(fx1, fx2, grid);
    let (y1, y2) = cell_span(fy1, fy2, grid);
    Ok(CellBox { x1, y1, x2, y2 })
}
