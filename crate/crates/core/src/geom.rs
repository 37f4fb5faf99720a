//! Image-plane primitives. Origin top-left, +x right, +y down, units in pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeomError {
    #[error("box coordinates must be finite")]
    NonFinite,
    #[error("box must have positive width and height (got {w} x {h})")]
    Degenerate { w: f64, h: f64 },
}

/// A point in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        libm::hypot(other.x - self.x, other.y - self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned box given by its top-left corner and extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeomError> {
        let b = BBox { x, y, w, h };
        b.check()?;
        Ok(b)
    }

    /// Square box of side `side` centred on `c`.
    pub fn centered(c: Point, side: f64) -> Result<Self, GeomError> {
        BBox::new(c.x - side / 2.0, c.y - side / 2.0, side, side)
    }

    pub fn check(&self) -> Result<(), GeomError> {
        if !(self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(GeomError::Degenerate { w: self.w, h: self.h });
        }
        Ok(())
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let ih = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn scaled(&self, s: f64) -> BBox {
        BBox { x: self.x * s, y: self.y * s, w: self.w * s, h: self.h * s }
    }
}

/// Maps any finite angle in degrees onto `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let mut r = deg % 360.0;
    if r < 0.0 {
        r += 360.0;
    }
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
