//! Axis-aligned boxes in normalized page coordinates.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Box `(x0, y0, x1, y1)`; serialized as a four-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 4]", into = "[T; 4]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct BBox<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> From<[T; 4]> for BBox<T> {
    fn from(v: [T; 4]) -> Self {
        BBox { x0: v[0], y0: v[1], x1: v[2], y1: v[3] }
    }
}

impl<T: Scalar> From<BBox<T>> for [T; 4] {
    fn from(b: BBox<T>) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl<T: Scalar> BBox<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    /// Non-degenerate (`x0 < x1`, `y0 < y1`) and within the unit square.
    pub fn is_normalized(&self) -> bool {
        let (zero, one) = (T::zero(), T::one());
        self.x0 < self.x1
            && self.y0 < self.y1
            && self.x0 >= zero
            && self.y0 >= zero
            && self.x1 <= one
            && self.y1 <= one
    }

    pub fn area(&self) -> T {
        let w = (self.x1 - self.x0).max(T::zero());
        let h = (self.y1 - self.y0).max(T::zero());
        w * h
    }

    pub fn intersection(&self, other: &Self) -> T {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }
}
