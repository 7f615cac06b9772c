use std::fmt;

use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle, 0-based and inclusive on both ends.
///
/// Serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("inverted box corners ({xmin},{ymin})-({xmax},{ymax})")]
pub struct InvertedBox {
    pub xmin: u32,
    pub ymin: u32,
    pub xmax: u32,
    pub ymax: u32,
}

impl BoundingBox {
    pub fn new(xmin: u32, ymin: u32, xmax: u32, ymax: u32) -> Result<Self, InvertedBox> {
        if xmin > xmax || ymin > ymax {
            return Err(InvertedBox { xmin, ymin, xmax, ymax });
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn width(&self) -> u64 {
        u64::from(self.xmax - self.xmin) + 1
    }

    pub fn height(&self) -> u64 {
        u64::from(self.ymax - self.ymin) + 1
    }

    /// Pixel count with PASCAL-style `+1` extents.
    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    /// True when the box lies inside an image of `width` x `height` pixels.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.xmax < width && self.ymax < height
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        (self.xmin..=self.xmax).contains(&x) && (self.ymin..=self.ymax).contains(&y)
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.xmin <= other.xmin
            && self.ymin <= other.ymin
            && self.xmax >= other.xmax
            && self.ymax >= other.ymax
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let xmin = self.xmin.max(other.xmin);
        let ymin = self.ymin.max(other.ymin);
        let xmax = self.xmax.min(other.xmax);
        let ymax = self.ymax.min(other.ymax);
        (xmin <= xmax && ymin <= ymax).then_some(BoundingBox { xmin, ymin, xmax, ymax })
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }
}

impl TryFrom<[u32; 4]> for BoundingBox {
    type Error = InvertedBox;

    fn try_from([xmin, ymin, xmax, ymax]: [u32; 4]) -> Result<Self, Self::Error> {
        Self::new(xmin, ymin, xmax, ymax)
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.xmin, self.ymin, self.xmax, self.ymax)
    }
}
