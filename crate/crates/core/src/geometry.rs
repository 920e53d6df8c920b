//! The content space: a one-dimensional torus of circumference `2L`,
//! represented by the half-open interval `[-L, L)` with the wrap-around
//! metric. Arcs on the ring are the footprints of communities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the ring, kept canonical in `[-L, L)`.
///
/// Construct through [`Ring::point`] so the canonical-range invariant holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coord: f64,
}

impl TorusPoint {
    pub fn coord(self) -> f64 {
        self.coord
    }
}

/// The ring `[-L, L)` with torus metric `min(|x - y|, 2L - |x - y|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    half_len: f64,
}

impl Ring {
    pub fn new(half_len: f64) -> Result<Self> {
        if !half_len.is_finite() || half_len <= 0.0 {
            return Err(Error::invalid(format!(
                "ring half-length must be finite and positive, got {half_len}"
            )));
        }
        Ok(Ring { half_len })
    }

    /// `L`: the half-length of the ring; the largest possible distance.
    pub fn half_len(&self) -> f64 {
        self.half_len
    }

    /// `2L`: the full circumference.
    pub fn circumference(&self) -> f64 {
        2.0 * self.half_len
    }

    /// Maps an arbitrary finite coordinate into `[-L, L)`.
    ///
    /// The seam is represented by `-L` (`+L` canonicalizes to `-L`).
    pub fn canonicalize(&self, coord: f64) -> f64 {
        let span = self.circumference();
        let mut c = (coord + self.half_len).rem_euclid(span) - self.half_len;
        // rem_euclid can land exactly on +L through rounding.
        if c >= self.half_len {
            c = -self.half_len;
        }
        c
    }

    pub fn point(&self, coord: f64) -> Result<TorusPoint> {
        if !coord.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite ring coordinate {coord}"
            )));
        }
        Ok(TorusPoint {
            coord: self.canonicalize(coord),
        })
    }

    /// Torus metric. Symmetric, bounded by `L`, satisfies the triangle inequality.
    pub fn distance(&self, a: TorusPoint, b: TorusPoint) -> f64 {
        let direct = (a.coord - b.coord).abs();
        direct.min(self.circumference() - direct)
    }

    /// Signed displacement from `a` to `b` along the shorter way, in `[-L, L]`.
    pub fn delta(&self, a: TorusPoint, b: TorusPoint) -> f64 {
        let span = self.circumference();
        let mut d = b.coord - a.coord;
        if d > self.half_len {
            d -= span;
        } else if d < -self.half_len {
            d += span;
        }
        d
    }

    /// Splits the ring into `k` arcs of equal length `2L / k`; arc `i`
    /// starts at `-L + i * 2L / k`.
    pub fn partition(&self, k: usize) -> Result<Vec<Arc>> {
        if k == 0 {
            return Err(Error::invalid("partition needs at least one arc"));
        }
        let len = self.circumference() / k as f64;
        (0..k)
            .map(|i| {
                let start = self.point(-self.half_len + i as f64 * len)?;
                Arc::new(self, start, len)
            })
            .collect()
    }
}

/// An arc on the ring, stored as `(start, length)` so that arcs crossing
/// the `-L/L` seam are handled the same way as interior ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    start: TorusPoint,
    length: f64,
}

impl Arc {
    pub fn new(ring: &Ring, start: TorusPoint, length: f64) -> Result<Self> {
        if !length.is_finite() || length <= 0.0 || length > ring.circumference() {
            return Err(Error::invalid(format!(
                "arc length must lie in (0, {}], got {length}",
                ring.circumference()
            )));
        }
        Ok(Arc { start, length })
    }

    /// Convenience constructor from raw coordinates.
    pub fn from_coords(ring: &Ring, start: f64, length: f64) -> Result<Self> {
        Arc::new(ring, ring.point(start)?, length)
    }

    pub fn start(&self) -> TorusPoint {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// The point at offset `u` from the start, `u` in `[0, length]`.
    pub fn offset(&self, ring: &Ring, u: f64) -> TorusPoint {
        ring.point(self.start.coord + u)
            .expect("offset of a valid arc is finite")
    }

    /// Mid-point of the arc; for a non-wrapping `[a, b)` this is `(a + b) / 2`.
    pub fn mid(&self, ring: &Ring) -> TorusPoint {
        self.offset(ring, 0.5 * self.length)
    }

    /// One past the last point; equals `start` for a full-ring arc.
    pub fn end(&self, ring: &Ring) -> TorusPoint {
        self.offset(ring, self.length)
    }

    /// Half-open, wrap-aware membership test.
    pub fn contains(&self, ring: &Ring, p: TorusPoint) -> bool {
        let span = ring.circumference();
        let u = (p.coord() - self.start.coord).rem_euclid(span);
        u < self.length
    }

    /// Offset of `p` from the arc start (in `[0, 2L)`); meaningful as an
    /// arc-local coordinate when `p` belongs to the arc.
    pub fn local(&self, ring: &Ring, p: TorusPoint) -> f64 {
        (p.coord() - self.start.coord).rem_euclid(ring.circumference())
    }
}
