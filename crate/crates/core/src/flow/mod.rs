//! Dense per-pixel optical flow.
//!
//! A flow `u` computed from a `reference` to a `query` frame is defined on the
//! reference raster and satisfies `query(x + u(x)) ≈ reference(x)`.

mod adaptive;
mod farneback;
mod metrics;

pub use adaptive::{compose, photometric_error, warp_to_reference, AdaptiveTrackerState, StepReport};
pub use farneback::{dense_flow, dense_flow_with_initial, poly_expansion};
pub use metrics::{endpoint_error, tracking_error, Marker, TrackingError};

use crate::error::{Error, Result};
use crate::raster::{Grid, VecField};

/// Mean absolute luminance error (on a `[0, 1]` scale) that triggers a rebase.
pub const DEFAULT_REBASE_THRESHOLD: f64 = 6.0 / 255.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: VecField,
    pub valid: Grid<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: VecField::zeros(width, height),
            valid: Grid::new(width, height, true),
        }
    }

    /// Wraps a dense field with every pixel marked valid.
    pub fn from_field(u: VecField) -> Self {
        let (w, h) = u.dims();
        Self {
            u,
            valid: Grid::new(w, h, true),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|&&v| v).count()
    }

    /// Bilinear sample, `None` when outside the raster or when any of the
    /// four supporting pixels is invalid.
    pub fn sample(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let v = self.u.sample(x, y)?;
        let (w, h) = self.dims();
        let x0 = (x.floor() as usize).min(w.saturating_sub(1));
        let y0 = (y.floor() as usize).min(h.saturating_sub(1));
        let x1 = if x > x0 as f64 { (x0 + 1).min(w - 1) } else { x0 };
        let y1 = if y > y0 as f64 { (y0 + 1).min(h - 1) } else { y0 };
        let ok = self.valid.get(x0, y0)
            && self.valid.get(x1, y0)
            && self.valid.get(x0, y1)
            && self.valid.get(x1, y1);
        ok.then_some(v)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .data()
            .iter()
            .zip(self.valid.data())
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        let bad = self
            .u
            .data()
            .iter()
            .zip(self.valid.data())
            .any(|(v, &ok)| ok && !(v[0].is_finite() && v[1].is_finite()));
        if bad {
            return Err(Error::InvalidParameter(
                "flow field has non-finite valid entries".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    /// Side of the averaging window, odd.
    pub window_size: usize,
    pub iterations_per_level: usize,
    /// Side of the polynomial-expansion neighborhood, odd.
    pub poly_neighborhood: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            pyramid_scale: 0.5,
            window_size: 21,
            iterations_per_level: 3,
            poly_neighborhood: 7,
            poly_sigma: 1.5,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be at least 1");
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad("pyramid_scale must lie in (0, 1)");
        }
        if self.window_size.is_multiple_of(2) || self.window_size < 3 {
            return bad("window_size must be an odd integer ≥ 3");
        }
        if self.iterations_per_level < 1 {
            return bad("iterations_per_level must be at least 1");
        }
        if self.poly_neighborhood.is_multiple_of(2) || self.poly_neighborhood < 3 {
            return bad("poly_neighborhood must be an odd integer ≥ 3");
        }
        if !(self.poly_sigma > 0.0) {
            return bad("poly_sigma must be positive");
        }
        Ok(())
    }
}
