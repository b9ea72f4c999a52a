//! Adaptive reference selection with flow composition.

use super::{dense_flow, FlowField, FlowParams};
use crate::error::{Error, Result};
use crate::raster::{Grid, Image, Plane, VecField};

/// Frame `frame` pulled back onto the reference raster through `flow`:
/// `warped(x) = frame(x + u(x))`. Pixels without a valid sample are `None`.
pub fn warp_to_reference(frame: &Plane, flow: &FlowField) -> Grid<Option<f64>> {
    let (w, h) = flow.dims();
    Grid::from_fn(w, h, |x, y| {
        if !flow.valid.get(x, y) {
            return None;
        }
        let d = flow.u.get(x, y);
        frame.sample(x as f64 + d[0], y as f64 + d[1])
    })
}

/// Mean absolute difference between `reference` and the pulled-back frame,
/// over pixels where the warp is defined. Returns `None` if no pixel is.
pub fn photometric_error(reference: &Plane, frame: &Plane, flow: &FlowField) -> Option<f64> {
    let warped = warp_to_reference(frame, flow);
    let (mut sum, mut n) = (0.0, 0usize);
    for (w, r) in warped.data().iter().zip(reference.data()) {
        if let Some(v) = w {
            sum += (v - r).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Chains `first` (A → B, on A's raster) with `second` (B → C, on B's raster)
/// into A → C: `total(x) = first(x) + second(x + first(x))`.
pub fn compose(first: &FlowField, second: &FlowField) -> Result<FlowField> {
    if first.dims() != second.dims() {
        return Err(Error::Dimension("composed flows differ in size".into()));
    }
    let (w, h) = first.dims();
    let mut u = VecField::zeros(w, h);
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !first.valid.get(x, y) {
                continue;
            }
            let a = first.u.get(x, y);
            if let Some(b) = second.sample(x as f64 + a[0], y as f64 + a[1]) {
                u.set(x, y, [a[0] + b[0], a[1] + b[1]]);
                valid.set(x, y, true);
            }
        }
    }
    Ok(FlowField { u, valid })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Photometric error of the warped frame against the active reference.
    pub photometric_error: f64,
    pub rebased: bool,
}

/// Tracks a frame stream against an automatically refreshed reference.
#[derive(Clone, Debug)]
pub struct AdaptiveTrackerState {
    pub reference_frame: Image,
    /// Flow from the initial frame to `reference_frame`, on the initial raster.
    pub accumulated_flow: FlowField,
    pub rebase_threshold: f64,
    pub rebase_count: usize,
    reference_luma: Plane,
}

impl AdaptiveTrackerState {
    pub fn new(initial: Image, rebase_threshold: f64) -> Self {
        let (w, h) = initial.dims();
        let reference_luma = initial.luma();
        Self {
            reference_frame: initial,
            accumulated_flow: FlowField::zeros(w, h),
            rebase_threshold,
            rebase_count: 0,
            reference_luma,
        }
    }

    /// Advances by one frame and returns the cumulative flow from the initial
    /// frame to `frame`.
    pub fn step(&mut self, frame: &Image, params: &FlowParams) -> Result<(FlowField, StepReport)> {
        if frame.dims() != self.reference_frame.dims() {
            return Err(Error::Dimension(format!(
                "frame {:?} does not match reference {:?}",
                frame.dims(),
                self.reference_frame.dims()
            )));
        }
        let local = dense_flow(&self.reference_frame, frame, params)?;
        let luma = frame.luma();
        let err = photometric_error(&self.reference_luma, &luma, &local).unwrap_or(f64::INFINITY);
        let total = compose(&self.accumulated_flow, &local)?;
        let rebased = err > self.rebase_threshold;
        if rebased {
            self.reference_frame = frame.clone();
            self.reference_luma = luma;
            self.accumulated_flow = total.clone();
            self.rebase_count += 1;
        }
        Ok((
            total,
            StepReport {
                photometric_error: err,
                rebased,
            },
        ))
    }
}
