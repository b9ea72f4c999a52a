//! Flow accuracy measures against known displacements.

use super::FlowField;
use crate::raster::VecField;

/// A tracked point: initial position and its true displacement, in px.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marker {
    pub position: [f64; 2],
    pub displacement: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingError {
    /// Mean Euclidean error over the markers that could be evaluated.
    pub mean: f64,
    pub used: usize,
    /// Indices of markers whose flow sample was invalid.
    pub excluded: Vec<usize>,
}

impl TrackingError {
    pub fn in_mm(&self, px_per_mm: f64) -> f64 {
        self.mean / px_per_mm
    }
}

/// Mean distance between true and flow-displaced marker positions.
pub fn tracking_error(flow: &FlowField, markers: &[Marker]) -> TrackingError {
    let mut sum = 0.0;
    let mut used = 0;
    let mut excluded = Vec::new();
    for (i, m) in markers.iter().enumerate() {
        match flow.sample(m.position[0], m.position[1]) {
            Some(u) => {
                sum += (u[0] - m.displacement[0]).hypot(u[1] - m.displacement[1]);
                used += 1;
            }
            None => excluded.push(i),
        }
    }
    TrackingError {
        mean: if used > 0 { sum / used as f64 } else { f64::NAN },
        used,
        excluded,
    }
}

/// Mean endpoint error over pixels valid in `flow` and accepted by `mask`.
pub fn endpoint_error(
    flow: &FlowField,
    truth: &VecField,
    mask: impl Fn(usize, usize) -> bool,
) -> Option<f64> {
    let (w, h) = flow.dims();
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if flow.valid.get(x, y) && mask(x, y) {
                let a = flow.u.get(x, y);
                let b = truth.get(x, y);
                sum += (a[0] - b[0]).hypot(a[1] - b[1]);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn grid_markers(dx: f64, dy: f64) -> Vec<Marker> {
        (0..13)
            .flat_map(|j| {
                (0..13).map(move |i| Marker {
                    position: [5.0 + 3.0 * i as f64, 4.5 + 3.0 * j as f64],
                    displacement: [dx, dy],
                })
            })
            .collect()
    }

    #[test]
    fn exact_flow_has_zero_error() {
        let f = FlowField::from_field(VecField::new(50, 50, [1.5, -2.0]));
        let e = tracking_error(&f, &grid_markers(1.5, -2.0));
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.used, 169);
    }

    #[test]
    fn uniform_offset_gives_offset_magnitude() {
        let f = FlowField::from_field(VecField::new(50, 50, [2.5, -2.0]));
        let e = tracking_error(&f, &grid_markers(1.5, -2.0));
        assert!((e.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_markers_are_excluded_and_reported() {
        let mut f = FlowField::from_field(VecField::new(50, 50, [0.0, 0.0]));
        f.valid = Grid::from_fn(50, 50, |x, _| x > 20);
        let e = tracking_error(&f, &grid_markers(0.0, 0.0));
        assert!(!e.excluded.is_empty());
        assert_eq!(e.used + e.excluded.len(), 169);
        assert!(e.excluded.contains(&0));
    }
}
