use rayon::prelude::*;

use super::nhhd::{nhhd_with, NHHDComponents};
use super::poisson::FreeSpacePoisson;
use crate::depth::DensityMap;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{Grid, Plane, VecField};

/// Six feature rows by three force axes (normal, shear x, shear y).
pub type FeatureMatrix = [[f64; 3]; 6];

pub const FEATURE_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    /// Per-cell feature matrix `x(p)`, already weighted by the cell area.
    pub per_point: Grid<FeatureMatrix>,
    /// Field sum `X = Σ_p x(p)`.
    pub aggregate: FeatureMatrix,
    pub cell_area: f64,
}

fn point_features(dp: f64, s: [f64; 2], area: f64) -> FeatureMatrix {
    let mut x = [[0.0; 3]; 6];
    let (mut pd, mut px, mut py) = (area, area, area);
    for k in 0..FEATURE_ORDER {
        pd *= dp;
        px *= s[0];
        py *= s[1];
        x[k][0] = pd;
        x[k][1] = px;
        x[k][2] = px;
        x[k + 3][1] = py;
        x[k + 3][2] = py;
    }
    x
}

/// Builds cubic features from the processed density and the `h + r` part of
/// the decomposition. Every cell is weighted by `cell_area` raster pixels.
pub fn build_features(dp: &Plane, comps: &NHHDComponents, cell_area: f64) -> Result<Features> {
    if dp.dims() != comps.dims() {
        return Err(Error::Dimension(format!(
            "density {:?} vs decomposition {:?}",
            dp.dims(),
            comps.dims()
        )));
    }
    if let Some(v) = dp.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "processed density must be non-negative, found {v}"
        )));
    }
    let (w, h) = dp.dims();
    let per_point = Grid::from_fn(w, h, |x, y| {
        let (hv, rv) = (comps.h.get(x, y), comps.r.get(x, y));
        point_features(dp.get(x, y), [hv[0] + rv[0], hv[1] + rv[1]], cell_area)
    });
    // rows reduced in parallel, merged in row order
    let rows: Vec<FeatureMatrix> = per_point
        .data()
        .par_chunks(w.max(1))
        .map(|row| row.iter().fold([[0.0; 3]; 6], add))
        .collect();
    let aggregate = rows.into_iter().fold([[0.0; 3]; 6], |a, r| add(a, &r));
    Ok(Features {
        per_point,
        aggregate,
        cell_area,
    })
}

fn add(mut a: FeatureMatrix, b: &FeatureMatrix) -> FeatureMatrix {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (ea, eb) in ra.iter_mut().zip(rb) {
            *ea += eb;
        }
    }
    a
}

/// Samples every `stride`-th pixel; invalid flow pixels contribute zero motion.
pub fn subsample_flow(flow: &FlowField, stride: usize) -> VecField {
    let (w, h) = flow.dims();
    VecField::from_fn(w.div_ceil(stride), h.div_ceil(stride), |x, y| {
        let (sx, sy) = (x * stride, y * stride);
        if flow.valid.get(sx, sy) {
            flow.u.get(sx, sy)
        } else {
            [0.0, 0.0]
        }
    })
}

pub fn subsample_plane(p: &Plane, stride: usize) -> Plane {
    let (w, h) = p.dims();
    Plane::from_fn(w.div_ceil(stride), h.div_ceil(stride), |x, y| p.get(x * stride, y * stride))
}

/// Decomposition and features on a `stride`-subsampled raster, with the
/// `stride²` area weight applied to every cell.
pub fn extract_features(
    flow: &FlowField,
    depth: &DensityMap,
    stride: usize,
    solver: Option<&FreeSpacePoisson>,
) -> Result<(NHHDComponents, Features)> {
    if stride == 0 {
        return Err(Error::InvalidParameter("force stride must be at least 1".into()));
    }
    if flow.dims() != depth.processed.dims() {
        return Err(Error::Dimension(format!(
            "flow {:?} vs depth {:?}",
            flow.dims(),
            depth.processed.dims()
        )));
    }
    let v = subsample_flow(flow, stride);
    let dp = subsample_plane(&depth.processed, stride);
    let comps = match solver {
        Some(s) if s.dims() == v.dims() => nhhd_with(s, &v),
        Some(s) => {
            return Err(Error::Dimension(format!(
                "solver raster {:?} vs subsampled field {:?}",
                s.dims(),
                v.dims()
            )))
        }
        None => nhhd_with(&FreeSpacePoisson::new(v.width(), v.height()), &v),
    };
    let feats = build_features(&dp, &comps, (stride * stride) as f64)?;
    Ok((comps, feats))
}
