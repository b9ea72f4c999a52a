use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{dense_flow, tracking_error, FlowParams};
use crate::pattern::{generate_pattern, PatternParams};
use crate::raster::{Image, RgbPlane};
use crate::simulator::{
    displacement_field, project_pattern, render_deformed, translation_field, CameraModel, IndenterScenario,
    IndenterShape,
};

/// Pattern-selection grid and the indentation script run on every cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub d_values: Vec<f64>,
    pub r_values: Vec<f64>,
    /// Indenter shapes with their contact radius (mm).
    pub indenters: Vec<(IndenterShape, f64)>,
    pub positions_mm: Vec<[f64; 2]>,
    /// Press levels, as peak radial displacement in camera px.
    pub press_peak_px: Vec<f64>,
    /// Stage offsets applied after each press.
    pub shears_mm: Vec<[f64; 2]>,
    pub camera: CameraModel,
    pub flow: FlowParams,
    pub seed: u64,
}

impl Default for SweepSpec {
    /// 213 px square raster at the sensor's 798 px / 36 mm scale, which holds
    /// 96 patches of 0.1 mm per side.
    fn default() -> Self {
        let shears_mm = vec![[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0], [0.0, -2.0]];
        Self {
            d_values: vec![0.2, 0.15, 0.1, 0.075, 0.05],
            r_values: vec![0.1, 0.3, 0.5],
            indenters: Self::standard_indenters(),
            positions_mm: vec![[-1.2, -1.2], [1.2, -1.2], [-1.2, 1.2], [1.2, 1.2]],
            press_peak_px: vec![4.0, 8.0],
            shears_mm,
            camera: CameraModel {
                noise_sigma: 2.0 / 255.0,
                blur_sigma: 0.8,
                ..CameraModel::ideal(213, 213, 798.0 / 36.0)
            },
            flow: FlowParams::default(),
            seed: 0,
        }
    }
}

impl SweepSpec {
    /// Four dots, edge, ellipsoid, hexagonal prism and star.
    pub fn standard_indenters() -> Vec<(IndenterShape, f64)> {
        vec![
            (IndenterShape::MultiDot { count: 4, spacing_mm: 3.0 }, 1.4),
            (IndenterShape::Edge { length_mm: 2.0 }, 1.5),
            (IndenterShape::Ellipsoid { aspect: 1.6 }, 1.4),
            (IndenterShape::HexPrism, 2.0),
            (IndenterShape::Star { points: 5 }, 2.0),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty()
            || self.r_values.is_empty()
            || self.indenters.is_empty()
            || self.positions_mm.is_empty()
            || self.press_peak_px.is_empty()
        {
            return Err(Error::InvalidParameter("sweep grids must be non-empty".into()));
        }
        self.camera.validate()?;
        self.flow.validate()
    }

    /// Camera pixels spanned by one patch of side `d`.
    pub fn patch_camera_px(&self, d: f64) -> f64 {
        d * self.camera.px_per_mm
    }

    fn scenarios(&self, shape: &IndenterShape, radius: f64) -> Vec<IndenterScenario> {
        let mut out = Vec::new();
        for &pos in &self.positions_mm {
            for &peak in &self.press_peak_px {
                let pressed = IndenterScenario {
                    shape: shape.clone(),
                    center_mm: pos,
                    press_depth_mm: 0.0,
                    shear_offset_mm: [0.0, 0.0],
                    contact_radius_mm: radius,
                }
                .with_peak_px(peak, &self.camera);
                out.push(pressed.clone());
                for &s in &self.shears_mm {
                    out.push(IndenterScenario {
                        shear_offset_mm: s,
                        ..pressed.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub d: f64,
    pub r: f64,
    pub indenter: String,
    pub patch_px: f64,
    /// Mean marker error in px, `None` if the cell failed.
    pub delta_px: Option<f64>,
    pub delta_mm: Option<f64>,
    pub frames: usize,
    /// Markers dropped for lying on invalid flow.
    pub excluded: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// Error averaged over indenters for one `(d, r)` pair (mm); `None` if
    /// any indenter cell is missing.
    pub fn mean_over_indenters(&self, d: f64, r: f64) -> Option<f64> {
        let cells: Vec<&SweepCell> = self.cells.iter().filter(|c| c.d == d && c.r == r).collect();
        if cells.is_empty() {
            return None;
        }
        let vals: Option<Vec<f64>> = cells.iter().map(|c| c.delta_mm).collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn indenters(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for c in &self.cells {
            if !names.contains(&c.indenter) {
                names.push(c.indenter.clone());
            }
        }
        names
    }

    /// Distinct `(d, r)` pairs in table order.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for c in &self.cells {
            if !out.contains(&(c.d, c.r)) {
                out.push((c.d, c.r));
            }
        }
        out
    }
}

fn pattern_source(spec: &SweepSpec, d: f64, r: f64) -> Result<RgbPlane> {
    let field_mm = spec.camera.width.max(spec.camera.height) as f64 / spec.camera.px_per_mm;
    let print = field_mm + 1.0;
    let per_side = (print / d).ceil() as usize;
    // four pattern pixels per patch keeps the printed patch size exact
    let print = per_side as f64 * d;
    let pattern = generate_pattern(&PatternParams {
        resolution_px: 4 * per_side,
        patch_size_mm: d,
        randomness: r,
        print_area_mm: print,
        seed: spec.seed,
    })?;
    project_pattern(&pattern, &spec.camera)
}

fn run_cell(spec: &SweepSpec, source: &RgbPlane, reference: &Image, shape: &IndenterShape, radius: f64) -> Result<(f64, usize, usize)> {
    let scenarios = spec.scenarios(shape, radius);
    let results: Vec<Result<(f64, usize)>> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            let gt = displacement_field(sc, &spec.camera)?;
            let seed = spec.seed.wrapping_add(1 + i as u64);
            let frame = render_deformed(source, &gt, &spec.camera, seed)?.image;
            let flow = dense_flow(reference, &frame, &spec.flow)?;
            let e = tracking_error(&flow, &gt.markers);
            if e.used == 0 {
                return Err(Error::Scenario {
                    name: sc.to_string(),
                    reason: "no marker fell on valid flow".into(),
                });
            }
            Ok((e.mean, e.excluded.len()))
        })
        .collect();
    let (mut sum, mut excluded) = (0.0, 0);
    for r in results {
        let (m, ex) = r?;
        sum += m;
        excluded += ex;
    }
    Ok((sum / scenarios.len() as f64, scenarios.len(), excluded))
}

/// Tracking error of every `(d, r, indenter)` cell against simulator ground truth.
pub fn pattern_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let mut table = SweepTable::default();
    for &d in &spec.d_values {
        for &r in &spec.r_values {
            let setup = pattern_source(spec, d, r).and_then(|src| {
                let gt = translation_field(spec.camera.width, spec.camera.height, [0.0, 0.0]);
                let reference = render_deformed(&src, &gt, &spec.camera, spec.seed)?.image;
                Ok((src, reference))
            });
            for (shape, radius) in &spec.indenters {
                let outcome = setup
                    .as_ref()
                    .map_err(|e| Error::InvalidParameter(e.to_string()))
                    .and_then(|(src, reference)| run_cell(spec, src, reference, shape, *radius));
                let mut cell = SweepCell {
                    d,
                    r,
                    indenter: shape.kind().to_string(),
                    patch_px: spec.patch_camera_px(d),
                    delta_px: None,
                    delta_mm: None,
                    frames: 0,
                    excluded: 0,
                    error: None,
                };
                match outcome {
                    Ok((delta, frames, excluded)) => {
                        cell.delta_px = Some(delta);
                        cell.delta_mm = Some(delta / spec.camera.px_per_mm);
                        cell.frames = frames;
                        cell.excluded = excluded;
                    }
                    Err(e) => {
                        warn!("sweep cell d={d} r={r} {}: {e}", shape.kind());
                        cell.error = Some(e.to_string());
                    }
                }
                table.cells.push(cell);
            }
            info!("sweep d={d} r={r} done");
        }
    }
    Ok(table)
}
