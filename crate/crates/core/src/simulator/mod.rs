//! Synthetic indentation: parametric ground-truth displacement, frame
//! rendering and force datasets.
//!
//! Contacts are modeled as a compactly supported C¹ bump
//! `w(s) = (1 − s²)²` for `s < 1`, where `s` is the normalized distance to
//! the indenter's core. Pressing pushes material away from the core with
//! displacement `k · depth · w(s) · (x − core(x)) / R`; shearing drags the
//! stuck region by `τ · shear · w(s)`.

mod dataset;
mod render;

pub use dataset::{
    label_samples, protocol_scenarios, range_matched, reference_model, synth_features, synth_force_dataset, ProtocolGrid,
    SynthContext, PROTOCOL_FORCE_RANGE,
};
pub use crate::force::ForceSample;
pub use render::{project_pattern, render_deformed, RenderedFrame};

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::flow::Marker;
use crate::raster::VecField;

/// Deepest nominal press accepted by the displacement model.
pub const MAX_PRESS_DEPTH_MM: f64 = 20.0;
/// Largest stage shear offset.
pub const MAX_SHEAR_MM: f64 = 10.0;
/// Radial surface displacement per mm of press depth, at unit normalized radius.
pub const EXPANSION_GAIN: f64 = 0.2;
/// Fraction of the stage shear offset transferred to the stuck surface.
pub const SHEAR_TRANSFER: f64 = 0.1;
/// Maximum of `s · (1 − s²)²` on `[0, 1]`, attained at `s = 1/√5`.
pub const RADIAL_PROFILE_PEAK: f64 = 0.286_216_701_119_973_1;
/// Markers per side of the square ground-truth grid.
pub const MARKERS_PER_SIDE: usize = 13;

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub px_per_mm: f64,
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    pub gain: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 798,
            height: 586,
            px_per_mm: 798.0 / 36.0,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
            gain: 1.0,
        }
    }
}

impl CameraModel {
    /// Noise-free camera over a `width × height` raster.
    pub fn ideal(width: usize, height: usize, px_per_mm: f64) -> Self {
        Self {
            width,
            height,
            px_per_mm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.px_per_mm > 0.0) {
            return Err(Error::InvalidParameter("px_per_mm must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.blur_sigma >= 0.0) || !(self.gain >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise, blur and gain must be non-negative".into(),
            ));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParameter("raster must be at least 2x2".into()));
        }
        Ok(())
    }

    /// Raster center in pixel coordinates.
    pub fn center_px(&self) -> [f64; 2] {
        [(self.width - 1) as f64 / 2.0, (self.height - 1) as f64 / 2.0]
    }

    /// Converts a sensor position in mm (origin at the raster center) to px.
    pub fn mm_to_px(&self, p: [f64; 2]) -> [f64; 2] {
        let c = self.center_px();
        [c[0] + p[0] * self.px_per_mm, c[1] + p[1] * self.px_per_mm]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IndenterShape {
    Sphere { diameter_mm: f64 },
    /// `count` round tips spaced `spacing_mm` apart on a circle.
    MultiDot { count: usize, spacing_mm: f64 },
    /// Straight ridge along x.
    Edge { length_mm: f64 },
    /// Elliptical footprint with minor/major axis ratio `aspect`.
    Ellipsoid { aspect: f64 },
    HexPrism,
    Star { points: usize },
    /// Annular tip of mean radius `ring_radius_mm`.
    Ring { ring_radius_mm: f64 },
}

impl IndenterShape {
    pub fn kind(&self) -> &'static str {
        match self {
            IndenterShape::Sphere { .. } => "sphere",
            IndenterShape::MultiDot { .. } => "multi_dot",
            IndenterShape::Edge { .. } => "edge",
            IndenterShape::Ellipsoid { .. } => "ellipsoid",
            IndenterShape::HexPrism => "hex_prism",
            IndenterShape::Star { .. } => "star",
            IndenterShape::Ring { .. } => "ring",
        }
    }

    /// Scalar size parameter used in scenario files (0 when the shape has none).
    pub fn size_param(&self) -> f64 {
        match *self {
            IndenterShape::Sphere { diameter_mm } => diameter_mm,
            IndenterShape::MultiDot { spacing_mm, .. } => spacing_mm,
            IndenterShape::Edge { length_mm } => length_mm,
            IndenterShape::Ellipsoid { aspect } => aspect,
            IndenterShape::HexPrism => 0.0,
            IndenterShape::Star { points } => points as f64,
            IndenterShape::Ring { ring_radius_mm } => ring_radius_mm,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndenterScenario {
    pub shape: IndenterShape,
    /// Contact center in mm, relative to the raster center.
    pub center_mm: [f64; 2],
    pub press_depth_mm: f64,
    pub shear_offset_mm: [f64; 2],
    /// Falloff radius of the contact bump.
    pub contact_radius_mm: f64,
}

impl fmt::Display for IndenterScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}) at ({:.2}, {:.2}) mm, depth {:.2} mm, shear ({:.2}, {:.2}) mm",
            self.shape.kind(),
            self.shape.size_param(),
            self.center_mm[0],
            self.center_mm[1],
            self.press_depth_mm,
            self.shear_offset_mm[0],
            self.shear_offset_mm[1]
        )
    }
}

/// Bump weight `(1 − s²)²` on `s < 1`.
#[inline]
pub fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t
    }
}

/// One elementary contact: where the core is and how far `x` is from it.
#[derive(Clone, Copy, Debug)]
enum Core {
    Point,
    Segment { half_length: f64 },
    /// Gauge of a star-shaped footprint; `radius(θ)` scales the falloff.
    Gauge(GaugeShape),
    Circle { radius: f64 },
}

#[derive(Clone, Copy, Debug)]
enum GaugeShape {
    Ellipse { aspect: f64 },
    Hexagon,
    Star { points: usize },
}

impl GaugeShape {
    fn radius_factor(&self, dx: f64, dy: f64) -> f64 {
        let theta = dy.atan2(dx);
        match *self {
            GaugeShape::Ellipse { aspect } => {
                let (c, s) = (theta.cos(), theta.sin() / aspect);
                1.0 / c.hypot(s)
            }
            GaugeShape::Hexagon => {
                let sector = PI / 3.0;
                let phi = theta.rem_euclid(sector) - sector / 2.0;
                (PI / 6.0).cos() / phi.cos()
            }
            GaugeShape::Star { points } => 0.75 + 0.25 * (points as f64 * theta).cos(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    center: [f64; 2],
    radius: f64,
    core: Core,
}

impl Contact {
    /// Normalized distance `s` and the offset from the core, both in px.
    #[inline]
    fn locate(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        match self.core {
            Core::Point => (dx.hypot(dy) / self.radius, [dx, dy]),
            Core::Segment { half_length } => {
                let px = dx.clamp(-half_length, half_length);
                let off = [dx - px, dy];
                (off[0].hypot(off[1]) / self.radius, off)
            }
            Core::Gauge(g) => {
                let rho = dx.hypot(dy);
                if rho == 0.0 {
                    return (0.0, [0.0, 0.0]);
                }
                (rho / (self.radius * g.radius_factor(dx, dy)), [dx, dy])
            }
            Core::Circle { radius } => {
                let rho = dx.hypot(dy);
                if rho == 0.0 {
                    return ((radius / self.radius), [0.0, 0.0]);
                }
                let k = (rho - radius) / rho;
                ((rho - radius).abs() / self.radius, [dx * k, dy * k])
            }
        }
    }

    /// Largest distance from `center` at which the bump is nonzero.
    fn extent(&self) -> f64 {
        match self.core {
            Core::Point => self.radius,
            Core::Segment { half_length } => half_length.hypot(self.radius),
            Core::Gauge(GaugeShape::Ellipse { aspect }) => self.radius * aspect.max(1.0),
            Core::Gauge(_) => self.radius,
            Core::Circle { radius } => radius + self.radius,
        }
    }
}

impl IndenterScenario {
    pub fn sphere(diameter_mm: f64, center_mm: [f64; 2], depth_mm: f64, shear_mm: [f64; 2]) -> Self {
        Self {
            shape: IndenterShape::Sphere { diameter_mm },
            center_mm,
            press_depth_mm: depth_mm,
            shear_offset_mm: shear_mm,
            contact_radius_mm: diameter_mm / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::Scenario {
                name: self.to_string(),
                reason,
            })
        };
        if !(self.press_depth_mm >= 0.0 && self.press_depth_mm <= MAX_PRESS_DEPTH_MM) {
            return fail(format!("press depth must lie in [0, {MAX_PRESS_DEPTH_MM}] mm"));
        }
        let s = self.shear_offset_mm[0].hypot(self.shear_offset_mm[1]);
        if !(s <= MAX_SHEAR_MM) {
            return fail(format!("shear offset {s:.2} mm exceeds {MAX_SHEAR_MM} mm"));
        }
        if !(self.contact_radius_mm > 0.0) {
            return fail("contact radius must be positive".into());
        }
        match self.shape {
            IndenterShape::MultiDot { count, spacing_mm } if count == 0 || (count > 1 && !(spacing_mm > 0.0)) => {
                fail("multi-dot indenter needs a positive count and spacing".into())
            }
            IndenterShape::Ellipsoid { aspect } if !(aspect > 0.0) => fail("ellipsoid aspect must be positive".into()),
            IndenterShape::Star { points } if points < 2 => fail("star needs at least two points".into()),
            IndenterShape::Edge { length_mm } if !(length_mm >= 0.0) => fail("edge length must be non-negative".into()),
            IndenterShape::Ring { ring_radius_mm } if !(ring_radius_mm > 0.0) => {
                fail("ring radius must be positive".into())
            }
            _ => Ok(()),
        }
    }

    fn contacts(&self, camera: &CameraModel) -> Vec<Contact> {
        let c = camera.mm_to_px(self.center_mm);
        let ppm = camera.px_per_mm;
        let radius = self.contact_radius_mm * ppm;
        let single = |core| vec![Contact { center: c, radius, core }];
        match self.shape {
            IndenterShape::Sphere { .. } => single(Core::Point),
            IndenterShape::MultiDot { count, spacing_mm } => {
                if count == 1 {
                    return single(Core::Point);
                }
                let ring = spacing_mm * ppm / (2.0 * (PI / count as f64).sin());
                (0..count)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / count as f64 + PI / count as f64;
                        Contact {
                            center: [c[0] + ring * a.cos(), c[1] + ring * a.sin()],
                            radius,
                            core: Core::Point,
                        }
                    })
                    .collect()
            }
            IndenterShape::Edge { length_mm } => single(Core::Segment {
                half_length: length_mm * ppm / 2.0,
            }),
            IndenterShape::Ellipsoid { aspect } => single(Core::Gauge(GaugeShape::Ellipse { aspect })),
            IndenterShape::HexPrism => single(Core::Gauge(GaugeShape::Hexagon)),
            IndenterShape::Star { points } => single(Core::Gauge(GaugeShape::Star { points })),
            IndenterShape::Ring { ring_radius_mm } => single(Core::Circle {
                radius: ring_radius_mm * ppm,
            }),
        }
    }

    /// Largest radial displacement (px) of a single contact of this scenario.
    pub fn peak_expansion_px(&self, camera: &CameraModel) -> f64 {
        EXPANSION_GAIN * self.press_depth_mm * camera.px_per_mm * RADIAL_PROFILE_PEAK
    }

    /// Same scenario with the depth chosen so a single contact's radial
    /// displacement peaks at `peak_px`.
    pub fn with_peak_px(mut self, peak_px: f64, camera: &CameraModel) -> Self {
        self.press_depth_mm = peak_px / (EXPANSION_GAIN * camera.px_per_mm * RADIAL_PROFILE_PEAK);
        self
    }
}

/// Dense ground truth plus the sparse marker grid sampled from it.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthFlow {
    pub field: VecField,
    pub markers: Vec<Marker>,
}

impl GroundTruthFlow {
    /// Wraps a dense field, sampling the standard marker grid from it.
    pub fn from_field(field: VecField) -> Self {
        let markers = marker_grid(field.width(), field.height())
            .into_iter()
            .map(|p| Marker {
                position: p,
                displacement: field.sample(p[0], p[1]).expect("markers lie inside the raster"),
            })
            .collect();
        Self { field, markers }
    }

    /// Smallest `det(I + ∇u)` over the raster (central differences). A
    /// non-positive value means the deformation folds the surface onto itself,
    /// so the rendered image has no unique back-map.
    pub fn min_jacobian_det(&self) -> f64 {
        let f = &self.field;
        let (w, h) = f.dims();
        if w < 3 || h < 3 {
            return 1.0;
        }
        let mut m = f64::INFINITY;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let (l, r, t, b) = (f.get(x - 1, y), f.get(x + 1, y), f.get(x, y - 1), f.get(x, y + 1));
                let ux = [0.5 * (r[0] - l[0]), 0.5 * (r[1] - l[1])];
                let uy = [0.5 * (b[0] - t[0]), 0.5 * (b[1] - t[1])];
                m = m.min((1.0 + ux[0]) * (1.0 + uy[1]) - uy[0] * ux[1]);
            }
        }
        m
    }

    pub fn peak_px(&self) -> f64 {
        self.field
            .data()
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }
}

/// Uniform 13×13 marker positions over the central 80% of the raster.
pub fn marker_grid(width: usize, height: usize) -> Vec<[f64; 2]> {
    let n = MARKERS_PER_SIDE;
    let axis = |len: usize| -> Vec<f64> {
        let span = (len - 1) as f64;
        let (lo, hi) = (0.1 * span, 0.9 * span);
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let xs = axis(width);
    let ys = axis(height);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
        .collect()
}

/// Displacement of one contact configuration at pixel `(x, y)`, in px.
fn evaluate(contacts: &[Contact], scale_n: f64, shear_px: [f64; 2], x: f64, y: f64) -> [f64; 2] {
    let mut u = [0.0; 2];
    for c in contacts {
        let (s, off) = c.locate(x, y);
        let w = bump(s);
        if w == 0.0 {
            continue;
        }
        u[0] += scale_n * w * off[0] / c.radius + shear_px[0] * w;
        u[1] += scale_n * w * off[1] / c.radius + shear_px[1] * w;
    }
    u
}

/// Ground-truth displacement for one indentation.
pub fn displacement_field(scenario: &IndenterScenario, camera: &CameraModel) -> Result<GroundTruthFlow> {
    displacement_field_multi(std::slice::from_ref(scenario), camera)
}

/// Superposed ground truth of several simultaneous indentations.
pub fn displacement_field_multi(scenarios: &[IndenterScenario], camera: &CameraModel) -> Result<GroundTruthFlow> {
    camera.validate()?;
    let mut parts = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        sc.validate()?;
        let contacts = sc.contacts(camera);
        let (w, h) = (camera.width as f64, camera.height as f64);
        for c in &contacts {
            let e = c.extent();
            if c.center[0] - e < 0.0 || c.center[1] - e < 0.0 || c.center[0] + e > w - 1.0 || c.center[1] + e > h - 1.0 {
                return Err(Error::Scenario {
                    name: sc.to_string(),
                    reason: format!(
                        "contact region (extent {:.1} px around ({:.1}, {:.1})) leaves the {}x{} raster",
                        e, c.center[0], c.center[1], camera.width, camera.height
                    ),
                });
            }
        }
        let ppm = camera.px_per_mm;
        let scale_n = EXPANSION_GAIN * sc.press_depth_mm * ppm;
        let shear = [
            SHEAR_TRANSFER * sc.shear_offset_mm[0] * ppm,
            SHEAR_TRANSFER * sc.shear_offset_mm[1] * ppm,
        ];
        parts.push((contacts, scale_n, shear));
    }
    let field = VecField::from_fn(camera.width, camera.height, |x, y| {
        let mut u = [0.0; 2];
        for (contacts, s, sh) in &parts {
            let v = evaluate(contacts, *s, *sh, x as f64, y as f64);
            u[0] += v[0];
            u[1] += v[1];
        }
        u
    });
    Ok(GroundTruthFlow::from_field(field))
}

/// Uniform translation ground truth.
pub fn translation_field(width: usize, height: usize, t: [f64; 2]) -> GroundTruthFlow {
    GroundTruthFlow::from_field(VecField::new(width, height, t))
}
