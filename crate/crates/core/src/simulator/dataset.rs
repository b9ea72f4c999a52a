//! Synthetic force datasets produced by running simulated indentations
//! through the full flow, depth and feature chain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{displacement_field, project_pattern, render_deformed, translation_field, CameraModel, IndenterScenario};
use crate::depth::reconstruct_surface;
use crate::error::{Error, Result};
use crate::flow::dense_flow;
use crate::force::{extract_features, FeatureMatrix, ForceModel, ForceSample, FreeSpacePoisson};
use crate::pattern::{generate_pattern, PatternImage, PatternParams};
use crate::pipeline::PipelineConfig;
use crate::raster::{Image, RgbPlane};

/// Force ranges the reference model is scaled to: normal, shear x, shear y (N).
pub const PROTOCOL_FORCE_RANGE: [f64; 3] = [9.67, 2.94, 2.86];

/// Everything needed to turn a scenario into pipeline features.
#[derive(Clone, Debug)]
pub struct SynthContext {
    /// Pattern as seen by the camera at rest.
    pub source: RgbPlane,
    pub camera: CameraModel,
    pub config: PipelineConfig,
    pub seed: u64,
}

impl SynthContext {
    pub fn from_pattern(pattern: &PatternImage, camera: CameraModel, mut config: PipelineConfig, seed: u64) -> Result<Self> {
        let source = project_pattern(pattern, &camera)?;
        config.raster = (camera.width, camera.height);
        config.validate()?;
        Ok(Self {
            source,
            camera,
            config,
            seed,
        })
    }

    /// Reduced-size sensor (144×106 px at 4 px/mm, the full 36 mm field)
    /// with a 3 px pattern patch, used for protocol-sized datasets.
    pub fn desk(seed: u64) -> Result<Self> {
        let camera = CameraModel {
            noise_sigma: 1.0 / 255.0,
            ..CameraModel::ideal(144, 106, 4.0)
        };
        let pattern = generate_pattern(&PatternParams {
            resolution_px: 320,
            patch_size_mm: 0.75,
            randomness: 0.1,
            print_area_mm: 40.0,
            seed,
        })?;
        Self::from_pattern(&pattern, camera, PipelineConfig::default(), seed)
    }

    fn frame_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Undeformed frame every scenario is tracked against.
    pub fn reference(&self) -> Result<Image> {
        let gt = translation_field(self.camera.width, self.camera.height, [0.0, 0.0]);
        Ok(render_deformed(&self.source, &gt, &self.camera, self.seed)?.image)
    }

    /// Aggregate features of one scenario, tracked directly from `reference`.
    pub fn scenario_features(
        &self,
        scenario: &IndenterScenario,
        index: usize,
        reference: &Image,
        solver: Option<&FreeSpacePoisson>,
    ) -> Result<FeatureMatrix> {
        let gt = displacement_field(scenario, &self.camera)?;
        let frame = render_deformed(&self.source, &gt, &self.camera, self.frame_seed(index))?.image;
        let flow = dense_flow(reference, &frame, &self.config.flow)?;
        let depth = reconstruct_surface(&flow, &frame, &self.config.density, &self.config.guided)?;
        let (_, feats) = extract_features(&flow, &depth, self.config.force_stride, solver)?;
        Ok(feats.aggregate)
    }
}

/// Loading grid of the calibration protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolGrid {
    pub diameters_mm: Vec<f64>,
    pub positions_mm: Vec<[f64; 2]>,
    pub depths_mm: Vec<f64>,
    /// Stage offsets applied at every depth.
    pub shears_mm: Vec<[f64; 2]>,
    /// Contact radius as a fraction of the indenter diameter.
    pub contact_ratio: f64,
}

impl Default for ProtocolGrid {
    fn default() -> Self {
        let positions_mm = [-1.0, 0.0, 1.0]
            .iter()
            .flat_map(|&j| [-1.0, 0.0, 1.0].map(|i| [4.0 * i, 3.0 * j]))
            .collect();
        // nine stage offsets on a 3×3 grid; the diagonals stay inside the 10 mm limit
        let shears_mm = [-7.0, 0.0, 7.0]
            .iter()
            .flat_map(|&j| [-7.0, 0.0, 7.0].map(|i| [i, j]))
            .collect();
        Self {
            diameters_mm: vec![10.0, 12.0, 15.0, 18.0, 22.0],
            positions_mm,
            depths_mm: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            shears_mm,
            contact_ratio: 0.35,
        }
    }
}

impl ProtocolGrid {
    /// Samples per indenter and position: every depth/shear pair plus one unloaded.
    pub fn per_position(&self) -> usize {
        self.depths_mm.len() * self.shears_mm.len() + 1
    }

    pub fn len(&self) -> usize {
        self.diameters_mm.len() * self.positions_mm.len() * self.per_position()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Expands the grid into scenarios, indenter-major.
pub fn protocol_scenarios(grid: &ProtocolGrid) -> Vec<IndenterScenario> {
    let mut out = Vec::with_capacity(grid.len());
    for &dia in &grid.diameters_mm {
        for &pos in &grid.positions_mm {
            let mut sc = IndenterScenario::sphere(dia, pos, 0.0, [0.0, 0.0]);
            sc.contact_radius_mm = grid.contact_ratio * dia;
            out.push(sc.clone());
            for &depth in &grid.depths_mm {
                for &shear in &grid.shears_mm {
                    out.push(IndenterScenario {
                        press_depth_mm: depth,
                        shear_offset_mm: shear,
                        ..sc.clone()
                    });
                }
            }
        }
    }
    out
}

/// Aggregate features of every scenario, in order.
pub fn synth_features(scenarios: &[IndenterScenario], ctx: &SynthContext) -> Result<Vec<FeatureMatrix>> {
    let reference = ctx.reference()?;
    let (w, h) = (ctx.camera.width, ctx.camera.height);
    let s = ctx.config.force_stride;
    let solver = FreeSpacePoisson::new(w.div_ceil(s), h.div_ceil(s));
    scenarios
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            ctx.scenario_features(sc, i, &reference, Some(&solver))
                .map_err(|e| match e {
                    Error::Scenario { .. } => e,
                    other => Error::Scenario {
                        name: sc.to_string(),
                        reason: other.to_string(),
                    },
                })
        })
        .collect()
}

/// Labels features with `diag(A·X)` plus seeded Gaussian noise of std
/// `noise` (N). Normal readings are clipped at zero.
pub fn label_samples(model: &ForceModel, features: &[FeatureMatrix], noise: f64, seed: u64) -> Result<Vec<ForceSample>> {
    if !(noise >= 0.0) {
        return Err(Error::InvalidParameter("force noise must be non-negative".into()));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(features
        .iter()
        .map(|x| {
            let mut f = model.predict(x);
            if noise > 0.0 {
                for v in f.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
            f[0] = f[0].max(0.0);
            ForceSample { features: *x, force: f }
        })
        .collect())
}

/// Runs every scenario through the pipeline and labels it with `model`.
pub fn synth_force_dataset(
    model: &ForceModel,
    scenarios: &[IndenterScenario],
    noise: f64,
    ctx: &SynthContext,
) -> Result<Vec<ForceSample>> {
    model.validate()?;
    let feats = synth_features(scenarios, ctx)?;
    label_samples(model, &feats, noise, ctx.seed)
}

/// Scales each row of `base` so the largest absolute prediction over
/// `features` equals `ranges`.
pub fn range_matched(base: &ForceModel, features: &[FeatureMatrix], ranges: [f64; 3]) -> Result<ForceModel> {
    let mut peak = [0.0f64; 3];
    for x in features {
        let f = base.predict(x);
        for j in 0..3 {
            peak[j] = peak[j].max(f[j].abs());
        }
    }
    if peak.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InsufficientData(
            "features carry no signal on some axis; cannot range-match".into(),
        ));
    }
    let mut m = base.scaled([ranges[0] / peak[0], ranges[1] / peak[1], ranges[2] / peak[2]]);
    m.stride = base.stride;
    Ok(m)
}

/// Known ground-truth model for synthetic calibration: fixed mixing weights
/// on per-column normalized features, range-matched to the protocol forces.
pub fn reference_model(features: &[FeatureMatrix], stride: usize) -> Result<ForceModel> {
    const NORMAL: [f64; 3] = [1.0, 0.4, 0.15];
    const SHEAR_X: [f64; 6] = [1.0, 0.25, 0.3, 0.1, -0.05, 0.08];
    const SHEAR_Y: [f64; 6] = [0.12, -0.06, 0.05, 1.0, 0.2, 0.3];
    let col_max = |k: usize, j: usize| features.iter().map(|x| x[k][j].abs()).fold(0.0, f64::max);
    let weight = |c: f64, k: usize, j: usize| match col_max(k, j) {
        m if m > 0.0 => c / m,
        _ => 0.0,
    };
    let mut a = [[0.0; 6]; 3];
    for k in 0..6 {
        if k < 3 {
            a[0][k] = weight(NORMAL[k], k, 0);
        }
        a[1][k] = weight(SHEAR_X[k], k, 1);
        a[2][k] = weight(SHEAR_Y[k], k, 2);
    }
    let mut base = ForceModel::from_matrix(a)?;
    base.stride = stride;
    range_matched(&base, features, PROTOCOL_FORCE_RANGE)
}
