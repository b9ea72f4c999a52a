use log::info;

use super::{Pipeline, PipelineConfig, StageTimings};
use crate::error::{Error, Result};
use crate::force::ForceModel;
use crate::pattern::{generate_pattern, PatternParams};
use crate::raster::{Image, RgbPlane};
use crate::simulator::{
    displacement_field, project_pattern, render_deformed, translation_field, CameraModel, GroundTruthFlow,
    IndenterScenario,
};

/// Seeded ramp stream: a centered sphere pressed linearly from rest to a
/// peak displacement, optionally dragged sideways on the way.
#[derive(Clone, Debug)]
pub struct SyntheticStream {
    pub source: RgbPlane,
    pub camera: CameraModel,
    pub frames: usize,
    pub peak_px: f64,
    /// Stage offset reached on the last frame (mm).
    pub final_shear_mm: [f64; 2],
    pub contact_radius_mm: f64,
    pub seed: u64,
}

impl SyntheticStream {
    /// Ground truth of frame `i` (frame 0 is the first loaded frame).
    pub fn ground_truth(&self, i: usize) -> Result<GroundTruthFlow> {
        let t = (i + 1) as f64 / self.frames.max(1) as f64;
        let mut sc = IndenterScenario::sphere(2.0 * self.contact_radius_mm, [0.0, 0.0], 0.0, [0.0, 0.0])
            .with_peak_px(self.peak_px * t, &self.camera);
        sc.shear_offset_mm = [self.final_shear_mm[0] * t, self.final_shear_mm[1] * t];
        displacement_field(&sc, &self.camera)
    }

    pub fn reference(&self) -> Result<Image> {
        let gt = translation_field(self.camera.width, self.camera.height, [0.0, 0.0]);
        Ok(render_deformed(&self.source, &gt, &self.camera, self.seed)?.image)
    }

    pub fn frame(&self, i: usize) -> Result<Image> {
        let gt = self.ground_truth(i)?;
        Ok(render_deformed(&self.source, &gt, &self.camera, self.seed.wrapping_add(i as u64 + 1))?.image)
    }
}

/// Stream over the configured raster with the sensor's 36 mm field of view
/// and a 0.1 mm pattern patch.
pub fn synthetic_stream(config: &PipelineConfig, frames: usize, peak_px: f64, seed: u64) -> Result<SyntheticStream> {
    let (w, h) = config.raster;
    let camera = CameraModel {
        noise_sigma: 2.0 / 255.0,
        ..CameraModel::ideal(w, h, w as f64 / 36.0)
    };
    let print = 36.0_f64.max(h as f64 / camera.px_per_mm) + 1.0;
    let patch = 0.1;
    let pattern = generate_pattern(&PatternParams {
        resolution_px: 2 * (print / patch).ceil() as usize,
        patch_size_mm: patch,
        randomness: 0.5,
        print_area_mm: print,
        seed,
    })?;
    let contact = (h as f64 / camera.px_per_mm) * 0.25;
    Ok(SyntheticStream {
        source: project_pattern(&pattern, &camera)?,
        camera,
        frames,
        peak_px,
        final_shear_mm: [0.0, 0.0],
        contact_radius_mm: contact,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub frames: usize,
    pub runs: usize,
    /// Leading frames of every run excluded from the statistics.
    pub warmup: usize,
    pub peak_px: f64,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            frames: 100,
            runs: 3,
            warmup: 1,
            peak_px: 8.0,
            seed: 0,
        }
    }
}

/// Median per-stage latencies in milliseconds.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub flow_ms: f64,
    pub density_ms: f64,
    pub nhhd_ms: f64,
    pub features_ms: f64,
    pub total_ms: f64,
    pub frames_per_second: f64,
    pub raster: (usize, usize),
    pub threads: usize,
    /// Timed frames across all runs.
    pub samples: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times the full per-frame chain on a synthetic stream.
pub fn bench(config: &PipelineConfig, spec: &BenchSpec) -> Result<BenchReport> {
    if spec.frames == 0 {
        return Err(Error::InsufficientData("benchmark stream is empty".into()));
    }
    if spec.runs == 0 || spec.warmup >= spec.frames {
        return Err(Error::InvalidParameter(
            "benchmark needs at least one run and one timed frame".into(),
        ));
    }
    config.validate()?;
    let pool = config.thread_pool()?;
    let threads = pool.current_num_threads();
    let stream = synthetic_stream(config, spec.frames, spec.peak_px, spec.seed)?;
    let model = ForceModel {
        stride: config.force_stride,
        ..ForceModel::zero()
    };
    let timings: Vec<StageTimings> = pool.install(|| -> Result<Vec<StageTimings>> {
        let reference = stream.reference()?;
        let mut out = Vec::new();
        for run in 0..spec.runs {
            let mut pipe = Pipeline::new(config.clone(), reference.clone(), Some(model.clone()))?;
            for i in 0..spec.frames {
                let frame = stream.frame(i)?;
                let o = pipe.process(&frame)?;
                if i >= spec.warmup {
                    out.push(o.timings);
                }
            }
            info!("bench run {} done", run + 1);
        }
        Ok(out)
    })?;
    let stage = |f: fn(&StageTimings) -> f64| median(timings.iter().map(|t| 1e3 * f(t)).collect());
    let total_ms = stage(|t| t.total);
    Ok(BenchReport {
        flow_ms: stage(|t| t.flow),
        density_ms: stage(|t| t.density),
        nhhd_ms: stage(|t| t.nhhd),
        features_ms: stage(|t| t.features),
        total_ms,
        frames_per_second: if total_ms > 0.0 { 1e3 / total_ms } else { f64::INFINITY },
        raster: config.raster,
        threads,
        samples: timings.len(),
    })
}
