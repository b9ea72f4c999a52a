//! End-to-end frame processing, the pattern sweep and the benchmark.

mod bench;
mod config;
mod sweep;

pub use bench::{bench, synthetic_stream, BenchReport, BenchSpec, SyntheticStream};
pub use config::{PipelineConfig, CONFIG_KEYS};
pub use sweep::{pattern_sweep, SweepCell, SweepSpec, SweepTable};

use std::time::Instant;

use log::{info, warn};

use crate::depth::{reconstruct_surface, DensityMap};
use crate::error::{Error, Result};
use crate::flow::{AdaptiveTrackerState, FlowField, StepReport};
use crate::force::{
    build_features, force_distribution, nhhd_with, subsample_flow, subsample_plane, ForceDistribution, ForceModel,
    FreeSpacePoisson, NHHDComponents,
};
use crate::raster::Image;

/// Wall-clock seconds spent in each stage of one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub flow: f64,
    pub density: f64,
    pub nhhd: f64,
    pub features: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct FrameOutput {
    /// Cumulative flow from the initial frame.
    pub flow: FlowField,
    pub depth: DensityMap,
    pub nhhd: NHHDComponents,
    /// Present when a force model is loaded.
    pub forces: Option<ForceDistribution>,
    pub step: StepReport,
    pub timings: StageTimings,
}

/// Stateful processor for one frame stream.
pub struct Pipeline {
    config: PipelineConfig,
    tracker: AdaptiveTrackerState,
    model: Option<ForceModel>,
    solver: Option<FreeSpacePoisson>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, reference: Image, model: Option<ForceModel>) -> Result<Self> {
        config.validate()?;
        if reference.dims() != config.raster {
            return Err(Error::Dimension(format!(
                "reference frame {:?} does not match configured raster {:?}",
                reference.dims(),
                config.raster
            )));
        }
        match &model {
            Some(m) => {
                m.validate()?;
                if m.stride != config.force_stride {
                    warn!(
                        "model was calibrated at stride {}, overriding configured stride {}",
                        m.stride, config.force_stride
                    );
                }
            }
            None => warn!("no force model loaded; force stage disabled"),
        }
        let tracker = AdaptiveTrackerState::new(reference, config.rebase_threshold);
        Ok(Self {
            config,
            tracker,
            model,
            solver: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tracker(&self) -> &AdaptiveTrackerState {
        &self.tracker
    }

    fn force_stride(&self) -> usize {
        self.model.as_ref().map_or(self.config.force_stride, |m| m.stride)
    }

    pub fn process(&mut self, frame: &Image) -> Result<FrameOutput> {
        let t0 = Instant::now();
        let (flow, step) = self.tracker.step(frame, &self.config.flow)?;
        let t1 = Instant::now();
        let depth = reconstruct_surface(&flow, frame, &self.config.density, &self.config.guided)?;
        let t2 = Instant::now();
        let stride = self.force_stride();
        let v = subsample_flow(&flow, stride);
        if self.solver.as_ref().map(|s| s.dims()) != Some(v.dims()) {
            self.solver = Some(FreeSpacePoisson::new(v.width(), v.height()));
        }
        let nhhd = nhhd_with(self.solver.as_ref().expect("solver built above"), &v);
        let t3 = Instant::now();
        let dp = subsample_plane(&depth.processed, stride);
        let features = build_features(&dp, &nhhd, (stride * stride) as f64)?;
        let forces = self.model.as_ref().map(|m| force_distribution(m, &features));
        let t4 = Instant::now();
        let secs = |a: Instant, b: Instant| (b - a).as_secs_f64();
        Ok(FrameOutput {
            flow,
            depth,
            nhhd,
            forces,
            step,
            timings: StageTimings {
                flow: secs(t0, t1),
                density: secs(t1, t2),
                nhhd: secs(t2, t3),
                features: secs(t3, t4),
                total: secs(t0, t4),
            },
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub processed: usize,
    /// Frame index and message of every frame that failed.
    pub failures: Vec<(usize, String)>,
    pub rebase_count: usize,
}

/// Runs `frames` against `reference`. Failing frames are logged and skipped;
/// `sink` sees every successful frame in order.
pub fn run_pipeline<I, F>(
    config: &PipelineConfig,
    reference: Image,
    frames: I,
    model: Option<ForceModel>,
    mut sink: F,
) -> Result<RunSummary>
where
    I: IntoIterator<Item = Result<Image>>,
    F: FnMut(usize, &FrameOutput) -> Result<()>,
{
    let mut pipe = Pipeline::new(config.clone(), reference, model)?;
    let mut summary = RunSummary::default();
    for (i, frame) in frames.into_iter().enumerate() {
        let out = frame.and_then(|f| pipe.process(&f)).and_then(|o| sink(i, &o));
        match out {
            Ok(()) => summary.processed += 1,
            Err(e) => {
                warn!("frame {i}: {e}");
                summary.failures.push((i, e.to_string()));
            }
        }
    }
    summary.rebase_count = pipe.tracker.rebase_count;
    info!(
        "processed {} frames, {} failures, {} rebases",
        summary.processed,
        summary.failures.len(),
        summary.rebase_count
    );
    Ok(summary)
}
