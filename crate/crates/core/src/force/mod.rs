//! Helmholtz–Hodge decomposition of the flow, cubic force features, the
//! linear force model and its least-squares calibration.

mod calibration;
mod features;
mod model;
mod nhhd;
mod poisson;

pub use calibration::{calibrate, AxisFit, FitReport, ForceSample, Split, AXIS_NAMES, MIN_SAMPLES};
pub use features::{
    build_features, extract_features, subsample_flow, subsample_plane, FeatureMatrix, Features, FEATURE_ORDER,
};
pub use model::{force_distribution, ForceDistribution, ForceModel};
pub use nhhd::{curl, d_dx, d_dy, divergence, gradient, nhhd, nhhd_with, quick_total_force, NHHDComponents};
pub use poisson::FreeSpacePoisson;
