use std::path::PathBuf;

use crate::depth::{DensityParams, GuidedParams};
use crate::error::{Error, Result};
use crate::flow::{FlowParams, DEFAULT_REBASE_THRESHOLD};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub flow: FlowParams,
    pub density: DensityParams,
    pub guided: GuidedParams,
    pub rebase_threshold: f64,
    pub model_path: Option<PathBuf>,
    /// Frame size `(width, height)`.
    pub raster: (usize, usize),
    /// Subsampling of the decomposition and force features.
    pub force_stride: usize,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            flow: FlowParams::default(),
            density: DensityParams::default(),
            guided: GuidedParams::default(),
            rebase_threshold: DEFAULT_REBASE_THRESHOLD,
            model_path: None,
            raster: (798, 586),
            force_stride: 2,
            threads: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 16] = [
    "flow.levels",
    "flow.scale",
    "flow.window",
    "flow.iterations",
    "flow.poly_n",
    "flow.poly_sigma",
    "density.sigma",
    "density.truncation",
    "density.stride",
    "guided.radius",
    "guided.eps",
    "rebase_threshold",
    "model",
    "raster",
    "force.stride",
    "threads",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::format("config", format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "flow.levels" => self.flow.pyramid_levels = parse(key, value)?,
            "flow.scale" => self.flow.pyramid_scale = parse(key, value)?,
            "flow.window" => self.flow.window_size = parse(key, value)?,
            "flow.iterations" => self.flow.iterations_per_level = parse(key, value)?,
            "flow.poly_n" => self.flow.poly_neighborhood = parse(key, value)?,
            "flow.poly_sigma" => self.flow.poly_sigma = parse(key, value)?,
            "density.sigma" => self.density.sigma = parse(key, value)?,
            "density.truncation" => self.density.kernel_truncation = parse(key, value)?,
            "density.stride" => self.density.downsample_stride = parse(key, value)?,
            "guided.radius" => self.guided.radius = parse(key, value)?,
            "guided.eps" => self.guided.eps = parse(key, value)?,
            "rebase_threshold" => self.rebase_threshold = parse(key, value)?,
            "model" => {
                let v = value.trim();
                self.model_path = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "raster" => {
                let (w, h) = value
                    .trim()
                    .split_once('x')
                    .ok_or_else(|| Error::format("config", format!("raster {value:?} is not WxH")))?;
                self.raster = (parse(key, w)?, parse(key, h)?);
            }
            "force.stride" => self.force_stride = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(Error::format("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies entries in order, later ones overriding earlier ones.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Every setting as ordered `key = value` pairs, suitable for echoing.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("flow.levels".into(), self.flow.pyramid_levels.to_string()),
            ("flow.scale".into(), self.flow.pyramid_scale.to_string()),
            ("flow.window".into(), self.flow.window_size.to_string()),
            ("flow.iterations".into(), self.flow.iterations_per_level.to_string()),
            ("flow.poly_n".into(), self.flow.poly_neighborhood.to_string()),
            ("flow.poly_sigma".into(), self.flow.poly_sigma.to_string()),
            ("density.sigma".into(), self.density.sigma.to_string()),
            ("density.truncation".into(), self.density.kernel_truncation.to_string()),
            ("density.stride".into(), self.density.downsample_stride.to_string()),
            ("guided.radius".into(), self.guided.radius.to_string()),
            ("guided.eps".into(), self.guided.eps.to_string()),
            ("rebase_threshold".into(), self.rebase_threshold.to_string()),
            (
                "model".into(),
                self.model_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("raster".into(), format!("{}x{}", self.raster.0, self.raster.1)),
            ("force.stride".into(), self.force_stride.to_string()),
            ("threads".into(), self.threads.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.density.validate()?;
        if self.guided.radius < 1 || !(self.guided.eps > 0.0) {
            return Err(Error::InvalidParameter(
                "guided filter needs radius ≥ 1 and eps > 0".into(),
            ));
        }
        if !(self.rebase_threshold >= 0.0) {
            return Err(Error::InvalidParameter("rebase threshold must be non-negative".into()));
        }
        if self.raster.0 == 0 || self.raster.1 == 0 {
            return Err(Error::InvalidParameter("raster must be positive".into()));
        }
        if self.force_stride == 0 {
            return Err(Error::InvalidParameter("force stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Rayon pool honoring `threads`.
    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_round_trip() {
        let mut c = PipelineConfig::default();
        c.set("flow.window", "15").unwrap();
        c.set("raster", "320x240").unwrap();
        c.set("model", "m.txt").unwrap();
        let pairs = c.to_pairs();
        let mut d = PipelineConfig::default();
        d.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(c, d);
        for k in CONFIG_KEYS {
            assert!(pairs.iter().any(|(p, _)| p == k));
        }
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = PipelineConfig::default();
        assert!(c.set("flow.nope", "1").is_err());
        assert!(c.set("raster", "320").is_err());
        assert!(c.set("flow.levels", "x").is_err());
    }
}
