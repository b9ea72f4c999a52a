//! Relative contact depth from the flow field.
//!
//! Every tracked pixel deposits a unit-mass isotropic Gaussian at its
//! displaced position. Where the surface is pushed in, material spreads out
//! and the accumulated density drops below its zero-flow baseline; that
//! deficit is read as relative depth.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{box_mean, Grid, Image, Plane};

#[derive(Clone, Debug, PartialEq)]
pub struct DensityParams {
    pub sigma: f64,
    /// Kernel half-width as a multiple of `sigma`.
    pub kernel_truncation: f64,
    pub downsample_stride: usize,
}

impl Default for DensityParams {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            kernel_truncation: 3.0,
            downsample_stride: 2,
        }
    }
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.kernel_truncation > 0.0) {
            return Err(Error::InvalidParameter("kernel truncation must be positive".into()));
        }
        if self.downsample_stride < 1 {
            return Err(Error::InvalidParameter("downsample stride must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidedParams {
    pub radius: usize,
    pub eps: f64,
}

impl Default for GuidedParams {
    fn default() -> Self {
        Self {
            radius: 8,
            eps: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub density: Plane,
    /// `max(relative_depth, 0)`.
    pub processed: Plane,
    /// Baseline density minus density.
    pub relative_depth: Plane,
    /// Total deposited mass on the padded splat grid, in coarse-cell units.
    pub padded_mass: f64,
}

/// Density accumulated on a grid padded so no deposited mass is lost.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGrid {
    pub data: Plane,
    pub pad: usize,
    pub stride: usize,
    /// Unpadded coarse raster size.
    pub width: usize,
    pub height: usize,
}

impl SplatGrid {
    pub fn total_mass(&self) -> f64 {
        self.data.data().iter().sum()
    }

    /// The unpadded coarse raster.
    pub fn interior(&self) -> Plane {
        self.data
            .crop(self.pad, self.pad, self.width, self.height)
            .expect("interior lies inside the padded grid")
    }
}

const BAND_ROWS: usize = 16;

/// Unit-mass truncated kernel along one axis: first index and weights.
#[inline]
fn axis_weights(center: f64, sigma: f64, half: f64, buf: &mut Vec<f64>) -> isize {
    let lo = (center - half).ceil() as isize;
    let hi = (center + half).floor() as isize;
    buf.clear();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut sum = 0.0;
    for i in lo..=hi {
        let d = i as f64 - center;
        let v = (-d * d * inv).exp();
        buf.push(v);
        sum += v;
    }
    buf.iter_mut().for_each(|v| *v /= sum);
    lo
}

fn splat_with(
    flow: &FlowField,
    params: &DensityParams,
    displace: bool,
) -> Result<SplatGrid> {
    params.validate()?;
    let s = params.downsample_stride;
    let (w, h) = flow.dims();
    let (cw, ch) = (w.div_ceil(s), h.div_ceil(s));
    let sigma = params.sigma / s as f64;
    let half = params.kernel_truncation * sigma;
    let max_disp = if displace { flow.max_magnitude() / s as f64 } else { 0.0 };
    let pad = (half + max_disp).ceil() as usize + 1;
    let (pw, ph) = (cw + 2 * pad, ch + 2 * pad);

    let bands: Vec<(usize, Plane)> = (0..ch.div_ceil(BAND_ROWS))
        .into_par_iter()
        .map(|b| {
            let r0 = b * BAND_ROWS;
            let r1 = ((b + 1) * BAND_ROWS).min(ch);
            // local buffer rows cover every row this band can touch
            let top = r0;
            let local_h = r1 - r0 + 2 * pad;
            let mut buf = Plane::zeros(pw, local_h);
            let (mut wx, mut wy) = (Vec::new(), Vec::new());
            for cy in r0..r1 {
                for cx in 0..cw {
                    let (x, y) = (cx * s, cy * s);
                    if !flow.valid.get(x, y) {
                        continue;
                    }
                    let u = if displace { flow.u.get(x, y) } else { [0.0, 0.0] };
                    let mx = (x as f64 + u[0]) / s as f64 + pad as f64;
                    // row index relative to the band buffer
                    let my = (y as f64 + u[1]) / s as f64 - top as f64 + pad as f64;
                    let x0 = axis_weights(mx, sigma, half, &mut wx);
                    let y0 = axis_weights(my, sigma, half, &mut wy);
                    for (j, &gy) in wy.iter().enumerate() {
                        let yy = y0 + j as isize;
                        if yy < 0 || yy >= local_h as isize {
                            continue;
                        }
                        let row = &mut buf.data_mut()[yy as usize * pw..(yy as usize + 1) * pw];
                        for (i, &gx) in wx.iter().enumerate() {
                            let xx = x0 + i as isize;
                            if xx >= 0 && (xx as usize) < pw {
                                row[xx as usize] += gx * gy;
                            }
                        }
                    }
                }
            }
            (r0, buf)
        })
        .collect();

    // merge in band order so the result does not depend on scheduling
    let mut data = Plane::zeros(pw, ph);
    for (r0, buf) in bands {
        for ly in 0..buf.height() {
            let gy = r0 + ly; // padded row: (r0 - pad + ly) + pad
            if gy >= ph {
                break;
            }
            let dst = &mut data.data_mut()[gy * pw..(gy + 1) * pw];
            for (d, v) in dst.iter_mut().zip(buf.row(ly)) {
                *d += v;
            }
        }
    }
    Ok(SplatGrid {
        data,
        pad,
        stride: s,
        width: cw,
        height: ch,
    })
}

/// Splats every valid (stride-sampled) pixel at its displaced position.
pub fn splat_density(flow: &FlowField, params: &DensityParams) -> Result<SplatGrid> {
    splat_with(flow, params, true)
}

/// Density of the same valid pixels left in place.
pub fn baseline_density(flow: &FlowField, params: &DensityParams) -> Result<SplatGrid> {
    splat_with(flow, params, false)
}

fn upsample(coarse: &Plane, stride: usize, width: usize, height: usize) -> Plane {
    if stride == 1 {
        return coarse.clone();
    }
    let s = stride as f64;
    Plane::from_fn(width, height, |x, y| coarse.sample_clamped(x as f64 / s, y as f64 / s))
}

/// Gaussian density of the flow and the derived relative depth.
pub fn gaussian_density(flow: &FlowField, params: &DensityParams) -> Result<DensityMap> {
    let splat = splat_density(flow, params)?;
    let base = baseline_density(flow, params)?;
    let (w, h) = flow.dims();
    let dens = splat.interior();
    let base_i = base.interior();
    let rel = Plane::from_fn(dens.width(), dens.height(), |x, y| base_i.get(x, y) - dens.get(x, y));
    let density = upsample(&dens, splat.stride, w, h);
    let relative_depth = upsample(&rel, splat.stride, w, h);
    let processed = relative_depth.map(|v| v.max(0.0));
    Ok(DensityMap {
        density,
        processed,
        relative_depth,
        padded_mass: splat.total_mass(),
    })
}

/// Edge-preserving smoothing of `relative_depth` steered by `guide`.
pub fn guided_filter(input: &DensityMap, guide: &Image, radius: usize, eps: f64) -> Result<DensityMap> {
    if radius < 1 {
        return Err(Error::InvalidParameter("guided filter radius must be ≥ 1".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("guided filter eps must be positive".into()));
    }
    if guide.dims() != input.relative_depth.dims() {
        return Err(Error::Dimension(format!(
            "guide {:?} vs density {:?}",
            guide.dims(),
            input.relative_depth.dims()
        )));
    }
    let q = guided_filter_plane(&input.relative_depth, &guide.luma(), radius, eps);
    Ok(DensityMap {
        density: input.density.clone(),
        processed: q.map(|v| v.max(0.0)),
        relative_depth: q,
        padded_mass: input.padded_mass,
    })
}

/// Gray-guide guided filter on a single plane.
pub fn guided_filter_plane(p: &Plane, guide: &Plane, radius: usize, eps: f64) -> Plane {
    let (w, h) = p.dims();
    // pack [I, p, I·p, I·I] to share one box pass
    let packed = Grid::<[f64; 4]>::from_fn(w, h, |x, y| {
        let i = guide.get(x, y);
        let v = p.get(x, y);
        [i, v, i * v, i * i]
    });
    let m = box_mean(&packed, radius);
    let ab = m.map(|[mi, mp, mip, mii]| {
        let var = mii - mi * mi;
        let cov = mip - mi * mp;
        let a = cov / (var + eps);
        [a, mp - a * mi]
    });
    let mab = box_mean(&ab, radius);
    Plane::from_fn(w, h, |x, y| {
        let [a, b] = mab.get(x, y);
        a * guide.get(x, y) + b
    })
}

/// Density followed by guided smoothing against the current frame.
pub fn reconstruct_surface(
    flow: &FlowField,
    frame: &Image,
    params: &DensityParams,
    guided: &GuidedParams,
) -> Result<DensityMap> {
    let d = gaussian_density(flow, params)?;
    guided_filter(&d, frame, guided.radius, guided.eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::VecField;

    fn stride1() -> DensityParams {
        DensityParams {
            downsample_stride: 1,
            ..DensityParams::default()
        }
    }

    fn expansion(w: usize, h: usize, amp: f64, radius: f64) -> VecField {
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        VecField::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let s2 = (dx * dx + dy * dy) / (radius * radius);
            let b = if s2 < 1.0 { (1.0 - s2).powi(2) } else { 0.0 };
            [amp * b * dx / radius, amp * b * dy / radius]
        })
    }

    #[test]
    fn zero_flow_has_zero_depth() {
        for stride in [1, 2, 3] {
            let p = DensityParams {
                downsample_stride: stride,
                ..DensityParams::default()
            };
            let d = gaussian_density(&FlowField::zeros(40, 30), &p).unwrap();
            assert!(d.relative_depth.data().iter().all(|&v| v == 0.0));
            assert!(d.processed.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mass_is_conserved() {
        let mut f = FlowField::from_field(expansion(50, 40, 6.0, 15.0));
        f.valid.set(3, 4, false);
        let s = splat_density(&f, &stride1()).unwrap();
        let n = f.valid_count() as f64;
        assert!((s.total_mass() - n).abs() / n < 1e-12);
    }

    #[test]
    fn expansion_peaks_at_center() {
        let f = FlowField::from_field(expansion(61, 61, 5.0, 18.0));
        let d = gaussian_density(&f, &stride1()).unwrap();
        assert_eq!(d.relative_depth.argmax(), (30, 30));
        assert!(d.processed.data().iter().all(|&v| v >= 0.0));
        for (p, r) in d.processed.data().iter().zip(d.relative_depth.data()) {
            if *r <= 0.0 {
                assert_eq!(*p, 0.0);
            }
        }
    }

    #[test]
    fn band_merge_is_independent_of_thread_count() {
        let f = FlowField::from_field(expansion(70, 90, 4.0, 25.0));
        let a = splat_density(&f, &stride1()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| splat_density(&f, &stride1()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_params() {
        let f = FlowField::zeros(10, 10);
        let p = DensityParams {
            sigma: 0.0,
            ..DensityParams::default()
        };
        assert!(gaussian_density(&f, &p).is_err());
        let d = gaussian_density(&f, &DensityParams::default()).unwrap();
        let g = Image::Gray(Plane::zeros(10, 10));
        assert!(guided_filter(&d, &g, 0, 1e-3).is_err());
        assert!(guided_filter(&d, &g, 2, 0.0).is_err());
        assert!(guided_filter(&d, &Image::Gray(Plane::zeros(9, 10)), 2, 1e-3).is_err());
    }

    #[test]
    fn guided_filter_preserves_constants_and_limits_to_box_blur() {
        let guide = Plane::from_fn(30, 20, |x, y| ((x * 13 + y * 7) % 10) as f64 / 10.0);
        let c = Plane::new(30, 20, 0.7);
        let q = guided_filter_plane(&c, &guide, 3, 1e-3);
        assert!(q.data().iter().all(|v| (v - 0.7).abs() < 1e-12));

        let p = Plane::from_fn(30, 20, |x, y| (x as f64 * 0.3).sin() + y as f64 * 0.01);
        let q = guided_filter_plane(&p, &guide, 3, 1e12);
        let bb = box_mean(&box_mean(&p, 3), 3);
        for (a, b) in q.data().iter().zip(bb.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
