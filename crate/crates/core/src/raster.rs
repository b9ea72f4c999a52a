//! Dense 2D rasters and the small set of filters the pipeline shares.
//!
//! Coordinates follow image convention: `x` is the column, `y` is the row,
//! pixel centers sit on integer coordinates and `(0, 0)` is top-left.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Element type storable in a [`Grid`] that supports linear blending.
pub trait Pixel: Copy + Send + Sync + 'static {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, k: f64) -> Self;

    #[inline]
    fn lerp(a: Self, b: Self, t: f64) -> Self {
        a.scale(1.0 - t).add(b.scale(t))
    }
}

impl Pixel for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

impl<const N: usize> Pixel for [f64; N] {
    #[inline]
    fn zero() -> Self {
        [0.0; N]
    }
    #[inline]
    fn add(mut self, other: Self) -> Self {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
        self
    }
    #[inline]
    fn scale(mut self, k: f64) -> Self {
        for a in self.iter_mut() {
            *a *= k;
        }
        self
    }
}

/// Row-major `width × height` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Single-channel real raster.
pub type Plane = Grid<f64>;
/// Two-component vector field `(u, v)` per pixel.
pub type VecField = Grid<[f64; 2]>;
/// RGB raster with channels in `[0, 1]`.
pub type RgbPlane = Grid<[f64; 3]>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "buffer of {} elements cannot form a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    /// Replicate-border access.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xi = x.clamp(0, self.width as isize - 1) as usize;
        let yi = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xi, yi)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copy of the sub-rectangle starting at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Grid::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }
}

impl<T: Pixel> Grid<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, T::zero())
    }

    /// Bilinear sample; `None` when `(x, y)` lies outside `[0, w-1] × [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<T> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        Some(self.sample_unchecked(x, y))
    }

    /// Bilinear sample with replicated borders.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> T {
        let x = x.clamp(0.0, self.width as f64 - 1.0);
        let y = y.clamp(0.0, self.height as f64 - 1.0);
        self.sample_unchecked(x, y)
    }

    #[inline]
    fn sample_unchecked(&self, x: f64, y: f64) -> T {
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let top = T::lerp(self.get(x0, y0), self.get(x1, y0), tx);
        let bottom = T::lerp(self.get(x0, y1), self.get(x1, y1), tx);
        T::lerp(top, bottom, ty)
    }
}

impl Plane {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Location of the maximum value (first occurrence in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub fn luminance(rgb: &RgbPlane) -> Plane {
    rgb.map(|[r, g, b]| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
}

/// A camera frame, grayscale or color.
#[derive(Clone, Debug, PartialEq)]
pub enum Image {
    Gray(Plane),
    Rgb(RgbPlane),
}

impl Image {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Image::Gray(p) => p.dims(),
            Image::Rgb(p) => p.dims(),
        }
    }

    pub fn luma(&self) -> Plane {
        match self {
            Image::Gray(p) => p.clone(),
            Image::Rgb(p) => luminance(p),
        }
    }
}

impl From<Plane> for Image {
    fn from(p: Plane) -> Self {
        Image::Gray(p)
    }
}

impl From<RgbPlane> for Image {
    fn from(p: RgbPlane) -> Self {
        Image::Rgb(p)
    }
}

/// Normalized 1D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable correlation with a symmetric kernel, replicate border.
pub fn separable_filter<T: Pixel>(src: &Grid<T>, kernel: &[f64]) -> Grid<T> {
    let (w, h) = src.dims();
    let r = (kernel.len() / 2) as isize;
    let mut tmp = Grid::<T>::zeros(w, h);
    tmp.data
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (k, &wk) in kernel.iter().enumerate() {
                    let xs = x as isize + k as isize - r;
                    acc = acc.add(src.get_clamped(xs, y as isize).scale(wk));
                }
                *out = acc;
            }
        });
    let mut out = Grid::<T>::zeros(w, h);
    out.data
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (k, &wk) in kernel.iter().enumerate() {
                    let ys = y as isize + k as isize - r;
                    acc = acc.add(tmp.get_clamped(x as isize, ys).scale(wk));
                }
                *o = acc;
            }
        });
    out
}

pub fn gaussian_blur<T: Pixel>(src: &Grid<T>, sigma: f64) -> Grid<T> {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    separable_filter(src, &gaussian_kernel(sigma, radius))
}

/// Mean over the `(2r+1)²` window clipped to the raster (count-normalized).
///
/// Running sums make the cost independent of `radius`.
pub fn box_mean<T: Pixel>(src: &Grid<T>, radius: usize) -> Grid<T> {
    let (w, h) = src.dims();
    let r = radius as isize;
    // horizontal pass
    let mut tmp = Grid::<T>::zeros(w, h);
    tmp.data
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let line = src.row(y);
            let mut prefix = Vec::with_capacity(w + 1);
            prefix.push(T::zero());
            for &v in line {
                let last = *prefix.last().unwrap();
                prefix.push(T::add(last, v));
            }
            for (x, out) in row.iter_mut().enumerate() {
                let lo = (x as isize - r).max(0) as usize;
                let hi = ((x as isize + r) as usize).min(w - 1) + 1;
                let n = (hi - lo) as f64;
                *out = prefix[hi].add(prefix[lo].scale(-1.0)).scale(1.0 / n);
            }
        });
    // vertical pass, column prefix sums computed row by row
    let mut prefix = vec![T::zero(); (h + 1) * w];
    for y in 0..h {
        for x in 0..w {
            prefix[(y + 1) * w + x] = prefix[y * w + x].add(tmp.get(x, y));
        }
    }
    let mut out = Grid::<T>::zeros(w, h);
    out.data
        .par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let lo = (y as isize - r).max(0) as usize;
            let hi = ((y as isize + r) as usize).min(h - 1) + 1;
            let n = (hi - lo) as f64;
            for (x, o) in row.iter_mut().enumerate() {
                *o = prefix[hi * w + x]
                    .add(prefix[lo * w + x].scale(-1.0))
                    .scale(1.0 / n);
            }
        });
    out
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_bilinear<T: Pixel>(src: &Grid<T>, width: usize, height: usize) -> Grid<T> {
    let sx = src.width() as f64 / width as f64;
    let sy = src.height() as f64 / height as f64;
    let mut out = Grid::<T>::zeros(width, height);
    out.data
        .par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let ys = (y as f64 + 0.5) * sy - 0.5;
            for (x, o) in row.iter_mut().enumerate() {
                let xs = (x as f64 + 0.5) * sx - 0.5;
                *o = src.sample_clamped(xs, ys);
            }
        });
    out
}
