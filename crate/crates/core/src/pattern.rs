//! Dense random color patterns.
//!
//! A pattern is a square raster tiled by square patches of uniform color.
//! Patches are filled in row-major order; each new patch draws its RGB
//! value uniformly from `[0, 1]³` subject to a minimum squared per-channel
//! difference `r` against the patches already placed to its left and above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{Grid, RgbPlane};

/// Default printed side length in mm.
pub const DEFAULT_PRINT_AREA_MM: f64 = 35.0;

/// Rejection-sampling budget per patch before falling back.
pub const MAX_DRAWS: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct PatternParams {
    /// Side length of the square pattern raster, in pixels.
    pub resolution_px: usize,
    /// Physical side length of one patch, in mm.
    pub patch_size_mm: f64,
    /// Randomness regulation factor in `[0, 1)`.
    pub randomness: f64,
    /// Physical side length of the printed square, in mm.
    pub print_area_mm: f64,
    pub seed: u64,
}

impl PatternParams {
    pub fn new(resolution_px: usize, patch_size_mm: f64, randomness: f64, seed: u64) -> Self {
        Self {
            resolution_px,
            patch_size_mm,
            randomness,
            print_area_mm: DEFAULT_PRINT_AREA_MM,
            seed,
        }
    }

    /// Patch side in pixels, `round(d / print_area × w)`.
    pub fn patch_px(&self) -> usize {
        (self.patch_size_mm / self.print_area_mm * self.resolution_px as f64).round() as usize
    }

    /// Patches per side; the trailing partial patch is cropped.
    pub fn patches_per_side(&self) -> usize {
        self.resolution_px.div_ceil(self.patch_px().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.randomness) {
            return Err(Error::InvalidParameter(format!(
                "randomness r = {} must lie in [0, 1)",
                self.randomness
            )));
        }
        if !(self.patch_size_mm > 0.0) || !(self.print_area_mm > 0.0) {
            return Err(Error::InvalidParameter(
                "patch size and print area must be positive".into(),
            ));
        }
        if self.resolution_px == 0 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        if self.patch_px() < 1 {
            return Err(Error::InvalidParameter(format!(
                "patch of {} mm on a {} mm print at {} px maps to less than one pixel",
                self.patch_size_mm, self.print_area_mm, self.resolution_px
            )));
        }
        Ok(())
    }
}

/// Bookkeeping recorded while generating a pattern.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationLog {
    /// Patches that satisfied the neighbor constraint.
    pub accepted: usize,
    /// Patches placed by the best-of-K fallback, as `(col, row)` patch indices.
    pub fallback_patches: Vec<(usize, usize)>,
    /// Uniform candidate draws consumed.
    pub draws: usize,
    /// Mean over patches with causal neighbors of the exact probability
    /// that one uniform draw satisfies the constraint.
    pub mean_acceptance: f64,
}

impl GenerationLog {
    pub fn fallback_count(&self) -> usize {
        self.fallback_patches.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternImage {
    pub pixels: RgbPlane,
    pub params: PatternParams,
    pub log: GenerationLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternReport {
    pub constraint_satisfaction_rate: f64,
    pub min_neighbor_gap: f64,
    pub fallback_count: usize,
    pub patches: usize,
    /// Largest squared deviation of a pixel from its patch color; zero for a
    /// well-formed pattern.
    pub max_patch_variance: f64,
}

/// Closed sub-intervals of `[0, 1]` at distance ≥ `t` from every neighbor value.
fn admissible_segments(neighbors: &[f64], t: f64) -> Vec<(f64, f64)> {
    let mut segs = vec![(0.0, 1.0)];
    for &n in neighbors {
        let (lo, hi) = (n - t, n + t);
        let mut next = Vec::with_capacity(segs.len() + 1);
        for (s, e) in segs {
            if e <= lo || s >= hi {
                next.push((s, e));
                continue;
            }
            if s <= lo {
                next.push((s, lo));
            }
            if e >= hi {
                next.push((hi, e));
            }
        }
        segs = next;
    }
    segs
}

fn sample_segments(segs: &[(f64, f64)], u: f64) -> f64 {
    let total: f64 = segs.iter().map(|(s, e)| e - s).sum();
    let mut rem = u * total;
    for &(s, e) in segs {
        let len = e - s;
        if rem <= len {
            return s + rem;
        }
        rem -= len;
    }
    segs.last().map_or(u, |s| s.1)
}

/// Minimum over neighbors and channels of the squared channel difference.
pub fn min_squared_gap(color: [f64; 3], neighbors: &[[f64; 3]]) -> f64 {
    neighbors
        .iter()
        .flat_map(|n| (0..3).map(move |c| (color[c] - n[c]).powi(2)))
        .fold(f64::INFINITY, f64::min)
}

fn place_patch(
    rng: &mut ChaCha8Rng,
    neighbors: &[[f64; 3]],
    r: f64,
    log: &mut GenerationLog,
) -> ([f64; 3], bool) {
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 3] { [rng.random(), rng.random(), rng.random()] };
    if neighbors.is_empty() {
        log.draws += 1;
        return (draw(rng), true);
    }
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    for _ in 0..MAX_DRAWS {
        let c = draw(rng);
        log.draws += 1;
        let gap = min_squared_gap(c, neighbors);
        if gap >= r {
            return (c, true);
        }
        if gap > best.1 {
            best = (c, gap);
        }
    }
    // The acceptance region is a product over channels, so when the budget
    // runs out an exact draw from each channel's admissible set has the same
    // distribution as continuing to reject.
    let t = r.sqrt();
    let segs: Vec<Vec<(f64, f64)>> = (0..3)
        .map(|c| {
            let ns: Vec<f64> = neighbors.iter().map(|n| n[c]).collect();
            admissible_segments(&ns, t)
        })
        .collect();
    if segs.iter().all(|s| !s.is_empty()) {
        let mut c = [0.0; 3];
        for (ch, s) in segs.iter().enumerate() {
            c[ch] = sample_segments(s, rng.random());
        }
        return (c, true);
    }
    (best.0, false)
}

fn acceptance_probability(neighbors: &[[f64; 3]], r: f64) -> f64 {
    let t = r.sqrt();
    (0..3)
        .map(|c| {
            let ns: Vec<f64> = neighbors.iter().map(|n| n[c]).collect();
            admissible_segments(&ns, t)
                .iter()
                .map(|(s, e)| e - s)
                .sum::<f64>()
        })
        .product()
}

/// Generates the pattern; deterministic in `params.seed`.
pub fn generate_pattern(params: &PatternParams) -> Result<PatternImage> {
    params.validate()?;
    let p = params.patch_px();
    let n = params.patches_per_side();
    let r = params.randomness;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut colors = Grid::new(n, n, [0.0f64; 3]);
    let mut log = GenerationLog::default();
    let mut acc_sum = 0.0;
    let mut acc_n = 0usize;
    let mut neighbors = Vec::with_capacity(2);
    for row in 0..n {
        for col in 0..n {
            neighbors.clear();
            if col > 0 {
                neighbors.push(colors.get(col - 1, row));
            }
            if row > 0 {
                neighbors.push(colors.get(col, row - 1));
            }
            if !neighbors.is_empty() {
                acc_sum += acceptance_probability(&neighbors, r);
                acc_n += 1;
            }
            let (c, ok) = place_patch(&mut rng, &neighbors, r, &mut log);
            if ok {
                log.accepted += 1;
            } else {
                log.fallback_patches.push((col, row));
            }
            colors.set(col, row, c);
        }
    }
    log.mean_acceptance = if acc_n > 0 { acc_sum / acc_n as f64 } else { 1.0 };
    let w = params.resolution_px;
    let pixels = Grid::from_fn(w, w, |x, y| colors.get(x / p, y / p));
    Ok(PatternImage {
        pixels,
        params: params.clone(),
        log,
    })
}

/// Re-scans a pattern raster against the full 4-neighbor constraint.
pub fn validate_pattern(image: &PatternImage, params: &PatternParams) -> Result<PatternReport> {
    params.validate()?;
    let w = params.resolution_px;
    if image.pixels.dims() != (w, w) {
        return Err(Error::Dimension(format!(
            "pattern raster is {}x{}, params expect {w}x{w}",
            image.pixels.width(),
            image.pixels.height()
        )));
    }
    let p = params.patch_px();
    let n = params.patches_per_side();
    let px = &image.pixels;

    // per-patch color and spread around it, in parallel over patches
    let stats: Vec<([f64; 3], f64)> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (col, row) = (i % n, i / n);
            let (x0, y0) = (col * p, row * p);
            let (x1, y1) = ((x0 + p).min(w), (y0 + p).min(w));
            let mean = px.get(x0, y0);
            let mut var = 0.0f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = px.get(x, y);
                    let d: f64 = (0..3).map(|c| (v[c] - mean[c]).powi(2)).sum();
                    var = var.max(d);
                }
            }
            (px.get(x0, y0), var)
        })
        .collect();

    let r = params.randomness;
    let gaps: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (col, row) = (i % n, i / n);
            let mut nb = Vec::with_capacity(4);
            if col > 0 {
                nb.push(stats[i - 1].0);
            }
            if col + 1 < n {
                nb.push(stats[i + 1].0);
            }
            if row > 0 {
                nb.push(stats[i - n].0);
            }
            if row + 1 < n {
                nb.push(stats[i + n].0);
            }
            min_squared_gap(stats[i].0, &nb)
        })
        .collect();
    let satisfied = gaps.iter().filter(|&&g| g >= r).count();
    Ok(PatternReport {
        constraint_satisfaction_rate: satisfied as f64 / gaps.len() as f64,
        min_neighbor_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        fallback_count: image.log.fallback_count(),
        patches: gaps.len(),
        max_patch_variance: stats.iter().map(|s| s.1).fold(0.0, f64::max),
    })
}

/// Quantizes to 8-bit RGB, optionally cropping to `width × height` from the top-left.
pub fn to_rgb8(image: &PatternImage, crop: Option<(usize, usize)>) -> (usize, usize, Vec<u8>) {
    let (w, h) = crop.unwrap_or(image.pixels.dims());
    let w = w.min(image.pixels.width());
    let h = h.min(image.pixels.height());
    let mut buf = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in image.pixels.get(x, y) {
                buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    (w, h, buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_side_for_printed_example() {
        let p = PatternParams::new(700, 0.15, 0.04, 1);
        assert_eq!(p.patch_px(), 3);
        assert_eq!(p.patches_per_side(), 234);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PatternParams::new(100, 0.15, 1.0, 0).validate().is_err());
        assert!(PatternParams::new(100, 0.15, -0.1, 0).validate().is_err());
        // 0.1 / 35 * 100 rounds to 0 px
        assert!(PatternParams::new(100, 0.1, 0.1, 0).validate().is_err());
        assert!(generate_pattern(&PatternParams::new(100, 0.1, 0.1, 0)).is_err());
    }

    #[test]
    fn zero_randomness_never_rejects() {
        let p = PatternParams::new(120, 0.7, 0.0, 3);
        let img = generate_pattern(&p).unwrap();
        let n = p.patches_per_side();
        assert_eq!(img.log.fallback_count(), 0);
        assert_eq!(img.log.draws, n * n);
        let rep = validate_pattern(&img, &p).unwrap();
        assert_eq!(rep.constraint_satisfaction_rate, 1.0);
    }

    #[test]
    fn checkerboard_and_monochrome_reports() {
        let params = PatternParams {
            resolution_px: 40,
            patch_size_mm: 4.0,
            randomness: 0.9,
            print_area_mm: 40.0,
            seed: 0,
        };
        let board = Grid::from_fn(40, 40, |x, y| {
            if (x / 4 + y / 4) % 2 == 0 {
                [0.0; 3]
            } else {
                [1.0; 3]
            }
        });
        let img = PatternImage {
            pixels: board,
            params: params.clone(),
            log: GenerationLog::default(),
        };
        let rep = validate_pattern(&img, &params).unwrap();
        assert_eq!(rep.constraint_satisfaction_rate, 1.0);
        assert_eq!(rep.min_neighbor_gap, 1.0);
        assert_eq!(rep.max_patch_variance, 0.0);

        let mono = PatternImage {
            pixels: Grid::new(40, 40, [0.3, 0.5, 0.7]),
            params: params.clone(),
            log: GenerationLog::default(),
        };
        let p1 = PatternParams {
            randomness: 0.1,
            ..params
        };
        let rep = validate_pattern(&mono, &p1).unwrap();
        assert_eq!(rep.constraint_satisfaction_rate, 0.0);
        assert_eq!(rep.min_neighbor_gap, 0.0);
    }

    #[test]
    fn validation_rejects_dimension_mismatch() {
        let p = PatternParams::new(60, 1.75, 0.1, 9);
        let img = generate_pattern(&p).unwrap();
        let other = PatternParams::new(90, 1.75, 0.1, 9);
        assert!(matches!(
            validate_pattern(&img, &other),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn infeasible_configuration_falls_back() {
        // neighbors at 0.1 and 0.9 leave nothing at distance ≥ sqrt(0.6)
        assert!(admissible_segments(&[0.1, 0.9], 0.6f64.sqrt()).is_empty());
        let p = PatternParams::new(100, 3.5, 0.6, 5);
        let img = generate_pattern(&p).unwrap();
        assert!(img.log.fallback_count() > 0);
        let rep = validate_pattern(&img, &p).unwrap();
        assert!(rep.constraint_satisfaction_rate < 1.0);
        assert!(rep.min_neighbor_gap < 0.6);
    }

    #[test]
    fn admissible_segments_exclude_open_neighborhoods() {
        let s = admissible_segments(&[0.5], 0.2);
        assert_eq!(s.len(), 2);
        assert!((s[0].1 - 0.3).abs() < 1e-15 && (s[1].0 - 0.7).abs() < 1e-15);
        for u in [0.0, 0.2, 0.5, 0.9, 1.0] {
            let v = sample_segments(&s, u);
            assert!((v - 0.5).abs() >= 0.2 - 1e-12, "{v}");
        }
    }

    #[test]
    fn trailing_partial_patches_are_cropped() {
        let p = PatternParams {
            resolution_px: 10,
            patch_size_mm: 3.0,
            randomness: 0.05,
            print_area_mm: 10.0,
            seed: 2,
        };
        let img = generate_pattern(&p).unwrap();
        assert_eq!(img.pixels.dims(), (10, 10));
        assert_eq!(p.patches_per_side(), 4);
        let rep = validate_pattern(&img, &p).unwrap();
        assert_eq!(rep.max_patch_variance, 0.0);
        assert_eq!(rep.patches, 16);
    }
}
