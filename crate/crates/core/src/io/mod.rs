//! File formats: 8-bit images, binary flow/depth rasters, key=value
//! manifests and CSV tables.

mod binary;
mod tables;

pub use binary::{
    apply_remap, decode_depth, decode_flow, encode_depth, encode_flow, heat_map, mask_path, read_depth, read_flow,
    write_depth, write_flow, DEPTH_MAGIC, FLOW_MAGIC,
};
pub use tables::{
    parse_shape, read_dataset, read_scenarios, shape_spec, write_dataset, write_scenarios, write_sweep_csv,
    write_sweep_plot, DATASET_FORCE_COLUMNS,
};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::force::ForceModel;
use crate::pattern::{to_rgb8, PatternImage, PatternParams};
use crate::raster::{Grid, Image};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads an image as gray or RGB reals in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = image::open(path)?;
    Ok(match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            Image::Gray(Grid::from_fn(w as usize, h as usize, |x, y| {
                g.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
            }))
        }
        _ => {
            let c = img.to_rgb8();
            let (w, h) = c.dimensions();
            Image::Rgb(Grid::from_fn(w as usize, h as usize, |x, y| {
                let p = c.get_pixel(x as u32, y as u32);
                [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
            }))
        }
    })
}

/// Writes an 8-bit image; the format follows the extension (png, ppm, pgm).
pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let (w, h) = image.dims();
    match image {
        Image::Gray(p) => {
            let buf: Vec<u8> = p.data().iter().map(|&v| quantize(v)).collect();
            GrayImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized to raster")
                .save(path)?;
        }
        Image::Rgb(p) => {
            let buf: Vec<u8> = p.data().iter().flat_map(|v| v.map(quantize)).collect();
            RgbImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized to raster")
                .save(path)?;
        }
    }
    Ok(())
}

/// Exports a pattern as 8-bit RGB, optionally cropped to `(width, height)`.
pub fn write_pattern_image(path: &Path, pattern: &PatternImage, crop: Option<(usize, usize)>) -> Result<()> {
    let (w, h, buf) = to_rgb8(pattern, crop);
    RgbImage::from_raw(w as u32, h as u32, buf)
        .expect("buffer sized to raster")
        .save(path)?;
    Ok(())
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("").trim();
            (!l.is_empty()).then_some((i, l))
        })
        .map(|(i, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::format("key=value file", format!("line {} has no '='", i + 1)))
        })
        .collect()
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    parse_kv(&fs::read_to_string(path)?)
}

pub fn format_kv<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{} = {}", k.as_ref(), v.as_ref());
    }
    s
}

pub fn write_kv<K: AsRef<str>, V: AsRef<str>>(path: &Path, pairs: &[(K, V)]) -> Result<()> {
    fs::write(path, format_kv(pairs))?;
    Ok(())
}

fn lookup<T: FromStr>(pairs: &[(String, String)], kind: &'static str, key: &str) -> Result<T> {
    let v = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::format(kind, format!("missing key {key}")))?;
    v.parse()
        .map_err(|_| Error::format(kind, format!("invalid value {v:?} for {key}")))
}

pub fn pattern_manifest(params: &PatternParams, fallback_count: usize) -> Vec<(String, String)> {
    vec![
        ("h".into(), params.resolution_px.to_string()),
        ("w".into(), params.resolution_px.to_string()),
        ("d".into(), params.patch_size_mm.to_string()),
        ("r".into(), params.randomness.to_string()),
        ("seed".into(), params.seed.to_string()),
        ("fallback_count".into(), fallback_count.to_string()),
        ("print_area".into(), params.print_area_mm.to_string()),
    ]
}

/// Pattern parameters and fallback count from a manifest.
pub fn read_pattern_manifest(path: &Path) -> Result<(PatternParams, usize)> {
    let kv = read_kv(path)?;
    const KIND: &str = "pattern manifest";
    let h: usize = lookup(&kv, KIND, "h")?;
    let w: usize = lookup(&kv, KIND, "w")?;
    if h != w {
        return Err(Error::format(KIND, "patterns are square"));
    }
    let mut params = PatternParams::new(w, lookup(&kv, KIND, "d")?, lookup(&kv, KIND, "r")?, lookup(&kv, KIND, "seed")?);
    if kv.iter().any(|(k, _)| k == "print_area") {
        params.print_area_mm = lookup(&kv, KIND, "print_area")?;
    }
    Ok((params, lookup(&kv, KIND, "fallback_count")?))
}

pub fn model_manifest(model: &ForceModel) -> Vec<(String, String)> {
    let a = model.matrix();
    let mut out = Vec::with_capacity(21);
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out.push((format!("a_{}{}", i + 1, j + 1), v.to_string()));
        }
    }
    out.push(("n".into(), model.feature_order.to_string()));
    out.push(("stride".into(), model.stride.to_string()));
    out.push(("units".into(), model.units.clone()));
    out
}

pub fn write_model(path: &Path, model: &ForceModel) -> Result<()> {
    write_kv(path, &model_manifest(model))
}

pub fn read_model(path: &Path) -> Result<ForceModel> {
    const KIND: &str = "model file";
    let kv = read_kv(path)?;
    let mut a = [[0.0; 6]; 3];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = lookup(&kv, KIND, &format!("a_{}{}", i + 1, j + 1))?;
        }
    }
    let mut m = ForceModel::from_matrix(a)?;
    m.feature_order = lookup(&kv, KIND, "n")?;
    m.stride = lookup(&kv, KIND, "stride")?;
    m.units = lookup(&kv, KIND, "units")?;
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# c\na = 1\n\n b=two # trailing\n").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "two".into())]);
        assert!(parse_kv("novalue").is_err());
    }

    #[test]
    fn model_manifest_names() {
        let kv = model_manifest(&ForceModel::zero());
        assert_eq!(kv[0].0, "a_11");
        assert_eq!(kv[17].0, "a_36");
        assert_eq!(kv.len(), 21);
    }
}
