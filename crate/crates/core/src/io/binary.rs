//! Little-endian raster containers: `PIEH` two-channel flow and `DPTH`
//! single-channel depth, both `magic, i32 width, i32 height, f32 data`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{Grid, Image, Plane, VecField};

pub const FLOW_MAGIC: &[u8; 4] = b"PIEH";
pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

fn encode(magic: &[u8; 4], width: usize, height: usize, values: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let w = i32::try_from(width).map_err(|_| Error::InvalidParameter("raster too wide".into()))?;
    let h = i32::try_from(height).map_err(|_| Error::InvalidParameter("raster too tall".into()))?;
    let mut out = Vec::with_capacity(12);
    out.extend_from_slice(magic);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn decode(kind: &'static str, magic: &[u8; 4], bytes: &[u8], channels: usize) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::format(kind, "missing magic header"));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let h = i32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if w <= 0 || h <= 0 {
        return Err(Error::format(kind, format!("invalid size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + 4 * channels * w * h;
    if bytes.len() != expected {
        return Err(Error::format(
            kind,
            format!("{} bytes for {w}x{h}x{channels}, expected {expected}", bytes.len()),
        ));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((w, h, values))
}

pub fn encode_flow(u: &VecField) -> Result<Vec<u8>> {
    encode(FLOW_MAGIC, u.width(), u.height(), u.data().iter().flat_map(|v| [v[0], v[1]]))
}

pub fn decode_flow(bytes: &[u8]) -> Result<VecField> {
    let (w, h, v) = decode("flow file", FLOW_MAGIC, bytes, 2)?;
    VecField::from_vec(w, h, v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}

pub fn encode_depth(p: &Plane) -> Result<Vec<u8>> {
    encode(DEPTH_MAGIC, p.width(), p.height(), p.data().iter().copied())
}

pub fn decode_depth(bytes: &[u8]) -> Result<Plane> {
    let (w, h, v) = decode("depth file", DEPTH_MAGIC, bytes, 1)?;
    Plane::from_vec(w, h, v)
}

/// Sidecar path of the validity raster: `name.flo` → `name.flo.mask.png`.
pub fn mask_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".mask.png");
    path.with_file_name(name)
}

/// Writes the flow and its 8-bit validity sidecar (255 valid, 0 invalid).
pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    fs::write(path, encode_flow(&flow.u)?)?;
    let mask = flow.valid.map(|v| if v { 1.0 } else { 0.0 });
    super::write_image(&mask_path(path), &Image::Gray(mask))
}

/// Reads a flow file. Without a sidecar every finite vector counts as valid.
pub fn read_flow(path: &Path) -> Result<FlowField> {
    let u = decode_flow(&fs::read(path)?)?;
    let mp = mask_path(path);
    let valid = if mp.exists() {
        let m = super::read_image(&mp)?.luma();
        if m.dims() != u.dims() {
            return Err(Error::Dimension(format!(
                "mask {:?} vs flow {:?}",
                m.dims(),
                u.dims()
            )));
        }
        m.map(|v| v >= 0.5)
    } else {
        u.map(|v| v[0].is_finite() && v[1].is_finite())
    };
    Ok(FlowField { u, valid })
}

pub fn write_depth(path: &Path, depth: &Plane) -> Result<()> {
    fs::write(path, encode_depth(depth)?)?;
    Ok(())
}

pub fn read_depth(path: &Path) -> Result<Plane> {
    decode_depth(&fs::read(path)?)
}

/// Black–red–yellow–white map of `p / max(p)`; non-positive values are black.
pub fn heat_map(p: &Plane) -> Image {
    let (_, hi) = p.min_max();
    let scale = if hi > 0.0 { 1.0 / hi } else { 0.0 };
    Image::Rgb(Grid::from_fn(p.width(), p.height(), |x, y| {
        let t = (p.get(x, y) * scale).clamp(0.0, 1.0);
        [(3.0 * t).min(1.0), (3.0 * t - 1.0).clamp(0.0, 1.0), (3.0 * t - 2.0).clamp(0.0, 1.0)]
    }))
}

/// Displacement remap applied before tracking: every output pixel samples
/// the input at the absolute position stored in a `PIEH` file.
pub fn apply_remap(image: &Image, map: &VecField) -> Result<Image> {
    if image.dims() != map.dims() {
        return Err(Error::Dimension(format!(
            "remap {:?} vs image {:?}",
            map.dims(),
            image.dims()
        )));
    }
    Ok(match image {
        Image::Gray(p) => Image::Gray(Grid::from_fn(p.width(), p.height(), |x, y| {
            let m = map.get(x, y);
            p.sample_clamped(m[0], m[1])
        })),
        Image::Rgb(p) => Image::Rgb(Grid::from_fn(p.width(), p.height(), |x, y| {
            let m = map.get(x, y);
            p.sample_clamped(m[0], m[1])
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let u = VecField::from_fn(3, 2, |x, y| [x as f64, -(y as f64)]);
        let b = encode_flow(&u).unwrap();
        assert_eq!(&b[..4], b"PIEH");
        assert_eq!(i32::from_le_bytes(b[4..8].try_into().unwrap()), 3);
        assert_eq!(i32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(b.len(), 12 + 3 * 2 * 8);
        // second pixel of the first row: (1, -0)
        assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), 1.0);
        assert_eq!(decode_flow(&b).unwrap(), u);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_flow(b"PIEH").is_err());
        let mut b = encode_depth(&Plane::zeros(2, 2)).unwrap();
        assert!(decode_flow(&b).is_err());
        b.pop();
        assert!(decode_depth(&b).is_err());
    }

    #[test]
    fn heat_map_extremes() {
        let p = Plane::from_vec(3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        let Image::Rgb(h) = heat_map(&p) else { unreachable!() };
        assert_eq!(h.get(0, 0), [0.0, 0.0, 0.0]);
        assert_eq!(h.get(2, 0), [1.0, 1.0, 1.0]);
    }
}
