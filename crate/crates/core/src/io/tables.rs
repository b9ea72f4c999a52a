//! CSV tables: force datasets, scenario lists and sweep results.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::force::ForceSample;
use crate::pipeline::SweepTable;
use crate::simulator::{IndenterScenario, IndenterShape};

pub const DATASET_FORCE_COLUMNS: [&str; 3] = ["F_normal", "F_shear_x", "F_shear_y"];
const SCENARIO_COLUMNS: [&str; 7] = ["shape", "diameter", "cx", "cy", "depth", "sx", "sy"];

fn csv_err(kind: &'static str) -> impl Fn(csv::Error) -> Error {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(kind, format!("{other:?}")),
    }
}

fn field<T: std::str::FromStr>(kind: &'static str, rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let s = rec
        .get(i)
        .ok_or_else(|| Error::format(kind, format!("row {line}: missing column {}", i + 1)))?;
    s.trim()
        .parse()
        .map_err(|_| Error::format(kind, format!("row {line}: cannot parse {s:?}")))
}

/// Feature columns `x_kj` (feature row k, force axis j) then the three forces.
pub fn dataset_header() -> Vec<String> {
    let mut h: Vec<String> = (1..=6)
        .flat_map(|k| (1..=3).map(move |j| format!("x_{k}{j}")))
        .collect();
    h.extend(DATASET_FORCE_COLUMNS.iter().map(|s| s.to_string()));
    h
}

pub fn write_dataset(path: &Path, samples: &[ForceSample]) -> Result<()> {
    let err = csv_err("dataset");
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(dataset_header()).map_err(&err)?;
    for s in samples {
        let row: Vec<String> = s
            .features
            .iter()
            .flatten()
            .chain(&s.force)
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<ForceSample>> {
    const KIND: &str = "dataset";
    let err = csv_err(KIND);
    let mut r = csv::Reader::from_path(path).map_err(&err)?;
    let header = r.headers().map_err(&err)?.clone();
    if header.iter().map(str::trim).ne(dataset_header().iter().map(String::as_str)) {
        return Err(Error::format(KIND, "unexpected header"));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        let mut x = [[0.0; 3]; 6];
        for (i, v) in x.iter_mut().flatten().enumerate() {
            *v = field(KIND, &rec, i, line + 2)?;
        }
        let mut f = [0.0; 3];
        for (i, v) in f.iter_mut().enumerate() {
            *v = field(KIND, &rec, 18 + i, line + 2)?;
        }
        out.push(ForceSample { features: x, force: f });
    }
    Ok(out)
}

/// Shape column text: the kind, followed by `:`-separated parameters.
pub fn shape_spec(shape: &IndenterShape) -> String {
    match *shape {
        IndenterShape::Sphere { .. } => "sphere".into(),
        IndenterShape::MultiDot { count, spacing_mm } => format!("multi_dot:{count}:{spacing_mm}"),
        IndenterShape::Edge { length_mm } => format!("edge:{length_mm}"),
        IndenterShape::Ellipsoid { aspect } => format!("ellipsoid:{aspect}"),
        IndenterShape::HexPrism => "hex_prism".into(),
        IndenterShape::Star { points } => format!("star:{points}"),
        IndenterShape::Ring { ring_radius_mm } => format!("ring:{ring_radius_mm}"),
    }
}

/// Parses a shape column; `diameter` fills in the sphere size.
pub fn parse_shape(text: &str, diameter: f64) -> Result<IndenterShape> {
    const KIND: &str = "scenario file";
    let mut parts = text.trim().split(':');
    let kind = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let num = |i: usize, default: f64| -> Result<f64> {
        match args.get(i) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::format(KIND, format!("bad parameter {s:?} in shape {text:?}"))),
            None => Ok(default),
        }
    };
    Ok(match kind {
        "sphere" => IndenterShape::Sphere { diameter_mm: diameter },
        "multi_dot" => IndenterShape::MultiDot {
            count: num(0, 4.0)? as usize,
            spacing_mm: num(1, diameter)?,
        },
        "edge" => IndenterShape::Edge {
            length_mm: num(0, 2.0 * diameter)?,
        },
        "ellipsoid" => IndenterShape::Ellipsoid { aspect: num(0, 1.6)? },
        "hex_prism" => IndenterShape::HexPrism,
        "star" => IndenterShape::Star {
            points: num(0, 5.0)? as usize,
        },
        "ring" => IndenterShape::Ring {
            ring_radius_mm: num(0, diameter)?,
        },
        other => return Err(Error::format(KIND, format!("unknown shape {other:?}"))),
    })
}

/// Rows `shape, diameter, cx, cy, depth, sx, sy`; the contact radius is half
/// the diameter.
pub fn read_scenarios(path: &Path) -> Result<Vec<IndenterScenario>> {
    const KIND: &str = "scenario file";
    let err = csv_err(KIND);
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(&err)?;
    let header = r.headers().map_err(&err)?.clone();
    if header.iter().ne(SCENARIO_COLUMNS) {
        return Err(Error::format(KIND, format!("header must be {}", SCENARIO_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(&err)?;
        let line = line + 2;
        let diameter: f64 = field(KIND, &rec, 1, line)?;
        let sc = IndenterScenario {
            shape: parse_shape(rec.get(0).unwrap_or(""), diameter)?,
            center_mm: [field(KIND, &rec, 2, line)?, field(KIND, &rec, 3, line)?],
            press_depth_mm: field(KIND, &rec, 4, line)?,
            shear_offset_mm: [field(KIND, &rec, 5, line)?, field(KIND, &rec, 6, line)?],
            contact_radius_mm: diameter / 2.0,
        };
        sc.validate()?;
        out.push(sc);
    }
    Ok(out)
}

pub fn write_scenarios(path: &Path, scenarios: &[IndenterScenario]) -> Result<()> {
    let err = csv_err("scenario file");
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(SCENARIO_COLUMNS).map_err(&err)?;
    for s in scenarios {
        w.write_record([
            shape_spec(&s.shape),
            (2.0 * s.contact_radius_mm).to_string(),
            s.center_mm[0].to_string(),
            s.center_mm[1].to_string(),
            s.press_depth_mm.to_string(),
            s.shear_offset_mm[0].to_string(),
            s.shear_offset_mm[1].to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per `(d, r, indenter)` cell; failed cells have empty error columns.
pub fn write_sweep_csv(out: impl Write, table: &SweepTable) -> Result<()> {
    let err = csv_err("sweep table");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "r", "indenter", "patch_px", "delta_px", "delta_mm", "frames", "excluded", "error"])
        .map_err(&err)?;
    for c in &table.cells {
        w.write_record([
            c.d.to_string(),
            c.r.to_string(),
            c.indenter.clone(),
            c.patch_px.to_string(),
            opt(c.delta_px),
            opt(c.delta_mm),
            c.frames.to_string(),
            c.excluded.to_string(),
            c.error.clone().unwrap_or_default(),
        ])
        .map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

/// Stacked-column data: one row per `(d, r)`, one column per indenter (mm).
pub fn write_sweep_plot(out: impl Write, table: &SweepTable) -> Result<()> {
    let err = csv_err("sweep plot");
    let names = table.indenters();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string(), "d".into(), "r".into()];
    header.extend(names.iter().cloned());
    header.push("mean".into());
    w.write_record(&header).map_err(&err)?;
    for (d, r) in table.pairs() {
        let mut row = vec![format!("d={d} r={r}"), d.to_string(), r.to_string()];
        for n in &names {
            let v = table
                .cells
                .iter()
                .find(|c| c.d == d && c.r == r && &c.indenter == n)
                .and_then(|c| c.delta_mm);
            row.push(opt(v));
        }
        row.push(opt(table.mean_over_indenters(d, r)));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_21_columns() {
        let h = dataset_header();
        assert_eq!(h.len(), 21);
        assert_eq!(h[0], "x_11");
        assert_eq!(h[17], "x_63");
    }

    #[test]
    fn shapes_round_trip() {
        for s in [
            IndenterShape::Sphere { diameter_mm: 12.0 },
            IndenterShape::MultiDot { count: 4, spacing_mm: 2.5 },
            IndenterShape::Edge { length_mm: 7.0 },
            IndenterShape::Ellipsoid { aspect: 1.5 },
            IndenterShape::HexPrism,
            IndenterShape::Star { points: 6 },
            IndenterShape::Ring { ring_radius_mm: 3.0 },
        ] {
            assert_eq!(parse_shape(&shape_spec(&s), 12.0).unwrap(), s);
        }
        assert!(parse_shape("cube", 1.0).is_err());
    }
}
