//! CSV ingestion and plot-ready output files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::coverage::CoverageDiagram;
use crate::error::{invalid, Result};
use crate::kde::PointCloud;
use crate::risk::RiskCurve;
use crate::scms::RidgeSet;

/// A parsed point cloud plus the number of rows that were rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub cloud: PointCloud,
    pub skipped_rows: usize,
    pub header: Option<Vec<String>>,
}

/// Reads numeric columns from a CSV file. See [`parse_csv`].
pub fn load_csv(path: impl AsRef<Path>, columns: Option<&[&str]>) -> Result<Loaded> {
    let mut text = String::new();
    File::open(path.as_ref())
        .map_err(|e| invalid(format!("cannot open {}: {e}", path.as_ref().display())))?
        .read_to_string(&mut text)?;
    parse_csv(&text, columns)
}

/// Parses comma-separated rows. A first row containing any non-numeric field
/// is treated as a header. With `columns`, only the named header columns are
/// read, in the given order; otherwise all columns are. Rows with missing or
/// non-finite values are skipped and counted.
pub fn parse_csv(text: &str, columns: Option<&[&str]>) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records().peekable();

    let mut header = None;
    if let Some(Ok(first)) = records.peek() {
        if first.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(first.iter().map(str::to_string).collect::<Vec<_>>());
            records.next();
        }
    }

    let selected: Option<Vec<usize>> = match columns {
        None => None,
        Some(names) => {
            let head = header
                .as_ref()
                .ok_or_else(|| invalid("column names given but the file has no header row"))?;
            Some(
                names
                    .iter()
                    .map(|name| {
                        head.iter()
                            .position(|h| h == name)
                            .ok_or_else(|| invalid(format!("column '{name}' not found in header")))
                    })
                    .collect::<Result<_>>()?,
            )
        }
    };

    let mut dim = selected.as_ref().map(Vec::len);
    let mut coords = Vec::new();
    let mut skipped = 0;
    for record in records {
        let Ok(record) = record else {
            skipped += 1;
            continue;
        };
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = match &selected {
            Some(idx) => idx.iter().map(|&i| record.get(i).unwrap_or("")).collect(),
            None => record.iter().collect(),
        };
        let values: Option<Vec<f64>> = fields
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let want = *dim.get_or_insert(fields.len());
        match values {
            Some(v) if v.len() == want => coords.extend(v),
            _ => skipped += 1,
        }
    }
    if coords.is_empty() {
        return Err(invalid("no valid numeric rows"));
    }
    Ok(Loaded {
        cloud: PointCloud::new(coords, dim.unwrap_or(1))?,
        skipped_rows: skipped,
        header,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        invalid(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn coord_names(dim: usize) -> Vec<String> {
    match dim {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (0..dim).map(|k| format!("x{k}")).collect(),
    }
}

/// Point cloud CSV with a header row. `Display` formatting of `f64` is the
/// shortest representation that parses back to the same value.
pub fn write_point_cloud<W: Write>(mut w: W, cloud: &PointCloud) -> Result<()> {
    writeln!(w, "{}", coord_names(cloud.dim()).join(","))?;
    for p in cloud.iter() {
        let row: Vec<String> = p.iter().map(f64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_point_cloud(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

/// Ridge CSV: coordinates, density, projected_gradient_norm, lambda2.
pub fn write_ridge<W: Write>(mut w: W, ridge: &RidgeSet) -> Result<()> {
    let mut head = coord_names(ridge.dim);
    head.extend(["density", "projected_gradient_norm", "lambda2"].map(String::from));
    writeln!(w, "{}", head.join(","))?;
    for p in &ridge.points {
        let mut row: Vec<String> = p.position.iter().map(f64::to_string).collect();
        row.push(p.density.to_string());
        row.push(p.projected_gradient_norm.to_string());
        row.push(p.lambda2.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_ridge(path: impl AsRef<Path>, ridge: &RidgeSet) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_ridge(&mut w, ridge)?;
    w.flush()?;
    Ok(())
}

pub fn write_coverage<W: Write>(mut w: W, diagram: &CoverageDiagram) -> Result<()> {
    writeln!(w, "r,cdf_12,cdf_21")?;
    for ((r, a), b) in diagram.radii.iter().zip(&diagram.cdf_12).zip(&diagram.cdf_21) {
        writeln!(w, "{r},{a},{b}")?;
    }
    Ok(())
}

pub fn save_coverage(path: impl AsRef<Path>, diagram: &CoverageDiagram) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_coverage(&mut w, diagram)?;
    w.flush()?;
    Ok(())
}

/// Risk curve CSV: h, risk1, risk2, method. Infinite risks print as `inf`.
pub fn write_risk_curve<W: Write>(mut w: W, curve: &RiskCurve) -> Result<()> {
    writeln!(w, "h,risk1,risk2,method")?;
    for e in &curve.entries {
        writeln!(w, "{},{},{},{}", e.h, e.risk1, e.risk2, e.method)?;
    }
    Ok(())
}

pub fn save_risk_curve(path: impl AsRef<Path>, curve: &RiskCurve) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_risk_curve(&mut w, curve)?;
    w.flush()?;
    Ok(())
}

pub fn save_json(path: impl AsRef<Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
