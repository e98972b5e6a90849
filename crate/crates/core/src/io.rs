//! Panel and coefficient-field CSV files.
//!
//! A panel file holds one replicate per row, `M` comma-separated decimal
//! values, with an optional single header row. Values are written with the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::io::Read;

use crate::dwt::CoefficientTree;
use crate::error::{Error, Result};
use crate::estimator::CurvePanel;
use crate::threshold::VarianceField;

/// Columns removed from each row before the panel is validated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Crop {
    pub left: usize,
    pub right: usize,
}

fn input_error(line: usize, message: impl Into<String>) -> Error {
    Error::Input { line, message: message.into() }
}

fn parse_value(field: &str, line: usize, column: usize) -> Result<f64> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| input_error(line, format!("column {column}: `{}` is not a number", field.trim())))?;
    if !value.is_finite() {
        return Err(input_error(line, format!("column {column}: non-finite value `{}`", field.trim())));
    }
    Ok(value)
}

/// Reads a panel, applying `crop` to every row.
pub fn read_panel<R: Read>(reader: R, crop: Crop) -> Result<CurvePanel> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (index, record) in csv.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(index + 1, |p| p.line() as usize);
            input_error(line, e.to_string())
        })?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>> =
            record.iter().enumerate().map(|(c, f)| parse_value(f, line, c + 1)).collect();
        let values = match parsed {
            Ok(values) => values,
            // a non-numeric first row is a header
            Err(_) if index == 0 => continue,
            Err(e) => return Err(e),
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(input_error(line, format!("row has {} values, expected {w}", values.len())));
            }
            _ => {}
        }
        if crop.left + crop.right >= values.len() {
            return Err(input_error(
                line,
                format!("cropping {} + {} columns leaves nothing of {}", crop.left, crop.right, values.len()),
            ));
        }
        rows.push(values[crop.left..values.len() - crop.right].to_vec());
    }
    let m = rows.first().map(Vec::len).ok_or_else(|| input_error(1, "no data rows"))?;
    if !m.is_power_of_two() || m < 2 {
        return Err(input_error(
            1,
            format!("rows have {m} values after cropping; need a power of two >= 2 (see --crop-left/--crop-right)"),
        ));
    }
    CurvePanel::new(rows)
}

pub fn row_csv(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
    out
}

pub fn panel_csv(panel: &CurvePanel) -> String {
    panel.rows().map(row_csv).collect()
}

/// Detail variances as `j,k,sigma2` rows.
pub fn variances_csv(field: &VarianceField) -> String {
    let mut out = String::from("j,k,sigma2\n");
    for (j, k, v) in field.iter_details() {
        let _ = writeln!(out, "{j},{k},{v}");
    }
    out
}

/// Parses [`variances_csv`] output; the scaling slot is set to `sigma2_c`.
pub fn read_variances<R: Read>(reader: R, sigma2_c: f64) -> Result<VarianceField> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for (index, record) in csv.records().enumerate() {
        let line = index + 2;
        let record = record.map_err(|e| input_error(line, e.to_string()))?;
        if record.len() != 3 {
            return Err(input_error(line, format!("expected 3 columns, found {}", record.len())));
        }
        let j: usize = record[0].parse().map_err(|_| input_error(line, "bad level index"))?;
        let k: usize = record[1].parse().map_err(|_| input_error(line, "bad position index"))?;
        let v = parse_value(&record[2], line, 3)?;
        entries.push((j, k, v));
    }
    let levels = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut tree = CoefficientTree::zeros(levels);
    tree.set_scaling(sigma2_c);
    let mut seen = vec![false; 1 << levels];
    for (j, k, v) in entries {
        if k >= 1 << j {
            return Err(Error::Structure(format!("position {k} out of range on level {j}")));
        }
        tree.level_mut(j)[k] = v;
        seen[(1 << j) + k] = true;
    }
    if seen.iter().skip(1).any(|s| !s) {
        return Err(Error::Structure("variance file does not cover every (j, k)".into()));
    }
    VarianceField::from_tree(tree)
}
