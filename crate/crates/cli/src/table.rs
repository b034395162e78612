//! CSV input and output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use lagp::Design;

use crate::Failure;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::input(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Reads a numeric CSV whose header must equal `expect(width)` for some width.
fn read_numeric(
    path: &Path,
    expect: impl Fn(usize) -> Vec<String>,
) -> Result<(usize, Vec<f64>, usize), Failure> {
    let shown = path.display();
    let file = File::open(path).map_err(|e| Failure::input(format!("cannot open {shown}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Failure::input(format!("{shown}: {e}")))?
        .clone();
    let width = header.len();
    let want = expect(width);
    if header.iter().ne(want.iter().map(String::as_str)) {
        return Err(Failure::input(format!(
            "{shown}: line 1: expected header {}, found {}",
            want.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Failure::input(format!("{shown}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Failure::input(format!("{shown}: line {line}: column {}: not a number: {field:?}", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Failure::input(format!(
                    "{shown}: line {line}: column {}: value must be finite",
                    col + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Failure::input(format!("{shown}: no data rows")));
    }
    Ok((width, values, rows))
}

fn x_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

/// Design CSV with header `x1..xp,y`.
pub fn read_design(path: &Path) -> Result<Design, Failure> {
    let (width, values, rows) = read_numeric(path, |w| {
        let mut h = x_names(w.saturating_sub(1));
        h.push("y".into());
        h
    })?;
    if width < 2 {
        return Err(Failure::input(format!("{}: need at least one input column", path.display())));
    }
    let p = width - 1;
    let mut x = Vec::with_capacity(rows * p);
    let mut y = Vec::with_capacity(rows);
    for row in values.chunks(width) {
        x.extend_from_slice(&row[..p]);
        y.push(row[p]);
    }
    Ok(Design::new(x, p, y)?)
}

/// Prediction CSV with header `x1..xp`, where `p` must match the design.
pub fn read_locations(path: &Path, p: usize) -> Result<Vec<f64>, Failure> {
    let (width, values, _) = read_numeric(path, x_names)?;
    if width != p {
        return Err(Failure::input(format!(
            "{}: {width} input columns but the design has {p}",
            path.display()
        )));
    }
    Ok(values)
}

pub fn write_design(out: &mut dyn Write, design: &Design) -> io::Result<()> {
    let p = design.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = x_names(p);
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..design.len() {
        let mut row: Vec<String> = design.row(i).iter().map(|v| fmt_float(*v)).collect();
        row.push(fmt_float(design.response(i)));
        w.write_record(&row)?;
    }
    w.flush()
}
