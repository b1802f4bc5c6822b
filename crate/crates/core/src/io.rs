//! CSV helpers shared by every exporter.
//!
//! Reals are written with 17 significant digits so that a value read back
//! parses to the same `f64`, and two runs with the same seed produce
//! byte-identical files.

use std::io::Write;

use crate::Result;

/// Formats a real with 17 significant digits in scientific notation.
pub fn fmt_real(value: f64) -> String {
    if value.is_nan() {
        "nan".to_string()
    } else if value.is_infinite() {
        if value > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{value:.16e}")
    }
}

/// Writes a header and rows of pre-formatted fields.
pub fn write_rows<W, I, R>(writer: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}
