//! Plain-text matrix format: a header line `rows cols`, then one line per
//! row of whitespace-separated values written with 17 significant digits
//! (round-trip safe for f64).

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut buf = Vec::new();
    write_matrix(&mut buf, m).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

/// Read one matrix. Leading blank lines are skipped, so blocks separated by
/// blank lines can be read back to back.
pub fn read_matrix<R: BufRead>(input: &mut R) -> Result<DMatrix<f64>> {
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Parse("missing matrix header".into()));
        }
        if !line.trim().is_empty() {
            break;
        }
    }
    let dims: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token `{t}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse(format!("header must be `rows cols`, got `{}`", line.trim())));
    };
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Parse(format!("missing row {i}")));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad value `{t}` in row {i}"))))
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::Parse(format!("row {i} has {} values, expected {cols}", row.len())));
        }
        values.extend(row);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    read_matrix(&mut text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream_rng};

    #[test]
    fn round_trip_is_bit_exact() {
        let m = gaussian_matrix(&mut stream_rng(11, 0), 4, 3) * 1e-3;
        let text = matrix_to_string(&m);
        assert!(text.starts_with("4 3\n"));
        assert_eq!(parse_matrix(&text).unwrap(), m);
    }

    #[test]
    fn blocks_separated_by_blank_lines() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[3.0, -4.5]);
        let text = format!("{}\n{}", matrix_to_string(&a), matrix_to_string(&b));
        let mut reader = text.as_bytes();
        assert_eq!(read_matrix(&mut reader).unwrap(), a);
        assert_eq!(read_matrix(&mut reader).unwrap(), b);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(parse_matrix("2 2\n1 2\n3\n").is_err());
        assert!(parse_matrix("2\n").is_err());
        assert!(parse_matrix("").is_err());
    }
}
