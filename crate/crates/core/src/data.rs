//! CSV ingestion: one observation per row, one numeric column per coordinate.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::WeightedSample;

/// Reads a sample with uniform weights. Rows and columns in errors are
/// 1-based and count the header line when there is one.
pub fn read_csv(path: &Path, header: bool) -> Result<WeightedSample> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, header)
}

pub fn read_csv_from<R: Read>(reader: R, header: bool) -> Result<WeightedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let offset = usize::from(header);
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(i + 1 + offset, |p| p.line() as usize);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => Error::Parse {
                    row,
                    column: len as usize + 1,
                    message: format!("expected {expected_len} fields, found {len}"),
                },
                other => Error::Parse {
                    row,
                    column: 0,
                    message: format!("{other:?}"),
                },
            }
        })?;
        let row = rec.position().map_or(i + 1 + offset, |p| p.line() as usize);
        let point = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("`{field}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    WeightedSample::uniform(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_numbers_with_header() {
        let s = read_csv_from("x,y\n1,2\n 3 , 4.5\n".as_bytes(), true).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.point(1), &[3.0, 4.5]);
    }

    #[test]
    fn names_bad_cell() {
        let err = read_csv_from("x,y\n1,2\n3,abc\n".as_bytes(), true).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other}"),
        }
        let err = read_csv_from("1\n2\nNaN\n".as_bytes(), false).unwrap_err();
        assert!(matches!(
            err,
            Error::Parse {
                row: 3,
                column: 1,
                ..
            }
        ));
    }

    #[test]
    fn ragged_and_empty() {
        assert!(matches!(
            read_csv_from("1,2\n3\n".as_bytes(), false),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(
            read_csv_from("x\n".as_bytes(), true),
            Err(Error::EmptySample)
        ));
    }
}
