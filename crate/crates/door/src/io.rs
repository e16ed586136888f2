//! CSV ingestion and export of two-arm ordinal datasets.
//!
//! Files are UTF-8, comma separated, with a header row. Cells that are empty
//! or spell a missing marker (`NA`, `NaN`, `.`) are missing: by default the
//! first one aborts the load with its data row number (1-based, header
//! excluded); with `complete_case` every affected row is dropped and counted.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use door_core::DoorDataset;

use crate::error::{CliError, CliResult};

/// Which header columns hold the outcome, treatment and covariates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: DoorDataset,
    /// Rows dropped for missing values (complete-case mode only).
    pub dropped: usize,
}

const MISSING: [&str; 5] = ["", "NA", "na", "NaN", "."];

fn is_missing(cell: &str) -> bool {
    MISSING.contains(&cell.trim())
}

enum Cell {
    Missing,
    Value(f64),
}

fn parse_cell(raw: &str, row: usize, column: &str) -> CliResult<Cell> {
    if is_missing(raw) {
        return Ok(Cell::Missing);
    }
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Cell::Value)
        .ok_or_else(|| CliError::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

pub fn load_csv(path: &Path, map: &ColumnMap, levels: usize, complete_case: bool) -> CliResult<Loaded> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, map, levels, complete_case)
}

pub fn read_csv<R: Read>(reader: R, map: &ColumnMap, levels: usize, complete_case: bool) -> CliResult<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let y_col = find(&map.outcome)?;
    let z_col = find(&map.treatment)?;
    let x_cols = map
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<CliResult<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x = Vec::new();
    let mut dropped = 0;
    let mut row_values = Vec::with_capacity(x_cols.len());
    for (index, record) in rdr.records().enumerate() {
        let record = record?;
        let row = index + 1;
        let columns = std::iter::once((y_col, map.outcome.as_str()))
            .chain(std::iter::once((z_col, map.treatment.as_str())))
            .chain(x_cols.iter().copied().zip(map.covariates.iter().map(String::as_str)));
        row_values.clear();
        let mut missing = None;
        for (col, name) in columns {
            match parse_cell(record.get(col).unwrap_or(""), row, name)? {
                Cell::Value(v) => row_values.push(v),
                Cell::Missing => {
                    missing.get_or_insert(name);
                    row_values.push(f64::NAN);
                }
            }
        }
        if let Some(column) = missing {
            if complete_case {
                dropped += 1;
                continue;
            }
            return Err(CliError::MissingValue {
                row,
                column: column.to_string(),
            });
        }
        let (yv, zv) = (row_values[0], row_values[1]);
        let raw = |c: usize| record.get(c).unwrap_or("").trim().to_string();
        if yv.fract() != 0.0 || yv < 1.0 || yv > levels as f64 {
            return Err(CliError::OutcomeRange {
                row,
                value: raw(y_col),
                levels,
            });
        }
        if zv != 0.0 && zv != 1.0 {
            return Err(CliError::TreatmentValue { row, value: raw(z_col) });
        }
        y.push(yv as i64);
        z.push(zv as i64);
        x.extend_from_slice(&row_values[2..]);
    }
    let dataset = DoorDataset::new(levels, &y, &z, map.covariates.clone(), x)?;
    Ok(Loaded { dataset, dropped })
}

/// Writes `ds` with the given outcome and treatment column names followed by
/// its covariates; floats use the shortest representation that reads back exactly.
pub fn write_csv<W: Write>(ds: &DoorDataset, outcome: &str, treatment: &str, writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![outcome.to_string(), treatment.to_string()];
    header.extend(ds.covariate_names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        record.clear();
        record.push(ds.outcome(i).to_string());
        record.push(ds.treatment(i).to_string());
        record.extend(ds.covariate_row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<csv writer>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn save_csv(ds: &DoorDataset, outcome: &str, treatment: &str, path: &Path) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(ds, outcome, treatment, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(covs: &[&str]) -> ColumnMap {
        ColumnMap {
            outcome: "y".into(),
            treatment: "z".into(),
            covariates: covs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn minimal_file() {
        let data = "y,z,age\n1,0,30\n2,1,41.5\n2,0,29\n1,1,50\n";
        let loaded = read_csv(data.as_bytes(), &map(&["age"]), 2, false).unwrap();
        assert_eq!(loaded.dataset.n(), 4);
        assert_eq!(loaded.dataset.levels(), 2);
        assert_eq!(loaded.dataset.covariate(1, 0), 41.5);
    }

    #[test]
    fn out_of_range_outcome_names_the_row() {
        let data = "y,z\n1,0\n5,1\n";
        let err = read_csv(data.as_bytes(), &map(&[]), 4, false).unwrap_err();
        assert!(matches!(err, CliError::OutcomeRange { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn single_arm_is_rejected() {
        let data = "y,z\n1,1\n2,1\n";
        let err = read_csv(data.as_bytes(), &map(&[]), 2, false).unwrap_err();
        assert!(err.to_string().contains("single-arm"), "{err}");
    }

    #[test]
    fn missing_values_fail_or_drop() {
        let data = "y,z,a\n1,0,1\n2,1,\n2,0,NA\n1,1,3\n";
        let err = read_csv(data.as_bytes(), &map(&["a"]), 2, false).unwrap_err();
        assert!(matches!(err, CliError::MissingValue { row: 2, .. }));
        let loaded = read_csv(data.as_bytes(), &map(&["a"]), 2, true).unwrap();
        assert_eq!(loaded.dropped, 2);
        assert_eq!(loaded.dataset.n(), 2);
    }

    #[test]
    fn garbage_is_not_missing() {
        let data = "y,z,a\n1,0,abc\n2,1,1\n";
        for cc in [false, true] {
            let err = read_csv(data.as_bytes(), &map(&["a"]), 2, cc).unwrap_err();
            assert!(matches!(err, CliError::NonNumeric { row: 1, .. }));
        }
    }

    #[test]
    fn unknown_column() {
        let err = read_csv("y,z\n1,0\n".as_bytes(), &map(&["b"]), 2, false).unwrap_err();
        assert!(matches!(err, CliError::MissingColumn(c) if c == "b"));
    }

    #[test]
    fn bad_treatment() {
        let err = read_csv("y,z\n1,0\n1,2\n".as_bytes(), &map(&[]), 2, false).unwrap_err();
        assert!(matches!(err, CliError::TreatmentValue { row: 2, .. }));
    }
}
