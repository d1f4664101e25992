//! Numeric CSV ingestion for external data and moment files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

/// Reads a headerless numeric table; rows become matrix rows.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|_| {
                    CliError::Config(format!("{}: row {}, column {}: not a number: {field:?}", path.display(), r + 1, c + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(CliError::Config(format!("{}: empty table", path.display())));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("{}: ragged table", path.display())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Config(format!("{}: non-finite entry", path.display())));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

/// Reads a vector stored as a single row or a single column.
pub fn read_vector(path: &Path) -> Result<DVector<f64>, CliError> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(DVector::from_iterator(m.len(), m.iter().cloned()))
    } else {
        Err(CliError::Config(format!("{}: expected a single row or column", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_tables() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::File::create(&path).unwrap().write_all(b"1, 2, 3\n4,5,6\n").unwrap();
        let m = read_matrix(&path).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert!(read_vector(&path).is_err());
        std::fs::write(&path, "1\n2\n").unwrap();
        assert_eq!(read_vector(&path).unwrap().len(), 2);
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(matches!(read_matrix(&path), Err(CliError::Config(_))));
        assert!(matches!(read_matrix(&dir.path().join("missing.csv")), Err(CliError::Io { .. })));
    }
}
