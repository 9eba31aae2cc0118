//! Long-format CSV ingestion and result files.

mod emit;
mod svg;

use std::collections::BTreeMap;
use std::path::Path;

use crate::distributions::{MicroPanel, Period, UnitId};
use crate::error::{DiscoError, Result};

pub use emit::{emit_results, EmitOptions, FileEntry, PanelDigest, RunManifest, RunOutputs};

/// Column names to pick out of a long-format CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Columns {
    pub id: String,
    pub time: String,
    pub outcome: String,
    pub name: Option<String>,
}

impl Columns {
    pub fn new(id: &str, time: &str, outcome: &str) -> Self {
        Self {
            id: id.into(),
            time: time.into(),
            outcome: outcome.into(),
            name: None,
        }
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = Some(name.into());
        self
    }
}

/// A panel read from disk together with optional display names.
#[derive(Debug, Clone)]
pub struct PanelInput {
    pub panel: MicroPanel,
    /// First name seen for each unit id.
    pub names: BTreeMap<UnitId, String>,
    /// Accepted data rows.
    pub rows: usize,
}

fn csv_error(line: u64, message: impl Into<String>) -> DiscoError {
    DiscoError::Csv {
        line,
        message: message.into(),
    }
}

fn from_csv(err: csv::Error) -> DiscoError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => DiscoError::Io(e),
        other => csv_error(line, format!("{other:?}")),
    }
}

/// Reads `id, time, outcome[, name]` columns from a headed CSV file.
///
/// Errors carry the 1-based line number of the offending row.
pub fn read_panel_csv(path: impl AsRef<Path>, columns: &Columns) -> Result<PanelInput> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(from_csv)?;
    let headers = reader.headers().map_err(from_csv)?.clone();
    let mut seen = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if seen.insert(h, i).is_some() {
            return Err(csv_error(1, format!("duplicate column {h:?} in header")));
        }
    }
    let find = |name: &str| {
        seen.get(name)
            .copied()
            .ok_or_else(|| csv_error(1, format!("column {name:?} not found in header")))
    };
    let id_idx = find(&columns.id)?;
    let time_idx = find(&columns.time)?;
    let y_idx = find(&columns.outcome)?;
    let name_idx = columns.name.as_deref().map(find).transpose()?;

    let mut cells: BTreeMap<(UnitId, Period), Vec<f64>> = BTreeMap::new();
    let mut names = BTreeMap::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(from_csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, col: &str| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| csv_error(line, format!("missing value for {col:?}")))
        };
        let int = |idx: usize, col: &str| -> Result<i64> {
            let raw = field(idx, col)?;
            raw.parse()
                .map_err(|_| csv_error(line, format!("{col:?} value {raw:?} is not an integer")))
        };
        let unit = int(id_idx, &columns.id)?;
        let period = int(time_idx, &columns.time)?;
        let raw = field(y_idx, &columns.outcome)?;
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| csv_error(line, format!("{:?} value {raw:?} is not a finite number", columns.outcome)))?;
        if let Some(idx) = name_idx {
            let name = field(idx, columns.name.as_deref().unwrap_or_default())?;
            names.entry(unit).or_insert_with(|| name.to_string());
        }
        cells.entry((unit, period)).or_default().push(value);
        rows += 1;
    }
    if rows == 0 {
        return Err(DiscoError::EmptyInput);
    }
    Ok(PanelInput {
        panel: MicroPanel::from_cells(cells),
        names,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn columns() -> Columns {
        Columns::new("id_col", "time_col", "y_col").with_name("company_name")
    }

    #[test]
    fn reads_the_listing() {
        let f = write(
            "time_col,id_col,company_name,y_col\n\
             2,17,oracle,1682.25\n\
             3,1,deloitte,375.783\n\
             2,72,3m,5276.48\n\
             3,2,microsoft,957.55\n\
             2,2,microsoft,2745.96\n",
        );
        let input = read_panel_csv(f.path(), &columns()).unwrap();
        assert_eq!(input.panel.units(), &[1, 2, 17, 72]);
        assert_eq!(input.panel.periods(), &[2, 3]);
        assert_eq!(input.rows, 5);
        assert_eq!(input.panel.cell(17, 2), Some(&[1682.25][..]));
        assert_eq!(input.names[&2], "microsoft");
    }

    #[test]
    fn header_only_is_empty_input() {
        let f = write("time_col,id_col,company_name,y_col\n");
        let err = read_panel_csv(f.path(), &columns()).unwrap_err();
        assert_eq!(err.to_string(), "empty input");
    }

    #[test]
    fn missing_value_names_the_line() {
        let f = write("time_col,id_col,company_name,y_col\n2,17,oracle,1\n2,18,sap,NA\n");
        let err = read_panel_csv(f.path(), &columns()).unwrap_err();
        assert!(matches!(err, DiscoError::Csv { line: 3, .. }), "{err}");
        let f = write("time_col,id_col,y_col\n2,17,NaN\n");
        let err = read_panel_csv(f.path(), &Columns::new("id_col", "time_col", "y_col")).unwrap_err();
        assert!(matches!(err, DiscoError::Csv { line: 2, .. }), "{err}");
        let f = write("time_col,id_col,y_col\n2.5,17,1\n");
        let err = read_panel_csv(f.path(), &Columns::new("id_col", "time_col", "y_col")).unwrap_err();
        assert!(matches!(err, DiscoError::Csv { line: 2, .. }), "{err}");
    }

    #[test]
    fn header_problems() {
        let f = write("time_col,id_col,y_col,y_col\n2,17,1,2\n");
        let err = read_panel_csv(f.path(), &Columns::new("id_col", "time_col", "y_col")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let f = write("time_col,id_col,value\n2,17,1\n");
        assert!(read_panel_csv(f.path(), &Columns::new("id_col", "time_col", "y_col")).is_err());
        assert!(matches!(
            read_panel_csv("/nonexistent/panel.csv", &columns()),
            Err(DiscoError::Io(_))
        ));
    }
}
