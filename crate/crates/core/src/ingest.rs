//! Loading and range-checking the raw evaluation table.
//!
//! The file is a plain comma-separated table of integers with a header row
//! naming 33 columns. Columns may appear in any order in the file; rows are
//! always stored in canonical column order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Number of columns in the evaluation table.
pub const WIDTH: usize = 33;

/// Canonical column index of the repeat count.
pub const REPEAT_COLUMN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    InstructorId,
    CourseCode,
    RepeatCount,
    Attendance,
    Difficulty,
    CourseQuestion,
    InstructorQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    pub min: i64,
    /// `None` means unbounded above.
    pub max: Option<i64>,
}

impl ColumnSpec {
    fn new(name: impl Into<String>, role: Role, min: i64, max: Option<i64>) -> Self {
        ColumnSpec {
            name: name.into(),
            role,
            min,
            max,
        }
    }

    pub fn admits(&self, value: i64) -> bool {
        value >= self.min && self.max.is_none_or(|max| value <= max)
    }
}

impl fmt::Display for ColumnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max {
            Some(max) => write!(f, "{} in {}..={}", self.name, self.min, max),
            None => write!(f, "{} >= {}", self.name, self.min),
        }
    }
}

/// The 33 column specs in canonical order.
pub fn schema() -> Vec<ColumnSpec> {
    let mut specs = vec![
        ColumnSpec::new("instr", Role::InstructorId, 1, Some(3)),
        ColumnSpec::new("class", Role::CourseCode, 1, Some(13)),
        ColumnSpec::new("nb.repeat", Role::RepeatCount, 0, None),
        ColumnSpec::new("attendance", Role::Attendance, 0, Some(4)),
        ColumnSpec::new("difficulty", Role::Difficulty, 1, Some(5)),
    ];
    for q in 1..=28 {
        let role = if q <= 12 {
            Role::CourseQuestion
        } else {
            Role::InstructorQuestion
        };
        specs.push(ColumnSpec::new(format!("Q{q}"), role, 1, Some(5)));
    }
    specs
}

fn normalize(name: &str) -> String {
    name.trim().to_lowercase()
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header names {found} columns, expected {WIDTH}")]
    HeaderWidth { found: usize },
    #[error("unknown column `{0}` in header")]
    UnknownColumn(String),
    #[error("column `{0}` appears twice in header")]
    DuplicateColumn(String),
    #[error("row {row}: {found} cells, expected {WIDTH}")]
    RowWidth { row: usize, found: usize },
    #[error("row {row}, column {column}: `{value}` is not an integer")]
    NotInteger {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: value {value} outside allowed range ({spec})")]
    OutOfRange {
        row: usize,
        column: String,
        value: i64,
        spec: String,
    },
}

/// Validated integer table. Rows are numbered from 1 in error messages,
/// counting data rows only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    schema: Vec<ColumnSpec>,
    rows: Vec<[i64; WIDTH]>,
}

impl RawTable {
    /// Builds a table from rows already in canonical column order,
    /// checking every cell against its range.
    pub fn from_rows(rows: Vec<[i64; WIDTH]>) -> Result<Self, IngestError> {
        let schema = schema();
        for (r, row) in rows.iter().enumerate() {
            for (spec, &value) in schema.iter().zip(row) {
                if !spec.admits(value) {
                    return Err(IngestError::OutOfRange {
                        row: r + 1,
                        column: spec.name.clone(),
                        value,
                        spec: spec.to_string(),
                    });
                }
            }
        }
        Ok(RawTable { schema, rows })
    }

    pub fn schema(&self) -> &[ColumnSpec] {
        &self.schema
    }

    pub fn rows(&self) -> &[[i64; WIDTH]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let wanted = normalize(name);
        self.schema.iter().position(|s| normalize(&s.name) == wanted)
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = i64> + '_ {
        self.rows.iter().map(move |row| row[index])
    }
}

/// Reads and parses the evaluation CSV at `path`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawTable, IngestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&bytes)
}

/// Parses CSV bytes (LF or CRLF line endings) into a [`RawTable`].
pub fn parse_csv(bytes: &[u8]) -> Result<RawTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let canonical = schema();
    let header = reader.headers()?.clone();
    if header.len() != WIDTH {
        return Err(IngestError::HeaderWidth {
            found: header.len(),
        });
    }
    // file position -> canonical position
    let mut placement = [usize::MAX; WIDTH];
    let mut seen = [false; WIDTH];
    for (file_pos, name) in header.iter().enumerate() {
        let wanted = normalize(name);
        let canon = canonical
            .iter()
            .position(|s| normalize(&s.name) == wanted)
            .ok_or_else(|| IngestError::UnknownColumn(name.trim().to_string()))?;
        if seen[canon] {
            return Err(IngestError::DuplicateColumn(name.trim().to_string()));
        }
        seen[canon] = true;
        placement[file_pos] = canon;
    }

    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        if record.len() != WIDTH {
            return Err(IngestError::RowWidth {
                row: row_no,
                found: record.len(),
            });
        }
        let mut row = [0i64; WIDTH];
        for (file_pos, cell) in record.iter().enumerate() {
            let canon = placement[file_pos];
            let spec = &canonical[canon];
            let value: i64 = cell.parse().map_err(|_| IngestError::NotInteger {
                row: row_no,
                column: spec.name.clone(),
                value: cell.to_string(),
            })?;
            if !spec.admits(value) {
                return Err(IngestError::OutOfRange {
                    row: row_no,
                    column: spec.name.clone(),
                    value,
                    spec: spec.to_string(),
                });
            }
            row[canon] = value;
        }
        rows.push(row);
    }
    Ok(RawTable {
        schema: canonical,
        rows,
    })
}

/// Row count and SHA-256 of the source bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fingerprint {
    pub rows: usize,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(bytes: &[u8], table: &RawTable) -> Self {
        Fingerprint {
            rows: table.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub role: Role,
    pub count: usize,
    pub min: Option<i64>,
    pub max: Option<i64>,
    /// Value -> number of rows holding it.
    pub values: BTreeMap<i64, usize>,
    pub within_range: bool,
}

impl ColumnSummary {
    pub fn distinct(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationSummary {
    pub rows: usize,
    pub columns: Vec<ColumnSummary>,
}

impl ValidationSummary {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        let wanted = normalize(name);
        self.columns.iter().find(|c| normalize(&c.name) == wanted)
    }

    /// Columns whose observed values leave the allowed range.
    pub fn violations(&self) -> impl Iterator<Item = &ColumnSummary> {
        self.columns.iter().filter(|c| !c.within_range)
    }

    pub fn is_clean(&self) -> bool {
        self.violations().next().is_none()
    }
}

/// Per-column observed statistics. Never fails; range violations are
/// reported through [`ColumnSummary::within_range`].
pub fn validate_schema(table: &RawTable) -> ValidationSummary {
    let columns = table
        .schema
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut values = BTreeMap::new();
            for v in table.column(i) {
                *values.entry(v).or_insert(0usize) += 1;
            }
            let within_range = values.keys().all(|&v| spec.admits(v));
            ColumnSummary {
                name: spec.name.clone(),
                role: spec.role,
                count: table.len(),
                min: values.keys().next().copied(),
                max: values.keys().next_back().copied(),
                values,
                within_range,
            }
        })
        .collect();
    ValidationSummary {
        rows: table.len(),
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        schema()
            .iter()
            .map(|s| s.name.clone())
            .collect::<Vec<_>>()
            .join(",")
    }

    fn line(values: &[i64; WIDTH]) -> String {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    fn ones() -> [i64; WIDTH] {
        [1; WIDTH]
    }

    #[test]
    fn schema_is_canonical() {
        let s = schema();
        assert_eq!(s.len(), WIDTH);
        assert_eq!(s[0].name, "instr");
        assert_eq!(s[REPEAT_COLUMN].name, "nb.repeat");
        assert_eq!(s[5].name, "Q1");
        assert_eq!(s[32].name, "Q28");
        assert_eq!(s[16].role, Role::CourseQuestion);
        assert_eq!(s[17].role, Role::InstructorQuestion);
        assert!(s[REPEAT_COLUMN].admits(17));
        assert!(!s[3].admits(5));
        assert!(s[3].admits(0));
        assert!(!s[4].admits(0));
    }

    #[test]
    fn parses_rows_in_order() {
        let mut second = ones();
        second[0] = 3;
        second[1] = 13;
        second[2] = 3;
        let text = format!("{}\n{}\n{}\n", header(), line(&ones()), line(&second));
        let table = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.rows()[1], second);
    }

    #[test]
    fn accepts_crlf_and_reordered_uppercase_header() {
        let mut names: Vec<String> = schema().iter().map(|s| s.name.to_uppercase()).collect();
        names.swap(0, 4);
        let mut row = ones();
        row[4] = 5; // difficulty, written first in the file
        let mut file_row = row;
        file_row.swap(0, 4);
        let text = format!("{}\r\n{}\r\n", names.join(" , "), line(&file_row));
        let table = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(table.rows()[0], row);
    }

    #[test]
    fn header_with_32_names_is_rejected() {
        let names: Vec<String> = schema().iter().take(32).map(|s| s.name.clone()).collect();
        let text = format!("{}\n", names.join(","));
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(IngestError::HeaderWidth { found: 32 })
        ));
    }

    #[test]
    fn unknown_and_duplicate_header_names() {
        let mut names: Vec<String> = schema().iter().map(|s| s.name.clone()).collect();
        names[7] = "Q99".into();
        let text = format!("{}\n", names.join(","));
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(IngestError::UnknownColumn(n)) if n == "Q99"
        ));
        names[7] = "Q1".into();
        let text = format!("{}\n", names.join(","));
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(IngestError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn out_of_range_cites_row() {
        let mut text = header();
        for r in 1..=8 {
            let mut row = ones();
            if r == 7 {
                row[4] = 9;
            }
            text.push('\n');
            text.push_str(&line(&row));
        }
        match parse_csv(text.as_bytes()) {
            Err(IngestError::OutOfRange {
                row, column, value, ..
            }) => {
                assert_eq!((row, column.as_str(), value), (7, "difficulty", 9));
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn non_integer_and_short_rows() {
        let text = format!("{}\n{}\n1,2\n", header(), line(&ones()));
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(IngestError::RowWidth { row: 2, found: 2 })
        ));
        let bad = line(&ones()).replacen("1", "x", 1);
        let text = format!("{}\n{}\n", header(), bad);
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(IngestError::NotInteger { row: 1, ref column, .. }) if column == "instr"
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/data.csv"),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn negative_repeat_rejected_large_repeat_accepted() {
        let mut row = ones();
        row[REPEAT_COLUMN] = 9;
        assert!(RawTable::from_rows(vec![row]).is_ok());
        row[REPEAT_COLUMN] = -1;
        assert!(RawTable::from_rows(vec![row]).is_err());
    }

    #[test]
    fn single_row_summary_is_constant() {
        let table = RawTable::from_rows(vec![ones()]).unwrap();
        let summary = validate_schema(&table);
        assert_eq!(summary.columns.len(), WIDTH);
        for c in &summary.columns {
            assert_eq!((c.min, c.max, c.distinct()), (Some(1), Some(1), 1));
        }
        assert!(summary.is_clean());
    }

    #[test]
    fn summary_counts_values() {
        let mut a = ones();
        a[REPEAT_COLUMN] = 3;
        let table = RawTable::from_rows(vec![a, ones(), ones()]).unwrap();
        let c = validate_schema(&table);
        let repeat = c.column("NB.REPEAT").unwrap();
        assert_eq!(repeat.values, BTreeMap::from([(1, 2), (3, 1)]));
        assert_eq!(repeat.max, Some(3));
    }

    #[test]
    fn fingerprint_hashes_bytes() {
        let table = RawTable::from_rows(vec![]).unwrap();
        let fp = Fingerprint::of(b"abc", &table);
        assert_eq!(
            fp.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
