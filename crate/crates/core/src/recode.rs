//! Nominal recoding of the raw table and the three analysis projections.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ingest::{RawTable, Role};

/// Closed vocabulary of recoded cell values.
///
/// Declaration order is the value order used for tree branches and item
/// ordering: target labels, letters, then the scale bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    No,
    Yes,
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
    M,
    Zero,
    Low,
    Middle,
    High,
}

const LETTERS: [Token; 13] = [
    Token::A,
    Token::B,
    Token::C,
    Token::D,
    Token::E,
    Token::F,
    Token::G,
    Token::H,
    Token::I,
    Token::J,
    Token::K,
    Token::L,
    Token::M,
];

pub const TARGET_DOMAIN: &[Token] = &[Token::No, Token::Yes];
pub const INSTRUCTOR_DOMAIN: &[Token] = &[Token::A, Token::B, Token::C];
pub const COURSE_DOMAIN: &[Token] = &LETTERS;
pub const ATTENDANCE_DOMAIN: &[Token] = &[Token::Zero, Token::Low, Token::Middle, Token::High];
pub const SCALE_DOMAIN: &[Token] = &[Token::Low, Token::Middle, Token::High];

impl Token {
    pub fn as_str(self) -> &'static str {
        match self {
            Token::No => "No",
            Token::Yes => "Yes",
            Token::A => "A",
            Token::B => "B",
            Token::C => "C",
            Token::D => "D",
            Token::E => "E",
            Token::F => "F",
            Token::G => "G",
            Token::H => "H",
            Token::I => "I",
            Token::J => "J",
            Token::K => "K",
            Token::L => "L",
            Token::M => "M",
            Token::Zero => "zero",
            Token::Low => "Low",
            Token::Middle => "Middle",
            Token::High => "High",
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Name of the class column.
pub const TARGET: &str = "nb.repeat";

/// The three analyses run over the recoded table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisId {
    CourseInstructor,
    CourseFeatures,
    InstructorFeatures,
}

impl AnalysisId {
    pub const ALL: [AnalysisId; 3] = [
        AnalysisId::CourseInstructor,
        AnalysisId::CourseFeatures,
        AnalysisId::InstructorFeatures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisId::CourseInstructor => "course-instructor",
            AnalysisId::CourseFeatures => "course-features",
            AnalysisId::InstructorFeatures => "instructor-features",
        }
    }

    /// Column names kept by the projection, target last.
    pub fn columns(self) -> Vec<String> {
        let mut cols: Vec<String> = match self {
            AnalysisId::CourseInstructor => vec!["instr".into(), "class".into()],
            AnalysisId::CourseFeatures => ["attendance", "difficulty"]
                .into_iter()
                .map(String::from)
                .chain((1..=12).map(|q| format!("Q{q}")))
                .collect(),
            AnalysisId::InstructorFeatures => (13..=28).map(|q| format!("Q{q}")).collect(),
        };
        cols.push(TARGET.into());
        cols
    }
}

impl fmt::Display for AnalysisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnalysisId {
    type Err = RecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnalysisId::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| RecodeError::UnknownAnalysis(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecodeError {
    #[error("repeat count {0} is negative")]
    NegativeRepeat(i64),
    #[error("code {code} outside 1..={cardinality}")]
    CodeOutOfRange { code: i64, cardinality: u8 },
    #[error("letter cardinality {0} not in 1..=13")]
    BadCardinality(u8),
    #[error("scale value {value} not allowed (zero allowed: {zero_allowed})")]
    ScaleOutOfRange { value: i64, zero_allowed: bool },
    #[error("row {row}, column {column}: {source}")]
    Cell {
        row: usize,
        column: String,
        #[source]
        source: Box<RecodeError>,
    },
    #[error("unknown analysis `{0}` (expected course-instructor, course-features or instructor-features)")]
    UnknownAnalysis(String),
    #[error("column `{0}` not present in table")]
    MissingColumn(String),
    #[error("row {row}: token {token} not legal for column {column}")]
    IllegalToken {
        row: usize,
        column: String,
        token: Token,
    },
    #[error("row {row} has {found} cells, expected {expected}")]
    RowWidth {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("target column must have domain {{No, Yes}}")]
    BadTarget,
}

/// Yes when the course was taken two or more times.
pub fn recode_repeat_label(n: i64) -> Result<Token, RecodeError> {
    match n {
        n if n < 0 => Err(RecodeError::NegativeRepeat(n)),
        0 | 1 => Ok(Token::No),
        _ => Ok(Token::Yes),
    }
}

/// 1 -> A, 2 -> B, ... 13 -> M.
pub fn map_code_to_letter(code: i64, cardinality: u8) -> Result<Token, RecodeError> {
    if !(1..=13).contains(&cardinality) {
        return Err(RecodeError::BadCardinality(cardinality));
    }
    if code < 1 || code > i64::from(cardinality) {
        return Err(RecodeError::CodeOutOfRange { code, cardinality });
    }
    Ok(LETTERS[(code - 1) as usize])
}

/// 0 -> zero (attendance only), 1|2 -> Low, 3 -> Middle, 4|5 -> High.
pub fn recode_scale(value: i64, zero_allowed: bool) -> Result<Token, RecodeError> {
    match value {
        0 if zero_allowed => Ok(Token::Zero),
        1 | 2 => Ok(Token::Low),
        3 => Ok(Token::Middle),
        4 | 5 => Ok(Token::High),
        _ => Err(RecodeError::ScaleOutOfRange {
            value,
            zero_allowed,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub domain: &'static [Token],
}

impl Column {
    pub fn new(name: impl Into<String>, domain: &'static [Token]) -> Self {
        Column {
            name: name.into(),
            domain,
        }
    }

    /// Position of `token` within the column's domain.
    pub fn value_index(&self, token: Token) -> Option<usize> {
        self.domain.iter().position(|&t| t == token)
    }
}

fn domain_for(role: Role) -> &'static [Token] {
    match role {
        Role::InstructorId => INSTRUCTOR_DOMAIN,
        Role::CourseCode => COURSE_DOMAIN,
        Role::RepeatCount => TARGET_DOMAIN,
        Role::Attendance => ATTENDANCE_DOMAIN,
        Role::Difficulty | Role::CourseQuestion | Role::InstructorQuestion => SCALE_DOMAIN,
    }
}

fn recode_cell(role: Role, value: i64) -> Result<Token, RecodeError> {
    match role {
        Role::InstructorId => map_code_to_letter(value, 3),
        Role::CourseCode => map_code_to_letter(value, 13),
        Role::RepeatCount => recode_repeat_label(value),
        Role::Attendance => recode_scale(value, true),
        Role::Difficulty | Role::CourseQuestion | Role::InstructorQuestion => {
            recode_scale(value, false)
        }
    }
}

/// All-nominal table with a designated `nb.repeat` target column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecodedTable {
    columns: Vec<Column>,
    cells: Vec<Token>,
    target: usize,
    analysis: Option<AnalysisId>,
}

impl RecodedTable {
    /// Builds a table from explicit columns and rows. Every token must be
    /// in its column's domain and the target column must be `nb.repeat`
    /// with domain {No, Yes}.
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Token>>) -> Result<Self, RecodeError> {
        let target = columns
            .iter()
            .position(|c| c.name == TARGET)
            .ok_or_else(|| RecodeError::MissingColumn(TARGET.into()))?;
        if columns[target].domain != TARGET_DOMAIN {
            return Err(RecodeError::BadTarget);
        }
        let width = columns.len();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(RecodeError::RowWidth {
                    row: r + 1,
                    found: row.len(),
                    expected: width,
                });
            }
            for (col, &token) in columns.iter().zip(&row) {
                if col.value_index(token).is_none() {
                    return Err(RecodeError::IllegalToken {
                        row: r + 1,
                        column: col.name.clone(),
                        token,
                    });
                }
            }
            cells.extend(row);
        }
        Ok(RecodedTable {
            columns,
            cells,
            target,
            analysis: None,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.cells.len().checked_div(self.width()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn row(&self, index: usize) -> &[Token] {
        let w = self.width();
        &self.cells[index * w..(index + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Token]> + '_ {
        self.cells.chunks_exact(self.width().max(1))
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self, row: usize) -> Token {
        self.cells[row * self.width() + self.target]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Which projection produced this table, if any.
    pub fn analysis(&self) -> Option<AnalysisId> {
        self.analysis
    }

    /// Number of (No, Yes) target labels.
    pub fn target_distribution(&self) -> (usize, usize) {
        let yes = (0..self.len())
            .filter(|&r| self.target(r) == Token::Yes)
            .count();
        (self.len() - yes, yes)
    }

    /// Writes the table as CSV: header of column names, tokens as cells.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in self.rows() {
            writer.write_record(row.iter().map(|t| t.as_str()))?;
        }
        writer.flush()
    }
}

/// Recodes every column of `raw` by its role, preserving row order.
pub fn recode_table(raw: &RawTable) -> Result<RecodedTable, RecodeError> {
    let schema = raw.schema();
    let columns: Vec<Column> = schema
        .iter()
        .map(|s| Column::new(s.name.clone(), domain_for(s.role)))
        .collect();
    let target = columns
        .iter()
        .position(|c| c.name == TARGET)
        .ok_or_else(|| RecodeError::MissingColumn(TARGET.into()))?;
    let mut cells = Vec::with_capacity(raw.len() * columns.len());
    for (r, row) in raw.rows().iter().enumerate() {
        for (spec, &value) in schema.iter().zip(row) {
            let token = recode_cell(spec.role, value).map_err(|e| RecodeError::Cell {
                row: r + 1,
                column: spec.name.clone(),
                source: Box::new(e),
            })?;
            cells.push(token);
        }
    }
    Ok(RecodedTable {
        columns,
        cells,
        target,
        analysis: None,
    })
}

/// Keeps only the columns of `which`, in its stated order, with the target
/// column last.
pub fn project_analysis(
    table: &RecodedTable,
    which: AnalysisId,
) -> Result<RecodedTable, RecodeError> {
    let picks = which
        .columns()
        .into_iter()
        .map(|name| {
            table
                .column_index(&name)
                .ok_or(RecodeError::MissingColumn(name))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let columns: Vec<Column> = picks.iter().map(|&i| table.columns[i].clone()).collect();
    let mut cells = Vec::with_capacity(table.len() * picks.len());
    for row in table.rows() {
        cells.extend(picks.iter().map(|&i| row[i]));
    }
    Ok(RecodedTable {
        target: columns.len() - 1,
        columns,
        cells,
        analysis: Some(which),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::WIDTH;
    use proptest::prelude::*;

    #[test]
    fn repeat_label() {
        assert_eq!(recode_repeat_label(0), Ok(Token::No));
        assert_eq!(recode_repeat_label(1), Ok(Token::No));
        assert_eq!(recode_repeat_label(2), Ok(Token::Yes));
        assert_eq!(recode_repeat_label(3), Ok(Token::Yes));
        assert_eq!(recode_repeat_label(-1), Err(RecodeError::NegativeRepeat(-1)));
    }

    #[test]
    fn letters() {
        assert_eq!(map_code_to_letter(1, 3), Ok(Token::A));
        assert_eq!(map_code_to_letter(3, 3), Ok(Token::C));
        assert_eq!(map_code_to_letter(13, 13), Ok(Token::M));
        assert!(matches!(
            map_code_to_letter(14, 13),
            Err(RecodeError::CodeOutOfRange { .. })
        ));
        assert!(map_code_to_letter(4, 3).is_err());
        assert!(map_code_to_letter(0, 13).is_err());
        assert!(matches!(
            map_code_to_letter(1, 14),
            Err(RecodeError::BadCardinality(14))
        ));
    }

    #[test]
    fn scale_bins() {
        assert_eq!(recode_scale(2, false), Ok(Token::Low));
        assert_eq!(recode_scale(1, false), Ok(Token::Low));
        assert_eq!(recode_scale(3, false), Ok(Token::Middle));
        assert_eq!(recode_scale(4, false), Ok(Token::High));
        assert_eq!(recode_scale(5, true), Ok(Token::High));
        assert_eq!(recode_scale(0, true), Ok(Token::Zero));
        assert!(recode_scale(0, false).is_err());
        assert!(recode_scale(6, true).is_err());
        assert!(recode_scale(-1, true).is_err());
    }

    fn raw_row() -> [i64; WIDTH] {
        let mut row = [3; WIDTH];
        row[0] = 3;
        row[1] = 5;
        row[2] = 1;
        row[3] = 0;
        row[4] = 4;
        row
    }

    #[test]
    fn composed_row() {
        let raw = RawTable::from_rows(vec![raw_row()]).unwrap();
        let t = recode_table(&raw).unwrap();
        let mut expected = vec![Token::C, Token::E, Token::No, Token::Zero, Token::High];
        expected.extend(std::iter::repeat_n(Token::Middle, 28));
        assert_eq!(t.row(0), expected.as_slice());
        assert_eq!(t.target(0), Token::No);
        assert_eq!(t.len(), 1);
        assert_eq!(t.width(), WIDTH);
    }

    #[test]
    fn projections() {
        let mut yes = raw_row();
        yes[2] = 2;
        let raw = RawTable::from_rows(vec![raw_row(), yes]).unwrap();
        let t = recode_table(&raw).unwrap();
        let ci = project_analysis(&t, AnalysisId::CourseInstructor).unwrap();
        assert_eq!(ci.width(), 3);
        assert_eq!(ci.row(0), &[Token::C, Token::E, Token::No]);
        let cf = project_analysis(&t, AnalysisId::CourseFeatures).unwrap();
        assert_eq!(cf.width(), 15);
        assert_eq!(cf.columns()[0].name, "attendance");
        assert_eq!(cf.columns()[13].name, "Q12");
        let inf = project_analysis(&t, AnalysisId::InstructorFeatures).unwrap();
        assert_eq!(inf.width(), 17);
        assert!(inf.column_index("Q14").is_some());
        assert!(inf.column_index("Q12").is_none());
        for p in [&ci, &cf, &inf] {
            assert_eq!(p.len(), 2);
            assert_eq!(p.target(1), Token::Yes);
            assert_eq!(p.columns()[p.target_index()].name, TARGET);
        }
        assert_eq!(inf.analysis(), Some(AnalysisId::InstructorFeatures));
        // projecting a projection that lacks the columns fails
        assert!(matches!(
            project_analysis(&ci, AnalysisId::CourseFeatures),
            Err(RecodeError::MissingColumn(_))
        ));
    }

    #[test]
    fn analysis_ids_parse() {
        for a in AnalysisId::ALL {
            assert_eq!(a.as_str().parse::<AnalysisId>(), Ok(a));
        }
        assert!(matches!(
            "course".parse::<AnalysisId>(),
            Err(RecodeError::UnknownAnalysis(_))
        ));
    }

    #[test]
    fn explicit_table_checks_tokens() {
        let cols = vec![Column::new("X", &[Token::A, Token::B]), Column::new(TARGET, TARGET_DOMAIN)];
        assert!(RecodedTable::new(cols.clone(), vec![vec![Token::A, Token::No]]).is_ok());
        assert!(matches!(
            RecodedTable::new(cols.clone(), vec![vec![Token::C, Token::No]]),
            Err(RecodeError::IllegalToken { row: 1, .. })
        ));
        assert!(matches!(
            RecodedTable::new(cols, vec![vec![Token::A]]),
            Err(RecodeError::RowWidth { .. })
        ));
        let no_target = vec![Column::new("X", &[Token::A])];
        assert!(RecodedTable::new(no_target, vec![]).is_err());
    }

    #[test]
    fn csv_output() {
        let raw = RawTable::from_rows(vec![raw_row()]).unwrap();
        let t = project_analysis(&recode_table(&raw).unwrap(), AnalysisId::CourseInstructor).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "instr,class,nb.repeat\nC,E,No\n");
    }

    proptest! {
        #[test]
        fn scale_is_monotone(a in 0i64..=5, b in 0i64..=5) {
            let (lo, hi) = (a.min(b), a.max(b));
            let zero_allowed = lo == 0;
            prop_assert!(recode_scale(lo, zero_allowed).unwrap() <= recode_scale(hi, zero_allowed).unwrap());
        }

        #[test]
        fn projection_keeps_target(repeats in proptest::collection::vec(0i64..6, 1..40)) {
            let rows: Vec<[i64; WIDTH]> = repeats.iter().map(|&n| {
                let mut row = raw_row();
                row[2] = n;
                row
            }).collect();
            let raw = RawTable::from_rows(rows).unwrap();
            let t = recode_table(&raw).unwrap();
            for a in AnalysisId::ALL {
                let p = project_analysis(&t, a).unwrap();
                prop_assert_eq!(p.len(), raw.len());
                for (r, &n) in repeats.iter().enumerate() {
                    prop_assert_eq!(p.target(r), recode_repeat_label(n).unwrap());
                }
            }
        }
    }
}
