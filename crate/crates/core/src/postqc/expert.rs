//! Expert Likert ratings per DSM criterion.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::LoadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    A1,
    A2,
    A3,
    B1,
    B2,
    B3,
    B4,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::A1,
        Criterion::A2,
        Criterion::A3,
        Criterion::B1,
        Criterion::B2,
        Criterion::B3,
        Criterion::B4,
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The four Likert columns in table order.
pub const LIKERT_COLUMNS: [&str; 4] = ["Typical", "Normal", "Not Typical", "EHR Match"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRecord {
    pub response_id: String,
    pub criterion: Criterion,
    pub intelligible: bool,
    pub exact_match: bool,
    pub typical: Option<u8>,
    pub normal: Option<u8>,
    pub not_typical: Option<u8>,
    pub ehr_match: Option<u8>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExpertError {
    #[error("{response_id}: {column} rating {value} is outside 1..=5")]
    LikertRange {
        response_id: String,
        column: &'static str,
        value: u8,
    },
    #[error("{response_id}: exact match on an unintelligible response")]
    ExactWithoutIntelligible { response_id: String },
    #[error("{response_id}: unintelligible response carries Likert ratings")]
    RatedUnintelligible { response_id: String },
}

impl ExpertRecord {
    pub fn likert(&self) -> [Option<u8>; 4] {
        [self.typical, self.normal, self.not_typical, self.ehr_match]
    }

    pub fn check(&self) -> Result<(), ExpertError> {
        for (column, value) in LIKERT_COLUMNS.iter().zip(self.likert()) {
            if let Some(v) = value {
                if !(1..=5).contains(&v) {
                    return Err(ExpertError::LikertRange {
                        response_id: self.response_id.clone(),
                        column,
                        value: v,
                    });
                }
            }
        }
        if !self.intelligible {
            if self.exact_match {
                return Err(ExpertError::ExactWithoutIntelligible {
                    response_id: self.response_id.clone(),
                });
            }
            if self.likert().iter().any(Option::is_some) {
                return Err(ExpertError::RatedUnintelligible {
                    response_id: self.response_id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct ExpertRow {
    response_id: String,
    criterion: Criterion,
    intelligible: u8,
    exact_match: u8,
    typical: Option<u8>,
    normal: Option<u8>,
    not_typical: Option<u8>,
    ehr_match: Option<u8>,
}

fn flag(value: u8, name: &str) -> Result<bool, String> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(format!("{name} must be 0 or 1, got {v}")),
    }
}

/// Reads the expert CSV. Flags are 0/1; Likert cells may be blank.
pub fn load_expert(path: &Path) -> Result<Vec<ExpertRecord>, LoadError> {
    let origin = path.display().to_string();
    let content = crate::io::read_to_string(path)?;
    parse_expert(&content, &origin)
}

pub fn parse_expert(content: &str, origin: &str) -> Result<Vec<ExpertRecord>, LoadError> {
    let parse_err = |line: usize, message: String| LoadError::Parse {
        path: origin.to_owned(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let mut out = Vec::new();
    for raw in reader.records() {
        let raw = raw.map_err(|e| {
            parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string())
        })?;
        let line = raw.position().map_or(0, |p| p.line() as usize);
        let row: ExpertRow = raw
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let record = ExpertRecord {
            intelligible: flag(row.intelligible, "intelligible").map_err(|m| parse_err(line, m))?,
            exact_match: flag(row.exact_match, "exact_match").map_err(|m| parse_err(line, m))?,
            response_id: row.response_id,
            criterion: row.criterion,
            typical: row.typical,
            normal: row.normal,
            not_typical: row.not_typical,
            ehr_match: row.ehr_match,
        };
        record.check().map_err(|e| parse_err(line, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub criterion: Criterion,
    pub counts: usize,
    pub unintelligible: usize,
    pub intelligible: usize,
    pub exact_match: usize,
    /// Means over intelligible records that carry a value, in column order.
    pub means: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSummary {
    pub rows: Vec<CriterionRow>,
    pub total_counts: usize,
    pub total_unintelligible: usize,
    pub total_intelligible: usize,
    pub total_exact_match: usize,
    /// Mean of the per-criterion means for each Likert column.
    pub averages: [Option<f64>; 4],
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn aggregate_expert(records: &[ExpertRecord]) -> Result<ExpertSummary, ExpertError> {
    let mut by_criterion: BTreeMap<Criterion, Vec<&ExpertRecord>> = BTreeMap::new();
    for r in records {
        r.check()?;
        by_criterion.entry(r.criterion).or_default().push(r);
    }

    let rows: Vec<CriterionRow> = by_criterion
        .into_iter()
        .map(|(criterion, rs)| {
            let intelligible: Vec<&&ExpertRecord> = rs.iter().filter(|r| r.intelligible).collect();
            let mut means = [None; 4];
            for (col, slot) in means.iter_mut().enumerate() {
                *slot = mean(
                    intelligible
                        .iter()
                        .filter_map(|r| r.likert()[col])
                        .map(f64::from),
                );
            }
            CriterionRow {
                criterion,
                counts: rs.len(),
                unintelligible: rs.len() - intelligible.len(),
                intelligible: intelligible.len(),
                exact_match: rs.iter().filter(|r| r.exact_match).count(),
                means,
            }
        })
        .collect();

    let mut averages = [None; 4];
    for (col, slot) in averages.iter_mut().enumerate() {
        *slot = mean(rows.iter().filter_map(|r| r.means[col]));
    }
    Ok(ExpertSummary {
        total_counts: rows.iter().map(|r| r.counts).sum(),
        total_unintelligible: rows.iter().map(|r| r.unintelligible).sum(),
        total_intelligible: rows.iter().map(|r| r.intelligible).sum(),
        total_exact_match: rows.iter().map(|r| r.exact_match).sum(),
        rows,
        averages,
    })
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "NA".to_owned(), |v| format!("{v:.2}"))
}

const HEADER: [&str; 9] = [
    "DSM Criterion",
    "Counts",
    "Unintelligible",
    "Intelligible",
    "Exact Match",
    "Typical",
    "Normal",
    "Not Typical",
    "EHR Match",
];

impl ExpertSummary {
    fn table(&self) -> Vec<Vec<String>> {
        let mut out = vec![HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        for r in &self.rows {
            let mut row = vec![
                r.criterion.to_string(),
                r.counts.to_string(),
                r.unintelligible.to_string(),
                r.intelligible.to_string(),
                r.exact_match.to_string(),
            ];
            row.extend(r.means.iter().map(|m| cell(*m)));
            out.push(row);
        }
        let mut total = vec![
            "Total".to_owned(),
            self.total_counts.to_string(),
            self.total_unintelligible.to_string(),
            self.total_intelligible.to_string(),
            self.total_exact_match.to_string(),
        ];
        total.extend(std::iter::repeat_n("NA".to_owned(), 4));
        out.push(total);
        let mut average: Vec<String> = std::iter::once("Average".to_owned())
            .chain(std::iter::repeat_n("NA".to_owned(), 4))
            .collect();
        average.extend(self.averages.iter().map(|m| cell(*m)));
        out.push(average);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.table() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_text(&self) -> String {
        super::render_table(&self.table())
    }
}

impl fmt::Display for ExpertSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, c: Criterion, likert: [Option<u8>; 4]) -> ExpertRecord {
        ExpertRecord {
            response_id: id.into(),
            criterion: c,
            intelligible: true,
            exact_match: false,
            typical: likert[0],
            normal: likert[1],
            not_typical: likert[2],
            ehr_match: likert[3],
        }
    }

    #[test]
    fn single_all_fives() {
        let s = aggregate_expert(&[rec("x", Criterion::B2, [Some(5); 4])]).unwrap();
        assert_eq!(s.rows[0].means, [Some(5.0); 4]);
        assert_eq!(s.averages, [Some(5.0); 4]);
    }

    #[test]
    fn averages_are_means_of_means() {
        let s = aggregate_expert(&[
            rec("a", Criterion::A1, [Some(5), Some(1), Some(1), Some(5)]),
            rec("b", Criterion::A1, [Some(5), Some(1), Some(1), Some(5)]),
            rec("c", Criterion::A1, [Some(5), Some(1), Some(1), Some(5)]),
            rec("d", Criterion::A2, [Some(1), Some(1), Some(1), Some(1)]),
        ])
        .unwrap();
        assert_eq!(s.averages[0], Some(3.0));
    }

    #[test]
    fn unintelligible_counts_and_blank_likert() {
        let mut blank = rec("u", Criterion::A3, [None; 4]);
        blank.intelligible = false;
        let partial = rec("p", Criterion::A3, [Some(4), None, Some(2), Some(3)]);
        let s = aggregate_expert(&[blank, partial]).unwrap();
        let row = &s.rows[0];
        assert_eq!((row.counts, row.unintelligible, row.intelligible), (2, 1, 1));
        assert_eq!(row.means, [Some(4.0), None, Some(2.0), Some(3.0)]);
        assert!(s.to_text().contains("NA"));
    }

    #[test]
    fn invalid_records() {
        let bad = rec("x", Criterion::A1, [Some(6), None, None, None]);
        assert!(matches!(aggregate_expert(&[bad]), Err(ExpertError::LikertRange { value: 6, .. })));
        let mut exact = rec("y", Criterion::A1, [None; 4]);
        exact.intelligible = false;
        exact.exact_match = true;
        assert!(matches!(exact.check(), Err(ExpertError::ExactWithoutIntelligible { .. })));
    }

    #[test]
    fn parse_flags_and_blanks() {
        let csv = "response_id,criterion,intelligible,exact_match,typical,normal,not_typical,ehr_match\n\
                   r1,B4,1,1,2,5,1,4\n\
                   r2,B4,0,0,,,,\n";
        let rs = parse_expert(csv, "mem").unwrap();
        assert_eq!(rs.len(), 2);
        assert!(rs[0].exact_match && !rs[1].intelligible);
        assert_eq!(rs[1].likert(), [None; 4]);

        let bad = "response_id,criterion,intelligible,exact_match,typical,normal,not_typical,ehr_match\n\
                   r1,C9,1,1,2,5,1,4\n";
        assert!(matches!(parse_expert(bad, "mem"), Err(LoadError::Parse { line: 2, .. })));
        let flag2 = "response_id,criterion,intelligible,exact_match,typical,normal,not_typical,ehr_match\n\
                     r1,A1,2,0,,,,\n";
        assert!(matches!(parse_expert(flag2, "mem"), Err(LoadError::Parse { .. })));
    }
}
