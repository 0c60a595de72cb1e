//! Dual-evaluator binary quality ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{anova_oneway, cohens_kappa, AnovaResult, KappaResult, StatsError};
use crate::io::LoadError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub response_id: String,
    pub evaluator_id: String,
    /// 1 = overall good, 0 = overall bad.
    pub overall_good: u8,
}

#[derive(Debug, Error, PartialEq)]
pub enum RatingsError {
    #[error(
        "evaluators rated different responses; missing from first: {missing_from_first:?}, \
         missing from second: {missing_from_second:?}"
    )]
    Alignment {
        missing_from_first: Vec<String>,
        missing_from_second: Vec<String>,
    },
    #[error("expected exactly two evaluators, found {0:?}")]
    EvaluatorCount(Vec<String>),
    #[error("{evaluator_id} rated {response_id} more than once")]
    DuplicateRating {
        response_id: String,
        evaluator_id: String,
    },
    #[error("rating for {response_id} is {value}, expected 0 or 1")]
    NonBinary { response_id: String, value: u8 },
    #[error("no ratings")]
    Empty,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>, LoadError> {
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => LoadError::Io {
            path: origin.clone(),
            source,
        },
        other => LoadError::Invalid {
            path: origin.clone(),
            message: format!("{other:?}"),
        },
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let record: RatingRecord = row.map_err(|e| LoadError::Parse {
            path: origin.clone(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Ratings of one evaluator keyed by response id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorRatings {
    pub evaluator_id: String,
    pub ratings: BTreeMap<String, u8>,
}

impl EvaluatorRatings {
    pub fn from_records<'a>(
        evaluator_id: &str,
        records: impl IntoIterator<Item = &'a RatingRecord>,
    ) -> Result<Self, RatingsError> {
        let mut ratings = BTreeMap::new();
        for r in records {
            if r.overall_good > 1 {
                return Err(RatingsError::NonBinary {
                    response_id: r.response_id.clone(),
                    value: r.overall_good,
                });
            }
            if ratings.insert(r.response_id.clone(), r.overall_good).is_some() {
                return Err(RatingsError::DuplicateRating {
                    response_id: r.response_id.clone(),
                    evaluator_id: evaluator_id.to_owned(),
                });
            }
        }
        Ok(EvaluatorRatings {
            evaluator_id: evaluator_id.to_owned(),
            ratings,
        })
    }
}

/// Splits a flat record list into its two evaluators, ordered by evaluator id.
pub fn split_evaluators(
    records: &[RatingRecord],
) -> Result<(EvaluatorRatings, EvaluatorRatings), RatingsError> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.evaluator_id.as_str()).collect();
    let ids: Vec<&str> = ids.into_iter().collect();
    if ids.len() != 2 {
        return Err(RatingsError::EvaluatorCount(ids.iter().map(|s| s.to_string()).collect()));
    }
    let of = |id: &str| {
        EvaluatorRatings::from_records(id, records.iter().filter(|r| r.evaluator_id == id))
    };
    Ok((of(ids[0])?, of(ids[1])?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRatings {
    /// Mean rating per response, one of 0, 0.5 or 1.
    pub per_response: Vec<(String, f64)>,
    pub good_percent: f64,
    pub bad_percent: f64,
}

/// Averages the two evaluators per response.
pub fn merge_ratings(
    r1: &EvaluatorRatings,
    r2: &EvaluatorRatings,
) -> Result<MergedRatings, RatingsError> {
    let missing = |from: &EvaluatorRatings, other: &EvaluatorRatings| -> Vec<String> {
        other
            .ratings
            .keys()
            .filter(|k| !from.ratings.contains_key(*k))
            .cloned()
            .collect()
    };
    let missing_from_first = missing(r1, r2);
    let missing_from_second = missing(r2, r1);
    if !missing_from_first.is_empty() || !missing_from_second.is_empty() {
        return Err(RatingsError::Alignment {
            missing_from_first,
            missing_from_second,
        });
    }
    if r1.ratings.is_empty() {
        return Err(RatingsError::Empty);
    }

    let mut good_halves = 0u64;
    let per_response: Vec<(String, f64)> = r1
        .ratings
        .iter()
        .map(|(id, &a)| {
            let b = r2.ratings[id];
            good_halves += u64::from(a) + u64::from(b);
            (id.clone(), f64::from(a + b) / 2.0)
        })
        .collect();
    let good_percent = 100.0 * good_halves as f64 / (2 * per_response.len()) as f64;
    Ok(MergedRatings {
        per_response,
        good_percent,
        bad_percent: 100.0 - good_percent,
    })
}

/// Aligned rating vectors in response-id order.
pub fn aligned_vectors(
    r1: &EvaluatorRatings,
    r2: &EvaluatorRatings,
) -> Result<(Vec<u8>, Vec<u8>), RatingsError> {
    merge_ratings(r1, r2)?;
    Ok((
        r1.ratings.values().copied().collect(),
        r2.ratings.values().copied().collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub first_evaluator: String,
    pub second_evaluator: String,
    pub responses: usize,
    pub merged: MergedRatings,
    pub kappa: KappaResult,
    /// Two groups, one per evaluator, of 0/1 observations.
    pub anova: AnovaResult,
}

pub fn agreement(records: &[RatingRecord]) -> Result<AgreementReport, RatingsError> {
    let (r1, r2) = split_evaluators(records)?;
    let merged = merge_ratings(&r1, &r2)?;
    let (a, b) = aligned_vectors(&r1, &r2)?;
    let kappa = cohens_kappa(&a, &b)?;
    let to_f = |v: &[u8]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    let anova = anova_oneway(&[to_f(&a), to_f(&b)])?;
    Ok(AgreementReport {
        first_evaluator: r1.evaluator_id,
        second_evaluator: r2.evaluator_id,
        responses: a.len(),
        merged,
        kappa,
        anova,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(evaluator: &str, values: &[u8]) -> Vec<RatingRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| RatingRecord {
                response_id: format!("r{i:03}"),
                evaluator_id: evaluator.into(),
                overall_good: v,
            })
            .collect()
    }

    fn ev(evaluator: &str, values: &[u8]) -> EvaluatorRatings {
        EvaluatorRatings::from_records(evaluator, &records(evaluator, values)).unwrap()
    }

    #[test]
    fn merge_examples() {
        let all = merge_ratings(&ev("a", &[1, 1, 1]), &ev("b", &[1, 1, 1])).unwrap();
        assert_eq!((all.good_percent, all.bad_percent), (100.0, 0.0));
        let opposed = merge_ratings(&ev("a", &[1, 0, 1, 0]), &ev("b", &[0, 1, 0, 1])).unwrap();
        assert_eq!(opposed.good_percent, 50.0);
        assert!(opposed.per_response.iter().all(|(_, m)| *m == 0.5));
    }

    #[test]
    fn misaligned_sets_listed() {
        let a = ev("a", &[1, 1, 1]);
        let b = ev("b", &[1, 1]);
        assert_eq!(
            merge_ratings(&a, &b),
            Err(RatingsError::Alignment {
                missing_from_first: vec![],
                missing_from_second: vec!["r002".into()],
            })
        );
    }

    #[test]
    fn split_requires_two_evaluators() {
        let mut rs = records("a", &[1, 0]);
        assert!(matches!(split_evaluators(&rs), Err(RatingsError::EvaluatorCount(_))));
        rs.extend(records("b", &[1, 1]));
        rs.extend(records("c", &[1, 1]));
        assert!(matches!(split_evaluators(&rs), Err(RatingsError::EvaluatorCount(_))));
    }

    #[test]
    fn duplicate_and_nonbinary_rejected() {
        let mut rs = records("a", &[1, 0]);
        rs.push(rs[0].clone());
        assert!(matches!(
            EvaluatorRatings::from_records("a", &rs),
            Err(RatingsError::DuplicateRating { .. })
        ));
        assert!(matches!(
            EvaluatorRatings::from_records("a", &records("a", &[3])),
            Err(RatingsError::NonBinary { value: 3, .. })
        ));
    }

    #[test]
    fn agreement_end_to_end() {
        let mut rs = records("ev2", &[1, 0, 0, 0]);
        rs.extend(records("ev1", &[1, 1, 0, 0]));
        let report = agreement(&rs).unwrap();
        assert_eq!(report.first_evaluator, "ev1");
        assert_eq!(report.kappa.kappa, 0.5);
        assert_eq!(report.merged.good_percent, 37.5);
        assert_eq!((report.anova.df_between, report.anova.df_within), (1, 6));
    }

    proptest! {
        #[test]
        fn good_and_bad_sum_to_hundred(
            (a, b) in (1usize..150).prop_flat_map(|n| (
                prop::collection::vec(0u8..=1, n),
                prop::collection::vec(0u8..=1, n),
            ))
        ) {
            let m = merge_ratings(&ev("a", &a), &ev("b", &b)).unwrap();
            prop_assert_eq!(m.good_percent + m.bad_percent, 100.0);
            prop_assert!(m.per_response.iter().all(|(_, v)| [0.0, 0.5, 1.0].contains(v)));
        }
    }
}
