//! Completion-time screening.

use serde::{Deserialize, Serialize};

use crate::realtime::CandidateResponse;

/// A collected response with its dataset identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub response_id: String,
    #[serde(flatten)]
    pub response: CandidateResponse,
}

/// Ids of responses completed in under `min_seconds`, in input order.
pub fn completion_time_filter<'a>(
    responses: impl IntoIterator<Item = (&'a str, &'a CandidateResponse)>,
    min_seconds: f64,
) -> Vec<String> {
    assert!(min_seconds >= 0.0, "min_seconds must be non-negative");
    responses
        .into_iter()
        .filter(|(_, r)| r.elapsed_seconds < min_seconds)
        .map(|(id, _)| id.to_owned())
        .collect()
}

pub fn flag_records(records: &[ResponseRecord], min_seconds: f64) -> Vec<String> {
    completion_time_filter(
        records.iter().map(|r| (r.response_id.as_str(), &r.response)),
        min_seconds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn record(id: usize, elapsed: f64) -> ResponseRecord {
        ResponseRecord {
            response_id: format!("r{id}"),
            response: CandidateResponse {
                worker_id: "w".into(),
                question_id: "q".into(),
                session_id: format!("s{id}"),
                text: "text".into(),
                elapsed_seconds: elapsed,
                submitted_at: Utc.with_ymd_and_hms(2023, 6, 1, 0, 0, 0).unwrap(),
            },
        }
    }

    #[test]
    fn examples() {
        let rs: Vec<_> = (0..5).map(|i| record(i, 1.0)).collect();
        assert!(flag_records(&rs, 0.0).is_empty());
        assert_eq!(flag_records(&rs, 30.0).len(), 5);
        let mixed = vec![record(0, 5.0), record(1, 20.0), record(2, 19.99)];
        assert_eq!(flag_records(&mixed, 20.0), ["r0", "r2"]);
    }

    #[test]
    fn record_reads_flat_json() {
        let line = r#"{"response_id":"resp1","worker_id":"w","question_id":"q01","session_id":"s","text":"t","elapsed_seconds":4.5,"submitted_at":"2023-06-01T12:00:00Z"}"#;
        let r: ResponseRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.response_id, "resp1");
        assert_eq!(r.response.elapsed_seconds, 4.5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(times in prop::collection::vec(0.0f64..120.0, 0..50), min in 0.0f64..60.0) {
            let rs: Vec<_> = times.iter().enumerate().map(|(i, &t)| record(i, t)).collect();
            let mut expected = Vec::new();
            for r in &rs {
                if r.response.elapsed_seconds < min {
                    expected.push(r.response_id.clone());
                }
            }
            prop_assert_eq!(flag_records(&rs, min), expected);
        }
    }
}
