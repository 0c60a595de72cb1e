//! Post-collection analysis: duplicates, rater agreement, expert ratings and
//! completion-time screening.

pub mod completion;
pub mod duplicates;
pub mod expert;
pub mod ratings;
pub mod special;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use completion::{completion_time_filter, flag_records, ResponseRecord};
pub use duplicates::{find_duplicates, DuplicateError, DuplicateReport, DEFAULT_DUPLICATE_THRESHOLD};
pub use expert::{aggregate_expert, load_expert, Criterion, ExpertError, ExpertRecord, ExpertSummary};
pub use ratings::{
    agreement, load_ratings, merge_ratings, split_evaluators, AgreementReport, EvaluatorRatings,
    MergedRatings, RatingRecord, RatingsError,
};
pub use stats::{anova_oneway, cohens_kappa, AnovaResult, KappaResult, StatsError};

use crate::text::DEFAULT_NGRAM;

#[derive(Debug, Error)]
pub enum PostQcError {
    #[error(transparent)]
    Duplicates(#[from] DuplicateError),
    #[error(transparent)]
    Ratings(#[from] RatingsError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error("min_completion_seconds must be non-negative, got {0}")]
    InvalidMinSeconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostQcConfig {
    pub n: usize,
    pub duplicate_threshold: f64,
    pub min_completion_seconds: f64,
}

impl Default for PostQcConfig {
    fn default() -> Self {
        PostQcConfig {
            n: DEFAULT_NGRAM,
            duplicate_threshold: DEFAULT_DUPLICATE_THRESHOLD,
            min_completion_seconds: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostQcReport {
    pub duplicates: DuplicateReport,
    pub agreement: AgreementReport,
    pub slow_threshold_seconds: f64,
    pub fast_responses: Vec<String>,
    pub expert: Option<ExpertSummary>,
}

pub fn run_postqc(
    responses: &[ResponseRecord],
    rating_records: &[RatingRecord],
    expert_records: Option<&[ExpertRecord]>,
    cfg: &PostQcConfig,
) -> Result<PostQcReport, PostQcError> {
    if cfg.min_completion_seconds.is_nan() || cfg.min_completion_seconds < 0.0 {
        return Err(PostQcError::InvalidMinSeconds(cfg.min_completion_seconds));
    }
    let pairs: Vec<(String, String)> = responses
        .iter()
        .map(|r| (r.response_id.clone(), r.response.text.clone()))
        .collect();
    Ok(PostQcReport {
        duplicates: find_duplicates(&pairs, cfg.n, cfg.duplicate_threshold)?,
        agreement: agreement(rating_records)?,
        slow_threshold_seconds: cfg.min_completion_seconds,
        fast_responses: flag_records(responses, cfg.min_completion_seconds),
        expert: expert_records.map(aggregate_expert).transpose()?,
    })
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn row<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

impl PostQcReport {
    fn quality_rows(&self) -> Vec<Vec<String>> {
        let m = &self.agreement.merged;
        vec![
            row(["Responses", "Overall Good (%)", "Overall Bad (%)", "Duplicate (%)"]),
            vec![
                self.agreement.responses.to_string(),
                format!("{:.2}", m.good_percent),
                format!("{:.2}", m.bad_percent),
                format!("{:.2}", self.duplicates.duplicate_rate),
            ],
        ]
    }

    fn agreement_rows(&self) -> Vec<Vec<String>> {
        let a = &self.agreement;
        vec![
            row(["Metric", "Value"]),
            row(["first_evaluator", &a.first_evaluator]),
            row(["second_evaluator", &a.second_evaluator]),
            row(["responses", &a.responses.to_string()]),
            row(["kappa", &format!("{:.6}", a.kappa.kappa)]),
            row(["p_o", &format!("{:.6}", a.kappa.p_o)]),
            row(["p_e", &format!("{:.6}", a.kappa.p_e)]),
            row(["anova_f", &format!("{:.6}", a.anova.f)]),
            row(["anova_df_between", &a.anova.df_between.to_string()]),
            row(["anova_df_within", &a.anova.df_within.to_string()]),
            row(["anova_p", &format!("{:.6}", a.anova.p)]),
        ]
    }

    fn duplicate_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![row(["cluster", "response_id"])];
        for (i, cluster) in self.duplicates.clusters.iter().enumerate() {
            for id in cluster {
                rows.push(vec![(i + 1).to_string(), id.clone()]);
            }
        }
        rows
    }

    /// Report files as `(file name, contents)`, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut fast = vec![row(["response_id"])];
        fast.extend(self.fast_responses.iter().map(|id| vec![id.clone()]));

        let mut files = vec![
            ("quality.csv", csv_string(&self.quality_rows())),
            ("agreement.csv", csv_string(&self.agreement_rows())),
            ("duplicates.csv", csv_string(&self.duplicate_rows())),
            ("fast_responses.csv", csv_string(&fast)),
        ];
        if let Some(expert) = &self.expert {
            files.push(("expert_likert.csv", expert.to_csv()));
        }
        files.push(("summary.txt", self.to_text()));
        files
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Quality\n");
        out.push_str(&render_table(&self.quality_rows()));
        out.push_str("\nAgreement\n");
        out.push_str(&render_table(&self.agreement_rows()));
        out.push_str(&format!(
            "\nDuplicates: {} clusters, {} redundant of {} responses\n",
            self.duplicates.clusters.len(),
            self.duplicates.redundant(),
            self.duplicates.total,
        ));
        out.push_str(&format!(
            "Completed in under {}s: {}\n",
            self.slow_threshold_seconds,
            self.fast_responses.len()
        ));
        if let Some(expert) = &self.expert {
            out.push_str("\nExpert evaluation\n");
            out.push_str(&expert.to_text());
        }
        out
    }
}

/// Left-aligned plain-text table with a rule under the header row.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
