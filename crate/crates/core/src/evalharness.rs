//! Robustness runs over labeled Authentic / Copied / Paraphrased responses.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::postqc::render_table;
use crate::realtime::{validate, CandidateResponse, Decision, QcConfig};
use crate::search::SearchBackend;
use crate::text::Lexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Authentic,
    Copied,
    Paraphrased,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Authentic, Category::Copied, Category::Paraphrased];

    /// Whether the tool handled an item of this category correctly.
    /// Authentic items should pass; the others should be rejected.
    pub fn is_detected(self, decision: Decision) -> bool {
        match self {
            Category::Authentic => !decision.is_reject(),
            Category::Copied | Category::Paraphrased => decision.is_reject(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledResponse {
    pub question_id: String,
    pub text: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAudit {
    pub index: usize,
    pub question_id: String,
    pub category: Category,
    pub decision: Decision,
    pub shared: Vec<String>,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErroredItem {
    pub index: usize,
    pub question_id: String,
    pub category: Category,
    pub error: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub detected: usize,
    pub undetected: usize,
    /// Items of this category in the input, including errored ones.
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub counts: BTreeMap<Category, CategoryCounts>,
    pub items: Vec<ItemAudit>,
    pub errored: Vec<ErroredItem>,
}

fn eval_epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

/// Validates every item independently. Errors are recorded per item and do
/// not stop the run.
pub fn run_robustness(
    items: &[LabeledResponse],
    cfg: &QcConfig,
    backend: &dyn SearchBackend,
    lex: &Lexicon,
) -> RobustnessReport {
    let mut counts: BTreeMap<Category, CategoryCounts> =
        Category::ALL.iter().map(|&c| (c, CategoryCounts::default())).collect();
    let mut audits = Vec::new();
    let mut errored = Vec::new();

    for (index, item) in items.iter().enumerate() {
        let entry = counts.get_mut(&item.category).expect("all categories seeded");
        entry.total += 1;
        let candidate = CandidateResponse {
            worker_id: "robustness".into(),
            question_id: item.question_id.clone(),
            session_id: format!("robustness-{index}"),
            text: item.text.clone(),
            elapsed_seconds: 0.0,
            submitted_at: eval_epoch(),
        };
        match validate(&candidate, cfg, backend, lex) {
            Ok(v) => {
                let detected = item.category.is_detected(v.decision);
                if detected {
                    entry.detected += 1;
                } else {
                    entry.undetected += 1;
                }
                audits.push(ItemAudit {
                    index,
                    question_id: item.question_id.clone(),
                    category: item.category,
                    decision: v.decision,
                    shared: v.shared.to_strings(),
                    detected,
                });
            }
            Err(e) => errored.push(ErroredItem {
                index,
                question_id: item.question_id.clone(),
                category: item.category,
                error: e.to_string(),
            }),
        }
    }
    RobustnessReport {
        counts,
        items: audits,
        errored,
    }
}

fn csv_string(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

impl RobustnessReport {
    pub fn get(&self, category: Category) -> CategoryCounts {
        self.counts.get(&category).copied().unwrap_or_default()
    }

    fn summary_rows(&self) -> Vec<Vec<String>> {
        let mut header = vec![String::new()];
        header.extend(Category::ALL.iter().map(|c| c.to_string()));
        let line = |label: &str, f: fn(CategoryCounts) -> usize| {
            let mut r = vec![label.to_owned()];
            r.extend(Category::ALL.iter().map(|&c| f(self.get(c)).to_string()));
            r
        };
        let mut rows = vec![
            header,
            line("Detected", |c| c.detected),
            line("Undetected", |c| c.undetected),
        ];
        if !self.errored.is_empty() {
            rows.push(line("Errored", |c| c.total - c.detected - c.undetected));
        }
        rows.push(line("Total", |c| c.total));
        rows
    }

    pub fn summary_csv(&self) -> String {
        csv_string(&self.summary_rows())
    }

    pub fn items_csv(&self) -> String {
        let mut rows = vec![["index", "question_id", "category", "decision", "detected", "shared"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
        for a in &self.items {
            rows.push(vec![
                a.index.to_string(),
                a.question_id.clone(),
                a.category.to_string(),
                a.decision.as_str().to_owned(),
                a.detected.to_string(),
                a.shared.join(" | "),
            ]);
        }
        for e in &self.errored {
            rows.push(vec![
                e.index.to_string(),
                e.question_id.clone(),
                e.category.to_string(),
                "Errored".into(),
                "false".into(),
                e.error.clone(),
            ]);
        }
        csv_string(&rows)
    }

    pub fn to_text(&self) -> String {
        render_table(&self.summary_rows())
    }
}
