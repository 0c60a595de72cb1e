//! Worker gating, custom qualification tags and cohort demographics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum platform approval rate (inclusive) for entry.
pub const MIN_APPROVAL_RATE: f64 = 98.0;
pub const REQUIRED_COUNTRY: &str = "US";

#[derive(Debug, Error, PartialEq)]
pub enum PrequalError {
    #[error("profile {worker_id} is missing {missing:?}")]
    IncompleteProfile {
        worker_id: String,
        missing: Vec<&'static str>,
    },
    #[error("profile {worker_id} is invalid: {reason}")]
    InvalidProfile { worker_id: String, reason: String },
    #[error("cohort is empty")]
    EmptyCohort,
}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

vocabulary!(Sex {
    Female => "Female",
    Male => "Male",
});

vocabulary!(Race {
    AmericanIndian => "American Indian or Alaska Native",
    Asian => "Asian",
    Black => "Black or African-American",
    White => "White",
});

vocabulary!(Ethnicity {
    Hispanic => "Hispanic or Latino",
    NotHispanic => "Not Hispanic or Latino",
});

vocabulary!(Education {
    LessThanHighSchool => "Less than high school degree",
    HighSchool => "High school diploma",
    Associate => "Associate degree",
    Bachelor => "Bachelor's degree",
    Master => "Master's degree",
    Doctoral => "Doctoral degree (PhD, MD,...)",
});

vocabulary!(
    /// Custom qualification tags.
    QualificationTag {
        Mm => "MM",
        Hc => "HC",
        Gd => "GD",
        Ed => "ED",
    }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    /// ISO 3166-1 alpha-2 code.
    #[serde(default)]
    pub country: Option<String>,
    /// Platform approval rate in percent.
    #[serde(default)]
    pub approval_rate: Option<f64>,
    #[serde(default)]
    pub has_platform_masters: bool,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub race: Option<Race>,
    #[serde(default)]
    pub ethnicity: Option<Ethnicity>,
    #[serde(default)]
    pub education: Option<Education>,
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub profession: Option<String>,
    /// Qualification-task answers by question id.
    #[serde(default)]
    pub qual_answers: BTreeMap<String, String>,
}

impl WorkerProfile {
    pub fn new(worker_id: impl Into<String>) -> Self {
        WorkerProfile {
            worker_id: worker_id.into(),
            country: None,
            approval_rate: None,
            has_platform_masters: false,
            sex: None,
            race: None,
            ethnicity: None,
            education: None,
            age: None,
            profession: None,
            qual_answers: BTreeMap::new(),
        }
    }

    /// Range checks on the numeric fields.
    pub fn check(&self) -> Result<(), PrequalError> {
        let invalid = |reason: String| {
            Err(PrequalError::InvalidProfile {
                worker_id: self.worker_id.clone(),
                reason,
            })
        };
        if self.worker_id.trim().is_empty() {
            return invalid("worker_id is empty".into());
        }
        if let Some(rate) = self.approval_rate {
            if !(0.0..=100.0).contains(&rate) {
                return invalid(format!("approval_rate {rate} outside [0, 100]"));
            }
        }
        if let Some(age) = self.age {
            if age <= 0.0 || !age.is_finite() {
                return invalid(format!("age {age} must be positive"));
            }
        }
        Ok(())
    }

    fn profession_is(&self, name: &str) -> bool {
        self.profession
            .as_deref()
            .is_some_and(|p| p.trim().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum GateFailure {
    Country { found: String },
    ApprovalRate { found: f64 },
}

impl fmt::Display for GateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateFailure::Country { found } => {
                write!(f, "country {found} is not {REQUIRED_COUNTRY}")
            }
            GateFailure::ApprovalRate { found } => {
                write!(f, "approval rate {found}% is below {MIN_APPROVAL_RATE}%")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub accepted: bool,
    /// Every failed criterion; empty when accepted.
    pub reasons: Vec<GateFailure>,
}

/// Entry requirement: US residence and an approval rate of at least 98%.
pub fn gate(w: &WorkerProfile) -> Result<GateDecision, PrequalError> {
    w.check()?;
    let mut missing = Vec::new();
    if w.country.as_deref().is_none_or(|c| c.trim().is_empty()) {
        missing.push("country");
    }
    if w.approval_rate.is_none() {
        missing.push("approval_rate");
    }
    if !missing.is_empty() {
        return Err(PrequalError::IncompleteProfile {
            worker_id: w.worker_id.clone(),
            missing,
        });
    }
    let country = w.country.as_deref().unwrap().trim();
    let rate = w.approval_rate.unwrap();

    let mut reasons = Vec::new();
    if !country.eq_ignore_ascii_case(REQUIRED_COUNTRY) {
        reasons.push(GateFailure::Country {
            found: country.to_owned(),
        });
    }
    if rate < MIN_APPROVAL_RATE {
        reasons.push(GateFailure::ApprovalRate { found: rate });
    }
    Ok(GateDecision {
        accepted: reasons.is_empty(),
        reasons,
    })
}

/// Qualification tags earned from the profile. Tags are independent of each other.
pub fn assign_qualifications(w: &WorkerProfile) -> BTreeSet<QualificationTag> {
    let mut tags = BTreeSet::new();
    if w.has_platform_masters {
        tags.insert(QualificationTag::Mm);
    }
    if w.profession_is("healthcare") {
        tags.insert(QualificationTag::Hc);
    }
    if matches!(w.education, Some(Education::Master | Education::Doctoral)) {
        tags.insert(QualificationTag::Gd);
    }
    if w.profession_is("education") {
        tags.insert(QualificationTag::Ed);
    }
    tags
}

/// Row label used for profiles that leave a categorical field empty.
pub const NOT_REPORTED: &str = "Not reported";

/// `100·count/n` in tenths of a percent.
///
/// The quotient is rounded half-up to hundredths and then half-up to
/// tenths, so 14 of 26 prints as 53.9.
pub fn percent_tenths(count: usize, n: usize) -> u64 {
    assert!(n > 0, "percent of an empty cohort");
    let (count, n) = (count as u64, n as u64);
    let hundredths = (20_000 * count + n) / (2 * n);
    (hundredths + 5) / 10
}

pub fn format_tenths(tenths: u64) -> String {
    format!("{}.{}", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub choice: String,
    pub count: usize,
    pub percent_tenths: u64,
}

impl ChoiceRow {
    pub fn percent(&self) -> f64 {
        self.percent_tenths as f64 / 10.0
    }

    /// Table cell in the `pct (count)` layout, e.g. `53.9 (14)`.
    pub fn cell(&self) -> String {
        format!("{} ({})", format_tenths(self.percent_tenths), self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: String,
    pub rows: Vec<ChoiceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsSummary {
    pub n: usize,
    pub variables: Vec<VariableSummary>,
    pub age: Option<AgeSummary>,
}

fn summarize_variable<T: Copy + Ord + fmt::Display>(
    name: &str,
    vocabulary: &[T],
    values: impl Iterator<Item = Option<T>>,
    n: usize,
) -> VariableSummary {
    let mut counts: BTreeMap<T, usize> = vocabulary.iter().map(|&v| (v, 0)).collect();
    let mut missing = 0;
    for value in values {
        match value {
            Some(v) => *counts.entry(v).or_default() += 1,
            None => missing += 1,
        }
    }
    let mut rows: Vec<ChoiceRow> = vocabulary
        .iter()
        .map(|v| ChoiceRow {
            choice: v.to_string(),
            count: counts[v],
            percent_tenths: percent_tenths(counts[v], n),
        })
        .collect();
    if missing > 0 {
        rows.push(ChoiceRow {
            choice: NOT_REPORTED.into(),
            count: missing,
            percent_tenths: percent_tenths(missing, n),
        });
    }
    VariableSummary {
        variable: name.into(),
        rows,
    }
}

pub fn summarize_demographics(cohort: &[WorkerProfile]) -> Result<DemographicsSummary, PrequalError> {
    if cohort.is_empty() {
        return Err(PrequalError::EmptyCohort);
    }
    for w in cohort {
        w.check()?;
    }
    let n = cohort.len();
    let variables = vec![
        summarize_variable("Sex", Sex::ALL, cohort.iter().map(|w| w.sex), n),
        summarize_variable("Race", Race::ALL, cohort.iter().map(|w| w.race), n),
        summarize_variable("Ethnicity", Ethnicity::ALL, cohort.iter().map(|w| w.ethnicity), n),
        summarize_variable("Education", Education::ALL, cohort.iter().map(|w| w.education), n),
    ];

    let ages: Vec<f64> = cohort.iter().filter_map(|w| w.age).collect();
    let age = (!ages.is_empty()).then(|| {
        let count = ages.len() as f64;
        let mean = ages.iter().sum::<f64>() / count;
        let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / count;
        AgeSummary {
            mean,
            sd: var.sqrt(),
            min: ages.iter().copied().fold(f64::INFINITY, f64::min),
            max: ages.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: ages.len(),
        }
    });
    Ok(DemographicsSummary { n, variables, age })
}

fn one_decimal(x: f64) -> String {
    format!("{:.1}", (x * 10.0).round() / 10.0)
}

fn compact(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        one_decimal(x)
    }
}

impl DemographicsSummary {
    /// Looks up one `pct (count)` cell.
    pub fn cell(&self, variable: &str, choice: &str) -> Option<String> {
        self.variables
            .iter()
            .find(|v| v.variable == variable)?
            .rows
            .iter()
            .find(|r| r.choice == choice)
            .map(ChoiceRow::cell)
    }

    /// `(label, value)` rows in table order, age rows last.
    pub fn table_rows(&self) -> Vec<(String, String, String)> {
        let mut rows = Vec::new();
        for v in &self.variables {
            for r in &v.rows {
                rows.push((v.variable.clone(), r.choice.clone(), r.cell()));
            }
        }
        if let Some(age) = &self.age {
            rows.push(("Age".into(), "Mean".into(), one_decimal(age.mean)));
            rows.push(("Age".into(), "SD".into(), one_decimal(age.sd)));
            rows.push((
                "Age".into(),
                "Range".into(),
                format!("{}-{}", compact(age.min), compact(age.max)),
            ));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["Variable", "Choice", &format!("Cohort (n={})", self.n)])
            .expect("in-memory write");
        for (var, choice, value) in self.table_rows() {
            w.write_record([var, choice, value]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worker(country: &str, rate: f64) -> WorkerProfile {
        WorkerProfile {
            country: Some(country.into()),
            approval_rate: Some(rate),
            ..WorkerProfile::new("w")
        }
    }

    #[test]
    fn gate_examples() {
        assert!(gate(&worker("US", 98.0)).unwrap().accepted);
        let low = gate(&worker("US", 97.9)).unwrap();
        assert!(!low.accepted);
        assert_eq!(low.reasons, [GateFailure::ApprovalRate { found: 97.9 }]);
        let abroad = gate(&worker("CA", 99.5)).unwrap();
        assert_eq!(abroad.reasons, [GateFailure::Country { found: "CA".into() }]);
        assert_eq!(gate(&worker("IN", 90.0)).unwrap().reasons.len(), 2);
    }

    #[test]
    fn gate_requires_fields() {
        let err = gate(&WorkerProfile::new("w9")).unwrap_err();
        assert_eq!(
            err,
            PrequalError::IncompleteProfile {
                worker_id: "w9".into(),
                missing: vec!["country", "approval_rate"],
            }
        );
        assert!(matches!(
            gate(&worker("US", 101.0)),
            Err(PrequalError::InvalidProfile { .. })
        ));
    }

    #[test]
    fn qualification_examples() {
        let hc_gd = WorkerProfile {
            profession: Some("healthcare".into()),
            education: Some(Education::Master),
            ..worker("US", 99.0)
        };
        assert_eq!(
            assign_qualifications(&hc_gd),
            BTreeSet::from([QualificationTag::Hc, QualificationTag::Gd])
        );
        let plain = WorkerProfile {
            education: Some(Education::Bachelor),
            ..worker("US", 99.0)
        };
        assert!(assign_qualifications(&plain).is_empty());
        let teacher = WorkerProfile {
            has_platform_masters: true,
            profession: Some("Education".into()),
            ..worker("US", 99.0)
        };
        assert_eq!(
            assign_qualifications(&teacher),
            BTreeSet::from([QualificationTag::Mm, QualificationTag::Ed])
        );
    }

    #[test]
    fn percent_formatting() {
        assert_eq!(format_tenths(percent_tenths(14, 26)), "53.9");
        assert_eq!(format_tenths(percent_tenths(12, 26)), "46.2");
        assert_eq!(format_tenths(percent_tenths(20, 54)), "37.0");
        assert_eq!(format_tenths(percent_tenths(0, 5)), "0.0");
        assert_eq!(format_tenths(percent_tenths(5, 5)), "100.0");
    }

    #[test]
    fn empty_cohort_rejected() {
        assert_eq!(summarize_demographics(&[]), Err(PrequalError::EmptyCohort));
    }

    #[test]
    fn homogeneous_cohort_single_full_rows() {
        let cohort: Vec<_> = (0..4)
            .map(|i| WorkerProfile {
                sex: Some(Sex::Male),
                race: Some(Race::White),
                ethnicity: Some(Ethnicity::NotHispanic),
                education: Some(Education::Bachelor),
                age: Some(30.0 + i as f64),
                ..WorkerProfile::new(format!("w{i}"))
            })
            .collect();
        let s = summarize_demographics(&cohort).unwrap();
        for v in &s.variables {
            let nonzero: Vec<_> = v.rows.iter().filter(|r| r.count > 0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(nonzero[0].cell(), "100.0 (4)");
        }
        let age = s.age.unwrap();
        assert_eq!(age.mean, 31.5);
        assert!((age.sd - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!((age.min, age.max), (30.0, 33.0));
    }

    #[test]
    fn missing_categories_reported() {
        let cohort = vec![
            WorkerProfile { sex: Some(Sex::Female), ..WorkerProfile::new("a") },
            WorkerProfile::new("b"),
        ];
        let s = summarize_demographics(&cohort).unwrap();
        assert_eq!(s.cell("Sex", NOT_REPORTED).unwrap(), "50.0 (1)");
        assert!(s.age.is_none());
        assert!(s.to_csv().starts_with("Variable,Choice,Cohort (n=2)\n"));
    }

    fn arb_profile() -> impl Strategy<Value = WorkerProfile> {
        (
            any::<bool>(),
            prop::sample::select(vec!["healthcare", "education", "retail", "Healthcare"]),
            prop::sample::select(Education::ALL.to_vec()),
            prop::option::of(prop::sample::select(Sex::ALL.to_vec())),
            prop::option::of(20.0f64..80.0),
            "[A-Z]{2}",
            0.0f64..=100.0,
        )
            .prop_map(|(mm, prof, edu, sex, age, country, rate)| WorkerProfile {
                has_platform_masters: mm,
                profession: Some(prof.into()),
                education: Some(edu),
                sex,
                age,
                country: Some(country),
                approval_rate: Some(rate),
                ..WorkerProfile::new("p")
            })
    }

    proptest! {
        #[test]
        fn gate_monotone_in_rate(p in arb_profile(), bump in 0.0f64..10.0) {
            let before = gate(&p).unwrap();
            let mut raised = p.clone();
            raised.approval_rate = Some((p.approval_rate.unwrap() + bump).min(100.0));
            if before.accepted {
                prop_assert!(gate(&raised).unwrap().accepted);
            }
        }

        #[test]
        fn tags_ignore_unrelated_fields(p in arb_profile(), other in arb_profile()) {
            let mut perturbed = other.clone();
            perturbed.has_platform_masters = p.has_platform_masters;
            perturbed.profession = p.profession.clone();
            perturbed.education = p.education;
            perturbed.qual_answers.insert("q7".into(), "anything".into());
            prop_assert_eq!(assign_qualifications(&p), assign_qualifications(&perturbed));
        }

        #[test]
        fn counts_sum_to_n_and_percents_recompute(profiles in prop::collection::vec(arb_profile(), 1..60)) {
            let s = summarize_demographics(&profiles).unwrap();
            for v in &s.variables {
                prop_assert_eq!(v.rows.iter().map(|r| r.count).sum::<usize>(), s.n);
                for r in &v.rows {
                    let exact = 100.0 * r.count as f64 / s.n as f64;
                    prop_assert!((r.percent() - exact).abs() <= 0.055 + 1e-9);
                    prop_assert_eq!(r.percent_tenths, percent_tenths(r.count, s.n));
                }
            }
        }
    }
}
