//! t-tests, the Student t distribution, UTAUT scoring and pain reports.

mod pain;
mod tdist;
mod ttest;
mod utaut;

use thiserror::Error;

pub use pain::{parse_pain_csv, pain_report, ChartSeries, ModeSummary, PainChart, PainMode, PainRecord, PainReport};
pub use tdist::{ln_gamma, reg_inc_beta, t_cdf, two_tailed_p};
pub use ttest::{paired_t_test, welch_t_test, TTestResult, TestKind};
pub use utaut::{
    compare_groups, compare_questions, parse_utaut_csv, score_utaut, Category, CategoryMap, CategoryScores,
    ComparisonRow, Group, GroupComparison, Pairing, UtautResponse, QUESTION_COUNT,
};

/// Questions reported individually alongside the category table.
pub const SELECTED_QUESTIONS: [usize; 6] = [6, 7, 26, 36, 42, 43];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 2 observations, got {n}")]
    TooFew { n: usize },
    #[error("zero variance: the t statistic is undefined")]
    DegenerateVariance,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("respondent {respondent}: {message}")]
    InvalidResponse { respondent: String, message: String },
    #[error("invalid category map: {0}")]
    InvalidMap(String),
    #[error("incomplete dyads: {0}")]
    IncompleteDyads(String),
    #[error("participant {participant}: {message}")]
    IncompletePairs { participant: String, message: String },
    #[error("participant {participant}: score {score} outside 0..=10")]
    ScoreRange { participant: String, score: i64 },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

impl StatsError {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::LengthMismatch { .. } => "length_mismatch",
            StatsError::TooFew { .. } => "too_few",
            StatsError::DegenerateVariance => "degenerate_variance",
            StatsError::NonFinite => "non_finite",
            StatsError::InvalidDf(_) => "invalid_df",
            StatsError::InvalidResponse { .. } => "invalid_response",
            StatsError::InvalidMap(_) => "invalid_map",
            StatsError::IncompleteDyads(_) => "incomplete_dyads",
            StatsError::IncompletePairs { .. } => "incomplete_pairs",
            StatsError::ScoreRange { .. } => "score_range",
            StatsError::Csv { .. } => "csv",
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// "p < 0.001" below a thousandth, three decimals below 0.01, otherwise two.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".to_string()
    } else if p < 0.01 {
        format!("{p:.3}")
    } else {
        format!("{p:.2}")
    }
}
