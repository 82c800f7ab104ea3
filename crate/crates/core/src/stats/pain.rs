use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ttest::{paired_t_test, TTestResult};
use super::{format_p, mean, sample_sd, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PainMode {
    #[serde(rename = "A_no_robot", alias = "A", alias = "a")]
    ANoRobot,
    #[serde(rename = "B_with_robot", alias = "B", alias = "b")]
    BWithRobot,
}

impl PainMode {
    pub fn code(self) -> &'static str {
        match self {
            PainMode::ANoRobot => "A_no_robot",
            PainMode::BWithRobot => "B_with_robot",
        }
    }

    pub fn other(self) -> Self {
        match self {
            PainMode::ANoRobot => PainMode::BWithRobot,
            PainMode::BWithRobot => PainMode::ANoRobot,
        }
    }
}

impl std::str::FromStr for PainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" | "A_no_robot" => Ok(PainMode::ANoRobot),
            "B" | "b" | "B_with_robot" => Ok(PainMode::BWithRobot),
            other => Err(format!("unknown pain mode {other:?}")),
        }
    }
}

/// Self-reported score on the 0..=10 faces chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PainRecord {
    pub participant_id: String,
    pub mode: PainMode,
    pub score: i64,
    /// 1 for the first session of the participant, 2 for the second.
    #[serde(default)]
    pub order: u32,
}

impl PainRecord {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(0..=10).contains(&self.score) {
            return Err(StatsError::ScoreRange {
                participant: self.participant_id.clone(),
                score: self.score,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PainMode,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub mode: PainMode,
    pub values: Vec<f64>,
}

/// Per-participant two-bar chart as data series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PainChart {
    pub labels: Vec<String>,
    pub series: Vec<ChartSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PainReport {
    pub n: usize,
    pub mode_a: ModeSummary,
    pub mode_b: ModeSummary,
    /// Mean of the per-participant A − B differences.
    pub mean_difference: f64,
    pub test: Option<TTestResult>,
    pub error: Option<String>,
    pub chart: PainChart,
}

impl PainReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "participants: {}\nmode A (no robot): mean {:.2} (SD {:.2})\nmode B (with robot): mean {:.2} (SD {:.2})\nmean difference: {:.2}\n",
            self.n, self.mode_a.mean, self.mode_a.sd, self.mode_b.mean, self.mode_b.sd, self.mean_difference
        );
        match (&self.test, &self.error) {
            (Some(t), _) => {
                let p = match format_p(t.p_two_tailed) {
                    s if s.starts_with('p') => s,
                    s => format!("p = {s}"),
                };
                out.push_str(&format!("paired t({}) = {:.2}, {p}\n", t.df, t.t));
            }
            (None, Some(code)) => out.push_str(&format!("paired t-test: {code}\n")),
            (None, None) => {}
        }
        out
    }
}

/// Paired comparison of the two modes. Every participant needs exactly one
/// score per mode. A degenerate test is reported in `error`, not as `Err`.
pub fn pain_report(records: &[PainRecord]) -> Result<PainReport, StatsError> {
    let mut by: BTreeMap<&str, [Option<i64>; 2]> = BTreeMap::new();
    for r in records {
        r.validate()?;
        let slot = &mut by.entry(r.participant_id.as_str()).or_default()[r.mode as usize];
        if slot.is_some() {
            return Err(StatsError::IncompletePairs {
                participant: r.participant_id.clone(),
                message: format!("duplicate {} score", r.mode.code()),
            });
        }
        *slot = Some(r.score);
    }
    let mut labels = Vec::with_capacity(by.len());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (p, [sa, sb]) in &by {
        match (sa, sb) {
            (Some(x), Some(y)) => {
                labels.push(p.to_string());
                a.push(*x as f64);
                b.push(*y as f64);
            }
            (None, _) | (_, None) => {
                let missing = if sa.is_none() { PainMode::ANoRobot } else { PainMode::BWithRobot };
                return Err(StatsError::IncompletePairs {
                    participant: p.to_string(),
                    message: format!("missing {} score", missing.code()),
                });
            }
        }
    }
    if labels.is_empty() {
        return Err(StatsError::TooFew { n: 0 });
    }
    let (test, error) = match paired_t_test(&a, &b) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.code().to_string())),
    };
    Ok(PainReport {
        n: labels.len(),
        mode_a: ModeSummary {
            mode: PainMode::ANoRobot,
            mean: mean(&a),
            sd: sample_sd(&a),
        },
        mode_b: ModeSummary {
            mode: PainMode::BWithRobot,
            mean: mean(&b),
            sd: sample_sd(&b),
        },
        mean_difference: mean(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()),
        test,
        error,
        chart: PainChart {
            labels,
            series: vec![
                ChartSeries {
                    mode: PainMode::ANoRobot,
                    values: a,
                },
                ChartSeries {
                    mode: PainMode::BWithRobot,
                    values: b,
                },
            ],
        },
    })
}

#[derive(Deserialize)]
struct PainRow {
    participant_id: String,
    mode: String,
    score: String,
    #[serde(default)]
    order: Option<u32>,
}

/// Long-format CSV: `participant_id,mode,score[,order]`.
pub fn parse_pain_csv<R: std::io::Read>(reader: R) -> Result<Vec<PainRecord>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<PainRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| StatsError::Csv { line, message: e.to_string() })?;
        let mode = row.mode.parse().map_err(|message| StatsError::Csv { line, message })?;
        let score = row.score.parse::<i64>().map_err(|_| StatsError::Csv {
            line,
            message: format!("score {:?} is not an integer", row.score),
        })?;
        let r = PainRecord {
            participant_id: row.participant_id,
            mode,
            score,
            order: row.order.unwrap_or(0),
        };
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(a: &[i64], b: &[i64]) -> Vec<PainRecord> {
        a.iter()
            .zip(b)
            .enumerate()
            .flat_map(|(i, (&x, &y))| {
                let id = format!("p{i:02}");
                [
                    PainRecord {
                        participant_id: id.clone(),
                        mode: PainMode::ANoRobot,
                        score: x,
                        order: 1,
                    },
                    PainRecord {
                        participant_id: id,
                        mode: PainMode::BWithRobot,
                        score: y,
                        order: 2,
                    },
                ]
            })
            .collect()
    }

    #[test]
    fn report_formatting() {
        // 25 children: A sums to 214 (mean 8.56), B to 115 (mean 4.60).
        let mut a = vec![9i64; 25];
        a[..11].fill(8);
        let mut b = vec![5i64; 25];
        b[..10].fill(4);
        b.reverse();
        let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
        assert_eq!((sa, sb), (214, 115));
        let r = pain_report(&cohort(&a, &b)).unwrap();
        let text = r.render_text();
        assert!(text.contains("mean 8.56"), "{text}");
        assert!(text.contains("mean 4.60"), "{text}");
        assert!(text.contains("p < 0.001"), "{text}");
        assert_eq!(r.chart.labels.len(), 25);
        assert_eq!(r.chart.series[0].values.len(), 25);
    }

    #[test]
    fn constant_offset_is_degenerate() {
        let b: Vec<i64> = (0..10).map(|i| i % 6).collect();
        let a: Vec<i64> = b.iter().map(|v| v + 4).collect();
        let r = pain_report(&cohort(&a, &b)).unwrap();
        assert_eq!(r.mean_difference, 4.0);
        assert_eq!(r.error.as_deref(), Some("degenerate_variance"));
        assert!(r.test.is_none());
        let same = pain_report(&cohort(&b, &b)).unwrap();
        assert_eq!(same.error.as_deref(), Some("degenerate_variance"));
    }

    #[test]
    fn incomplete_duplicate_and_out_of_range() {
        let mut recs = cohort(&[5, 6], &[3, 3]);
        recs.pop();
        assert!(matches!(pain_report(&recs), Err(StatsError::IncompletePairs { .. })));
        let mut dup = cohort(&[5, 6], &[3, 3]);
        dup.push(dup[0].clone());
        assert!(matches!(pain_report(&dup), Err(StatsError::IncompletePairs { .. })));
        let bad = cohort(&[11, 6], &[3, 3]);
        assert_eq!(pain_report(&bad).unwrap_err().code(), "score_range");
        assert!(pain_report(&cohort(&[10, 0], &[0, 10])).is_ok());
    }

    #[test]
    fn csv_and_mode_aliases() {
        let text = "participant_id,mode,score,order\nk1,A,7,1\nk1,B_with_robot,3,2\nk2,B,4,1\nk2,A_no_robot,9,2\n";
        let recs = parse_pain_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[2].mode, PainMode::BWithRobot);
        let r = pain_report(&recs).unwrap();
        assert_eq!(r.mode_a.mean, 8.0);
        let m: PainMode = serde_json::from_str("\"A\"").unwrap();
        assert_eq!(m, PainMode::ANoRobot);
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"A_no_robot\"");
        assert!(parse_pain_csv("participant_id,mode,score\nk,A,12\n".as_bytes()).is_err());
    }
}
