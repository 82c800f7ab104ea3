//! UTAUT questionnaire scoring and child/parent group comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ttest::{paired_t_test, welch_t_test, TTestResult};
use super::{format_p, mean, sample_sd, StatsError};

pub const QUESTION_COUNT: usize = 43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "ANX")]
    Anx,
    #[serde(rename = "ATT")]
    Att,
    #[serde(rename = "FC")]
    Fc,
    #[serde(rename = "ITU")]
    Itu,
    #[serde(rename = "PAD")]
    Pad,
    #[serde(rename = "PENJ")]
    Penj,
    #[serde(rename = "PEOU")]
    Peou,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "PU")]
    Pu,
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "SP")]
    Sp,
    Trust,
    #[serde(rename = "ATEG")]
    Ateg,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Anx,
        Category::Att,
        Category::Fc,
        Category::Itu,
        Category::Pad,
        Category::Penj,
        Category::Peou,
        Category::Ps,
        Category::Pu,
        Category::Si,
        Category::Sp,
        Category::Trust,
        Category::Ateg,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::Anx => "ANX",
            Category::Att => "ATT",
            Category::Fc => "FC",
            Category::Itu => "ITU",
            Category::Pad => "PAD",
            Category::Penj => "PENJ",
            Category::Peou => "PEOU",
            Category::Ps => "PS",
            Category::Pu => "PU",
            Category::Si => "SI",
            Category::Sp => "SP",
            Category::Trust => "Trust",
            Category::Ateg => "ATEG",
        }
    }
}

/// Which questions (1-based) feed each category, and which are reverse scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub categories: BTreeMap<Category, Vec<usize>>,
    #[serde(default)]
    pub reversed: BTreeSet<usize>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        let spans: [(Category, usize, usize); 13] = [
            (Category::Anx, 1, 4),
            (Category::Att, 5, 7),
            (Category::Fc, 8, 9),
            (Category::Itu, 10, 12),
            (Category::Pad, 13, 15),
            (Category::Penj, 16, 20),
            (Category::Peou, 21, 25),
            (Category::Ps, 26, 29),
            (Category::Pu, 30, 32),
            (Category::Si, 33, 34),
            (Category::Sp, 35, 37),
            (Category::Trust, 38, 39),
            (Category::Ateg, 40, 43),
        ];
        CategoryMap {
            categories: spans.iter().map(|&(c, lo, hi)| (c, (lo..=hi).collect())).collect(),
            reversed: BTreeSet::new(),
        }
    }
}

impl CategoryMap {
    /// Every question 1..=43 must belong to exactly one category.
    pub fn validate(&self) -> Result<(), StatsError> {
        let mut seen = [0usize; QUESTION_COUNT + 1];
        for qs in self.categories.values() {
            if qs.is_empty() {
                return Err(StatsError::InvalidMap("empty category".into()));
            }
            for &q in qs {
                if !(1..=QUESTION_COUNT).contains(&q) {
                    return Err(StatsError::InvalidMap(format!("question {q} outside 1..=43")));
                }
                seen[q] += 1;
            }
        }
        if let Some(q) = (1..=QUESTION_COUNT).find(|&q| seen[q] != 1) {
            return Err(StatsError::InvalidMap(format!("question {q} used {} times", seen[q])));
        }
        if let Some(q) = self.reversed.iter().find(|q| !(1..=QUESTION_COUNT).contains(*q)) {
            return Err(StatsError::InvalidMap(format!("reverse flag on unknown question {q}")));
        }
        Ok(())
    }

    fn item(&self, answers: &[u8], q: usize) -> f64 {
        let r = answers[q - 1] as f64;
        if self.reversed.contains(&q) {
            6.0 - r
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Child,
    Parent,
}

impl std::str::FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "child" | "children" => Ok(Group::Child),
            "parent" | "parents" => Ok(Group::Parent),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtautResponse {
    pub respondent_id: String,
    pub group: Group,
    #[serde(default)]
    pub dyad_id: Option<String>,
    pub answers: Vec<u8>,
}

impl UtautResponse {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.answers.len() != QUESTION_COUNT {
            return Err(StatsError::InvalidResponse {
                respondent: self.respondent_id.clone(),
                message: format!("{} answers, expected {QUESTION_COUNT}", self.answers.len()),
            });
        }
        if let Some(i) = self.answers.iter().position(|a| !(1..=5).contains(a)) {
            return Err(StatsError::InvalidResponse {
                respondent: self.respondent_id.clone(),
                message: format!("q{} = {} outside 1..=5", i + 1, self.answers[i]),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub respondent_id: String,
    pub group: Group,
    pub scores: BTreeMap<Category, f64>,
}

pub fn score_utaut(responses: &[UtautResponse], map: &CategoryMap) -> Result<Vec<CategoryScores>, StatsError> {
    map.validate()?;
    responses
        .iter()
        .map(|r| {
            r.validate()?;
            let scores = map
                .categories
                .iter()
                .map(|(c, qs)| (*c, qs.iter().map(|&q| map.item(&r.answers, q)).sum::<f64>() / qs.len() as f64))
                .collect();
            Ok(CategoryScores {
                respondent_id: r.respondent_id.clone(),
                group: r.group,
                scores,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Independent,
    ByDyad,
}

/// One category (or question) compared across the two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub item: String,
    pub children_mean: f64,
    pub children_sd: f64,
    pub parents_mean: f64,
    pub parents_sd: f64,
    pub test: Option<TTestResult>,
    /// Machine-readable reason when no test could be run.
    pub error: Option<String>,
}

impl ComparisonRow {
    pub fn from_values(item: &str, children: &[f64], parents: &[f64], pairing: Pairing) -> Self {
        let test = match pairing {
            Pairing::Independent => welch_t_test(children, parents),
            Pairing::ByDyad => paired_t_test(children, parents),
        };
        let (test, error) = match test {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.code().to_string())),
        };
        ComparisonRow {
            item: item.to_string(),
            children_mean: mean(children),
            children_sd: sample_sd(children),
            parents_mean: mean(parents),
            parents_sd: sample_sd(parents),
            test,
            error,
        }
    }

    pub fn p(&self) -> Option<f64> {
        self.test.as_ref().map(|t| t.p_two_tailed)
    }

    /// Tab-separated row: number, item, "mean (SD)" per group, p. P-values at
    /// or below 0.05 are wrapped in `**` to mark them bold.
    pub fn render(&self, number: usize) -> String {
        let p = match self.p() {
            Some(p) if p <= 0.05 => format!("**{}**", format_p(p)),
            Some(p) => format_p(p),
            None => self.error.clone().unwrap_or_default(),
        };
        format!(
            "{number}\t{}\t{:.2} ({:.2})\t{:.2} ({:.2})\t{p}",
            self.item, self.children_mean, self.children_sd, self.parents_mean, self.parents_sd
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub pairing: Pairing,
    pub rows: Vec<ComparisonRow>,
}

impl GroupComparison {
    pub fn render_text(&self) -> String {
        let mut out = String::from("No.\tItem\tChildren mean (SD)\tParents mean (SD)\tP-value\n");
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&r.render(i + 1));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,children_mean,children_sd,parents_mean,parents_sd,t,df,p\n");
        for r in &self.rows {
            let (t, df, p) = match &r.test {
                Some(t) => (t.t.to_string(), t.df.to_string(), t.p_two_tailed.to_string()),
                None => Default::default(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{t},{df},{p}\n",
                r.item, r.children_mean, r.children_sd, r.parents_mean, r.parents_sd
            ));
        }
        out
    }
}

/// Aligns children with parents by dyad id; both sides in matching order.
fn dyads<'a>(
    children: &'a [UtautResponse],
    parents: &'a [UtautResponse],
) -> Result<(Vec<&'a UtautResponse>, Vec<&'a UtautResponse>), StatsError> {
    let key = |r: &'a UtautResponse| {
        r.dyad_id.as_deref().ok_or_else(|| StatsError::IncompleteDyads(format!("{} has no dyad id", r.respondent_id)))
    };
    let mut by_id: BTreeMap<&str, &UtautResponse> = BTreeMap::new();
    for p in parents {
        if by_id.insert(key(p)?, p).is_some() {
            return Err(StatsError::IncompleteDyads(format!("dyad {} has two parents", key(p)?)));
        }
    }
    let mut cs = Vec::new();
    let mut ps = Vec::new();
    for c in children {
        let d = key(c)?;
        let p = by_id
            .remove(d)
            .ok_or_else(|| StatsError::IncompleteDyads(format!("dyad {d} has no parent")))?;
        cs.push(c);
        ps.push(p);
    }
    if let Some(d) = by_id.keys().next() {
        return Err(StatsError::IncompleteDyads(format!("dyad {d} has no child")));
    }
    Ok((cs, ps))
}

fn aligned<'a>(
    children: &'a [UtautResponse],
    parents: &'a [UtautResponse],
    pairing: Pairing,
) -> Result<(Vec<&'a UtautResponse>, Vec<&'a UtautResponse>), StatsError> {
    if children.is_empty() || parents.is_empty() {
        return Err(StatsError::TooFew { n: 0 });
    }
    for r in children.iter().chain(parents) {
        r.validate()?;
    }
    match pairing {
        Pairing::Independent => Ok((children.iter().collect(), parents.iter().collect())),
        Pairing::ByDyad => dyads(children, parents),
    }
}

/// Per-category comparison of the two groups.
pub fn compare_groups(
    children: &[UtautResponse],
    parents: &[UtautResponse],
    map: &CategoryMap,
    pairing: Pairing,
) -> Result<GroupComparison, StatsError> {
    map.validate()?;
    let (cs, ps) = aligned(children, parents, pairing)?;
    let score = |rs: &[&UtautResponse], qs: &[usize]| -> Vec<f64> {
        rs.iter()
            .map(|r| qs.iter().map(|&q| map.item(&r.answers, q)).sum::<f64>() / qs.len() as f64)
            .collect()
    };
    let rows = Category::ALL
        .iter()
        .filter_map(|c| map.categories.get(c).map(|qs| (c, qs)))
        .map(|(c, qs)| ComparisonRow::from_values(c.code(), &score(&cs, qs), &score(&ps, qs), pairing))
        .collect();
    Ok(GroupComparison { pairing, rows })
}

/// Single-question comparisons, e.g. Q6, Q7, Q26.
pub fn compare_questions(
    children: &[UtautResponse],
    parents: &[UtautResponse],
    questions: &[usize],
    map: &CategoryMap,
    pairing: Pairing,
) -> Result<GroupComparison, StatsError> {
    map.validate()?;
    let (cs, ps) = aligned(children, parents, pairing)?;
    let mut rows = Vec::with_capacity(questions.len());
    for &q in questions {
        if !(1..=QUESTION_COUNT).contains(&q) {
            return Err(StatsError::InvalidMap(format!("question {q} outside 1..=43")));
        }
        let c: Vec<f64> = cs.iter().map(|r| map.item(&r.answers, q)).collect();
        let p: Vec<f64> = ps.iter().map(|r| map.item(&r.answers, q)).collect();
        rows.push(ComparisonRow::from_values(&format!("Q{q}"), &c, &p, pairing));
    }
    Ok(GroupComparison { pairing, rows })
}

/// Reads `respondent_id,group,dyad_id,q1..q43` rows; an empty dyad_id means none.
pub fn parse_utaut_csv<R: std::io::Read>(reader: R) -> Result<Vec<UtautResponse>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| StatsError::Csv { line: 1, message: e.to_string() })?.clone();
    let expected: Vec<String> = ["respondent_id", "group", "dyad_id"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=QUESTION_COUNT).map(|q| format!("q{q}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(StatsError::Csv {
            line: 1,
            message: "header must be respondent_id,group,dyad_id,q1..q43".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| StatsError::Csv { line, message: e.to_string() })?;
        let respondent_id = row[0].to_string();
        let group = row[1].parse().map_err(|message| StatsError::Csv { line, message })?;
        let dyad_id = Some(row[2].to_string()).filter(|d| !d.is_empty());
        let answers = (3..row.len())
            .map(|k| {
                row[k].parse::<u8>().map_err(|_| StatsError::InvalidResponse {
                    respondent: respondent_id.clone(),
                    message: format!("q{} = {:?} is not an integer 1..=5", k - 2, &row[k]),
                })
            })
            .collect::<Result<Vec<u8>, _>>()?;
        let r = UtautResponse {
            respondent_id,
            group,
            dyad_id,
            answers,
        };
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn response(id: &str, group: Group, answers: Vec<u8>) -> UtautResponse {
        UtautResponse {
            respondent_id: id.into(),
            group,
            dyad_id: Some(id.trim_start_matches(['c', 'p']).to_string()),
            answers,
        }
    }

    #[test]
    fn default_map_covers_each_question_once() {
        let m = CategoryMap::default();
        m.validate().unwrap();
        assert_eq!(m.categories.len(), 13);
        let mut all: Vec<usize> = m.categories.values().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (1..=43).collect::<Vec<_>>());
        assert_eq!(m.categories[&Category::Trust], vec![38, 39]);
        assert_eq!(m.categories[&Category::Ateg], vec![40, 41, 42, 43]);
    }

    #[test]
    fn scoring_examples() {
        let mut answers = vec![3u8; 43];
        let all_three = score_utaut(&[response("c1", Group::Child, answers.clone())], &CategoryMap::default()).unwrap();
        assert!(all_three[0].scores.values().all(|&s| s == 3.0));
        answers[37] = 5;
        answers[38] = 4;
        let s = score_utaut(&[response("c1", Group::Child, answers.clone())], &CategoryMap::default()).unwrap();
        assert_eq!(s[0].scores[&Category::Trust], 4.5);
        answers[42] = 1;
        let mut rev = CategoryMap::default();
        rev.reversed.insert(43);
        let s = score_utaut(&[response("c1", Group::Child, answers)], &rev).unwrap();
        assert_eq!(s[0].scores[&Category::Ateg], (3.0 + 3.0 + 3.0 + 5.0) / 4.0);
    }

    #[test]
    fn invalid_responses_name_the_respondent() {
        let r = response("c9", Group::Child, vec![3; 42]);
        match score_utaut(&[r], &CategoryMap::default()) {
            Err(StatsError::InvalidResponse { respondent, .. }) => assert_eq!(respondent, "c9"),
            other => panic!("{other:?}"),
        }
        let mut bad = CategoryMap::default();
        bad.categories.get_mut(&Category::Trust).unwrap().push(1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trust_row_fixture() {
        let row = ComparisonRow {
            item: "Trust".into(),
            children_mean: 4.73,
            children_sd: 0.45,
            parents_mean: 4.33,
            parents_sd: 0.61,
            test: Some(TTestResult {
                kind: super::super::TestKind::Welch,
                t: 2.4,
                df: 30.0,
                p_two_tailed: 0.02,
                mean_a: 4.73,
                mean_b: 4.33,
                sd_a: 0.45,
                sd_b: 0.61,
                n_a: 20,
                n_b: 20,
            }),
            error: None,
        };
        assert_eq!(row.render(12), "12\tTrust\t4.73 (0.45)\t4.33 (0.61)\t**0.02**");
    }

    fn cohort(rng: &mut ChaCha8Rng, n: usize) -> Vec<UtautResponse> {
        (0..n)
            .map(|i| response(&format!("c{i}"), Group::Child, (0..43).map(|_| rng.random_range(1..=5)).collect()))
            .collect()
    }

    #[test]
    fn identical_groups_have_unit_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kids = cohort(&mut rng, 12);
        let parents: Vec<UtautResponse> = kids
            .iter()
            .map(|r| UtautResponse {
                respondent_id: r.respondent_id.replace('c', "p"),
                group: Group::Parent,
                ..r.clone()
            })
            .collect();
        let cmp = compare_groups(&kids, &parents, &CategoryMap::default(), Pairing::Independent).unwrap();
        assert_eq!(cmp.rows.len(), 13);
        for r in &cmp.rows {
            assert!((r.p().unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dyad_pairing_sharpens_a_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut kids = Vec::new();
        let mut parents = Vec::new();
        for d in 0..40 {
            let mut pa: Vec<u8> = (0..43).map(|_| rng.random_range(1..=4)).collect();
            // Parent Trust answers 1..=4 with varied levels; child adds one point
            // to one of the two Trust items, a +0.5 offset on the category.
            pa[37] = rng.random_range(1..=4);
            pa[38] = rng.random_range(1..=4);
            let mut ch = pa.clone();
            ch[37 + d % 2] += 1;
            kids.push(UtautResponse {
                respondent_id: format!("c{d}"),
                group: Group::Child,
                dyad_id: Some(d.to_string()),
                answers: ch,
            });
            parents.push(UtautResponse {
                respondent_id: format!("p{d}"),
                group: Group::Parent,
                dyad_id: Some(d.to_string()),
                answers: pa,
            });
        }
        let trust_row = |kids: &[UtautResponse], parents: &[UtautResponse], p| -> ComparisonRow {
            let c = compare_groups(kids, parents, &CategoryMap::default(), p).unwrap();
            c.rows.iter().find(|r| r.item == "Trust").unwrap().clone()
        };
        let ind = trust_row(&kids, &parents, Pairing::Independent);
        let dy = trust_row(&kids, &parents, Pairing::ByDyad);
        assert!((dy.children_mean - dy.parents_mean - 0.5).abs() < 1e-12);
        // Constant offsets give zero-variance differences under pairing.
        assert_eq!(dy.error.as_deref(), Some("degenerate_variance"));
        assert!(ind.p().unwrap() > 0.0);

        // Same +0.5 mean offset with per-dyad spread (0, 0.5, 0.5, 1.0).
        for (d, ch) in kids.iter_mut().enumerate() {
            let pa = &parents[d].answers;
            ch.answers[37] = pa[37] + u8::from(d % 4 != 0);
            ch.answers[38] = pa[38] + u8::from(d % 4 == 3);
        }
        let ind = trust_row(&kids, &parents, Pairing::Independent);
        let dy = trust_row(&kids, &parents, Pairing::ByDyad);
        assert!((dy.children_mean - dy.parents_mean - 0.5).abs() < 1e-12);
        let (pi, pd) = (ind.p().unwrap(), dy.p().unwrap());
        assert!(pd < pi, "by_dyad {pd} vs independent {pi}");
        let t = dy.test.as_ref().unwrap();
        let reference = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, t.df).unwrap().cdf(t.t.abs()));
        assert!((pd - reference).abs() < 1e-9);
    }

    #[test]
    fn csv_input() {
        let head: Vec<String> = (1..=43).map(|q| format!("q{q}")).collect();
        let row = |id: &str, g: &str, d: &str, v: u8| {
            let a: Vec<String> = (0..43).map(|_| v.to_string()).collect();
            format!("{id},{g},{d},{}\n", a.join(","))
        };
        let text = format!(
            "respondent_id,group,dyad_id,{}\n{}{}",
            head.join(","),
            row("c1", "child", "1", 4),
            row("p1", "parent", "", 2)
        );
        let rs = parse_utaut_csv(text.as_bytes()).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0].dyad_id.as_deref(), Some("1"));
        assert_eq!(rs[1].dyad_id, None);
        assert_eq!(rs[1].group, Group::Parent);
        let bad = text.replacen(",4,", ",9,", 1);
        assert!(matches!(parse_utaut_csv(bad.as_bytes()), Err(StatsError::InvalidResponse { .. })));
    }

    #[test]
    fn dyads_must_be_complete() {
        let kids = vec![response("c1", Group::Child, vec![3; 43])];
        let parents = vec![response("p2", Group::Parent, vec![3; 43])];
        assert!(matches!(
            compare_groups(&kids, &parents, &CategoryMap::default(), Pairing::ByDyad),
            Err(StatsError::IncompleteDyads(_))
        ));
    }
}
