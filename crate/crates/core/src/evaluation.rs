//! Output parsing and every evaluation metric: binary accuracy, ROUGE-1/2/L,
//! temporal-term frequency, and the clustering-ratio case analysis.
//!
//! ROUGE here is the F1 variant with no stemming and no stopword removal;
//! tokenization is lowercase split on non-alphanumerics (report metadata
//! states both). Term matching is case-insensitive substring with hyphens
//! treated as spaces, so "long term" matches "long-term".

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{Band, Direction, MovementLabel};

/// Bumped whenever the report CSV or summary layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("missing section header {0}")]
    MissingHeader(&'static str),
    #[error("no movement label token found in the prediction section")]
    NoLabelToken,
    #[error("prediction/actual length mismatch: {predicted} vs {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("nothing to score")]
    Empty,
}

pub const POSITIVE_HEADER: &str = "[Positive Developments]";
pub const CONCERNS_HEADER: &str = "[Potential Concerns]";
pub const PREDICTION_HEADER: &str = "[Prediction & Analysis]";

/// A parsed model output: the two factor lists, the prediction narrative,
/// and the label extracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSections {
    pub positive_developments: Vec<String>,
    pub potential_concerns: Vec<String>,
    pub prediction_analysis: String,
    pub predicted_label: MovementLabel,
    /// Soft violations (factor counts outside 2-4); never fatal.
    pub flags: Vec<String>,
}

impl AnalysisSections {
    /// Render back to the canonical three-section layout; `parse_analysis`
    /// of the result round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(POSITIVE_HEADER);
        out.push('\n');
        for bullet in &self.positive_developments {
            out.push_str(&format!("- {bullet}\n"));
        }
        out.push('\n');
        out.push_str(CONCERNS_HEADER);
        out.push('\n');
        for bullet in &self.potential_concerns {
            out.push_str(&format!("- {bullet}\n"));
        }
        out.push('\n');
        out.push_str(PREDICTION_HEADER);
        out.push('\n');
        out.push_str(&self.prediction_analysis);
        out.push('\n');
        out
    }
}

fn find_case_insensitive(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .to_lowercase()
        .find(&needle.to_lowercase())
}

fn bullets_of(section: &str) -> Vec<String> {
    section
        .lines()
        .map(str::trim)
        .filter_map(|line| {
            let stripped = line
                .strip_prefix("- ")
                .or_else(|| line.strip_prefix("* "))
                .or_else(|| {
                    line.split_once(". ").and_then(|(n, rest)| {
                        n.chars().all(|c| c.is_ascii_digit()).then_some(rest)
                    })
                })?;
            let text = stripped.trim();
            (!text.is_empty()).then(|| text.to_string())
        })
        .collect()
}

/// Scan for movement-label tokens (`U1`..`U5+`, `D1`..`D5+`,
/// case-insensitive, word-bounded) and return them in order of appearance.
pub fn find_label_tokens(text: &str) -> Vec<MovementLabel> {
    let chars: Vec<char> = text.chars().collect();
    let mut found = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, 'U' | 'u' | 'D' | 'd') {
            let bounded_left = i == 0 || !chars[i - 1].is_alphanumeric();
            if bounded_left && i + 1 < chars.len() && ('1'..='5').contains(&chars[i + 1]) {
                let digit = chars[i + 1];
                let mut end = i + 2;
                let mut plus = false;
                if digit == '5' && end < chars.len() && chars[end] == '+' {
                    plus = true;
                    end += 1;
                }
                let bounded_right = end >= chars.len() || !chars[end].is_alphanumeric();
                if bounded_right {
                    let direction = if matches!(c, 'U' | 'u') {
                        Direction::Up
                    } else {
                        Direction::Down
                    };
                    let band = match (digit, plus) {
                        ('1', _) => Band::One,
                        ('2', _) => Band::Two,
                        ('3', _) => Band::Three,
                        ('4', _) => Band::Four,
                        ('5', false) => Band::Five,
                        ('5', true) => Band::FivePlus,
                        _ => unreachable!(),
                    };
                    found.push(MovementLabel { direction, band });
                    i = end;
                    continue;
                }
            }
        }
        i += 1;
    }
    found
}

/// Split a model output on the three bracketed headers, in order, and
/// extract the first label token from the prediction section.
pub fn parse_analysis(text: &str) -> Result<AnalysisSections, EvalError> {
    let pos_at =
        find_case_insensitive(text, POSITIVE_HEADER).ok_or(EvalError::MissingHeader(POSITIVE_HEADER))?;
    let after_pos = &text[pos_at + POSITIVE_HEADER.len()..];
    let con_rel = find_case_insensitive(after_pos, CONCERNS_HEADER)
        .ok_or(EvalError::MissingHeader(CONCERNS_HEADER))?;
    let after_con = &after_pos[con_rel + CONCERNS_HEADER.len()..];
    let pred_rel = find_case_insensitive(after_con, PREDICTION_HEADER)
        .ok_or(EvalError::MissingHeader(PREDICTION_HEADER))?;

    let positive_section = &after_pos[..con_rel];
    let concerns_section = &after_con[..pred_rel];
    let prediction_analysis = after_con[pred_rel + PREDICTION_HEADER.len()..]
        .trim()
        .to_string();

    let positive_developments = bullets_of(positive_section);
    let potential_concerns = bullets_of(concerns_section);
    let predicted_label = find_label_tokens(&prediction_analysis)
        .into_iter()
        .next()
        .ok_or(EvalError::NoLabelToken)?;

    let mut flags = Vec::new();
    for (name, bullets) in [
        ("positive developments", &positive_developments),
        ("potential concerns", &potential_concerns),
    ] {
        if !(2..=4).contains(&bullets.len()) {
            flags.push(format!("{name} has {} factors, expected 2-4", bullets.len()));
        }
    }

    Ok(AnalysisSections {
        positive_developments,
        potential_concerns,
        prediction_analysis,
        predicted_label,
        flags,
    })
}

/// Share of pairs whose up/down direction matches.
pub fn binary_accuracy(
    predicted: &[MovementLabel],
    actual: &[MovementLabel],
) -> Result<f64, EvalError> {
    if predicted.is_empty() || actual.is_empty() {
        return Err(EvalError::Empty);
    }
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p.direction == a.direction)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

fn rouge_tokens(text: &str) -> Vec<String> {
    crate::embedding::tokenize(text)
}

fn f1(overlap: f64, candidate_total: f64, reference_total: f64) -> f64 {
    if candidate_total == 0.0 || reference_total == 0.0 {
        return 0.0;
    }
    let precision = overlap / candidate_total;
    let recall = overlap / reference_total;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// ROUGE-N F1 over n-gram multiset overlap, `n` in {1, 2}. Empty candidate
/// or reference scores 0.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    assert!(n == 1 || n == 2, "rouge_n supports n in {{1, 2}}");
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    if cand.len() < n || refr.len() < n {
        return 0.0;
    }
    fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
        let mut map: HashMap<&[String], usize> = HashMap::new();
        for gram in tokens.windows(n) {
            *map.entry(gram).or_default() += 1;
        }
        map
    }
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, count)| count.min(ref_counts.get(*gram).unwrap_or(&0)))
        .sum();
    f1(
        overlap as f64,
        (cand.len() - n + 1) as f64,
        (refr.len() - n + 1) as f64,
    )
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence of token sequences.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = rouge_tokens(candidate);
    let refr = rouge_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(&cand, &refr) as f64;
    f1(lcs, cand.len() as f64, refr.len() as f64)
}

fn normalize_for_terms(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = false;
    for c in text.to_lowercase().chars() {
        let c = if c == '-' { ' ' } else { c };
        if c.is_whitespace() {
            if !last_space {
                out.push(' ');
            }
            last_space = true;
        } else {
            out.push(c);
            last_space = false;
        }
    }
    out
}

/// Per term, the fraction of outputs whose prediction section contains it
/// (case-insensitive, hyphen-insensitive).
pub fn term_frequency(
    outputs: &[AnalysisSections],
    terms: &[String],
) -> Result<BTreeMap<String, f64>, EvalError> {
    if outputs.is_empty() {
        return Err(EvalError::Empty);
    }
    let normalized: Vec<String> = outputs
        .iter()
        .map(|o| normalize_for_terms(&o.prediction_analysis))
        .collect();
    let mut freq = BTreeMap::new();
    for term in terms {
        let needle = normalize_for_terms(term);
        let hits = normalized.iter().filter(|t| t.contains(&needle)).count();
        freq.insert(term.clone(), hits as f64 / outputs.len() as f64);
    }
    Ok(freq)
}

/// Week-level comparison of the two methods' prediction outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseClass {
    /// HG-NC correct, HG incorrect.
    Case1,
    /// HG correct, HG-NC incorrect.
    Case2,
    /// Both methods agree (both correct or both incorrect).
    Case3,
}

impl std::fmt::Display for CaseClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CaseClass::Case1 => f.write_str("case1"),
            CaseClass::Case2 => f.write_str("case2"),
            CaseClass::Case3 => f.write_str("case3"),
        }
    }
}

pub fn case_classification(hg_correct: bool, hgnc_correct: bool) -> CaseClass {
    match (hg_correct, hgnc_correct) {
        (false, true) => CaseClass::Case1,
        (true, false) => CaseClass::Case2,
        _ => CaseClass::Case3,
    }
}

/// One week of the ratio/case report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioWeek {
    pub window_start: chrono::NaiveDate,
    pub clustering_ratio: f64,
    pub case: CaseClass,
}

/// Ratio/case summary: per-week rows plus the counts the case study keys on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub weeks: Vec<RatioWeek>,
    pub case1_count: usize,
    pub case2_count: usize,
    pub case3_count: usize,
    /// Case-1 weeks whose clustering ratio exceeds 0.5.
    pub case1_high_ratio: usize,
    /// Case-2 weeks whose clustering ratio falls below 0.4.
    pub case2_low_ratio: usize,
}

pub fn ratio_report(weeks: Vec<RatioWeek>) -> RatioReport {
    let count = |case: CaseClass| weeks.iter().filter(|w| w.case == case).count();
    let case1_high_ratio = weeks
        .iter()
        .filter(|w| w.case == CaseClass::Case1 && w.clustering_ratio > 0.5)
        .count();
    let case2_low_ratio = weeks
        .iter()
        .filter(|w| w.case == CaseClass::Case2 && w.clustering_ratio < 0.4)
        .count();
    RatioReport {
        case1_count: count(CaseClass::Case1),
        case2_count: count(CaseClass::Case2),
        case3_count: count(CaseClass::Case3),
        case1_high_ratio,
        case2_low_ratio,
        weeks,
    }
}

/// One scored (prediction, reference) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub ticker: String,
    pub window_start: chrono::NaiveDate,
    pub actual: MovementLabel,
    pub predicted: MovementLabel,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

/// Aggregate metrics over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_observations: usize,
    pub binary_accuracy: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub term_freq: BTreeMap<String, f64>,
    pub examples: Vec<ScoredExample>,
}

impl EvaluationReport {
    /// Assemble the report from scored pairs and parsed outputs.
    pub fn build(
        examples: Vec<ScoredExample>,
        outputs: &[AnalysisSections],
        terms: &[String],
    ) -> Result<EvaluationReport, EvalError> {
        if examples.is_empty() {
            return Err(EvalError::Empty);
        }
        let predicted: Vec<MovementLabel> = examples.iter().map(|e| e.predicted).collect();
        let actual: Vec<MovementLabel> = examples.iter().map(|e| e.actual).collect();
        let accuracy = binary_accuracy(&predicted, &actual)?;
        let mean = |f: fn(&ScoredExample) -> f64| -> f64 {
            examples.iter().map(f).sum::<f64>() / examples.len() as f64
        };
        let term_freq = term_frequency(outputs, terms)?;
        Ok(EvaluationReport {
            n_observations: examples.len(),
            binary_accuracy: accuracy,
            rouge1: mean(|e| e.rouge1),
            rouge2: mean(|e| e.rouge2),
            rouge_l: mean(|e| e.rouge_l),
            term_freq,
            examples,
        })
    }

    /// Per-example CSV:
    /// `ticker,window_start,actual_label,predicted_label,direction_correct,rouge1,rouge2,rouge_l`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "ticker,window_start,actual_label,predicted_label,direction_correct,rouge1,rouge2,rouge_l"
        )?;
        for e in &self.examples {
            writeln!(
                out,
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                e.ticker,
                e.window_start,
                e.actual,
                e.predicted,
                e.predicted.direction == e.actual.direction,
                e.rouge1,
                e.rouge2,
                e.rouge_l
            )?;
        }
        Ok(())
    }

    /// The human-readable summary, conventions stated up front.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("report_schema_version: {REPORT_SCHEMA_VERSION}\n"));
        out.push_str("rouge_variant: F1, no stemming, no stopword removal\n");
        out.push_str("tokenization: lowercase, split on non-alphanumerics\n");
        out.push_str(
            "weekly_return_convention: prior week final close to current week final close\n",
        );
        out.push_str(&format!("n_observations: {}\n", self.n_observations));
        out.push_str(&format!("binary_accuracy: {:.4}\n", self.binary_accuracy));
        out.push_str(&format!("rouge1: {:.4}\n", self.rouge1));
        out.push_str(&format!("rouge2: {:.4}\n", self.rouge2));
        out.push_str(&format!("rouge_l: {:.4}\n", self.rouge_l));
        for (term, freq) in &self.term_freq {
            out.push_str(&format!("term_frequency[{term}]: {freq:.4}\n"));
        }
        out
    }
}

/// Ratio/case rows as CSV: `window_start,ratio,case`.
pub fn write_ratio_csv<W: std::io::Write>(mut out: W, report: &RatioReport) -> std::io::Result<()> {
    writeln!(out, "window_start,ratio,case")?;
    for week in &report.weeks {
        writeln!(
            out,
            "{},{:.2},{}",
            week.window_start, week.clustering_ratio, week.case
        )?;
    }
    Ok(())
}
