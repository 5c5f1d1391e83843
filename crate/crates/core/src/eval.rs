//! Batch evaluation: exact match, token F1 and retrieval hit@k over
//! question/answer triples.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::QaPair;
use crate::pipeline::{AskOptions, Engine, PipelineError, DEFAULT_ANSWERS};
use crate::textproc::normalize_answer;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate: no question/answer pairs")]
    NoPairs,
    #[error("question {index}: {source}")]
    Pipeline {
        index: usize,
        #[source]
        source: PipelineError,
    },
}

/// 1.0 when the normalized strings are equal, else 0.0.
pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Harmonic mean of token precision and recall with multiset overlap.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred = normalize_answer(pred);
    let gold = normalize_answer(gold);
    let pred_toks: Vec<&str> = pred.split_whitespace().collect();
    let gold_toks: Vec<&str> = gold.split_whitespace().collect();
    match (pred_toks.is_empty(), gold_toks.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_toks {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_toks {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_toks.len() as f64;
    let recall = common as f64 / gold_toks.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question: String,
    pub gold: String,
    /// Top-1 answer, empty when the pipeline fell back.
    pub predicted: String,
    /// Reader confidence of `predicted` (0 when empty).
    pub score: f64,
    pub em: f64,
    pub f1: f64,
    pub hit: f64,
    /// Best EM / F1 over every returned answer.
    pub em_any: f64,
    pub f1_any: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LenientScores {
    pub n_answers: usize,
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_questions: usize,
    pub exact_match: f64,
    pub f1: f64,
    pub hit_at_k: f64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub any_of_answers: Option<LenientScores>,
    pub per_question: Vec<QuestionResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn from_results(k: usize, per_question: Vec<QuestionResult>, lenient: bool) -> Self {
        let any_of_answers = lenient.then(|| LenientScores {
            n_answers: DEFAULT_ANSWERS,
            exact_match: mean(per_question.iter().map(|q| q.em_any)),
            f1: mean(per_question.iter().map(|q| q.f1_any)),
        });
        Self {
            n_questions: per_question.len(),
            exact_match: mean(per_question.iter().map(|q| q.em)),
            f1: mean(per_question.iter().map(|q| q.f1)),
            hit_at_k: mean(per_question.iter().map(|q| q.hit)),
            k,
            any_of_answers,
            per_question,
        }
    }

    /// Question / answer / score table, one row per question.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<4} | {:<50} | {:<30} | {:>6} | {:>3} | {:>6} | {:>3}",
            "Case", "Question", "Answer", "Score", "EM", "F1", "Hit"
        );
        let _ = writeln!(out, "{}", "-".repeat(121));
        for (i, q) in self.per_question.iter().enumerate() {
            let answer = if q.predicted.is_empty() {
                "-"
            } else {
                q.predicted.as_str()
            };
            let _ = writeln!(
                out,
                "{:<4} | {:<50} | {:<30} | {:>6.4} | {:>3} | {:>6.4} | {:>3}",
                i + 1,
                truncate(&q.question, 50),
                truncate(answer, 30),
                q.score,
                q.em,
                q.f1,
                q.hit
            );
        }
        let _ = writeln!(out, "{}", "-".repeat(121));
        let _ = writeln!(
            out,
            "questions: {}  EM: {:.4}  F1: {:.4}  hit@{}: {:.4}",
            self.n_questions, self.exact_match, self.f1, self.k, self.hit_at_k
        );
        if let Some(l) = &self.any_of_answers {
            let _ = writeln!(
                out,
                "any-of-{}:  EM: {:.4}  F1: {:.4}",
                l.n_answers, l.exact_match, l.f1
            );
        }
        out
    }
}

fn truncate(s: &str, width: usize) -> String {
    if s.chars().count() <= width {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(width - 1).collect();
        t.push('…');
        t
    }
}

/// Runs every pair through the pipeline. `pairs` should already have gold
/// documents resolved; an empty `gold_doc_id` counts as a retrieval miss.
pub async fn evaluate(engine: &Engine, pairs: &[QaPair], k: usize, lenient: bool) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let opts = AskOptions {
        k_docs: k,
        n_answers: DEFAULT_ANSWERS,
    };
    let mut results = Vec::with_capacity(pairs.len());
    for (index, pair) in pairs.iter().enumerate() {
        let trace = engine
            .ask_traced(&pair.question, opts)
            .await
            .map_err(|source| EvalError::Pipeline { index, source })?;
        let top = trace.response.answers.first();
        let predicted = top.map(|a| a.answer.clone()).unwrap_or_default();
        let hit = !pair.gold_doc_id.is_empty() && trace.retrieved.iter().any(|d| d.doc_id == pair.gold_doc_id);
        let answers = &trace.response.answers;
        results.push(QuestionResult {
            question: pair.question.clone(),
            gold: pair.gold_answer.clone(),
            em: exact_match(&predicted, &pair.gold_answer),
            f1: token_f1(&predicted, &pair.gold_answer),
            score: top.map_or(0.0, |a| a.score),
            predicted,
            hit: if hit { 1.0 } else { 0.0 },
            em_any: answers
                .iter()
                .map(|a| exact_match(&a.answer, &pair.gold_answer))
                .fold(0.0, f64::max),
            f1_any: answers
                .iter()
                .map(|a| token_f1(&a.answer, &pair.gold_answer))
                .fold(0.0, f64::max),
        });
    }
    Ok(EvalReport::from_results(k, results, lenient))
}
