//! Argument identification / classification scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EventInstance, InstanceKey};
use crate::text::tokenize;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction and gold keys differ: {0}")]
    KeyMismatch(String),
}

/// Half-open token span; `None` marks a predicted string that does not
/// occur in the passage.
pub type Span = Option<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoredArgument {
    pub span: Span,
    pub role: String,
}

/// Predicted arguments of one event mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: InstanceKey,
    pub arguments: Vec<ScoredArgument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct_i: usize,
    pub correct_c: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            gold: self.gold + o.gold,
            predicted: self.predicted + o.predicted,
            correct_i: self.correct_i + o.correct_i,
            correct_c: self.correct_c + o.correct_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub arg_i: Prf,
    pub arg_c: Prf,
    pub counts: Counts,
}

impl ScoreReport {
    pub fn from_counts(counts: Counts) -> Self {
        Self {
            arg_i: Prf::from_counts(counts.correct_i, counts.predicted, counts.gold),
            arg_c: Prf::from_counts(counts.correct_c, counts.predicted, counts.gold),
            counts,
        }
    }
}

/// Span of the first occurrence of each string's tokens in the passage.
pub fn match_spans(predicted: &[String], instance: &EventInstance) -> Vec<Span> {
    predicted
        .iter()
        .map(|s| {
            let needle = tokenize(s);
            if needle.is_empty() || needle.len() > instance.tokens.len() {
                return None;
            }
            instance.tokens.windows(needle.len()).position(|w| w == needle.as_slice()).map(|i| (i, i + needle.len()))
        })
        .collect()
}

/// Gold arguments of an instance in scoring form.
pub fn gold_arguments(instance: &EventInstance) -> Vec<ScoredArgument> {
    instance
        .arguments
        .iter()
        .map(|a| ScoredArgument { span: Some((a.start, a.end)), role: a.role.clone() })
        .collect()
}

/// Counts for one instance. Each prediction is matched greedily, in order,
/// to the first still-unmatched gold item that agrees on the span (Arg-I)
/// or on span and role (Arg-C). Unresolved spans never match.
pub fn count_matches(predicted: &[ScoredArgument], gold: &[ScoredArgument]) -> Counts {
    let greedy = |same: &dyn Fn(&ScoredArgument, &ScoredArgument) -> bool| {
        let mut used = vec![false; gold.len()];
        let mut hits = 0;
        for p in predicted.iter().filter(|p| p.span.is_some()) {
            if let Some(j) = (0..gold.len()).find(|&j| !used[j] && same(p, &gold[j])) {
                used[j] = true;
                hits += 1;
            }
        }
        hits
    };
    Counts {
        gold: gold.len(),
        predicted: predicted.len(),
        correct_i: greedy(&|p, g| p.span == g.span),
        correct_c: greedy(&|p, g| p.span == g.span && p.role == g.role),
    }
}

/// Micro-averaged Arg-I / Arg-C over a corpus. Every gold key must have
/// exactly one prediction and vice versa.
pub fn score(predictions: &[Prediction], gold: &[EventInstance]) -> Result<ScoreReport, EvalError> {
    let mut by_key: BTreeMap<InstanceKey, Vec<ScoredArgument>> = BTreeMap::new();
    for inst in gold {
        by_key.entry(inst.key()).or_default().extend(gold_arguments(inst));
    }
    let pred_keys: BTreeSet<&InstanceKey> = predictions.iter().map(|p| &p.key).collect();
    let gold_keys: BTreeSet<&InstanceKey> = by_key.keys().collect();
    if pred_keys != gold_keys || pred_keys.len() != predictions.len() {
        let missing: Vec<_> = gold_keys.difference(&pred_keys).map(|k| k.doc_id.as_str()).collect();
        let extra: Vec<_> = pred_keys.difference(&gold_keys).map(|k| k.doc_id.as_str()).collect();
        return Err(EvalError::KeyMismatch(format!(
            "missing {missing:?}, unexpected {extra:?}, {} predictions for {} keys",
            predictions.len(),
            pred_keys.len()
        )));
    }
    let counts = predictions
        .iter()
        .map(|p| count_matches(&p.arguments, &by_key[&p.key]))
        .fold(Counts::default(), |a, b| a + b);
    Ok(ScoreReport::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_dataset;

    fn fig1() -> EventInstance {
        let line = r#"{"doc_id":"fig1","tokens":["the","districts","in","washington","will","appeal","the","ruling","to","the","u.s.","supreme","court","."],"trigger":{"start":5,"end":6,"event_type":"Justice:Appeal"},"arguments":[{"start":1,"end":2,"role":"Plaintiff"},{"start":3,"end":4,"role":"Place"},{"start":10,"end":13,"role":"Adjudicator"}]}"#;
        parse_dataset(line).unwrap().remove(0)
    }

    #[test]
    fn spans_first_occurrence() {
        let inst = fig1();
        let spans = match_spans(&["districts".into(), "nowhere".into(), "the".into(), "u.s. supreme court".into()], &inst);
        assert_eq!(spans, vec![Some((1, 2)), None, Some((0, 1)), Some((10, 13))]);
    }

    #[test]
    fn perfect_and_empty() {
        let inst = fig1();
        let perfect = Prediction { key: inst.key(), arguments: gold_arguments(&inst) };
        let r = score(&[perfect], std::slice::from_ref(&inst)).unwrap();
        assert_eq!((r.arg_i.f1, r.arg_c.f1), (1.0, 1.0));
        let empty = Prediction { key: inst.key(), arguments: vec![] };
        let r = score(&[empty], std::slice::from_ref(&inst)).unwrap();
        assert_eq!((r.arg_i.precision, r.arg_i.recall, r.arg_i.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_wrong_role() {
        let gold = [
            ScoredArgument { span: Some((0, 1)), role: "A".into() },
            ScoredArgument { span: Some((2, 3)), role: "B".into() },
        ];
        let pred = [
            ScoredArgument { span: Some((0, 1)), role: "A".into() },
            ScoredArgument { span: Some((2, 3)), role: "A".into() },
        ];
        let r = ScoreReport::from_counts(count_matches(&pred, &gold));
        assert_eq!(r.arg_i.f1, 1.0);
        assert_eq!(r.arg_c.f1, 0.5);
    }

    #[test]
    fn key_mismatch() {
        let inst = fig1();
        let mut key = inst.key();
        key.doc_id = "other".into();
        let p = Prediction { key, arguments: vec![] };
        assert!(matches!(score(&[p], &[inst]), Err(EvalError::KeyMismatch(_))));
    }
}
