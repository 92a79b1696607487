//! Dataset records, loading/validation and proportional training splits.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    SchemaError { line: usize, reason: String },
    #[error("proportion must lie in (0, 1], got {0}")]
    BadProportion(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub start: usize,
    pub end: usize,
    pub event_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Argument {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

/// One event mention: passage tokens, trigger, and gold arguments.
///
/// `doc_id` names the passage; instances sharing it must share `tokens`.
/// Spans are half-open token ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventInstance {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub trigger: Trigger,
    #[serde(default)]
    pub arguments: Vec<Argument>,
    /// Penman text of the passage graph when shipped inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amr: Option<String>,
}

/// Identifies an event mention for scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceKey {
    pub doc_id: String,
    pub trigger_start: usize,
    pub trigger_end: usize,
    pub event_type: String,
}

impl EventInstance {
    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            doc_id: self.doc_id.clone(),
            trigger_start: self.trigger.start,
            trigger_end: self.trigger.end,
            event_type: self.trigger.event_type.clone(),
        }
    }

    /// Space-joined tokens of `[start, end)`; empty when out of range.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        self.tokens.get(start..end).map(|t| t.join(" ")).unwrap_or_default()
    }

    pub fn trigger_text(&self) -> String {
        self.span_text(self.trigger.start, self.trigger.end)
    }

    pub fn passage_text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("empty doc_id".into());
        }
        let n = self.tokens.len();
        let t = &self.trigger;
        if !(t.start < t.end && t.end <= n) {
            return Err(format!("trigger span [{}, {}) outside 0..{n}", t.start, t.end));
        }
        if t.event_type.is_empty() {
            return Err("empty event_type".into());
        }
        for a in &self.arguments {
            if !(a.start < a.end && a.end <= n) {
                return Err(format!("argument span [{}, {}) outside 0..{n}", a.start, a.end));
            }
            if a.role.is_empty() {
                return Err("argument with empty role".into());
            }
        }
        Ok(())
    }
}

/// Parses line-delimited JSON records, rejecting any that violate the
/// span invariants. Blank lines are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<EventInstance>, DataError> {
    read_lines(text.lines().map(|l| Ok(l.to_string())))
}

pub fn load_dataset(path: &Path) -> Result<Vec<EventInstance>, DataError> {
    let file = fs::File::open(path)?;
    read_lines(BufReader::new(file).lines())
}

fn read_lines(lines: impl Iterator<Item = std::io::Result<String>>) -> Result<Vec<EventInstance>, DataError> {
    let mut out: Vec<EventInstance> = Vec::new();
    let mut passages: HashMap<String, usize> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: EventInstance = serde_json::from_str(&line)
            .map_err(|e| DataError::SchemaError { line: line_no, reason: e.to_string() })?;
        inst.validate().map_err(|reason| DataError::SchemaError { line: line_no, reason })?;
        if let Some(&first) = passages.get(&inst.doc_id) {
            if out[first].tokens != inst.tokens {
                return Err(DataError::SchemaError {
                    line: line_no,
                    reason: format!("doc_id `{}` reused with different tokens", inst.doc_id),
                });
            }
        } else {
            passages.insert(inst.doc_id.clone(), out.len());
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn to_jsonl(instances: &[EventInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(path: &Path, instances: &[EventInstance]) -> Result<(), DataError> {
    fs::write(path, to_jsonl(instances))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub proportion: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl SplitSpec {
    /// Proportions used for the low-resource learning curves.
    pub const STANDARD: [f64; 6] = [0.05, 0.10, 0.20, 0.30, 0.50, 1.0];

    pub fn new(proportion: f64, seed: u64) -> Result<Self, DataError> {
        if !(proportion > 0.0 && proportion <= 1.0) {
            return Err(DataError::BadProportion(proportion));
        }
        Ok(Self { proportion, seed })
    }

    pub fn full() -> Self {
        Self { proportion: 1.0, seed: 0 }
    }

    pub fn size_for(&self, n: usize) -> usize {
        // Guard against 0.05 * 100 = 5.000000000000001.
        let raw = self.proportion * n as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

/// Uniform sample of `ceil(p * N)` instances without replacement, returned
/// in corpus order. All proportions under one seed share a single
/// permutation, so smaller splits are subsets of larger ones.
pub fn split_proportion(instances: &[EventInstance], spec: &SplitSpec) -> Vec<EventInstance> {
    let n = instances.len();
    let k = spec.size_for(n);
    if k == n {
        return instances.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| instances[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1_line() -> &'static str {
        r#"{"doc_id":"fig1","tokens":["the","districts","in","washington","will","appeal","the","ruling","to","the","u.s.","supreme","court","."],"trigger":{"start":5,"end":6,"event_type":"Justice:Appeal"},"arguments":[{"start":1,"end":2,"role":"Plaintiff"},{"start":3,"end":4,"role":"Place"},{"start":10,"end":13,"role":"Adjudicator"}]}"#
    }

    fn toy(n: usize) -> Vec<EventInstance> {
        (0..n)
            .map(|i| EventInstance {
                doc_id: format!("d{i}"),
                tokens: vec!["a".into(), "b".into()],
                trigger: Trigger { start: 0, end: 1, event_type: "E".into() },
                arguments: vec![],
                amr: None,
            })
            .collect()
    }

    #[test]
    fn loads_figure_instance() {
        let d = parse_dataset(fig1_line()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].arguments.len(), 3);
        let roles: Vec<_> = d[0].arguments.iter().map(|a| a.role.as_str()).collect();
        assert_eq!(roles, ["Plaintiff", "Place", "Adjudicator"]);
        assert_eq!(d[0].span_text(10, 13), "u.s. supreme court");
    }

    #[test]
    fn empty_input() {
        assert!(parse_dataset("").unwrap().is_empty());
    }

    #[test]
    fn span_past_end_is_schema_error() {
        let bad = fig1_line().replace(r#""start":10,"end":13"#, r#""start":10,"end":15"#);
        let text = format!("{}\n{}", fig1_line().replace("fig1", "ok"), bad);
        match parse_dataset(&text) {
            Err(DataError::SchemaError { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn shared_doc_id_must_share_tokens() {
        let other = fig1_line().replace(r#""the","districts""#, r#""a","districts""#);
        let text = format!("{}\n{}", fig1_line(), other);
        assert!(matches!(parse_dataset(&text), Err(DataError::SchemaError { line: 2, .. })));
    }

    #[test]
    fn reserialization_is_byte_stable() {
        let text = to_jsonl(&parse_dataset(fig1_line()).unwrap());
        assert_eq!(to_jsonl(&parse_dataset(&text).unwrap()), text);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy(100);
        let five = split_proportion(&d, &SplitSpec::new(0.05, 3).unwrap());
        assert_eq!(five.len(), 5);
        assert_eq!(five, split_proportion(&d, &SplitSpec::new(0.05, 3).unwrap()));
        assert_eq!(split_proportion(&d, &SplitSpec::new(1.0, 3).unwrap()), d);
        assert!(SplitSpec::new(0.0, 1).is_err());
        assert!(SplitSpec::new(1.5, 1).is_err());
    }

    #[test]
    fn splits_are_nested() {
        let d = toy(57);
        let mut prev: Vec<String> = Vec::new();
        for p in SplitSpec::STANDARD {
            let ids: Vec<String> =
                split_proportion(&d, &SplitSpec::new(p, 11).unwrap()).into_iter().map(|i| i.doc_id).collect();
            assert!(prev.iter().all(|x| ids.contains(x)), "split {p} not a superset");
            prev = ids;
        }
    }
}
