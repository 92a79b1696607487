use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AmrError, AmrGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    RelationsOnly,
    RelationsAndConcepts,
}

/// Extra tokens an AMR encoder treats as atomic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrVocab {
    pub mode: VocabMode,
    pub special_tokens: BTreeSet<String>,
}

impl AmrVocab {
    pub fn contains(&self, token: &str) -> bool {
        self.special_tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.special_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.special_tokens.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.special_tokens.iter().map(String::as_str).filter(|t| t.starts_with(':'))
    }

    /// Adds relation labels that should be known regardless of the corpus.
    pub fn extend_relations<'a>(&mut self, relations: impl IntoIterator<Item = &'a str>) {
        self.special_tokens.extend(relations.into_iter().map(str::to_string));
    }
}

pub fn build_vocab(corpus: &[AmrGraph], mode: VocabMode) -> Result<AmrVocab, AmrError> {
    if corpus.is_empty() {
        return Err(AmrError::EmptyCorpus);
    }
    let mut special_tokens = BTreeSet::new();
    for g in corpus {
        special_tokens.extend(g.edges().iter().map(|e| e.relation.clone()));
        if mode == VocabMode::RelationsAndConcepts {
            special_tokens.extend(g.nodes().iter().map(|n| n.concept.clone()));
        }
    }
    Ok(AmrVocab { mode, special_tokens })
}

/// Core AMR relation inventory, including common inverse roles.
pub const STANDARD_RELATIONS: &[&str] = &[
    ":ARG0", ":ARG1", ":ARG2", ":ARG3", ":ARG4", ":ARG5", ":ARG0-of", ":ARG1-of", ":ARG2-of", ":ARG3-of",
    ":ARG4-of", ":accompanier", ":age", ":beneficiary", ":cause", ":concession", ":condition", ":consist-of",
    ":degree", ":destination", ":direction", ":domain", ":duration", ":example", ":extent", ":frequency",
    ":instrument", ":li", ":location", ":manner", ":medium", ":mod", ":mode", ":name", ":op1", ":op2", ":op3",
    ":op4", ":op5", ":ord", ":part", ":path", ":polarity", ":polite", ":poss", ":purpose", ":quant", ":range",
    ":scale", ":source", ":subevent", ":time", ":topic", ":unit", ":value", ":wiki", ":day", ":month", ":year",
    ":weekday", ":dayperiod", ":snt1", ":snt2", ":snt3", ":snt4", ":snt5", ":location-of", ":mod-of",
    ":part-of", ":poss-of", ":quant-of", ":time-of", ":topic-of", ":purpose-of", ":domain-of",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_node_has_no_relations() {
        let g = parse_penman("(a / appeal-01)").unwrap();
        assert!(build_vocab(&[g], VocabMode::RelationsOnly).unwrap().is_empty());
    }

    #[test]
    fn relations_and_concepts() {
        let g = parse_penman("(a / appeal-01 :ARG0 (d / district))").unwrap();
        let r = build_vocab(std::slice::from_ref(&g), VocabMode::RelationsOnly).unwrap();
        assert_eq!(r.special_tokens, set(&[":ARG0"]));
        let rc = build_vocab(&[g], VocabMode::RelationsAndConcepts).unwrap();
        assert_eq!(rc.special_tokens, set(&[":ARG0", "appeal-01", "district"]));
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(build_vocab(&[], VocabMode::RelationsOnly), Err(AmrError::EmptyCorpus));
    }
}
