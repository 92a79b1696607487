use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{AmrEdge, AmrError, AmrGraph, AmrNode, Target};

/// Tokens that carry graph structure rather than content.
pub const STRUCTURE_TOKENS: [&str; 3] = ["(", ")", "/"];

/// Depth-first token sequence of an AMR graph.
///
/// Grammar: `node := "(" [VAR "/"] CONCEPT (RELATION target)* ")"` and
/// `target := node | VAR | CONSTANT`. Variable ids appear only for
/// reentrant nodes: once as `VAR "/"` where the node is expanded, and as a
/// bare `VAR` token at every later mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedAmr {
    pub tokens: Vec<String>,
}

impl LinearizedAmr {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_relation(token: &str) -> bool {
        token.len() > 1 && token.starts_with(':')
    }
}

pub fn linearize(g: &AmrGraph) -> LinearizedAmr {
    let reentrant: HashSet<&str> =
        g.in_degrees().into_iter().filter(|(_, d)| *d > 1).map(|(v, _)| v).collect();
    let mut tokens = Vec::new();
    let mut emitted = HashSet::new();
    emit(g, g.root(), &reentrant, &mut emitted, &mut tokens);
    LinearizedAmr { tokens }
}

fn emit<'a>(
    g: &'a AmrGraph,
    var: &'a str,
    reentrant: &HashSet<&str>,
    emitted: &mut HashSet<&'a str>,
    out: &mut Vec<String>,
) {
    emitted.insert(var);
    out.push("(".into());
    if reentrant.contains(var) {
        out.push(var.to_string());
        out.push("/".into());
    }
    out.push(g.concept_of(var).expect("validated").to_string());
    for e in g.edges_from(var) {
        out.push(e.relation.clone());
        match &e.target {
            Target::Var(t) if emitted.contains(t.as_str()) => out.push(t.clone()),
            Target::Var(t) => emit(g, t, reentrant, emitted, out),
            Target::Const(c) => out.push(c.clone()),
        }
    }
    out.push(")".into());
}

struct Reader<'a> {
    toks: &'a [String],
    pos: usize,
    declared: HashSet<&'a str>,
    fresh: usize,
    taken: HashSet<&'a str>,
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
}

fn malformed(index: usize, reason: impl Into<String>) -> AmrError {
    AmrError::MalformedSequence { index, reason: reason.into() }
}

impl<'a> Reader<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn fresh_var(&mut self) -> String {
        loop {
            let v = format!("n{}", self.fresh);
            self.fresh += 1;
            if !self.taken.contains(v.as_str()) {
                return v;
            }
        }
    }

    fn is_content(tok: &str) -> bool {
        !STRUCTURE_TOKENS.contains(&tok) && !LinearizedAmr::is_relation(tok)
    }

    fn node(&mut self) -> Result<String, AmrError> {
        if self.peek() != Some("(") {
            return Err(malformed(self.pos, "expected '('"));
        }
        self.pos += 1;
        let var = if self.toks.get(self.pos + 1).map(String::as_str) == Some("/") {
            let v = self.peek().filter(|t| Self::is_content(t)).ok_or_else(|| malformed(self.pos, "bad variable"))?;
            self.pos += 2;
            v.to_string()
        } else {
            self.fresh_var()
        };
        let concept = match self.peek() {
            Some(t) if Self::is_content(t) => t.to_string(),
            Some(t) => return Err(malformed(self.pos, format!("expected a concept, found `{t}`"))),
            None => return Err(malformed(self.pos, "sequence ends inside a node")),
        };
        self.pos += 1;
        if self.nodes.iter().any(|n| n.var == var) {
            return Err(malformed(self.pos, format!("variable `{var}` declared twice")));
        }
        self.nodes.push(AmrNode { var: var.clone(), concept });
        loop {
            match self.peek() {
                Some(")") => {
                    self.pos += 1;
                    return Ok(var);
                }
                Some(rel) if LinearizedAmr::is_relation(rel) => {
                    self.pos += 1;
                    let target = match self.peek() {
                        Some("(") => Target::Var(self.node()?),
                        Some(t) if Self::is_content(t) => {
                            self.pos += 1;
                            if self.declared.contains(t) {
                                Target::Var(t.to_string())
                            } else {
                                Target::Const(t.to_string())
                            }
                        }
                        _ => return Err(malformed(self.pos, format!("relation `{rel}` has no target"))),
                    };
                    self.edges.push(AmrEdge { source: var.clone(), relation: rel.to_string(), target });
                }
                Some(t) => return Err(malformed(self.pos, format!("expected a relation or ')', found `{t}`"))),
                None => return Err(malformed(self.pos, "unbalanced parentheses")),
            }
        }
    }
}

/// Rebuilds a graph from its linearization. Variables dropped by
/// [`linearize`] are replaced by fresh ids `n0`, `n1`, ….
pub fn delinearize(seq: &LinearizedAmr) -> Result<AmrGraph, AmrError> {
    let toks = &seq.tokens;
    if toks.is_empty() {
        return Err(malformed(0, "empty sequence"));
    }
    let declared: HashSet<&str> = toks
        .windows(3)
        .filter(|w| w[0] == "(" && w[2] == "/")
        .map(|w| w[1].as_str())
        .collect();
    let taken: HashSet<&str> = toks.iter().map(String::as_str).collect();
    let mut r = Reader { toks, pos: 0, declared, fresh: 0, taken, nodes: Vec::new(), edges: Vec::new() };
    let root = r.node()?;
    if r.pos != toks.len() {
        return Err(malformed(r.pos, "trailing tokens after the root node"));
    }
    AmrGraph::new(r.nodes, r.edges, root).map_err(|e| match e {
        AmrError::InvalidGraph(reason) => malformed(toks.len(), reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_node() {
        let g = parse_penman("(a / appeal-01)").unwrap();
        let l = linearize(&g);
        assert_eq!(l.tokens, toks(&["(", "appeal-01", ")"]));
        assert!(delinearize(&l).unwrap().is_isomorphic(&g));
    }

    #[test]
    fn one_edge() {
        let g = parse_penman("(a / appeal-01 :ARG0 (d / district))").unwrap();
        assert_eq!(linearize(&g).tokens, toks(&["(", "appeal-01", ":ARG0", "(", "district", ")", ")"]));
    }

    #[test]
    fn reentrant_node_emits_reference() {
        // b is :ARG0 of both predicates.
        let g = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b))").unwrap();
        let l = linearize(&g);
        assert_eq!(
            l.tokens,
            toks(&["(", "want-01", ":ARG0", "(", "b", "/", "boy", ")", ":ARG1", "(", "go-01", ":ARG0", "b", ")", ")"])
        );
        let back = delinearize(&l).unwrap();
        assert_eq!(back.in_degrees()["b"], 2);
        assert!(back.is_isomorphic(&g));
    }

    #[test]
    fn constants_are_single_tokens() {
        let g = parse_penman(r#"(a / appeal-01 :polarity - :ARG0 (c / city :name "Washington"))"#).unwrap();
        let l = linearize(&g);
        assert!(l.tokens.contains(&"-".to_string()));
        assert!(l.tokens.contains(&"\"Washington\"".to_string()));
        assert!(delinearize(&l).unwrap().is_isomorphic(&g));
    }

    #[test]
    fn relation_without_head_concept() {
        let e = delinearize(&LinearizedAmr::new(toks(&["(", ":ARG0", ")"]))).unwrap_err();
        assert!(matches!(e, AmrError::MalformedSequence { .. }));
    }

    #[test]
    fn malformed_sequences() {
        for bad in [
            vec![],
            vec!["(", "a"],
            vec!["(", "a", ")", ")"],
            vec!["(", "a", ":ARG0", ")"],
            vec!["(", "a", "b", ")"],
        ] {
            assert!(delinearize(&LinearizedAmr::new(toks(&bad))).is_err(), "{bad:?}");
        }
    }
}
