//! AMR graphs: data model, Penman I/O, DFS linearization and token
//! vocabularies.

mod linearize;
mod penman;
mod vocab;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linearize::{delinearize, linearize, LinearizedAmr, STRUCTURE_TOKENS};
pub use penman::{parse_penman, parse_penman_records, write_penman_records, PenmanRecord};
pub use vocab::{build_vocab, AmrVocab, VocabMode, STANDARD_RELATIONS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmrError {
    #[error("malformed Penman at offset {offset}: {reason}")]
    MalformedPenman { offset: usize, reason: String },
    #[error("malformed linearized sequence at token {index}: {reason}")]
    MalformedSequence { index: usize, reason: String },
    #[error("invalid AMR graph: {0}")]
    InvalidGraph(String),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmrNode {
    pub var: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Var(String),
    /// Constant literal kept verbatim, including quotes for strings.
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AmrEdge {
    pub source: String,
    pub relation: String,
    pub target: Target,
}

/// Rooted, acyclic, labeled graph of concepts.
///
/// Built only through [`AmrGraph::new`], which enforces: unique variables,
/// a declared root from which every node is reachable, declared edge
/// endpoints, `:`-prefixed relations, and no directed cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmrGraph {
    nodes: Vec<AmrNode>,
    edges: Vec<AmrEdge>,
    root: String,
}

impl AmrGraph {
    pub fn new(nodes: Vec<AmrNode>, edges: Vec<AmrEdge>, root: impl Into<String>) -> Result<Self, AmrError> {
        let root = root.into();
        let mut seen = HashSet::new();
        for n in &nodes {
            if n.var.is_empty() || n.concept.is_empty() {
                return Err(AmrError::InvalidGraph("empty variable or concept".into()));
            }
            if !seen.insert(n.var.as_str()) {
                return Err(AmrError::InvalidGraph(format!("duplicate variable `{}`", n.var)));
            }
        }
        if !seen.contains(root.as_str()) {
            return Err(AmrError::InvalidGraph(format!("root `{root}` is not a declared variable")));
        }
        for e in &edges {
            if !seen.contains(e.source.as_str()) {
                return Err(AmrError::InvalidGraph(format!("edge source `{}` undeclared", e.source)));
            }
            if !e.relation.starts_with(':') || e.relation.len() < 2 {
                return Err(AmrError::InvalidGraph(format!("relation `{}` must start with ':'", e.relation)));
            }
            match &e.target {
                Target::Var(v) if !seen.contains(v.as_str()) => {
                    return Err(AmrError::InvalidGraph(format!("edge target `{v}` undeclared")));
                }
                Target::Const(c) if c.is_empty() => {
                    return Err(AmrError::InvalidGraph("empty constant".into()));
                }
                Target::Const(c) if seen.contains(c.as_str()) => {
                    return Err(AmrError::InvalidGraph(format!("constant `{c}` shadows a variable")));
                }
                _ => {}
            }
        }
        let g = AmrGraph { nodes, edges, root };
        g.check_reachable_acyclic()?;
        Ok(g)
    }

    fn check_reachable_acyclic(&self) -> Result<(), AmrError> {
        let index = self.var_index();
        let children = self.child_indices(&index);
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.nodes.len()];
        let mut stack = vec![(index[self.root.as_str()], 0usize)];
        state[stack[0].0] = 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (node, next) = stack[top];
            if let Some(&child) = children[node].get(next) {
                stack[top].1 += 1;
                match state[child] {
                    0 => {
                        state[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => {
                        return Err(AmrError::InvalidGraph(format!(
                            "cycle through `{}`",
                            self.nodes[child].var
                        )))
                    }
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
        if let Some(i) = state.iter().position(|s| *s == 0) {
            return Err(AmrError::InvalidGraph(format!(
                "`{}` is unreachable from the root",
                self.nodes[i].var
            )));
        }
        Ok(())
    }

    fn var_index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.var.as_str(), i)).collect()
    }

    fn child_indices(&self, index: &HashMap<&str, usize>) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if let Target::Var(t) = &e.target {
                children[index[e.source.as_str()]].push(index[t.as_str()]);
            }
        }
        children
    }

    pub fn nodes(&self) -> &[AmrNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[AmrEdge] {
        &self.edges
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn concept_of(&self, var: &str) -> Option<&str> {
        self.nodes.iter().find(|n| n.var == var).map(|n| n.concept.as_str())
    }

    /// Outgoing edges of `var` in declaration order.
    pub fn edges_from<'a>(&'a self, var: &'a str) -> impl Iterator<Item = &'a AmrEdge> + 'a {
        self.edges.iter().filter(move |e| e.source == var)
    }

    /// Number of variable-targeted edges pointing at each variable.
    pub fn in_degrees(&self) -> HashMap<&str, usize> {
        let mut deg: HashMap<&str, usize> = self.nodes.iter().map(|n| (n.var.as_str(), 0)).collect();
        for e in &self.edges {
            if let Target::Var(t) = &e.target {
                *deg.get_mut(t.as_str()).expect("validated") += 1;
            }
        }
        deg
    }

    /// Serializes to indented Penman notation.
    pub fn to_penman(&self) -> String {
        penman::write_penman(self)
    }

    /// Structural equality up to variable renaming.
    pub fn is_isomorphic(&self, other: &AmrGraph) -> bool {
        Isomorphism::new(self, other).map(|iso| iso.search()).unwrap_or(false)
    }
}

impl fmt::Display for AmrGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_penman())
    }
}

/// Indexed view used by the isomorphism search.
struct Indexed {
    concepts: Vec<String>,
    root: usize,
    /// (target, relation) for variable edges, per source.
    var_edges: Vec<Vec<(usize, String)>>,
    /// Sorted (relation, constant) pairs per source.
    consts: Vec<Vec<(String, String)>>,
    in_deg: Vec<usize>,
}

impl Indexed {
    fn new(g: &AmrGraph) -> Self {
        let index = g.var_index();
        let n = g.nodes.len();
        let mut var_edges = vec![Vec::new(); n];
        let mut consts = vec![Vec::new(); n];
        let mut in_deg = vec![0; n];
        for e in &g.edges {
            let s = index[e.source.as_str()];
            match &e.target {
                Target::Var(t) => {
                    let t = index[t.as_str()];
                    var_edges[s].push((t, e.relation.clone()));
                    in_deg[t] += 1;
                }
                Target::Const(c) => consts[s].push((e.relation.clone(), c.clone())),
            }
        }
        for c in &mut consts {
            c.sort();
        }
        Indexed {
            concepts: g.nodes.iter().map(|n| n.concept.clone()).collect(),
            root: index[g.root.as_str()],
            var_edges,
            consts,
            in_deg,
        }
    }

    /// Sorted relations on edges `a -> b`.
    fn relations(&self, a: usize, b: usize) -> Vec<&str> {
        let mut r: Vec<&str> = self.var_edges[a].iter().filter(|(t, _)| *t == b).map(|(_, r)| r.as_str()).collect();
        r.sort_unstable();
        r
    }
}

struct Isomorphism {
    a: Indexed,
    b: Indexed,
    order: Vec<usize>,
}

impl Isomorphism {
    fn new(a: &AmrGraph, b: &AmrGraph) -> Option<Self> {
        if a.nodes.len() != b.nodes.len() || a.edges.len() != b.edges.len() {
            return None;
        }
        fn count(g: &AmrGraph) -> BTreeMap<&str, usize> {
            let mut m: BTreeMap<&str, usize> = BTreeMap::new();
            for n in &g.nodes {
                *m.entry(n.concept.as_str()).or_default() += 1;
            }
            m
        }
        if count(a) != count(b) {
            return None;
        }
        let a = Indexed::new(a);
        let b = Indexed::new(b);
        // BFS order from the root so every node after the root has a mapped parent.
        let mut order = vec![a.root];
        let mut seen = vec![false; a.concepts.len()];
        seen[a.root] = true;
        let mut i = 0;
        while i < order.len() {
            for (t, _) in &a.var_edges[order[i]] {
                if !seen[*t] {
                    seen[*t] = true;
                    order.push(*t);
                }
            }
            i += 1;
        }
        Some(Isomorphism { a, b, order })
    }

    fn compatible(&self, i: usize, j: usize, mapping: &[Option<usize>]) -> bool {
        let (a, b) = (&self.a, &self.b);
        if a.concepts[i] != b.concepts[j]
            || a.in_deg[i] != b.in_deg[j]
            || a.var_edges[i].len() != b.var_edges[j].len()
            || a.consts[i] != b.consts[j]
        {
            return false;
        }
        if a.relations(i, i) != b.relations(j, j) {
            return false;
        }
        mapping.iter().enumerate().all(|(k, m)| match m {
            Some(fk) if k != i => a.relations(i, k) == b.relations(j, *fk) && a.relations(k, i) == b.relations(*fk, j),
            _ => true,
        })
    }

    fn search(&self) -> bool {
        let n = self.a.concepts.len();
        let mut mapping = vec![None; n];
        let mut used = vec![false; n];
        if !self.compatible(self.a.root, self.b.root, &mapping) {
            return false;
        }
        mapping[self.a.root] = Some(self.b.root);
        used[self.b.root] = true;
        self.extend(1, &mut mapping, &mut used)
    }

    fn extend(&self, depth: usize, mapping: &mut Vec<Option<usize>>, used: &mut Vec<bool>) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let i = self.order[depth];
        for j in 0..self.b.concepts.len() {
            if used[j] || !self.compatible(i, j, mapping) {
                continue;
            }
            mapping[i] = Some(j);
            used[j] = true;
            if self.extend(depth + 1, mapping, used) {
                return true;
            }
            mapping[i] = None;
            used[j] = false;
        }
        false
    }
}
