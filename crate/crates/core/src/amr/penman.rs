use std::collections::HashSet;

use super::{AmrEdge, AmrError, AmrGraph, AmrNode, Target};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

fn malformed(offset: usize, reason: impl Into<String>) -> AmrError {
    AmrError::MalformedPenman { offset, reason: reason.into() }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, AmrError> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let is_delim = |c: char| c.is_whitespace() || matches!(c, '(' | ')' | '/' | '"');
    while i < bytes.len() {
        let (off, c) = bytes[i];
        match c {
            '#' if bytes[..i].iter().rev().take_while(|(_, c)| *c != '\n').all(|(_, c)| c.is_whitespace()) => {
                while i < bytes.len() && bytes[i].1 != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((off, Tok::Open));
                i += 1;
            }
            ')' => {
                out.push((off, Tok::Close));
                i += 1;
            }
            '/' => {
                out.push((off, Tok::Slash));
                i += 1;
            }
            '"' => {
                let mut s = String::from('"');
                i += 1;
                let mut closed = false;
                while i < bytes.len() {
                    let c = bytes[i].1;
                    s.push(c);
                    i += 1;
                    if c == '\\' && i < bytes.len() {
                        s.push(bytes[i].1);
                        i += 1;
                    } else if c == '"' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(malformed(off, "unterminated string"));
                }
                out.push((off, Tok::Str(s)));
            }
            _ => {
                let start = i;
                while i < bytes.len() && !is_delim(bytes[i].1) {
                    i += 1;
                }
                let word: String = bytes[start..i].iter().map(|(_, c)| *c).collect();
                // Alignment markers such as `~e.3` are not part of the graph.
                let word = match word.find('~') {
                    Some(p) if p > 0 => word[..p].to_string(),
                    _ => word,
                };
                if word.starts_with(':') {
                    if word.len() < 2 {
                        return Err(malformed(off, "empty relation label"));
                    }
                    out.push((off, Tok::Role(word)));
                } else {
                    out.push((off, Tok::Sym(word)));
                }
            }
        }
    }
    Ok(out)
}

enum Pending {
    Resolved(Target),
    Symbol(String),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    nodes: Vec<AmrNode>,
    edges: Vec<(String, String, Pending)>,
    declared: HashSet<String>,
}

impl Parser {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn node(&mut self) -> Result<String, AmrError> {
        let at = self.offset();
        if self.next() != Some(Tok::Open) {
            return Err(malformed(at, "expected '('"));
        }
        let at = self.offset();
        let var = match self.next() {
            Some(Tok::Sym(v)) => v,
            _ => return Err(malformed(at, "expected a variable after '('")),
        };
        let at = self.offset();
        if self.next() != Some(Tok::Slash) {
            return Err(malformed(at, format!("missing '/' concept for `{var}`")));
        }
        let at = self.offset();
        let concept = match self.next() {
            Some(Tok::Sym(c)) | Some(Tok::Str(c)) => c,
            _ => return Err(malformed(at, format!("missing concept for `{var}`"))),
        };
        if !self.declared.insert(var.clone()) {
            return Err(malformed(at, format!("duplicate variable `{var}`")));
        }
        self.nodes.push(AmrNode { var: var.clone(), concept });
        loop {
            let at = self.offset();
            match self.peek() {
                Some(Tok::Close) => {
                    self.pos += 1;
                    return Ok(var);
                }
                Some(Tok::Role(_)) => {
                    let Some(Tok::Role(rel)) = self.next() else { unreachable!() };
                    let at = self.offset();
                    let target = match self.peek() {
                        Some(Tok::Open) => Pending::Resolved(Target::Var(self.node()?)),
                        Some(Tok::Str(_)) => {
                            let Some(Tok::Str(s)) = self.next() else { unreachable!() };
                            Pending::Resolved(Target::Const(s))
                        }
                        Some(Tok::Sym(_)) => {
                            let Some(Tok::Sym(s)) = self.next() else { unreachable!() };
                            Pending::Symbol(s)
                        }
                        _ => return Err(malformed(at, format!("relation `{rel}` has no target"))),
                    };
                    self.edges.push((var.clone(), rel, target));
                }
                None => return Err(malformed(at, "unbalanced parentheses")),
                Some(_) => return Err(malformed(at, "expected a relation or ')'")),
            }
        }
    }
}

/// Parses one Penman s-expression.
///
/// A bare symbol target names a variable when that variable is declared
/// anywhere in the graph; otherwise it is a constant.
pub fn parse_penman(text: &str) -> Result<AmrGraph, AmrError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(malformed(0, "empty input"));
    }
    let mut p = Parser { toks, pos: 0, end: text.len(), nodes: Vec::new(), edges: Vec::new(), declared: HashSet::new() };
    let root = p.node()?;
    if p.pos < p.toks.len() {
        return Err(malformed(p.offset(), "trailing content after the root node"));
    }
    let declared = p.declared;
    let edges = p
        .edges
        .into_iter()
        .map(|(source, relation, t)| {
            let target = match t {
                Pending::Resolved(t) => t,
                Pending::Symbol(s) if declared.contains(&s) => Target::Var(s),
                Pending::Symbol(s) => Target::Const(s),
            };
            AmrEdge { source, relation, target }
        })
        .collect();
    AmrGraph::new(p.nodes, edges, root).map_err(|e| match e {
        AmrError::InvalidGraph(reason) => malformed(0, reason),
        other => other,
    })
}

pub(super) fn write_penman(g: &AmrGraph) -> String {
    let mut out = String::new();
    let mut done = HashSet::new();
    write_node(g, g.root(), 0, &mut done, &mut out);
    out
}

fn write_node<'a>(g: &'a AmrGraph, var: &'a str, depth: usize, done: &mut HashSet<&'a str>, out: &mut String) {
    done.insert(var);
    out.push('(');
    out.push_str(var);
    out.push_str(" / ");
    out.push_str(g.concept_of(var).expect("validated"));
    for e in g.edges_from(var) {
        out.push('\n');
        out.push_str(&"    ".repeat(depth + 1));
        out.push_str(&e.relation);
        out.push(' ');
        match &e.target {
            Target::Var(t) if done.contains(t.as_str()) => out.push_str(t),
            Target::Var(t) => write_node(g, t, depth + 1, done, out),
            Target::Const(c) => out.push_str(c),
        }
    }
    out.push(')');
}

/// One graph in a multi-graph Penman file.
#[derive(Debug, Clone, PartialEq)]
pub struct PenmanRecord {
    pub id: Option<String>,
    pub graph: AmrGraph,
}

/// Parses blank-line separated Penman records. A `# ::id <id>` comment
/// line names the record that follows.
pub fn parse_penman_records(text: &str) -> Result<Vec<PenmanRecord>, AmrError> {
    let mut records = Vec::new();
    let mut offset = 0;
    for block in text.split("\n\n") {
        let block_offset = offset;
        offset += block.len() + 2;
        if block.trim().is_empty() {
            continue;
        }
        let id = block
            .lines()
            .filter_map(|l| l.trim().strip_prefix("# ::id "))
            .map(|rest| rest.split_whitespace().next().unwrap_or("").to_string())
            .next();
        let graph = parse_penman(block).map_err(|e| match e {
            AmrError::MalformedPenman { offset, reason } => {
                AmrError::MalformedPenman { offset: offset + block_offset, reason }
            }
            other => other,
        })?;
        records.push(PenmanRecord { id, graph });
    }
    Ok(records)
}

pub fn write_penman_records(records: &[PenmanRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if let Some(id) = &r.id {
            out.push_str("# ::id ");
            out.push_str(id);
            out.push('\n');
        }
        out.push_str(&r.graph.to_penman());
        out.push_str("\n\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        let g = parse_penman("(a / appeal-01)").unwrap();
        assert_eq!(g.nodes(), &[AmrNode { var: "a".into(), concept: "appeal-01".into() }]);
        assert!(g.edges().is_empty());
        assert_eq!(g.root(), "a");
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = parse_penman("(a / appeal-01 :ARG0 (d / district))").unwrap();
        assert_eq!(g.nodes().len(), 2);
        assert_eq!(
            g.edges(),
            &[AmrEdge { source: "a".into(), relation: ":ARG0".into(), target: Target::Var("d".into()) }]
        );
        assert_eq!(g.root(), "a");
    }

    #[test]
    fn unbalanced_is_malformed() {
        assert!(matches!(parse_penman("(a / appeal-01 :ARG0"), Err(AmrError::MalformedPenman { .. })));
        assert!(matches!(parse_penman("(a / appeal-01))"), Err(AmrError::MalformedPenman { .. })));
        assert!(matches!(parse_penman("???"), Err(AmrError::MalformedPenman { .. })));
        assert!(matches!(parse_penman(""), Err(AmrError::MalformedPenman { .. })));
    }

    #[test]
    fn missing_slash_and_duplicates() {
        let e = parse_penman("(a appeal-01)").unwrap_err();
        assert!(matches!(e, AmrError::MalformedPenman { ref reason, .. } if reason.contains("'/'")));
        let e = parse_penman("(a / x :ARG0 (a / y))").unwrap_err();
        assert!(matches!(e, AmrError::MalformedPenman { ref reason, .. } if reason.contains("duplicate")));
    }

    #[test]
    fn cycles_rejected() {
        let e = parse_penman("(a / x :ARG0 (b / y :ARG1 a))").unwrap_err();
        assert!(matches!(e, AmrError::MalformedPenman { ref reason, .. } if reason.contains("cycle")));
    }

    #[test]
    fn reentrancy_constants_and_forward_references() {
        let g = parse_penman(
            r#"(w / want-01 :ARG0 b :ARG1 (g / go-01 :ARG0 (b / boy)) :polarity - :name "Bo b")"#,
        )
        .unwrap();
        let targets: Vec<_> = g.edges().iter().map(|e| e.target.clone()).collect();
        assert_eq!(targets[0], Target::Var("b".into()));
        assert!(targets.contains(&Target::Const("-".into())));
        assert!(targets.contains(&Target::Const("\"Bo b\"".into())));
        assert_eq!(g.in_degrees()["b"], 2);
    }

    #[test]
    fn comments_and_alignments_skipped() {
        let g = parse_penman("# ::snt hello\n(a / appeal-01~e.2 :ARG0~e.1 (d / district))").unwrap();
        assert_eq!(g.concept_of("a"), Some("appeal-01"));
        assert_eq!(g.edges()[0].relation, ":ARG0");
    }

    #[test]
    fn serialization_round_trip() {
        let src = r#"(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b :mod "x y"))"#;
        let g = parse_penman(src).unwrap();
        let back = parse_penman(&g.to_penman()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn records_file() {
        let text = "# ::id p1\n(a / appeal-01)\n\n# ::id p2\n(b / district :mod (c / city))\n";
        let recs = parse_penman_records(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].id.as_deref(), Some("p2"));
        let again = parse_penman_records(&write_penman_records(&recs)).unwrap();
        assert_eq!(again, recs);
    }
}
