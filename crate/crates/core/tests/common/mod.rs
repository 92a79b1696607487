#![allow(dead_code)]

use eae_core::amr::parse_penman;
use eae_core::config::RunConfig;
use eae_core::data::{parse_dataset, EventInstance};
use eae_core::model::{ModelConfig, Site};
use eae_core::pipeline::AmrTable;
use eae_core::prefix::AmrEncoderSpec;
use eae_core::prompting::Ontology;
use eae_core::synthetic::{generate_synthetic, SyntheticCorpus, MAX_EVENT_TYPES};
use eae_core::train::TrainData;

pub const FIG1_LINE: &str = r#"{"doc_id":"fig1","tokens":["the","districts","in","washington","will","appeal","the","ruling","to","the","u.s.","supreme","court","."],"trigger":{"start":5,"end":6,"event_type":"Justice:Appeal"},"arguments":[{"start":1,"end":2,"role":"Plaintiff"},{"start":3,"end":4,"role":"Place"},{"start":10,"end":13,"role":"Adjudicator"}]}"#;

pub const FIG1_AMR: &str = r#"(a / appeal-01
   :ARG0 (d / district
            :location (c / city :name (n / name :op1 "Washington")))
   :ARG1 (r / rule-01)
   :ARG2 (c2 / court :name (n2 / name :op1 "U.S." :op2 "Supreme" :op3 "Court")))"#;

pub fn fig1() -> EventInstance {
    parse_dataset(FIG1_LINE).unwrap().remove(0)
}

pub fn ontology() -> Ontology {
    generate_synthetic(1, 0, MAX_EVENT_TYPES).ontology
}

/// Training corpus and a separately generated dev corpus with graphs.
pub fn synthetic_data(n_train: usize, n_dev: usize, seed: u64) -> (SyntheticCorpus, SyntheticCorpus, TrainData) {
    let train = generate_synthetic(n_train, seed, MAX_EVENT_TYPES);
    let dev = generate_synthetic(n_dev, seed + 1000, MAX_EVENT_TYPES);
    let mut graphs = train.graphs();
    graphs.extend(dev.graphs());
    let data = TrainData {
        train: train.instances.clone(),
        dev: dev.instances.clone(),
        ontology: train.ontology.clone(),
        graphs,
    };
    (train, dev, data)
}

pub fn fig1_graphs() -> AmrTable {
    let mut t = AmrTable::new();
    t.insert("fig1".into(), parse_penman(FIG1_AMR).unwrap());
    t
}

/// Small, fast configuration for tests.
pub fn small_config() -> RunConfig {
    let mut c = RunConfig { lr: 1e-3, prefix_len: 4, batch_size: 4, epochs: 1, max_decode_len: 24, ..RunConfig::default() };
    c.model = ModelConfig {
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        injection_sites: Site::DEFAULT.to_vec(),
        ..ModelConfig::default()
    };
    c.amr_encoder = AmrEncoderSpec { dim: 16, heads: 2, ..AmrEncoderSpec::default() };
    c
}

use eae_core::amr::{AmrEdge, AmrGraph, AmrNode, Target};
use eae_core::data::{Argument, Trigger};
use eae_core::eval::{Counts, ScoredArgument};
use eae_core::prompting::{EventTemplate, RoleAssignment};
use eae_core::text::tokenize;
use rand::seq::IndexedRandom;
use rand::Rng;

const CONCEPTS: &[&str] = &["appeal-01", "district", "city", "name", "court", "rule-01", "want-01", "boy", "go-02", "person", "country", "attack-01"];
const RELATIONS: &[&str] = &[":ARG0", ":ARG1", ":ARG2", ":location", ":mod", ":time", ":name", ":op1", ":op2", ":ARG0-of"];
const CONSTANTS: &[&str] = &["\"Washington\"", "\"U.S.\"", "-", "5", "2024", "+"];

/// Random rooted DAG with `1..=max_nodes` nodes. Node 0 is the root, every
/// other node gets a parent among earlier nodes, and extra edges between
/// earlier and later nodes create reentrancies.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> AmrGraph {
    let n = rng.random_range(1..=max_nodes);
    let nodes: Vec<AmrNode> = (0..n)
        .map(|i| AmrNode { var: format!("v{i}"), concept: CONCEPTS.choose(rng).unwrap().to_string() })
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    let edge = |src: usize, target: Target, rng: &mut dyn rand::RngCore| AmrEdge {
        source: format!("v{src}"),
        relation: RELATIONS.choose(rng).unwrap().to_string(),
        target,
    };
    for i in 1..n {
        let p = rng.random_range(0..i);
        pairs.insert((p, i));
        edges.push(edge(p, Target::Var(format!("v{i}")), rng));
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        if n < 3 {
            break;
        }
        let a = rng.random_range(0..n - 1);
        let b = rng.random_range(a + 1..n);
        if pairs.insert((a, b)) {
            edges.push(edge(a, Target::Var(format!("v{b}")), rng));
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let a = rng.random_range(0..n);
        edges.push(edge(a, Target::Const(CONSTANTS.choose(rng).unwrap().to_string()), rng));
    }
    let k = edges.len();
    for i in (1..k).rev() {
        let j = rng.random_range(0..=i);
        edges.swap(i, j);
    }
    AmrGraph::new(nodes, edges, "v0").unwrap()
}

const FILLER_WORDS: &[&str] = &[
    "alpha", "bravo", "delta", "echo", "kilo", "lima", "oscar", "romeo", "tango", "zulu", "mira", "osaka", "reed", "vale",
];

/// Random assignment whose fillers share no word with the template's
/// literal text or placeholders and never contain the filler joiner.
pub fn random_assignment(rng: &mut impl Rng, template: &EventTemplate) -> RoleAssignment {
    let banned: std::collections::HashSet<String> = tokenize(&template.template_text).into_iter().chain(["and".to_string()]).collect();
    let pool: Vec<&str> = FILLER_WORDS.iter().copied().filter(|w| !banned.contains(*w)).collect();
    let mut out = template.empty_assignment();
    for role in out.roles.values_mut() {
        for _ in 0..rng.random_range(0..3) {
            let words: Vec<&str> = (0..rng.random_range(1..4)).map(|_| *pool.choose(rng).unwrap()).collect();
            role.push(words.join(" "));
        }
    }
    out
}

const ROLES: &[&str] = &["Agent", "Victim", "Place", "Target"];

/// Random passage with up to `max_args` gold arguments and a prediction
/// list mixing exact hits, role errors, shifted spans, duplicates and
/// unresolved strings.
pub fn random_scoring_case(rng: &mut impl Rng, doc: usize, max_args: usize) -> (EventInstance, Vec<ScoredArgument>) {
    let len = rng.random_range(4..14);
    let tokens: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
    let span = |rng: &mut dyn rand::RngCore| {
        let s = rng.random_range(0..len - 1);
        (s, rng.random_range(s + 1..=(s + 3).min(len)))
    };
    let arguments: Vec<Argument> = (0..rng.random_range(0..=max_args))
        .map(|_| {
            let (start, end) = span(rng);
            Argument { start, end, role: ROLES.choose(rng).unwrap().to_string() }
        })
        .collect();
    let mut predicted = Vec::new();
    for a in &arguments {
        match rng.random_range(0..5) {
            0 => {}
            1 => predicted.push(ScoredArgument { span: Some((a.start, a.end)), role: ROLES.choose(rng).unwrap().to_string() }),
            _ => predicted.push(ScoredArgument { span: Some((a.start, a.end)), role: a.role.clone() }),
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let s = if rng.random_bool(0.2) { None } else { Some(span(rng)) };
        predicted.push(ScoredArgument { span: s, role: ROLES.choose(rng).unwrap().to_string() });
    }
    if !predicted.is_empty() && rng.random_bool(0.3) {
        let dup = predicted[rng.random_range(0..predicted.len())].clone();
        predicted.push(dup);
    }
    for i in (1..predicted.len()).rev() {
        let j = rng.random_range(0..=i);
        predicted.swap(i, j);
    }
    let inst = EventInstance {
        doc_id: format!("d{doc}"),
        tokens,
        trigger: Trigger { start: 0, end: 1, event_type: "Conflict:Attack".into() },
        arguments,
        amr: None,
    };
    (inst, predicted)
}

/// Largest one-to-one matching under `same`, found by trying every
/// assignment of predictions to gold items.
fn best_matching(pred: &[ScoredArgument], gold: &[ScoredArgument], used: &mut Vec<bool>, same: &dyn Fn(&ScoredArgument, &ScoredArgument) -> bool) -> usize {
    let Some((p, rest)) = pred.split_first() else { return 0 };
    let mut best = best_matching(rest, gold, used, same);
    if p.span.is_some() {
        for j in 0..gold.len() {
            if !used[j] && same(p, &gold[j]) {
                used[j] = true;
                best = best.max(1 + best_matching(rest, gold, used, same));
                used[j] = false;
            }
        }
    }
    best
}

/// Exhaustive-matching counts for one instance.
pub fn oracle_counts(pred: &[ScoredArgument], inst: &EventInstance) -> Counts {
    let gold: Vec<ScoredArgument> =
        inst.arguments.iter().map(|a| ScoredArgument { span: Some((a.start, a.end)), role: a.role.clone() }).collect();
    let mut used = vec![false; gold.len()];
    Counts {
        gold: gold.len(),
        predicted: pred.len(),
        correct_i: best_matching(pred, &gold, &mut used, &|p, g| p.span == g.span),
        correct_c: best_matching(pred, &gold, &mut used, &|p, g| p.span == g.span && p.role == g.role),
    }
}

/// Micro F1 from raw counts.
pub fn oracle_f1(correct: usize, predicted: usize, gold: usize) -> f64 {
    if correct == 0 {
        return 0.0;
    }
    let p = correct as f64 / predicted as f64;
    let r = correct as f64 / gold as f64;
    2.0 * p * r / (p + r)
}
