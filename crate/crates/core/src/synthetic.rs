//! Grammar-generated event corpus with matching stub AMR graphs, for
//! end-to-end runs without licensed data.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amr::{AmrEdge, AmrGraph, AmrNode, Target};
use crate::data::{Argument, EventInstance, Trigger};
use crate::prompting::{EventTemplate, Ontology, Placeholder};

/// Generated instances, their ontology, and a passage-text → Penman map
/// suitable for the stub parser backend.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub instances: Vec<EventInstance>,
    pub ontology: Ontology,
    pub amr: BTreeMap<String, String>,
}

impl SyntheticCorpus {
    /// Parsed graphs keyed by `doc_id`.
    pub fn graphs(&self) -> BTreeMap<String, AmrGraph> {
        self.instances
            .iter()
            .map(|i| {
                let g = crate::amr::parse_penman(&self.amr[&i.passage_text()]).expect("generator writes valid Penman");
                (i.doc_id.clone(), g)
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum Piece {
    Word(&'static str),
    Trigger(&'static str),
    Role(usize),
    /// Second filler of a role, present only when it has two.
    Extra(usize),
    /// Words emitted only when the role is filled.
    Opt(usize, &'static [Piece]),
}

#[derive(Clone, Copy)]
enum Pool {
    Person,
    Org,
    Place,
    Thing,
}

struct RoleSpec {
    name: &'static str,
    placeholder: &'static str,
    relation: &'static str,
    pool: Pool,
    optional: bool,
    /// May take two fillers.
    multi: bool,
}

struct EventSpec {
    event_type: &'static str,
    concept: &'static str,
    description: &'static str,
    template: &'static str,
    roles: &'static [RoleSpec],
    patterns: &'static [&'static [Piece]],
}

use Piece::*;

const fn role(name: &'static str, placeholder: &'static str, relation: &'static str, pool: Pool, optional: bool) -> RoleSpec {
    RoleSpec { name, placeholder, relation, pool, optional, multi: false }
}

static EVENTS: &[EventSpec] = &[
    EventSpec {
        event_type: "Justice:Appeal",
        concept: "appeal-01",
        description: "The event is related to judicial appeal. The trigger word is {trigger}.",
        template: "somebody in somewhere appealed the adjudication from some adjudicator.",
        roles: &[
            role("Plaintiff", "somebody", ":ARG0", Pool::Org, false),
            role("Place", "somewhere", ":location", Pool::Place, true),
            role("Adjudicator", "some adjudicator", ":ARG2", Pool::Org, false),
        ],
        patterns: &[
            &[Role(0), Opt(1, &[Word("in"), Role(1)]), Word("will"), Trigger("appeal"), Word("the"), Word("ruling"), Word("to"), Role(2), Word(".")],
            &[Role(0), Trigger("appealed"), Word("to"), Role(2), Opt(1, &[Word("in"), Role(1)]), Word("on"), Word("monday"), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Conflict:Attack",
        concept: "attack-01",
        description: "The event is related to conflict and violent attack. The trigger word is {trigger}.",
        template: "somebody attacked something at somewhere.",
        roles: &[
            role("Attacker", "somebody", ":ARG0", Pool::Org, false),
            role("Target", "something", ":ARG1", Pool::Thing, false),
            role("Place", "somewhere", ":location", Pool::Place, true),
        ],
        patterns: &[
            &[Role(0), Trigger("attacked"), Role(1), Opt(2, &[Word("in"), Role(2)]), Word("yesterday"), Word(".")],
            &[Opt(2, &[Word("in"), Role(2), Word(",")]), Role(1), Word("was"), Trigger("bombed"), Word("by"), Role(0), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Life:Die",
        concept: "die-01",
        description: "The event is related to life and someone died. The trigger word is {trigger}.",
        template: "somebody was killed by some killer at somewhere.",
        roles: &[
            role("Victim", "somebody", ":ARG1", Pool::Person, false),
            role("Agent", "some killer", ":ARG0", Pool::Org, true),
            role("Place", "somewhere", ":location", Pool::Place, true),
        ],
        patterns: &[
            &[Role(0), Trigger("died"), Opt(2, &[Word("in"), Role(2)]), Opt(1, &[Word("after"), Word("an"), Word("attack"), Word("by"), Role(1)]), Word(".")],
            &[Role(1), Trigger("killed"), Role(0), Opt(2, &[Word("near"), Role(2)]), Word("last"), Word("night"), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Movement:Transport",
        concept: "transport-01",
        description: "The event is related to movement. The trigger word is {trigger}.",
        template: "something was sent from some origin to somewhere.",
        roles: &[
            role("Artifact", "something", ":ARG1", Pool::Person, false),
            role("Origin", "some origin", ":source", Pool::Place, true),
            role("Destination", "somewhere", ":destination", Pool::Place, false),
        ],
        patterns: &[
            &[Role(0), Trigger("traveled"), Opt(1, &[Word("from"), Role(1)]), Word("to"), Role(2), Word("last"), Word("week"), Word(".")],
            &[Word("officials"), Trigger("moved"), Role(0), Word("to"), Role(2), Opt(1, &[Word("from"), Role(1)]), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Contact:Meet",
        concept: "meet-03",
        description: "The event is related to a meeting. The trigger word is {trigger}.",
        template: "somebody met at somewhere.",
        roles: &[
            RoleSpec { name: "Entity", placeholder: "somebody", relation: ":ARG0", pool: Pool::Person, optional: false, multi: true },
            role("Place", "somewhere", ":location", Pool::Place, true),
        ],
        patterns: &[
            &[Role(0), Extra(0), Trigger("met"), Opt(1, &[Word("in"), Role(1)]), Word("on"), Word("friday"), Word(".")],
            &[Opt(1, &[Word("in"), Role(1), Word(",")]), Role(0), Extra(0), Word("held"), Word("a"), Trigger("meeting"), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Transaction:Transfer-Money",
        concept: "pay-01",
        description: "The event is related to transferring money. The trigger word is {trigger}.",
        template: "somebody paid some recipient.",
        roles: &[
            role("Giver", "somebody", ":ARG0", Pool::Org, false),
            role("Recipient", "some recipient", ":ARG2", Pool::Person, false),
        ],
        patterns: &[
            &[Role(0), Trigger("paid"), Role(1), Word("a"), Word("large"), Word("sum"), Word(".")],
            &[Role(1), Word("received"), Word("a"), Trigger("payment"), Word("from"), Role(0), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Justice:Arrest-Jail",
        concept: "arrest-01",
        description: "The event is related to arresting someone. The trigger word is {trigger}.",
        template: "somebody was arrested by some agent at somewhere.",
        roles: &[
            role("Person", "somebody", ":ARG1", Pool::Person, false),
            role("Agent", "some agent", ":ARG0", Pool::Org, true),
            role("Place", "somewhere", ":location", Pool::Place, true),
        ],
        patterns: &[
            &[Opt(1, &[Role(1), Word("officers")]), Trigger("arrested"), Role(0), Opt(2, &[Word("in"), Role(2)]), Word("today"), Word(".")],
            &[Role(0), Word("was"), Trigger("detained"), Opt(2, &[Word("in"), Role(2)]), Opt(1, &[Word("by"), Role(1)]), Word(".")],
        ],
    },
    EventSpec {
        event_type: "Personnel:Elect",
        concept: "elect-01",
        description: "The event is related to an election. The trigger word is {trigger}.",
        template: "somebody was elected by some voters in somewhere.",
        roles: &[
            role("Person", "somebody", ":ARG1", Pool::Person, false),
            role("Entity", "some voters", ":ARG0", Pool::Org, true),
            role("Place", "somewhere", ":location", Pool::Place, true),
        ],
        patterns: &[
            &[Role(0), Word("was"), Trigger("elected"), Word("mayor"), Opt(2, &[Word("of"), Role(2)]), Opt(1, &[Word("by"), Role(1)]), Word(".")],
            &[Role(0), Word("won"), Word("the"), Trigger("vote"), Opt(2, &[Word("across"), Role(2)]), Opt(1, &[Word("among"), Role(1)]), Word(".")],
        ],
    },
];

static PERSONS: &[&str] = &[
    "john smith", "mary", "ahmed", "lee wong", "carlos", "anna petrova", "david", "fatima", "peter hall", "yuki",
    "omar", "sofia ruiz", "ivan", "grace kim", "samuel", "nadia", "tom baker", "elena", "raj patel", "lucy",
    "marco", "hana", "victor", "olga", "james brown",
];
static ORGS: &[&str] = &[
    "districts", "supreme court", "rebels", "army", "police", "council", "senate", "militia", "union", "regulators",
    "bank", "ministry", "committee", "agency", "navy", "tribunal", "guerrillas", "board", "cartel", "citizens",
    "airline", "company", "party", "judges", "soldiers",
];
static PLACES: &[&str] = &[
    "washington", "baghdad", "paris", "new york", "cairo", "moscow", "tokyo", "lagos", "lima", "berlin",
    "kabul", "seoul", "madrid", "boston", "delhi", "sydney", "rome", "texas", "gaza", "ohio",
    "dublin", "quito", "oslo", "hanoi", "basra",
];
static THINGS: &[&str] = &[
    "embassy", "convoy", "bridge", "checkpoint", "market", "hotel", "airport", "station", "base", "village",
    "refinery", "school", "tanker", "pipeline", "headquarters", "barracks", "harbor", "factory", "camp", "outpost",
];

fn pool(p: Pool) -> &'static [&'static str] {
    match p {
        Pool::Person => PERSONS,
        Pool::Org => ORGS,
        Pool::Place => PLACES,
        Pool::Thing => THINGS,
    }
}

fn pool_concept(p: Pool) -> &'static str {
    match p {
        Pool::Person => "person",
        Pool::Org => "organization",
        Pool::Place => "city",
        Pool::Thing => "facility",
    }
}

/// Number of event types available to [`generate_synthetic`].
pub const MAX_EVENT_TYPES: usize = 8;

fn ontology_for(events: &[EventSpec]) -> Ontology {
    Ontology::new(events.iter().map(|e| EventTemplate {
        event_type: e.event_type.into(),
        description: e.description.into(),
        template_text: e.template.into(),
        placeholders: e.roles.iter().map(|r| Placeholder { text: r.placeholder.into(), role: r.name.into() }).collect(),
    }))
    .expect("built-in templates are valid")
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// `n` instances over the first `ontology_size` event types (clamped to
/// `1..=MAX_EVENT_TYPES`). Deterministic in `seed`.
pub fn generate_synthetic(n: usize, seed: u64, ontology_size: usize) -> SyntheticCorpus {
    let events = &EVENTS[..ontology_size.clamp(1, MAX_EVENT_TYPES)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    let mut amr = BTreeMap::new();
    for i in 0..n {
        let ev = &events[rng.random_range(0..events.len())];
        let pattern = ev.patterns[rng.random_range(0..ev.patterns.len())];

        let mut used: Vec<&str> = Vec::new();
        let mut fillers: Vec<Vec<&str>> = Vec::with_capacity(ev.roles.len());
        for r in ev.roles {
            let present = !r.optional || rng.random_bool(0.7);
            let count = if !present {
                0
            } else if r.multi && rng.random_bool(0.5) {
                2
            } else {
                1
            };
            let mut f = Vec::new();
            while f.len() < count {
                let name = *pool(r.pool).choose(&mut rng).expect("nonempty pool");
                if !used.contains(&name) {
                    used.push(name);
                    f.push(name);
                }
            }
            fillers.push(f);
        }

        let mut tokens: Vec<String> = Vec::new();
        let mut trigger = (0, 0);
        let mut args: Vec<Argument> = Vec::new();
        emit(pattern, ev, &fillers, &mut tokens, &mut trigger, &mut args);
        args.sort_by_key(|a| a.start);

        let inst = EventInstance {
            doc_id: format!("syn-{seed}-{i:05}"),
            tokens,
            trigger: Trigger { start: trigger.0, end: trigger.1, event_type: ev.event_type.into() },
            arguments: args,
            amr: None,
        };
        let graph = stub_graph(ev, &fillers);
        amr.insert(inst.passage_text(), graph.to_penman());
        instances.push(inst);
    }
    SyntheticCorpus { instances, ontology: ontology_for(events), amr }
}

fn emit(
    pieces: &[Piece],
    ev: &EventSpec,
    fillers: &[Vec<&str>],
    tokens: &mut Vec<String>,
    trigger: &mut (usize, usize),
    args: &mut Vec<Argument>,
) {
    let push_filler = |tokens: &mut Vec<String>, args: &mut Vec<Argument>, text: &str, role: usize| {
        let start = tokens.len();
        tokens.extend(text.split(' ').map(str::to_string));
        args.push(Argument { start, end: tokens.len(), role: ev.roles[role].name.into() });
    };
    for p in pieces {
        match *p {
            Word(w) => tokens.push(w.into()),
            Trigger(w) => {
                *trigger = (tokens.len(), tokens.len() + 1);
                tokens.push(w.into());
            }
            Role(r) => {
                if let Some(f) = fillers[r].first() {
                    push_filler(tokens, args, f, r);
                }
            }
            Extra(r) => {
                if let Some(f) = fillers[r].get(1) {
                    tokens.push("and".into());
                    push_filler(tokens, args, f, r);
                }
            }
            Opt(r, inner) => {
                if !fillers[r].is_empty() {
                    emit(inner, ev, fillers, tokens, trigger, args);
                }
            }
        }
    }
}

/// Trigger concept at the root with one edge per argument; each argument
/// is a typed node named by capitalized `:opN` constants.
fn stub_graph(ev: &EventSpec, fillers: &[Vec<&str>]) -> AmrGraph {
    let mut nodes = vec![AmrNode { var: "e".into(), concept: ev.concept.into() }];
    let mut edges = Vec::new();
    let mut k = 0;
    for (r, fs) in ev.roles.iter().zip(fillers) {
        for f in fs {
            let (v, n) = (format!("x{k}"), format!("n{k}"));
            k += 1;
            nodes.push(AmrNode { var: v.clone(), concept: pool_concept(r.pool).into() });
            nodes.push(AmrNode { var: n.clone(), concept: "name".into() });
            edges.push(AmrEdge { source: "e".into(), relation: r.relation.into(), target: Target::Var(v.clone()) });
            edges.push(AmrEdge { source: v, relation: ":name".into(), target: Target::Var(n.clone()) });
            for (j, w) in f.split(' ').enumerate() {
                edges.push(AmrEdge {
                    source: n.clone(),
                    relation: format!(":op{}", j + 1),
                    target: Target::Const(format!("\"{}\"", capitalize(w))),
                });
            }
        }
    }
    AmrGraph::new(nodes, edges, "e").expect("generated graph is valid")
}
