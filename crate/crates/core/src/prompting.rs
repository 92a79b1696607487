//! Event ontology, prompt assembly, and template filling/decoding.
//!
//! A template is a sentence in which each role is represented by a
//! placeholder phrase ("somebody", "some adjudicator", ...). The model is
//! trained to rewrite the template with placeholders replaced by argument
//! text; decoding aligns its output back against the template's literal
//! segments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EventInstance;
use crate::text::{detokenize, tokenize, SEP};

/// Marker in a description that is replaced by the trigger text.
pub const TRIGGER_SLOT: &str = "{trigger}";

/// Joins multiple fillers of one role.
pub const FILLER_JOIN: &str = " and ";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
    #[error("invalid template for `{event_type}`: {reason}")]
    InvalidTemplate { event_type: String, reason: String },
    #[error("ontology file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    pub text: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTemplate {
    pub event_type: String,
    pub description: String,
    pub template_text: String,
    pub placeholders: Vec<Placeholder>,
}

/// Piece of a template in reading order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Literal(&'a str),
    Slot(&'a Placeholder),
}

impl EventTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |reason: String| PromptError::InvalidTemplate { event_type: self.event_type.clone(), reason };
        if self.placeholders.is_empty() {
            return Err(bad("no placeholders".into()));
        }
        let mut roles = BTreeSet::new();
        for p in &self.placeholders {
            if p.text.is_empty() {
                return Err(bad(format!("empty placeholder for role `{}`", p.role)));
            }
            if self.template_text.matches(p.text.as_str()).count() != 1 {
                return Err(bad(format!("placeholder `{}` must occur exactly once", p.text)));
            }
            if !roles.insert(p.role.as_str()) {
                return Err(bad(format!("role `{}` declared twice", p.role)));
            }
        }
        let mut spans = self.slot_spans();
        spans.sort_unstable();
        for w in spans.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.0 < a.1 {
                return Err(bad("placeholders overlap".into()));
            }
            if self.template_text[a.1..b.0].trim().is_empty() {
                return Err(bad("adjacent placeholders need literal text between them".into()));
            }
        }
        let pieces: Vec<String> = self
            .segments()
            .iter()
            .flat_map(|s| match s {
                Segment::Literal(l) => tokenize(l),
                Segment::Slot(p) => tokenize(&p.text),
            })
            .collect();
        if pieces != tokenize(&self.template_text) {
            return Err(bad("placeholders must cover whole words".into()));
        }
        Ok(())
    }

    /// (start, end, placeholder index) byte spans in template order.
    fn slot_spans(&self) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<_> = self
            .placeholders
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = self.template_text.find(p.text.as_str()).expect("validated placeholder");
                (s, s + p.text.len(), i)
            })
            .collect();
        v.sort_unstable();
        v
    }

    /// Alternating literal/slot segments; literals may be empty at the ends.
    pub fn segments(&self) -> Vec<Segment<'_>> {
        let mut out = Vec::new();
        let mut pos = 0;
        for (s, e, i) in self.slot_spans() {
            out.push(Segment::Literal(&self.template_text[pos..s]));
            out.push(Segment::Slot(&self.placeholders[i]));
            pos = e;
        }
        out.push(Segment::Literal(&self.template_text[pos..]));
        out
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.placeholders.iter().map(|p| p.role.as_str())
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.placeholders.iter().any(|p| p.role == role)
    }

    pub fn empty_assignment(&self) -> RoleAssignment {
        RoleAssignment { roles: self.roles().map(|r| (r.to_string(), Vec::new())).collect() }
    }

    pub fn description_for(&self, trigger: &str) -> String {
        self.description.replace(TRIGGER_SLOT, trigger)
    }
}

/// Role name → argument strings; an empty list means unfilled.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub roles: BTreeMap<String, Vec<String>>,
}

impl RoleAssignment {
    pub fn get(&self, role: &str) -> &[String] {
        self.roles.get(role).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.roles.values().all(Vec::is_empty)
    }

    /// (argument, role) pairs in role order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.roles.iter().flat_map(|(r, args)| args.iter().map(move |a| (a.as_str(), r.as_str())))
    }
}

/// Output of [`decode_output`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub assignment: RoleAssignment,
    /// Set when the literal anchors could not be located in order.
    pub misaligned: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    templates: BTreeMap<String, EventTemplate>,
}

impl Ontology {
    pub fn new(templates: impl IntoIterator<Item = EventTemplate>) -> Result<Self, PromptError> {
        let mut map = BTreeMap::new();
        for t in templates {
            t.validate()?;
            let key = t.event_type.clone();
            if map.insert(key.clone(), t).is_some() {
                return Err(PromptError::Format(format!("event type `{key}` listed twice")));
            }
        }
        Ok(Ontology { templates: map })
    }

    pub fn get(&self, event_type: &str) -> Result<&EventTemplate, PromptError> {
        self.templates.get(event_type).ok_or_else(|| PromptError::UnknownEventType(event_type.to_string()))
    }

    pub fn templates(&self) -> impl Iterator<Item = &EventTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Parses a JSON array of template records.
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let records: Vec<EventTemplate> =
            serde_json::from_str(text).map_err(|e| PromptError::Format(e.to_string()))?;
        Self::new(records)
    }

    pub fn to_json(&self) -> String {
        let records: Vec<_> = self.templates.values().collect();
        serde_json::to_string_pretty(&records).expect("serializable")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PromptError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Every word appearing in descriptions or templates.
    pub fn words(&self) -> Vec<String> {
        self.templates
            .values()
            .flat_map(|t| tokenize(&t.description.replace(TRIGGER_SLOT, " ")).into_iter().chain(tokenize(&t.template_text)))
            .collect()
    }
}

/// Passage tokens, separator, description with the trigger substituted,
/// separator, template tokens.
pub fn build_prompt(instance: &EventInstance, ontology: &Ontology) -> Result<Vec<String>, PromptError> {
    let template = ontology.get(&instance.trigger.event_type)?;
    let mut out = instance.tokens.clone();
    out.push(SEP.to_string());
    out.extend(tokenize(&template.description_for(&instance.trigger_text())));
    out.push(SEP.to_string());
    out.extend(tokenize(&template.template_text));
    Ok(out)
}

pub fn fill_template(template: &EventTemplate, assignment: &RoleAssignment) -> String {
    let mut out = String::new();
    for seg in template.segments() {
        match seg {
            Segment::Literal(l) => out.push_str(l),
            Segment::Slot(p) => {
                let fillers = assignment.get(&p.role);
                if fillers.is_empty() {
                    out.push_str(&p.text);
                } else {
                    out.push_str(&fillers.join(FILLER_JOIN));
                }
            }
        }
    }
    out
}

/// Gold fillers of `instance` for the roles `template` declares, each role's
/// fillers in passage order. Arguments with other roles are left out.
pub fn gold_assignment(instance: &EventInstance, template: &EventTemplate) -> RoleAssignment {
    let mut out = template.empty_assignment();
    let mut args: Vec<_> = instance.arguments.iter().collect();
    args.sort_by_key(|a| (a.start, a.end));
    for a in args {
        if let Some(list) = out.roles.get_mut(&a.role) {
            list.push(instance.span_text(a.start, a.end));
        }
    }
    out
}

/// Recovers role fillers by locating the template's literal segments in
/// `generated` from left to right, at token granularity. The first literal
/// must be a prefix and the last a suffix of the output; each inner literal
/// is matched at its first occurrence. Never fails: an output that cannot
/// be aligned yields an all-empty assignment with `misaligned` set.
pub fn decode_output(template: &EventTemplate, generated: &str) -> Decoded {
    let words = tokenize(generated);
    let segs = template.segments();
    let mut literals: Vec<Vec<String>> = Vec::new();
    let mut slots: Vec<&Placeholder> = Vec::new();
    for s in &segs {
        match s {
            Segment::Literal(l) => literals.push(tokenize(l)),
            Segment::Slot(p) => slots.push(p),
        }
    }
    let fail = || Decoded { assignment: template.empty_assignment(), misaligned: true };

    if !words.starts_with(&literals[0]) {
        return fail();
    }
    let mut pos = literals[0].len();
    let last = literals.len() - 1;
    let mut captures: Vec<&[String]> = Vec::with_capacity(slots.len());
    for (i, lit) in literals.iter().enumerate().skip(1) {
        if i == last {
            if words.len() < pos + lit.len() || !words.ends_with(lit) {
                return fail();
            }
            captures.push(&words[pos..words.len() - lit.len()]);
        } else {
            match find_tokens(&words[pos..], lit) {
                Some(at) => {
                    captures.push(&words[pos..pos + at]);
                    pos += at + lit.len();
                }
                None => return fail(),
            }
        }
    }

    let mut assignment = template.empty_assignment();
    for (slot, capture) in slots.iter().zip(captures) {
        if capture.is_empty() || capture == tokenize(&slot.text).as_slice() {
            continue;
        }
        let fillers: Vec<String> = capture
            .split(|w| w == FILLER_JOIN.trim())
            .filter(|part| !part.is_empty())
            .map(detokenize)
            .collect();
        assignment.roles.insert(slot.role.clone(), fillers);
    }
    Decoded { assignment, misaligned: false }
}

fn find_tokens(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() {
        return Some(0);
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{Argument, Trigger};

    pub(crate) fn appeal_template() -> EventTemplate {
        EventTemplate {
            event_type: "Justice:Appeal".into(),
            description: "The event is related to judicial appeal. The trigger word is {trigger}.".into(),
            template_text: "somebody in somewhere appealed the adjudication from some adjudicator.".into(),
            placeholders: vec![
                Placeholder { text: "somebody".into(), role: "Plaintiff".into() },
                Placeholder { text: "somewhere".into(), role: "Place".into() },
                Placeholder { text: "some adjudicator".into(), role: "Adjudicator".into() },
            ],
        }
    }

    fn assign(pairs: &[(&str, &[&str])]) -> RoleAssignment {
        let mut a = appeal_template().empty_assignment();
        for (r, v) in pairs {
            a.roles.insert(r.to_string(), v.iter().map(|s| s.to_string()).collect());
        }
        a
    }

    fn fig1_instance() -> EventInstance {
        EventInstance {
            doc_id: "fig1".into(),
            tokens: "the districts in washington will appeal the ruling to the u.s. supreme court ."
                .split(' ')
                .map(String::from)
                .collect(),
            trigger: Trigger { start: 5, end: 6, event_type: "Justice:Appeal".into() },
            arguments: vec![Argument { start: 1, end: 2, role: "Plaintiff".into() }],
            amr: None,
        }
    }

    #[test]
    fn prompt_ends_with_template() {
        let ont = Ontology::new([appeal_template()]).unwrap();
        let p = build_prompt(&fig1_instance(), &ont).unwrap();
        assert!(detokenize(&p).ends_with("somebody in somewhere appealed the adjudication from some adjudicator."));
        assert!(p.contains(&"appeal".to_string()));
        let t = appeal_template();
        let expected = fig1_instance().tokens.len()
            + tokenize(&t.description_for("appeal")).len()
            + tokenize(&t.template_text).len()
            + 2;
        assert_eq!(p.len(), expected);
    }

    #[test]
    fn unknown_event_type() {
        let ont = Ontology::new([appeal_template()]).unwrap();
        let mut inst = fig1_instance();
        inst.trigger.event_type = "Life:Die".into();
        assert!(matches!(build_prompt(&inst, &ont), Err(PromptError::UnknownEventType(t)) if t == "Life:Die"));
    }

    #[test]
    fn empty_passage_prompt() {
        let ont = Ontology::new([appeal_template()]).unwrap();
        let mut inst = fig1_instance();
        inst.tokens.clear();
        let p = build_prompt(&inst, &ont).unwrap();
        assert_eq!(p[0], SEP);
    }

    #[test]
    fn fill_worked_example() {
        let a = assign(&[("Plaintiff", &["districts"]), ("Place", &["washington"]), ("Adjudicator", &["u.s. supreme court"])]);
        assert_eq!(
            fill_template(&appeal_template(), &a),
            "districts in washington appealed the adjudication from u.s. supreme court."
        );
    }

    #[test]
    fn fill_identity_and_join() {
        let t = appeal_template();
        assert_eq!(fill_template(&t, &t.empty_assignment()), t.template_text);
        let a = assign(&[("Plaintiff", &["A", "B"])]);
        assert_eq!(fill_template(&t, &a), "A and B in somewhere appealed the adjudication from some adjudicator.");
    }

    #[test]
    fn decode_worked_example() {
        let d = decode_output(
            &appeal_template(),
            "districts in washington appealed the adjudication from u.s. supreme court.",
        );
        assert!(!d.misaligned);
        assert_eq!(
            d.assignment,
            assign(&[("Plaintiff", &["districts"]), ("Place", &["washington"]), ("Adjudicator", &["u.s. supreme court"])])
        );
    }

    #[test]
    fn decode_unfilled_template() {
        let t = appeal_template();
        let d = decode_output(&t, &t.template_text);
        assert!(!d.misaligned);
        assert!(d.assignment.is_empty());
        assert_eq!(d.assignment.roles.len(), 3);
    }

    #[test]
    fn decode_garbage_sets_flag() {
        let d = decode_output(&appeal_template(), "completely unrelated output");
        assert!(d.misaligned);
        assert!(d.assignment.is_empty());
        assert!(decode_output(&appeal_template(), "").misaligned);
    }

    #[test]
    fn decode_multi_filler_and_empty_capture() {
        let t = appeal_template();
        let d = decode_output(&t, "A and B in appealed the adjudication from x.");
        assert_eq!(d.assignment, assign(&[("Plaintiff", &["A", "B"]), ("Adjudicator", &["x"])]));
    }

    #[test]
    fn template_validation() {
        let mut t = appeal_template();
        t.placeholders.push(Placeholder { text: "some".into(), role: "X".into() });
        assert!(t.validate().is_err());
        let mut t = appeal_template();
        t.placeholders[1].role = "Plaintiff".into();
        assert!(t.validate().is_err());
        let mut t = appeal_template();
        t.template_text = "somebody somewhere appealed the adjudication from some adjudicator.".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn ontology_json_round_trip() {
        let ont = Ontology::new([appeal_template()]).unwrap();
        assert_eq!(Ontology::from_json(&ont.to_json()).unwrap(), ont);
    }
}
