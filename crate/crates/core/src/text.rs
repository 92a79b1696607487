//! Word-level tokenization and the model vocabulary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Separator between passage, description and template in a prompt.
pub const SEP: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

const TRAILING: [char; 2] = ['.', ','];

/// Splits on whitespace, then detaches a trailing `.` or `,` from a word
/// unless the rest of the word already contains a period (`u.s.` stays
/// whole, `court.` becomes `court` `.`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        match word.chars().last() {
            Some(c) if word.len() > 1 && TRAILING.contains(&c) => {
                let head = &word[..word.len() - 1];
                if head.contains('.') {
                    out.push(word.to_string());
                } else {
                    out.push(head.to_string());
                    out.push(c.to_string());
                }
            }
            _ => out.push(word.to_string()),
        }
    }
    out
}

/// Inverse of [`tokenize`]: joins with spaces and attaches standalone
/// `.`/`,` tokens to the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = t.len() == 1 && t.chars().all(|c| TRAILING.contains(&c));
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Token ↔ id table. Ids `0..4` are `<pad> <s> </s> <unk>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(vec![PAD.to_string(), BOS.to_string(), EOS.to_string(), UNK.to_string()])
    }
}

impl Vocab {
    /// Specials followed by every distinct token in first-seen order.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab::default();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}
