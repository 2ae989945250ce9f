//! Vocabularies for characters, POS tags, and dependency relations.
//! Insertion order follows first occurrence in the training corpus, so
//! building twice from the same data gives identical id assignments.

use std::collections::HashMap;

use super::Sentence;

/// Reserved character ids. The padding row exists so embedding tables always
/// have a zero row to point parity checks at; it never appears in sentences.
pub const CHAR_PAD: u32 = 0;
pub const CHAR_UNK: u32 = 1;
/// Reserved relation ids: `self` joins characters of one word, `none` marks
/// the absence of any dependency between two words.
pub const REL_SELF: u32 = 0;
pub const REL_NONE: u32 = 1;
pub const REL_UNK: u32 = 2;
pub const POS_UNK: u32 = 0;

/// The string form of the "no relation" entry in the relation vocabulary.
pub const REL_NONE_STR: &str = "O";
pub const REL_SELF_STR: &str = "self";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabs {
    chars: Vec<String>,
    pos: Vec<String>,
    rels: Vec<String>,
    char_ids: HashMap<String, u32>,
    pos_ids: HashMap<String, u32>,
    rel_ids: HashMap<String, u32>,
}

fn index(items: &[String]) -> HashMap<String, u32> {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect()
}

impl Vocabs {
    /// Builds vocabularies from a training split, first-occurrence order.
    pub fn build(sentences: &[Sentence]) -> Vocabs {
        let mut chars = vec!["<pad>".to_string(), "<unk>".to_string()];
        let mut pos = vec!["<unk>".to_string()];
        let mut rels = vec![
            REL_SELF_STR.to_string(),
            REL_NONE_STR.to_string(),
            "<unk>".to_string(),
        ];
        let mut char_ids = index(&chars);
        let mut pos_ids = index(&pos);
        let mut rel_ids = index(&rels);
        for s in sentences {
            for c in &s.chars {
                if !char_ids.contains_key(c) {
                    char_ids.insert(c.clone(), chars.len() as u32);
                    chars.push(c.clone());
                }
            }
            for p in &s.pos {
                if !pos_ids.contains_key(p) {
                    pos_ids.insert(p.clone(), pos.len() as u32);
                    pos.push(p.clone());
                }
            }
            for d in &s.deps {
                if !rel_ids.contains_key(&d.rel) {
                    rel_ids.insert(d.rel.clone(), rels.len() as u32);
                    rels.push(d.rel.clone());
                }
            }
        }
        Vocabs { chars, pos, rels, char_ids, pos_ids, rel_ids }
    }

    /// Rebuilds from stored id lists (checkpoint manifests).
    pub fn from_lists(chars: Vec<String>, pos: Vec<String>, rels: Vec<String>) -> Vocabs {
        assert!(chars.len() >= 2, "character vocabulary missing reserved entries");
        assert!(!pos.is_empty(), "POS vocabulary missing reserved entry");
        assert!(rels.len() >= 3, "relation vocabulary missing reserved entries");
        let char_ids = index(&chars);
        let pos_ids = index(&pos);
        let rel_ids = index(&rels);
        Vocabs { chars, pos, rels, char_ids, pos_ids, rel_ids }
    }

    pub fn char_id(&self, c: &str) -> u32 {
        self.char_ids.get(c).copied().unwrap_or(CHAR_UNK)
    }

    pub fn pos_id(&self, p: &str) -> u32 {
        self.pos_ids.get(p).copied().unwrap_or(POS_UNK)
    }

    pub fn rel_id(&self, r: &str) -> u32 {
        self.rel_ids.get(r).copied().unwrap_or(REL_UNK)
    }

    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn n_pos(&self) -> usize {
        self.pos.len()
    }

    pub fn n_rels(&self) -> usize {
        self.rels.len()
    }

    pub fn char_list(&self) -> &[String] {
        &self.chars
    }

    pub fn pos_list(&self) -> &[String] {
        &self.pos
    }

    pub fn rel_list(&self) -> &[String] {
        &self.rels
    }
}
