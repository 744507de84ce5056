//! Taxonomy lookup: an entity lexicon plus isA triples, entity linking by
//! greedy dictionary matching, and per-text conceptualization.
//!
//! Matching is leftmost-longest over case-folded whitespace tokens: at each
//! position the longest lexicon entry starting there wins and the scan
//! resumes after it, so mentions never overlap. No stemming, no fuzzy
//! matching; a desk-scale taxonomy does not earn a trie.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
}

/// One linked entity occurrence inside a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    /// Canonical lexicon form: case-folded tokens joined by single spaces.
    pub surface: String,
    /// Token offset of the first matched token.
    pub start: usize,
    /// Number of matched tokens.
    pub len: usize,
}

/// Concepts retrieved for one text, in mention order, duplicate-free,
/// truncated to the concept budget.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptSet {
    pub concepts: Vec<String>,
    /// For each concept, the entity surface it was first retrieved from.
    pub origins: Vec<String>,
}

impl ConceptSet {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// In-memory lexicon and isA store.
///
/// `lexicon` holds canonical entity surfaces. `isa` maps an entity surface
/// to its concept list in triple-file order, duplicate-free. Entities seen
/// only in the triple file are added to the lexicon and counted in
/// `orphan_triples` so callers can report the inconsistency.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    lexicon: HashSet<String>,
    isa: HashMap<String, Vec<String>>,
    max_entry_tokens: usize,
    orphan_triples: usize,
}

/// Splits on whitespace and case-folds. Empty tokens cannot occur.
pub fn fold_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn canonical(entity: &str) -> String {
    fold_tokens(entity).join(" ")
}

impl KnowledgeBase {
    /// Empty store: no entities link, every text conceptualizes to nothing.
    pub fn empty() -> Self {
        KnowledgeBase::default()
    }

    /// Loads a lexicon file (one entity per line) and a triple file
    /// (`entity<TAB>concept` per line). In both, blank lines and lines
    /// starting with `#` are skipped. Duplicate triples keep the first
    /// occurrence. Returns errors with file name and line number.
    pub fn load(lexicon_path: &Path, triples_path: &Path) -> Result<Self, KnowledgeError> {
        let mut kb = KnowledgeBase::empty();
        kb.load_lexicon(lexicon_path)?;
        kb.load_triples(triples_path)?;
        Ok(kb)
    }

    fn read(path: &Path) -> Result<String, KnowledgeError> {
        std::fs::read_to_string(path).map_err(|source| KnowledgeError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn load_lexicon(&mut self, path: &Path) -> Result<(), KnowledgeError> {
        let text = Self::read(path)?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.insert_entity(line);
        }
        Ok(())
    }

    fn load_triples(&mut self, path: &Path) -> Result<(), KnowledgeError> {
        let text = Self::read(path)?;
        for (idx, line) in text.lines().enumerate() {
            let raw = line.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (entity, concept) = raw.split_once('\t').ok_or_else(|| {
                KnowledgeError::MalformedLine {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: "expected `entity<TAB>concept`".into(),
                }
            })?;
            let entity = entity.trim();
            let concept = concept.trim().to_lowercase();
            if entity.is_empty() || concept.is_empty() {
                return Err(KnowledgeError::MalformedLine {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: "empty entity or concept".into(),
                });
            }
            let key = canonical(entity);
            if !self.lexicon.contains(&key) {
                self.insert_entity(entity);
                self.orphan_triples += 1;
            }
            let list = self.isa.entry(key).or_default();
            if !list.contains(&concept) {
                list.push(concept);
            }
        }
        Ok(())
    }

    fn insert_entity(&mut self, entity: &str) {
        let key = canonical(entity);
        if key.is_empty() {
            return;
        }
        self.max_entry_tokens = self.max_entry_tokens.max(key.split(' ').count());
        self.lexicon.insert(key);
    }

    pub fn lexicon_size(&self) -> usize {
        self.lexicon.len()
    }

    /// Number of distinct entities with at least one concept.
    pub fn entities_with_concepts(&self) -> usize {
        self.isa.len()
    }

    /// Triples whose entity was missing from the lexicon file.
    pub fn orphan_triples(&self) -> usize {
        self.orphan_triples
    }

    /// Concept list for a canonical entity surface, in file order.
    pub fn concepts_of(&self, surface: &str) -> &[String] {
        self.isa.get(surface).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Leftmost-longest greedy dictionary matching over case-folded tokens.
    ///
    /// Tokens must be non-empty and already case-folded (see
    /// [`fold_tokens`]). Returned mentions are in text order and never
    /// overlap.
    pub fn link_entities(&self, tokens: &[String]) -> Vec<Mention> {
        assert!(!tokens.is_empty(), "link_entities needs at least one token");
        let mut mentions = Vec::new();
        if self.lexicon.is_empty() {
            return mentions;
        }
        let mut i = 0;
        while i < tokens.len() {
            let max_len = self.max_entry_tokens.min(tokens.len() - i);
            let mut matched = 0;
            for len in (1..=max_len).rev() {
                let candidate = tokens[i..i + len].join(" ");
                if self.lexicon.contains(&candidate) {
                    mentions.push(Mention {
                        surface: candidate,
                        start: i,
                        len,
                    });
                    matched = len;
                    break;
                }
            }
            i += if matched > 0 { matched } else { 1 };
        }
        mentions
    }

    /// Concatenates the concept lists of the mentions in text order,
    /// deduplicates keeping the first occurrence, and truncates to
    /// `max_concepts`.
    pub fn conceptualize(&self, mentions: &[Mention], max_concepts: usize) -> ConceptSet {
        let mut set = ConceptSet::default();
        let mut seen = HashSet::new();
        for m in mentions {
            for c in self.concepts_of(&m.surface) {
                if seen.insert(c.clone()) {
                    set.concepts.push(c.clone());
                    set.origins.push(m.surface.clone());
                }
            }
        }
        set.concepts.truncate(max_concepts);
        set.origins.truncate(max_concepts);
        set
    }
}
