//! Symbol tables for words, characters, and concepts.
//!
//! Every table reserves id 0 for padding and id 1 for unknown symbols.
//! Ids are assigned in first-occurrence order over the training corpus,
//! restricted to symbols whose corpus frequency reaches `min_freq`, so two
//! builds over the same corpus produce identical tables.

use std::collections::HashMap;

/// Padding id, shared by all three tables.
pub const PAD: u32 = 0;
/// Unknown-symbol id, shared by all three tables.
pub const UNK: u32 = 1;

const PAD_SYMBOL: &str = "<pad>";
const UNK_SYMBOL: &str = "<unk>";

/// One id space: dense, frozen after build, unknown symbols map to [`UNK`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

impl SymbolTable {
    fn new() -> Self {
        let mut table = SymbolTable {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        table.push(PAD_SYMBOL.to_string());
        table.push(UNK_SYMBOL.to_string());
        table
    }

    fn push(&mut self, symbol: String) {
        let id = self.symbols.len() as u32;
        self.index.insert(symbol.clone(), id);
        self.symbols.push(symbol);
    }

    /// Id of `symbol`, or [`UNK`] if it was never assigned one.
    pub fn id(&self, symbol: &str) -> u32 {
        self.index.get(symbol).copied().unwrap_or(UNK)
    }

    /// Symbol string for an id; panics on out-of-range ids.
    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    /// Total number of ids, padding and unknown included.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // PAD and UNK are always present
    }

    /// Real symbols (everything past PAD and UNK), in id order.
    pub fn real_symbols(&self) -> &[String] {
        &self.symbols[2..]
    }

    /// Rebuilds a table from the real-symbol list of [`Self::real_symbols`].
    pub fn from_real_symbols(symbols: &[String]) -> Self {
        let mut table = SymbolTable::new();
        for s in symbols {
            table.push(s.clone());
        }
        table
    }
}

/// Word, character, and concept tables built together from one corpus.
///
/// Characters are drawn from both word and concept strings, because concept
/// strings run through the same char CNN as words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub words: SymbolTable,
    pub chars: SymbolTable,
    pub concepts: SymbolTable,
}

impl Vocabulary {
    /// Builds all three tables. `texts[i]` holds the case-folded tokens of
    /// example `i` and `concepts[i]` its retrieved concept strings. The
    /// frequency threshold applies to every table; the default threshold of
    /// 1 admits everything seen.
    pub fn build(texts: &[Vec<String>], concepts: &[Vec<String>], min_freq: usize) -> Self {
        assert_eq!(texts.len(), concepts.len(), "per-example lists must align");
        let min_freq = min_freq.max(1);

        let mut word_counts: HashMap<&str, usize> = HashMap::new();
        let mut char_counts: HashMap<String, usize> = HashMap::new();
        let mut concept_counts: HashMap<&str, usize> = HashMap::new();
        for (tokens, cons) in texts.iter().zip(concepts) {
            for t in tokens {
                *word_counts.entry(t).or_default() += 1;
                for ch in t.chars() {
                    *char_counts.entry(ch.to_string()).or_default() += 1;
                }
            }
            for c in cons {
                *concept_counts.entry(c).or_default() += 1;
                for ch in c.chars() {
                    *char_counts.entry(ch.to_string()).or_default() += 1;
                }
            }
        }

        let mut words = SymbolTable::new();
        let mut chars = SymbolTable::new();
        let mut concept_table = SymbolTable::new();
        for (tokens, cons) in texts.iter().zip(concepts) {
            for t in tokens {
                if word_counts[t.as_str()] >= min_freq && words.id(t) == UNK && t != UNK_SYMBOL {
                    words.push(t.clone());
                }
                for ch in t.chars() {
                    let key = ch.to_string();
                    if char_counts[&key] >= min_freq && chars.id(&key) == UNK {
                        chars.push(key);
                    }
                }
            }
            for c in cons {
                if concept_counts[c.as_str()] >= min_freq
                    && concept_table.id(c) == UNK
                    && c != UNK_SYMBOL
                {
                    concept_table.push(c.clone());
                }
                for ch in c.chars() {
                    let key = ch.to_string();
                    if char_counts[&key] >= min_freq && chars.id(&key) == UNK {
                        chars.push(key);
                    }
                }
            }
        }
        Vocabulary {
            words,
            chars,
            concepts: concept_table,
        }
    }

    pub fn word_ids(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.words.id(t)).collect()
    }

    /// Character ids of one symbol (word or concept string).
    pub fn char_ids(&self, symbol: &str) -> Vec<u32> {
        symbol
            .chars()
            .map(|ch| self.chars.id(&ch.to_string()))
            .collect()
    }

    pub fn concept_ids(&self, concepts: &[String]) -> Vec<u32> {
        concepts.iter().map(|c| self.concepts.id(c)).collect()
    }
}
