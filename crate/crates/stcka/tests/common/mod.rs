//! Shared fixtures for the integration suite: the tiny model configuration,
//! a hand-built four-token example, and the synthetic two-class corpus whose
//! labels are decided by knowledge alone.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stcka::config::ModelConfig;
use stcka::data::{Example, TextInput};
use stcka::embedding::Vocabulary;

/// Smallest configuration the whole suite agrees on: wide enough that every
/// submodule has real work to do, small enough that finite differences over
/// every parameter stay cheap.
pub fn tiny_config(num_classes: usize) -> ModelConfig {
    let mut config = ModelConfig::default();
    config.embed_dim = 8;
    config.hidden_size = 4;
    config.cst_attn_dim = 6;
    config.ccs_attn_dim = 5;
    config.max_concepts = 3;
    config.max_tokens = 8;
    config.num_classes = Some(num_classes);
    config
}

/// One fully prepared example with four tokens and two concepts, plus the
/// vocabulary it was encoded against. Built by hand so tests control every
/// id without touching the filesystem.
pub fn tiny_fixture() -> (Vocabulary, Example) {
    let tokens: Vec<String> = ["jay", "chou", "sings", "well"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let concepts: Vec<String> = ["singer", "star"].iter().map(|s| s.to_string()).collect();
    let vocab = Vocabulary::build(&[tokens.clone()], &[concepts.clone()], 1);
    let input = TextInput {
        text: "jay chou sings well".to_string(),
        tokens: tokens.clone(),
        entities: vec!["jay chou".to_string()],
        concept_names: concepts.clone(),
        word_ids: vocab.word_ids(&tokens),
        char_ids: tokens.iter().map(|t| vocab.char_ids(t)).collect(),
        concept_ids: vocab.concept_ids(&concepts),
        concept_char_ids: concepts.iter().map(|c| vocab.char_ids(c)).collect(),
    };
    (vocab, Example { input, label: 1 })
}

/// Paths of a corpus written by [`write_synthetic_corpus`].
pub struct SyntheticCorpus {
    pub train: PathBuf,
    pub lexicon: PathBuf,
    pub triples: PathBuf,
}

/// Writes the knowledge-decides-everything corpus: 50 noise templates, each
/// emitted twice with a different injected entity. The two lines of a pair
/// share every surface word; only the entity differs, and each entity occurs
/// exactly once in the whole corpus. With `min_freq = 2` both the entity
/// word and its character fall below the vocabulary threshold, so the two
/// lines of a pair encode to identical id sequences. The entity's concepts
/// (`warm`/`cool`, plus a shared `thing`) are then the only signal that
/// separates the labels.
pub fn write_synthetic_corpus(dir: &Path) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise: Vec<String> = (0..20).map(|i| format!("filler{i:02}")).collect();
    let mut lines = Vec::new();
    let mut lexicon = Vec::new();
    let mut triples = Vec::new();
    for t in 0..50u32 {
        let template: Vec<String> = (0..5)
            .map(|_| noise[rng.gen_range(0..noise.len())].clone())
            .collect();
        let slot = rng.gen_range(0..=template.len());
        // Entities are single CJK characters, two fresh ones per template.
        let entity_a = char::from_u32(0x4E00 + 2 * t).unwrap().to_string();
        let entity_b = char::from_u32(0x4E00 + 2 * t + 1).unwrap().to_string();
        for (entity, label, concept) in
            [(&entity_a, "red", "warm"), (&entity_b, "blue", "cool")]
        {
            let mut words = template.clone();
            words.insert(slot, entity.clone());
            lines.push(format!("{label}\t{}", words.join(" ")));
            lexicon.push(entity.clone());
            // Class concept first, shared concept second: m = 2 everywhere.
            triples.push(format!("{entity}\t{concept}"));
            triples.push(format!("{entity}\tthing"));
        }
    }
    let corpus = SyntheticCorpus {
        train: dir.join("train.tsv"),
        lexicon: dir.join("lexicon.txt"),
        triples: dir.join("triples.tsv"),
    };
    fs::write(&corpus.train, lines.join("\n") + "\n").unwrap();
    fs::write(&corpus.lexicon, lexicon.join("\n") + "\n").unwrap();
    fs::write(&corpus.triples, triples.join("\n") + "\n").unwrap();
    corpus
}
