//! Short text classification with knowledge powered attention.
//!
//! Short texts are sparse: a headline or a search query rarely carries
//! enough words to classify on its own. This crate links each text against
//! an entity lexicon, pulls in the concepts a small knowledge base attaches
//! to those entities, and lets the classifier attend over that concept set
//! alongside a BiLSTM encoding of the text itself. Concepts are scored two
//! ways, for relevance to this text and for typicality within the concept
//! set, and a learned switch blends the two before the weighted concept
//! vector joins the text vector for the final decision.
//!
//! Everything runs on the CPU in `f64` with a small reverse-mode tape in
//! [`numerics`]; given a seed, training is deterministic down to the bytes
//! of the checkpoint. The `stcka` binary fronts the whole pipeline with
//! `train`, `eval`, `predict`, `attend`, and `kb-stats` verbs.
//!
//! The pipeline in one pass:
//!
//! ```
//! use stcka::config::ModelConfig;
//! use stcka::data;
//! use stcka::embedding::Vocabulary;
//! use stcka::knowledge::KnowledgeBase;
//! use stcka::model::{self, Parameters};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! # use rand::SeedableRng;
//! # let dir = tempfile::tempdir()?;
//! # let lexicon = dir.path().join("lexicon.txt");
//! # std::fs::write(&lexicon, "jay chou\n")?;
//! # let triples = dir.path().join("triples.tsv");
//! # std::fs::write(&triples, "jay chou\tsinger\n")?;
//! let kb = KnowledgeBase::load(&lexicon, &triples)?;
//!
//! let mut config = ModelConfig::default();
//! config.embed_dim = 8;
//! config.hidden_size = 4;
//! config.num_classes = Some(2);
//!
//! let tokens = vec!["jay".into(), "chou".into(), "sings".into(), "tonight".into()];
//! let vocab = Vocabulary::build(&[tokens], &[vec!["singer".into()]], 1);
//!
//! // One text, prepared exactly as training data would be.
//! let input = data::prepare_text(
//!     "jay chou sings tonight", &kb, &vocab,
//!     config.max_tokens, config.max_concepts,
//! );
//! assert_eq!(input.concept_names, ["singer"]);
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let params = Parameters::init(&config, &vocab, 2, &mut rng)?;
//! let prediction = model::predict(&params, &input, &config)?;
//! assert_eq!(prediction.probs.len(), 2);
//! # Ok(()) }
//! ```

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod embedding;
pub mod encoder;
pub mod knowledge;
pub mod model;
pub mod numerics;
pub mod report;

// Book chapters double as doc-tests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/knowledge.md")]
    mod knowledge {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
