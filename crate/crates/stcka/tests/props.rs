//! Property tests: the entity linker against a brute-force reference, the
//! concept merge against a straight dedup oracle, the masked softmax
//! simplex, and config round-tripping.

use std::collections::BTreeSet;
use std::fs;

use proptest::prelude::*;

use stcka::config::RunConfig;
use stcka::knowledge::{KnowledgeBase, Mention};
use stcka::numerics::softmax_masked_kernel;

const WORDS: [&str; 6] = ["north", "east", "gate", "old", "stone", "mill"];

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(&WORDS[..]).prop_map(str::to_string)
}

fn phrase() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 1..=3)
}

/// Writes a lexicon (and optional triples) and loads it back.
fn load_kb(dir: &std::path::Path, entries: &[Vec<String>], triples: &[(String, String)]) -> KnowledgeBase {
    let lexicon = dir.join("lexicon.txt");
    let lines: Vec<String> = entries.iter().map(|e| e.join(" ")).collect();
    fs::write(&lexicon, lines.join("\n") + "\n").unwrap();
    let triples_path = dir.join("triples.tsv");
    let mut body = String::from("# generated\n");
    for (entity, concept) in triples {
        body.push_str(&format!("{entity}\t{concept}\n"));
    }
    fs::write(&triples_path, body).unwrap();
    KnowledgeBase::load(&lexicon, &triples_path).unwrap()
}

/// Reference linker: longest lexicon match at each position, left to right.
fn reference_link(tokens: &[String], entries: &[Vec<String>]) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut best = 0;
        for entry in entries {
            let len = entry.len();
            if len > best && i + len <= tokens.len() && tokens[i..i + len] == entry[..] {
                best = len;
            }
        }
        if best > 0 {
            out.push((tokens[i..i + best].join(" "), i, best));
            i += best;
        } else {
            i += 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linker_matches_the_brute_force_reference(
        entries in prop::collection::vec(phrase(), 0..=50),
        tokens in prop::collection::vec(word(), 1..=30),
    ) {
        let dir = tempfile::tempdir().unwrap();
        // The lexicon deduplicates; mirror that for the reference.
        let mut seen = BTreeSet::new();
        let unique: Vec<Vec<String>> = entries
            .into_iter()
            .filter(|e| seen.insert(e.join(" ")))
            .collect();
        let kb = load_kb(dir.path(), &unique, &[]);

        let mentions = kb.link_entities(&tokens);
        let got: Vec<(String, usize, usize)> = mentions
            .iter()
            .map(|m| (m.surface.clone(), m.start, m.len))
            .collect();
        prop_assert_eq!(&got, &reference_link(&tokens, &unique));

        // Mentions never overlap and every surface is a lexicon member.
        for pair in mentions.windows(2) {
            prop_assert!(pair[0].start + pair[0].len <= pair[1].start);
        }
        let lexicon: BTreeSet<String> = unique.iter().map(|e| e.join(" ")).collect();
        for m in &mentions {
            prop_assert!(lexicon.contains(&m.surface));
            prop_assert_eq!(m.surface.split(' ').count(), m.len);
        }
    }

    #[test]
    fn concept_merge_matches_the_dedup_oracle(
        entities in prop::collection::vec(
            (phrase(), prop::collection::vec(prop::sample::select(&["person", "place", "tool", "thing", "idea"][..]), 0..=4)),
            1..=6,
        ),
        order in prop::collection::vec(any::<prop::sample::Index>(), 0..=8),
        cap in 1usize..=10,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut triples = Vec::new();
        for (surface, concepts) in &entities {
            for c in concepts {
                triples.push((surface.join(" "), c.to_string()));
            }
        }
        let lexicon: Vec<Vec<String>> = entities.iter().map(|(s, _)| s.clone()).collect();
        let kb = load_kb(dir.path(), &lexicon, &triples);

        // Mentions in arbitrary order, possibly repeating an entity.
        let mentions: Vec<Mention> = order
            .iter()
            .enumerate()
            .map(|(i, idx)| {
                let surface = idx.get(&entities).0.join(" ");
                let len = surface.split(' ').count();
                Mention { surface, start: i * 4, len }
            })
            .collect();

        let got = kb.conceptualize(&mentions, cap);

        // Oracle: concatenate in mention order, keep first, truncate.
        let mut want: Vec<(String, String)> = Vec::new();
        for m in &mentions {
            for c in kb.concepts_of(&m.surface) {
                if !want.iter().any(|(w, _)| w == c) {
                    want.push((c.clone(), m.surface.clone()));
                }
            }
        }
        want.truncate(cap);
        let (concepts, origins): (Vec<String>, Vec<String>) = want.into_iter().unzip();
        prop_assert_eq!(&got.concepts, &concepts);
        prop_assert_eq!(&got.origins, &origins);
        prop_assert!(got.len() <= cap);

        // Idempotence: merging the already-merged set changes nothing.
        let again = kb.conceptualize(&mentions, cap);
        prop_assert_eq!(got.concepts, again.concepts);
    }
}

proptest! {
    #[test]
    fn masked_softmax_lands_on_the_simplex(
        scores in prop::collection::vec(-50.0..50.0f64, 1..=12),
        flips in prop::collection::vec(any::<bool>(), 12),
    ) {
        let n = scores.len();
        let mut mask: Vec<bool> = flips[..n].to_vec();
        if !mask.iter().any(|&m| m) {
            mask[0] = true;
        }
        let out = softmax_masked_kernel(&scores, &mask).unwrap();
        let mut sum = 0.0;
        for i in 0..n {
            if mask[i] {
                prop_assert!(out[i] > 0.0);
                sum += out[i];
            } else {
                prop_assert!(out[i] == 0.0);
            }
        }
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_files_round_trip_through_dump(
        embed_half in 3usize..=32,
        hidden in 1usize..=32,
        lr in 1e-4..1.0f64,
        batch in 1usize..=64,
        epochs in 1usize..=50,
        seed in any::<u64>(),
        fixed_gamma in prop::option::of(0.0..=1.0f64),
        train_path in prop::option::of("[a-z0-9_./-]{1,20}"),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let seed_file = dir.path().join("seed.conf");
        fs::write(&seed_file, "").unwrap();
        let mut rc = RunConfig::from_file(&seed_file).unwrap();
        rc.set("embed_dim", &(2 * embed_half).to_string()).unwrap();
        rc.set("hidden_size", &hidden.to_string()).unwrap();
        rc.set("learning_rate", &lr.to_string()).unwrap();
        rc.set("batch_size", &batch.to_string()).unwrap();
        rc.set("epochs", &epochs.to_string()).unwrap();
        rc.set("seed", &seed.to_string()).unwrap();
        if let Some(v) = fixed_gamma {
            rc.set("gamma", &format!("fixed:{v}")).unwrap();
        }
        if let Some(p) = &train_path {
            rc.set("train", p).unwrap();
        }
        rc.model.validate().unwrap();

        let first = rc.dump();
        let echoed = dir.path().join("echo.conf");
        fs::write(&echoed, &first).unwrap();
        let reparsed = RunConfig::from_file(&echoed).unwrap();
        prop_assert_eq!(first, reparsed.dump());
    }
}
