//! Release gate: nine numbered criteria covering gradient fidelity,
//! attention semantics, oracle equivalence, the synthetic knowledge corpus,
//! determinism, degenerate inputs, shipped defaults, and embedding regimes.
//! Each test prints one `criterion N (...): PASS` line; a failing assert is
//! the corresponding FAIL.

mod common;

use std::io::Write as _;
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stcka::attention::{gamma_value, ConceptAttentionParams, GammaMode};
use stcka::config::{EmbedMode, ModelConfig, RunConfig};
use stcka::data::{self, LabelMap};
use stcka::embedding::{Vocabulary, FILTER_WIDTHS};
use stcka::knowledge::KnowledgeBase;
use stcka::model::{self, Parameters};
use stcka::numerics::{softmax_masked_kernel, Tape};

use common::{tiny_config, tiny_fixture, write_synthetic_corpus};

// ── helpers ──────────────────────────────────────────────────────────────

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stcka"))
}

/// Fresh attention params with randomized biases (init zeroes them, which
/// would leave the bias terms untested).
fn random_attention_params(
    rng: &mut ChaCha8Rng,
    concept_dim: usize,
    text_dim: usize,
    max_concepts: usize,
) -> ConceptAttentionParams {
    let mut params = ConceptAttentionParams::init(concept_dim, text_dim, 6, 5, max_concepts, rng);
    for b in params.cst_b.data_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    params.ccs_b.data_mut()[0] = rng.gen_range(-0.5..0.5);
    params.switch_b.data_mut()[0] = rng.gen_range(-0.5..0.5);
    params
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs one attention pass on a throwaway tape and returns the value slices
/// `(alpha, beta, gamma, a, p)`.
fn run_attention(
    params: &ConceptAttentionParams,
    concepts: &[f64],
    m: usize,
    concept_dim: usize,
    q: &[f64],
    mode: GammaMode,
) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>) {
    let cap = params.max_concepts();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let c_node = tape.constant(concepts.to_vec(), &[m, concept_dim]).unwrap();
    let q_node = tape.constant(q.to_vec(), &[q.len()]).unwrap();
    let mask: Vec<bool> = (0..cap).map(|i| i < m).collect();
    let nodes = bound.apply(&mut tape, c_node, q_node, &mask, mode).unwrap();
    (
        tape.value(nodes.alpha).to_vec(),
        tape.value(nodes.beta).to_vec(),
        gamma_value(&tape, nodes.gamma),
        tape.value(nodes.weights).to_vec(),
        tape.value(nodes.pooled).to_vec(),
    )
}

// ── criterion 1: gradient fidelity ───────────────────────────────────────

fn poke(params: &mut Parameters, tensor: usize, elem: usize, value: f64) {
    *params.tensors_mut()[tensor]
        .1
        .data_mut()
        .get_mut(elem)
        .unwrap() = value;
}

#[test]
fn criterion_1_gradient_fidelity() {
    let started = Instant::now();
    let config = tiny_config(3);
    let (vocab, example) = tiny_fixture();
    assert_eq!(example.input.word_ids.len(), 4);
    assert_eq!(example.input.num_concepts(), 2);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = Parameters::init(&config, &vocab, 3, &mut rng).unwrap();
    let batch = [&example];
    model::batch_loss_with_grads(&mut params, &batch, &config).unwrap();
    let grads: Vec<(&'static str, Vec<f64>)> = params
        .tensors()
        .iter()
        .map(|(name, t)| {
            let g = t
                .grad()
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()]);
            (*name, g)
        })
        .collect();

    const H: f64 = 1e-5;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (ti, (name, grad)) in grads.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = params.tensors()[ti].1.data()[j];
            poke(&mut params, ti, j, orig + H);
            let plus = model::batch_loss(&params, &batch, &config).unwrap();
            poke(&mut params, ti, j, orig - H);
            let minus = model::batch_loss(&params, &batch, &config).unwrap();
            poke(&mut params, ti, j, orig);
            let fd = (plus - minus) / (2.0 * H);
            let ad = grad[j];
            // Guarded denominator: for near-zero gradients the check
            // degrades to absolute agreement at 1e-6, which central
            // differences at h=1e-5 can honor.
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-2);
            assert!(
                rel < 1e-4,
                "{name}[{j}]: reverse {ad:.6e} vs central difference {fd:.6e} (rel {rel:.3e})"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient check took {elapsed:?}, budget is 60 s"
    );
    println!(
        "criterion 1 (gradient fidelity): PASS ({checked} parameters, worst rel {worst:.3e}, {elapsed:?})"
    );
}

// ── criterion 2: attention normalization ─────────────────────────────────

#[test]
fn criterion_2_attention_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let concept_dim = 6;
    let text_dim = 4;
    for trial in 0..1000 {
        let cap = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=cap);
        let params = random_attention_params(&mut rng, concept_dim, text_dim, cap);
        let concepts = random_vec(&mut rng, m * concept_dim);
        let q = random_vec(&mut rng, text_dim);
        let (alpha, beta, gamma, weights, _) =
            run_attention(&params, &concepts, m, concept_dim, &q, GammaMode::Learned);
        for (label, dist) in [("alpha", &alpha), ("beta", &beta), ("a", &weights)] {
            let sum: f64 = dist[..m].iter().sum();
            assert!(
                (sum - 1.0).abs() < 1e-9,
                "trial {trial}: {label} sums to {sum} over {m} real concepts"
            );
            assert!(
                dist[..m].iter().all(|w| *w > 0.0),
                "trial {trial}: {label} has a non-positive real weight"
            );
            assert!(
                dist[m..].iter().all(|w| *w == 0.0),
                "trial {trial}: {label} has a nonzero masked slot"
            );
        }
        assert!(
            gamma > 0.0 && gamma < 1.0,
            "trial {trial}: learned gamma {gamma} outside (0,1)"
        );
    }
    println!("criterion 2 (attention normalization): PASS (1000 instances)");
}

// ── criterion 3: ablation endpoints ──────────────────────────────────────

#[test]
fn criterion_3_ablation_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let concept_dim = 6;
    let text_dim = 4;
    for trial in 0..200 {
        let cap = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=cap);
        let params = random_attention_params(&mut rng, concept_dim, text_dim, cap);
        let concepts = random_vec(&mut rng, m * concept_dim);
        let q = random_vec(&mut rng, text_dim);
        let mask: Vec<bool> = (0..cap).map(|i| i < m).collect();
        for (value, keep) in [(1.0, "alpha"), (0.0, "beta")] {
            let (alpha, beta, gamma, weights, _) = run_attention(
                &params,
                &concepts,
                m,
                concept_dim,
                &q,
                GammaMode::Fixed(value),
            );
            assert_eq!(gamma, value);
            let kept = if value == 1.0 { &alpha } else { &beta };
            let expected = softmax_masked_kernel(kept, &mask).unwrap();
            for i in 0..cap {
                assert!(
                    (weights[i] - expected[i]).abs() < 1e-12,
                    "trial {trial}: fixed gamma {value} should reduce a to softmax of {keep} \
                     (slot {i}: {} vs {})",
                    weights[i],
                    expected[i]
                );
            }
        }
    }
    println!("criterion 3 (ablation endpoints): PASS (200 instances per endpoint)");
}

// ── criterion 4: oracle equivalence ──────────────────────────────────────

/// Softmax over the first `m` scores, zero-padded to `cap`; max-subtracted
/// like any careful hand implementation.
fn oracle_softmax(scores: &[f64], m: usize, cap: usize) -> Vec<f64> {
    let max = scores[..m].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores[..m].iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut out = vec![0.0; cap];
    for i in 0..m {
        out[i] = exps[i] / total;
    }
    out
}

/// Straight-line re-evaluation of the whole attention block: plain index
/// arithmetic, no tensors, no tape. Returns (alpha, beta, gamma, a, p).
fn oracle_attention(
    params: &ConceptAttentionParams,
    concepts: &[f64],
    m: usize,
    d: usize,
    q: &[f64],
) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>) {
    let cap = params.max_concepts();
    let d_a = params.cst_v.numel();
    let d_b = params.ccs_v.numel();
    let joint = d + q.len();

    let mut cst_scores = vec![0.0; m];
    for i in 0..m {
        let mut joined = Vec::with_capacity(joint);
        joined.extend_from_slice(&concepts[i * d..(i + 1) * d]);
        joined.extend_from_slice(q);
        let mut score = 0.0;
        for r in 0..d_a {
            let mut acc = params.cst_b.data()[r];
            for k in 0..joint {
                acc += params.cst_w.data()[r * joint + k] * joined[k];
            }
            score += params.cst_v.data()[r] * acc.tanh();
        }
        cst_scores[i] = score;
    }
    let alpha = oracle_softmax(&cst_scores, m, cap);

    let mut ccs_scores = vec![0.0; m];
    for i in 0..m {
        let mut score = 0.0;
        for r in 0..d_b {
            let mut acc = 0.0;
            for k in 0..d {
                acc += params.ccs_w.data()[r * d + k] * concepts[i * d + k];
            }
            score += params.ccs_v.data()[r] * acc.tanh();
        }
        ccs_scores[i] = score + params.ccs_b.data()[0];
    }
    let beta = oracle_softmax(&ccs_scores, m, cap);

    let mut z = params.switch_b.data()[0];
    for i in 0..cap {
        z += params.switch_w.data()[i] * alpha[i];
        z += params.switch_w.data()[cap + i] * beta[i];
    }
    let gamma = 1.0 / (1.0 + (-z).exp());

    let blended: Vec<f64> = (0..m)
        .map(|i| gamma * alpha[i] + (1.0 - gamma) * beta[i])
        .collect();
    let weights = oracle_softmax(&blended, m, cap);

    let mut pooled = vec![0.0; d];
    for i in 0..m {
        for k in 0..d {
            pooled[k] += weights[i] * concepts[i * d + k];
        }
    }
    (alpha, beta, gamma, weights, pooled)
}

/// Leftmost-longest reference linker: at each position try every lexicon
/// entry, take the longest match, jump past it.
fn oracle_link(tokens: &[String], entries: &[Vec<String>]) -> Vec<(String, usize, usize)> {
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

#[test]
fn criterion_4_oracle_equivalence() {
    // Attention block vs the straight-line oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let concept_dim = 6;
    let text_dim = 4;
    for trial in 0..100 {
        let cap = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=cap);
        let params = random_attention_params(&mut rng, concept_dim, text_dim, cap);
        let concepts = random_vec(&mut rng, m * concept_dim);
        let q = random_vec(&mut rng, text_dim);
        let (alpha, beta, gamma, weights, pooled) =
            run_attention(&params, &concepts, m, concept_dim, &q, GammaMode::Learned);
        let (o_alpha, o_beta, o_gamma, o_weights, o_pooled) =
            oracle_attention(&params, &concepts, m, concept_dim, &q);
        for (label, got, want) in [
            ("alpha", &alpha, &o_alpha),
            ("beta", &beta, &o_beta),
            ("a", &weights, &o_weights),
            ("p", &pooled, &o_pooled),
        ] {
            for (i, (g, w)) in got.iter().zip(want).enumerate() {
                assert!(
                    (g - w).abs() < 1e-10,
                    "trial {trial}: {label}[{i}] = {g} but oracle says {w}"
                );
            }
        }
        assert!(
            (gamma - o_gamma).abs() < 1e-10,
            "trial {trial}: gamma {gamma} vs oracle {o_gamma}"
        );
    }

    // Entity linking vs the brute-force oracle: 50 lexicons x 10 texts.
    let words = ["north", "east", "gate", "old", "stone", "mill"];
    let dir = tempfile::tempdir().unwrap();
    let mut checked_pairs = 0;
    for lex_id in 0..50 {
        let mut entries: Vec<Vec<String>> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..rng.gen_range(5..=50) {
            let len = rng.gen_range(1..=3);
            let phrase: Vec<String> = (0..len)
                .map(|_| words[rng.gen_range(0..words.len())].to_string())
                .collect();
            if seen.insert(phrase.join(" ")) {
                entries.push(phrase);
            }
        }
        let lexicon_path = dir.path().join(format!("lex{lex_id}.txt"));
        let triples_path = dir.path().join(format!("isa{lex_id}.tsv"));
        let lines: Vec<String> = entries.iter().map(|e| e.join(" ")).collect();
        std::fs::write(&lexicon_path, lines.join("\n") + "\n").unwrap();
        std::fs::write(&triples_path, "# no triples\n").unwrap();
        let kb = KnowledgeBase::load(&lexicon_path, &triples_path).unwrap();
        for _ in 0..10 {
            let tokens: Vec<String> = (0..rng.gen_range(1..=30))
                .map(|_| words[rng.gen_range(0..words.len())].to_string())
                .collect();
            let got: Vec<(String, usize, usize)> = kb
                .link_entities(&tokens)
                .into_iter()
                .map(|m| (m.surface, m.start, m.len))
                .collect();
            let want = oracle_link(&tokens, &entries);
            assert_eq!(got, want, "lexicon {lex_id}, text {tokens:?}");
            checked_pairs += 1;
        }
    }
    assert_eq!(checked_pairs, 500);
    println!("criterion 4 (oracle equivalence): PASS (100 attention instances, 500 linking pairs)");
}

// ── criterion 5: power of knowledge ──────────────────────────────────────

/// Loads the synthetic corpus and trains with or without the knowledge
/// base. Returns the per-epoch validation (= training set) accuracies.
fn train_synthetic(with_knowledge: bool, config: &ModelConfig) -> Vec<f64> {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_synthetic_corpus(dir.path());
    let rows = data::load_dataset(&corpus.train).unwrap();
    let labels = LabelMap::from_training(&rows);
    let kb = if with_knowledge {
        KnowledgeBase::load(&corpus.lexicon, &corpus.triples).unwrap()
    } else {
        KnowledgeBase::empty()
    };
    let (texts, concepts) = data::vocab_inputs(&rows, &kb, config.max_tokens, config.max_concepts);
    let vocab = Vocabulary::build(&texts, &concepts, config.min_freq);
    let examples = data::prepare_split(
        "train.tsv",
        &rows,
        &labels,
        &kb,
        &vocab,
        config.max_tokens,
        config.max_concepts,
    )
    .unwrap();
    assert_eq!(examples.len(), 100);
    if with_knowledge {
        assert!(examples.iter().all(|e| e.input.num_concepts() == 2));
    } else {
        assert!(examples.iter().all(|e| e.input.num_concepts() == 0));
    }
    let outcome = model::train(config, &vocab, &examples, &examples, None).unwrap();
    outcome.metrics.iter().map(|m| m.valid_acc).collect()
}

#[test]
fn criterion_5_power_of_knowledge() {
    let started = Instant::now();
    let mut config = tiny_config(2);
    config.min_freq = 2;
    config.learning_rate = 0.02;
    config.batch_size = 10;
    config.epochs = 200;
    config.seed = 7;

    let full = train_synthetic(true, &config);
    let best_full = full.iter().cloned().fold(0.0, f64::max);
    assert!(
        best_full >= 0.95,
        "full model only reaches {best_full} training accuracy"
    );

    let ablated = train_synthetic(false, &config);
    let best_ablated = ablated.iter().cloned().fold(0.0, f64::max);
    assert!(
        best_ablated <= 0.65,
        "knowledge-off ablation reaches {best_ablated}, expected chance level"
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "synthetic corpus runs took {elapsed:?}, budget is 5 min"
    );
    println!(
        "criterion 5 (power of knowledge): PASS (full {best_full:.4}, ablated {best_ablated:.4}, {elapsed:?})"
    );
}

// ── criterion 6: determinism ─────────────────────────────────────────────

#[test]
fn criterion_6_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_synthetic_corpus(dir.path());
    let mut outputs = Vec::new();
    for run in 0..2 {
        let run_dir = dir.path().join(format!("run{run}"));
        std::fs::create_dir(&run_dir).unwrap();
        let checkpoint = run_dir.join("model.ckpt");
        let metrics = run_dir.join("metrics.csv");
        let config_path = run_dir.join("run.conf");
        std::fs::write(
            &config_path,
            format!(
                "embed_dim = 8\nhidden_size = 4\ncst_attn_dim = 6\nccs_attn_dim = 5\n\
                 max_concepts = 3\nmax_tokens = 8\nnum_classes = 2\nmin_freq = 2\n\
                 learning_rate = 0.02\nbatch_size = 10\nepochs = 3\nseed = 11\n\
                 train = {train}\nvalid = {train}\nlexicon = {lex}\ntriples = {isa}\n\
                 checkpoint = {ckpt}\nout = {out}\n",
                train = corpus.train.display(),
                lex = corpus.lexicon.display(),
                isa = corpus.triples.display(),
                ckpt = checkpoint.display(),
                out = metrics.display(),
            ),
        )
        .unwrap();
        let status = bin()
            .args(["train", "--config"])
            .arg(&config_path)
            .status()
            .unwrap();
        assert!(status.success(), "training run {run} failed");
        outputs.push((
            std::fs::read(&metrics).unwrap(),
            std::fs::read(&checkpoint).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "metric CSVs differ between runs");
    assert_eq!(
        outputs[0].1, outputs[1].1,
        "checkpoints differ between runs"
    );
    println!("criterion 6 (determinism): PASS (bitwise-identical CSV and checkpoint)");
}

// ── criterion 7: degenerate inputs ───────────────────────────────────────

#[test]
fn criterion_7_degenerate_inputs() {
    // Library level: a text with no linkable entity pools to zero.
    let config = tiny_config(2);
    let (vocab, example) = tiny_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = Parameters::init(&config, &vocab, 2, &mut rng).unwrap();
    let bare = data::prepare_text(
        &example.input.text,
        &KnowledgeBase::empty(),
        &vocab,
        config.max_tokens,
        config.max_concepts,
    );
    assert_eq!(bare.num_concepts(), 0);
    let prediction = model::predict(&params, &bare, &config).unwrap();
    assert!(prediction.attention.pooled.iter().all(|v| *v == 0.0));
    let total: f64 = prediction.probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);

    // Binary level: a corpus where half the lines link nothing flows
    // through every verb.
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.tsv");
    std::fs::write(
        &train,
        "music\tjay chou sings well tonight\n\
         music\tjay chou released a new album\n\
         tech\tthe compiler crashed again\n\
         tech\tkernel update broke the driver\n",
    )
    .unwrap();
    let lexicon = dir.path().join("lexicon.txt");
    std::fs::write(&lexicon, "jay chou\n").unwrap();
    let triples = dir.path().join("triples.tsv");
    std::fs::write(&triples, "jay chou\tsinger\njay chou\tmusician\n").unwrap();
    let checkpoint = dir.path().join("model.ckpt");
    let metrics = dir.path().join("metrics.csv");
    let config_path = dir.path().join("run.conf");
    std::fs::write(
        &config_path,
        format!(
            "embed_dim = 8\nhidden_size = 4\ncst_attn_dim = 6\nccs_attn_dim = 5\n\
             max_concepts = 3\nmax_tokens = 8\nnum_classes = 2\nmin_freq = 1\n\
             learning_rate = 0.02\nbatch_size = 4\nepochs = 2\nseed = 3\n\
             train = {train}\nvalid = {train}\ntest = {train}\n\
             lexicon = {lex}\ntriples = {isa}\ncheckpoint = {ckpt}\nout = {out}\n",
            train = train.display(),
            lex = lexicon.display(),
            isa = triples.display(),
            ckpt = checkpoint.display(),
            out = metrics.display(),
        ),
    )
    .unwrap();

    let status = bin()
        .args(["train", "--config"])
        .arg(&config_path)
        .status()
        .unwrap();
    assert!(status.success(), "train failed on the mixed corpus");

    let eval = bin()
        .args(["eval", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(eval.status.success(), "eval failed on the mixed corpus");
    let printed = String::from_utf8(eval.stdout).unwrap();
    printed.trim().parse::<f64>().expect("eval prints a number");

    let mut child = bin()
        .args(["predict", "--config"])
        .arg(&config_path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"nothing linkable in this line\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "predict failed on an entity-free line");
    let line = String::from_utf8(out.stdout).unwrap();
    let (label, prob) = line.trim().split_once('\t').expect("label<TAB>prob");
    assert!(label == "music" || label == "tech");
    let prob: f64 = prob.parse().unwrap();
    assert!((0.0..=1.0).contains(&prob));

    let report = dir.path().join("report.jsonl");
    let attend = bin()
        .args(["attend", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert!(attend.status.success(), "attend failed on the mixed corpus");
    let mut saw_empty = 0;
    for line in std::fs::read_to_string(&report).unwrap().lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        let gamma = record["gamma"].as_f64().unwrap();
        assert!(gamma.is_finite());
        if record["entities"].as_array().unwrap().is_empty() {
            assert!(record["concepts"].as_array().unwrap().is_empty());
            saw_empty += 1;
        }
    }
    assert_eq!(saw_empty, 2, "both entity-free examples should be reported");
    println!("criterion 7 (degenerate inputs): PASS (train/eval/predict/attend, p = 0)");
}

// ── criterion 8: defaults conformance ────────────────────────────────────

#[test]
fn criterion_8_defaults_conformance() {
    let shipped = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.conf");
    let rc = RunConfig::from_file(std::path::Path::new(shipped)).unwrap();
    assert_eq!(rc.model.hidden_size, 64);
    assert_eq!(rc.model.cst_attn_dim, 70);
    assert_eq!(rc.model.ccs_attn_dim, 35);
    assert_eq!(rc.model.learning_rate, 0.01);
    assert_eq!(rc.model.batch_size, 64);
    assert_eq!(rc.model.epochs, 20);
    assert_eq!(FILTER_WIDTHS, [2, 3, 4]);

    // The shipped file and the built-in defaults must agree everywhere.
    let built_in = ModelConfig::default();
    assert_eq!(rc.model.embed_dim, built_in.embed_dim);
    assert_eq!(rc.model.hidden_size, built_in.hidden_size);
    assert_eq!(rc.model.cst_attn_dim, built_in.cst_attn_dim);
    assert_eq!(rc.model.ccs_attn_dim, built_in.ccs_attn_dim);
    assert_eq!(rc.model.max_concepts, built_in.max_concepts);
    assert_eq!(rc.model.max_tokens, built_in.max_tokens);
    assert_eq!(rc.model.min_freq, built_in.min_freq);
    assert_eq!(rc.model.learning_rate, built_in.learning_rate);
    assert_eq!(rc.model.batch_size, built_in.batch_size);
    assert_eq!(rc.model.epochs, built_in.epochs);
    assert_eq!(rc.model.gamma, built_in.gamma);
    assert_eq!(rc.model.embed_mode, built_in.embed_mode);
    println!("criterion 8 (defaults conformance): PASS");
}

// ── criterion 9: embedding regimes ───────────────────────────────────────

#[test]
fn criterion_9_embedding_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_synthetic_corpus(dir.path());
    let rows = data::load_dataset(&corpus.train).unwrap();
    let rows = &rows[..10];
    let labels = LabelMap::from_training(rows);
    let kb = KnowledgeBase::load(&corpus.lexicon, &corpus.triples).unwrap();

    let mut config = tiny_config(2);
    config.min_freq = 1;
    config.batch_size = 5;
    config.epochs = 1;
    config.seed = 9;

    let (texts, concepts) = data::vocab_inputs(rows, &kb, config.max_tokens, config.max_concepts);
    let vocab = Vocabulary::build(&texts, &concepts, config.min_freq);
    let examples = data::prepare_split(
        "train.tsv",
        rows,
        &labels,
        &kb,
        &vocab,
        config.max_tokens,
        config.max_concepts,
    )
    .unwrap();

    // Replicate the parameter draw train() performs for this seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fresh = Parameters::init(&config, &vocab, 2, &mut rng).unwrap();

    for mode in [EmbedMode::Static, EmbedMode::Rand, EmbedMode::NonStatic] {
        config.embed_mode = mode;
        let outcome = model::train(&config, &vocab, &examples, &examples, None).unwrap();
        let trained = &outcome.params.tables;
        let word_frozen = trained.word.data() == fresh.tables.word.data();
        let chars_frozen = trained.chars.data() == fresh.tables.chars.data();
        let concept_moved = trained.concept.data() != fresh.tables.concept.data();
        assert!(concept_moved, "{mode:?}: concept table never updates");
        if mode == EmbedMode::Static {
            assert!(word_frozen, "static mode must freeze the word table");
            assert!(chars_frozen, "static mode must freeze the char table");
        } else {
            assert!(!word_frozen, "{mode:?} must update the word table");
            assert!(!chars_frozen, "{mode:?} must update the char table");
        }
    }
    println!("criterion 9 (embedding regimes): PASS (static/rand/non-static)");
}
