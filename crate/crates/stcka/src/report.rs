//! Machine-readable attention reports.
//!
//! One JSON record per example, written as line-delimited JSON so the file
//! diffs cleanly and streams into plotting scripts. Each record carries the
//! raw text, the linked entities, one entry per real concept with its three
//! attention weights, the blend weight `gamma`, and the predicted and gold
//! labels. Weights echo the model output exactly; nothing is rounded.

use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, TextInput};
use crate::model::Prediction;

/// One concept's attention weights. `alpha` scores the concept against the
/// text, `beta` against the concept set, and `a` is the final blended
/// weight the model pooled with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConceptWeight {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
}

/// One example's attention view.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub text: String,
    pub entities: Vec<String>,
    pub concepts: Vec<ConceptWeight>,
    pub gamma: f64,
    pub pred: String,
    pub gold: String,
}

impl AttentionRecord {
    /// Assembles a record from one prediction. Only the real concepts
    /// appear; the padded tail of each distribution is dropped.
    pub fn new(
        input: &TextInput,
        prediction: &Prediction,
        labels: &LabelMap,
        gold: usize,
    ) -> Self {
        let a = &prediction.attention;
        let concepts = input
            .concept_names
            .iter()
            .enumerate()
            .map(|(i, name)| ConceptWeight {
                name: name.clone(),
                alpha: a.alpha[i],
                beta: a.beta[i],
                a: a.weights[i],
            })
            .collect();
        AttentionRecord {
            text: input.text.clone(),
            entities: input.entities.clone(),
            concepts,
            gamma: a.gamma,
            pred: labels.name(prediction.class()).to_string(),
            gold: labels.name(gold).to_string(),
        }
    }

    /// Renders the record as one JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
