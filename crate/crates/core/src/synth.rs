//! Seeded generator for graded-quality interaction traces.
//!
//! Each ground truth is a sequence of pseudo-words. A model of quality `p`
//! answers with exactly `round(p * n)` of the `n` ground-truth tokens, kept in
//! order, so its expected lexical overlap with the truth and with other
//! models is fixed by `p`.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::InteractionTrace;

/// Models ordered from weakest to strongest, with their keep fractions.
pub const GRADED_MODELS: [(&str, f64); 7] = [
    ("alpaca-13b", 0.35),
    ("llama-2-13b", 0.45),
    ("chatglm-6b", 0.55),
    ("fastchat-t5-3b", 0.65),
    ("koala-13b", 0.75),
    ("vicuna-7b", 0.85),
    ("vicuna-13b", 0.95),
];

pub const CONTEXTS: [&str; 20] = [
    "automotive",
    "careers",
    "cooking",
    "education",
    "fashion",
    "finance",
    "gaming",
    "gardening",
    "health",
    "history",
    "law",
    "music",
    "parenting",
    "pets",
    "real-estate",
    "science",
    "sports",
    "technology",
    "travel",
    "weather",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_traces: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub vocabulary: usize,
    pub models: Vec<(String, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_traces: 500,
            min_tokens: 80,
            max_tokens: 120,
            vocabulary: 3000,
            models: GRADED_MODELS
                .iter()
                .map(|(m, p)| (m.to_string(), *p))
                .collect(),
        }
    }
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

fn make_vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.gen_range(2..=4);
        let w: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS[rng.gen_range(0..ONSETS.len())],
                    NUCLEI[rng.gen_range(0..NUCLEI.len())]
                )
            })
            .collect();
        words.insert(w);
    }
    words.into_iter().collect()
}

/// Keeps exactly `round(keep * tokens.len())` tokens, in order.
fn degrade(rng: &mut ChaCha8Rng, tokens: &[&str], keep: f64) -> String {
    let n = tokens.len();
    let k = ((keep * n as f64).round() as usize).min(n);
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|i| tokens[i])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Vec<InteractionTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = make_vocabulary(&mut rng, cfg.vocabulary);
    (0..cfg.n_traces)
        .map(|i| {
            let context = CONTEXTS[i % CONTEXTS.len()].to_string();
            let n = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
            let tokens: Vec<&str> = (0..n)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
                .collect();
            let topic: Vec<&str> = tokens.iter().take(4).copied().collect();
            let answers: BTreeMap<String, String> = cfg
                .models
                .iter()
                .map(|(m, p)| (m.clone(), degrade(&mut rng, &tokens, *p)))
                .collect();
            InteractionTrace {
                question_id: format!("q{i:04}"),
                context: context.clone(),
                question: format!("in {context}, what about {}?", topic.join(" ")),
                ground_truth: Some(tokens.join(" ")),
                answers,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{lexical_score, tokenize};

    #[test]
    fn deterministic_and_graded() {
        let cfg = SynthConfig {
            n_traces: 40,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        assert_eq!(a.len(), 40);
        let mut means = vec![0.0; cfg.models.len()];
        for t in &a {
            let truth = t.ground_truth.as_deref().unwrap();
            for (j, (m, p)) in cfg.models.iter().enumerate() {
                let answer = &t.answers[m];
                let n = tokenize(truth).len();
                assert_eq!(tokenize(answer).len(), ((p * n as f64).round()) as usize);
                means[j] += lexical_score(answer, truth) / a.len() as f64;
            }
        }
        assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    }

    #[test]
    fn contexts_cycle() {
        let traces = generate(&SynthConfig {
            n_traces: 25,
            ..SynthConfig::default()
        });
        assert_eq!(traces[0].context, traces[20].context);
        assert_ne!(traces[0].context, traces[1].context);
    }
}
