//! Synthetic corpus with fully known concept and grade structure, plus a
//! deterministic annotator that reads the same marker conventions.
//!
//! Every concept owns one marker word. An essay is one segment per concept,
//! in schema order, of [`WORDS_PER_SEGMENT`] words: segment `k` opens with
//! `c_k` copies of the marker of concept `k` and is padded with words drawn
//! at random from a small filler list. Marker counts are therefore token
//! frequencies, and every essay has the same length.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schema::{ConceptVector, LabeledEssay, CONCEPT_CLASSES, GRADE_CLASSES, NUM_CONCEPTS};
use super::vocab::split_tokens;

/// Marker words in schema order.
pub const MARKERS: [&str; NUM_CONCEPTS] = [
    "thesis",
    "evidence",
    "therefore",
    "spelling",
    "terminology",
    "although",
    "analysis",
    "smoothly",
];

pub const FILLER: [&str; 4] = ["the", "a", "student", "school"];

/// One segment per concept.
pub const SEGMENTS: usize = NUM_CONCEPTS;
/// Enough slots for the highest concept score.
pub const WORDS_PER_SEGMENT: usize = CONCEPT_CLASSES - 1;

/// Per-concept weights of the synthetic grade function (uniform).
pub const GRADE_WEIGHTS: [f64; NUM_CONCEPTS] = [1.0; NUM_CONCEPTS];

/// `clamp(round(weighted mean of concepts · 5/4), 0, 5)` with
/// [`GRADE_WEIGHTS`]. Halves round away from zero.
pub fn synthetic_grade(concepts: &ConceptVector) -> u8 {
    synthetic_grade_weighted(concepts, &GRADE_WEIGHTS)
}

pub fn synthetic_grade_weighted(concepts: &ConceptVector, weights: &[f64; NUM_CONCEPTS]) -> u8 {
    let total: f64 = weights.iter().sum();
    let mean = concepts
        .scores()
        .iter()
        .zip(weights)
        .map(|(&c, w)| c as f64 * w)
        .sum::<f64>()
        / total;
    let max_concept = (CONCEPT_CLASSES - 1) as f64;
    let max_grade = (GRADE_CLASSES - 1) as f64;
    (mean * max_grade / max_concept).round().clamp(0.0, max_grade) as u8
}

/// Generates `n` essays deterministically from `seed`.
pub fn generate_synthetic(n: usize, seed: u64) -> Vec<LabeledEssay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut scores = [0u8; NUM_CONCEPTS];
            for s in scores.iter_mut() {
                *s = rng.random_range(0..CONCEPT_CLASSES as u8);
            }
            let concepts = ConceptVector::new(scores).expect("sampled in range");
            LabeledEssay {
                id: format!("syn-{seed}-{i:05}"),
                text: essay_text(&concepts, &mut rng),
                grade: synthetic_grade(&concepts),
                concepts,
            }
        })
        .collect()
}

/// Renders an essay whose marker counts equal `concepts`.
pub fn essay_text(concepts: &ConceptVector, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = Vec::with_capacity(SEGMENTS * WORDS_PER_SEGMENT);
    for (k, &c) in concepts.scores().iter().enumerate() {
        let start = words.len();
        words.extend((0..c).map(|_| MARKERS[k]));
        while words.len() - start < WORDS_PER_SEGMENT {
            words.push(FILLER.choose(rng).expect("non-empty"));
        }
    }
    let mut text = String::new();
    let mut chars = words[0].chars();
    if let Some(first) = chars.next() {
        text.extend(first.to_uppercase());
        text.push_str(chars.as_str());
    }
    for w in &words[1..] {
        text.push(' ');
        text.push_str(w);
    }
    text
}

fn marker_table() -> &'static HashMap<&'static str, usize> {
    static TABLE: OnceLock<HashMap<&'static str, usize>> = OnceLock::new();
    TABLE.get_or_init(|| MARKERS.iter().enumerate().map(|(k, w)| (*w, k)).collect())
}

/// Deterministic stand-in for an LLM annotator: counts marker tokens per
/// concept and caps each count at 4.
pub fn mock_annotate(text: &str) -> ConceptVector {
    let table = marker_table();
    let mut counts = [0usize; NUM_CONCEPTS];
    for tok in split_tokens(text) {
        if let Some(&k) = table.get(tok.as_str()) {
            counts[k] += 1;
        }
    }
    let mut scores = [0u8; NUM_CONCEPTS];
    for (s, c) in scores.iter_mut().zip(counts) {
        *s = c.min(CONCEPT_CLASSES - 1) as u8;
    }
    ConceptVector::new(scores).expect("capped at 4")
}
