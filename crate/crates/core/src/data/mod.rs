//! Dataset schema, JSONL I/O, vocabulary and tokenization, deterministic
//! splits, the synthetic corpus and the mock annotator.

mod jsonl;
mod schema;
mod split;
mod synthetic;
mod vocab;

pub use jsonl::{load_jsonl, parse_record, read_jsonl, save_jsonl, write_jsonl};
pub use schema::{
    concept_index, ConceptVector, LabeledEssay, BOTTLENECK_WIDTH, CONCEPT_CLASSES, CONCEPT_NAMES, GRADE_CLASSES,
    NUM_CONCEPTS,
};
pub use split::{kfold_indices, partition_sizes, split, Split};
pub use synthetic::{
    essay_text, generate_synthetic, mock_annotate, synthetic_grade, synthetic_grade_weighted, FILLER, GRADE_WEIGHTS,
    MARKERS, SEGMENTS, WORDS_PER_SEGMENT,
};
pub use vocab::{
    pad_batch, split_tokens, TokenSequence, Vocab, DEFAULT_MIN_FREQUENCY, MAX_SEQUENCE_LEN, PAD_ID, PAD_TOKEN, UNK_ID,
    UNK_TOKEN,
};
