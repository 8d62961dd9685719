use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Byte-level tokens occupy 0..256; 256 is the document separator.
pub const BYTE_VOCAB: usize = 257;
pub const SEPARATOR: usize = 256;

/// A synthetic English-like byte corpus: Zipf-weighted words from a fixed
/// lexicon joined by spaces and ended with a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_docs: 600,
            min_words: 8,
            max_words: 40,
            seed: 1234,
        }
    }
}

const LEXICON: [&str; 48] = [
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "be",
    "by", "on", "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have",
    "an", "had", "they", "you", "were", "their", "one", "all", "we", "can", "her", "has",
    "there", "been", "if", "more", "when", "will", "would", "who", "so",
];

pub fn synthetic_corpus(spec: &CorpusSpec) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = (1..=LEXICON.len()).map(|r| 1.0 / r as f64).collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    (0..spec.n_docs)
        .map(|_| {
            let n = rng.random_range(spec.min_words..=spec.max_words.max(spec.min_words));
            let words: Vec<&str> = (0..n).map(|_| LEXICON[pick.sample(&mut rng)]).collect();
            let mut text = words.join(" ");
            text.push('.');
            text.bytes().map(usize::from).collect()
        })
        .collect()
}
