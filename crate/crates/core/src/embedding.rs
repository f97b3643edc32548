//! Hashed bag-of-words sentence embedding and cosine projection.

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub hash_seed: u64,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            hash_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Clone, Debug, Default)]
pub struct Embedder {
    cfg: EmbedderConfig,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Self {
        assert!(cfg.dim > 0, "embedding dimension must be positive");
        Self { cfg }
    }

    pub fn config(&self) -> EmbedderConfig {
        self.cfg
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(self.cfg.hash_seed, token.as_bytes()) % self.cfg.dim as u64) as usize
    }

    /// Token counts hashed into `dim` buckets, L2-normalized. Empty text
    /// (after normalization) maps to the zero vector.
    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.cfg.dim];
        for tok in tokenize(text) {
            values[self.bucket(&tok)] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        EmbeddingVector::from_values(values)
    }

    pub fn project_to_nearest<S: AsRef<str>>(
        &self,
        text: &str,
        candidates: &[S],
    ) -> Option<(usize, f64)> {
        let query = self.embed(text);
        let embedded: Vec<EmbeddingVector> =
            candidates.iter().map(|c| self.embed(c.as_ref())).collect();
        nearest(&query, candidates, &embedded)
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> f64 {
    if u.norm == 0.0 || v.norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    (dot / (u.norm * v.norm)).clamp(-1.0, 1.0)
}

/// Index and score of the candidate with the highest cosine to `query`.
/// Ties go to the lexicographically smallest candidate string.
pub fn nearest<S: AsRef<str>>(
    query: &EmbeddingVector,
    candidates: &[S],
    embedded: &[EmbeddingVector],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in embedded.iter().enumerate() {
        let score = cosine(query, e);
        best = match best {
            None => Some((i, score)),
            Some((_, s)) if score > s => Some((i, score)),
            Some((j, s)) if score == s && candidates[i].as_ref() < candidates[j].as_ref() => {
                Some((i, score))
            }
            keep => keep,
        };
    }
    best
}

/// Free-function form of [`Embedder::project_to_nearest`] returning the
/// winning string.
pub fn project_to_nearest<'a>(
    embedder: &Embedder,
    text: &str,
    candidates: &'a [String],
) -> Option<(&'a str, f64)> {
    embedder
        .project_to_nearest(text, candidates)
        .map(|(i, s)| (candidates[i].as_str(), s))
}

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(dim: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        EmbeddingVector::from_values(v)
    }

    #[test]
    fn embedding_is_deterministic() {
        let e = Embedder::default();
        assert_eq!(e.embed("pick up the apple"), e.embed("pick up the apple"));
    }

    #[test]
    fn case_and_punctuation_are_ignored() {
        let e = Embedder::default();
        assert_eq!(e.embed("Pick up the apple."), e.embed("pick up the apple"));
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = Embedder::default().embed("");
        assert!(v.is_zero());
        assert_eq!(v.norm(), 0.0);
        assert_eq!(v.dim(), DEFAULT_DIM);
        assert!(Embedder::default().embed("?!").is_zero());
    }

    #[test]
    fn orthogonal_one_hots_have_zero_cosine() {
        assert_eq!(cosine(&one_hot(8, 1), &one_hot(8, 5)), 0.0);
        assert_eq!(cosine(&one_hot(8, 3), &one_hot(8, 3)), 1.0);
    }

    #[test]
    fn projection_prefers_token_overlap() {
        let e = Embedder::default();
        let c = vec!["pick up the sponge".to_string(), "go to the table".to_string()];
        // Shares {the, sponge} with the first and {the} with the second.
        let (w, s) = project_to_nearest(&e, "grab the sponge", &c).unwrap();
        assert_eq!(w, "pick up the sponge");
        let first = cosine(&e.embed("grab the sponge"), &e.embed(&c[0]));
        let second = cosine(&e.embed("grab the sponge"), &e.embed(&c[1]));
        assert!(first > second);
        assert_eq!(s, first);
    }

    #[test]
    fn zero_query_falls_back_to_lexicographic_first() {
        let e = Embedder::default();
        let c = vec!["zeta".to_string(), "alpha".to_string(), "mid".to_string()];
        assert_eq!(project_to_nearest(&e, "...", &c), Some(("alpha", 0.0)));
    }

    #[test]
    fn exact_candidate_projects_to_itself() {
        let e = Embedder::default();
        let c = vec!["go to the table".to_string(), "find a sponge".to_string()];
        let (w, s) = project_to_nearest(&e, "find a sponge", &c).unwrap();
        assert_eq!(w, "find a sponge");
        assert!((s - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
            let e = Embedder::default();
            let (u, v) = (e.embed(&a), e.embed(&b));
            prop_assert_eq!(cosine(&u, &v), cosine(&v, &u));
            let c = cosine(&u, &v);
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn cosine_ignores_positive_scaling(
            vals in proptest::collection::vec(-5.0f64..5.0, 16),
            other in proptest::collection::vec(-5.0f64..5.0, 16),
            k in 0.01f64..100.0,
        ) {
            let u = EmbeddingVector::from_values(vals.clone());
            let scaled = EmbeddingVector::from_values(vals.iter().map(|x| x * k).collect());
            let v = EmbeddingVector::from_values(other);
            prop_assert!((cosine(&u, &v) - cosine(&scaled, &v)).abs() < 1e-9);
        }
    }
}
