//! Fixed workloads shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treecrf::scorer::{Model, ModelConfig};
use treecrf::synthetic::{flat_sentences, PCFG_LABELS};
use treecrf::{LabelVocab, Sentence};

/// `count` score matrices of size `len`, uniform in [-2, 2).
pub fn score_matrices(count: usize, len: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Array2::from_shape_fn((len, len), |_| rng.gen_range(-2.0..2.0)))
        .collect()
}

pub fn sentences(count: usize, len: usize, seed: u64) -> Vec<Sentence> {
    flat_sentences(&mut ChaCha8Rng::seed_from_u64(seed), count, len)
}

/// A model over `sentences` whose span and label weights are random, so
/// decoding does real work.
pub fn random_model(config: ModelConfig, sentences: &[Sentence], seed: u64) -> Model {
    let labels = LabelVocab::from(PCFG_LABELS.map(String::from).to_vec());
    let mut model = Model::for_corpus(config, sentences, labels, seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(b) = model.params.bracket.as_mut() {
        b.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    model.params.label.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    model
}
