use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Shuffles sentence indices and cuts them greedily into batches of at
/// most `batch_words` tokens; a longer sentence gets a batch of its own.
/// Each batch is ordered by decreasing length.
pub fn make_batches(lengths: &[usize], batch_words: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut words = 0;
    for k in order {
        if !cur.is_empty() && words + lengths[k] > batch_words {
            batches.push(std::mem::take(&mut cur));
            words = 0;
        }
        cur.push(k);
        words += lengths[k];
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    for b in &mut batches {
        // stable, so equal lengths keep their shuffled order
        b.sort_by_key(|&k| std::cmp::Reverse(lengths[k]));
    }
    batches
}
