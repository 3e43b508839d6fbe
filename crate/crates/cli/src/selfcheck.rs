//! Cross-checks of the dynamic programs and the model gradients against
//! brute-force enumeration and finite differences.

use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use treecrf::chart::{cky, inside, marginals, mbr_decode, CkyResult, LabelChart};
use treecrf::oracle::{
    brute_argmax, brute_labeled_log_z, brute_log_z, brute_marginals, brute_mbr, enumerate_trees, finite_diff,
};
use treecrf::scorer::{check_gradients, Model, ModelConfig, SpanScorer};
use treecrf::training::{crf_bracket_loss, one_stage_crf_loss, LabeledSpan};
use treecrf::{LabelVocab, Result, Sentence, SpanChart, UnlabeledTree};

/// The chart routines under test. Swapping one for a broken version must
/// make its check fail.
#[derive(Clone, Copy)]
pub struct Kernels {
    pub log_z: fn(&SpanChart) -> Result<Vec<f64>>,
    pub marginals: fn(&SpanChart) -> Result<SpanChart>,
    pub cky: fn(&SpanChart) -> Result<CkyResult>,
}

fn library_log_z(c: &SpanChart) -> Result<Vec<f64>> {
    Ok(inside(c)?.log_z)
}

impl Default for Kernels {
    fn default() -> Self {
        Kernels {
            log_z: library_log_z,
            marginals,
            cky,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<12} {}", self.name, self.detail)
    }
}

const TOL: f64 = 1e-9;

/// `cases` random matrices per length 2..=8, scores N(0, 2^2), from `seed`.
pub fn random_cases(cases: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in 2..=8 {
        for _ in 0..cases {
            out.push(Array2::from_shape_fn((n, n), |_| {
                2.0 * rng.sample::<f64, _>(StandardNormal)
            }));
        }
    }
    out
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    match run() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail: format!("{detail} ({:.2}s)", start.elapsed().as_secs_f64()),
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn log_z_check(k: &Kernels, mats: &[Array2<f64>]) -> Result<(bool, String)> {
    let z = (k.log_z)(&SpanChart::from_matrices(mats)?)?;
    let mut worst: f64 = 0.0;
    for (m, zb) in mats.iter().zip(&z) {
        worst = worst.max((brute_log_z(m)? - zb).abs());
    }
    Ok((worst <= TOL, format!("{} charts, max |err| {worst:.2e}", mats.len())))
}

fn marginal_check(k: &Kernels, mats: &[Array2<f64>]) -> Result<(bool, String)> {
    let p = (k.marginals)(&SpanChart::from_matrices(mats)?)?;
    let (mut worst, mut worst_sum): (f64, f64) = (0.0, 0.0);
    for (b, m) in mats.iter().enumerate() {
        let n = m.nrows();
        let brute = brute_marginals(m)?;
        let mut sum = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((brute[[i, j]] - p.get(b, i, j)).abs());
                if j > i {
                    sum += p.get(b, i, j);
                }
            }
        }
        worst_sum = worst_sum.max((sum - (n - 1) as f64).abs());
    }
    let ok = worst <= TOL && worst_sum <= TOL;
    Ok((ok, format!("max |err| {worst:.2e}, max |sum - (n-1)| {worst_sum:.2e}")))
}

fn cky_check(k: &Kernels, mats: &[Array2<f64>]) -> Result<(bool, String)> {
    let r = (k.cky)(&SpanChart::from_matrices(mats)?)?;
    let (mut worst, mut wrong): (f64, usize) = (0.0, 0);
    for (b, m) in mats.iter().enumerate() {
        let (tree, best) = brute_argmax(m, TOL)?;
        worst = worst.max((r.scores[b] - best).abs());
        wrong += usize::from(r.trees[b] != tree);
    }
    Ok((
        worst <= TOL && wrong == 0,
        format!("max |score err| {worst:.2e}, {wrong} trees differ"),
    ))
}

fn mbr_check(k: &Kernels, mats: &[Array2<f64>]) -> Result<(bool, String)> {
    let chart = SpanChart::from_matrices(mats)?;
    let direct = mbr_decode(&chart)?;
    let composed = (k.cky)(&(k.marginals)(&chart)?)?;
    let identical = direct.trees == composed.trees && direct.scores == composed.scores;
    let mut wrong = 0;
    for (b, m) in mats.iter().enumerate() {
        wrong += usize::from(brute_mbr(m, TOL)?.0 != direct.trees[b]);
    }
    Ok((
        identical && wrong == 0,
        format!("identical to cky(marginals): {identical}, {wrong} trees differ from enumeration"),
    ))
}

fn random_gold(n: usize, rng: &mut ChaCha8Rng) -> Result<UnlabeledTree> {
    let all = enumerate_trees(n)?.trees;
    Ok(all[rng.gen_range(0..all.len())].clone())
}

/// Adjoints of the tree CRF loss against central differences of the loss.
fn adjoint_check(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in 2..=6 {
        for _ in 0..5 {
            let m = Array2::from_shape_fn((n, n), |_| rng.gen_range(-2.0..2.0));
            let gold = random_gold(n, &mut rng)?;
            let chart = SpanChart::from_matrices(std::slice::from_ref(&m))?;
            let adj = crf_bracket_loss(&chart, std::slice::from_ref(&gold))?.adjoints;
            let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let point: Vec<f64> = cells.iter().map(|&(i, j)| m[[i, j]]).collect();
            let loss = |x: &[f64]| {
                let mut mm = m.clone();
                for (&(i, j), &v) in cells.iter().zip(x) {
                    mm[[i, j]] = v;
                }
                let c = SpanChart::from_matrices(&[mm]).expect("square");
                crf_bracket_loss(&c, std::slice::from_ref(&gold)).expect("valid").losses[0]
            };
            let fd = finite_diff(loss, &point, 1e-5)?;
            for (&(i, j), g) in cells.iter().zip(fd) {
                worst = worst.max((adj.get(0, i, j) - g).abs());
            }
            count += 1;
        }
    }
    Ok((worst <= 1e-5, format!("{count} sentences, max |err| {worst:.2e}")))
}

fn labeled_gold(tree: &UnlabeledTree, labels: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledSpan> {
    tree.spans()
        .iter()
        .map(|&(i, j)| (i, j, rng.gen_range(0..labels)))
        .collect()
}

/// One-stage loss with one label against the bracketing loss, and the
/// one-stage normalizer with three labels against joint enumeration.
fn one_stage_check(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut single: f64 = 0.0;
    for n in 2..=8 {
        for _ in 0..10 {
            let g = Array3::from_shape_fn((n, n, 1), |_| rng.gen_range(-2.0..2.0));
            let gold = random_gold(n, &mut rng)?;
            let spans = Array2::from_shape_fn((n, n), |(i, j)| g[[i, j, 0]]);
            let two = crf_bracket_loss(&SpanChart::from_matrices(&[spans])?, std::slice::from_ref(&gold))?.losses[0];
            let lg = labeled_gold(&gold, 1, &mut rng);
            let one = one_stage_crf_loss(&LabelChart::from_grids(&[g])?, &[lg])?.losses[0];
            single = single.max((one - two).abs());
        }
    }
    let mut joint: f64 = 0.0;
    for _ in 0..10 {
        let g = Array3::from_shape_fn((4, 4, 3), |_| rng.gen_range(-2.0..2.0));
        let gold = random_gold(4, &mut rng)?;
        let lg = labeled_gold(&gold, 3, &mut rng);
        let gold_score: f64 = lg.iter().filter(|(i, j, _)| j > i).map(|&(i, j, l)| g[[i, j, l]]).sum();
        let loss = one_stage_crf_loss(&LabelChart::from_grids(std::slice::from_ref(&g))?, &[lg])?.losses[0];
        joint = joint.max((loss + gold_score - brute_labeled_log_z(&g)?).abs());
    }
    let ok = single <= 1e-12 && joint <= TOL;
    Ok((
        ok,
        format!("one label max |err| {single:.2e}, three labels max |log Z err| {joint:.2e}"),
    ))
}

/// A small model with random biaffine weights, so every layer gets a
/// gradient.
pub fn gradient_model(span_scorer: SpanScorer, seed: u64) -> Result<Model> {
    let cfg = ModelConfig {
        span_scorer,
        lstm_layers: 2,
        ..ModelConfig::tiny()
    };
    let s = Sentence::from_whitespace("the cat sat down")?;
    let labels = LabelVocab::from(vec!["A".to_string(), "B".to_string(), "C".to_string()]);
    let mut model = Model::for_corpus(cfg, [&s], labels, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(b) = model.params.bracket.as_mut() {
        b.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    model.params.label.w.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    Ok(model)
}

fn gradient_check() -> Result<(bool, String)> {
    let mut groups = 0;
    let mut failed = Vec::new();
    let mut worst: f64 = 0.0;
    // dropout seeds chosen so no pre-activation lies within the difference
    // step of the leaky kink
    for (scorer, dropout_seed) in [(SpanScorer::Biaffine, 11), (SpanScorer::Minus, 4)] {
        let model = gradient_model(scorer, 7)?;
        let enc = model.encode(&Sentence::from_whitespace("the cat sat down")?);
        for g in check_gradients(&model, &enc, Some(dropout_seed), 1e-4, 1e-4, 1e-3)? {
            groups += 1;
            worst = worst.max(g.max_abs_err);
            if !g.passed() {
                failed.push(format!("{scorer:?}/{}", g.name));
            }
        }
    }
    let detail = if failed.is_empty() {
        format!("{groups} parameter groups, max |err| {worst:.2e}")
    } else {
        format!("{} of {groups} groups failed: {}", failed.len(), failed.join(", "))
    };
    Ok((failed.is_empty(), detail))
}

/// Runs every check on `cases` charts per length, in a fixed order.
pub fn run(cases: usize, seed: u64, kernels: &Kernels) -> Vec<CheckResult> {
    let mats = random_cases(cases, seed);
    vec![
        check("logz", || log_z_check(kernels, &mats)),
        check("marginals", || marginal_check(kernels, &mats)),
        check("cky", || cky_check(kernels, &mats)),
        check("mbr", || mbr_check(kernels, &mats)),
        check("crf-adjoint", || adjoint_check(seed)),
        check("one-stage", || one_stage_check(seed)),
        check("gradients", gradient_check),
    ]
}
