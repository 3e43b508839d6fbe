use super::*;
use crate::scorer::ModelConfig;
use crate::synthetic::pcfg_corpus;
use crate::treebank::{binarize_cnf, build_label_vocab, parse_bracketed, Direction};

fn corpus(count: usize) -> (Vec<ConstTree>, Vec<BinaryTree>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trees = pcfg_corpus(&mut rng, count, 4, 8);
    let bin = trees.iter().map(|t| binarize_cnf(t, Direction::Left)).collect();
    (trees, bin)
}

fn model_for(bin: &[BinaryTree], cfg: ModelConfig) -> Model {
    let labels = build_label_vocab(bin).unwrap();
    Model::for_corpus(cfg, bin.iter().map(|t| t.sentence()), labels, 1).unwrap()
}

fn quick(mode: LossMode) -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        batch_words: 40,
        loss_mode: mode,
        ..TrainConfig::default()
    }
}

#[test]
fn patience_zero_runs_one_epoch() {
    let (trees, bin) = corpus(10);
    let cfg = TrainConfig {
        patience: 0,
        ..quick(LossMode::TwoStageCrf)
    };
    let out = train(
        model_for(&bin, ModelConfig::tiny()),
        &bin,
        &trees,
        &cfg,
        &EvalParams::default(),
        None,
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn every_loss_mode_trains() {
    let (trees, bin) = corpus(12);
    for mode in [
        LossMode::TwoStageCrf,
        LossMode::OneStageCrf,
        LossMode::MaxMargin,
        LossMode::OneStageMaxMargin,
    ] {
        let out = train(
            model_for(&bin, ModelConfig::tiny()),
            &bin,
            &trees,
            &quick(mode),
            &EvalParams::default(),
            None,
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(out.records.len(), 3, "{mode:?}");
        assert!(out.records.iter().all(|r| r.loss.is_finite() && r.loss >= 0.0));
    }
}

fn metrics(r: &EpochRecord) -> (usize, u64, u64, u64, u64, u64) {
    (
        r.epoch,
        r.loss.to_bits(),
        r.dev_p.to_bits(),
        r.dev_r.to_bits(),
        r.dev_f.to_bits(),
        r.dev_uf.to_bits(),
    )
}

#[test]
fn seeded_runs_are_identical() {
    let (trees, bin) = corpus(12);
    let cfg = TrainConfig {
        unk_replace: 0.3,
        ..quick(LossMode::TwoStageCrf)
    };
    let run = || {
        let out = train(
            model_for(&bin, ModelConfig::tiny()),
            &bin,
            &trees,
            &cfg,
            &EvalParams::default(),
            None,
            |_| Ok(()),
        )
        .unwrap();
        (out.records.iter().map(metrics).collect::<Vec<_>>(), out.best.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let other = TrainConfig { seed: 2, ..cfg.clone() };
    let out = train(
        model_for(&bin, ModelConfig::tiny()),
        &bin,
        &trees,
        &other,
        &EvalParams::default(),
        None,
        |_| Ok(()),
    )
    .unwrap();
    assert_ne!(out.records.iter().map(metrics).collect::<Vec<_>>(), a);
}

#[test]
fn single_sentence_loss_does_not_increase() {
    let t = parse_bracketed("(S (NP the dog) (VP saw (NP a cat)))").unwrap();
    let bin = vec![binarize_cnf(&t, Direction::Left)];
    let cfg = TrainConfig {
        max_epochs: 20,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let out = train(
        model_for(&bin, ModelConfig::tiny()),
        &bin,
        &[t],
        &cfg,
        &EvalParams::default(),
        None,
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(out.records.len(), 20);
    for w in out.records.windows(2) {
        assert!(w[1].loss <= w[0].loss + 1e-6, "{} then {}", w[0].loss, w[1].loss);
    }
}

#[test]
fn divergence_is_reported() {
    let (trees, bin) = corpus(6);
    let mut cfg = quick(LossMode::TwoStageCrf);
    cfg.max_epochs = 20;
    // steps near f64::MAX overflow the weights to infinity
    cfg.optimizer.lr = 1e308;
    let dir = std::env::temp_dir().join(format!("treecrf-diverge-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let ck = dir.join("best.ckpt");
    let r = train(
        model_for(&bin, ModelConfig::tiny()),
        &bin,
        &trees,
        &cfg,
        &EvalParams::default(),
        Some(&ck),
        |_| Ok(()),
    );
    assert!(matches!(r, Err(Error::Diverged { .. })), "{:?}", r.err());
    // the first epoch improved on nothing, so its model is on disk
    assert!(load_checkpoint(&ck).is_ok());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn checkpoint_round_trip() {
    let (trees, bin) = corpus(6);
    let dir = std::env::temp_dir().join(format!("treecrf-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let ck = dir.join("best.ckpt");
    let cfg = quick(LossMode::TwoStageCrf);
    let out = train(
        model_for(&bin, ModelConfig::tiny()),
        &bin,
        &trees,
        &cfg,
        &EvalParams::default(),
        Some(&ck),
        |_| Ok(()),
    )
    .unwrap();
    let (m, st) = load_checkpoint(&ck).unwrap();
    assert_eq!(m.params, out.best.params);
    assert!(st.step > 0);
    // a checkpoint also opens as a plain model
    assert_eq!(Model::load(&ck).unwrap(), m);
    std::fs::remove_dir_all(&dir).ok();
}
