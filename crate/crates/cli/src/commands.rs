use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treecrf::scorer::Model;
use treecrf::synthetic::{flat_sentences, PCFG_LABELS};
use treecrf::training::{self, EpochRecord};
use treecrf::treebank::io::{read_sentences, read_tree_file, write_trees};
use treecrf::treebank::{binarize_cnf, build_label_vocab, evalb_score, ReadOptions, Tree};
use treecrf::{parser, BinaryTree, ConstTree, Error, LabelVocab, Sentence};

use crate::config::{RunConfig, ARCHITECTURE_KEYS, KEYS};
use crate::selfcheck::{self, Kernels};
use crate::{bench, CmdResult, Failure};

fn required<'a>(p: &'a Option<PathBuf>, key: &str, cmd: &str) -> Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| Failure::usage(anyhow!("{cmd} needs --{}", key.replace('_', "-"))))
}

fn read_trees(path: &Path) -> Result<Vec<ConstTree>, Failure> {
    Ok(read_tree_file(path, &ReadOptions::default())
        .with_context(|| format!("cannot read trees from {}", path.display()))?)
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>, Failure> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("cannot open {}", p.display()))?,
        )),
        _ => Box::new(BufReader::new(io::stdin())),
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) if p != Path::new("-") => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        _ => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Ok(Model::load(path).with_context(|| format!("cannot load model {}", path.display()))?)
}

/// Architecture keys given explicitly must agree with the loaded model.
fn check_architecture(cfg: &RunConfig, model: &Model) -> CmdResult {
    let mut from_model = RunConfig::default();
    from_model.model_config = model.config.clone();
    for key in ARCHITECTURE_KEYS.iter().filter(|k| cfg.is_explicit(k)) {
        let (want, have) = (cfg.get(key), from_model.get(key));
        if want != have {
            return Err(Failure::failed(anyhow!(
                "model/config mismatch: {key} is {} in the model but {} in the configuration",
                have.unwrap_or_default(),
                want.unwrap_or_default()
            )));
        }
    }
    Ok(())
}

/// An epoch record as logged: the metrics without the wall-clock time, so
/// that reruns produce identical logs.
pub fn log_line(rec: &EpochRecord) -> String {
    let mut v = serde_json::to_value(rec).expect("plain struct");
    if let Some(o) = v.as_object_mut() {
        o.remove("seconds");
    }
    v.to_string()
}

fn default_log_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log.jsonl");
    PathBuf::from(s)
}

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let train_path = required(&cfg.train, "train", "train")?;
    let model_path = required(&cfg.model, "model", "train")?;
    let trees = read_trees(train_path)?;
    if trees.is_empty() {
        return Err(Failure::failed(anyhow!("no trees in {}", train_path.display())));
    }
    let dev = match &cfg.dev {
        Some(p) => read_trees(p)?,
        None => trees.clone(),
    };
    let eval = cfg.eval_params().map_err(Failure::usage)?;
    let bin: Vec<BinaryTree> = trees.iter().map(|t| binarize_cnf(t, cfg.binarize)).collect();
    let labels = build_label_vocab(&bin)?;
    let model = Model::for_corpus(
        cfg.model_config.clone(),
        bin.iter().map(|t| t.sentence()),
        labels,
        cfg.seed,
    )?;
    eprintln!(
        "train {} trees, dev {} trees, {} words, {} labels, {} parameters",
        trees.len(),
        dev.len(),
        model.words.len(),
        model.labels.len(),
        model.params.num_values()
    );

    let log_path = cfg.log.clone().unwrap_or_else(|| default_log_path(model_path));
    let mut log =
        BufWriter::new(File::create(&log_path).with_context(|| format!("cannot create log {}", log_path.display()))?);
    let echo: BTreeMap<&str, String> = KEYS.iter().map(|&k| (k, cfg.get(k).unwrap_or_default())).collect();
    writeln!(log, "{}", serde_json::json!({ "config": echo })).context("writing log")?;
    log.flush().context("writing log")?;

    let outcome = training::train(model, &bin, &dev, &cfg.training(), &eval, Some(model_path), |rec| {
        writeln!(log, "{}", log_line(rec))?;
        log.flush()?;
        eprintln!(
            "epoch {:>4} loss {:.4} dev P {:.2} R {:.2} F {:.2} UF {:.2} ({:.2}s)",
            rec.epoch, rec.loss, rec.dev_p, rec.dev_r, rec.dev_f, rec.dev_uf, rec.seconds
        );
        Ok(())
    })
    .with_context(|| format!("training on {}", train_path.display()))?;
    println!(
        "best epoch {} dev F {:.2}, model written to {}",
        outcome.best_epoch,
        outcome.best_f,
        model_path.display()
    );
    if let Some(test) = &cfg.test {
        let gold = read_trees(test)?;
        let (p, r, f, uf) = training::evaluate(&outcome.best, &gold, cfg.parse_options(), &eval)?;
        println!("test P {p:.2} R {r:.2} F {f:.2} UF {uf:.2}");
    }
    Ok(())
}

pub fn cmd_parse(cfg: &RunConfig) -> CmdResult {
    let model = load_model(required(&cfg.model, "model", "parse")?)?;
    check_architecture(cfg, &model)?;
    let sentences = read_sentences(open_input(cfg.input.as_deref())?).context("reading input")?;
    let trees = parser::parse(&model, &sentences, cfg.parse_options())?;
    let mut out = open_output(cfg.output.as_deref())?;
    write_trees(&mut out, &trees).context("writing output")?;
    out.flush().context("writing output")?;
    eprintln!("parsed {} sentences", trees.len());
    Ok(())
}

/// 1-based numbers of the non-blank lines of a file, i.e. the line each
/// read tree came from.
fn tree_lines(path: &Path) -> io::Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, _)| k + 1)
        .collect())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CmdResult {
    let gold_path = required(&cfg.gold, "gold", "evaluate")?;
    let pred_path = required(&cfg.input, "input", "evaluate")?;
    let gold = read_trees(gold_path)?;
    let pred = read_trees(pred_path)?;
    let params = cfg.eval_params().map_err(Failure::usage)?;
    let prf = evalb_score(&gold, &pred, &params).map_err(|e| match e {
        Error::Alignment { index } => {
            let line = |p: &Path| {
                tree_lines(p)
                    .ok()
                    .and_then(|l| l.get(index).copied())
                    .map_or("end of file".to_string(), |k| format!("line {k}"))
            };
            Failure::failed(anyhow!(
                "{} {} and {} {}: gold and predicted sentences differ",
                gold_path.display(),
                line(gold_path),
                pred_path.display(),
                line(pred_path)
            ))
        }
        e => e.into(),
    })?;
    println!("sentences {}", gold.len());
    println!("matched {} predicted {} gold {}", prf.matched, prf.predicted, prf.gold);
    println!("{prf}");
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig) -> CmdResult {
    let sentences: Vec<Sentence> = match &cfg.input {
        Some(p) => read_sentences(open_input(Some(p))?).context("reading input")?,
        None => flat_sentences(&mut ChaCha8Rng::seed_from_u64(cfg.seed), 512, 20),
    };
    let model = match &cfg.model {
        Some(p) => {
            let m = load_model(p)?;
            check_architecture(cfg, &m)?;
            m
        }
        None => {
            let labels = LabelVocab::from(PCFG_LABELS.iter().map(|s| s.to_string()).collect::<Vec<_>>());
            eprintln!("no model given, using random weights");
            bench::random_model(cfg.model_config.clone(), &sentences, labels, cfg.seed)?
        }
    };
    let report = bench::run(&model, &sentences, cfg.bench_repeats)?;
    println!("threads {}", rayon::current_num_threads());
    println!("{report}");
    Ok(())
}

pub fn cmd_selfcheck(cfg: &RunConfig) -> CmdResult {
    selfcheck_with(cfg, &Kernels::default())
}

pub fn selfcheck_with(cfg: &RunConfig, kernels: &Kernels) -> CmdResult {
    let results = selfcheck::run(cfg.selfcheck_cases, cfg.seed, kernels);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(Failure::failed(anyhow!("failed checks: {}", failed.join(", "))))
    }
}
