use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use treecrf_cli::config::RunConfig;
use treecrf_cli::{commands, Failure};

/// Every config key is also a flag; they are all strings here and parsed
/// once, by the same code that reads config files and the environment.
macro_rules! flags {
    ($($field:ident: $help:literal),* $(,)?) => {
        #[derive(Args, Debug, Default)]
        struct Flags {
            $(#[arg(long, global = true, value_name = "VALUE", help = $help)]
            $field: Option<String>,)*
        }

        impl Flags {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field), v.as_str()));
                })*
                out
            }
        }
    };
}

flags! {
    train: "training trees, one bracketed tree per line",
    dev: "development trees for model selection (default: the training trees)",
    test: "trees to score the best model on after training",
    model: "model file to write (train) or read",
    input: "sentences or trees to parse, predicted trees to evaluate ('-' for stdin)",
    output: "where parsed trees go (default: stdout)",
    gold: "gold trees for evaluate",
    log: "training log, JSON lines (default: <model>.log.jsonl)",
    eval_params: "evaluation parameter file, or none | english | unlabeled",
    decode: "viterbi | mbr",
    stage: "two | one",
    loss: "crf | maxmargin",
    binarize: "left | right",
    seed: "random seed",
    threads: "worker threads, 0 for one per core",
    word_dim: "word embedding size",
    char_dim: "character embedding size",
    char_out: "character encoder output size",
    lstm_hidden: "context encoder hidden size per direction",
    lstm_layers: "context encoder layers",
    bracket_dim: "bracket boundary projection size",
    label_dim: "label boundary projection size",
    span_scorer: "biaffine | minus",
    batch_words: "tokens per training batch",
    max_epochs: "epoch limit",
    patience: "epochs without dev improvement before stopping",
    dropout: "dropout rate",
    lr: "learning rate",
    margin: "max-margin scale",
    label_weight: "weight of the label loss",
    unk_replace: "probability of replacing a training singleton by the unknown word",
    bench_repeats: "timed repetitions per measurement in bench",
    selfcheck_cases: "random charts per sentence length in selfcheck",
}

#[derive(Parser, Debug)]
#[command(name = "treecrf", version, about = "Two-stage tree CRF constituency parser")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train a model and write its best checkpoint.
    Train,
    /// Parse sentences with a trained model.
    Parse,
    /// Score predicted trees against gold trees.
    Evaluate,
    /// Measure parsing and decoding throughput.
    Bench,
    /// Cross-check the chart algorithms and gradients against brute force.
    Selfcheck,
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (cfg, unknown) =
        RunConfig::resolve(cli.config.as_deref(), std::env::vars(), &cli.flags.pairs()).map_err(Failure::usage)?;
    for v in unknown {
        eprintln!("warning: ignoring unknown variable {v}");
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(Failure::usage)?;
    }
    eprint!("{}", cfg.echo().lines().map(|l| format!("# {l}\n")).collect::<String>());
    match cli.command {
        Command::Train => commands::cmd_train(&cfg),
        Command::Parse => commands::cmd_parse(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
        Command::Selfcheck => commands::cmd_selfcheck(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
