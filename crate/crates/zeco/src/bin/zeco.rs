use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};
use zeco::commands::{cmd_analyze, cmd_eval, cmd_index, cmd_search, cmd_ttest};
use zeco::config::ExperimentConfig;
use zeco::{ExitCode, Result};

/// Late-interaction conversational passage retrieval.
#[derive(Debug, Parser)]
#[command(name = "zeco", version)]
struct Cli {
    /// INI configuration file.
    #[arg(long, global = true, env = "ZECO_CONFIG")]
    config: Option<PathBuf>,

    /// Override any configuration key, e.g. `--set encoder.dim=64`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct EncoderFlags {
    /// toy or file.
    #[arg(long)]
    provider: Option<String>,
    /// Embedding archive for the file provider.
    #[arg(long)]
    archive: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    max_tokens: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode a corpus into an index directory.
    Index {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        index_dir: Option<String>,
        #[command(flatten)]
        encoder: EncoderFlags,
    },
    /// Rank passages for every conversation turn, one run file per variant.
    Search {
        #[arg(long)]
        conversations: Option<String>,
        #[arg(long)]
        rewrites: Option<String>,
        #[arg(long)]
        index_dir: Option<String>,
        /// Comma-separated: last_turn, all_history, zeco2, human.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        k: Option<String>,
        /// Candidate tokens per query token; exhaustive scoring when absent.
        #[arg(long)]
        probe_depth: Option<String>,
        #[arg(long)]
        use_responses: bool,
        #[arg(long)]
        out_dir: Option<String>,
        #[command(flatten)]
        encoder: EncoderFlags,
    },
    /// Score a run, optionally against a second run with paired t-tests.
    Eval {
        /// Run to evaluate.
        #[arg(long)]
        run: PathBuf,
        /// Second run, compared against the first with paired t-tests.
        #[arg(long)]
        run_b: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<String>,
        /// e.g. `ndcg@3,recall@100`.
        #[arg(long)]
        metrics: Option<String>,
        /// Aggregate passages to documents by maximum score.
        #[arg(long)]
        maxp: bool,
        #[arg(long)]
        doc_map: Option<String>,
        #[arg(long)]
        relevance_threshold: Option<String>,
        /// exp or linear.
        #[arg(long)]
        gain: Option<String>,
    },
    /// Token drift, anaphora cases and the random-term control.
    Analyze {
        /// Baseline run, for example last_turn.
        #[arg(long)]
        run_baseline: PathBuf,
        /// Contextualized zeco2 run.
        #[arg(long)]
        run_zeco2: PathBuf,
        #[arg(long)]
        conversations: Option<String>,
        #[arg(long)]
        rewrites: Option<String>,
        #[arg(long)]
        qrels: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        use_responses: bool,
        #[arg(long)]
        out_dir: Option<String>,
        #[command(flatten)]
        encoder: EncoderFlags,
    },
    /// Paired t-test between two `query_id value` files.
    Ttest { a: PathBuf, b: PathBuf },
}

fn apply(cfg: &mut ExperimentConfig, pairs: &[(&str, &Option<String>)]) -> Result<()> {
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(())
}

fn apply_encoder(cfg: &mut ExperimentConfig, e: &EncoderFlags) -> Result<()> {
    apply(
        cfg,
        &[
            ("encoder.provider", &e.provider),
            ("encoder.archive_path", &e.archive),
            ("encoder.dim", &e.dim),
            ("encoder.alpha", &e.alpha),
            ("encoder.max_tokens", &e.max_tokens),
        ],
    )
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Index {
            corpus,
            index_dir,
            encoder,
        } => {
            apply(
                &mut cfg,
                &[("data.corpus", corpus), ("index.dir", index_dir)],
            )?;
            apply_encoder(&mut cfg, encoder)?;
        }
        Command::Search {
            conversations,
            rewrites,
            index_dir,
            variants,
            k,
            probe_depth,
            use_responses,
            out_dir,
            encoder,
        } => {
            apply(
                &mut cfg,
                &[
                    ("data.conversations", conversations),
                    ("data.rewrites", rewrites),
                    ("index.dir", index_dir),
                    ("search.variants", variants),
                    ("search.k", k),
                    ("search.probe_depth", probe_depth),
                    ("output.dir", out_dir),
                ],
            )?;
            if *use_responses {
                cfg.use_responses = true;
            }
            apply_encoder(&mut cfg, encoder)?;
        }
        Command::Eval {
            qrels,
            metrics,
            maxp,
            doc_map,
            relevance_threshold,
            gain,
            ..
        } => {
            apply(
                &mut cfg,
                &[
                    ("data.qrels", qrels),
                    ("eval.metrics", metrics),
                    ("data.doc_map", doc_map),
                    ("eval.relevance_threshold", relevance_threshold),
                    ("eval.gain", gain),
                ],
            )?;
            if *maxp {
                cfg.maxp = true;
            }
        }
        Command::Analyze {
            conversations,
            rewrites,
            qrels,
            seed,
            use_responses,
            out_dir,
            encoder,
            ..
        } => {
            apply(
                &mut cfg,
                &[
                    ("data.conversations", conversations),
                    ("data.rewrites", rewrites),
                    ("data.qrels", qrels),
                    ("analysis.seed", seed),
                    ("output.dir", out_dir),
                ],
            )?;
            if *use_responses {
                cfg.use_responses = true;
            }
            apply_encoder(&mut cfg, encoder)?;
        }
        Command::Ttest { .. } => {}
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }

    match &cli.command {
        Command::Index { .. } => {
            let m = cmd_index(&cfg)?;
            println!(
                "indexed {} passages, {} tokens, dim {} -> {}",
                m.passage_count,
                m.token_count,
                m.dim,
                cfg.index_dir.display()
            );
        }
        Command::Search { .. } => {
            for path in cmd_search(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Eval { run, run_b, .. } => {
            print!("{}", cmd_eval(&cfg, run, run_b.as_deref())?.render());
        }
        Command::Analyze {
            run_baseline,
            run_zeco2,
            ..
        } => {
            println!("{}", cmd_analyze(&cfg, run_baseline, run_zeco2)?.summary());
        }
        Command::Ttest { a, b } => {
            let t = cmd_ttest(a, b)?;
            let mark = if t.significant(0.05) { "*" } else { "" };
            println!(
                "n={} mean_diff={:+.6} t={:.6} p={:.6}{mark}",
                t.df + 1,
                t.mean_difference,
                t.t,
                t.p
            );
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Usage
            } else {
                ExitCode::Success
            };
            let _ = e.print();
            process::exit(code as i32);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code() as i32);
    }
}
