use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use vdx::annotation::{
    annotate_corpus, default_examples, load_docs, load_examples, load_records, save_records,
    score_annotations, synthetic_corpus, AnnotateOptions, AnnotationRecord, ChatClient, HttpChatClient,
    LlmClientConfig, MockLlm,
};
use vdx::concepts::schema_json;
use vdx::data::{pool_file, save_dataset, synth_generate, load_dataset, with_concept_noise, SynthConfig};
use vdx::models::{load_checkpoint, save_checkpoint, Arch, Checkpoint};
use vdx::service::{serve, ServingState};
use vdx::training::{cross_validate_split, evaluate, fit_holdout, RunConfig};
use vdx::{Error, Result};

#[derive(Parser)]
#[command(name = "vdx", version, about = "Concept-based voice-disorder detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Embedding width.
        #[arg(long)]
        dim: Option<usize>,
        /// Generator config (JSON); defaults to the bundled one.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the config whose label is exactly `not dysphonia_absent`.
        #[arg(long, conflicts_with = "config")]
        separable: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Max-pool frame features into fixed-size embeddings.
    Pool {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one head with a stratified validation holdout.
    Train {
        #[arg(long)]
        arch: Arch,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-epoch history here (JSON).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation.
    Crossval {
        #[arg(long)]
        arch: Arch,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Train on concepts corrupted at this rate; test on the clean ones.
        #[arg(long)]
        concept_noise: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Serve prediction and intervention over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        /// Demo dataset addressable by example id.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 8642)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Extract concepts from anamnesis texts with an LLM.
    Annotate {
        /// Directory of `*.txt` documents.
        #[arg(long = "in")]
        input: PathBuf,
        /// Gold annotations (JSON Lines); scores the output when given.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        temperature: f64,
        /// Few-shot examples (JSON); defaults to the bundled four.
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Answer with the gold annotations instead of calling an endpoint.
        #[arg(long, requires = "gold")]
        mock: bool,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long)]
        no_repair: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic anamnesis corpus and its gold annotations.
    SynthDocs {
        #[arg(long, default_value_t = 69)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Print the concept schema.
    Schema,
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map(|p| RunConfig::from_json(&read(p)?)).transpose().map(Option::unwrap_or_default)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            n,
            seed,
            dim,
            config,
            separable,
            out,
        } => {
            let mut cfg = match (config, separable) {
                (Some(p), _) => SynthConfig::from_json(&read(&p)?)?,
                (None, true) => SynthConfig::separable(),
                (None, false) => SynthConfig::default(),
            };
            cfg.n_examples = n.unwrap_or(cfg.n_examples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.embedding_dim = dim.unwrap_or(cfg.embedding_dim);
            let ds = synth_generate(&cfg)?;
            save_dataset(&out, &ds)?;
            let pos = ds.labels().iter().filter(|&&l| l == 1).count();
            println!("wrote {} examples ({pos} pathological) to {}", ds.len(), out.display());
        }
        Command::Pool { input, out } => {
            let ds = pool_file(&input, &out)?;
            println!("pooled {} examples to dim {}", ds.len(), ds.dim());
        }
        Command::Train {
            arch,
            data,
            config,
            out,
            history,
        } => {
            let rc = run_config(config.as_deref())?;
            let ds = load_dataset(&data)?;
            let outcome = fit_holdout(arch, &ds, &rc.arch, &rc.train)?;
            for r in &outcome.history {
                log::info!(
                    "epoch {:2} loss {:.4} val loss {:.4} val acc {:.4} val f1 {:.4}{}",
                    r.epoch,
                    r.train_loss,
                    r.val_loss,
                    r.val_task_accuracy,
                    r.val_macro_f1,
                    if r.improved { " *" } else { "" }
                );
            }
            if let Some(h) = history {
                write_json(&h, &outcome.history)?;
            }
            save_checkpoint(&out, &Checkpoint::new(outcome.model, rc.arch))?;
            println!(
                "best epoch {} of {}{}; checkpoint at {}",
                outcome.best_epoch,
                outcome.history.len(),
                if outcome.stopped_early { " (stopped early)" } else { "" },
                out.display()
            );
        }
        Command::Crossval {
            arch,
            data,
            config,
            k,
            seed,
            concept_noise,
            report,
        } => {
            let mut rc = run_config(config.as_deref())?;
            rc.train.k = k.unwrap_or(rc.train.k);
            rc.train.seed = seed.unwrap_or(rc.train.seed);
            let clean = load_dataset(&data)?;
            let train_view = match concept_noise {
                Some(rate) => with_concept_noise(&clean, rate, rc.train.seed)?,
                None => clean.clone(),
            };
            let rep = cross_validate_split(arch, &train_view, &clean, &rc.arch, &rc.train)?;
            if let Some(p) = report {
                write_json(&p, &rep)?;
            }
            println!("{}", rep.table_row());
            let failed = rep.failed_folds();
            if !failed.is_empty() {
                eprintln!("failed folds: {failed:?}");
            }
        }
        Command::Eval { model, data } => {
            let ckpt = load_checkpoint(&model)?;
            let ds = load_dataset(&data)?;
            let metrics = evaluate(&ckpt.model, &ds)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Serve {
            model,
            data,
            port,
            host,
        } => {
            let state = Arc::new(ServingState::load(&model, data.as_deref())?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, SocketAddr::new(host, port)))?;
        }
        Command::Annotate {
            input,
            gold,
            endpoint,
            model,
            temperature,
            examples,
            mock,
            workers,
            no_repair,
            out,
        } => {
            let docs = load_docs(&input)?;
            let examples = match examples {
                Some(p) => load_examples(&read(&p)?)?,
                None => default_examples(),
            };
            let gold = gold.map(load_records).transpose()?;
            let client: Box<dyn ChatClient> = if mock {
                let gold = gold.as_ref().expect("clap enforces --gold with --mock");
                let by_id: std::collections::HashMap<&str, &AnnotationRecord> =
                    gold.iter().map(|r| (r.id.as_str(), r)).collect();
                let mut pairs = Vec::new();
                for d in &docs {
                    let g = by_id
                        .get(d.id.as_str())
                        .ok_or_else(|| Error::Validation(format!("no gold record for `{}`", d.id)))?;
                    pairs.push((d, &g.values));
                }
                Box::new(MockLlm::echo_gold(pairs))
            } else {
                let mut cfg = LlmClientConfig {
                    temperature,
                    ..LlmClientConfig::default()
                };
                cfg.endpoint = endpoint.unwrap_or(cfg.endpoint);
                cfg.model = model.unwrap_or(cfg.model);
                Box::new(HttpChatClient::new(cfg)?)
            };
            let opts = AnnotateOptions {
                workers,
                repair: !no_repair,
            };
            let records = annotate_corpus(client.as_ref(), &docs, &examples, opts)?;
            save_records(&out, &records)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("annotated {} documents ({failed} failed) into {}", records.len(), out.display());
            if let Some(gold) = gold {
                let score = score_annotations(&records, &gold)?;
                println!("{}", serde_json::to_string_pretty(&score)?);
            }
        }
        Command::SynthDocs { n, seed, dir, gold } => {
            std::fs::create_dir_all(&dir)?;
            let corpus = synthetic_corpus(n, seed);
            let mut records = Vec::new();
            for (doc, values) in corpus {
                std::fs::write(dir.join(format!("{}.txt", doc.id)), &doc.text)?;
                records.push(AnnotationRecord {
                    id: doc.id,
                    values,
                    raw_response: String::new(),
                    prompt_sha256: String::new(),
                    error: None,
                });
            }
            save_records(&gold, &records)?;
            println!("wrote {n} documents to {}", dir.display());
        }
        Command::Schema => println!("{}", schema_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
