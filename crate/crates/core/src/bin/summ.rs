use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use summ::corpus::{write_jsonl, SynthConfig};
use summ::decoding::SummarizeMode;
use summ::pipeline::commands::{self, SummarizeArgs};
use summ::pipeline::{Arch, Experiment, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "summ", version, about = "Extract-then-rewrite summarization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> summ::Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p),
            None => {
                let mut c = RunConfig::default();
                c.apply_env()?;
                Ok(c)
            }
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus.
    SynthData {
        #[arg(long, default_value_t = 2000)]
        n_docs: usize,
        #[arg(long, default_value_t = 200)]
        vocab_size: usize,
        #[arg(long, default_value_t = 10)]
        sents: usize,
        #[arg(long, default_value_t = 3)]
        salient: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROUGE and novelty of stored summaries against references.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        stem: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        novel_ngrams: Vec<usize>,
    },
    /// Proxy extraction labels for every pair.
    MakeLabels {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    TrainExtractor {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "rnn")]
        arch: Arch,
        #[arg(long)]
        out_ckpt: PathBuf,
    },
    /// Extracted sentence indices per document.
    Extract {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, conflicts_with = "eoe")]
        k: Option<usize>,
        #[arg(long)]
        eoe: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    TrainAbstractor {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out_ckpt: PathBuf,
    },
    /// Rewrite one sentence with an abstractor checkpoint.
    Rewrite {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sentence: String,
    },
    TrainRl {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        actor_ckpt: PathBuf,
        #[arg(long)]
        abs_ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        updates: Option<usize>,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Render a reward-curve CSV as SVG.
    PlotCurve {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "curve.svg")]
        out: PathBuf,
    },
    Summarize {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        ext_ckpt: PathBuf,
        #[arg(long)]
        abs_ckpt: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "greedy")]
        mode: SummarizeMode,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewriting throughput at several worker counts.
    Benchmark {
        #[arg(long)]
        abs_ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 256)]
        sentences: usize,
    },
    /// Run pipeline stages inside an experiment directory.
    RunExperiment {
        #[command(flatten)]
        config: ConfigArg,
        /// Use the built-in desk preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        desk: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        #[arg(long)]
        allow_mismatch: bool,
    },
    /// Side-by-side table of stored evaluation reports.
    Compare {
        #[arg(required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "reward")]
        sort_by: String,
    },
}

fn run(cmd: Cmd) -> summ::Result<()> {
    match cmd {
        Cmd::SynthData {
            n_docs,
            vocab_size,
            sents,
            salient,
            noise,
            seed,
            out,
        } => {
            let cfg = SynthConfig {
                n_docs,
                vocab_size,
                sents_per_doc: sents,
                salient_per_doc: salient,
                noise_rate: noise,
                seed,
            };
            let n = commands::synth_data(&cfg, &out)?;
            println!("wrote {n} pairs to {}", out.display());
        }
        Cmd::Evaluate {
            hyp,
            reference,
            stem,
            novel_ngrams,
        } => {
            let (r, novel) = commands::evaluate_files(&hyp, &reference, stem, &novel_ngrams)?;
            println!("docs      {}", r.docs);
            println!("ROUGE-1   {:.4}", r.rouge_1);
            println!("ROUGE-2   {:.4}", r.rouge_2);
            println!("ROUGE-L   {:.4}", r.rouge_l);
            for (n, v) in novel {
                println!("novel-{n}   {v:.4}");
            }
        }
        Cmd::MakeLabels { data, out } => {
            let n = commands::make_labels(&data, &out)?;
            println!("labelled {n} pairs");
        }
        Cmd::TrainExtractor {
            config,
            data,
            labels,
            arch,
            out_ckpt,
        } => {
            let log = commands::train_extractor_files(&config.load()?, arch, &data, &labels, &out_ckpt)?;
            println!("best validation loss {:.4} after {} batches", log.best_val, log.batches);
        }
        Cmd::Extract {
            config,
            ckpt,
            data,
            k,
            eoe,
            out,
        } => {
            let k = if eoe { None } else { Some(k.unwrap_or(3)) };
            let recs = commands::extract_file(&config.load()?, &ckpt, &data, k)?;
            match out {
                Some(p) => write_jsonl(&p, &recs)?,
                None => {
                    for r in recs {
                        println!("{}", serde_json::to_string(&r)?);
                    }
                }
            }
        }
        Cmd::TrainAbstractor {
            config,
            data,
            labels,
            out_ckpt,
        } => {
            let log = commands::train_abstractor_files(&config.load()?, &data, &labels, &out_ckpt)?;
            println!("best validation loss {:.4} after {} batches", log.best_val, log.batches);
        }
        Cmd::Rewrite { ckpt, sentence } => println!("{}", commands::rewrite_text(&ckpt, &sentence)?),
        Cmd::TrainRl {
            config,
            actor_ckpt,
            abs_ckpt,
            data,
            gamma,
            lr,
            updates,
            out_ckpt,
            log,
        } => {
            let mut cfg = config.load()?;
            cfg.rl.gamma = gamma.unwrap_or(cfg.rl.gamma);
            cfg.rl.lr = lr.unwrap_or(cfg.rl.lr);
            cfg.rl.updates = updates.unwrap_or(cfg.rl.updates);
            cfg.validate()?;
            let out = commands::train_rl_files(&cfg, &actor_ckpt, &abs_ckpt, &data, &out_ckpt, &log)?;
            println!("best validation reward {:.4}", out.best_val_reward);
        }
        Cmd::PlotCurve { log, out } => {
            print!("{}", commands::plot_curve(&log, &out)?);
            println!("wrote {}", out.display());
        }
        Cmd::Summarize {
            config,
            ext_ckpt,
            abs_ckpt,
            data,
            mode,
            k,
            workers,
            out,
        } => {
            let cfg = config.load()?;
            let recs = commands::summarize_file(&SummarizeArgs {
                ext_ckpt: &ext_ckpt,
                abs_ckpt: abs_ckpt.as_deref(),
                data: &data,
                mode,
                k,
                workers: workers.unwrap_or(cfg.workers),
                decode: cfg.decode,
                cap: cfg.extract.cap,
            })?;
            write_jsonl(&out, &recs)?;
            println!("wrote {} summaries to {}", recs.len(), out.display());
        }
        Cmd::Benchmark {
            abs_ckpt,
            data,
            workers,
            sentences,
        } => {
            let rows = commands::benchmark_file(&abs_ckpt, &data, &workers, sentences)?;
            println!("{:>7} {:>9} {:>8} {:>10} {:>10}", "workers", "sentences", "seconds", "words/sec", "sents/sec");
            for r in rows {
                println!(
                    "{:>7} {:>9} {:>8.3} {:>10.1} {:>10.1}",
                    r.workers, r.sentences, r.seconds, r.words_per_sec, r.sentences_per_sec
                );
            }
        }
        Cmd::RunExperiment {
            config,
            desk,
            out,
            stage,
            allow_mismatch,
        } => {
            let cfg = if desk {
                let mut c = RunConfig::desk();
                c.apply_env()?;
                c
            } else {
                config.load()?
            };
            let mut exp = Experiment::new(cfg, &out)?;
            exp.allow_mismatch = allow_mismatch;
            if exp.run(stage)?.is_some() {
                print!("{}", std::fs::read_to_string(exp.layout.comparison())?);
            }
        }
        Cmd::Compare { reports, sort_by } => {
            let refs: Vec<&Path> = reports.iter().map(PathBuf::as_path).collect();
            print!("{}", commands::compare_files(&refs, &sort_by)?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse().cmd) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
