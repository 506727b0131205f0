use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psla::corpus::{generate_synthetic, read_corpus, read_labels, write_corpus};
use psla::experiment::{
    read_committee_manifest, run_ablation, run_aggregate, run_coverage, run_enhance, run_train,
    ExperimentConfig, ExperimentError, RunDir, TeacherSource, Toggle,
};
use psla::labelfix::RepairMode;
use psla::SynthSpec;

#[derive(Parser)]
#[command(name = "psla", version, about = "Audio-tagging training recipe toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic long-tailed corpus directory.
    Synth {
        /// TOML file with synthetic-corpus settings; defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration into its run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-evaluate a checkpoint of a completed run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        /// weight_avg, last or epoch_NNN.
        #[arg(long, default_value = "weight_avg")]
        checkpoint: String,
        /// Corpus directory to evaluate on instead of the run's own.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        labels: Option<PathBuf>,
        /// Per-class CSV output.
        #[arg(long)]
        classes_csv: Option<PathBuf>,
    },
    /// Write enhanced label sets and audits for every threshold policy.
    Enhance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "scores")]
        teacher_run: Option<PathBuf>,
        /// Teacher score matrix for the training split (CSV).
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, requires = "scores")]
        eval_scores: Option<PathBuf>,
        #[arg(long, default_value = "both")]
        mode: RepairMode,
        #[arg(long)]
        permissive: bool,
    },
    /// Evaluate a committee of runs and their ensemble.
    Aggregate {
        /// Lines of `tag<TAB>run_dir[<TAB>last|all|weight_avg|epoch_N]`.
        #[arg(long)]
        committee: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full recipe and one variant per removed component.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        toggles: Vec<Toggle>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Unseen-sample fraction per epoch for the configured sampler.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn load_corpus(dir: &Path, labels: Option<&Path>) -> Result<psla::MultiLabelCorpus, ExperimentError> {
    let c = read_corpus(dir)?;
    Ok(match labels {
        Some(l) => c.with_labels(&read_labels(l, &c.class_table().names)?)?,
        None => c,
    })
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| ExperimentError::Io {
                        path: p.display().to_string(),
                        source: e,
                    })?;
                    toml::from_str::<SynthSpec>(&text).map_err(|e| ExperimentError::Config {
                        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
                        message: format!("{}: {}", p.display(), e.message()),
                    })?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let corpus = generate_synthetic(&s)?;
            write_corpus(&corpus, &out)?;
            println!("{}", json(&corpus.class_table()));
        }
        Command::Train { config } => {
            let summary = run_train(&ExperimentConfig::read(&config)?)?;
            println!("{}", json(&summary));
        }
        Command::Eval {
            run,
            checkpoint,
            corpus,
            labels,
            classes_csv,
        } => {
            let run = RunDir::open(&run)?;
            let other = corpus
                .as_deref()
                .map(|c| load_corpus(c, labels.as_deref()))
                .transpose()?;
            let report = run.evaluate(&checkpoint, other.as_ref())?;
            if let Some(p) = classes_csv {
                let names = match &other {
                    Some(c) => c.class_table().names.clone(),
                    None => psla::experiment::load_data(&run.config)?.eval.class_table().names.clone(),
                };
                std::fs::write(&p, report.class_csv(&names))
                    .map_err(|e| ExperimentError::Io { path: p.display().to_string(), source: e })?;
            }
            println!("{}", report.to_json());
        }
        Command::Enhance {
            config,
            teacher_run,
            scores,
            eval_scores,
            mode,
            permissive,
        } => {
            let teacher = match (teacher_run, scores) {
                (Some(r), _) => TeacherSource::Run(r),
                (None, Some(train)) => TeacherSource::Scores { train, eval: eval_scores },
                (None, None) => {
                    return Err(ExperimentError::Config {
                        line: None,
                        message: "enhance needs --teacher-run or --scores".into(),
                    })
                }
            };
            let outcome = run_enhance(&ExperimentConfig::read(&config)?, &teacher, mode, permissive)?;
            print!("{}", outcome.summary_csv());
        }
        Command::Aggregate { committee, corpus, out } => {
            let specs = read_committee_manifest(&committee)?;
            let eval = corpus.as_deref().map(|c| load_corpus(c, None)).transpose()?;
            let outcome = run_aggregate(&specs, eval.as_ref(), Some(&out))?;
            print!("{}", outcome.comparison_csv());
        }
        Command::Ablate { config, toggles, seeds } => {
            let table = run_ablation(&ExperimentConfig::read(&config)?, &toggles, &seeds)?;
            print!("{}", table.to_csv());
        }
        Command::Coverage { config, epochs } => {
            print!("{}", run_coverage(&ExperimentConfig::read(&config)?, epochs)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
