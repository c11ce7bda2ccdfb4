use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use predictability::cloze::{SmoothingFactor, TransformKind};
use predictability::corpus::{ContextScope, FilterConfig, Measure};
use predictability::manip::{Aggregation, SimilarityConfig, SimilarityKind};
use predictability::stats::RandomEffectsMode;
use predictability_cli::config::{DEFAULT_K, DEFAULT_THRESHOLD};
use predictability_cli::experiments::{self, Hypothesis};
use predictability_cli::report::write_outputs;
use predictability_cli::{CliError, ExperimentConfig, Inputs, RunReport};

#[derive(Parser)]
#[command(name = "predictability", version, about = "Compare cloze and language-model predictability as predictors of reading times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cloze versus language-model surprisal, nested model comparison per measure.
    Exp1(Common),
    /// Cloze versus a manipulated language-model predictor.
    Exp2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        hypothesis: HypothesisArg,
        /// Cluster counts for h2, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_K])]
        k: Vec<usize>,
        /// Frequency thresholds per billion for h3, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_THRESHOLD])]
        threshold: Vec<f64>,
    },
    /// Cloze versus similarity-adjusted predictors.
    Exp3(Common),
    /// In-sample fit of each cloze smoothing and transform variant.
    Grid(Common),
    /// Correlation of every available predictor with cloze probability.
    Correlate(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum HypothesisArg {
    H1,
    H2,
    H3,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    #[value(name = "SPR", alias = "spr")]
    Spr,
    #[value(name = "FP", alias = "fp")]
    Fp,
    #[value(name = "GP", alias = "gp")]
    Gp,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Sentence,
    Item,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeldoutArg {
    Conditional,
    Marginal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimilarityArg {
    ShiftedCosine,
    SetNormalized,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Sum,
}

#[derive(Args)]
struct Common {
    /// Stimulus words (CSV).
    #[arg(long)]
    stimuli: PathBuf,
    /// Cloze responses (JSONL).
    #[arg(long)]
    cloze: Option<PathBuf>,
    /// Reading times (CSV).
    #[arg(long)]
    rt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    measure: MeasureArg,
    /// Next-token distribution dump.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Toy n-gram model (JSON).
    #[arg(long)]
    ngram: Option<PathBuf>,
    /// Token embedding matrix.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Word frequencies per billion (CSV).
    #[arg(long)]
    freq: Option<PathBuf>,
    /// Precomputed word samples (JSONL).
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Cloze smoothing factor.
    #[arg(long, default_value_t = 200)]
    smoothing: u32,
    /// Cloze transform: prob, surprisal or surprisal^a/b.
    #[arg(long, default_value = "surprisal^2")]
    transform: String,
    /// Bonferroni factor; defaults to the experiment's comparison count.
    #[arg(long)]
    bonferroni: Option<usize>,
    #[arg(long, value_enum, default_value = "sentence")]
    context_scope: ScopeArg,
    /// Keep sentence- and line-edge words.
    #[arg(long)]
    keep_edges: bool,
    /// Drop trials answered incorrectly.
    #[arg(long)]
    drop_incorrect: bool,
    #[arg(long, value_enum, default_value = "conditional")]
    heldout: HeldoutArg,
    #[arg(long, value_enum, default_value = "shifted-cosine")]
    similarity: SimilarityArg,
    #[arg(long, value_enum, default_value = "mean")]
    aggregation: AggregationArg,
    #[arg(long, default_value_t = 10)]
    kmeans_restarts: usize,
    /// Bootstrap resamples for correlation intervals.
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let inputs = Inputs {
            stimuli: self.stimuli.clone(),
            cloze: self.cloze.clone(),
            rt: self.rt.clone(),
            dump: self.dump.clone(),
            ngram: self.ngram.clone(),
            embeddings: self.embeddings.clone(),
            freq: self.freq.clone(),
            samples: self.samples.clone(),
        };
        let mut c = ExperimentConfig::new(inputs);
        c.measures = match self.measure {
            MeasureArg::Spr => vec![Measure::Spr],
            MeasureArg::Fp => vec![Measure::Fp],
            MeasureArg::Gp => vec![Measure::Gp],
            MeasureArg::All => Vec::new(),
        };
        c.smoothing = SmoothingFactor::new(self.smoothing)?;
        c.transform = self.transform.parse::<TransformKind>()?;
        c.n_folds = self.folds;
        c.runs = self.runs;
        c.seed = self.seed;
        c.bonferroni_m = self.bonferroni;
        c.scope = match self.context_scope {
            ScopeArg::Sentence => ContextScope::Sentence,
            ScopeArg::Item => ContextScope::Item,
        };
        c.filter = FilterConfig {
            drop_sentence_edges: !self.keep_edges,
            drop_line_edges: !self.keep_edges,
            drop_incorrect_trials: self.drop_incorrect,
            ..FilterConfig::default()
        };
        c.similarity = SimilarityConfig {
            kind: match self.similarity {
                SimilarityArg::ShiftedCosine => SimilarityKind::ShiftedCosine,
                SimilarityArg::SetNormalized => SimilarityKind::SetNormalized,
            },
            aggregation: match self.aggregation {
                AggregationArg::Mean => Aggregation::Mean,
                AggregationArg::Sum => Aggregation::Sum,
            },
        };
        c.kmeans_restarts = self.kmeans_restarts;
        c.random_effects = match self.heldout {
            HeldoutArg::Conditional => RandomEffectsMode::Conditional,
            HeldoutArg::Marginal => RandomEffectsMode::Marginal,
        };
        c.resamples = self.resamples;
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(RunReport, ExperimentConfig, PathBuf), CliError> {
    let (common, report) = match &cli.command {
        Command::Exp1(c) => (c, experiments::run_exp1(&c.config()?)),
        Command::Exp2 {
            common,
            hypothesis,
            k,
            threshold,
        } => {
            let variants: Vec<Hypothesis> = match hypothesis {
                HypothesisArg::H1 => vec![Hypothesis::H1],
                HypothesisArg::H2 => k.iter().map(|&k| Hypothesis::H2 { k }).collect(),
                HypothesisArg::H3 => threshold.iter().map(|&threshold| Hypothesis::H3 { threshold }).collect(),
            };
            (common, experiments::run_exp2(&common.config()?, &variants))
        }
        Command::Exp3(c) => (c, experiments::run_exp3(&c.config()?)),
        Command::Grid(c) => (c, experiments::run_grid(&c.config()?)),
        Command::Correlate(c) => (c, experiments::run_correlate(&c.config()?)),
    };
    Ok((report?, common.config()?, common.out_dir.clone()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (report, config, out_dir) = match run(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match write_outputs(&report, &config, &out_dir) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let failures = report.failures();
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in failures {
            eprintln!("failed: {f}");
        }
        ExitCode::from(2)
    }
}
