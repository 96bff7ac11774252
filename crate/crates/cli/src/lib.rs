//! Command implementations behind the `embedscope` binary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use embedscope_core::embeddings::{Embeddings, Neighbor};
use embedscope_core::verify::{check_all, format_table, GradGrid, DEFAULT_EPSILON, DEFAULT_THRESHOLD};
use embedscope_core::{Architecture, Corpus, Matrix, ModelConfig, Objective, Schedule, TrainPlan, Trainer};

#[derive(Debug, Parser)]
#[command(name = "embedscope", version, about = "Train, query and certify word2vec-style embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train embeddings on a text corpus.
    Train(TrainArgs),
    /// Nearest words by cosine similarity.
    Neighbors(NeighborsArgs),
    /// Nearest words to vector(b) - vector(a) + vector(c).
    Analogy(AnalogyArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    LinearDecay,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Constant => Schedule::Constant,
            ScheduleArg::LinearDecay => Schedule::LinearDecay,
        }
    }
}

fn positive_eta(s: &str) -> std::result::Result<f64, String> {
    let eta: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if eta.is_finite() && eta > 0.0 {
        Ok(eta)
    } else {
        Err(format!("must be positive, got {s}"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// UTF-8 corpus, whitespace separated.
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the input vectors.
    #[arg(long)]
    pub output: PathBuf,
    /// cbow or sg.
    #[arg(long, default_value = "cbow")]
    pub mode: Architecture,
    /// softmax, hs or ns.
    #[arg(long, default_value = "ns")]
    pub objective: Objective,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    /// Negative samples per target (ns only).
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub negative: u64,
    #[arg(long, default_value_t = 0.05, value_parser = positive_eta)]
    pub eta: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Also write output vectors (softmax and ns).
    #[arg(long)]
    pub output_vectors: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "constant")]
    pub schedule: ScheduleArg,
    /// Reshuffle instances every epoch.
    #[arg(long)]
    pub shuffle: bool,
    /// Keep the corpus's case.
    #[arg(long)]
    pub keep_case: bool,
}

#[derive(Debug, Clone, Args)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub word: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AnalogyArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    pub a: String,
    pub b: String,
    pub c: String,
    #[arg(short, long, default_value_t = 5)]
    pub k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Only check these objectives.
    #[arg(long)]
    pub objective: Vec<Objective>,
    /// Only check these architectures.
    #[arg(long)]
    pub mode: Vec<Architecture>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

/// Everything `train` produces besides its output files.
#[derive(Debug, Clone)]
pub struct Trained {
    pub words: Vec<String>,
    pub input: Matrix,
    pub output: Matrix,
    pub epoch_losses: Vec<f64>,
}

pub fn train(args: &TrainArgs, log: &mut impl Write) -> Result<Trained> {
    if args.output_vectors.is_some() && args.objective == Objective::Hierarchical {
        bail!("--output-vectors needs softmax or ns: hs output rows are inner units, not words");
    }
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let Corpus { vocab, ids } = Corpus::from_text(&text, !args.keep_case, args.min_count)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        dim: args.dim as usize,
        architecture: args.mode,
        objective: args.objective,
        negatives: args.negative as usize,
        eta: args.eta,
    };
    let plan = TrainPlan {
        schedule: args.schedule.into(),
        shuffle: args.shuffle,
        ..TrainPlan::new(args.epochs as usize, args.eta, args.seed)
    };
    let mut trainer = Trainer::from_corpus(&ids, args.window, config, vocab.counts(), plan)?;
    let per_epoch = trainer.instances().len() as u64;
    writeln!(log, "vocab {} instances/epoch {per_epoch}", vocab.len())?;
    let mut epoch_losses = Vec::with_capacity(args.epochs as usize);
    for epoch in 1..=args.epochs {
        let summary = trainer.step_n(per_epoch)?;
        writeln!(log, "epoch {epoch} mean loss {:.6}", summary.mean_loss)?;
        epoch_losses.push(summary.mean_loss);
    }
    let state = &trainer.model().state;
    let words = vocab.words().to_vec();
    write_vectors(&args.output, &words, &state.input)?;
    if let Some(path) = &args.output_vectors {
        write_vectors(path, &words, &state.output)?;
    }
    Ok(Trained { words, input: state.input.clone(), output: state.output.clone(), epoch_losses })
}

fn write_vectors(path: &Path, words: &[String], m: &Matrix) -> Result<()> {
    let emb = Embeddings::new(words.to_vec(), m.clone())?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    emb.write(BufWriter::new(file))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Embeddings> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Embeddings::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn print_neighbors(out: &mut impl Write, list: &[Neighbor]) -> Result<()> {
    for n in list {
        writeln!(out, "{}\t{:.6}", n.word, n.similarity)?;
    }
    Ok(())
}

pub fn neighbors(args: &NeighborsArgs, out: &mut impl Write) -> Result<Vec<Neighbor>> {
    let list = load(&args.vectors)?.neighbors(&args.word, args.k)?;
    print_neighbors(out, &list)?;
    Ok(list)
}

pub fn analogy(args: &AnalogyArgs, out: &mut impl Write) -> Result<Vec<Neighbor>> {
    let list = load(&args.vectors)?.analogy(&args.a, &args.b, &args.c, args.k)?;
    print_neighbors(out, &list)?;
    Ok(list)
}

/// Prints the report table; returns whether every block passed.
pub fn gradcheck(args: &GradcheckArgs, out: &mut impl Write) -> Result<bool> {
    let mut grid = GradGrid { threshold: args.threshold, epsilon: args.epsilon, seeds: args.seeds.clone(), ..GradGrid::default() };
    if !args.objective.is_empty() {
        grid.objectives = args.objective.clone();
    }
    if !args.mode.is_empty() {
        grid.architectures = args.mode.clone();
    }
    let reports = check_all(&grid);
    write!(out, "{}", format_table(&reports))?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        writeln!(out, "all {} blocks pass", reports.len())?;
    } else {
        writeln!(out, "{failed} of {} blocks FAIL", reports.len())?;
    }
    Ok(failed == 0)
}

pub async fn serve(args: &ServeArgs) -> Result<()> {
    eprintln!("listening on http://{}", args.addr);
    embedscope_service::serve(args.addr).await?;
    Ok(())
}
