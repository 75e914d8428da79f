use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use topp_hmm::analysis::{error_bounds, minimal_mixing_rate};
use topp_hmm::experiment::{
    run_experiment, write_csv, ExperimentConfig, GammaPolicy, ModelSource, Outcome, GAMMA_AUTO_LIMIT,
};
use topp_hmm::generators::{BellSpec, CorpusSpec, Smoothing};
use topp_hmm::model_io::{read_model, write_model, write_top_p_model, MatrixLayout};
use topp_hmm::{build_top_p_hmm, Hmm, TruncationMode};

const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "topp-hmm", version, about = "Top-p truncated hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic model (bell, uniform or the weather example).
    Generate(GenerateArgs),
    /// Build a bigram model from a whitespace-tokenized corpus.
    Train(TrainArgs),
    /// Apply top-p truncation and write the sparse model.
    Truncate(TruncateArgs),
    /// Compare dense and top-p inference; emits per-step CSV.
    Run(RunArgs),
    /// Print the mixing rate and error bounds of a model.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Bell,
    Uniform,
    Weather,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Layout {
    Dense,
    Sparse,
}

impl From<Layout> for MatrixLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Dense => Self::Dense,
            Layout::Sparse => Self::Sparse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Gamma {
    Auto,
    Always,
    Never,
}

impl From<Gamma> for GammaPolicy {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Auto => Self::Auto,
            Gamma::Always => Self::Always,
            Gamma::Never => Self::Never,
        }
    }
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    /// Number of states (bell and uniform).
    #[arg(long)]
    states: Option<usize>,
    /// Heavy entries per bell column.
    #[arg(long, default_value_t = BellSpec::default().heavy_count)]
    heavy_count: usize,
    /// Mass shared by the heavy entries of a bell column.
    #[arg(long, default_value_t = BellSpec::default().heavy_mass)]
    heavy_mass: f64,
}

impl GeneratorArgs {
    fn source(&self, kind: Kind, seed: u64) -> ModelSource {
        let defaults = BellSpec::default();
        match kind {
            Kind::Bell => ModelSource::Bell(BellSpec {
                n_states: self.states.unwrap_or(defaults.n_states),
                heavy_count: self.heavy_count,
                heavy_mass: self.heavy_mass,
                seed,
            }),
            Kind::Uniform => ModelSource::Uniform { n_states: self.states.unwrap_or(defaults.n_states) },
            Kind::Weather => ModelSource::Weather,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    kind: Kind,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Layout::Dense)]
    layout: Layout,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    corpus: PathBuf,
    /// Lowercase every token before counting.
    #[arg(long)]
    lowercase: bool,
    /// Tokens seen fewer times become <unk>.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// add-one, perks, or a positive pseudo-count.
    #[arg(long, default_value_t = Smoothing::AddOne)]
    smoothing: Smoothing,
    /// Accepted for uniformity; training is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Layout::Sparse)]
    layout: Layout,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TruncateArgs {
    model: PathBuf,
    #[arg(short, long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model file; alternatively use --kind.
    #[arg(long, conflicts_with = "kind", required_unless_present = "kind")]
    model: Option<PathBuf>,
    /// Generate the model in memory instead of loading a file.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(short, long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9])]
    p: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Observe every this many steps; none means pure prediction.
    #[arg(long)]
    obs_period: Option<usize>,
    #[arg(long, default_value_t = TruncationMode::Model)]
    mode: TruncationMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, value_enum, default_value_t = Gamma::Auto)]
    gamma: Gamma,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    model: PathBuf,
    #[arg(short, long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9])]
    p: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Compute the mixing rate even for very large models.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Violation(String),
}

impl From<topp_hmm::Error> for Failure {
    fn from(e: topp_hmm::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Input(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn generate(args: &GenerateArgs) -> CliResult {
    let hmm = args.generator.source(args.kind, args.seed).load()?;
    write_model(&args.out, &hmm, args.layout.into())?;
    println!("states: {}", hmm.n_states());
    println!("observations: {}", hmm.n_obs());
    Ok(())
}

fn train(args: &TrainArgs) -> CliResult {
    let spec = CorpusSpec {
        lowercase: args.lowercase,
        min_count: args.min_count,
        smoothing: args.smoothing,
        ..CorpusSpec::from_file(&args.corpus)?
    };
    let hmm = topp_hmm::generators::hmm_from_corpus(&spec)?;
    write_model(&args.out, &hmm, args.layout.into())?;
    println!("vocabulary: {}", hmm.n_states());
    Ok(())
}

fn truncate(args: &TruncateArgs) -> CliResult {
    let hmm = read_model(&args.model)?;
    let q = build_top_p_hmm(&hmm, args.p)?;
    if let Some(out) = &args.out {
        write_top_p_model(out, &q)?;
    }
    let r = &q.report;
    println!("p: {}", r.p);
    println!("transition sparsity: {:.6}", r.transition_sparsity);
    println!("observation sparsity: {:.6}", r.observation_sparsity);
    println!("transition non-zeros: {}", q.transition_csr.nnz());
    println!("observation non-zeros: {}", q.observation_csr.nnz());
    println!("min kept mass: {:.6}", r.min_kept_mass);
    Ok(())
}

fn run(args: &RunArgs) -> CliResult {
    let Format::Csv = args.format;
    let source = match (&args.model, args.kind) {
        (Some(path), _) => ModelSource::File(path.clone()),
        (None, Some(kind)) => args.generator.source(kind, args.seed),
        (None, None) => return Err(Failure::Input("either --model or --kind is required".into())),
    };
    let hmm = source.load()?;
    let config = ExperimentConfig {
        model_name: source.name(),
        p_values: args.p.clone(),
        horizon: args.horizon,
        obs_period: args.obs_period,
        mode: args.mode,
        seed: args.seed,
        repetitions: args.repetitions,
        gamma: args.gamma.into(),
    };
    if matches!(config.gamma, GammaPolicy::Always) && hmm.n_states() > GAMMA_AUTO_LIMIT {
        eprintln!("computing the mixing rate of {} states, this may take a while", hmm.n_states());
    }
    let records = run_experiment(&hmm, &config)?;
    write_csv(output(args.out.as_deref())?, &records)?;

    for r in &records {
        if let Outcome::Failed(msg) = &r.outcome {
            eprintln!("p={}: {msg}", r.p);
        }
    }
    match records.iter().find(|r| r.violates_bounds()) {
        Some(r) => Err(Failure::Violation(format!("error bound exceeded at p={}", r.p))),
        None => Ok(()),
    }
}

fn analyze(args: &AnalyzeArgs) -> CliResult {
    let hmm = read_model(&args.model)?;
    let n = hmm.n_states();
    if n > GAMMA_AUTO_LIMIT && !args.force {
        return Err(Failure::Input(format!(
            "{n} states: the mixing rate costs O(n^3); pass --force to compute it"
        )));
    }
    if n > GAMMA_AUTO_LIMIT {
        eprintln!("computing the mixing rate of {n} states, this may take a while");
    }
    let mut out = output(args.out.as_deref())?;
    report(&mut out, &hmm, args)?;
    out.flush()?;
    Ok(())
}

fn report(out: &mut dyn Write, hmm: &Hmm, args: &AnalyzeArgs) -> Result<(), Failure> {
    let gamma = minimal_mixing_rate(hmm.transition())?;
    writeln!(out, "states: {}", hmm.n_states())?;
    writeln!(out, "gamma: {gamma}")?;
    if gamma == 0.0 {
        writeln!(out, "no mixing guarantee: error may grow linearly in time")?;
    }
    for &p in &args.p {
        let bounds = error_bounds(p, gamma)?;
        let truncated = build_top_p_hmm(hmm, p)?;
        let truncated_gamma = minimal_mixing_rate(&truncated.transition_csr.to_dense())?;
        let mixing = if bounds.has_mixing_guarantee() { bounds.mixing_bound().to_string() } else { "none".into() };
        writeln!(
            out,
            "p={p}: mixing bound {mixing}, linear bound at step {} {}, truncated gamma {truncated_gamma}",
            args.horizon,
            bounds.linear_bound(args.horizon),
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Truncate(a) => truncate(a),
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(EXIT_VIOLATION)
        }
    }
}
