mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "livqual",
    version,
    about = "Fingerprint liveness detection from single-image quality features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the ten quality features from images into a CSV table.
    Extract(commands::ExtractArgs),
    /// Exhaustive feature-subset search with leave-one-out validation.
    Select(commands::SelectArgs),
    /// Train an LDA model on a feature table.
    Train(commands::TrainArgs),
    /// Classify a single image or a feature table against a model.
    Classify(commands::ClassifyArgs),
    /// Compute FLR/FFR/ACE from decisions or from a model plus features.
    Evaluate(commands::EvaluateArgs),
    /// Two-way cross-validation exchanging dev and test sets.
    Crossval(commands::CrossvalArgs),
    /// Generate a synthetic labeled corpus.
    Synth(commands::SynthArgs),
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("LIVQUAL_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid LIVQUAL_THREADS={raw:?}"),
        }
    }
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let exit_code = match cli.command {
        Command::Extract(args) => commands::run_extract(args),
        Command::Select(args) => commands::run_select(args),
        Command::Train(args) => commands::run_train(args),
        Command::Classify(args) => commands::run_classify(args),
        Command::Evaluate(args) => commands::run_evaluate(args),
        Command::Crossval(args) => commands::run_crossval(args),
        Command::Synth(args) => commands::run_synth(args),
    };
    match exit_code {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
