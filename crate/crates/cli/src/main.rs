use changecap_cli::commands::{
    run_eval, run_infer, run_plot, run_score, run_synth, run_train, EvalArgs, InferArgs, PlotArgs,
    ScoreArgs, SynthArgs, TrainArgs,
};
use clap::{Parser, Subcommand};

/// Change captioning for bi-temporal image pairs: synthetic data,
/// training with an auxiliary change-detection branch, evaluation, and
/// caption metrics.
#[derive(Parser)]
#[command(name = "changecap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bi-temporal dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score generated captions for one split of a dataset.
    Eval(EvalArgs),
    /// Caption a single image pair and export the predicted change mask.
    Infer(InferArgs),
    /// Render training-log curves to PNG files.
    Plot(PlotArgs),
    /// Compute caption metrics for a candidates/references file.
    Score(ScoreArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args).map(|_| ()),
        Command::Eval(args) => run_eval(args).map(|_| ()),
        Command::Infer(args) => run_infer(args).map(|_| ()),
        Command::Plot(args) => run_plot(args).map(|_| ()),
        Command::Score(args) => run_score(args).map(|_| ()),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
