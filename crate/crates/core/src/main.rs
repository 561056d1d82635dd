use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use penalty_hpo::cli::runner::{execute, Command, Format, Outcome};

#[derive(Parser)]
#[command(name = "hpo", version, about = "Gradient-based penalty hyperparameter optimization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probes, grid baseline and the outer loop with its certificate.
    Run(Args),
    /// Grid-search baseline only.
    Grid(Args),
    /// Assumption probes only.
    Probe(Args),
}

#[derive(clap::Args)]
struct Args {
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

fn print_outcome(o: &Outcome) {
    let s = &o.summary;
    if let (Some(reason), Some(l), Some(j)) = (s.stop_reason, &s.lambda_final, s.J_final) {
        let cert = s.certificate.as_ref().map_or("none", |c| c.verdict);
        println!("stop={reason} lambda={l:?} J={j:e} certificate={cert}");
    }
    if let (Some(l), Some(j)) = (&s.lambda_grid, s.J_grid) {
        println!("grid lambda={l:?} J={j:e}");
    }
    if !s.probes.is_empty() {
        let cells: Vec<String> = s.probes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("probes {}", cells.join(" "));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Grid(a) => (Command::Grid, a),
        Cmd::Probe(a) => (Command::Probe, a),
    };
    let format = args.format.map(|f| match f {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
        FormatArg::Both => Format::Both,
    });
    match execute(command, &args.config, args.out.as_deref(), format) {
        Ok(outcome) => {
            print_outcome(&outcome);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hpo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
