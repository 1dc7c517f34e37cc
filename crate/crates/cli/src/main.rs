//! `groundwork`: run the tidying pipeline, evaluate modes, and check robot
//! programs from the command line.
//!
//! Exit codes: 0 success, 2 domain failure (invalid program, skipped plan),
//! 64 usage or configuration error, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groundwork_core::pipeline::{Mode, PipelineConfig};

mod commands;

pub const EXIT_DOMAIN: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_INTERNAL: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "groundwork", version, about = "Ask, look closer, then tidy.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline on one world and execute the resulting plans.
    Run(RunArgs),
    /// Run several modes over every manifest in a directory and compare.
    Eval(EvalArgs),
    /// Statically check a robot program.
    ValidateProgram(ValidateArgs),
    /// Check and run a robot program against a world.
    ExecProgram(ExecArgs),
    /// Write a seeded synthetic occlusion suite with matching fixtures.
    GenSuite(GenSuiteArgs),
    /// Generate benchmark questions for a world with the LLM.
    GenBench(GenBenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmBackend {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VlmBackend {
    Scripted,
    Http,
    Oracle,
    Human,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    pub llm: LlmBackend,
    #[arg(long, value_enum, default_value = "oracle")]
    pub vlm: VlmBackend,
    /// Directory of scripted fixtures, one `<world stem>.json` per world.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value = "ours_llm", value_parser = parse_mode)]
    pub mode: Mode,
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_ITERATIONS)]
    pub iterations: u32,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON object mapping object names to owner preferences.
    #[arg(long)]
    pub preferences: Option<PathBuf>,
    /// Decide only; skip code generation and execution.
    #[arg(long)]
    pub no_execute: bool,
    /// Fixed RFC 3339 timestamp for every transcript event.
    #[arg(long, env = "GROUNDWORK_PIN_TIMESTAMP")]
    pub pin_timestamp: Option<String>,
    /// Reserved; the pipeline is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of world manifests (`*.json`).
    #[arg(long)]
    pub manifests: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub modes: Vec<Mode>,
    #[arg(long, default_value_t = PipelineConfig::DEFAULT_ITERATIONS)]
    pub iterations: u32,
    #[command(flatten)]
    pub backends: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "GROUNDWORK_PIN_TIMESTAMP")]
    pub pin_timestamp: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub program: PathBuf,
    /// World whose objects and receptacles the program may use. Without
    /// it, only ordering rules are checked.
    #[arg(long)]
    pub world: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExecArgs {
    pub program: PathBuf,
    #[arg(long)]
    pub world: PathBuf,
    /// Also write the trace and final state here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenSuiteArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub objects: usize,
    /// Number of suites, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GenBenchArgs {
    #[arg(long)]
    pub world: PathBuf,
    /// JSON object mapping each object to its correct option letters.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "scripted")]
    pub llm: LlmBackend,
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::ValidateProgram(a) => commands::validate_program(&a),
        Command::ExecProgram(a) => commands::exec_program(&a),
        Command::GenSuite(a) => commands::gen_suite(&a),
        Command::GenBench(a) => commands::gen_bench(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
