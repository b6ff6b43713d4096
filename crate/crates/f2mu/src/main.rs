use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use f2mu::pipeline::{run_inner, run_source, run_tree, PipelineOptions};

/// Nontermination certificates for first-order term rewriting.
#[derive(Parser)]
#[command(name = "f2mu", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, reconstruct, and proof-check a program; echo its commands
    /// without running them.
    Check {
        file: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Check a program and execute its commands.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Print the bounded reduction tree of a term under the file's rules.
    Tree {
        file: PathBuf,
        /// Tree depth.
        #[arg(long)]
        depth: usize,
        /// The start term, e.g. "F Z (S Z) (S Z)".
        #[arg(long)]
        term: String,
    },
    /// Print leftmost-innermost steps of a term under the file's rules.
    Inner {
        file: PathBuf,
        /// Number of steps.
        #[arg(long)]
        depth: usize,
        /// The start term.
        #[arg(long)]
        term: String,
    },
}

#[derive(Args)]
struct CommonOpts {
    /// Head-reduction fuel per unfolding step.
    #[arg(long, default_value_t = 100_000)]
    fuel: usize,
    /// Also print a diagnostic trace of the first N terms of each lemma
    /// whose declared type is a first-order term.
    #[arg(long, default_value_t = 0)]
    trace_steps: usize,
    /// Depth bound for the productivity verdicts.
    #[arg(long, default_value_t = 10)]
    productivity_depth: usize,
    /// Verify that every printed lemma re-parses and re-prints to the same
    /// bytes.
    #[arg(long)]
    strict_names: bool,
    /// Only proof-check declarations that already carry annotated evidence.
    #[arg(long)]
    check_only: bool,
    /// Treat scope-check failures as backtrackable instead of fatal.
    #[arg(long)]
    backtrack_existentials: bool,
}

impl CommonOpts {
    fn pipeline(&self, run_commands: bool) -> PipelineOptions {
        PipelineOptions {
            fuel: self.fuel,
            trace_steps: self.trace_steps,
            productivity_depth: self.productivity_depth,
            strict_names: self.strict_names,
            check_only: self.check_only,
            backtrack_existentials: self.backtrack_existentials,
            run_commands,
        }
    }
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {}", path.display(), e);
        ExitCode::from(1)
    })
}

fn pipeline(path: &PathBuf, opts: PipelineOptions) -> ExitCode {
    let src = match read(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match run_source(&src, &opts) {
        Ok(out) => {
            print!("{}", out.report);
            for d in &out.diagnostics {
                eprintln!("{}", d);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            print!("{}", f.report);
            eprintln!("{}", f.error);
            ExitCode::from(f.error.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Check { file, opts } => pipeline(&file, opts.pipeline(false)),
        Cmd::Run { file, opts } => pipeline(&file, opts.pipeline(true)),
        Cmd::Tree { file, depth, term } => fragment(&file, |src| run_tree(src, depth, &term)),
        Cmd::Inner { file, depth, term } => fragment(&file, |src| run_inner(src, depth, &term)),
    }
}

fn fragment(
    path: &PathBuf,
    run: impl FnOnce(&str) -> Result<String, f2mu::pipeline::PipelineError>,
) -> ExitCode {
    let src = match read(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match run(&src) {
        Ok(out) => {
            print!("{}", out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
