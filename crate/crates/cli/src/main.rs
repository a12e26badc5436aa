use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use untangle_cli::commands::render_report;
use untangle_cli::{
    cmd_eval, cmd_graph, cmd_synth_pool, cmd_tangle, cmd_untangle, exit_code, BackendKind, FileConfig, InputSource,
    Overrides, RunConfig, TangleOptions,
};
use untangle_core::dataset::PoolFilter;
use untangle_core::{Error, Result};

#[derive(Parser)]
#[command(name = "untangle", version, about = "Split tangled commits into concerns")]
struct Cli {
    /// TOML file with `[run]` and `[llm]` sections; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Untangle one commit.
    Untangle {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write DOT files of the graphs and contexts.
        #[arg(long)]
        export_dot: bool,
    },
    /// Untangle and score every case of a corpus.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a tangled corpus from a pool of atomic commits.
    Tangle {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 2)]
        min_concerns: usize,
        #[arg(long, default_value_t = 3)]
        max_concerns: usize,
        /// Largest timestamp spread within a case, in seconds.
        #[arg(long)]
        max_time_gap: Option<i64>,
        /// Leading directories every pair of commits must share.
        #[arg(long)]
        min_shared_dirs: Option<usize>,
        /// Every pair of commits must touch a common file.
        #[arg(long)]
        require_shared_file: bool,
    },
    /// Export the dependency graphs and contexts of one commit.
    Graph {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_comments: bool,
    },
    /// Generate a pool of atomic commits over a small Java code base.
    SynthPool {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        commits: usize,
        #[arg(long, default_value = "synthetic")]
        repo: String,
    },
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct InputArgs {
    /// Bundle directory with before/, after/, diff.patch and commit.json.
    #[arg(long, conflicts_with_all = ["repo", "rev"])]
    bundle: Option<PathBuf>,
    /// Git repository; use with --rev.
    #[arg(long, requires = "rev")]
    repo: Option<PathBuf>,
    #[arg(long, requires = "repo")]
    rev: Option<String>,
}

impl InputArgs {
    fn source(self) -> InputSource {
        match (self.bundle, self.repo, self.rev) {
            (Some(b), _, _) => InputSource::Bundle(b),
            (None, Some(repo), Some(rev)) => InputSource::Git { repo, rev },
            _ => unreachable!("clap enforces one input source"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Leave comment lines out of the statements to untangle.
    #[arg(long)]
    no_comments: bool,
    #[arg(long)]
    model: Option<String>,
    /// Cases evaluated at once.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Replies for the scripted backend: a JSON array, or an object keyed by prompt hash.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Run the two workers' calls of each phase concurrently.
    #[arg(long)]
    concurrent_validation: bool,
}

impl RunArgs {
    fn resolve(self, config: Option<&PathBuf>) -> Result<RunConfig> {
        let file = config.map(|p| FileConfig::load(p)).transpose()?;
        RunConfig::resolve(
            file,
            &Overrides {
                backend: self.backend,
                max_rounds: self.max_rounds,
                no_comments: self.no_comments,
                model: self.model,
                parallelism: self.parallelism,
                script: self.script,
                concurrent_validation: self.concurrent_validation,
            },
        )
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_ref();
    match cli.command {
        Command::Untangle {
            input,
            run,
            out,
            export_dot,
        } => {
            let cfg = run.resolve(config)?;
            let output = cmd_untangle(&input.source(), &out, &cfg, export_dot)?;
            for g in &output.result.groups {
                let ids: Vec<String> = g.members.iter().map(|s| s.to_string()).collect();
                println!("concern {}: {}  {}", g.concern_id, ids.join(" "), g.explanation);
            }
            println!("rounds used: {}", output.transcript.rounds_used);
        }
        Command::Eval { manifest, run, out } => {
            let cfg = run.resolve(config)?;
            let output = cmd_eval(&manifest, &out, &cfg)?;
            print!("{}", render_report(&output));
        }
        Command::Tangle {
            pool,
            out,
            seed,
            cases,
            min_concerns,
            max_concerns,
            max_time_gap,
            min_shared_dirs,
            require_shared_file,
        } => {
            let opts = TangleOptions {
                seed,
                cases,
                min_concerns,
                max_concerns,
                filter: PoolFilter {
                    max_time_gap_secs: max_time_gap,
                    min_shared_dirs,
                    require_shared_file,
                },
            };
            let r = cmd_tangle(&pool, &out, &opts)?;
            println!(
                "{} cases written to {} ({} conflicts, {} incompatible, {} filtered, {} draws)",
                r.cases,
                r.manifest.display(),
                r.conflicts,
                r.incompatible,
                r.filtered,
                r.attempts
            );
        }
        Command::Graph {
            input,
            out,
            no_comments,
        } => {
            for f in cmd_graph(&input.source(), &out, !no_comments)? {
                println!("{}", f.display());
            }
        }
        Command::SynthPool {
            out,
            seed,
            commits,
            repo,
        } => {
            let n = cmd_synth_pool(&out, seed, commits, &repo)?;
            println!("{n} commits written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level)),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Protocol { raw, .. } = &e {
                tracing::debug!(%raw, "offending reply");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
