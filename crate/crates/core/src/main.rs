use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use discourse_dynamics::pipeline::{
    generate_synthetic_corpus, run_pipeline, write_jsonl, CommunityStatus, PipelineConfig,
    PipelineError,
};
use discourse_dynamics::server::serve;

#[derive(Parser)]
#[command(
    name = "dd",
    version,
    about = "Discourse dynamics pipeline and artifact server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline and write one artifact per community.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Restrict the run to these communities (repeatable).
        #[arg(long = "community")]
        communities: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic JSONL corpus with a planted topic switch.
    Synth {
        #[arg(long)]
        posts: usize,
        #[arg(long = "switch")]
        switch_index: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        community: String,
    },
    /// Serve exported artifacts over HTTP.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        artifact_dir: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn fail(e: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn pipeline_fail(e: PipelineError) -> ExitCode {
    let code = e.exit_code() as u8;
    fail(e, code)
}

fn run(
    config: PathBuf,
    communities: Vec<String>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> ExitCode {
    let mut cfg = match PipelineConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return pipeline_fail(e),
    };
    if !communities.is_empty() {
        cfg.communities = Some(communities);
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = match run_pipeline(&cfg) {
        Ok(r) => r,
        Err(e) => return pipeline_fail(e),
    };
    for c in &report.communities {
        let status = match c.status {
            CommunityStatus::Ok => "ok",
            CommunityStatus::Skipped => "skipped",
            CommunityStatus::Failed => "failed",
        };
        match (&c.artifact, &c.reason) {
            (Some(path), _) => println!(
                "{status}\t{}\t{}\t{}",
                c.community_id,
                c.posts,
                path.display()
            ),
            (None, Some(reason)) => println!("{status}\t{}\t{}\t{reason}", c.community_id, c.posts),
            (None, None) => println!("{status}\t{}\t{}", c.community_id, c.posts),
        }
    }
    if report.has_failures() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn synth(
    posts: usize,
    switch_index: usize,
    seed: u64,
    out: PathBuf,
    community: String,
) -> ExitCode {
    let result = generate_synthetic_corpus(&community, posts, switch_index, seed)
        .and_then(|p| write_jsonl(&p, &out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => pipeline_fail(e),
    }
}

fn serve_cmd(
    config: PathBuf,
    bind: Option<String>,
    artifact_dir: Option<PathBuf>,
    static_dir: Option<PathBuf>,
) -> ExitCode {
    let mut cfg = match PipelineConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return pipeline_fail(e),
    };
    if let Some(b) = bind {
        cfg.server.bind = b;
    }
    if let Some(d) = artifact_dir {
        cfg.server.artifact_dir = Some(d);
    }
    if let Some(d) = static_dir {
        cfg.server.static_dir = Some(d);
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(e, 1),
    };
    let dir = cfg.artifact_dir();
    match runtime.block_on(serve(&cfg.server, &dir, cfg.seed)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ discourse_dynamics::server::ServerError::MissingArtifactDir(_))
        | Err(e @ discourse_dynamics::server::ServerError::InvalidBind(_)) => fail(e, 2),
        Err(e) => fail(e, 1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config,
            communities,
            output_dir,
            seed,
        } => run(config, communities, output_dir, seed),
        Command::Synth {
            posts,
            switch_index,
            seed,
            out,
            community,
        } => synth(posts, switch_index, seed, out, community),
        Command::Serve {
            config,
            bind,
            artifact_dir,
            static_dir,
        } => serve_cmd(config, bind, artifact_dir, static_dir),
    }
}
