use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use guide_core::dsl::{lint_sequencing, load};
use guide_core::eval::{build_report, load_corpus, DEFAULT_SAMPLE_SIZE, DEFAULT_SEED};
use guide_core::gen::{AnthropicBackend, LlmClient, LlmParams, Pipeline, PipelineConfig, PipelineError, PromptPack, API_KEY_VAR};
use guide_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "guide", version, about = "Command guidelines: generate, evaluate, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a guideline from a manual page.
    Gen(GenArgs),
    /// Measure guidelines against a corpus of invocations.
    Eval(EvalArgs),
    /// Run the session server.
    Serve(ServeArgs),
    /// Load a guideline and report ordered-choice hazards.
    Lint {
        file: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Command name.
    command: String,
    /// Manual page text.
    #[arg(long)]
    man: PathBuf,
    #[command(flatten)]
    mode: Mode,
    /// Where to write the guideline; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the run report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Prompt template directory; the built-in templates by default.
    #[arg(long, value_name = "DIR")]
    prompts: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Mode {
    /// Call the model directly.
    #[arg(long)]
    live: bool,
    /// Call the model and save every exchange in DIR.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Answer from exchanges saved in DIR.
    #[arg(long, value_name = "DIR")]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// One invocation per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of `<command>.guide` files.
    #[arg(long)]
    guidelines: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Invocations sampled per command for the recreatability check.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
    sample: usize,
    /// Where to write the Markdown table; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Sandbox root for sessions.
    #[arg(long)]
    root: PathBuf,
    /// Directory of `<command>.guide` files.
    #[arg(long)]
    guidelines: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Answer AI requests from exchanges saved in DIR.
    #[arg(long, value_name = "DIR")]
    replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("GUIDE_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let out = match cli.command {
        Command::Gen(args) => gen(args),
        Command::Eval(args) => eval(args),
        Command::Serve(args) => serve(args),
        Command::Lint { file } => lint(&file),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let man = fs::read_to_string(&args.man).with_context(|| format!("reading {}", args.man.display()))?;
    let pack = match &args.prompts {
        Some(dir) => PromptPack::load(dir).with_context(|| format!("reading prompts from {}", dir.display()))?,
        None => PromptPack::builtin(),
    };
    let params = LlmParams::default();
    let llm = if let Some(dir) = &args.mode.replay {
        LlmClient::replay(dir, params)
    } else if let Some(dir) = &args.mode.record {
        LlmClient::record(AnthropicBackend::from_env()?, dir, params)
    } else {
        LlmClient::live(params)?
    };
    let pipeline = Pipeline { llm: &llm, pack: &pack, config: PipelineConfig::default() };
    let (guideline, report, code) = match pipeline.run(&args.command, &man) {
        Ok(r) => (Some(r.guideline), r.report, ExitCode::SUCCESS),
        Err(PipelineError::Failed { best, report, .. }) => (best, *report, ExitCode::from(2)),
        Err(PipelineError::Llm { error, report }) => {
            if let Some(p) = &args.report {
                fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            bail!(error);
        }
    };
    eprint!("{}", report.summary());
    if let Some(p) = &args.report {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    match guideline {
        Some(g) => write_or_print(args.out.as_deref(), &g)?,
        None => eprintln!("no draft loaded; nothing to write"),
    }
    Ok(code)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.guidelines)
        .with_context(|| format!("reading {}", args.guidelines.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "guide"))
        .collect();
    paths.sort();
    let mut guidelines = Vec::new();
    for p in &paths {
        let src = fs::read_to_string(p)?;
        guidelines.push(load(&src).with_context(|| format!("loading {}", p.display()))?);
    }
    if guidelines.is_empty() {
        bail!("no .guide files in {}", args.guidelines.display());
    }
    let names: Vec<&str> = guidelines.iter().map(|g| g.command_name.as_str()).collect();
    let corpus = load_corpus(&args.corpus, &names).with_context(|| format!("reading {}", args.corpus.display()))?;
    let report = build_report(&guidelines, &corpus, args.sample, args.seed);
    if let Some(p) = &args.json {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    write_or_print(args.out.as_deref(), &report.to_markdown())?;
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let mut config = ServerConfig::new(&args.root, &args.guidelines);
    if let Some(dir) = &args.replay {
        config = config.with_llm(LlmClient::replay(dir, LlmParams::default()));
    } else {
        match LlmClient::live(LlmParams::default()) {
            Ok(llm) => config = config.with_llm(llm),
            Err(_) => tracing::warn!("{API_KEY_VAR} is not set; AI assistance is disabled"),
        }
    }
    let app = AppState::new(config).with_context(|| format!("sandbox root {}", args.root.display()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        guide_server::serve(listener, app).await
    })?;
    Ok(ExitCode::SUCCESS)
}

fn lint(file: &Path) -> Result<ExitCode> {
    let src = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let g = load(&src).with_context(|| format!("loading {}", file.display()))?;
    let findings = lint_sequencing(&g);
    for f in &findings {
        println!("{f}");
    }
    Ok(if findings.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
