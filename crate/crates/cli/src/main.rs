//! `resil`: fault-injection campaigns, trace ingestion, graph export and the
//! analysis service.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use resil_client::Client;
use resil_core::canonical;
use resil_core::harness::{run_campaign, CampaignOptions, Outcome, ToyProgram, DEFAULT_STEP_LIMIT};
use resil_core::workspace::{ExportFormat, IngestSummary, View, Workspace, CAMPAIGN_FILE};
use resil_core::{criticality_ranking, RankedEdge};

#[derive(Parser)]
#[command(
    name = "resil",
    version,
    about = "Control-flow resilience analysis of fault-injection traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and analyse trace files into a new workspace version.
    Ingest {
        /// Trace files or directories of `*.trace` files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Run a seeded fault-injection campaign on a toy program and ingest it.
    Campaign {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        workspace: PathBuf,
        /// Initial values of the entry function's registers.
        #[arg(long, value_delimiter = ',')]
        inputs: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_STEP_LIMIT)]
        step_limit: u64,
        /// Campaign name; defaults to the program's file stem.
        #[arg(long)]
        name: Option<String>,
        /// Also write the raw traces and the campaign manifest here.
        #[arg(long)]
        keep_traces: Option<PathBuf>,
    },
    /// Export the graph of one function for one faulty run.
    Diff {
        #[arg(long)]
        golden: String,
        #[arg(long)]
        faulty: String,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 0)]
        threshold: u64,
        #[arg(long, default_value = "json")]
        format: ExportFormat,
        #[arg(long, default_value = "diff")]
        view: View,
        #[command(flatten)]
        source: Source,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the latest workspace version over HTTP.
    Serve {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory of static front-end assets.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Most critical edges across the campaign, or within one function.
    Rank {
        #[arg(long)]
        function: Option<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        source: Source,
        /// Print canonical JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

/// Where to read analysis results from.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Read the workspace directly.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Query a running service, e.g. http://127.0.0.1:8080.
    #[arg(long)]
    server: Option<String>,
}

fn print_summary(s: &IngestSummary) {
    println!(
        "ingested {}: campaign {}, {} golden + {} faulty runs, {} functions",
        s.version, s.campaign_id, s.golden_runs, s.faulty_runs, s.functions
    );
    for f in &s.findings {
        eprintln!("finding: {}: {}", f.file, f.message);
    }
}

fn ingest(inputs: &[PathBuf], workspace: &Path) -> Result<()> {
    let summary = Workspace::new(workspace).ingest(inputs)?;
    print_summary(&summary);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn campaign(
    program_path: &Path,
    runs: usize,
    seed: u64,
    workspace: &Path,
    inputs: &[u64],
    step_limit: u64,
    name: Option<String>,
    keep_traces: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(program_path)
        .with_context(|| format!("reading {}", program_path.display()))?;
    let program = ToyProgram::parse(&text)?;
    let name = name.unwrap_or_else(|| {
        program_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "campaign".into())
    });
    let options = CampaignOptions { name, step_limit };
    let c = run_campaign(&program, inputs, runs, seed, &options)?;
    let mut counts = [0usize; 3];
    for r in &c.manifest.runs {
        if let Some(o) = &r.outcome {
            counts[o.classification as usize] += 1;
        }
    }
    if let Some(dir) = keep_traces {
        std::fs::create_dir_all(dir)?;
        for run in std::iter::once(&c.golden).chain(&c.faulty) {
            std::fs::write(dir.join(format!("{}.trace", run.run_id)), run.render())?;
        }
        std::fs::write(dir.join(CAMPAIGN_FILE), canonical::to_vec(&c.manifest)?)?;
    }
    let runs = std::iter::once(c.golden)
        .chain(c.faulty)
        .map(|r| (format!("{}.trace", r.run_id), Ok(r)));
    let summary = Workspace::new(workspace).ingest_runs(runs, Some(c.manifest))?;
    print_summary(&summary);
    println!(
        "outcomes: {} benign, {} sdc, {} crash",
        counts[Outcome::Benign as usize],
        counts[Outcome::Sdc as usize],
        counts[Outcome::Crash as usize]
    );
    Ok(())
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

#[allow(clippy::too_many_arguments)]
async fn diff(
    golden: &str,
    faulty: &str,
    function: &str,
    threshold: u64,
    format: ExportFormat,
    view: View,
    source: &Source,
    out: Option<&Path>,
) -> Result<()> {
    let bytes = if let Some(url) = &source.server {
        let client = Client::new(url.clone());
        let runs = client.runs().await?;
        if runs.golden_run_id != golden {
            bail!("golden run is `{}`, not `{golden}`", runs.golden_run_id);
        }
        let symbols = client.symbols().await?;
        let Some(sym) = symbols.iter().find(|s| s.name == function) else {
            bail!("no function named `{function}`");
        };
        client
            .export(faulty, sym.index, format, threshold, view)
            .await?
    } else {
        let snap = Workspace::new(source.workspace.as_deref().expect("clap group")).latest()?;
        if snap.manifest().golden_run_id != golden {
            bail!(
                "golden run is `{}`, not `{golden}`",
                snap.manifest().golden_run_id
            );
        }
        let index = snap.function_by_name(function)?.index;
        snap.export(faulty, index, format, threshold, view)?
    };
    emit(&bytes, out)
}

async fn rank(function: Option<&str>, top: usize, source: &Source, json: bool) -> Result<()> {
    let (edges, names): (Vec<RankedEdge>, Vec<(usize, String)>) = if let Some(url) = &source.server
    {
        let client = Client::new(url.clone());
        let symbols = client.symbols().await?;
        let index = match function {
            Some(name) => match symbols.iter().find(|s| s.name == name) {
                Some(s) => Some(s.index),
                None => bail!("no function named `{name}`"),
            },
            None => None,
        };
        let edges = client.ranking(Some(top), index).await?;
        (
            edges,
            symbols.into_iter().map(|s| (s.index, s.name)).collect(),
        )
    } else {
        let snap = Workspace::new(source.workspace.as_deref().expect("clap group")).latest()?;
        let edges = match function {
            Some(name) => criticality_ranking(&snap.cvg(snap.function_by_name(name)?.index)?, top),
            None => snap.ranking(Some(top))?,
        };
        (
            edges,
            snap.symbols()
                .iter()
                .map(|s| (s.index, s.name.clone()))
                .collect(),
        )
    };
    if json {
        return emit(&canonical::to_vec(&edges)?, None);
    }
    let name_of = |i: usize| {
        names
            .iter()
            .find(|(j, _)| *j == i)
            .map_or("?", |(_, n)| n.as_str())
    };
    println!(
        "{:>4}  {:<28} {:>10} -> {:<10} {:>8} {:>6} {:>8} {:>10}",
        "#", "function", "from", "to", "score", "freq", "max_w", "mean_w"
    );
    for (i, e) in edges.iter().enumerate() {
        println!(
            "{:>4}  {:<28} {:>10} -> {:<10} {:>8.4} {:>6.3} {:>8} {:>10.3}",
            i + 1,
            name_of(e.function_index),
            e.from.to_string(),
            e.to.to_string(),
            e.score,
            e.freq,
            e.max_w,
            e.mean_w
        );
    }
    Ok(())
}

async fn serve(workspace: &Path, host: IpAddr, port: u16, assets: Option<&Path>) -> Result<()> {
    let server = resil_server::start(workspace, SocketAddr::new(host, port), assets).await?;
    println!("listening on {}", server.base_url());
    server.wait().await?;
    Ok(())
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { inputs, workspace } => ingest(&inputs, &workspace),
        Command::Campaign {
            program,
            runs,
            seed,
            workspace,
            inputs,
            step_limit,
            name,
            keep_traces,
        } => campaign(
            &program,
            runs,
            seed,
            &workspace,
            &inputs,
            step_limit,
            name,
            keep_traces.as_deref(),
        ),
        Command::Diff {
            golden,
            faulty,
            function,
            threshold,
            format,
            view,
            source,
            out,
        } => {
            diff(
                &golden,
                &faulty,
                &function,
                threshold,
                format,
                view,
                &source,
                out.as_deref(),
            )
            .await
        }
        Command::Serve {
            workspace,
            port,
            host,
            assets,
        } => serve(&workspace, host, port, assets.as_deref()).await,
        Command::Rank {
            function,
            top,
            source,
            json,
        } => rank(function.as_deref(), top, &source, json).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
