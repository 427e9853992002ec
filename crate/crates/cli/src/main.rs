//! `bioextract`: run the extraction pipeline, rank annotation candidates,
//! score against gold and serve the curation API.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rust_decimal::Decimal;

use bioextract_core::chem::{FingerprintParams, StereoMode};
use bioextract_core::eval::{read_gold_jsonl, score, GoldRecord, MarkushGranularity, MatchConfig, MetricReport, ScoredDoc, Task};
use bioextract_core::join::rank_for_annotation;
use bioextract_core::record::{ExtractionRecord, Stage, StageStatus};
use bioextract_curation::{Pipeline, RunStore};
use bioextract_pipeline::orchestrator::RECORD_FILE;
use bioextract_pipeline::{run_batch, CassetteMode, DocumentInput, PipelineConfig, RunOptions};

#[derive(Parser)]
#[command(name = "bioextract", version, about = "Protein-ligand bioactivity extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract records from a PDF, a pre-parsed JSON document or a directory of them.
    Extract(ExtractArgs),
    /// Rank a record's triplets against a query structure.
    Annotate(AnnotateArgs),
    /// Score predicted records against gold annotations.
    Score(ScoreArgs),
    /// Serve the curation API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct CassetteArgs {
    /// Cassette directory for recorded backend exchanges.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Store every live exchange in the cassette.
    #[arg(long, requires = "cassette", conflicts_with = "replay")]
    record: bool,
    /// Answer backend calls only from the cassette.
    #[arg(long, requires = "cassette")]
    replay: bool,
}

impl CassetteArgs {
    fn mode(&self) -> Option<(&Path, CassetteMode)> {
        let dir = self.cassette.as_deref()?;
        let mode = if self.replay {
            CassetteMode::Replay
        } else if self.record {
            CassetteMode::Record
        } else {
            CassetteMode::Passthrough
        };
        Some((dir, mode))
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long)]
    backends: PathBuf,
    #[command(flatten)]
    cassette: CassetteArgs,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    query_smiles: String,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory of extraction outputs (`<doc>/record.json` or `*.json`).
    #[arg(long)]
    pred: PathBuf,
    /// Gold JSONL file or a directory of them.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    /// Relative tolerance on nanomolar values.
    #[arg(long, default_value = "0.001")]
    rel_tol: Decimal,
    /// Ignore stereo configuration when comparing molecules.
    #[arg(long)]
    stereo_insensitive: bool,
    /// Maximum-cardinality assignment instead of the greedy one.
    #[arg(long)]
    optimal: bool,
    /// Score enumerated Markush structures as one multiset per paper.
    #[arg(long)]
    per_paper: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding the runs.
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: std::net::SocketAddr,
    /// Pipeline configuration; without it only records can be submitted.
    #[arg(long)]
    backends: Option<PathBuf>,
    #[command(flatten)]
    cassette: CassetteArgs,
}

fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn extract(args: &ExtractArgs) -> Result<bool> {
    let cfg = PipelineConfig::load(&args.backends)?;
    let backends = cfg.backends(args.cassette.mode())?;
    let opts = RunOptions::from_config(&cfg, &args.out)?;
    let inputs = DocumentInput::collect(&args.input)?;
    if inputs.is_empty() {
        bail!("no documents under {}", args.input.display());
    }
    let workers = args.workers.unwrap_or(cfg.workers).max(1);
    let mut ok = true;
    for (input, result) in inputs.iter().zip(run_batch(&inputs, &backends, &opts, workers)) {
        match result {
            Ok(rec) => {
                let failed: Vec<String> = Stage::ALL
                    .into_iter()
                    .filter(|s| rec.status(*s) == StageStatus::Failed)
                    .map(|s| format!("{s:?}").to_lowercase())
                    .collect();
                if failed.is_empty() {
                    println!("{}: {} triplets", rec.doc_id, rec.triplets.len());
                } else {
                    println!("{}: {} triplets; failed stages: {}", rec.doc_id, rec.triplets.len(), failed.join(", "));
                }
            }
            Err(e) => {
                ok = false;
                eprintln!("{}: {e}", input.path().display());
            }
        }
    }
    Ok(ok)
}

fn read_record(path: &Path) -> Result<ExtractionRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn annotate(args: &AnnotateArgs) -> Result<()> {
    let rec = read_record(&args.record)?;
    let ranked = rank_for_annotation(&rec.triplets, &args.query_smiles, &FingerprintParams::default())
        .with_context(|| format!("query {}", args.query_smiles))?;
    for c in ranked.iter().take(args.top) {
        println!("{}", serde_json::to_string(c)?);
    }
    Ok(())
}

/// Every record under `dir`: `<doc>/record.json` or loose `*.json` files.
fn read_predictions(dir: &Path) -> Result<Vec<ExtractionRecord>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() && path.join(RECORD_FILE).is_file() {
            paths.push(path.join(RECORD_FILE));
        } else if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| read_record(p)).collect()
}

fn read_gold(path: &Path) -> Result<Vec<GoldRecord>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut gold = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        gold.extend(read_gold_jsonl(&text).with_context(|| format!("parsing {}", f.display()))?);
    }
    Ok(gold)
}

fn run_score(args: &ScoreArgs) -> Result<()> {
    let preds = read_predictions(&args.pred)?;
    let gold = read_gold(&args.gold)?;
    let cfg = MatchConfig {
        rel_tol: args.rel_tol,
        stereo: if args.stereo_insensitive { StereoMode::Insensitive } else { StereoMode::Sensitive },
        optimal: args.optimal,
        markush_granularity: if args.per_paper { MarkushGranularity::PerPaper } else { MarkushGranularity::PerScaffold },
        ..MatchConfig::default()
    };
    let empties: Vec<ExtractionRecord> = gold
        .iter()
        .filter(|g| !preds.iter().any(|p| p.doc_id == g.doc_id))
        .map(|g| ExtractionRecord::new(&g.doc_id, ""))
        .collect();
    let docs: Vec<ScoredDoc<'_>> = gold
        .iter()
        .map(|g| {
            let pred = preds.iter().chain(&empties).find(|p| p.doc_id == g.doc_id).expect("every gold doc has a record");
            ScoredDoc { pred, gold: g }
        })
        .collect();
    let mut report = score(args.task, &docs, &cfg);
    for g in &gold {
        if empties.iter().any(|e| e.doc_id == g.doc_id) {
            report.notes.push(format!("no prediction for {}; scored as empty", g.doc_id));
        }
    }
    for p in &preds {
        if !gold.iter().any(|g| g.doc_id == p.doc_id) {
            report.notes.push(format!("no gold for {}; not scored", p.doc_id));
        }
    }
    write_report(&args.out, &report)?;
    for (name, t) in &report.tasks {
        if let (Some(mi), Some(ma)) = (t.micro, t.macro_) {
            println!(
                "{name}: micro P={:.4} R={:.4} F1={:.4}; macro P={:.4} R={:.4} F1={:.4}",
                mi.precision, mi.recall, mi.f1, ma.precision, ma.recall, ma.f1
            );
        }
    }
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<()> {
    let pipeline = match &args.backends {
        Some(path) => {
            let cfg = PipelineConfig::load(path)?;
            let backends = cfg.backends(args.cassette.mode())?;
            let options = RunOptions::from_config(&cfg, args.root.join("pipeline"))?;
            Some(Pipeline { backends: Arc::new(backends), options })
        }
        None => None,
    };
    let store = Arc::new(RunStore::open(&args.root, pipeline)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(bioextract_curation::api::serve(store, args.addr))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Extract(a) => extract(a),
        Command::Annotate(a) => annotate(a).map(|_| true),
        Command::Score(a) => run_score(a).map(|_| true),
        Command::Serve(a) => serve(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
