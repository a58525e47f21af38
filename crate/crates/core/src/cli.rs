//! The `groundloop` command: run, eval, curate, bench-build, inspect.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 IO or schema
//! error. Per-sample failures during `run` are recorded in traces and do not
//! change the exit code.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{AppConfig, ConfigError, Overrides};
use crate::curation::{self, build_benchmark_item, CurationError, CurationManifest, Quotas};
use crate::eval::{self, render_table, score, split_simple_hard, BenchmarkItem, Metrics};
use crate::orchestrator::{read_traces, run_batch, write_trace, RunManifest, Trace};
use crate::prompt::ComposerOptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "groundloop", version, about = "Two-round grounded VQA runner")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "GROUNDLOOP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Samples in flight at once.
    #[arg(long, global = true, env = "GROUNDLOOP_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Drop "at location [...]" from every clue.
    #[arg(long, global = true, env = "GROUNDLOOP_NO_POSITIONS")]
    pub no_positions: bool,
    /// Context limit in tokens.
    #[arg(long, global = true, env = "GROUNDLOOP_BUDGET")]
    pub budget: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "GROUNDLOOP_OUTPUT")]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the two-round loop over a dataset; writes traces.jsonl and manifest.json.
    Run {
        /// Dataset JSONL; defaults to `paths.dataset`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score traces against a dataset.
    Eval {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Reference predictions `{id, answer}` for the simple/hard split.
        #[arg(long)]
        split_reference: Option<PathBuf>,
    },
    /// Build instruction-tuning records from candidate images.
    Curate {
        /// Candidate JSONL; defaults to `paths.candidates`.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        max_negatives: Option<usize>,
        #[arg(long)]
        max_positives_simple: Option<usize>,
        #[arg(long)]
        max_positives_with_clues: Option<usize>,
    },
    /// Build small-object benchmark skeletons and red-box annotation specs.
    BenchBuild {
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Question template; `{class}` is replaced by the object class.
        #[arg(long, default_value = "What is the color of the {class}?")]
        question_stub: String,
    },
    /// Print one trace, both prompts verbatim.
    Inspect {
        #[arg(long)]
        traces: PathBuf,
        trace_id: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn io_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Io(format!("{context}: {e}"))
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CurationError> for CliError {
    fn from(e: CurationError) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    config: Option<AppConfig>,
    overrides: Overrides,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let overrides = Overrides {
            parallelism: cli.parallelism,
            no_positions: cli.no_positions,
            budget: cli.budget,
            output: cli.output.clone(),
        };
        let config = match &cli.config {
            Some(path) => {
                let mut cfg = AppConfig::load(path)?;
                cfg.apply(&overrides)?;
                Some(cfg)
            }
            None => None,
        };
        Ok(Self { config, overrides })
    }

    fn require_config(&self, command: &str) -> Result<&AppConfig, CliError> {
        self.config.as_ref().ok_or_else(|| {
            CliError::Config(ConfigError::new(
                "--config",
                format!("`{command}` needs a configuration file"),
            ))
        })
    }

    fn composer(&self) -> ComposerOptions {
        let mut opts = self
            .config
            .as_ref()
            .map(|c| c.run.composer)
            .unwrap_or_default();
        if self.overrides.no_positions {
            opts.include_positions = false;
        }
        opts
    }

    fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .overrides
            .output
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.paths.output.clone()))
            .ok_or_else(|| {
                CliError::Config(ConfigError::new(
                    "--output",
                    "no output directory given (flag or `paths.output`)",
                ))
            })?;
        std::fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;
        Ok(dir)
    }

    fn input(
        &self,
        flag: &Option<PathBuf>,
        from_config: impl Fn(&AppConfig) -> Option<PathBuf>,
        name: &str,
    ) -> Result<PathBuf, CliError> {
        let path = flag
            .clone()
            .or_else(|| self.config.as_ref().and_then(&from_config))
            .ok_or_else(|| {
                CliError::Config(ConfigError::new(
                    format!("--{name}"),
                    format!("no {name} given (flag or `paths.{name}`)"),
                ))
            })?;
        if !path.exists() {
            return Err(CliError::Config(ConfigError::new(
                format!("--{name}"),
                format!("{} does not exist", path.display()),
            )));
        }
        Ok(path)
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Run { dataset } => cmd_run(&ctx, dataset, out),
        Command::Eval {
            traces,
            dataset,
            split_reference,
        } => cmd_eval(&ctx, traces, dataset, split_reference.as_deref(), out),
        Command::Curate {
            candidates,
            max_negatives,
            max_positives_simple,
            max_positives_with_clues,
        } => {
            let quotas = Quotas {
                negatives: *max_negatives,
                positives_simple: *max_positives_simple,
                positives_with_clues: *max_positives_with_clues,
            };
            cmd_curate(&ctx, candidates, quotas, out)
        }
        Command::BenchBuild {
            candidates,
            question_stub,
        } => cmd_bench_build(&ctx, candidates, question_stub, out),
        Command::Inspect { traces, trace_id } => cmd_inspect(traces, trace_id, out),
    }
}

fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path.display()))
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path.display()))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n").map_err(io_err(path.display()))?;
    }
    w.flush().map_err(io_err(path.display()))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err("stdout"))
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    #[serde(flatten)]
    manifest: &'a RunManifest,
    dataset: String,
    dataset_sha256: String,
}

fn cmd_run(ctx: &Context, dataset: &Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = ctx.require_config("run")?;
    let dataset = ctx.input(dataset, |c| c.paths.dataset.clone(), "dataset")?;
    let dir = ctx.output_dir()?;
    let items = eval::load_dataset(&dataset)?;
    let backend = cfg.build_backend()?;
    let agents = cfg
        .build_agents()
        .map_err(|e| CliError::Io(e.to_string()))?;

    let trace_path = dir.join("traces.jsonl");
    let file = File::create(&trace_path).map_err(io_err(trace_path.display()))?;
    let mut writer = BufWriter::new(file);
    let mut write_error = None;
    let manifest = run_batch(
        items
            .iter()
            .map(BenchmarkItem::to_sample)
            .collect::<Vec<_>>(),
        &backend,
        &agents,
        &cfg.run,
        |trace| {
            if write_error.is_none() {
                write_error = write_trace(&mut writer, &trace).err();
            }
        },
    );
    if let Some(e) = write_error {
        return Err(CliError::Io(format!("{}: {e}", trace_path.display())));
    }
    writer.flush().map_err(io_err(trace_path.display()))?;

    let record = RunRecord {
        manifest: &manifest,
        dataset: dataset.display().to_string(),
        dataset_sha256: file_sha256(&dataset)?,
    };
    write_json(&dir.join("manifest.json"), &record)?;
    let c = &manifest.counts;
    emit(
        out,
        &format!(
            "{} samples: {} direct, {} with agent calls, {} errors -> {}\n",
            c.samples,
            c.direct,
            c.called,
            c.errors,
            trace_path.display()
        ),
    )
}

fn load_trace_file(path: &Path) -> Result<Vec<Trace>, CliError> {
    let file = File::open(path).map_err(io_err(path.display()))?;
    read_traces(BufReader::new(file)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct SplitReport {
    simple: Metrics,
    hard: Metrics,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    traces: String,
    dataset: String,
    metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitReport>,
}

fn subset_metrics(
    traces: &[Trace],
    items: &[BenchmarkItem],
    ids: &[String],
) -> Result<Metrics, CliError> {
    let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let t: Vec<Trace> = traces
        .iter()
        .filter(|t| keep.contains(t.sample_id.as_str()))
        .cloned()
        .collect();
    let i: Vec<BenchmarkItem> = items
        .iter()
        .filter(|i| keep.contains(i.id.as_str()))
        .cloned()
        .collect();
    Ok(score(&t, &i)?)
}

fn cmd_eval(
    ctx: &Context,
    traces_path: &Path,
    dataset: &Option<PathBuf>,
    split_reference: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let dataset = ctx.input(dataset, |c| c.paths.dataset.clone(), "dataset")?;
    let items = eval::load_dataset(&dataset)?;
    let traces = load_trace_file(traces_path)?;
    let metrics =
        score(&traces, &items).map_err(|e| CliError::Io(format!("schema mismatch: {e}")))?;
    emit(out, &render_table(&metrics))?;

    let split = match split_reference {
        Some(path) => {
            let reference = eval::load_reference(path)?;
            let (simple_ids, hard_ids) = split_simple_hard(&items, &reference)?;
            let simple = subset_metrics(&traces, &items, &simple_ids)?;
            let hard = subset_metrics(&traces, &items, &hard_ids)?;
            let mut table = format!(
                "{:<16} {:>8} {:>8} {:>9}\n",
                "subset", "correct", "total", "accuracy"
            );
            for (name, m) in [("simple", &simple), ("hard", &hard)] {
                table.push_str(&format!(
                    "{:<16} {:>8} {:>8} {:>8.2}%\n",
                    name,
                    m.correct,
                    m.total,
                    m.accuracy * 100.0
                ));
            }
            emit(out, &table)?;
            Some(SplitReport { simple, hard })
        }
        None => None,
    };

    let report = EvalReport {
        traces: traces_path.display().to_string(),
        dataset: dataset.display().to_string(),
        metrics,
        split,
    };
    let dir = ctx
        .overrides
        .output
        .clone()
        .or_else(|| ctx.config.as_ref().and_then(|c| c.paths.output.clone()));
    if let Some(dir) = dir {
        std::fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CurateRecord<'a> {
    #[serde(flatten)]
    manifest: &'a CurationManifest,
    candidates: String,
    candidates_sha256: String,
    include_positions: bool,
}

fn cmd_curate(
    ctx: &Context,
    candidates: &Option<PathBuf>,
    quotas: Quotas,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let path = ctx.input(candidates, |c| c.paths.candidates.clone(), "candidates")?;
    let dir = ctx.output_dir()?;
    let samples = curation::load_candidates(&path)?;
    let opts = ctx.composer();
    let (records, manifest) = curation::curate(&samples, quotas, &opts)?;
    let violations = curation::audit(&records, &samples);
    if !violations.is_empty() {
        return Err(CliError::Io(format!(
            "curation audit failed:\n{}",
            violations.join("\n")
        )));
    }
    write_jsonl(
        &dir.join("records.jsonl"),
        records.iter().map(|r| r.to_line()),
    )?;
    write_json(
        &dir.join("curation_manifest.json"),
        &CurateRecord {
            manifest: &manifest,
            candidates: path.display().to_string(),
            candidates_sha256: file_sha256(&path)?,
            include_positions: opts.include_positions,
        },
    )?;
    emit(
        out,
        &format!(
            "{} negatives, {} simple positives, {} positives with clues ({} skipped)\n",
            manifest.negatives,
            manifest.positives_simple,
            manifest.positives_with_clues,
            manifest.skipped_without_question
        ),
    )
}

#[derive(Debug, Serialize)]
struct BenchManifest {
    candidates: String,
    candidates_sha256: String,
    question_stub: String,
    images: usize,
    images_without_small_objects: usize,
    items: usize,
}

fn cmd_bench_build(
    ctx: &Context,
    candidates: &Option<PathBuf>,
    question_stub: &str,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let path = ctx.input(candidates, |c| c.paths.candidates.clone(), "candidates")?;
    let dir = ctx.output_dir()?;
    let samples = curation::load_candidates(&path)?;
    let mut items = Vec::new();
    let mut specs = Vec::new();
    let mut empty = 0;
    for s in &samples {
        match build_benchmark_item(&s.candidate, question_stub) {
            Ok(built) => {
                for (item, spec) in built {
                    items.push(item);
                    specs.push(spec);
                }
            }
            Err(CurationError::NoSmallObjects(id)) => {
                tracing::info!(image = %id, "no small objects; skipped");
                empty += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_jsonl(&dir.join("items.jsonl"), &items)?;
    write_jsonl(&dir.join("annotations.jsonl"), &specs)?;
    write_json(
        &dir.join("bench_manifest.json"),
        &BenchManifest {
            candidates: path.display().to_string(),
            candidates_sha256: file_sha256(&path)?,
            question_stub: question_stub.to_string(),
            images: samples.len(),
            images_without_small_objects: empty,
            items: items.len(),
        },
    )?;
    emit(
        out,
        &format!(
            "{} items from {} images ({} without small objects)\n",
            items.len(),
            samples.len(),
            empty
        ),
    )
}

/// Human-readable dump of one trace. Prompts are printed exactly as rendered.
pub fn render_trace(t: &Trace) -> String {
    let mut s = format!("trace {}\n", t.sample_id);
    let section = |s: &mut String, title: &str, body: &str| {
        s.push_str(&format!("--- {title} ---\n{body}\n"));
    };
    if let Some(p) = &t.round1_prompt {
        section(&mut s, "round 1 prompt", &p.render_text());
    }
    if let Some(r) = &t.round1_raw {
        section(&mut s, "round 1 reply", r);
    }
    for call in &t.agent_calls {
        let mut line = format!("{} {:?}: {}", call.kind, call.request, call.result_summary);
        if let Some(e) = &call.error {
            line.push_str(&format!(" (error: {e})"));
        }
        section(&mut s, "agent call", &line);
    }
    if let Some(p) = &t.round2_prompt {
        section(&mut s, "round 2 prompt", &p.render_text());
    }
    if let Some(r) = &t.round2_raw {
        section(&mut s, "round 2 reply", r);
    }
    section(&mut s, "final answer", &t.final_answer);
    if let Some(e) = &t.error {
        section(&mut s, "error", e);
    }
    s
}

fn cmd_inspect(traces: &Path, id: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let traces = load_trace_file(traces)?;
    let t = traces
        .iter()
        .find(|t| t.sample_id == id)
        .ok_or_else(|| CliError::Io(format!("no trace with id `{id}`")))?;
    emit(out, &render_trace(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_global_flag() {
        let help = Cli::command().render_long_help().to_string();
        for flag in [
            "--config",
            "--parallelism",
            "--no-positions",
            "--budget",
            "--output",
        ] {
            assert!(help.contains(flag), "{flag} missing from help");
        }
        for cmd in ["run", "eval", "curate", "bench-build", "inspect"] {
            assert!(help.contains(cmd), "{cmd} missing from help");
        }
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let mut sink = Vec::new();
        assert_eq!(
            run_from(["groundloop", "run", "--frobnicate"], &mut sink),
            EXIT_CONFIG
        );
    }

    #[test]
    fn run_without_config_is_a_config_error() {
        let mut sink = Vec::new();
        let code = run_from(["groundloop", "run", "--output", "/tmp/x"], &mut sink);
        assert_eq!(code, EXIT_CONFIG);
    }
}
