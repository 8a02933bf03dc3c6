//! Command-line front end. Every command writes its result to `out`; errors
//! are returned for `main` to print as JSON on stderr.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use scenescout_core::clock::SystemClock;
use scenescout_core::eval::{
    self, AnnotationFile, AnnotationTask, Consistency, Correctness, DescriptionAnnotation,
    EvalError, EvalHeader, InfoType, Mode, ObjectiveSubtype, Redundancy, Relevance,
    SentenceAnnotation, SourceLog,
};
use scenescout_core::exploration::{self, ExplorationSession, SessionId, SessionStatus};
use scenescout_core::geo::GeoCoordinate;
use scenescout_core::preview::{self, Endpoint, PreviewRequest};
use scenescout_core::prompt::DescriptionTriple;
use scenescout_core::providers::Providers;
use serde_json::json;
use thiserror::Error;

use crate::api::{self, AppState, StartupError};
use crate::config::{Config, ConfigError};
use crate::error::ApiError;
use crate::render;
use crate::store::{DataDir, StoreError};

#[derive(Debug, Parser)]
#[command(name = "scenescout", version, about = "Street-level route previews and virtual exploration")]
pub struct Cli {
    /// TOML config file; SCENESCOUT_* variables override it.
    #[arg(long, global = true, env = "SCENESCOUT_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerbosityArg {
    Short,
    Medium,
    Long,
}

impl VerbosityArg {
    fn pick(self, t: &DescriptionTriple) -> &str {
        match self {
            VerbosityArg::Short => &t.short,
            VerbosityArg::Medium => &t.medium,
            VerbosityArg::Long => &t.long,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe a walking route stop by stop, then the destination.
    Preview {
        /// "lat,lon" or a place name.
        #[arg(long)]
        from: Endpoint,
        #[arg(long)]
        to: Endpoint,
        /// Destination name used in the descriptions.
        #[arg(long)]
        name: String,
        /// What you want to know about the destination.
        #[arg(long, default_value = "")]
        context: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Walk the street graph interactively from a starting point.
    Explore {
        #[arg(long)]
        intent: String,
        /// Starting point as "lat,lon".
        #[arg(long)]
        at: GeoCoordinate,
        #[arg(long, value_enum, default_value_t = VerbosityArg::Medium)]
        verbosity: VerbosityArg,
    },
    /// Run the HTTP service.
    Serve,
    /// Sample, annotate and report on generated descriptions.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Draw a stratified sample of descriptions from usage logs.
    Sample {
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        /// Log files, directories of logs, or data directories. Defaults to
        /// the configured data directory.
        #[arg(long)]
        logs: Vec<PathBuf>,
        /// Annotation file to create; without it the file goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Annotate unannotated sentences one at a time.
    Annotate { file: PathBuf },
    /// Aggregate an annotation file.
    Report {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// List disagreements between two annotation files.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{}", .0.body.message)]
    Api(ApiError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<StartupError> for CliError {
    fn from(e: StartupError) -> Self {
        match e {
            StartupError::Config(c) => CliError::Config(c),
            StartupError::Store(s) => CliError::Store(s),
        }
    }
}

fn api<E: Into<ApiError>>(e: E) -> CliError {
    CliError::Api(e.into())
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Api(e) => serde_json::to_value(&e.body).unwrap_or_default(),
            other => {
                let code = match other {
                    CliError::Config(c) => c.code(),
                    CliError::Usage(_) => "invalid_argument",
                    CliError::Eval(_) => "eval_error",
                    CliError::Store(_) => "storage_error",
                    _ => "io_error",
                };
                json!({ "code": code, "message": other.to_string(), "detail": null, "retryable": false })
            }
        }
    }
}

pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
}

impl Io<'_> {
    /// Next input line, trimmed; `None` at end of input.
    fn line(&mut self) -> Result<Option<String>, std::io::Error> {
        let mut s = String::new();
        if self.input.read_line(&mut s)? == 0 {
            return Ok(None);
        }
        Ok(Some(s.trim().to_string()))
    }

    fn prompt(&mut self, text: &str) -> Result<Option<String>, std::io::Error> {
        write!(self.out, "{text}")?;
        self.out.flush()?;
        self.line()
    }
}

pub fn run(cli: Cli, env: &dyn Fn(&str) -> Option<String>, io: &mut Io) -> Result<(), CliError> {
    let load = || Config::load(cli.config.as_deref(), env);
    match cli.command {
        Command::Preview {
            from,
            to,
            name,
            context,
            format,
        } => {
            let cfg = load()?;
            let providers = cfg.build_providers()?;
            let req = PreviewRequest {
                origin: from,
                destination: to,
                destination_name: name,
                context,
            };
            run_preview(&cfg, &providers, &req, format, io)
        }
        Command::Explore {
            intent,
            at,
            verbosity,
        } => {
            let cfg = load()?;
            let providers = cfg.build_providers()?;
            run_explore(&cfg, &providers, &intent, at, verbosity, io)
        }
        Command::Serve => {
            let cfg = load()?;
            // providers are built before the runtime starts; blocking HTTP
            // clients may not be created inside it
            let state = AppState::new(cfg)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(api::serve(state))?;
            Ok(())
        }
        Command::Eval(cmd) => run_eval(cmd, &load, io),
    }
}

fn run_preview(
    cfg: &Config,
    providers: &Providers,
    req: &PreviewRequest,
    format: Format,
    io: &mut Io,
) -> Result<(), CliError> {
    let result = preview::generate_preview(providers, req, &cfg.preview(), &SystemClock, &mut |_| {})
        .map_err(api)?;
    let data = DataDir::open(&cfg.data_dir)?;
    data.save_preview_log(&uuid::Uuid::new_v4().simple().to_string(), &result)?;
    match format {
        Format::Json => writeln!(
            io.out,
            "{}",
            serde_json::to_string_pretty(&result).expect("preview serializes")
        )?,
        Format::Markdown => write!(io.out, "{}", render::preview_markdown(&result))?,
    }
    Ok(())
}

fn parse_keywords(line: &str) -> Vec<String> {
    line.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn run_explore(
    cfg: &Config,
    providers: &Providers,
    intent: &str,
    at: GeoCoordinate,
    verbosity: VerbosityArg,
    io: &mut Io,
) -> Result<(), CliError> {
    let data = DataDir::open(&cfg.data_dir)?;
    let ecfg = cfg.exploration();
    let id = SessionId(uuid::Uuid::new_v4().simple().to_string());
    let mut s = exploration::start_session(providers, id, intent, at, &ecfg).map_err(api)?;
    data.append_session(&s, 0, Utc::now())?;
    let persist = |s: &ExplorationSession, from: usize| data.append_session(s, from, Utc::now());

    writeln!(io.out, "Session {}", s.id)?;
    writeln!(io.out, "Intent: {}", s.intent)?;
    if !s.place_type.is_empty() {
        writeln!(io.out, "Looking for: {}", s.place_type)?;
    }
    writeln!(io.out, "Description keywords: {}", s.keywords.as_slice().join(", "))?;
    let line = io
        .prompt("Add keywords separated by commas, or press Enter to continue: ")?
        .unwrap_or_default();
    let before = s.history.len();
    exploration::add_keywords(&mut s, &parse_keywords(&line)).map_err(api)?;
    persist(&s, before)?;

    loop {
        while s.status == SessionStatus::Walking {
            let before = s.history.len();
            let (pos, heading) = (s.position.clone(), s.heading);
            let outcome = exploration::describe_block(providers, &mut s, &ecfg).map_err(api)?;
            exploration::step_forward(providers, &mut s).map_err(api)?;
            persist(&s, before)?;
            match outcome {
                Ok(t) => writeln!(
                    io.out,
                    "\nHeading {} from {pos}:\n{}",
                    heading.cardinal(),
                    verbosity.pick(&t)
                )?,
                Err(e) => writeln!(io.out, "\nNo description for this block: {e}")?,
            }
        }
        if s.status == SessionStatus::Ended {
            writeln!(io.out, "\nSession ended after {} steps.", s.steps_taken)?;
            return Ok(());
        }
        let before = s.history.len();
        exploration::enumerate_directions(providers, &mut s).map_err(api)?;
        exploration::suggest_direction(providers, &mut s).map_err(api)?;
        persist(&s, before)?;
        let options = s.offered.clone().unwrap_or_default();
        writeln!(io.out, "\nYou are at an intersection.\n{}", render::directions_text(&options))?;
        loop {
            let Some(answer) = io.prompt("Choose a direction by number, or q to stop: ")? else {
                return finish(&mut s, &persist, io);
            };
            if answer.eq_ignore_ascii_case("q") {
                return finish(&mut s, &persist, io);
            }
            let Ok(idx) = answer.parse::<usize>() else {
                writeln!(io.out, "Please enter a number from 1 to {}.", options.len())?;
                continue;
            };
            let before = s.history.len();
            match exploration::choose_direction(providers, &mut s, idx) {
                Ok(()) => {
                    persist(&s, before)?;
                    writeln!(io.out, "Moved to {}, heading {}.", s.position, s.heading.cardinal())?;
                    break;
                }
                Err(exploration::ExplorationError::InvalidArgument(m)) => {
                    writeln!(io.out, "{m}")?;
                }
                Err(e) => return Err(api(e)),
            }
        }
    }
}

fn finish(
    s: &mut ExplorationSession,
    persist: &dyn Fn(&ExplorationSession, usize) -> Result<(), StoreError>,
    io: &mut Io,
) -> Result<(), CliError> {
    let before = s.history.len();
    exploration::end_session(s).map_err(api)?;
    persist(s, before)?;
    writeln!(io.out, "\nSession ended after {} steps.", s.steps_taken)?;
    Ok(())
}

/// Loads every log under `path`: a single file, a data directory, or a
/// directory of log files.
fn load_logs(path: &Path) -> Result<Vec<SourceLog>, CliError> {
    if path.is_file() {
        return Ok(vec![SourceLog::load(path)?]);
    }
    if DataDir::is_data_dir(path) {
        return Ok(DataDir::open(path)?.usage_logs()?);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl"))
        })
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| SourceLog::load(p).map_err(CliError::from))
        .collect()
}

fn run_eval(
    cmd: EvalCommand,
    load: &dyn Fn() -> Result<Config, ConfigError>,
    io: &mut Io,
) -> Result<(), CliError> {
    match cmd {
        EvalCommand::Sample {
            fraction,
            seed,
            logs,
            out,
            annotator,
        } => {
            let paths = if logs.is_empty() {
                vec![load()?.data_dir]
            } else {
                logs
            };
            let mut sources = Vec::new();
            for p in &paths {
                if !p.exists() {
                    return Err(CliError::Usage(format!("{} does not exist", p.display())));
                }
                sources.extend(load_logs(p)?);
            }
            let tasks = eval::sample_tasks(&sources, fraction, seed)?;
            let mut header = EvalHeader::new(Utc::now());
            header.seed = Some(seed);
            header.fraction = Some(fraction);
            header.annotator = annotator;
            match out {
                Some(path) => {
                    let mut per_mode: BTreeMap<String, usize> = BTreeMap::new();
                    for t in &tasks {
                        *per_mode.entry(t.source.mode.to_string()).or_default() += 1;
                    }
                    let ids: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
                    let summary = json!({
                        "out": path.display().to_string(),
                        "tasks": tasks.len(),
                        "per_mode": per_mode,
                        "task_ids": ids,
                    });
                    AnnotationFile::create(&path, header, tasks)?;
                    writeln!(io.out, "{}", serde_json::to_string_pretty(&summary).expect("json"))?;
                }
                None => write!(io.out, "{}", AnnotationFile::new(header, tasks).to_jsonl())?,
            }
            Ok(())
        }
        EvalCommand::Annotate { file } => {
            let mut f = AnnotationFile::open(&file)?;
            annotate(&mut f, io)
        }
        EvalCommand::Report { file, format } => {
            let report = eval::aggregate(&AnnotationFile::open(&file)?);
            match format {
                Format::Json => writeln!(
                    io.out,
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                )?,
                Format::Markdown => write!(io.out, "{}", eval::render_markdown(&report))?,
            }
            Ok(())
        }
        EvalCommand::Diff { a, b } => {
            let d = eval::diff(&AnnotationFile::open(&a)?, &AnnotationFile::open(&b)?);
            writeln!(io.out, "{}", serde_json::to_string_pretty(&d).expect("diff serializes"))?;
            Ok(())
        }
    }
}

/// Asks for one of `options` by number. `None` when the annotator quits.
fn pick<T: Copy + std::fmt::Debug>(
    io: &mut Io,
    question: &str,
    options: &[T],
) -> Result<Option<T>, CliError> {
    loop {
        writeln!(io.out, "{question}")?;
        for (i, o) in options.iter().enumerate() {
            writeln!(io.out, "  {}. {o:?}", i + 1)?;
        }
        let Some(answer) = io.prompt("> ")? else {
            return Ok(None);
        };
        if answer.eq_ignore_ascii_case("q") {
            return Ok(None);
        }
        match answer.parse::<usize>() {
            Ok(n) if (1..=options.len()).contains(&n) => return Ok(Some(options[n - 1])),
            _ => writeln!(io.out, "Enter a number from 1 to {}, or q.", options.len())?,
        }
    }
}

/// Asks for one or more of `options` as comma-separated numbers.
fn pick_many<T: Copy + Ord + std::fmt::Debug>(
    io: &mut Io,
    question: &str,
    options: &[T],
) -> Result<Option<std::collections::BTreeSet<T>>, CliError> {
    loop {
        writeln!(io.out, "{question} (comma-separated numbers)")?;
        for (i, o) in options.iter().enumerate() {
            writeln!(io.out, "  {}. {o:?}", i + 1)?;
        }
        let Some(answer) = io.prompt("> ")? else {
            return Ok(None);
        };
        if answer.eq_ignore_ascii_case("q") {
            return Ok(None);
        }
        let picked: Option<std::collections::BTreeSet<T>> = answer
            .split(',')
            .map(|p| match p.trim().parse::<usize>() {
                Ok(n) if (1..=options.len()).contains(&n) => Some(options[n - 1]),
                _ => None,
            })
            .collect();
        match picked {
            Some(set) if !set.is_empty() => return Ok(Some(set)),
            _ => writeln!(io.out, "Enter numbers from 1 to {}, or q.", options.len())?,
        }
    }
}

fn show_task(t: &AnnotationTask, io: &mut Io) -> Result<(), CliError> {
    writeln!(
        io.out,
        "\n== {} ({}, {}) heading {} ==",
        t.task_id, t.source.mode, t.source.verbosity, t.context.heading
    )?;
    if !t.context.view_ids.is_empty() {
        writeln!(io.out, "Images: {}", t.context.view_ids.join(", "))?;
    }
    if !t.context.places.is_empty() {
        writeln!(io.out, "Nearby: {}", t.context.places.join("; "))?;
    }
    if let Some(p) = &t.context.prev_description {
        writeln!(io.out, "Previous description: {p}")?;
    }
    writeln!(io.out, "Description: {}", t.text)?;
    Ok(())
}

fn annotate_sentence(io: &mut Io) -> Result<Option<SentenceAnnotation>, CliError> {
    use eval::ErrorType as E;
    let Some(info_type) = pick(
        io,
        "Information type",
        &[InfoType::Subjective, InfoType::Objective, InfoType::Mixed],
    )?
    else {
        return Ok(None);
    };
    let objective_subtypes = if info_type == InfoType::Subjective {
        Default::default()
    } else {
        let Some(set) = pick_many(
            io,
            "Objective information",
            &[
                ObjectiveSubtype::Poi,
                ObjectiveSubtype::FactualObject,
                ObjectiveSubtype::Accessibility,
                ObjectiveSubtype::Other,
            ],
        )?
        else {
            return Ok(None);
        };
        set
    };
    let Some(correctness) = pick(
        io,
        "Correctness",
        &[
            Correctness::Correct,
            Correctness::PartiallyCorrect,
            Correctness::Incorrect,
            Correctness::CannotTell,
        ],
    )?
    else {
        return Ok(None);
    };
    let error_type = if matches!(correctness, Correctness::Incorrect | Correctness::PartiallyCorrect) {
        let Some(e) = pick(
            io,
            "Error type",
            &[
                E::PlausibleDetail,
                E::PlausibleAdjective,
                E::FactualError,
                E::SpatialError,
                E::Hallucination,
                E::Other,
            ],
        )?
        else {
            return Ok(None);
        };
        e
    } else {
        E::None
    };
    let Some(consistency) = pick(
        io,
        "Consistent with the images?",
        &[Consistency::Likely, Consistency::Possibly, Consistency::NotLikely],
    )?
    else {
        return Ok(None);
    };
    let Some(redundancy) = pick(
        io,
        "Compared with the previous description",
        &[
            Redundancy::NoPrev,
            Redundancy::Repeats,
            Redundancy::AddsNew,
            Redundancy::Updates,
        ],
    )?
    else {
        return Ok(None);
    };
    Ok(Some(SentenceAnnotation {
        info_type,
        objective_subtypes,
        correctness,
        error_type,
        consistency,
        redundancy,
        note: None,
    }))
}

/// Walks every unannotated sentence and description. Each answer is
/// appended to the file at once, so quitting keeps earlier work.
pub fn annotate(f: &mut AnnotationFile, io: &mut Io) -> Result<(), CliError> {
    let tasks: Vec<AnnotationTask> = f.tasks().to_vec();
    let mut done = 0usize;
    for t in &tasks {
        let todo: Vec<usize> = (0..t.sentences.len())
            .filter(|&i| f.sentence(&t.task_id, i).is_none())
            .collect();
        let needs_relevance = f.description(&t.task_id).is_none();
        if todo.is_empty() && !needs_relevance {
            continue;
        }
        show_task(t, io)?;
        for i in todo {
            writeln!(io.out, "\nSentence {}/{}: {}", i + 1, t.sentences.len(), t.sentences[i])?;
            let Some(a) = annotate_sentence(io)? else {
                writeln!(io.out, "Stopped; {done} sentences annotated this run.")?;
                return Ok(());
            };
            f.record(&t.task_id, i, a)?;
            done += 1;
        }
        if needs_relevance {
            let relevance = match t.source.mode {
                Mode::RoutePreview => Relevance::NotApplicable,
                Mode::VirtualExploration => {
                    let Some(r) = pick(
                        io,
                        "Relevance of the whole description to the intent",
                        &[Relevance::Fully, Relevance::Partially, Relevance::Not],
                    )?
                    else {
                        writeln!(io.out, "Stopped; {done} sentences annotated this run.")?;
                        return Ok(());
                    };
                    r
                }
            };
            f.record_description(&t.task_id, DescriptionAnnotation { relevance })?;
        }
    }
    writeln!(io.out, "\nAll tasks annotated; {done} sentences annotated this run.")?;
    Ok(())
}
