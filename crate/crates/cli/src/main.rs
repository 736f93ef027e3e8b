//! `llplace`: layout generation, dialogue edits, dataset building and
//! evaluation from the command line, plus the HTTP service and a client
//! for it.
//!
//! Exit codes: 0 ok, 1 I/O or bad input, 2 usage, 3 retrieval or unknown
//! removal target, 4 backend, 5 unparseable model output, 6 wrong session
//! phase, 7 service unreachable.

mod files;
mod remote;
mod snapshot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use llplace_core::api::CreateSessionRequest;
use llplace_core::backend::{BackendConfig, BackendError, BackendKind};
use llplace_core::dataset::{build_corpus, BuilderConfig, CorpusStats};
use llplace_core::metrics::{macro_average, MetricsReport};
use llplace_core::render::{render_layout, RenderStyle};
use llplace_core::session::{create_session, DesignerSession, EditRequest, SessionError};
use llplace_core::synthetic;
use llplace_core::{AssetCatalog, DesignRequest, PromptTemplates, RoomBounds, SceneLayout};

use files::{read_items, read_json, read_layout, read_text, sibling, Staged};
use snapshot::SessionSnapshot;

pub mod exit {
    pub const IO: u8 = 1;
    pub const RETRIEVAL: u8 = 3;
    pub const BACKEND: u8 = 4;
    pub const PARSE: u8 = 5;
    pub const PHASE: u8 = 6;
    pub const SERVICE: u8 = 7;
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    /// Raw model text for unparseable turns.
    pub raw_response: Option<String>,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            raw_response: None,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure::new(exit::IO, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Failure::new(exit::IO, message)
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Retrieval(_) | SessionError::UnknownTarget(_) => exit::RETRIEVAL,
            SessionError::Backend(_) => exit::BACKEND,
            SessionError::GenerationFailed { .. } | SessionError::EditFailed { .. } => exit::PARSE,
            SessionError::WrongPhase { .. } => exit::PHASE,
            SessionError::Prompt(_) | SessionError::EmptyEdit | SessionError::EmptyRequest => exit::IO,
        };
        Failure {
            code,
            message: e.to_string(),
            raw_response: e.raw_response().map(str::to_string),
        }
    }
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        Failure::new(exit::BACKEND, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "llplace", version, about = "Indoor layout generation and editing through a text dialogue")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a layout from a request file.
    Generate(GenerateArgs),
    /// Apply one add or remove turn to a saved session.
    Edit(EditArgs),
    /// Build the dialogue training corpus from a scenes file.
    BuildDataset(BuildDatasetArgs),
    /// Compute metrics for a layout file or a directory of them.
    Eval(EvalArgs),
    /// Render a layout as a top-down SVG.
    Render(RenderArgs),
    /// Run the HTTP session service.
    Serve(remote::ServeArgs),
    /// Talk to a running service.
    Client(remote::ClientArgs),
    /// Write the demo catalog, requests or synthetic scenes.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Heuristic,
    Replay,
    Remote,
}

impl From<BackendChoice> for BackendKind {
    fn from(c: BackendChoice) -> Self {
        match c {
            BackendChoice::Heuristic => BackendKind::Heuristic,
            BackendChoice::Replay => BackendKind::Replay,
            BackendChoice::Remote => BackendKind::Remote,
        }
    }
}

#[derive(Args)]
struct BackendArgs {
    /// Backend kind; overrides the request file and --backend-config.
    #[arg(long, value_enum)]
    backend: Option<BackendChoice>,
    /// Full backend configuration as TOML.
    #[arg(long, value_name = "FILE")]
    backend_config: Option<PathBuf>,
    /// Placer seed for the heuristic backend.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON array of canned responses for the replay backend.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// Chat-completions endpoint for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl BackendArgs {
    fn resolve(&self, from_request: Option<BackendConfig>) -> CliResult<BackendConfig> {
        let mut config = match &self.backend_config {
            Some(path) => toml::from_str(&read_text(path)?)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
            None => from_request.unwrap_or_default(),
        };
        if let Some(kind) = self.backend {
            config.kind = kind.into();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(path) = &self.script {
            config.script = Some(read_json(path)?);
            if self.backend.is_none() {
                config.kind = BackendKind::Replay;
            }
        }
        if self.endpoint.is_some() {
            config.endpoint = self.endpoint.clone();
        }
        if self.model.is_some() {
            config.model = self.model.clone();
        }
        let config = config.with_env_defaults();
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON `{room_type, items, bounds?, backend?}`.
    request: PathBuf,
    /// Asset catalog JSONL; the built-in demo catalog when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Layout JSON path. Metrics go to `<stem>.metrics.json` beside it.
    #[arg(long, default_value = "layout.json")]
    out: PathBuf,
    /// Session snapshot path; defaults to `<stem>.session.json` beside the layout.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Also write `<stem>.svg` beside the layout.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("edit").required(true).args(["add", "remove"]))]
struct EditArgs {
    /// Snapshot written by `generate`.
    session: PathBuf,
    /// Items to add: JSON list of `{quantity, description}` or strings.
    #[arg(long, value_name = "FILE")]
    add: Option<PathBuf>,
    /// Items to remove, same format as --add.
    #[arg(long, value_name = "FILE")]
    remove: Option<PathBuf>,
    /// Write the layout here instead of the snapshot's layout path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// Scenes JSONL, one `{scene_id, room_type, objects}` per line.
    scenes: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Builder settings as TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Layout JSON files or directories of them.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    layout: PathBuf,
    /// Defaults to `<stem>.svg` beside the layout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_labels: bool,
    #[arg(long)]
    pixels_per_meter: Option<f64>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// The demo asset catalog as JSONL.
    Catalog {
        #[arg(long)]
        out: PathBuf,
    },
    /// A request file.
    Request {
        #[arg(long, value_enum, default_value = "bedroom")]
        room: SynthRoom,
        /// With --room random-bedroom: which request of the sequence.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic placed scenes as JSONL.
    Scenes {
        #[arg(long, value_enum, default_value = "six-object")]
        kind: SceneKind,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthRoom {
    Bedroom,
    LivingRoom,
    RandomBedroom,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    SixObject,
    Random,
}

fn load_catalog(path: Option<&Path>) -> CliResult<AssetCatalog> {
    match path {
        Some(p) => AssetCatalog::load_path(p).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => Ok(synthetic::demo_catalog()),
    }
}

fn load_templates(dir: Option<&Path>) -> CliResult<PromptTemplates> {
    match dir {
        Some(d) => PromptTemplates::load_dir(d).map_err(|e| Failure::input(e.to_string())),
        None => Ok(PromptTemplates::builtin()),
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization is infallible")
}

/// Stages layout, metrics and optionally the SVG beside it.
fn stage_layout(staged: &mut Staged, layout: &SceneLayout, path: &Path, svg: bool) -> CliResult {
    staged.add(path, &layout.to_json_pretty())?;
    staged.add(&sibling(path, ".metrics.json"), &json_pretty(&MetricsReport::compute(layout)))?;
    if svg {
        staged.add(&sibling(path, ".svg"), &render_layout(layout, &RenderStyle::default()))?;
    }
    Ok(())
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn generate(args: GenerateArgs) -> CliResult {
    let request: CreateSessionRequest = read_json(&args.request)?;
    let backend = args.backend.resolve(request.backend.clone())?;
    let catalog = load_catalog(args.catalog.as_deref())?;
    let templates = load_templates(args.templates.as_deref())?;
    let bounds = request
        .bounds
        .unwrap_or_else(|| RoomBounds::default_for_room_type(&request.room_type));
    let state = create_session(DesignRequest::new(request.room_type, request.items), &catalog, bounds)?;
    let mut session = DesignerSession::new(state, backend.build()?, templates.into())
        .with_max_history_chars(backend.max_history_chars);
    let layout = session.run_generation()?;

    let session_path = args.session.unwrap_or_else(|| sibling(&args.out, ".session.json"));
    let snapshot = SessionSnapshot {
        state: session.into_state(),
        backend,
        catalog: args.catalog.as_deref().map(absolute),
        templates: args.templates.as_deref().map(absolute),
        layout_path: absolute(&args.out),
        svg: args.svg,
    };
    let mut staged = Staged::default();
    stage_layout(&mut staged, &layout, &args.out, args.svg)?;
    staged.add(&session_path, &snapshot.to_json())?;
    report_written(&staged.commit()?);
    println!("{}", json!({"objects": layout.objects.len(), "layout": args.out, "session": session_path}));
    Ok(())
}

fn edit(args: EditArgs) -> CliResult {
    let snapshot = SessionSnapshot::read(&args.session)?;
    let request = match (&args.add, &args.remove) {
        (Some(path), _) => EditRequest::Add(read_items(path)?),
        (None, Some(path)) => EditRequest::Remove(read_items(path)?),
        (None, None) => unreachable!("clap requires one of --add/--remove"),
    };
    let catalog = load_catalog(snapshot.catalog.as_deref())?;
    let templates = load_templates(snapshot.templates.as_deref())?;
    let backend = snapshot.backend.build_resumed(snapshot.state.backend_calls)?;
    let mut session = DesignerSession::new(snapshot.state.clone(), backend, templates.into())
        .with_max_history_chars(snapshot.backend.max_history_chars);
    let layout = session.run_edit(&request, &catalog)?;

    let layout_path = args.out.unwrap_or_else(|| snapshot.layout_path.clone());
    let svg = args.svg || snapshot.svg;
    let updated = SessionSnapshot {
        state: session.into_state(),
        layout_path: absolute(&layout_path),
        svg,
        ..snapshot
    };
    let mut staged = Staged::default();
    stage_layout(&mut staged, &layout, &layout_path, svg)?;
    staged.add(&args.session, &updated.to_json())?;
    report_written(&staged.commit()?);
    println!("{}", json!({"objects": layout.objects.len(), "phase": updated.state.phase, "layout": layout_path}));
    Ok(())
}

fn build_dataset(args: BuildDatasetArgs) -> CliResult {
    let mut config: BuilderConfig = match &args.config {
        Some(path) => toml::from_str(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
        None => BuilderConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let templates = load_templates(args.templates.as_deref())?;
    let file = std::fs::File::open(&args.scenes)
        .map_err(|e| Failure::io(format!("reading {}: {e}", args.scenes.display())))?;
    let stats: CorpusStats = build_corpus(std::io::BufReader::new(file), &templates, &config, &args.out)
        .map_err(|e| Failure::io(e.to_string()))?;
    eprintln!(
        "{} of {} scenes used ({} malformed, {} duplicate); pairs: {} generation, {} add, {} remove; selection rate {:.3}",
        stats.scenes_used,
        stats.scenes_read,
        stats.skipped_malformed,
        stats.skipped_duplicate,
        stats.pairs.generation,
        stats.pairs.add_edit,
        stats.pairs.remove_edit,
        stats.selection_rate,
    );
    println!("{}", json_pretty(&stats));
    Ok(())
}

fn is_layout_file(path: &Path) -> bool {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    name.ends_with(".json") && !name.ends_with(".metrics.json") && !name.ends_with(".session.json")
}

fn layout_files(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for path in paths {
        match std::fs::read_dir(path) {
            Ok(entries) => {
                let mut found: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file() && is_layout_file(p))
                    .collect();
                found.sort();
                out.extend(found);
            }
            Err(_) => out.push(path.clone()),
        }
    }
    out
}

fn eval(args: EvalArgs) -> CliResult {
    let mut entries = Vec::new();
    let mut reports = Vec::new();
    let mut failed = 0usize;
    for path in layout_files(&args.paths) {
        match read_layout(&path) {
            Ok(layout) => {
                let report = MetricsReport::compute(&layout);
                entries.push(json!({"path": path, "metrics": report}));
                reports.push(report);
            }
            Err(e) => {
                failed += 1;
                eprintln!("error: {}", e.message);
                entries.push(json!({"path": path, "error": e.message}));
            }
        }
    }
    let summary = json!({
        "files": entries,
        "macro_average": macro_average(&reports),
        "failed": failed,
    });
    let text = json_pretty(&summary);
    match &args.out {
        Some(path) => {
            let mut staged = Staged::default();
            staged.add(path, &text)?;
            staged.commit()?;
        }
        None => println!("{text}"),
    }
    if failed > 0 {
        return Err(Failure::input(format!("{failed} file(s) failed to evaluate")));
    }
    Ok(())
}

fn render(args: RenderArgs) -> CliResult {
    let layout = read_layout(&args.layout)?;
    let mut style = RenderStyle {
        labels: !args.no_labels,
        ..RenderStyle::default()
    };
    if let Some(ppm) = args.pixels_per_meter {
        if !(ppm.is_finite() && ppm > 0.0) {
            return Err(Failure::input(format!("pixels per meter must be positive, got {ppm}")));
        }
        style.pixels_per_meter = ppm;
    }
    let out = args.out.unwrap_or_else(|| sibling(&args.layout, ".svg"));
    let mut staged = Staged::default();
    staged.add(&out, &render_layout(&layout, &style))?;
    report_written(&staged.commit()?);
    Ok(())
}

fn synth(command: SynthCommand) -> CliResult {
    let (path, text) = match command {
        SynthCommand::Catalog { out } => (out, synthetic::demo_catalog_jsonl()),
        SynthCommand::Request { room, index, seed, out } => {
            let request = match room {
                SynthRoom::Bedroom => synthetic::bedroom_request(),
                SynthRoom::LivingRoom => synthetic::living_room_request(),
                SynthRoom::RandomBedroom => synthetic::random_bedroom_request(index, seed),
            };
            let body = CreateSessionRequest {
                room_type: request.room_type,
                items: request.items,
                bounds: None,
                backend: None,
            };
            (out, json_pretty(&body))
        }
        SynthCommand::Scenes { kind, count, seed, out } => {
            let scenes: Vec<_> = (0..count)
                .map(|i| match kind {
                    SceneKind::SixObject => synthetic::six_object_scene(i, seed),
                    SceneKind::Random => synthetic::random_scene(i, seed),
                })
                .collect();
            (out, synthetic::scenes_jsonl(&scenes))
        }
    };
    let mut staged = Staged::default();
    if text.is_empty() {
        // An empty scenes file is still a valid input.
        std::fs::write(&path, "").map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))?;
    } else {
        staged.add(&path, &text)?;
    }
    report_written(&staged.commit()?);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Edit(args) => edit(args),
        Command::BuildDataset(args) => build_dataset(args),
        Command::Eval(args) => eval(args),
        Command::Render(args) => render(args),
        Command::Serve(args) => remote::serve(args),
        Command::Client(args) => remote::client(args),
        Command::Synth(command) => synth(command),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            if let Some(raw) = &failure.raw_response {
                eprintln!("--- raw response ---\n{raw}");
            }
            ExitCode::from(failure.code)
        }
    }
}
