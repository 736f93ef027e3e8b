//! `serve` and `client` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand};
use serde::Deserialize;

use llplace_client::{Client, ClientError};
use llplace_core::api::CreateSessionRequest;
use llplace_core::backend::BackendConfig;
use llplace_core::{EditRequest, RoomBounds};
use llplace_service::{AppState, ServiceConfig};

use crate::files::{read_items, read_json, read_text, Staged};
use crate::{exit, json_pretty, load_catalog, load_templates, BackendArgs, CliResult, Failure};

const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Args)]
pub struct ServeArgs {
    /// Service settings as TOML; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Idle session lifetime in seconds.
    #[arg(long)]
    ttl: Option<u64>,
    #[command(flatten)]
    backend: BackendArgs,
}

/// The TOML form of the service settings. Paths are relative to the file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeFile {
    listen: Option<String>,
    catalog: Option<PathBuf>,
    templates: Option<PathBuf>,
    session_ttl_secs: Option<u64>,
    sweep_interval_secs: Option<u64>,
    backend: Option<BackendConfig>,
    default_bounds: BTreeMap<String, RoomBounds>,
}

fn relative_to(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

pub fn serve(args: ServeArgs) -> CliResult {
    let mut file = match &args.config {
        Some(path) => {
            let mut file: ServeFile = toml::from_str(&read_text(path)?)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            file.catalog = file.catalog.map(|p| relative_to(base, p));
            file.templates = file.templates.map(|p| relative_to(base, p));
            file
        }
        None => ServeFile::default(),
    };
    if args.catalog.is_some() {
        file.catalog = args.catalog.clone();
    }
    if args.templates.is_some() {
        file.templates = args.templates.clone();
    }
    let listen = args.listen.clone().or(file.listen).unwrap_or_else(|| DEFAULT_LISTEN.into());

    // Catalog and templates must resolve before the socket opens.
    let catalog = load_catalog(file.catalog.as_deref())?;
    let templates = load_templates(file.templates.as_deref())?;
    let mut config = ServiceConfig {
        backend: args.backend.resolve(file.backend)?,
        default_bounds: file
            .default_bounds
            .into_iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v))
            .collect(),
        ..ServiceConfig::default()
    };
    if let Some(secs) = args.ttl.or(file.session_ttl_secs) {
        config.session_ttl = Duration::from_secs(secs);
    }
    if let Some(secs) = file.sweep_interval_secs {
        config.sweep_interval = Duration::from_secs(secs.max(1));
    }

    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .map_err(|e| Failure::io(format!("binding {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::io(e.to_string()))?;
        println!("listening on http://{addr}");
        log::info!("{} assets, backend {:?}", catalog.len(), config.backend.kind);
        let state = AppState::new(catalog, templates, &config);
        llplace_service::serve(listener, state, &config)
            .await
            .map_err(|e| Failure::io(e.to_string()))
    })
}

#[derive(Args)]
pub struct ClientArgs {
    /// Service base URL.
    #[arg(long, env = "LLPLACE_SERVICE_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[command(subcommand)]
    command: ClientCommand,
}

#[derive(Subcommand)]
enum ClientCommand {
    Health,
    /// Create a session from a request file; prints the session view.
    Create { request: PathBuf },
    Show { id: String },
    Generate { id: String },
    #[command(group = clap::ArgGroup::new("edit").required(true).args(["add", "remove"]))]
    Edit {
        id: String,
        #[arg(long, value_name = "FILE")]
        add: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        remove: Option<PathBuf>,
    },
    Layout {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Metrics { id: String },
    Render {
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    Delete { id: String },
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = match &e {
            ClientError::Api { body, .. } => match body.error.as_str() {
                "retrieval_failed" | "unknown_target" => exit::RETRIEVAL,
                "backend_unavailable" | "placement_failed" | "invalid_backend" => exit::BACKEND,
                "generation_failed" | "edit_failed" => exit::PARSE,
                "wrong_phase" | "no_layout" => exit::PHASE,
                _ => exit::IO,
            },
            ClientError::Transport(_) => exit::SERVICE,
            ClientError::InvalidUrl(_) | ClientError::Decode(_) => exit::IO,
        };
        Failure {
            code,
            message: e.to_string(),
            raw_response: e.raw_response().map(str::to_string),
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => {
            let mut staged = Staged::default();
            staged.add(path, text)?;
            staged.commit()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

pub fn client(args: ClientArgs) -> CliResult {
    let client = Client::new(&args.url)?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::io(e.to_string()))?;
    runtime.block_on(async move {
        let text = match args.command {
            ClientCommand::Health => json_pretty(&client.health().await?),
            ClientCommand::Create { request } => {
                let request: CreateSessionRequest = read_json(&request)?;
                json_pretty(&client.create_session(&request).await?)
            }
            ClientCommand::Show { id } => json_pretty(&client.session(&id).await?),
            ClientCommand::Generate { id } => json_pretty(&client.generate(&id).await?),
            ClientCommand::Edit { id, add, remove } => {
                let edit = match (add, remove) {
                    (Some(path), _) => EditRequest::Add(read_items(&path)?),
                    (None, Some(path)) => EditRequest::Remove(read_items(&path)?),
                    (None, None) => unreachable!("clap requires one of --add/--remove"),
                };
                json_pretty(&client.edit(&id, &edit).await?)
            }
            ClientCommand::Layout { id, out } => {
                return write_or_print(out.as_deref(), &client.layout(&id).await?.to_json_pretty());
            }
            ClientCommand::Metrics { id } => json_pretty(&client.metrics(&id).await?),
            ClientCommand::Render { id, out } => {
                return write_or_print(Some(&out), &client.render_svg(&id).await?);
            }
            ClientCommand::Delete { id } => {
                client.delete(&id).await?;
                return Ok(());
            }
        };
        println!("{text}");
        Ok(())
    })
}
