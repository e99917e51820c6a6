//! The HTTP service and its client commands.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spkg_api::{
    BeliefModel, CreateSession, LibrarySpec, MoleculeInput, ObservationRequest, PolicyConfig, SuggestMode,
    SuggestRequest,
};
use spkg_client::{Client, ClientError};
use spkg_core::rna::read_probe_library;
use spkg_core::sim::synthetic::bundled_fasta;
use spkg_service::{AppState, Store};

use crate::local::{library_spec, load_belief};
use crate::{parse_probe, CliError, ModeArg, ServeArgs, SessionCommand};

const DEFAULT_ADDR: &str = "127.0.0.1:8080";
const DEFAULT_DATA_DIR: &str = "spkg-data";

/// `serve --config` file.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub addr: Option<String>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

pub(crate) fn serve(a: ServeArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let cfg: ServeConfig =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if cfg.schema_version != spkg_core::sim::config::SCHEMA_VERSION {
                return Err(CliError::Usage(format!(
                    "{}: unsupported schema_version {}",
                    path.display(),
                    cfg.schema_version
                )));
            }
            cfg
        }
        None => ServeConfig::default(),
    };
    let addr = a.addr.or(cfg.addr).unwrap_or_else(|| DEFAULT_ADDR.into());
    let dir = a.data_dir.or(cfg.data_dir).unwrap_or_else(|| DEFAULT_DATA_DIR.into());
    let store = Store::open(&dir).map_err(|e| CliError::Runtime(e.into()))?;

    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        tracing::info!(%local, dir = %dir.display(), "serving");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        spkg_service::serve(listener, AppState::new(store), shutdown).await?;
        Ok(())
    })
}

fn client_error(e: ClientError) -> CliError {
    match &e {
        ClientError::Api { status, .. } if status.is_client_error() => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.into()),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

pub(crate) fn session(cmd: SessionCommand) -> Result<(), CliError> {
    let rt = runtime()?;
    match cmd {
        SessionCommand::Create(a) => {
            let prior = load_belief(&a.prior)?;
            let fasta = match &a.target.molecule {
                Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
                None => bundled_fasta().to_string(),
            };
            let library = match &a.library.library {
                Some(path) => LibrarySpec::Probes(
                    read_probe_library(path)
                        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                        .into_iter()
                        .map(|(_, p)| p)
                        .collect(),
                ),
                None => library_spec(&a.library),
            };
            let energy_table = match &a.energy_table {
                Some(p) => {
                    Some(std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
                }
                None => None,
            };
            let req = CreateSession {
                molecule: MoleculeInput {
                    fasta,
                    window: a.target.window,
                },
                prior,
                library,
                policy: PolicyConfig {
                    batch_size: a.batch_size,
                    max_patterns: a.max_patterns,
                    mc_samples: a.mc_samples,
                    lambda_scale: a.lambda_scale,
                    seed: a.seed,
                    belief_model: if a.linear {
                        BeliefModel::Linear
                    } else {
                        BeliefModel::Sparse
                    },
                    ..PolicyConfig::new(a.noise_sd)
                },
                energy_table,
            };
            let c = Client::new(a.server.server);
            print_json(&rt.block_on(c.create_session(&req)).map_err(client_error)?)
        }
        SessionCommand::List(s) => print_json(
            &rt.block_on(Client::new(s.server).list_sessions())
                .map_err(client_error)?,
        ),
        SessionCommand::Show(a) => print_json(
            &rt.block_on(Client::new(a.server.server).session(&a.id))
                .map_err(client_error)?,
        ),
        SessionCommand::Suggest(a) => {
            let req = SuggestRequest {
                mode: match a.mode {
                    ModeArg::Single => SuggestMode::Single,
                    ModeArg::Batch => SuggestMode::Batch,
                    ModeArg::BatchMutagenesis => SuggestMode::BatchMutagenesis,
                },
                expected_version: a.version,
            };
            print_json(
                &rt.block_on(Client::new(a.server.server).suggest(&a.id, &req))
                    .map_err(client_error)?,
            )
        }
        SessionCommand::Observe(a) => {
            let req = ObservationRequest {
                probe: parse_probe(&a.probe)?,
                value: a.value,
                noise_sd: a.noise_sd,
                expected_version: a.version,
            };
            print_json(
                &rt.block_on(Client::new(a.server.server).record_observation(&a.id, &req))
                    .map_err(client_error)?,
            )
        }
        SessionCommand::Posterior(a) => print_json(
            &rt.block_on(Client::new(a.server.server).posterior(&a.id))
                .map_err(client_error)?,
        ),
        SessionCommand::History(a) => print_json(
            &rt.block_on(Client::new(a.server.server).history(&a.id))
                .map_err(client_error)?,
        ),
        SessionCommand::Replay(a) => print_json(
            &rt.block_on(Client::new(a.server.server).replay(&a.id))
                .map_err(client_error)?,
        ),
    }
}
