use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use spkg_api::*;
use spkg_client::{Client, ClientError};
use spkg_core::prior::{build_prior, FootprintingProfile, PriorOptions};
use spkg_core::sim::synthetic::{bundled_fasta, bundled_target};
use spkg_service::{router, AppState, Store};
use tokio::sync::oneshot;
use tower::ServiceExt;

fn prior_for(start: usize, end: usize) -> PriorBundle {
    let (full, profile) = bundled_target().unwrap();
    let lo = start - full.first_position();
    let values = profile.values[lo..=lo + end - start].to_vec();
    build_prior(
        &FootprintingProfile::new(values, "window").unwrap(),
        &PriorOptions {
            kappa: Some(0.4),
            ..PriorOptions::default()
        },
    )
    .unwrap()
}

fn create_request(start: usize, end: usize) -> CreateSession {
    CreateSession {
        molecule: MoleculeInput {
            fasta: bundled_fasta().to_owned(),
            window: Some((start, end)),
        },
        prior: prior_for(start, end),
        library: LibrarySpec::Uniform { length: 8, overlap: 5 },
        policy: PolicyConfig {
            mc_samples: 200,
            max_patterns: 5,
            seed: 5,
            ..PolicyConfig::new(0.5)
        },
        energy_table: None,
    }
}

struct Server {
    client: Client,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Server {
    async fn start(dir: &Path) -> Self {
        let state = AppState::new(Store::open(dir).unwrap());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(spkg_service::serve(listener, state, async {
            let _ = rx.await;
        }));
        Self {
            client: Client::new(format!("http://{addr}")),
            stop: Some(tx),
            task,
        }
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.task.await.unwrap().unwrap();
    }
}

fn api_code(e: &ClientError) -> (StatusCode, String, Option<String>) {
    match e {
        ClientError::Api { status, body } => (*status, body.error.code.clone(), body.error.field.clone()),
        other => panic!("expected an API error, got {other}"),
    }
}

#[tokio::test]
async fn health_and_unknown_session() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    assert_eq!(s.client.health().await.unwrap(), Health::ok());
    let err = s.client.posterior("nope").await.unwrap_err();
    assert_eq!(api_code(&err).0, StatusCode::NOT_FOUND);
    assert_eq!(api_code(&err).1, codes::NOT_FOUND);
    s.stop().await;
}

#[tokio::test]
async fn create_suggest_observe_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let req = create_request(100, 129);
    let a = s.client.create_session(&req).await.unwrap();
    let b = s.client.create_session(&req).await.unwrap();
    assert_ne!(a.id, b.id);
    assert_eq!(a.version, 0);

    let post = s.client.posterior(&a.id).await.unwrap();
    assert_eq!(post.posterior.belief, req.prior.belief);
    assert_eq!(post.version, 0);

    let sug = s
        .client
        .suggest(
            &a.id,
            &SuggestRequest {
                mode: SuggestMode::Batch,
                expected_version: Some(0),
            },
        )
        .await
        .unwrap();
    assert_eq!(sug.suggestion.probes.len(), 3);
    let again = s
        .client
        .suggest(
            &a.id,
            &SuggestRequest {
                mode: SuggestMode::Batch,
                expected_version: None,
            },
        )
        .await
        .unwrap();
    assert_eq!(again.suggestion, sug.suggestion);
    assert_eq!(
        s.client.posterior(&a.id).await.unwrap().posterior.belief,
        req.prior.belief
    );

    let probe = sug.suggestion.probes[0];
    let obs = ObservationRequest {
        probe,
        value: 12.0,
        noise_sd: None,
        expected_version: 0,
    };
    let r = s.client.record_observation(&a.id, &obs).await.unwrap();
    assert_eq!(r.version, 1);
    let hist = s.client.history(&a.id).await.unwrap();
    assert_eq!(hist.history.len(), 1);
    assert_eq!(hist.history[0].suggestion.as_ref(), Some(&sug.suggestion));
    assert_eq!(hist.history[0].observation.probe, probe);

    let info = s.client.session(&a.id).await.unwrap();
    assert_eq!(info.version, 1);
    assert_eq!(info.pending, None);

    // Stale version: 409 and nothing changes.
    let before = s.client.posterior(&a.id).await.unwrap();
    let err = s.client.record_observation(&a.id, &obs).await.unwrap_err();
    assert_eq!(api_code(&err).0, StatusCode::CONFLICT);
    assert_eq!(api_code(&err).1, codes::VERSION_CONFLICT);
    assert_eq!(s.client.posterior(&a.id).await.unwrap(), before);
    let err = s
        .client
        .suggest(
            &a.id,
            &SuggestRequest {
                mode: SuggestMode::Single,
                expected_version: Some(0),
            },
        )
        .await
        .unwrap_err();
    assert_eq!(api_code(&err).0, StatusCode::CONFLICT);

    // Probe outside the library.
    let err = s
        .client
        .record_observation(
            &a.id,
            &ObservationRequest {
                probe: Probe::new(101, 104).unwrap(),
                value: 1.0,
                noise_sd: None,
                expected_version: 1,
            },
        )
        .await
        .unwrap_err();
    assert_eq!(
        api_code(&err),
        (
            StatusCode::UNPROCESSABLE_ENTITY,
            codes::INVALID.into(),
            Some("probe".into())
        )
    );

    let replay = s.client.replay(&a.id).await.unwrap();
    assert!(replay.matches);
    assert_eq!(replay.belief, s.client.posterior(&a.id).await.unwrap().posterior.belief);
    s.stop().await;
}

#[tokio::test]
async fn invalid_create_requests_are_422_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let mut req = create_request(100, 129);
    req.prior = prior_for(100, 130);
    let err = s.client.create_session(&req).await.unwrap_err();
    assert_eq!(
        api_code(&err),
        (
            StatusCode::UNPROCESSABLE_ENTITY,
            codes::INVALID.into(),
            Some("prior".into())
        )
    );

    let mut req = create_request(100, 129);
    req.molecule.window = Some((5000, 5100));
    let err = s.client.create_session(&req).await.unwrap_err();
    assert_eq!(api_code(&err).2.as_deref(), Some("molecule.window"));

    let mut req = create_request(100, 129);
    req.policy.noise_sd = -1.0;
    let err = s.client.create_session(&req).await.unwrap_err();
    assert_eq!(api_code(&err).2.as_deref(), Some("policy.noise_sd"));
    assert!(s.client.list_sessions().await.unwrap().is_empty());
    s.stop().await;
}

#[tokio::test]
async fn malformed_json_gets_error_body() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(Store::open(dir.path()).unwrap()));
    let resp = app
        .oneshot(
            Request::post("/sessions")
                .header("content-type", "application/json")
                .body(Body::from("{\"molecule\": 3}"))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let body: ErrorBody = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(body.error.code, codes::MALFORMED);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_one_wins() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.client.create_session(&create_request(100, 129)).await.unwrap().id;
    let lib = s.client.session(&id).await.unwrap().library;
    for round in 0..5u64 {
        let tasks: Vec<_> = (0..4)
            .map(|k| {
                let c = Client::new(s.client.base_url());
                let id = id.clone();
                let probe = lib[k];
                tokio::spawn(async move {
                    c.record_observation(
                        &id,
                        &ObservationRequest {
                            probe,
                            value: k as f64,
                            noise_sd: None,
                            expected_version: round,
                        },
                    )
                    .await
                })
            })
            .collect();
        let mut ok = 0;
        let mut conflicts = 0;
        for t in tasks {
            match t.await.unwrap() {
                Ok(r) => {
                    assert_eq!(r.version, round + 1);
                    ok += 1;
                }
                Err(e) if e.is_conflict() => conflicts += 1,
                Err(e) => panic!("{e}"),
            }
        }
        assert_eq!((ok, conflicts), (1, 3));
    }
    let info = s.client.session(&id).await.unwrap();
    assert_eq!((info.version, info.observations), (5, 5));
    assert!(s.client.replay(&id).await.unwrap().matches);
    s.stop().await;
}

#[tokio::test]
async fn restart_preserves_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.client.create_session(&create_request(100, 129)).await.unwrap().id;
    let sug = s
        .client
        .suggest(
            &id,
            &SuggestRequest {
                mode: SuggestMode::Single,
                expected_version: None,
            },
        )
        .await
        .unwrap();
    s.client
        .record_observation(
            &id,
            &ObservationRequest {
                probe: sug.suggestion.probes[0],
                value: 4.0,
                noise_sd: Some(0.2),
                expected_version: 0,
            },
        )
        .await
        .unwrap();
    let pending = s
        .client
        .suggest(
            &id,
            &SuggestRequest {
                mode: SuggestMode::Batch,
                expected_version: None,
            },
        )
        .await
        .unwrap();
    let post = s.client.posterior(&id).await.unwrap();
    s.stop().await;

    let doc = std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap();
    assert!(doc.contains("\"history\""));

    let s = Server::start(dir.path()).await;
    assert_eq!(s.client.posterior(&id).await.unwrap(), post);
    let again = s
        .client
        .suggest(
            &id,
            &SuggestRequest {
                mode: SuggestMode::Batch,
                expected_version: None,
            },
        )
        .await
        .unwrap();
    assert_eq!(again.suggestion, pending.suggestion);
    assert!(s.client.replay(&id).await.unwrap().matches);
    s.stop().await;
}

#[test]
fn unwritable_data_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("file");
    std::fs::write(&file, "x").unwrap();
    assert!(Store::open(&file).is_err());
}

#[test]
fn corrupt_document_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("abc.json"), "{}").unwrap();
    let err = Store::open(dir.path()).unwrap_err();
    assert!(err.to_string().contains("abc.json"));
}

#[tokio::test]
async fn floats_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.client.create_session(&create_request(100, 129)).await.unwrap().id;
    let raw = reqwest::get(format!("{}/sessions/{id}/posterior", s.client.base_url()))
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    let post: PosteriorResponse = serde_json::from_str(&raw).unwrap();
    assert_eq!(post.posterior.belief, prior_for(100, 129).belief);
    s.stop().await;
}
