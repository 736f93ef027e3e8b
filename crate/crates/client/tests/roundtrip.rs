//! The client against a real service on a loopback socket.

use llplace_client::{Client, ClientError};
use llplace_core::api::CreateSessionRequest;
use llplace_core::backend::BackendConfig;
use llplace_core::synthetic::{demo_catalog, living_room_request};
use llplace_core::{EditRequest, Phase, PromptTemplates, RequestItem};
use llplace_service::{AppState, ServiceConfig};

async fn spawn_service() -> Client {
    let config = ServiceConfig {
        backend: BackendConfig::heuristic(21),
        ..ServiceConfig::default()
    };
    let state = AppState::new(demo_catalog(), PromptTemplates::builtin(), &config);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { llplace_service::serve(listener, state, &config).await });
    Client::new(&format!("http://{addr}")).unwrap()
}

fn living_room() -> CreateSessionRequest {
    let request = living_room_request();
    CreateSessionRequest {
        room_type: request.room_type,
        items: request.items,
        bounds: None,
        backend: None,
    }
}

#[tokio::test]
async fn full_dialogue() {
    let client = spawn_service().await;
    assert_eq!(client.health().await.unwrap().status, "ok");

    let view = client.create_session(&living_room()).await.unwrap();
    assert_eq!(view.phase, Phase::Created);
    let n = view.instances.len();

    let generated = client.generate(&view.id).await.unwrap();
    assert_eq!(generated.layout.objects.len(), n);

    let added = client
        .edit(&view.id, &EditRequest::Add(vec![RequestItem::one("a tall bookshelf")]))
        .await
        .unwrap();
    assert_eq!(added.layout.objects.len(), n + 1);
    assert!(added.layout.get("a_tall_bookshelf").is_some());

    let removed = client
        .edit(&view.id, &EditRequest::Remove(vec![RequestItem::one("a TV stand")]))
        .await
        .unwrap();
    assert_eq!(removed.layout.objects.len(), n);
    assert!(removed.layout.get("tv_stand").is_none());

    assert_eq!(client.layout(&view.id).await.unwrap(), removed.layout);
    assert_eq!(client.metrics(&view.id).await.unwrap().object_count, n);
    assert!(client.render_svg(&view.id).await.unwrap().starts_with("<svg"));
    assert_eq!(client.session(&view.id).await.unwrap().phase, Phase::Edited);

    client.delete(&view.id).await.unwrap();
    let err = client.session(&view.id).await.unwrap_err();
    assert_eq!(err.status(), Some(404));
}

#[tokio::test]
async fn api_errors_carry_the_body() {
    let client = spawn_service().await;
    let view = client.create_session(&living_room()).await.unwrap();
    let err = client
        .edit(&view.id, &EditRequest::Add(vec![RequestItem::one("sofa")]))
        .await
        .unwrap_err();
    match err {
        ClientError::Api { status, body } => {
            assert_eq!(status, 409);
            assert_eq!(body.error, "wrong_phase");
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut scripted = living_room();
    scripted.backend = Some(BackendConfig::replay(vec!["no block".into(), "still none".into()]));
    let view = client.create_session(&scripted).await.unwrap();
    let err = client.generate(&view.id).await.unwrap_err();
    assert_eq!(err.status(), Some(422));
    assert_eq!(err.raw_response(), Some("still none"));
}

#[tokio::test]
async fn unreachable_service_is_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = Client::new(&format!("http://127.0.0.1:{port}")).unwrap();
    assert!(matches!(client.health().await, Err(ClientError::Transport(_))));
}
