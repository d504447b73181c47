// Remote provider against a local fake chat-completions server.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use mqmqe::gateway::{annotate_batch, PromptRequest, ProviderConfig, ProviderKind, ResponseStatus};
use mqmqe::prompting::RenderedPrompt;

#[derive(Default)]
struct Fake {
    hits: Mutex<HashMap<String, u32>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    bad_auth: AtomicUsize,
}

async fn complete(
    State(fake): State<Arc<Fake>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some("Bearer test-key") {
        fake.bad_auth.fetch_add(1, Ordering::SeqCst);
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    let now = fake.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    fake.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(25)).await;
    fake.in_flight.fetch_sub(1, Ordering::SeqCst);

    let user = body["messages"].as_array().unwrap().last().unwrap()["content"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(body["temperature"], json!(0.0));
    let hit = {
        let mut hits = fake.hits.lock().unwrap();
        let n = hits.entry(user.clone()).or_insert(0);
        *n += 1;
        *n
    };
    let reply = |content: &str| {
        json!({
            "model": "gpt-4o-2024-05-13",
            "system_fingerprint": "fp_test",
            "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
        })
    };
    if user.starts_with("flaky") && hit <= 2 {
        return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})));
    }
    if user.starts_with("refuse") {
        let body = json!({
            "model": "gpt-4o-2024-05-13",
            "choices": [{"message": {"role": "assistant", "content": null, "refusal": "I can't help with that."}, "finish_reason": "stop"}]
        });
        return (StatusCode::OK, Json(body));
    }
    if user.starts_with("reject") {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "invalid request"})));
    }
    if user.starts_with("down") {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "unavailable"})));
    }
    (StatusCode::OK, Json(reply(&format!("[] for {user}"))))
}

fn request(id: &str, user: &str) -> PromptRequest {
    PromptRequest {
        segment_id: id.into(),
        prompt: RenderedPrompt {
            system: Some("You are a translator.".into()),
            user: user.into(),
        },
    }
}

// One test function: the credential variable is set once, with no other
// test thread reading the environment.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn remote_provider_round_trips() {
    std::env::set_var("MQMQE_FAKE_KEY", "test-key");
    let fake = Arc::new(Fake::default());
    let app = Router::new()
        .route("/v1/chat/completions", post(complete))
        .with_state(fake.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let cfg = ProviderConfig {
        kind: ProviderKind::Remote,
        endpoint: format!("http://{addr}/v1/chat/completions"),
        credential_env: "MQMQE_FAKE_KEY".into(),
        max_in_flight: 3,
        max_retries: 3,
        backoff_ms: 5,
        timeout_secs: 10.0,
        ..ProviderConfig::default()
    };

    // ordered results, bounded concurrency
    let reqs: Vec<PromptRequest> = (0..12)
        .map(|i| request(&format!("s{i}"), &format!("plain {i}")))
        .collect();
    let out = annotate_batch(&cfg, &reqs).await.unwrap();
    assert_eq!(out.len(), 12);
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r.segment_id, format!("s{i}"));
        assert_eq!(r.status, ResponseStatus::Ok);
        assert_eq!(r.raw_text, format!("[] for plain {i}"));
        assert_eq!(r.model, "gpt-4o-2024-05-13");
        assert_eq!(r.system_fingerprint.as_deref(), Some("fp_test"));
        assert_eq!(r.attempts, 1);
    }
    let peak = fake.peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak in flight {peak}");

    // 429 twice, then success on the third attempt
    let out = annotate_batch(&cfg, &[request("f", "flaky one")]).await.unwrap();
    assert_eq!(out[0].status, ResponseStatus::Ok);
    assert_eq!(out[0].attempts, 3);

    // refusals are recorded, not retried
    let out = annotate_batch(&cfg, &[request("r", "refuse this")]).await.unwrap();
    assert_eq!(out[0].status, ResponseStatus::Refusal);
    assert_eq!(out[0].raw_text, "I can't help with that.");
    assert_eq!(out[0].attempts, 1);

    // a 4xx other than 429 is fatal after one attempt
    let out = annotate_batch(&cfg, &[request("x", "reject me")]).await.unwrap();
    assert_eq!(out[0].status, ResponseStatus::TransportError);
    assert_eq!(out[0].attempts, 1);

    // 5xx retried until the budget runs out
    let out = annotate_batch(&cfg, &[request("d", "down always")]).await.unwrap();
    assert_eq!(out[0].status, ResponseStatus::TransportError);
    assert_eq!(out[0].attempts, 4);
    assert_eq!(fake.hits.lock().unwrap()["down always"], 4);

    assert_eq!(fake.bad_auth.load(Ordering::SeqCst), 0);

    // unreachable endpoint: transport error, not a panic
    let dead = ProviderConfig {
        endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
        max_retries: 1,
        timeout_secs: 2.0,
        ..cfg.clone()
    };
    let out = annotate_batch(&dead, &[request("u", "plain")]).await.unwrap();
    assert_eq!(out[0].status, ResponseStatus::TransportError);
    assert_eq!(out[0].attempts, 2);
}
