//! The HTTP client against a scripted local server.

mod support;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use kbc_core::backend::{ed_generate, qa_extract, EdRequest, HttpBackend, HttpBackendConfig, QaRequest};
use kbc_core::BackendError;
use serde_json::{json, Value};
use support::stub_server::spawn;

fn client(url: &str) -> HttpBackend {
    let mut config = HttpBackendConfig::new(url);
    config.initial_backoff = Duration::from_millis(1);
    config.retries = 2;
    config.timeout = Duration::from_secs(5);
    HttpBackend::new(config)
}

fn qa_request() -> QaRequest {
    QaRequest {
        question: "the song Blue is performed by which person?".into(),
        context: "Blue was sung by Zoë Keating.".into(),
        k: 2,
    }
}

#[test]
fn qa_round_trip_uses_wire_format() {
    let server = spawn(|_| {
        let body = json!({"answers": [
            {"text": "Zoë Keating", "score": 0.9, "start": 17, "end": 28},
            {"text": "Blue", "score": 0.2, "start": 0, "end": 4},
            {"text": "sung", "score": 0.1, "start": 9, "end": 13}
        ]});
        (200, body.to_string())
    });
    let answers = qa_extract(&client(&server.url), &qa_request()).unwrap();
    assert_eq!(answers.len(), 2);
    assert_eq!(answers[0].text, "Zoë Keating");

    let seen = server.recorded();
    assert_eq!(seen.len(), 1);
    assert_eq!((seen[0].method.as_str(), seen[0].path.as_str()), ("POST", "/v1/qa"));
    assert!(seen[0].header("x-request-id").is_some());
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(
        body,
        json!({"question": "the song Blue is performed by which person?", "context": "Blue was sung by Zoë Keating.", "k": 2})
    );
}

#[test]
fn ed_round_trip_uses_wire_format() {
    let server = spawn(|_| {
        (
            200,
            json!({"entities": [{"name": "Zoe Keating", "score": 0.7}]}).to_string(),
        )
    });
    let request = EdRequest {
        prompt_with_markers: "the song Blue is performed by [ENT] this person [ENT]".into(),
        context: "Blue was sung by Zoe Keating.".into(),
        k: 5,
    };
    let guesses = ed_generate(&client(&server.url), &request).unwrap();
    assert_eq!(guesses[0].name, "Zoe Keating");
    let seen = server.recorded();
    assert_eq!(seen[0].path, "/v1/ed");
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["prompt"], "the song Blue is performed by [ENT] this person [ENT]");
    assert_eq!(body["k"], 5);
}

#[test]
fn server_errors_are_retried() {
    let calls = AtomicUsize::new(0);
    let server = spawn(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, "busy".into())
        } else {
            (200, json!({"answers": []}).to_string())
        }
    });
    assert!(qa_extract(&client(&server.url), &qa_request()).unwrap().is_empty());
    let seen = server.recorded();
    assert_eq!(seen.len(), 3);
    // retries of one logical request keep its id
    assert!(seen
        .iter()
        .all(|r| r.header("x-request-id") == seen[0].header("x-request-id")));
}

#[test]
fn persistent_server_errors_give_transport_error() {
    let server = spawn(|_| (500, "boom".into()));
    let err = qa_extract(&client(&server.url), &qa_request()).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
    assert!(err.is_retryable());
    assert_eq!(server.recorded().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = spawn(|_| (400, r#"{"detail":"bad k"}"#.into()));
    let err = qa_extract(&client(&server.url), &qa_request()).unwrap_err();
    match err {
        BackendError::Protocol { excerpt, .. } => assert!(excerpt.contains("bad k")),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.recorded().len(), 1);
}

#[test]
fn malformed_json_is_a_protocol_error_with_excerpt() {
    let server = spawn(|_| (200, "{\"answers\": [oops".into()));
    let err = qa_extract(&client(&server.url), &qa_request()).unwrap_err();
    match err {
        BackendError::Protocol { excerpt, .. } => assert!(excerpt.contains("oops")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn out_of_range_score_is_a_protocol_error() {
    let server = spawn(|_| {
        (
            200,
            json!({"answers": [{"text": "Blue", "score": 1.5, "start": 0, "end": 4}]}).to_string(),
        )
    });
    let err = qa_extract(&client(&server.url), &qa_request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err:?}");
}

#[test]
fn misaligned_span_is_a_protocol_error() {
    let server = spawn(|_| {
        (
            200,
            json!({"answers": [{"text": "Zoë Keating", "score": 0.5, "start": 18, "end": 29}]}).to_string(),
        )
    });
    let err = qa_extract(&client(&server.url), &qa_request()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err:?}");
}

#[test]
fn health_reports_models() {
    let server = spawn(|r| {
        assert_eq!((r.method.as_str(), r.path.as_str()), ("GET", "/v1/health"));
        (
            200,
            json!({"status": "ok", "models": {"qa": "reader", "ed": "generator"}}).to_string(),
        )
    });
    let health = client(&format!("{}/", server.url)).check_health().unwrap();
    assert_eq!(health.models.len(), 2);
}

#[test]
fn unhealthy_status_fails_the_check() {
    let server = spawn(|_| (200, json!({"status": "loading"}).to_string()));
    let backend = client(&server.url);
    assert_eq!(backend.health().unwrap().status, "loading");
    assert!(matches!(backend.check_health(), Err(BackendError::Protocol { .. })));
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = client(&url).health().unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}

#[test]
fn concurrent_requests_respect_the_in_flight_cap() {
    let active = std::sync::Arc::new(AtomicUsize::new(0));
    let peak = std::sync::Arc::new(AtomicUsize::new(0));
    let (a, p) = (active.clone(), peak.clone());
    let server = spawn(move |_| {
        let now = a.fetch_add(1, Ordering::SeqCst) + 1;
        p.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(20));
        a.fetch_sub(1, Ordering::SeqCst);
        (200, json!({"answers": []}).to_string())
    });
    let mut config = HttpBackendConfig::new(&server.url);
    config.max_in_flight = 2;
    let backend = HttpBackend::new(config);
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| qa_extract(&backend, &qa_request()).unwrap());
        }
    });
    assert_eq!(server.recorded().len(), 8);
    assert!(peak.load(Ordering::SeqCst) <= 2);
}
