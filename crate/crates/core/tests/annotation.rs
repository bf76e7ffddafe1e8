use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use pluralism_core::annotate::mock::{MockResponse, MockServer};
use pluralism_core::annotate::{AnnotationClient, AnnotationConfig, PromptTemplate};
use pluralism_core::case::{Case, ContextualFeatures};
use pluralism_core::Error;

const TOKEN: &str = "sk-test-7f3a9c";

fn case(id: &str, summary: &str) -> Case {
    Case {
        case_id: id.into(),
        selftext: format!("long text of {id}"),
        summary: summary.into(),
        context: ContextualFeatures::default(),
        prior: None,
        moral_decision: String::new(),
        school_label: None,
        subtheory_label: None,
    }
}

/// Each test uses its own variable so parallel tests do not interfere.
fn client(server: &MockServer, env: &str, retries: usize) -> AnnotationClient {
    std::env::set_var(env, TOKEN);
    AnnotationClient::new(AnnotationConfig {
        endpoint: server.url(),
        token_env: env.into(),
        max_retries: retries,
        timeout_secs: 5.0,
        retry_backoff_ms: 0,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn valid_reply_passes_through_with_wire_format() {
    let server = MockServer::start(|_| MockResponse::chat(r#"{"alpha":0.6,"beta":0.1,"gamma":0.3}"#)).unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_VALID", 3);
    let p = c.annotate_case(&PromptTemplate::default(), &case("a", "a kept promise")).unwrap();
    assert_eq!(p.components(), [0.6, 0.1, 0.3]);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    let r = &reqs[0];
    assert_eq!(r.method, "POST");
    assert_eq!(r.header("authorization"), Some(format!("Bearer {TOKEN}").as_str()));
    let body = r.json().unwrap();
    assert_eq!(body["model"], "deepseek-chat");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
    let user = r.user_message().unwrap();
    assert!(user.contains("a kept promise"));
    for name in ["alpha", "beta", "gamma"] {
        assert!(user.contains(name));
    }
}

#[test]
fn json_wrapped_in_prose_and_slight_drift_is_renormalized() {
    let server = MockServer::start(|_| {
        MockResponse::chat("Sure! Here you go: {\"alpha\": 0.5, \"beta\": 0.31, \"gamma\": 0.2} Hope it helps {x}")
    })
    .unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_RENORM", 0);
    let p = c.annotate_case(&PromptTemplate::default(), &case("a", "s")).unwrap();
    let expect = [0.5 / 1.01, 0.31 / 1.01, 0.2 / 1.01];
    for (got, want) in p.components().iter().zip(expect) {
        assert!((got - want).abs() <= 1e-9);
    }
}

#[test]
fn prose_reply_exhausts_retries_after_four_attempts() {
    let server = MockServer::start(|_| MockResponse::chat("I would rather not assign numbers.")).unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_PROSE", 3);
    let err = c.annotate_case(&PromptTemplate::default(), &case("a", "s")).unwrap_err();
    match err {
        Error::AnnotationExhausted { attempts, last } => {
            assert_eq!(attempts, 4);
            assert!(last.contains("invalid annotation"), "{last}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn off_simplex_scores_are_retried_then_accepted() {
    let calls = AtomicUsize::new(0);
    let server = MockServer::start(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) < 2 {
            MockResponse::chat(r#"{"alpha":0.9,"beta":0.5,"gamma":0.3}"#)
        } else {
            MockResponse::chat(r#"{"alpha":0.25,"beta":0.25,"gamma":0.5}"#)
        }
    })
    .unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_OFF", 2);
    let p = c.annotate_case(&PromptTemplate::default(), &case("a", "s")).unwrap();
    assert_eq!(p.components(), [0.25, 0.25, 0.5]);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn server_errors_count_as_transport_failures() {
    let server = MockServer::start(|_| MockResponse::status(503)).unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_503", 1);
    let err = c.annotate_case(&PromptTemplate::default(), &case("a", "s")).unwrap_err();
    assert!(matches!(err, Error::AnnotationExhausted { attempts: 2, .. }));
}

#[test]
fn batch_keeps_order_and_records_per_case_failures() {
    let server = MockServer::start(|req| {
        let user = req.user_message().unwrap_or_default();
        if user.contains("case-7") {
            MockResponse::chat("no scores here")
        } else {
            MockResponse::chat(r#"{"alpha":0.2,"beta":0.3,"gamma":0.5}"#)
        }
    })
    .unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_BATCH", 1);
    let cases: Vec<Case> = (0..10).map(|i| case(&format!("c{i}"), &format!("case-{i}"))).collect();
    let out = c.annotate_dataset(&PromptTemplate::default(), &cases, 0.0);
    assert_eq!(out.len(), 10);
    for (i, (id, res)) in out.iter().enumerate() {
        assert_eq!(id, &format!("c{i}"));
        assert_eq!(res.is_err(), i == 7);
    }
}

#[test]
fn rate_limit_spaces_requests() {
    let server = MockServer::start(|_| MockResponse::chat(r#"{"alpha":1,"beta":0,"gamma":0}"#)).unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_RATE", 0);
    let cases: Vec<Case> = (0..6).map(|i| case(&format!("c{i}"), "s")).collect();
    let t = Instant::now();
    let out = c.annotate_dataset(&PromptTemplate::default(), &cases, 2.0);
    assert!(t.elapsed().as_secs_f64() >= 2.5);
    assert!(out.iter().all(|(_, r)| r.is_ok()));
}

#[test]
fn missing_token_fails_before_any_request() {
    let server = MockServer::start(|_| MockResponse::chat("{}")).unwrap();
    let env = "PLURALISM_TEST_TOKEN_UNSET";
    std::env::remove_var(env);
    let err = AnnotationClient::new(AnnotationConfig {
        endpoint: server.url(),
        token_env: env.into(),
        ..Default::default()
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(server.requests().is_empty());
}

#[test]
fn token_never_appears_in_debug_or_serialized_config() {
    let server = MockServer::start(|_| MockResponse::status(500)).unwrap();
    let c = client(&server, "PLURALISM_TEST_TOKEN_DEBUG", 0);
    assert!(!format!("{c:?}").contains(TOKEN));
    assert!(!serde_json::to_string(c.config()).unwrap().contains(TOKEN));
    let err = c.annotate_case(&PromptTemplate::default(), &case("a", "s")).unwrap_err();
    assert!(!err.to_string().contains(TOKEN));
}
