mod common;

use aui_core::persona::{presets, SimulatedHuman};
use aui_core::ui::Domain;
use aui_service::http::router;
use aui_service::service::Service;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Client {
    app: Router,
}

impl Client {
    fn new(s: Service) -> Self {
        Client { app: router(s) }
    }

    async fn send(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.send(method, uri, body).await;
        let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("{uri}: {}", String::from_utf8_lossy(&bytes)));
        (status, v)
    }
}

fn assert_error(v: &Value, code: &str) {
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), 2, "{v}");
    assert_eq!(obj["code"], code);
    assert!(obj["message"].is_string());
}

#[tokio::test]
async fn feedback_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(common::open(dir.path()));

    let (st, user) = c.json("POST", "/users", Some(json!({"user_id": "h1"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    assert!((1..=4).contains(&user["group"].as_u64().unwrap()));
    let (st, err) = c.json("POST", "/users", Some(json!({"user_id": "h1"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_error(&err, "duplicate_user");

    let (st, info) = c.json("POST", "/users/h1/sessions?domain=courses", None).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(info["progress"]["placed"], 1);
    assert_eq!(info["progress"]["total"], 32);
    let sid = info["session_id"].as_str().unwrap().to_string();
    let (st, _) = c.json("POST", "/users/h1/sessions?domain=courses", None).await;
    assert_eq!(st, StatusCode::OK);

    let (st, err) = c
        .json("POST", &format!("/sessions/{sid}/answers"), Some(json!({"query_id": "nope", "label": "Left"})))
        .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_error(&err, "stale_query");

    let human = SimulatedHuman::new(presets().remove(0));
    let (_, mut next) = c.json("GET", &format!("/sessions/{sid}/next"), None).await;
    let mut q = next["query"].clone();
    loop {
        let (_, left) = c.json("GET", &format!("/clips/{}", q["left"].as_str().unwrap()), None).await;
        let (_, right) = c.json("GET", &format!("/clips/{}", q["right"].as_str().unwrap()), None).await;
        let label = human.compare(&serde_json::from_value(left).unwrap(), &serde_json::from_value(right).unwrap());
        let (st, ack) = c
            .json(
                "POST",
                &format!("/sessions/{sid}/answers"),
                Some(json!({"query_id": q["query_id"], "label": label})),
            )
            .await;
        assert_eq!(st, StatusCode::OK, "{ack}");
        if ack["next"].is_null() {
            break;
        }
        q = ack["next"].clone();
        next = ack;
    }
    assert!(next["progress"]["queries"].as_u64().unwrap() > 90);

    let (_, progress) = c.json("GET", &format!("/sessions/{sid}/progress"), None).await;
    assert_eq!(progress["complete"], true);
    assert_eq!(progress["placed"], 32);
    let (st, err) = c.json("GET", &format!("/sessions/{sid}/next"), None).await;
    assert_eq!(st, StatusCode::GONE);
    assert_error(&err, "session_complete");
    let (st, ranking) = c.json("GET", &format!("/sessions/{sid}/ranking"), None).await;
    assert_eq!(st, StatusCode::OK);
    let placed: usize = ranking.as_array().unwrap().iter().map(|b| b.as_array().unwrap().len()).sum();
    assert_eq!(placed, 32);
}

#[tokio::test]
async fn training_ui_and_questionnaires_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let s = common::open(dir.path());
    let c = Client::new(s.clone());
    common::register(&s, "h2");

    let (st, err) = c.json("POST", "/users/h2/train/reward", None).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "missing_prerequisite");

    let (st, job) = c.json("POST", "/users/h2/train/agent", Some(json!({"beta": 0.25}))).await;
    assert_eq!(st, StatusCode::ACCEPTED);
    let id = job["job_id"].as_str().unwrap().to_string();
    s.wait_job(&id, common::JOB_TIMEOUT).unwrap();
    let (_, job) = c.json("GET", &format!("/jobs/{id}"), None).await;
    assert_eq!(job["status"], "failed");
    assert_eq!(job["error"], "no preference data");

    common::rank_all(&s, "h2", Domain::Trips, &presets()[1]);
    let (st, job) = c.json("POST", "/users/h2/train/reward", Some(json!({"domain": "trips"}))).await;
    assert_eq!(st, StatusCode::ACCEPTED);
    let (st, err) = c.json("POST", "/users/h2/train/agent", Some(json!({}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_error(&err, "job_conflict");
    s.wait_job(job["job_id"].as_str().unwrap(), common::JOB_TIMEOUT).unwrap();
    let (_, job) = c
        .json("POST", "/users/h2/train/agent", Some(json!({"domain": "trips", "steps": 20000})))
        .await;
    let done = s.wait_job(job["job_id"].as_str().unwrap(), common::JOB_TIMEOUT).unwrap();
    assert_eq!(serde_json::to_value(done.status).unwrap(), "done");

    let (st, ui) = c
        .json("GET", "/users/h2/ui?domain=trips&technique=NA&state=grid5/small/condensed/dark/dropdown", None)
        .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(ui["action"], json!({"kind": "no_op"}));
    assert_eq!(ui["next_config"], serde_json::to_value(aui_core::ui::UiConfig::default()).unwrap());
    let (st, ui) = c.json("GET", "/users/h2/ui?domain=trips&technique=adaptive", None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(ui["next_config"].is_object());
    let (st, err) = c.json("GET", "/users/h2/ui?domain=courses&technique=adaptive", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error(&err, "agent_missing");
    let (st, err) = c.json("GET", "/users/h2/ui?domain=trips&technique=adaptive&state=bad", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");

    let quis = json!({"kind": "quis", "items": vec![7; 27]});
    let (st, r) = c.json("POST", "/users/h2/questionnaires/1", Some(quis.clone())).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(r["score"], 7.0);
    let (st, err) = c
        .json("POST", "/users/h2/questionnaires/1", Some(json!({"kind": "ues", "items": vec![3; 30]})))
        .await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "invalid");
    let ues = json!({"kind": "ues", "items": vec![3; 31]});
    c.json("POST", "/users/h2/questionnaires/1", Some(ues.clone())).await;
    c.json("POST", "/users/h2/questionnaires/2", Some(quis)).await;
    c.json("POST", "/users/h2/questionnaires/2", Some(ues)).await;

    let (st, body) = c.send("GET", "/export/results.csv", None).await;
    assert_eq!(st, StatusCode::OK);
    let csv = String::from_utf8(body).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let rows = aui_core::study::parse_results(&csv).unwrap();
    assert_eq!(rows.iter().map(|r| r.period).collect::<Vec<_>>(), vec![1, 2]);
}

#[tokio::test]
async fn malformed_requests_get_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new(common::open(dir.path()));

    let (st, err) = c.json("GET", "/no/such/route", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error(&err, "no_route");
    let (st, err) = c.json("POST", "/users", Some(json!({"name": "x"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let (st, err) = c.json("POST", "/users/ghost/sessions?domain=courses", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");
    c.json("POST", "/users", Some(json!({"user_id": "u"}))).await;
    let (st, err) = c.json("POST", "/users/u/sessions?domain=boats", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let (st, err) = c.json("POST", "/users/u/sessions", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let (st, err) = c.json("POST", "/users/u/train/everything", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");
    let (st, err) = c.json("POST", "/users/u/questionnaires/x", Some(json!({"kind": "quis", "items": [1]}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&err, "invalid");
    let (st, err) = c.json("GET", "/users/u/ui?domain=courses&technique=sometimes", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let (st, err) = c.json("GET", "/jobs/job-999999", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");

    let (st, corpus) = c.json("GET", "/corpus?domain=trips", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(corpus.as_array().unwrap().len(), 32);
    let (_, all) = c.json("GET", "/corpus", None).await;
    assert_eq!(all.as_array().unwrap().len(), 64);
}
