use std::path::Path;
use std::time::Duration;

use amrsim::config::{apply_overrides, default_config, OverrideDirective};
use amrsim::experiment::{train, MetricsTable, TrainOptions};
use amrsim::Env;
use amrsim_service::{router, ServiceConfig};
use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(results: &Path) -> ServiceConfig {
    ServiceConfig {
        results_root: results.to_path_buf(),
        config_root: results.to_path_buf(),
        ..ServiceConfig::default()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value, HeaderMap) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value, headers)
}

async fn create(app: &Router, body: Value) -> Value {
    let (status, v, _) = call(app, Method::POST, "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

async fn step(app: &Router, id: &str, actions: Value) -> (StatusCode, Value) {
    let (s, v, _) = call(app, Method::POST, &format!("/api/sessions/{id}/step"), Some(json!({ "actions": actions }))).await;
    (s, v)
}

fn keys_anywhere(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                keys_anywhere(x, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys_anywhere(x, out)),
        _ => {}
    }
}

fn assert_no_truth(v: &Value) {
    let mut keys = Vec::new();
    keys_anywhere(v, &mut keys);
    for banned in ["reveal", "true_sigma", "infected", "infected_counts", "resistant", "outcome", "pi"] {
        assert!(!keys.iter().any(|k| k == banned), "{banned} leaked in {v}");
    }
}

#[tokio::test]
async fn default_session_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let v = create(&app, json!({})).await;
    assert_eq!(v["api_version"], "1");
    assert_eq!(v["step_index"], 0);
    assert_eq!(v["status"], "active");
    assert_eq!(v["finished"], false);
    assert_eq!(v["antibiotic_names"], json!(["A", "B"]));
    assert_eq!(v["max_time_steps"], 50);
    assert_eq!(v["action_space"]["allowed_range"], json!([0, 2]));
    assert_eq!(v["observation"]["patients"].as_array().unwrap().len(), 3);
    assert_eq!(v["observation"]["antibiogram"].as_array().unwrap().len(), 2);
    assert_no_truth(&v);

    // An empty body is the default request too.
    let (status, v, _) = call(&app, Method::POST, "/api/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["step_index"], 0);
}

#[tokio::test]
async fn override_changes_cohort_size() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let v = create(&app, json!({"overrides": ["environment.num_patients_per_time_step=5"]})).await;
    assert_eq!(v["observation"]["patients"].as_array().unwrap().len(), 5);
    assert_eq!(v["action_space"]["num_slots"], 5);
}

#[tokio::test]
async fn invalid_config_is_structured_422() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let (status, v, _) =
        call(&app, Method::POST, "/api/sessions", Some(json!({"overrides": ["reward_calculator.lambda=2"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["api_version"], "1");
    assert_eq!(v["error"]["code"], "validation_error");
    assert_eq!(v["error"]["field_paths"], json!(["reward_calculator.lambda"]));

    let (status, v, _) =
        call(&app, Method::POST, "/api/sessions", Some(json!({"overrides": ["reward_calculator.lamda=0.2"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["field_paths"], json!(["reward_calculator.lamda"]));
    assert!(v["error"]["message"].as_str().unwrap().contains("reward_calculator.lambda"));

    let (status, v, _) = call(&app, Method::POST, "/api/sessions", Some(json!({"config_path": "../etc/x.yaml"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["field_paths"], json!(["config_path"]));

    let (status, v, _) = call(&app, Method::POST, "/api/sessions", Some(json!({"config_path": "missing.yaml"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");

    let (status, v, _) = call(&app, Method::POST, "/api/sessions", Some(json!({"sed": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "bad_request");
}

#[tokio::test]
async fn session_from_scaffolded_umbrella() {
    let dir = tempfile::tempdir().unwrap();
    amrsim::config::scaffold_defaults(dir.path(), false).unwrap();
    let app = router(config(dir.path()));
    let v = create(
        &app,
        json!({
            "config_path": "configs/umbrella_configs/base_experiment.yaml",
            "subconfigs": ["environment=configs/environment/three_abx_w_crossresistance.yaml"],
            "seed": 9
        }),
    )
    .await;
    assert_eq!(v["antibiotic_names"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn action_contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let id = create(&app, json!({})).await["session_id"].as_str().unwrap().to_string();

    let (status, v) = step(&app, &id, json!([0, 3, 0])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "invalid_action");
    assert_eq!(v["error"]["slot"], 1);
    assert_eq!(v["error"]["allowed_range"], json!([0, 2]));

    let (status, v) = step(&app, &id, json!([0, 0, -1])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["slot"], 2);

    let (status, v) = step(&app, &id, json!([0, 0])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["field_paths"], json!(["actions"]));

    let (status, _) = step(&app, &id, json!(["x"])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Rejected requests do not advance the episode.
    let (_, v, _) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(v["step_index"], 0);

    let (status, v) = step(&app, &id, json!([0, 0, 0])).await;
    assert_eq!(status, StatusCode::OK);
    for k in ["overall", "individual", "community"] {
        assert!(v["last_reward"][k].as_f64().unwrap().is_finite());
    }
    assert_eq!(v["step_index"], 1);
}

#[tokio::test]
async fn three_step_episode_matches_environment() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let overrides = ["environment.max_time_steps=3"];
    let id = create(&app, json!({"overrides": overrides, "seed": 17})).await["session_id"]
        .as_str()
        .unwrap()
        .to_string();

    let cfg = apply_overrides(
        &default_config(),
        &[OverrideDirective::parameter(overrides[0]).unwrap()],
    )
    .unwrap();
    let mut env = Env::new(&cfg).unwrap();
    let (_, reset) = env.reset(17);
    let script = [[1usize, 0, 2], [2, 2, 0], [0, 1, 1]];
    let mut sigmas = vec![reset.true_sigma.clone()];
    let mut total = 0.0;
    let mut last = Value::Null;
    for (i, actions) in script.iter().enumerate() {
        let expected = env.step(actions).unwrap();
        sigmas.push(expected.info.true_sigma.clone());
        total += expected.reward;
        let (status, v) = step(&app, &id, json!(actions)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["step_index"], i + 1);
        assert_eq!(v["last_reward"]["overall"].as_f64().unwrap(), expected.reward);
        assert_eq!(
            v["observation"]["antibiogram"],
            json!(expected.observation.sigma_hat()),
        );
        if i < 2 {
            assert_eq!(v["finished"], false);
            assert_no_truth(&v);
        }
        last = v;
    }
    assert_eq!(last["finished"], true);
    assert_eq!(last["status"], "finished");
    let reveal = &last["reveal"];
    assert_eq!(reveal["true_sigma"], json!(sigmas));
    assert_eq!(reveal["infected_counts"].as_array().unwrap().len(), 3);
    assert!((reveal["cumulative_reward"]["overall"].as_f64().unwrap() - total).abs() < 1e-12);

    let (status, v) = step(&app, &id, json!([0, 0, 0])).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "conflict");

    let (_, h, _) = call(&app, Method::GET, &format!("/api/sessions/{id}/history"), None).await;
    assert_eq!(h["entries"].as_array().unwrap().len(), 3);
    assert_eq!(h["reveal"], *reveal);
}

#[tokio::test]
async fn history_mirrors_served_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let created = create(&app, json!({"seed": 4, "overrides": ["environment.antibiotics.0.amr_noise_sd=0.1"]})).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let mut served = vec![created["observation"].clone()];
    for a in [[1, 1, 1], [0, 2, 1], [2, 0, 0], [1, 0, 2]] {
        let (_, v) = step(&app, &id, json!(a)).await;
        served.push(v["observation"].clone());
    }
    let uri = format!("/api/sessions/{id}/history");
    let (status, h, _) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_no_truth(&h);
    let entries = h["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e["step_index"], i + 1);
        assert_eq!(e["observation"], served[i]);
    }
    let (_, again, _) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(again, h);
}

#[tokio::test]
async fn interleaved_sessions_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let body = json!({"seed": 8});
    let a = create(&app, body.clone()).await["session_id"].as_str().unwrap().to_string();
    let b = create(&app, body.clone()).await["session_id"].as_str().unwrap().to_string();
    let solo = create(&app, body).await["session_id"].as_str().unwrap().to_string();
    let script = [[1, 2, 0], [2, 2, 2], [0, 0, 1], [1, 1, 1]];
    for s in &script {
        step(&app, &solo, json!(s)).await;
    }
    for s in &script {
        step(&app, &a, json!(s)).await;
        step(&app, &b, json!(s)).await;
    }
    let hist = |id: String| {
        let app = app.clone();
        async move { call(&app, Method::GET, &format!("/api/sessions/{id}/history"), None).await.1["entries"].clone() }
    };
    let (ha, hb, hs) = (hist(a).await, hist(b).await, hist(solo).await);
    assert_eq!(ha, hs);
    assert_eq!(hb, hs);
}

#[tokio::test]
async fn capacity_and_expiry() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(ServiceConfig {
        capacity: 2,
        idle_timeout: Duration::from_millis(300),
        ..config(dir.path())
    });
    let first = create(&app, json!({})).await["session_id"].as_str().unwrap().to_string();
    create(&app, json!({})).await;
    let (status, v, headers) = call(&app, Method::POST, "/api/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"]["code"], "capacity_exceeded");
    assert!(v["error"]["retry_after_seconds"].as_u64().unwrap() >= 1);
    assert!(headers.contains_key(header::RETRY_AFTER));

    tokio::time::sleep(Duration::from_millis(400)).await;
    let (status, _, _) = call(&app, Method::GET, &format!("/api/sessions/{first}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    create(&app, json!({})).await;
}

#[tokio::test]
async fn delete_and_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(config(dir.path()));
    let id = create(&app, json!({})).await["session_id"].as_str().unwrap().to_string();
    let uri = format!("/api/sessions/{id}");
    let (status, v, _) = call(&app, Method::DELETE, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["deleted"], true);
    for (m, u) in [
        (Method::GET, uri.clone()),
        (Method::DELETE, uri.clone()),
        (Method::GET, format!("{uri}/history")),
    ] {
        let (status, v, _) = call(&app, m, &u, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(v["error"]["code"], "not_found");
    }
    let (status, v) = step(&app, &id, json!([0, 0, 0])).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{v}");
    let (status, _, _) = call(&app, Method::GET, "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn run_listing_and_metrics_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config();
    cfg.environment.max_time_steps = 4;
    cfg.training.total_num_training_episodes = 3;
    cfg.training.num_eval_episodes = 2;
    for id in ["run_a", "run_b"] {
        let opts = TrainOptions {
            results_root: dir.path().to_path_buf(),
            run_id: Some(id.into()),
            parallel: 1,
        };
        train(&cfg, &opts).unwrap();
    }
    std::fs::create_dir(dir.path().join("run_c")).unwrap();
    std::fs::write(dir.path().join("run_c/resolved_config.yaml"), "environment: [").unwrap();
    std::fs::create_dir(dir.path().join("not_a_run")).unwrap();

    let app = router(config(dir.path()));
    let (status, v, _) = call(&app, Method::GET, "/api/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    let runs = v["runs"].as_array().unwrap();
    let ids: Vec<&str> = runs.iter().map(|r| r["run_id"].as_str().unwrap()).collect();
    assert_eq!(ids, vec!["run_a", "run_b", "run_c"]);
    assert_eq!(runs[0]["complete"], true);
    assert_eq!(runs[0]["config"]["training"]["run_name"], "example_run");
    assert!(runs[2]["error"].is_string());

    let (status, m, _) = call(&app, Method::GET, "/api/runs/run_a/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    let table: MetricsTable = serde_json::from_value(json!({"columns": m["columns"], "rows": m["rows"]})).unwrap();
    let on_disk = std::fs::read_to_string(dir.path().join("run_a/metrics.csv")).unwrap();
    assert_eq!(table.to_csv(), on_disk);
    let (_, again, _) = call(&app, Method::GET, "/api/runs/run_a/metrics", None).await;
    assert_eq!(again, m);

    for bad in ["/api/runs/nope/metrics", "/api/runs/..%2Frun_a/metrics"] {
        let (status, _, _) = call(&app, Method::GET, bad, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{bad}");
    }
}
