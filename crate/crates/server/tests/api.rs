use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use gridwrangle::fixture::SALARIES_CSV;
use gridwrangle::script::replay_json;
use gridwrangle::storage::MemoryStorage;
use gridwrangle::{IngestOptions, Session, SessionConfig};
use gridwrangle_server::{router, AppState, ServerConfig, ROUTES, VERSION_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "gw-test-boundary";

fn multipart(csv: &str, config: Option<&str>) -> Body {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"data.csv\"\r\nContent-Type: text/csv\r\n\r\n{csv}\r\n"
    );
    if let Some(c) = config {
        body.push_str(&format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"config\"\r\n\r\n{c}\r\n"
        ));
    }
    body.push_str(&format!("--{BOUNDARY}--\r\n"));
    Body::from(body)
}

struct Reply {
    status: StatusCode,
    version: Option<u64>,
    content_type: String,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|_| panic!("not json: {}", String::from_utf8_lossy(&self.bytes)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.bytes.clone()).unwrap()
    }
}

async fn send(app: &Router, req: Request<Body>) -> Reply {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let version = res
        .headers()
        .get(VERSION_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let content_type = res
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        version,
        content_type,
        bytes,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

async fn upload(app: &Router, csv: &str, config: Option<&str>) -> Reply {
    let req = Request::post("/datasets")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(csv, config))
        .unwrap();
    send(app, req).await
}

async fn fixture_app() -> (Router, String) {
    let app = router(AppState::new(ServerConfig::default()));
    let r = upload(&app, SALARIES_CSV, None).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let id = r.json()["dataset_id"].as_str().unwrap().to_string();
    (app, id)
}

fn enc(s: &str) -> String {
    s.replace('|', "%7C").replace('=', "%3D").replace(' ', "%20")
}

fn bhutan_impute() -> Value {
    json!({"kind": "impute_group_mean", "target": "Income|Country=Bhutan", "scope": {"errors": "missing"}, "params": {}})
}

#[tokio::test]
async fn upload_reports_errors() {
    let app = router(AppState::new(ServerConfig::default()));
    let r = upload(&app, SALARIES_CSV, None).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.version, Some(0));
    let v = r.json();
    assert_eq!(v["error_total"], 7);
    assert_eq!(v["error_summary"].as_object().unwrap().len(), 4);
    assert_eq!(v["config"]["outlier_k"], 2.0);
    assert_eq!(v["group_summary"].as_array().unwrap().len(), 2);

    let again = upload(&app, SALARIES_CSV, None).await.json();
    assert_ne!(again["dataset_id"], v["dataset_id"]);

    let r = upload(&app, "Country,Degree,Income\n", None).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.content_type, "application/problem+json");
    assert_eq!(r.json()["code"], "EmptyDataset");

    let r = upload(&app, SALARIES_CSV, Some(r#"{"outlier_k": 10}"#)).await;
    let v = r.json();
    assert!(v["error_summary"].get("outlier").is_none());
    assert_eq!(v["config"]["outlier_k"], 10.0);
    assert_eq!(v["config"]["min_group_size"], 2);

    let r = upload(&app, SALARIES_CSV, Some(r#"{"outlier_k": -1}"#)).await;
    assert_eq!(r.json()["code"], "InvalidConfig");
}

#[tokio::test]
async fn charts() {
    let (app, id) = fixture_app().await;
    let r = get(&app, &format!("/datasets/{id}/charts/Country/Income?k=1&seed=3")).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["groups"].as_array().unwrap().len(), 2);
    assert_eq!(v["params"]["k"], 1);
    let again = get(&app, &format!("/datasets/{id}/charts/Country/Income?k=1&seed=3")).await;
    assert_eq!(again.bytes, r.bytes);

    let r = get(&app, &format!("/datasets/{id}/charts/Country/Income?sampling=nearest")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["code"], "UnknownSampling");
    let r = get(&app, &format!("/datasets/{id}/charts/Planet/Income")).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = get(&app, "/datasets/nope/charts/Country/Income").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["code"], "UnknownDataset");
}

#[tokio::test]
async fn ranking_and_suggestions() {
    let (app, id) = fixture_app().await;
    let v = get(&app, &format!("/datasets/{id}/groups/ranked")).await.json();
    let groups = v["groups"].as_array().unwrap();
    assert_eq!(groups[0]["key"], "Income|Country=Bhutan");
    assert_eq!(groups[0]["errors"], 2);
    assert_eq!(groups[1]["key"], "Income|Degree=PhD");

    let key = enc("Income|Country=Bhutan");
    let r = get(&app, &format!("/datasets/{id}/groups/{key}/suggestions?code=missing")).await;
    let v = r.json();
    assert_eq!(v["suggestions"][0]["action"]["kind"], "impute_group_mean");
    assert_eq!(v["suggestions"][0]["rank"], 1);
    let r = get(&app, &format!("/datasets/{id}/groups/{key}/suggestions?code=outlier")).await;
    assert_eq!(r.json()["code"], "NoSuchErrorInGroup");

    let r = post(
        &app,
        &format!("/datasets/{id}/apply"),
        json!({"kind": "delete_rows", "target": "Income|Country=Chad", "scope": {"rows": [7]}}),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let v = get(&app, &format!("/datasets/{id}/groups/ranked")).await.json();
    assert!(v["groups"].as_array().unwrap().iter().all(|g| g["key"] != "Income|Degree=PhD"));
}

#[tokio::test]
async fn preview_apply_undo_redo() {
    let (app, id) = fixture_app().await;
    let a = post(&app, &format!("/datasets/{id}/preview"), bhutan_impute()).await;
    let b = post(&app, &format!("/datasets/{id}/preview"), bhutan_impute()).await;
    assert_eq!(a.status, StatusCode::OK, "{}", a.text());
    assert_eq!(a.bytes, b.bytes);
    assert_eq!(a.version, Some(0));
    assert_eq!(a.json()["delta"]["cell_changes"][0]["after"], 600.0);

    let mut last = 0;
    for uri in ["apply", "undo", "redo"] {
        let r = if uri == "apply" {
            post(&app, &format!("/datasets/{id}/apply"), bhutan_impute()).await
        } else {
            post(&app, &format!("/datasets/{id}/{uri}"), json!(null)).await
        };
        assert_eq!(r.status, StatusCode::OK, "{uri}: {}", r.text());
        let v = r.version.unwrap();
        assert!(v > last);
        assert_eq!(r.json()["version"], v);
        last = v;
    }
    let r = post(&app, &format!("/datasets/{id}/redo"), json!(null)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["code"], "NothingToRedo");

    let r = post(&app, &format!("/datasets/{id}/apply"), json!({"kind": "fly"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["code"], "InvalidRequestBody");
}

#[tokio::test]
async fn scripts() {
    let (app, id) = fixture_app().await;
    post(&app, &format!("/datasets/{id}/apply"), bhutan_impute()).await;
    let r = get(&app, &format!("/datasets/{id}/script?target=json")).await;
    assert_eq!(r.content_type, "application/json");
    let ds = replay_json(&r.text(), SALARIES_CSV.as_bytes()).unwrap();
    assert!(ds.export_canonical_csv().contains(",600\n"));
    let r = get(&app, &format!("/datasets/{id}/script?target=python")).await;
    assert!(r.text().starts_with("#!/usr/bin/env python3"));
    let r = get(&app, &format!("/datasets/{id}/script?target=sql")).await;
    assert_eq!(r.json()["code"], "UnsupportedTarget");
}

#[tokio::test]
async fn registrations() {
    let (app, id) = fixture_app().await;
    let uri = format!("/datasets/{id}/detectors");
    let body = json!({"code": "negative_income", "predicate": "value < 1120", "column": "Income"});
    let r = post(&app, &uri, body.clone()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    assert_eq!(r.json()["error_summary"]["negative_income"], 6);
    assert_eq!(post(&app, &uri, body).await.status, StatusCode::CONFLICT);

    let r = post(&app, &uri, json!({"code": "x", "predicate": "value <"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let v = r.json();
    assert_eq!(v["code"], "ExpressionParseError");
    assert_eq!(v["offset"], 7);

    let uri = format!("/datasets/{id}/wranglers");
    let r = post(&app, &uri, json!({"code": "negative_income", "rule": "set_constant(0)"})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let r = post(&app, &uri, json!({"code": "xyz", "rule": "delete_row"})).await;
    assert_eq!(r.json()["code"], "UnknownErrorCode");
    let r = post(&app, &uri, json!({"code": "missing", "rule": "scale(x)"})).await;
    assert_eq!(r.json()["code"], "ExpressionParseError");
}

#[tokio::test]
async fn http_matches_library() {
    let (app, id) = fixture_app().await;
    let mut lib = Session::create(
        SALARIES_CSV.as_bytes(),
        &IngestOptions::default(),
        SessionConfig::default(),
        Box::new(MemoryStorage::new()),
        Arc::new(|| 0),
    )
    .unwrap();
    let action: gridwrangle::RepairAction = serde_json::from_value(bhutan_impute()).unwrap();
    let http = post(&app, &format!("/datasets/{id}/apply"), bhutan_impute()).await.json();
    let direct = serde_json::to_value(lib.apply(&action).unwrap()).unwrap();
    assert_eq!(http, direct);
    let key = enc("Income|Country=Bhutan");
    let http = get(&app, &format!("/datasets/{id}/groups/{key}/suggestions?code=type_mismatch")).await.json();
    let direct = lib
        .suggest(&"Income|Country=Bhutan".parse().unwrap(), &"type_mismatch".parse().unwrap())
        .unwrap();
    assert_eq!(http["suggestions"], serde_json::to_value(direct).unwrap());
}

#[tokio::test]
async fn writes_are_serialized() {
    let (app, id) = fixture_app().await;
    let mut tasks = Vec::new();
    for i in 0..8 {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let uri = format!("/datasets/{id}/{}", if i % 2 == 0 { "apply" } else { "undo" });
            let body = if i % 2 == 0 { bhutan_impute() } else { json!(null) };
            post(&app, &uri, body).await
        }));
    }
    let mut versions = Vec::new();
    for t in tasks {
        let r = t.await.unwrap();
        if r.status == StatusCode::OK {
            versions.push(r.version.unwrap());
        }
    }
    versions.sort();
    let n = versions.len() as u64;
    assert_eq!(versions, (1..=n).collect::<Vec<_>>());
    let info = get(&app, &format!("/datasets/{id}")).await;
    assert_eq!(info.version, Some(n));
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServerConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let app = router(AppState::new(config.clone()));
    let id = upload(&app, SALARIES_CSV, None).await.json()["dataset_id"].as_str().unwrap().to_string();
    post(&app, &format!("/datasets/{id}/apply"), bhutan_impute()).await;
    post(
        &app,
        &format!("/datasets/{id}/apply"),
        json!({"kind": "delete_rows", "target": "Income|Degree=PhD", "scope": {"errors": "incomplete_group"}}),
    )
    .await;
    let r = post(&app, &format!("/datasets/{id}/flush"), json!(null)).await;
    assert_eq!(r.json()["records"], 2);
    let before = get(&app, &format!("/datasets/{id}")).await;

    let state = AppState::new(config);
    assert_eq!(state.recover_all().await.unwrap(), 1);
    let app = router(state);
    let after = get(&app, &format!("/datasets/{id}")).await;
    assert_eq!(after.json()["rows"], before.json()["rows"]);
    assert_eq!(after.json()["error_summary"], before.json()["error_summary"]);
    assert_eq!(after.json()["cursor"], 2);
}

#[test]
fn openapi_lists_every_route() {
    let doc: Value = serde_json::from_str(include_str!("../../../docs/openapi.json")).unwrap();
    let paths = doc["paths"].as_object().unwrap();
    for (method, path) in ROUTES {
        let op = &paths[*path][method.to_lowercase()];
        assert!(op.is_object(), "{method} {path} missing from docs/openapi.json");
    }
    let documented: usize = paths.values().map(|p| p.as_object().unwrap().len()).sum();
    assert_eq!(documented, ROUTES.len());
}
