mod common;

use reqwest::StatusCode;
use serde_json::{json, Value};

use odcube_core::engine::{classify, PointStatus};
use odcube_service::codec::{decode, HEADER_LEN, POINT_LEN};
use odcube_service::ServiceConfig;

async fn post(base: &str, path: &str, body: Value) -> (StatusCode, Value) {
    let r = reqwest::Client::new().post(format!("{base}{path}")).json(&body).send().await.unwrap();
    let status = r.status();
    (status, r.json().await.unwrap_or(Value::Null))
}

async fn get(base: &str, path: &str) -> (StatusCode, Value) {
    let r = reqwest::get(format!("{base}{path}")).await.unwrap();
    let status = r.status();
    (status, r.json().await.unwrap_or(Value::Null))
}

fn ids(outcome: &Value) -> Vec<u64> {
    outcome["queries"].as_array().unwrap().iter().map(|q| q["id"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn health_and_metadata() {
    let srv = common::start_default(500).await;
    let (st, body) = get(&srv.base, "/health").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    let (st, body) = get(&srv.base, "/datasets/1").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["n"], 500);
    assert_eq!(body["timezone"], "America/New_York");
    assert_eq!(get(&srv.base, "/datasets/9").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn no_dataset_means_not_found() {
    let srv = common::start(ServiceConfig::default(), None).await;
    assert_eq!(get(&srv.base, "/queries").await.0, StatusCode::NOT_FOUND);
    assert_eq!(post(&srv.base, "/queries", json!({})).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn dataset_upload_and_schema_errors() {
    let srv = common::start(
        ServiceConfig { data_dir: Some(common::fixtures()), ..ServiceConfig::default() },
        None,
    )
    .await;
    let csv = std::fs::read_to_string(common::fixtures().join("trips_small.csv")).unwrap();
    let (st, body) = post(&srv.base, "/datasets", json!({ "csv": csv })).await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    assert_eq!(body["n"], 5);
    assert_eq!(body["report"]["rejected"], 0);

    let vendor_map: Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures().join("column_map_vendor.json")).unwrap())
            .unwrap();
    let (st, body) = post(&srv.base, "/datasets", json!({ "path": "trips_vendor.csv", "column_map": vendor_map })).await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    assert_eq!(body["n"], 2);
    assert_eq!(body["report"]["reasons"][0]["row"], 3);

    let bad_map: Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures().join("column_map_bad.json")).unwrap())
            .unwrap();
    let (st, body) = post(&srv.base, "/datasets", json!({ "csv": csv, "column_map": bad_map })).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "schema");

    let (st, _) = post(&srv.base, "/datasets", json!({ "path": "../Cargo.toml" })).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let junk = "pickup_time,dropoff_time,pickup_lon,pickup_lat,dropoff_lon,dropoff_lat,duration_s,distance,fare,passengers\nx,y,0,0,0,0,1,1,1,1\n";
    let (st, body) = post(&srv.base, "/datasets", json!({ "csv": junk })).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["report"]["rejected"], 1);

    let (_, list) = get(&srv.base, "/datasets").await;
    assert_eq!(list["datasets"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn query_lifecycle() {
    let srv = common::start_default(2000).await;
    let b = srv.state.live().unwrap().dataset.snapshot.bbox();
    let west = json!([[b.min_x - 1.0, b.min_y - 1.0], [(b.min_x + b.max_x) / 2.0, b.min_y - 1.0], [(b.min_x + b.max_x) / 2.0, b.max_y + 1.0], [b.min_x - 1.0, b.max_y + 1.0]]);

    let (st, a) = post(&srv.base, "/queries", json!({ "prism": { "polygon": west }, "kind": "origin" })).await;
    assert_eq!(st, StatusCode::CREATED, "{a}");
    assert_eq!(a["queries"][0]["color"], 0);
    assert_eq!(a["revision"], 1);
    let (_, d) = post(&srv.base, "/queries", json!({ "kind": "destination" })).await;
    assert_eq!(d["queries"][0]["color"], 1);
    let (a_id, d_id) = (ids(&a)[0], ids(&d)[0]);
    let a_count = a["queries"][0]["stats"]["count"].as_u64().unwrap();

    let (st, linked) = post(&srv.base, "/queries/link", json!({ "origin": a_id, "destination": d_id })).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(linked["retired"], json!([a_id, d_id]));
    let dir_id = ids(&linked)[0];
    assert_eq!(linked["queries"][0]["variant"], "directional");
    assert_eq!(linked["queries"][0]["stats"]["count"].as_u64().unwrap(), a_count);
    assert_eq!(get(&srv.base, &format!("/queries/{a_id}")).await.0, StatusCode::NOT_FOUND);

    // linking a directional query is an illegal composition
    let (_, e) = post(&srv.base, "/queries", json!({})).await;
    let (st, body) = post(&srv.base, "/queries/link", json!({ "origin": dir_id, "destination": ids(&e)[0] })).await;
    assert_eq!(st, StatusCode::CONFLICT, "{body}");

    let (st, reverted) = post(&srv.base, &format!("/queries/{dir_id}/revert"), json!(null)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(ids(&reverted), vec![a_id, d_id]);
    assert_eq!(reverted["queries"][0]["stats"]["count"].as_u64().unwrap(), a_count);

    let (_, merged) = post(&srv.base, "/queries/merge", json!({ "queries": [a_id, d_id] })).await;
    let m_id = ids(&merged)[0];
    let (_, restored) = post(&srv.base, &format!("/queries/{m_id}/demerge"), json!(null)).await;
    assert_eq!(ids(&restored), vec![a_id, d_id]);
    assert_eq!(restored["queries"][0]["stats"]["count"].as_u64().unwrap(), a_count);

    let r = reqwest::Client::new()
        .patch(format!("{}/queries/{a_id}", srv.base))
        .json(&json!({ "kind": "destination" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);

    let (st, rec) =
        post(&srv.base, "/queries/recurrence", json!({ "target": "all", "pattern": { "weekdays": ["sat", "sun"] } })).await;
    assert_eq!(st, StatusCode::OK, "{rec}");
    assert_eq!(rec["queries"].as_array().unwrap().len(), 3);
    // Saturday and Sunday form one contiguous weekend slice
    let slices = rec["queries"][0]["slices"]["prisms"][0]["slices"].as_array().unwrap();
    assert_eq!(slices.len(), 1);
    assert_eq!(slices[0][1].as_i64().unwrap() - slices[0][0].as_i64().unwrap(), 2 * 86_400);

    let r = reqwest::Client::new()
        .put(format!("{}/constraints", srv.base))
        .json(&json!({ "constraints": [{ "attribute": "fare", "max": 10.0 }] }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);

    let r = reqwest::Client::new().delete(format!("{}/queries/{a_id}", srv.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let r = reqwest::Client::new().delete(format!("{}/queries/{a_id}", srv.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);

    let (st, body) = post(&srv.base, "/queries", json!({ "prism": { "polygon": [[0, 0], [1, 1]] } })).await;
    assert_eq!(st, StatusCode::BAD_REQUEST, "{body}");
    let (st, _) = post(&srv.base, "/queries", json!({ "bogus": 1 })).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn aggregates() {
    let srv = common::start_default(3000).await;
    let iv = srv.state.live().unwrap().dataset.snapshot.interval();
    let (_, empty) = post(&srv.base, "/queries", json!({ "prism": { "interval": [iv.start().seconds(), iv.start().seconds()] } })).await;
    let q = ids(&empty)[0];

    let (st, ts) = get(&srv.base, &format!("/aggregates/timeseries?query={q}")).await;
    assert_eq!(st, StatusCode::OK, "{ts}");
    assert_eq!(ts["granularity"], "hour");
    assert!(ts["buckets"].as_array().unwrap().iter().all(|b| b["value"] == 0.0));

    let (_, all) = get(&srv.base, "/aggregates/timeseries?query=all&measure=mean:fare").await;
    assert_eq!(all["measure"], json!({ "mean": "fare" }));

    let (_, choro) = get(&srv.base, "/aggregates/choropleth?kind=destination").await;
    let regions = choro["regions"].as_array().unwrap();
    let total: u64 = regions.iter().map(|r| r["count"].as_u64().unwrap()).sum::<u64>() + choro["unassigned"].as_u64().unwrap();
    assert_eq!(total, 3000);
    let (_, stack) = get(&srv.base, "/aggregates/stack?region=east&kind=destination").await;
    let stack_sum: f64 = stack["series"]["buckets"].as_array().unwrap().iter().map(|b| b["value"].as_f64().unwrap()).sum();
    let east = regions.iter().find(|r| r["name"] == "east").unwrap()["count"].as_u64().unwrap();
    assert_eq!(stack_sum as u64, east);

    let (_, h) = get(&srv.base, "/aggregates/histogram?attribute=distance&bins=7").await;
    assert_eq!(h["bins"].as_array().unwrap().len(), 7);

    assert_eq!(get(&srv.base, "/aggregates/stack?region=nowhere").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&srv.base, "/aggregates/pie").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&srv.base, "/aggregates/timeseries?query=77").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&srv.base, "/aggregates/timeseries?measure=median").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn point_buffer_matches_session_state() {
    let srv = common::start_default(1000).await;
    let b = srv.state.live().unwrap().dataset.snapshot.bbox();
    let ring = json!([[b.min_x, b.min_y], [b.max_x, b.min_y], [b.min_x, b.max_y]]);
    post(&srv.base, "/queries", json!({ "prism": { "polygon": ring }, "kind": "either" })).await;
    let r = reqwest::get(format!("{}/points", srv.base)).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let revision: u64 = r.headers()["x-odcube-revision"].to_str().unwrap().parse().unwrap();
    let bytes = r.bytes().await.unwrap();
    assert_eq!(bytes.len(), HEADER_LEN + 2 * 1000 * POINT_LEN);
    let (header, points) = decode(&bytes).unwrap();
    assert_eq!(header.revision, revision);
    assert_eq!(header.n, 1000);

    let live = srv.state.live().unwrap();
    let masks: Vec<_> = live.session.manager().visible_masks().into_iter().map(|(m, _)| m).collect();
    let want = classify(live.session.manager().global_mask(), &masks, None).unwrap();
    for (i, p) in points.iter().enumerate() {
        assert_eq!(p.status, want.point(i) as u8);
        let highlighted = want.point(i) == PointStatus::Highlighted;
        assert_eq!(p.color == 0, highlighted);
    }
}
