//! HTTP routes and the `/session` stream.

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use odcube_core::aggregate::{Measure, TimeGranularity};
use odcube_core::engine::BrushSpec;
use odcube_core::ingest::{load_trips, ColumnMap, RejectPolicy};
use odcube_core::script::{AggregateRequest, Command, Outcome, TargetRef};
use odcube_core::{Attribute, EventKind, TimeInterval};

use crate::error::ApiError;
use crate::state::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/:id", get(get_dataset))
        .route("/queries", get(list_queries).post(create_query))
        .route("/queries/link", post(link_queries))
        .route("/queries/merge", post(merge_queries))
        .route("/queries/recurrence", post(recur_queries))
        .route("/queries/:id", get(get_query).patch(update_query).delete(delete_query))
        .route("/queries/:id/duplicate", post(duplicate_query))
        .route("/queries/:id/revert", post(revert_query))
        .route("/queries/:id/demerge", post(demerge_query))
        .route("/constraints", get(get_constraints).put(put_constraints))
        .route("/commands", post(run_command))
        .route("/aggregates/:kind", get(get_aggregate))
        .route("/neighborhoods", get(get_neighborhoods))
        .route("/points", get(get_points))
        .route("/session", get(session_stream))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRequest {
    #[serde(default)]
    path: Option<String>,
    /// CSV text uploaded inline.
    #[serde(default)]
    csv: Option<String>,
    #[serde(default)]
    column_map: Option<ColumnMap>,
    #[serde(default)]
    reject: RejectPolicy,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn list_datasets(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "datasets": state.datasets() }))
}

async fn get_dataset(State(state): State<AppState>, Path(id): Path<u32>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(state.dataset(id)?)))
}

async fn create_dataset(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: DatasetRequest = parse_body(&body)?;
    let map = req.column_map.unwrap_or_else(ColumnMap::canonical);
    let info = match (req.path, req.csv) {
        (Some(path), None) => {
            let full = state.data_path(&path)?;
            let policy = req.reject;
            let (snapshot, report) = tokio::task::spawn_blocking(move || load_trips(&full, &map, policy))
                .await
                .map_err(|e| ApiError::bad_request(format!("ingest task failed: {e}")))??;
            state.add_dataset(snapshot, Some(report)).await
        }
        (None, Some(csv)) => state.ingest_csv(csv, map, req.reject).await?,
        _ => return Err(ApiError::bad_request("give exactly one of path or csv")),
    };
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn list_queries(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let live = state.live()?;
    Ok(Json(json!({ "revision": live.revision(), "queries": live.session.reports() })))
}

async fn get_query(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let live = state.live()?;
    let report = live.session.report(odcube_core::manager::QueryId(id))?;
    let mut v = json!(report);
    v["revision"] = json!(live.revision());
    Ok(Json(v))
}

/// Builds a command from a JSON object body plus fields taken from the
/// route, so HTTP bodies and script commands share one schema.
fn command(op: &str, body: &[u8], extra: &[(&str, Value)]) -> ApiResult<Command> {
    let mut obj: serde_json::Map<String, Value> = parse_body(body)?;
    obj.insert("op".into(), json!(op));
    for (k, v) in extra {
        obj.insert((*k).into(), v.clone());
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| ApiError::bad_request(format!("invalid {op} request: {e}")))
}

fn outcome(status: StatusCode, o: Outcome) -> Response {
    (status, Json(o)).into_response()
}

async fn create_query(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("create", &body, &[])?;
    Ok(outcome(StatusCode::CREATED, state.apply(cmd).await?))
}

async fn update_query(State(state): State<AppState>, Path(id): Path<u64>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("update", &body, &[("query", json!(id))])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

async fn delete_query(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Response> {
    let cmd = command("delete", b"{}", &[("query", json!(id))])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

async fn duplicate_query(State(state): State<AppState>, Path(id): Path<u64>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("duplicate", &body, &[("query", json!(id))])?;
    Ok(outcome(StatusCode::CREATED, state.apply(cmd).await?))
}

async fn revert_query(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Response> {
    let cmd = command("revert", b"{}", &[("query", json!(id))])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

async fn demerge_query(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Response> {
    let cmd = command("demerge", b"{}", &[("query", json!(id))])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

async fn link_queries(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("link", &body, &[])?;
    Ok(outcome(StatusCode::CREATED, state.apply(cmd).await?))
}

async fn merge_queries(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("merge", &body, &[])?;
    Ok(outcome(StatusCode::CREATED, state.apply(cmd).await?))
}

async fn recur_queries(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("recur", &body, &[])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

async fn get_constraints(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let live = state.live()?;
    Ok(Json(json!({ "revision": live.revision(), "constraints": live.session.manager().constraints() })))
}

async fn put_constraints(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd = command("constrain", &body, &[])?;
    Ok(outcome(StatusCode::OK, state.apply(cmd).await?))
}

/// Any script command. Export results are returned inline by file name.
async fn run_command(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let cmd: Command = parse_body(&body)?;
    let out = state.apply(cmd).await?;
    let mut v = json!(out);
    if !out.files.is_empty() {
        let files: serde_json::Map<String, Value> = out
            .files
            .iter()
            .map(|(k, bytes)| (k.clone(), json!(String::from_utf8_lossy(bytes))))
            .collect();
        v["files"] = Value::Object(files);
    }
    Ok(Json(v).into_response())
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| v.parse::<T>().map_err(|e| ApiError::bad_request(format!("parameter {key}: {e}"))))
        .transpose()
}

fn span_param(q: &HashMap<String, String>) -> ApiResult<Option<TimeInterval>> {
    let Some(raw) = q.get("span") else { return Ok(None) };
    let (a, b) = raw.split_once(',').ok_or_else(|| ApiError::bad_request("span must be start,end in epoch seconds"))?;
    let parse = |s: &str| s.trim().parse::<i64>().map_err(|e| ApiError::bad_request(format!("span: {e}")));
    Ok(Some(TimeInterval::from_seconds(parse(a)?, parse(b)?)?))
}

async fn get_aggregate(
    State(state): State<AppState>,
    Path(kind): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let query: TargetRef = param(&q, "query")?.unwrap_or(TargetRef::All);
    let event: EventKind = param(&q, "kind")?.unwrap_or_default();
    let name = kind.clone();
    let req = match kind.as_str() {
        "timeseries" => AggregateRequest::Timeseries {
            name,
            query,
            span: span_param(&q)?,
            granularity: param::<TimeGranularity>(&q, "granularity")?,
            measure: param::<Measure>(&q, "measure")?.unwrap_or(Measure::Count),
            kind: event,
        },
        "histogram" => AggregateRequest::Histogram {
            name,
            query,
            attribute: param::<Attribute>(&q, "attribute")?.unwrap_or(Attribute::Fare),
            bins: param(&q, "bins")?.unwrap_or(20),
        },
        "choropleth" => AggregateRequest::Choropleth { name, query, kind: event },
        "stack" => AggregateRequest::Stack {
            name,
            query,
            region: q.get("region").cloned().ok_or_else(|| ApiError::bad_request("stack needs a region"))?,
            span: span_param(&q)?,
            kind: event,
        },
        other => return Err(ApiError::not_found(format!("aggregate {other:?}"))),
    };
    let live = state.live()?;
    let agg = tokio::task::spawn_blocking(move || live.session.aggregate(&req).map(|a| (a, live.revision())))
        .await
        .map_err(|e| ApiError::bad_request(format!("aggregate task failed: {e}")))??;
    let mut v = json!(agg.0);
    v["revision"] = json!(agg.1);
    Ok(Json(v))
}

async fn get_neighborhoods(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "regions": state.config().neighborhoods.regions() }))
}

async fn get_points(State(state): State<AppState>) -> ApiResult<Response> {
    let frame = state.current_frame().await?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_string()),
            (header::HeaderName::from_static("x-odcube-revision"), frame.revision.to_string()),
        ],
        frame.points,
    )
        .into_response())
}

/// Client to server stream messages.
#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ClientMessage {
    /// `brush: null` clears the brush.
    Brush { seq: u64, brush: Option<BrushSpec> },
}

async fn session_stream(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| stream_client(socket, state))
}

async fn stream_client(socket: WebSocket, state: AppState) {
    let (mut tx, mut rx) = socket.split();
    let mut frames = state.subscribe();
    loop {
        tokio::select! {
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    match serde_json::from_str::<ClientMessage>(&text) {
                        Ok(ClientMessage::Brush { seq, brush }) => {
                            if !state.set_brush(seq, brush) {
                                log::debug!("stale brush {seq} dropped");
                            }
                        }
                        Err(e) => {
                            let err = json!({ "type": "error", "message": format!("malformed message: {e}") });
                            if tx.send(Message::Text(err.to_string())).await.is_err() {
                                break;
                            }
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            frame = frames.recv() => match frame {
                Ok(f) => {
                    if tx.send(Message::Text(f.control.clone())).await.is_err()
                        || tx.send(Message::Binary(f.points.clone())).await.is_err()
                    {
                        break;
                    }
                }
                Err(RecvError::Lagged(skipped)) => log::debug!("stream client skipped {skipped} frames"),
                Err(RecvError::Closed) => break,
            },
        }
    }
}
