//! Datasets, the active query session and the brush/frame pipeline.
//!
//! Mutations are serialized by a single writer lock and publish a new
//! immutable [`Live`] view through a watch channel, so readers never wait
//! on evaluation. Brush updates go through a second watch channel: a
//! worker task always evaluates the newest brush against the newest view
//! and broadcasts the resulting frame. Intermediate brushes that arrive
//! while an evaluation is running are never evaluated.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::Serialize;
use serde_json::json;
use tokio::sync::{broadcast, watch, Mutex};

use odcube_core::engine::{classify, eval_brush, BrushSpec, PointStatus};
use odcube_core::ingest::{parse_trips, ColumnMap, IngestReport, NeighborhoodSet, RejectPolicy};
use odcube_core::script::{Command, Outcome, Session};
use odcube_core::stats::compute_stats;
use odcube_core::{BBox, DatasetSnapshot, Error, TimeInterval};

use crate::codec::{self, PointGeometry, FLAG_BRUSH, FLAG_QUERIES, NO_COLOR};
use crate::error::ApiError;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Root for dataset paths given to `POST /datasets`.
    pub data_dir: Option<PathBuf>,
    pub neighborhoods: Arc<NeighborhoodSet>,
    /// Artificial delay added to every brush evaluation. Test hook.
    pub brush_delay: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetInfo {
    pub id: u32,
    pub n: usize,
    pub interval: TimeInterval,
    pub bbox: BBox,
    pub timezone: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<IngestReport>,
}

#[derive(Debug)]
pub struct Dataset {
    pub info: DatasetInfo,
    pub snapshot: Arc<DatasetSnapshot>,
    pub geometry: PointGeometry,
}

/// Consistent view of the active dataset and its committed queries.
#[derive(Debug, Clone)]
pub struct Live {
    pub dataset: Arc<Dataset>,
    pub session: Arc<Session>,
}

impl Live {
    pub fn revision(&self) -> u64 {
        self.session.revision()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BrushState {
    pub seq: u64,
    pub brush: Option<BrushSpec>,
}

/// One push to stream clients: a JSON control message followed by the
/// binary point buffer, both for the same (revision, brush seq).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub revision: u64,
    pub brush_seq: u64,
    pub control: String,
    pub points: Vec<u8>,
}

struct Inner {
    config: ServiceConfig,
    datasets: RwLock<BTreeMap<u32, Arc<Dataset>>>,
    next_dataset: AtomicU32,
    live: watch::Sender<Option<Live>>,
    brush: watch::Sender<BrushState>,
    frames: broadcast::Sender<Arc<Frame>>,
    writer: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Creates the state and starts the brush worker. Must run inside a
    /// tokio runtime.
    pub fn start(config: ServiceConfig) -> Self {
        let (live, live_rx) = watch::channel(None);
        let (brush, brush_rx) = watch::channel(BrushState::default());
        let (frames, _) = broadcast::channel(16);
        let state = AppState {
            inner: Arc::new(Inner {
                config,
                datasets: RwLock::new(BTreeMap::new()),
                next_dataset: AtomicU32::new(1),
                live,
                brush,
                frames: frames.clone(),
                writer: Mutex::new(()),
            }),
        };
        tokio::spawn(brush_worker(live_rx, brush_rx, frames, state.inner.config.brush_delay));
        state
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.inner.datasets.read().expect("dataset lock").values().map(|d| d.info.clone()).collect()
    }

    pub fn dataset(&self, id: u32) -> Result<DatasetInfo, ApiError> {
        self.inner
            .datasets
            .read()
            .expect("dataset lock")
            .get(&id)
            .map(|d| d.info.clone())
            .ok_or_else(|| ApiError::not_found(format!("dataset {id}")))
    }

    /// Registers a snapshot and makes it the active dataset with an empty
    /// query session.
    pub async fn add_dataset(&self, snapshot: DatasetSnapshot, report: Option<IngestReport>) -> DatasetInfo {
        let _w = self.inner.writer.lock().await;
        let id = self.inner.next_dataset.fetch_add(1, Ordering::Relaxed);
        let info = DatasetInfo {
            id,
            n: snapshot.len(),
            interval: snapshot.interval(),
            bbox: snapshot.bbox(),
            timezone: snapshot.timezone().name().to_string(),
            report,
        };
        let snapshot = Arc::new(snapshot);
        let geometry = {
            let s = snapshot.clone();
            tokio::task::spawn_blocking(move || PointGeometry::new(&s)).await.expect("geometry task")
        };
        let dataset = Arc::new(Dataset { info: info.clone(), snapshot: snapshot.clone(), geometry });
        self.inner.datasets.write().expect("dataset lock").insert(id, dataset.clone());
        let revision = self.inner.live.borrow().as_ref().map_or(0, |l| l.revision() + 1);
        let session = Session::new(snapshot)
            .with_neighborhoods(self.inner.config.neighborhoods.clone())
            .with_revision(revision);
        // brushes refer to the previous dataset; the new view triggers a frame
        self.inner.brush.send_if_modified(|b| {
            b.brush = None;
            false
        });
        self.inner.live.send_replace(Some(Live { dataset, session: Arc::new(session) }));
        info
    }

    /// Parses CSV text into a new active dataset.
    pub async fn ingest_csv(&self, csv: String, map: ColumnMap, policy: RejectPolicy) -> Result<DatasetInfo, ApiError> {
        let (snapshot, report) = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
            let tz = map.validate()?;
            let (records, report) = parse_trips(csv.as_bytes(), &map, policy)?;
            if records.is_empty() {
                return Err(ApiError::from(Error::EmptyDataset).with_report(report));
            }
            Ok((DatasetSnapshot::from_records(&records, tz, None)?, report))
        })
        .await
        .map_err(|e| ApiError::bad_request(format!("ingest task failed: {e}")))??;
        Ok(self.add_dataset(snapshot, Some(report)).await)
    }

    /// Resolves a client path inside the configured data directory.
    pub fn data_path(&self, rel: &str) -> Result<PathBuf, ApiError> {
        let root = self
            .inner
            .config
            .data_dir
            .as_ref()
            .ok_or_else(|| ApiError::bad_request("no data directory configured; set ODCUBE_DATA_DIR or upload csv"))?;
        let p = Path::new(rel);
        if p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(ApiError::bad_request(format!("{rel:?} must be a relative path inside the data directory")));
        }
        Ok(root.join(p))
    }

    pub fn live(&self) -> Result<Live, ApiError> {
        self.inner.live.borrow().clone().ok_or_else(|| ApiError::not_found("no dataset loaded"))
    }

    /// Applies one command as the single writer and publishes the result.
    pub async fn apply(&self, cmd: Command) -> Result<Outcome, ApiError> {
        let _w = self.inner.writer.lock().await;
        let live = self.live()?;
        let mut session = Session::clone(&live.session);
        let (session, outcome) = tokio::task::spawn_blocking(move || {
            let outcome = session.apply(&cmd);
            (session, outcome)
        })
        .await
        .map_err(|e| ApiError::bad_request(format!("command task failed: {e}")))?;
        let outcome = outcome?;
        if cmd_changes_view(&outcome, &live) {
            self.inner.live.send_replace(Some(Live { dataset: live.dataset, session: Arc::new(session) }));
        }
        Ok(outcome)
    }

    /// Accepts a brush update unless a newer sequence number was seen.
    pub fn set_brush(&self, seq: u64, brush: Option<BrushSpec>) -> bool {
        self.inner.brush.send_if_modified(|cur| {
            if seq <= cur.seq {
                return false;
            }
            *cur = BrushState { seq, brush };
            true
        })
    }

    pub fn brush(&self) -> BrushState {
        self.inner.brush.borrow().clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Frame>> {
        self.inner.frames.subscribe()
    }

    /// Frame for the current view and brush, built on demand.
    pub async fn current_frame(&self) -> Result<Frame, ApiError> {
        let live = self.live()?;
        let brush = self.brush();
        tokio::task::spawn_blocking(move || build_frame(&live, &brush, None))
            .await
            .map_err(|e| ApiError::bad_request(format!("frame task failed: {e}")))
    }
}

fn cmd_changes_view(outcome: &Outcome, live: &Live) -> bool {
    outcome.revision != live.revision()
}

/// Status, colors and counts for one (view, brush) pair. `prev_revision`
/// is the revision of the previous frame; query stats are included only
/// when it differs.
pub fn build_frame(live: &Live, brush: &BrushState, prev_revision: Option<u64>) -> Frame {
    let session = &live.session;
    let snapshot = &live.dataset.snapshot;
    let manager = session.manager();
    let n = snapshot.len();
    let visible = manager.visible_masks();
    let masks: Vec<_> = visible.iter().map(|(m, _)| *m).collect();
    let brush_mask = brush.brush.as_ref().map(|b| eval_brush(snapshot, b));
    let status = classify(manager.global_mask(), &masks, brush_mask.as_ref()).expect("masks sized to snapshot");
    let mut colors = vec![NO_COLOR; n];
    for (mask, color) in &visible {
        for i in mask.iter_ones() {
            if colors[i] == NO_COLOR {
                colors[i] = *color;
            }
        }
    }
    let mut flags = 0;
    if brush_mask.is_some() {
        flags |= FLAG_BRUSH;
    }
    if !visible.is_empty() {
        flags |= FLAG_QUERIES;
    }
    let revision = session.revision();
    let points = codec::encode(&live.dataset.geometry, &status, &colors, revision, flags);
    let brushed = brush_mask.map(|mut m| {
        m.and_assign(manager.global_mask()).expect("same snapshot");
        compute_stats(snapshot, &m).expect("mask sized to snapshot")
    });
    let mut control = json!({
        "type": "frame",
        "revision": revision,
        "brush_seq": brush.seq,
        "n": n,
        "counts": {
            "filtered_out": status.count(PointStatus::FilteredOut),
            "visible": status.count(PointStatus::Visible),
            "highlighted": status.count(PointStatus::Highlighted),
            "brushed": status.count(PointStatus::Brushed),
        },
        "brush": brushed,
        "bytes": points.len(),
    });
    if prev_revision != Some(revision) {
        let queries: Vec<_> = manager
            .specs()
            .map(|s| {
                json!({
                    "id": s.id,
                    "color": s.color,
                    "visible": s.visible,
                    "stats": manager.result(s.id).expect("live id").stats,
                })
            })
            .collect();
        control["queries"] = json!(queries);
    }
    Frame { revision, brush_seq: brush.seq, control: control.to_string(), points }
}

async fn brush_worker(
    mut live_rx: watch::Receiver<Option<Live>>,
    mut brush_rx: watch::Receiver<BrushState>,
    frames: broadcast::Sender<Arc<Frame>>,
    delay: Duration,
) {
    let mut last: Option<(u64, u64)> = None;
    loop {
        tokio::select! {
            r = live_rx.changed() => if r.is_err() { break },
            r = brush_rx.changed() => if r.is_err() { break },
        }
        let Some(live) = live_rx.borrow_and_update().clone() else { continue };
        let brush = brush_rx.borrow_and_update().clone();
        let key = (live.revision(), brush.seq);
        if last == Some(key) {
            continue;
        }
        let prev_revision = last.map(|(r, _)| r);
        let frame = tokio::task::spawn_blocking(move || {
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            build_frame(&live, &brush, prev_revision)
        })
        .await;
        match frame {
            Ok(f) => {
                last = Some(key);
                log::debug!("frame revision {} brush {}", f.revision, f.brush_seq);
                // no subscribers is fine
                let _ = frames.send(Arc::new(f));
            }
            Err(e) => log::error!("brush evaluation failed: {e}"),
        }
    }
}
