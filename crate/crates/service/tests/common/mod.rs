#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use odcube_core::geo::PlanePoint;
use odcube_core::ingest::{Neighborhood, NeighborhoodSet};
use odcube_core::synth::{synthetic_snapshot, SynthConfig};
use odcube_core::{DatasetSnapshot, Polygon};
use odcube_service::{AppState, ServiceConfig};

pub struct Server {
    pub base: String,
    pub ws: String,
    pub state: AppState,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn snapshot(n: usize) -> DatasetSnapshot {
    synthetic_snapshot(&SynthConfig { n, seed: 17, ..SynthConfig::default() })
}

/// Two side-by-side halves of the synthetic extent.
pub fn halves(s: &DatasetSnapshot) -> NeighborhoodSet {
    let b = s.bbox().expanded(1.0);
    let mid = (b.min_x + b.max_x) / 2.0;
    let rect = |x0: f64, x1: f64| {
        Polygon::new(vec![
            PlanePoint::new(x0, b.min_y),
            PlanePoint::new(x1, b.min_y),
            PlanePoint::new(x1, b.max_y),
            PlanePoint::new(x0, b.max_y),
        ])
        .unwrap()
    };
    NeighborhoodSet::new(vec![
        Neighborhood { name: "west".into(), polygon: rect(b.min_x, mid) },
        Neighborhood { name: "east".into(), polygon: rect(mid, b.max_x) },
    ])
    .unwrap()
}

pub async fn start(config: ServiceConfig, dataset: Option<DatasetSnapshot>) -> Server {
    let state = AppState::start(config);
    if let Some(s) = dataset {
        // let the load frame go out before any client subscribes
        let mut frames = state.subscribe();
        state.add_dataset(s, None).await;
        tokio::time::timeout(Duration::from_secs(30), frames.recv()).await.unwrap().unwrap();
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let st = state.clone();
    tokio::spawn(async move {
        odcube_service::serve(listener, st, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Server { base: format!("http://{addr}"), ws: format!("ws://{addr}/session"), state, shutdown: Some(tx) }
}

pub async fn start_default(n: usize) -> Server {
    let s = snapshot(n);
    let config = ServiceConfig { neighborhoods: Arc::new(halves(&s)), ..ServiceConfig::default() };
    start(config, Some(s)).await
}

pub fn config_with_delay(delay: Duration) -> ServiceConfig {
    ServiceConfig { brush_delay: delay, ..ServiceConfig::default() }
}
