//! Live annotation queue.
//!
//! The protocol's collection step becomes a queue of annotation tasks that
//! annotators drain over HTTP. The service holds one run at a time. The
//! protocol side talks to it through [`LiveQueue`], an
//! [`AnnotationSource`](prefeval_core::protocol::AnnotationSource) that opens
//! one batch per round and blocks until every task of the batch is rated or a
//! wall-clock timeout passes.
//!
//! Annotator endpoints:
//!
//! - `GET /api/task/next`: assign the oldest pending task (204 when none).
//! - `POST /api/task/{id}/rating` with `{"outcome": ">" | "=" | "<"}`.
//! - `GET /api/status`: round, budget, undecided pairs and pending tasks.
//!
//! Protocol endpoints live under `/api/run/`.

pub mod api;
pub mod catalog;
pub mod clock;
pub mod live;
pub mod queue;
pub mod server;

pub use catalog::{CatalogItem, SampleCatalog};
pub use clock::{Clock, ManualClock, SystemClock};
pub use live::{drive_live, LiveQueue};
pub use queue::{AnnotationTask, Queue, QueueError, TaskStatus, DEFAULT_LEASE};
pub use server::{router, spawn, ServerHandle, ServiceConfig};
