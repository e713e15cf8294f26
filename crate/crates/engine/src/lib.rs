//! Execution layer for per-frame analysis.
//!
//! Three executors share one task model: a task is submitted, runs on a
//! compute worker, and its result is published exactly once, either inline
//! in the task registry or in the [`ObjectStore`] when it is large. Failed
//! attempts (including worker panics) are retried up to `max_retries`.
//!
//! * [`ExecutorKind::Serial`]: one compute worker.
//! * [`ExecutorKind::MasterSlave`]: a controller and a router thread occupy
//!   two of the slots and never run pipeline work; the rest are workers.
//! * [`ExecutorKind::WorkerPerCore`]: every slot is a worker; the submitting
//!   thread only submits and collects.

pub mod batch;
pub mod bench;
mod executor;
mod store;

pub use batch::{
    run_batch, run_batch_with, run_tasks, run_tasks_with, BatchOutput, BatchStats, BusySample, FrameFailure, FrameTask,
    SAMPLE_INTERVAL,
};
pub use executor::{
    host_slots, BusyGauge, EngineError, Executor, ExecutorConfig, ExecutorKind, FaultPolicy, TaskFn, TaskId, TaskSpec,
    DEFAULT_MAX_RETRIES,
};
pub use store::{ObjectId, ObjectRef, ObjectStore, Placement, StoreError, StoreValue, INLINE_THRESHOLD};
