use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{select, unbounded, Sender};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{next_owner_id, placement_for, ObjectId, ObjectRef, ObjectStore, Placement, StoreError, StoreValue};

pub type TaskId = u64;

/// A task body. Must be pure: it may run more than once for the same input.
pub type TaskFn<I, O> = Arc<dyn Fn(&I) -> Result<O, String> + Send + Sync>;

pub const DEFAULT_MAX_RETRIES: u32 = 3;

/// Logical processors reported by the host.
pub fn host_slots() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorKind {
    Serial,
    MasterSlave,
    WorkerPerCore,
}

impl ExecutorKind {
    pub const ALL: [ExecutorKind; 3] = [ExecutorKind::Serial, ExecutorKind::MasterSlave, ExecutorKind::WorkerPerCore];

    pub fn name(self) -> &'static str {
        match self {
            ExecutorKind::Serial => "serial",
            ExecutorKind::MasterSlave => "master_slave",
            ExecutorKind::WorkerPerCore => "worker_per_core",
        }
    }

    /// Compute workers available on `total_slots` slots.
    pub fn compute_workers(self, total_slots: usize) -> usize {
        match self {
            ExecutorKind::Serial => 1,
            ExecutorKind::MasterSlave => total_slots.saturating_sub(2).max(1),
            ExecutorKind::WorkerPerCore => total_slots.max(1),
        }
    }
}

impl fmt::Display for ExecutorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExecutorKind {
    type Err = String;

    /// Accepts both `master_slave` and `master-slave` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "serial" => Ok(ExecutorKind::Serial),
            "master_slave" => Ok(ExecutorKind::MasterSlave),
            "worker_per_core" => Ok(ExecutorKind::WorkerPerCore),
            other => Err(format!(
                "unknown executor '{other}' (expected serial, master-slave or worker-per-core)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub kind: ExecutorKind,
    pub total_slots: usize,
    pub max_retries: u32,
}

impl ExecutorConfig {
    pub fn new(kind: ExecutorKind, total_slots: usize) -> Self {
        Self {
            kind,
            total_slots,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn workers(&self) -> usize {
        self.kind.compute_workers(self.total_slots)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("executor is shut down")]
    Shutdown,
    #[error("timed out waiting for task {0}")]
    Timeout(TaskId),
    #[error("task {task_id} failed after {attempts} attempts: {last_error}")]
    TaskFailed {
        task_id: TaskId,
        attempts: u32,
        last_error: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid executor configuration: {0}")]
    Config(String),
}

/// One attempt of one task.
#[derive(Debug)]
pub struct TaskSpec<I> {
    pub task_id: TaskId,
    pub input: Arc<I>,
    /// 1-based; never exceeds `max_retries + 1`.
    pub attempt: u32,
}

impl<I> Clone for TaskSpec<I> {
    fn clone(&self) -> Self {
        Self {
            task_id: self.task_id,
            input: self.input.clone(),
            attempt: self.attempt,
        }
    }
}

/// Simulated worker loss: selected attempts fail before running the task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultPolicy {
    pub kill_fraction: f64,
    /// Only first attempts can be killed; otherwise every attempt is drawn
    /// independently.
    pub once: bool,
}

impl FaultPolicy {
    fn kills(&self, task_id: TaskId, attempt: u32) -> bool {
        if self.kill_fraction <= 0.0 || (self.once && attempt > 1) {
            return false;
        }
        let h = splitmix64(task_id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(attempt));
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.kill_fraction
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Busy-worker counters, shared with samplers.
#[derive(Debug, Default)]
pub struct BusyGauge {
    busy: AtomicUsize,
    peak: AtomicUsize,
}

impl BusyGauge {
    pub fn busy(&self) -> usize {
        self.busy.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        let now = self.busy.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.busy.fetch_sub(1, Ordering::SeqCst);
    }
}

enum TaskState<O> {
    Pending,
    Inline(O),
    Stored(ObjectRef),
    Failed(String),
}

struct TaskEntry<O> {
    state: TaskState<O>,
    attempts: u32,
    settled_at: Option<Instant>,
}

struct Registry<O> {
    tasks: HashMap<TaskId, TaskEntry<O>>,
    pending: usize,
    closed: bool,
}

struct Shared<I, O> {
    owner: u64,
    func: TaskFn<I, O>,
    max_retries: u32,
    registry: Mutex<Registry<O>>,
    settled: Condvar,
    store: ObjectStore<O>,
    gauge: Arc<BusyGauge>,
    fault: Mutex<Option<FaultPolicy>>,
    executions: AtomicU64,
}

impl<I, O: StoreValue> Shared<I, O> {
    fn execute(&self, spec: &TaskSpec<I>) -> Result<O, String> {
        self.executions.fetch_add(1, Ordering::Relaxed);
        if let Some(entry) = self.registry.lock().tasks.get_mut(&spec.task_id) {
            entry.attempts = entry.attempts.max(spec.attempt);
        }
        let fault = *self.fault.lock();
        if fault.is_some_and(|f| f.kills(spec.task_id, spec.attempt)) {
            return Err("worker lost (injected fault)".into());
        }
        self.gauge.enter();
        let outcome = catch_unwind(AssertUnwindSafe(|| (self.func)(&spec.input)));
        self.gauge.leave();
        outcome.unwrap_or_else(|payload| Err(format!("worker panicked: {}", panic_message(&*payload))))
    }

    /// Publishes a final outcome, or returns the next attempt to schedule.
    fn settle(&self, spec: TaskSpec<I>, outcome: Result<O, String>) -> Option<TaskSpec<I>> {
        let state = match outcome {
            Ok(value) => {
                let size = value.size_bytes();
                if placement_for(size) == Placement::Stored {
                    TaskState::Stored(self.store.put(value))
                } else {
                    TaskState::Inline(value)
                }
            }
            Err(_) if spec.attempt <= self.max_retries => {
                return Some(TaskSpec {
                    attempt: spec.attempt + 1,
                    ..spec
                });
            }
            Err(e) => TaskState::Failed(e),
        };
        let mut reg = self.registry.lock();
        let reg = &mut *reg;
        if let Some(entry) = reg.tasks.get_mut(&spec.task_id) {
            // first outcome wins
            if matches!(entry.state, TaskState::Pending) {
                entry.state = state;
                entry.settled_at = Some(Instant::now());
                reg.pending -= 1;
                self.settled.notify_all();
            }
        }
        None
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_owned()
    }
}

enum Msg<I> {
    Task(TaskSpec<I>),
    Stop,
}

/// Runs one task function over submitted inputs on a fixed set of workers.
pub struct Executor<I, O> {
    config: ExecutorConfig,
    shared: Arc<Shared<I, O>>,
    inbox: Sender<Msg<I>>,
    stop_messages: usize,
    threads: Mutex<Vec<JoinHandle<()>>>,
    next_id: AtomicU64,
    stopped: AtomicBool,
}

impl<I, O> Executor<I, O>
where
    I: Send + Sync + 'static,
    O: StoreValue + Clone + Send + Sync + 'static,
{
    pub fn new(config: ExecutorConfig, func: TaskFn<I, O>) -> Result<Self, EngineError> {
        if config.total_slots == 0 {
            return Err(EngineError::Config("total_slots must be at least 1".into()));
        }
        let shared = Arc::new(Shared {
            owner: next_owner_id(),
            func,
            max_retries: config.max_retries,
            registry: Mutex::new(Registry {
                tasks: HashMap::new(),
                pending: 0,
                closed: false,
            }),
            settled: Condvar::new(),
            store: ObjectStore::new(),
            gauge: Arc::new(BusyGauge::default()),
            fault: Mutex::new(None),
            executions: AtomicU64::new(0),
        });
        let workers = config.workers();
        let (inbox, threads, stop_messages) = match config.kind {
            ExecutorKind::Serial | ExecutorKind::WorkerPerCore => spawn_pool(&shared, workers),
            ExecutorKind::MasterSlave => spawn_master_slave(&shared, workers),
        };
        Ok(Self {
            config,
            shared,
            inbox,
            stop_messages,
            threads: Mutex::new(threads),
            next_id: AtomicU64::new(0),
            stopped: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn kind(&self) -> ExecutorKind {
        self.config.kind
    }

    pub fn workers(&self) -> usize {
        self.config.workers()
    }

    pub fn gauge(&self) -> Arc<BusyGauge> {
        self.shared.gauge.clone()
    }

    /// Total attempts started, including injected failures.
    pub fn executions(&self) -> u64 {
        self.shared.executions.load(Ordering::Relaxed)
    }

    #[cfg(feature = "fault-injection")]
    pub fn inject_fault(&self, policy: FaultPolicy) {
        *self.shared.fault.lock() = Some(policy);
    }

    pub fn submit(&self, input: I) -> Result<ObjectRef, EngineError> {
        let task_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        {
            let mut reg = self.shared.registry.lock();
            if reg.closed {
                return Err(EngineError::Shutdown);
            }
            reg.tasks.insert(
                task_id,
                TaskEntry {
                    state: TaskState::Pending,
                    attempts: 0,
                    settled_at: None,
                },
            );
            reg.pending += 1;
        }
        let spec = TaskSpec {
            task_id,
            input: Arc::new(input),
            attempt: 1,
        };
        self.inbox.send(Msg::Task(spec)).map_err(|_| EngineError::Shutdown)?;
        Ok(ObjectRef {
            id: ObjectId {
                owner: self.shared.owner,
                key: task_id,
            },
            size_hint: 0,
            placement: Placement::Pending,
        })
    }

    /// Blocks up to `timeout` for the task behind `r`.
    pub fn get(&self, r: &ObjectRef, timeout: Duration) -> Result<O, EngineError> {
        self.get_until(r, Instant::now().checked_add(timeout))
    }

    /// Blocks until the task behind `r` settles.
    pub fn wait(&self, r: &ObjectRef) -> Result<O, EngineError> {
        self.get_until(r, None)
    }

    fn get_until(&self, r: &ObjectRef, deadline: Option<Instant>) -> Result<O, EngineError> {
        self.check_owner(r)?;
        let mut reg = self.shared.registry.lock();
        loop {
            let entry = reg.tasks.get(&r.id.key).ok_or(StoreError::UnknownRef(r.id))?;
            match &entry.state {
                TaskState::Inline(v) => return Ok(v.clone()),
                TaskState::Stored(stored) => return Ok((*self.shared.store.get(stored)?).clone()),
                TaskState::Failed(e) => {
                    return Err(EngineError::TaskFailed {
                        task_id: r.id.key,
                        attempts: entry.attempts,
                        last_error: e.clone(),
                    })
                }
                TaskState::Pending => {}
            }
            match deadline {
                Some(d) if Instant::now() >= d => return Err(EngineError::Timeout(r.id.key)),
                Some(d) => {
                    self.shared.settled.wait_until(&mut reg, d);
                }
                None => self.shared.settled.wait(&mut reg),
            }
        }
    }

    fn check_owner(&self, r: &ObjectRef) -> Result<(), EngineError> {
        if r.id.owner == self.shared.owner {
            Ok(())
        } else {
            Err(StoreError::UnknownRef(r.id).into())
        }
    }

    /// The ref with size and placement filled in, once the task succeeded.
    pub fn resolve(&self, r: &ObjectRef) -> Result<ObjectRef, EngineError> {
        self.check_owner(r)?;
        let reg = self.shared.registry.lock();
        let entry = reg.tasks.get(&r.id.key).ok_or(StoreError::UnknownRef(r.id))?;
        Ok(match &entry.state {
            TaskState::Inline(v) => ObjectRef {
                size_hint: v.size_bytes(),
                placement: Placement::Inline,
                ..*r
            },
            TaskState::Stored(stored) => ObjectRef { id: r.id, ..*stored },
            TaskState::Pending | TaskState::Failed(_) => *r,
        })
    }

    /// Attempts started so far for the task behind `r`.
    pub fn attempts(&self, r: &ObjectRef) -> Result<u32, EngineError> {
        self.check_owner(r)?;
        let reg = self.shared.registry.lock();
        Ok(reg.tasks.get(&r.id.key).ok_or(StoreError::UnknownRef(r.id))?.attempts)
    }

    pub(crate) fn settled_at(&self, r: &ObjectRef) -> Option<Instant> {
        let reg = self.shared.registry.lock();
        reg.tasks.get(&r.id.key).and_then(|e| e.settled_at)
    }

}

impl<I, O> Executor<I, O> {
    /// Stops accepting tasks, lets submitted ones settle, then joins all
    /// threads. Idempotent.
    pub fn shutdown(&self) {
        {
            let mut reg = self.shared.registry.lock();
            reg.closed = true;
            while reg.pending > 0 {
                self.shared.settled.wait(&mut reg);
            }
        }
        if self.stopped.swap(true, Ordering::SeqCst) {
            return;
        }
        for _ in 0..self.stop_messages {
            let _ = self.inbox.send(Msg::Stop);
        }
        for handle in self.threads.lock().drain(..) {
            let _ = handle.join();
        }
    }
}

impl<I, O> Drop for Executor<I, O> {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn_named(name: String, f: impl FnOnce() + Send + 'static) -> JoinHandle<()> {
    std::thread::Builder::new()
        .name(name)
        .spawn(f)
        .expect("failed to spawn executor thread")
}

/// Workers pull from one shared queue and requeue their own retries.
fn spawn_pool<I, O>(shared: &Arc<Shared<I, O>>, workers: usize) -> (Sender<Msg<I>>, Vec<JoinHandle<()>>, usize)
where
    I: Send + Sync + 'static,
    O: StoreValue + Send + Sync + 'static,
{
    let (tx, rx) = unbounded::<Msg<I>>();
    let threads = (0..workers)
        .map(|i| {
            let (shared, tx, rx) = (shared.clone(), tx.clone(), rx.clone());
            spawn_named(format!("capx-worker-{i}"), move || {
                while let Ok(Msg::Task(spec)) = rx.recv() {
                    let outcome = shared.execute(&spec);
                    if let Some(retry) = shared.settle(spec, outcome) {
                        let _ = tx.send(Msg::Task(retry));
                    }
                }
            })
        })
        .collect();
    (tx, threads, workers)
}

type Completion<I, O> = (usize, TaskSpec<I>, Result<O, String>);

/// Controller validates and sequences tasks, router dispatches them to idle
/// workers and relays outcomes; retries go back through the controller.
fn spawn_master_slave<I, O>(
    shared: &Arc<Shared<I, O>>,
    workers: usize,
) -> (Sender<Msg<I>>, Vec<JoinHandle<()>>, usize)
where
    I: Send + Sync + 'static,
    O: StoreValue + Send + Sync + 'static,
{
    let (ctrl_tx, ctrl_rx) = unbounded::<Msg<I>>();
    let (route_tx, route_rx) = unbounded::<Msg<I>>();
    let (done_tx, done_rx) = unbounded::<Completion<I, O>>();
    let mut threads = Vec::with_capacity(workers + 2);
    let mut worker_txs = Vec::with_capacity(workers);

    for i in 0..workers {
        let (tx, rx) = unbounded::<Msg<I>>();
        worker_txs.push(tx);
        let (shared, done_tx) = (shared.clone(), done_tx.clone());
        threads.push(spawn_named(format!("capx-worker-{i}"), move || {
            while let Ok(Msg::Task(spec)) = rx.recv() {
                let outcome = shared.execute(&spec);
                if done_tx.send((i, spec, outcome)).is_err() {
                    break;
                }
            }
        }));
    }
    drop(done_tx);

    let max_attempt = shared.max_retries + 1;
    threads.push(spawn_named("capx-controller".into(), move || {
        while let Ok(Msg::Task(spec)) = ctrl_rx.recv() {
            debug_assert!(spec.attempt >= 1 && spec.attempt <= max_attempt);
            if route_tx.send(Msg::Task(spec)).is_err() {
                return;
            }
        }
        let _ = route_tx.send(Msg::Stop);
    }));

    let (shared, retry_tx) = (shared.clone(), ctrl_tx.clone());
    threads.push(spawn_named("capx-router".into(), move || {
        let mut queue: VecDeque<TaskSpec<I>> = VecDeque::new();
        let mut idle: VecDeque<usize> = (0..worker_txs.len()).collect();
        loop {
            select! {
                recv(route_rx) -> msg => match msg {
                    Ok(Msg::Task(spec)) => queue.push_back(spec),
                    Ok(Msg::Stop) | Err(_) => break,
                },
                recv(done_rx) -> msg => {
                    let Ok((worker, spec, outcome)) = msg else { break };
                    idle.push_back(worker);
                    if let Some(retry) = shared.settle(spec, outcome) {
                        let _ = retry_tx.send(Msg::Task(retry));
                    }
                }
            }
            while !queue.is_empty() && !idle.is_empty() {
                let (worker, spec) = (idle.pop_front().unwrap(), queue.pop_front().unwrap());
                let _ = worker_txs[worker].send(Msg::Task(spec));
            }
        }
        for tx in &worker_txs {
            let _ = tx.send(Msg::Stop);
        }
    }));
    (ctrl_tx, threads, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> TaskFn<u64, u64> {
        Arc::new(|x: &u64| Ok(x * 2))
    }

    #[test]
    fn worker_counts() {
        assert_eq!(ExecutorKind::Serial.compute_workers(8), 1);
        assert_eq!(ExecutorKind::MasterSlave.compute_workers(8), 6);
        assert_eq!(ExecutorKind::MasterSlave.compute_workers(4), 2);
        assert_eq!(ExecutorKind::MasterSlave.compute_workers(2), 1);
        assert_eq!(ExecutorKind::MasterSlave.compute_workers(1), 1);
        assert_eq!(ExecutorKind::WorkerPerCore.compute_workers(8), 8);
    }

    #[test]
    fn kind_parsing() {
        for kind in ExecutorKind::ALL {
            assert_eq!(kind.name().parse::<ExecutorKind>(), Ok(kind));
            assert_eq!(kind.name().replace('_', "-").parse::<ExecutorKind>(), Ok(kind));
        }
        assert!("threads".parse::<ExecutorKind>().is_err());
        assert_eq!(serde_json::to_string(&ExecutorKind::MasterSlave).unwrap(), "\"master_slave\"");
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in ExecutorKind::ALL {
            let ex = Executor::new(ExecutorConfig::new(kind, 4), doubling()).unwrap();
            let refs: Vec<_> = (0..50).map(|i| ex.submit(i).unwrap()).collect();
            for (i, r) in refs.iter().enumerate() {
                assert_eq!(ex.wait(r).unwrap(), 2 * i as u64, "{kind}");
                assert_eq!(ex.attempts(r).unwrap(), 1);
            }
            ex.shutdown();
        }
    }

    #[test]
    fn fault_policy_bounds() {
        let never = FaultPolicy { kill_fraction: 0.0, once: false };
        let always = FaultPolicy { kill_fraction: 1.0, once: true };
        for t in 0..1000 {
            assert!(!never.kills(t, 1));
            assert!(always.kills(t, 1));
            assert!(!always.kills(t, 2));
        }
        let tenth = FaultPolicy { kill_fraction: 0.1, once: true };
        let killed = (0..10_000).filter(|&t| tenth.kills(t, 1)).count();
        assert!((800..1200).contains(&killed), "{killed}");
    }

    #[test]
    fn double_shutdown_is_harmless() {
        let ex = Executor::new(ExecutorConfig::new(ExecutorKind::MasterSlave, 3), doubling()).unwrap();
        let r = ex.submit(4).unwrap();
        ex.shutdown();
        ex.shutdown();
        assert_eq!(ex.wait(&r).unwrap(), 8);
        assert_eq!(ex.submit(1), Err(EngineError::Shutdown));
    }
}
