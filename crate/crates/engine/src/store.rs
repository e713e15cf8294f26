use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use capx_core::{DensityResult, RegionResult};
use parking_lot::RwLock;
use thiserror::Error;

/// Values at or above this size live in the store; smaller ones travel inline.
pub const INLINE_THRESHOLD: usize = 100 * 1024;

static NEXT_OWNER: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_owner_id() -> u64 {
    NEXT_OWNER.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown object reference {0:?}")]
    UnknownRef(ObjectId),
    #[error("object {0:?} already stored")]
    Duplicate(ObjectId),
}

/// Approximate in-memory size, used to decide inline vs stored placement.
pub trait StoreValue {
    fn size_bytes(&self) -> usize;
}

impl StoreValue for Vec<u8> {
    fn size_bytes(&self) -> usize {
        self.len()
    }
}

impl StoreValue for String {
    fn size_bytes(&self) -> usize {
        self.len()
    }
}

impl StoreValue for u64 {
    fn size_bytes(&self) -> usize {
        8
    }
}

impl StoreValue for DensityResult {
    fn size_bytes(&self) -> usize {
        std::mem::size_of::<DensityResult>()
            + self.frame_id.len()
            + self
                .regions
                .iter()
                .map(|r| {
                    std::mem::size_of::<RegionResult>()
                        + r.mask.as_ref().map_or(0, |m| m.width() * m.height())
                })
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId {
    pub(crate) owner: u64,
    pub(crate) key: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Not resolved yet (task still running).
    Pending,
    Inline,
    Stored,
}

/// Handle to a value; `size_hint` is known once the value exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectRef {
    pub id: ObjectId,
    pub size_hint: usize,
    pub placement: Placement,
}

/// Concurrent id → immutable value map with single insertion per key.
#[derive(Debug)]
pub struct ObjectStore<V> {
    owner: u64,
    next_key: AtomicU64,
    objects: RwLock<HashMap<u64, Arc<V>>>,
}

impl<V> Default for ObjectStore<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V> ObjectStore<V> {
    pub fn new() -> Self {
        Self {
            owner: next_owner_id(),
            next_key: AtomicU64::new(0),
            objects: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.objects.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<V: StoreValue> ObjectStore<V> {
    /// Inserts `value` under a fresh id. Small values are flagged inline in
    /// the returned ref but are still retrievable here.
    pub fn put(&self, value: V) -> ObjectRef {
        let key = self.next_key.fetch_add(1, Ordering::Relaxed);
        let id = ObjectId {
            owner: self.owner,
            key,
        };
        let size = value.size_bytes();
        self.objects.write().insert(key, Arc::new(value));
        ObjectRef {
            id,
            size_hint: size,
            placement: placement_for(size),
        }
    }

    pub fn get(&self, r: &ObjectRef) -> Result<Arc<V>, StoreError> {
        if r.id.owner != self.owner {
            return Err(StoreError::UnknownRef(r.id));
        }
        self.objects
            .read()
            .get(&r.id.key)
            .cloned()
            .ok_or(StoreError::UnknownRef(r.id))
    }
}

pub(crate) fn placement_for(size: usize) -> Placement {
    if size >= INLINE_THRESHOLD {
        Placement::Stored
    } else {
        Placement::Inline
    }
}
