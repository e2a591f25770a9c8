//! Shared cache of adapted (resized, channel-adjusted) images.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use super::image::Image;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub dataset: u64,
    pub index: usize,
    pub target_shape: (usize, usize),
}

/// Concurrent store; entries beyond `capacity` bytes are recomputed instead of stored.
#[derive(Debug)]
pub struct PreprocessCache {
    capacity: usize,
    used: AtomicUsize,
    entries: RwLock<HashMap<CacheKey, Arc<Image>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PreprocessCache {
    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            capacity: capacity_bytes,
            used: AtomicUsize::new(0),
            entries: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<Image>> {
        let found = self.entries.read().expect("cache lock").get(key).cloned();
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    pub fn get_or_insert_with(&self, key: CacheKey, compute: impl FnOnce() -> Result<Image>) -> Result<Arc<Image>> {
        if let Some(img) = self.get(&key) {
            return Ok(img);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let img = Arc::new(compute()?);
        let bytes = std::mem::size_of_val(img.pixels());
        if self.used.load(Ordering::Relaxed) + bytes <= self.capacity {
            // last writer wins; all writers computed the same bytes
            let mut map = self.entries.write().expect("cache lock");
            if map.insert(key, Arc::clone(&img)).is_none() {
                self.used.fetch_add(bytes, Ordering::Relaxed);
            }
        }
        Ok(img)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes_used(&self) -> usize {
        self.used.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl Default for PreprocessCache {
    fn default() -> Self {
        Self::new(512 << 20)
    }
}
