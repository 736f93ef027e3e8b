//! In-memory session table with idle expiry.

use std::collections::HashMap;
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, Instant};

use tokio::sync::{Mutex, RwLock};
use uuid::Uuid;

use llplace_core::DesignerSession;

pub struct Entry {
    pub session: Arc<Mutex<DesignerSession>>,
    last_used: StdMutex<Instant>,
}

impl Entry {
    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }

    fn idle(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().expect("clock lock"))
    }
}

#[derive(Clone)]
pub struct SessionStore {
    inner: Arc<RwLock<HashMap<Uuid, Arc<Entry>>>>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            inner: Arc::new(RwLock::new(HashMap::new())),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub async fn insert(&self, session: DesignerSession) -> Uuid {
        let id = Uuid::new_v4();
        let entry = Arc::new(Entry {
            session: Arc::new(Mutex::new(session)),
            last_used: StdMutex::new(Instant::now()),
        });
        self.inner.write().await.insert(id, entry);
        id
    }

    /// Looks up a live session and refreshes its idle clock.
    pub async fn get(&self, id: &Uuid) -> Option<Arc<Entry>> {
        let entry = self.inner.read().await.get(id).cloned()?;
        if entry.idle(Instant::now()) > self.ttl {
            self.inner.write().await.remove(id);
            return None;
        }
        entry.touch();
        Some(entry)
    }

    pub async fn remove(&self, id: &Uuid) -> bool {
        self.inner.write().await.remove(id).is_some()
    }

    pub async fn len(&self) -> usize {
        self.inner.read().await.len()
    }

    pub async fn is_empty(&self) -> bool {
        self.inner.read().await.is_empty()
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub async fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut map = self.inner.write().await;
        let before = map.len();
        map.retain(|_, e| e.idle(now) <= self.ttl);
        before - map.len()
    }

    pub fn spawn_sweeper(&self, every: Duration) -> tokio::task::JoinHandle<()> {
        let store = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                let dropped = store.sweep().await;
                if dropped > 0 {
                    log::info!("expired {dropped} idle sessions");
                }
            }
        })
    }
}
