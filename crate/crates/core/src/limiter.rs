//! Counting semaphore used to bound in-flight requests and worker processes.

use std::sync::{Condvar, Mutex};

#[derive(Debug)]
pub struct Limiter {
    capacity: usize,
    state: Mutex<State>,
    freed: Condvar,
}

#[derive(Debug, Default)]
struct State {
    in_flight: usize,
    peak: usize,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "limiter capacity must be at least 1");
        Limiter {
            capacity,
            state: Mutex::new(State::default()),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap();
        while state.in_flight >= self.capacity {
            state = self.freed.wait(state).unwrap();
        }
        state.in_flight += 1;
        state.peak = state.peak.max(state.in_flight);
        Permit { limiter: self }
    }

    /// Highest number of permits held at once since construction.
    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().peak
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap();
        state.in_flight -= 1;
        self.limiter.freed.notify_one();
    }
}

const NO_THREADS: bool = cfg!(all(target_arch = "wasm32", not(target_feature = "atomics")));

/// Maps `f` over `items` with at most `parallelism` calls running at once,
/// preserving input order in the output. Runs inline when `parallelism` is 1
/// and on targets without threads (wasm32 without atomics).
pub(crate) fn bounded_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let parallelism = parallelism.max(1).min(items.len().max(1));
    if parallelism == 1 || NO_THREADS {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..parallelism {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    #[test]
    fn bounded_map_preserves_order_and_bound() {
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let items: Vec<usize> = (0..16).collect();
        let out = bounded_map(&items, 3, |_, &x| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            live.fetch_sub(1, Ordering::SeqCst);
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn limiter_tracks_peak() {
        let l = Limiter::new(2);
        let a = l.acquire();
        let b = l.acquire();
        assert_eq!(l.peak(), 2);
        drop(a);
        drop(b);
        let _c = l.acquire();
        assert_eq!(l.peak(), 2);
    }
}
