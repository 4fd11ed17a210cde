//! FIFO commit queue: one thread owns the kernel and runs jobs in arrival
//! order, so every transport shares a single total order.

use std::sync::mpsc;
use std::thread;

use crate::kernel::Kernel;

type Job = Box<dyn FnOnce(&mut Kernel) + Send>;

#[derive(Clone)]
pub struct Committer {
    tx: mpsc::Sender<Job>,
}

/// Returned when the committer thread has stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("committer has shut down")]
pub struct Closed;

impl Committer {
    pub fn spawn(kernel: Kernel) -> (Committer, thread::JoinHandle<Kernel>) {
        let (tx, rx) = mpsc::channel::<Job>();
        let handle = thread::Builder::new()
            .name("committer".into())
            .spawn(move || {
                let mut kernel = kernel;
                for job in rx {
                    job(&mut kernel);
                }
                kernel
            })
            .expect("spawn committer thread");
        (Committer { tx }, handle)
    }

    /// Runs `f` on the committer thread and waits for its result.
    pub fn call<R, F>(&self, f: F) -> Result<R, Closed>
    where
        R: Send + 'static,
        F: FnOnce(&mut Kernel) -> R + Send + 'static,
    {
        let (reply_tx, reply_rx) = mpsc::sync_channel(1);
        self.tx
            .send(Box::new(move |k| {
                let _ = reply_tx.send(f(k));
            }))
            .map_err(|_| Closed)?;
        reply_rx.recv().map_err(|_| Closed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{ManualClock, SeededIds};
    use crate::config::KernelConfig;
    use crate::kernel::KernelOptions;
    use crate::model::{Action, ActionType, ActorId};
    use serde_json::json;

    #[test]
    fn concurrent_callers_get_a_contiguous_total_order() {
        let dir = tempfile::tempdir().unwrap();
        let opts = KernelOptions::default()
            .clock(ManualClock::new(1))
            .ids(SeededIds::new(1))
            .durability(crate::store::Durability::Normal);
        let kernel = Kernel::init(dir.path(), KernelConfig::default(), opts).unwrap();
        let (committer, handle) = Committer::spawn(kernel);
        let threads: Vec<_> = (0..4)
            .map(|t| {
                let c = committer.clone();
                thread::spawn(move || {
                    (0..10)
                        .map(|i| {
                            let a = Action::new(&ActorId::root(), ActionType::Observe, &format!("t{t}/{i}"), json!({}));
                            c.call(move |k| k.submit_action(a)).unwrap().unwrap().receipt().unwrap().log_index
                        })
                        .collect::<Vec<u64>>()
                })
            })
            .collect();
        let mut seqs: Vec<u64> = threads.into_iter().flat_map(|t| t.join().unwrap()).collect();
        seqs.sort_unstable();
        assert_eq!(seqs, (1..=40).collect::<Vec<_>>());
        drop(committer);
        let kernel = handle.join().unwrap();
        assert_eq!(kernel.tree_size().unwrap(), 40);
    }
}
