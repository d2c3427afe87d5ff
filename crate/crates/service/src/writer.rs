//! Single-writer serialization: each project is owned by one thread that
//! applies commands in arrival order. Readers get immutable state snapshots.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use crowdscreen_core::crowdsim::VoteSubmission;
use crowdscreen_core::domain::VoteRequest;
use crowdscreen_core::strategy::GiveUpEvent;
use crowdscreen_core::{ScreeningProject, Vote, WorkerId};
use tokio::sync::{oneshot, watch};

use crate::engine::ProjectEngine;
use crate::error::ServiceError;

type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

enum Command {
    RegisterWorker(WorkerId, bool, Reply<()>),
    InitialRun(u64, Reply<Vec<VoteRequest>>),
    Step(u64, Reply<Vec<VoteRequest>>),
    Stop(Reply<Vec<GiveUpEvent>>),
    Vote(VoteSubmission, Reply<Vote>),
}

#[derive(Clone)]
pub struct ProjectHandle {
    tx: mpsc::Sender<Command>,
    view: watch::Receiver<Arc<ScreeningProject>>,
}

impl ProjectHandle {
    /// Moves the engine onto its own writer thread.
    pub fn spawn(mut engine: ProjectEngine) -> Self {
        let (tx, rx) = mpsc::channel::<Command>();
        let (view_tx, view) = watch::channel(Arc::new(engine.project().clone()));
        let name = format!("writer-{}", engine.project().id());
        thread::Builder::new()
            .name(name)
            .spawn(move || {
                for command in rx {
                    let publish = |engine: &ProjectEngine| {
                        view_tx.send_replace(Arc::new(engine.project().clone()));
                    };
                    match command {
                        Command::RegisterWorker(w, badge, reply) => {
                            let r = engine.register_worker(w, badge);
                            commit(&engine, reply, r, publish)
                        }
                        Command::InitialRun(seed, reply) => {
                            let r = engine.start_initial_run(seed);
                            commit(&engine, reply, r, publish)
                        }
                        Command::Step(budget, reply) => {
                            let r = engine.step(budget);
                            commit(&engine, reply, r, publish)
                        }
                        Command::Stop(reply) => {
                            let r = engine.stop();
                            commit(&engine, reply, r, publish)
                        }
                        Command::Vote(sub, reply) => {
                            let r = engine.submit_vote(&sub);
                            commit(&engine, reply, r, publish)
                        }
                    }
                }
            })
            .expect("spawn writer thread");
        Self { tx, view }
    }

    /// Latest committed state.
    pub fn view(&self) -> Arc<ScreeningProject> {
        self.view.borrow().clone()
    }

    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ServiceError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }

    pub async fn register_worker(&self, worker: WorkerId, badge: bool) -> Result<(), ServiceError> {
        self.call(|r| Command::RegisterWorker(worker, badge, r)).await
    }

    pub async fn start_initial_run(&self, seed: u64) -> Result<Vec<VoteRequest>, ServiceError> {
        self.call(|r| Command::InitialRun(seed, r)).await
    }

    pub async fn step(&self, vote_budget: u64) -> Result<Vec<VoteRequest>, ServiceError> {
        self.call(|r| Command::Step(vote_budget, r)).await
    }

    pub async fn stop(&self) -> Result<Vec<GiveUpEvent>, ServiceError> {
        self.call(Command::Stop).await
    }

    pub async fn submit_vote(&self, sub: VoteSubmission) -> Result<Vote, ServiceError> {
        self.call(|r| Command::Vote(sub, r)).await
    }
}

/// Publishes the new state on success, then replies, so a caller that got
/// its answer always reads its own write.
fn commit<T>(engine: &ProjectEngine, reply: Reply<T>, result: Result<T, ServiceError>, publish: impl Fn(&ProjectEngine)) {
    if result.is_ok() {
        publish(engine);
    }
    let _ = reply.send(result);
}
