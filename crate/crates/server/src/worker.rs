//! One worker thread per session. The worker owns the session and runs jobs
//! in order; every event it records is copied into a mirror that request
//! handlers read and broadcast to stream subscribers.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use serde::Serialize;
use tokio::sync::{broadcast, oneshot};
use tutorloop_core::orchestrator::{Engine, EngineError, RepairRequest};
use tutorloop_core::session::{Session, SessionEvent, SubTaskId};

pub enum Job {
    Submit {
        question: String,
        followup: bool,
        force: bool,
    },
    Repair(RepairRequest),
    Define {
        subtask: SubTaskId,
        surface: String,
    },
    Accept(oneshot::Sender<Result<SubTaskId, EngineError>>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WorkerStatus {
    pub job_pending: bool,
    pub last_job: Option<String>,
    pub last_error: Option<String>,
}

pub struct SessionSlot {
    mirror: Arc<Mutex<Session>>,
    events: broadcast::Sender<SessionEvent>,
    pending: AtomicBool,
    status: Mutex<WorkerStatus>,
    jobs: Mutex<Option<mpsc::Sender<(String, Job)>>>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionSlot {
    /// Starts the worker for `session`, which must not have recorded events.
    pub fn spawn(mut session: Session, engine: Arc<Engine>) -> Arc<Self> {
        let mirror = Arc::new(Mutex::new(session.clone()));
        let (events, _) = broadcast::channel(1024);
        let (tx, rx) = mpsc::channel::<(String, Job)>();
        let slot = Arc::new(SessionSlot {
            mirror: mirror.clone(),
            events: events.clone(),
            pending: AtomicBool::new(false),
            status: Mutex::new(WorkerStatus::default()),
            jobs: Mutex::new(Some(tx)),
            thread: Mutex::new(None),
        });
        session.set_observer(Some(Arc::new(move |e: &SessionEvent| {
            if let Err(err) = lock(&mirror).append_event(e.clone()) {
                tracing::error!("mirror rejected event {}: {err}", e.seq);
            }
            let _ = events.send(e.clone());
        })));
        let worker = slot.clone();
        let handle = std::thread::Builder::new()
            .name(format!("session-{}", session.id))
            .spawn(move || {
                for (job_id, job) in rx {
                    // Accept answers its caller only once the worker is free
                    // again, so a follow-up request is not refused as busy.
                    let (error, reply) = match job {
                        Job::Accept(reply) => {
                            let result = engine.accept(&mut session);
                            (
                                result.as_ref().err().map(ToString::to_string),
                                Some((reply, result)),
                            )
                        }
                        job => (
                            run_job(&engine, &mut session, job)
                                .err()
                                .map(|e| e.to_string()),
                            None,
                        ),
                    };
                    if let Some(e) = &error {
                        tracing::warn!(session = %session.id, job = %job_id, "job failed: {e}");
                    }
                    let mut status = lock(&worker.status);
                    status.last_job = Some(job_id);
                    status.last_error = error;
                    status.job_pending = false;
                    drop(status);
                    worker.pending.store(false, Ordering::SeqCst);
                    if let Some((reply, result)) = reply {
                        let _ = reply.send(result);
                    }
                }
            })
            .expect("spawn session worker");
        *lock(&slot.thread) = Some(handle);
        slot
    }

    /// Read access to the mirrored session.
    pub fn session(&self) -> MutexGuard<'_, Session> {
        lock(&self.mirror)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SessionEvent> {
        self.events.subscribe()
    }

    pub fn status(&self) -> WorkerStatus {
        lock(&self.status).clone()
    }

    /// Claims the worker for one job. False when a job is already queued or
    /// running.
    pub fn try_claim(&self) -> bool {
        let claimed = self
            .pending
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok();
        if claimed {
            lock(&self.status).job_pending = true;
        }
        claimed
    }

    /// Gives back a claim that was not used.
    pub fn release(&self) {
        lock(&self.status).job_pending = false;
        self.pending.store(false, Ordering::SeqCst);
    }

    /// Queues a job on a claimed worker. False when the worker has stopped.
    pub fn enqueue(&self, job_id: String, job: Job) -> bool {
        let sent = lock(&self.jobs)
            .as_ref()
            .is_some_and(|tx| tx.send((job_id, job)).is_ok());
        if !sent {
            self.release();
        }
        sent
    }

    /// Stops accepting jobs and waits for the queued ones to finish.
    pub fn drain(&self) {
        lock(&self.jobs).take();
        if let Some(handle) = lock(&self.thread).take() {
            let _ = handle.join();
        }
    }
}

fn run_job(engine: &Engine, s: &mut Session, job: Job) -> Result<(), EngineError> {
    match job {
        Job::Submit {
            question,
            followup,
            force,
        } => {
            if followup || force {
                engine.followup_buildup(s, &question, force)?;
            } else {
                engine.handle_subtask(s, &question)?;
            }
        }
        Job::Repair(request) => {
            engine.repair(s, request)?;
        }
        Job::Define { subtask, surface } => {
            engine.define_keyword(s, subtask, &surface)?;
        }
        Job::Accept(reply) => {
            let _ = reply.send(engine.accept(s));
        }
    }
    Ok(())
}
