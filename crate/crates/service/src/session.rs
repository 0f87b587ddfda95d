//! Per-notebook actor: a serialized command queue in front of a [`Session`],
//! plus the hub that records and fans out deltas.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use branchbook_core::notebook::Notebook;
use branchbook_core::persistence::{export_results, ExportFormat};
use branchbook_core::protocol::{Applied, Command, CommandError, Replica, Session, Snapshot, StateDelta};
use branchbook_core::telemetry::{event_line, Event, EventLog, TelemetryError};
use tokio::sync::{broadcast, mpsc, oneshot};

const QUEUE_DEPTH: usize = 64;
const FANOUT_DEPTH: usize = 4096;

/// Everything readers see. The replica is advanced with each published
/// delta, so a snapshot always matches the end of the log.
struct Hub {
    log: Vec<StateDelta>,
    replica: Replica,
    fanout: broadcast::Sender<StateDelta>,
    telemetry: EventLog,
    telemetry_file: Option<File>,
}

impl Hub {
    fn publish(&mut self, delta: StateDelta) {
        self.replica
            .apply(&delta)
            .expect("session deltas replay onto the replica");
        self.log.push(delta.clone());
        // no subscribers is fine
        let _ = self.fanout.send(delta);
    }
}

type Job = (Command, oneshot::Sender<Result<Applied, CommandError>>);

#[derive(Debug)]
pub enum SessionError {
    Command(CommandError),
    /// The actor stopped, e.g. after an execution panic.
    Closed,
}

/// Cheap to clone; all clones talk to the same actor.
#[derive(Clone)]
pub struct NotebookHandle {
    jobs: mpsc::Sender<Job>,
    hub: Arc<Mutex<Hub>>,
}

impl NotebookHandle {
    /// Starts the actor on the current tokio runtime.
    pub fn spawn(notebook: Notebook, telemetry_path: Option<PathBuf>) -> std::io::Result<Self> {
        let telemetry_file = match telemetry_path {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        let session = Session::new(notebook);
        let replica = Replica::from_snapshot(&session.snapshot()).expect("own snapshot loads");
        let (fanout, _) = broadcast::channel(FANOUT_DEPTH);
        let hub = Arc::new(Mutex::new(Hub {
            log: Vec::new(),
            replica,
            fanout,
            telemetry: EventLog::new(),
            telemetry_file,
        }));
        let (jobs, rx) = mpsc::channel(QUEUE_DEPTH);
        tokio::spawn(run_actor(session, rx, hub.clone()));
        Ok(NotebookHandle { jobs, hub })
    }

    fn hub(&self) -> MutexGuard<'_, Hub> {
        lock(&self.hub)
    }

    /// Queues a command and waits for its acknowledgement. Execution
    /// commands are acknowledged before their deltas stream.
    pub async fn command(&self, cmd: Command) -> Result<Applied, SessionError> {
        let (tx, rx) = oneshot::channel();
        self.jobs.send((cmd, tx)).await.map_err(|_| SessionError::Closed)?;
        rx.await
            .map_err(|_| SessionError::Closed)?
            .map_err(SessionError::Command)
    }

    pub fn snapshot(&self) -> Snapshot {
        self.hub().replica.snapshot()
    }

    pub fn results(&self, format: ExportFormat) -> Vec<u8> {
        let hub = self.hub();
        export_results(&hub.replica.notebook, &hub.replica.results, format)
    }

    /// Deltas after `since`, and a receiver for everything published later.
    /// Taken under one lock so nothing falls between the two.
    pub fn subscribe(&self, since: u64) -> (Vec<StateDelta>, broadcast::Receiver<StateDelta>) {
        let hub = self.hub();
        let start = hub.log.partition_point(|d| d.server_seq <= since);
        (hub.log[start..].to_vec(), hub.fanout.subscribe())
    }

    /// Appends a batch of telemetry events, all or nothing.
    pub fn record_telemetry(&self, events: Vec<Event>) -> Result<usize, TelemetryError> {
        let mut hub = self.hub();
        let mut last = hub.telemetry.events().last().map(|e| e.t_ms);
        for (i, e) in events.iter().enumerate() {
            e.check_payload()
                .map_err(|message| TelemetryError::MalformedLine { line: i + 1, message })?;
            if let Some(l) = last {
                if e.t_ms < l {
                    return Err(TelemetryError::OutOfOrderTimestamp { t_ms: e.t_ms, last_ms: l });
                }
            }
            last = Some(e.t_ms);
        }
        let n = events.len();
        for e in events {
            if let Some(f) = hub.telemetry_file.as_mut() {
                if let Err(err) = f.write_all(&event_line(&e)) {
                    return Err(TelemetryError::MalformedLine { line: 0, message: format!("log write failed: {err}") });
                }
            }
            hub.telemetry.append(e).expect("order checked above");
        }
        Ok(n)
    }

    pub fn telemetry_jsonl(&self) -> Vec<u8> {
        self.hub().telemetry.to_jsonl()
    }
}

fn lock(hub: &Mutex<Hub>) -> MutexGuard<'_, Hub> {
    hub.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn run_actor(mut session: Session, mut jobs: mpsc::Receiver<Job>, hub: Arc<Mutex<Hub>>) {
    while let Some((cmd, reply)) = jobs.recv().await {
        let result = session.apply(&cmd);
        let execute = match &result {
            Ok(Applied::Accepted { deltas, .. }) => {
                let mut h = lock(&hub);
                for d in deltas {
                    h.publish(d.clone());
                }
                cmd.op.is_execution()
            }
            _ => false,
        };
        let _ = reply.send(result);
        if execute {
            let hub = hub.clone();
            let task = tokio::task::spawn_blocking(move || {
                session.execute(&cmd.op, &mut |d| lock(&hub).publish(d));
                session
            });
            match task.await {
                Ok(s) => session = s,
                Err(_) => return,
            }
        }
    }
}
