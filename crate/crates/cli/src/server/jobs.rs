use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        self >= JobState::Done
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    pub iteration: usize,
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    pub progress: JobProgress,
    /// Id of the recorded run once the job is done.
    pub result_ref: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct Job {
    status: Mutex<JobStatus>,
    cancel: AtomicBool,
}

impl Job {
    fn new(id: String) -> Self {
        Self {
            status: Mutex::new(JobStatus {
                job_id: id,
                state: JobState::Queued,
                progress: JobProgress::default(),
                result_ref: None,
                error: None,
            }),
            cancel: AtomicBool::new(false),
        }
    }

    pub fn status(&self) -> JobStatus {
        self.status.lock().expect("job lock").clone()
    }

    /// Moves to `state` unless that would go backwards or leave a terminal state.
    pub fn advance(&self, state: JobState) -> bool {
        let mut s = self.status.lock().expect("job lock");
        if s.state.is_terminal() || state <= s.state {
            return false;
        }
        s.state = state;
        true
    }

    pub fn finish(&self, state: JobState, result_ref: Option<String>, error: Option<String>) {
        let mut s = self.status.lock().expect("job lock");
        if s.state.is_terminal() {
            return;
        }
        s.state = state;
        s.result_ref = result_ref;
        s.error = error;
    }

    pub fn set_progress(&self, iteration: usize, cost: f64) {
        let mut s = self.status.lock().expect("job lock");
        s.progress = JobProgress {
            iteration,
            cost: Some(cost),
        };
    }

    pub fn request_cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn cancel_requested(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

/// Every job the service has started, and the one still running if any.
#[derive(Debug, Default)]
pub struct Jobs {
    next: u64,
    jobs: HashMap<String, Arc<Job>>,
    active: Option<Arc<Job>>,
}

impl Jobs {
    pub fn is_busy(&self) -> bool {
        self.active
            .as_ref()
            .is_some_and(|j| !j.status().state.is_terminal())
    }

    pub fn start(&mut self) -> Arc<Job> {
        self.next += 1;
        let job = Arc::new(Job::new(format!("job-{}", self.next)));
        self.jobs.insert(job.status().job_id, job.clone());
        self.active = Some(job.clone());
        job
    }

    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.get(id).cloned()
    }
}
