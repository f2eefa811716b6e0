//! HTTP protocol for remote sampling.
//!
//! `POST {endpoint}/jobs` with `{"problem": .., "params": ..}` answers
//! `{"job_id": ..}`. `GET {endpoint}/jobs/{id}` answers
//! `{"status": "pending" | "done" | "failed", "samples": [[..]], "energies": [..]}`,
//! with `"error"` set on failure. Rejections use a 4xx status and an
//! `{"error": ..}` body.
//!
//! `serve` runs the local backend behind this protocol.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{LocalSampler, SampleSet, Sampler, SamplerParams};
use crate::compile::PhysicalProblem;
use crate::instance::Spin;

/// Environment variable naming the default remote endpoint.
pub const ENDPOINT_ENV: &str = "EMBEDTUNE_ENDPOINT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no result within {0:?}")]
    Timeout(Duration),
    #[error("server rejected the job ({status}): {message}")]
    Rejected { status: u16, message: String },
}

#[derive(Serialize, Deserialize)]
struct Submission {
    problem: PhysicalProblem,
    params: SamplerParams,
}

#[derive(Deserialize)]
struct JobStatus {
    status: String,
    #[serde(default)]
    samples: Option<Vec<Vec<Spin>>>,
    #[serde(default)]
    energies: Option<Vec<f64>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RemoteSampler {
    pub endpoint: String,
    pub timeout: Duration,
    pub poll_interval: Duration,
}

impl RemoteSampler {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteSampler {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(60),
            poll_interval: Duration::from_millis(20),
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty()).map(Self::new)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn agent(&self, remaining: Duration) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(remaining.max(Duration::from_millis(1))))
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn transport(&self, e: ureq::Error) -> RemoteError {
        match e {
            ureq::Error::Timeout(_) => RemoteError::Timeout(self.timeout),
            other => RemoteError::Network(other.to_string()),
        }
    }

    fn read(&self, mut resp: ureq::http::Response<ureq::Body>) -> Result<(u16, Value), RemoteError> {
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| self.transport(e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| RemoteError::Malformed(format!("status {status}: {e}")))?;
        if (400..600).contains(&status) {
            let message = value.get("error").and_then(Value::as_str).unwrap_or("no message").to_string();
            return Err(RemoteError::Rejected { status, message });
        }
        Ok((status, value))
    }

    /// Submits, polls until done or the deadline, and rebuilds the sample set.
    pub fn sample_remote(&self, problem: &PhysicalProblem, params: &SamplerParams) -> Result<SampleSet, RemoteError> {
        let deadline = Instant::now() + self.timeout;
        let remaining = || deadline.saturating_duration_since(Instant::now());
        let body = serde_json::to_string(&Submission { problem: problem.clone(), params: params.clone() })
            .map_err(|e| RemoteError::Malformed(e.to_string()))?;
        let resp = self
            .agent(remaining())
            .post(&format!("{}/jobs", self.endpoint))
            .header("content-type", "application/json")
            .send(&body)
            .map_err(|e| self.transport(e))?;
        let (_, value) = self.read(resp)?;
        let job = match value.get("job_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(RemoteError::Malformed("missing job_id".into())),
        };
        loop {
            if remaining().is_zero() {
                return Err(RemoteError::Timeout(self.timeout));
            }
            let resp = self
                .agent(remaining())
                .get(&format!("{}/jobs/{job}", self.endpoint))
                .call()
                .map_err(|e| self.transport(e))?;
            let (_, value) = self.read(resp)?;
            let status: JobStatus = serde_json::from_value(value).map_err(|e| RemoteError::Malformed(e.to_string()))?;
            match status.status.as_str() {
                "done" => return self.assemble(problem, params, status),
                "failed" => {
                    return Err(RemoteError::Rejected {
                        status: 200,
                        message: status.error.unwrap_or_else(|| "job failed".into()),
                    })
                }
                "pending" | "running" => {
                    std::thread::sleep(self.poll_interval.min(remaining()));
                }
                other => return Err(RemoteError::Malformed(format!("unknown status {other:?}"))),
            }
        }
    }

    fn assemble(
        &self,
        problem: &PhysicalProblem,
        params: &SamplerParams,
        status: JobStatus,
    ) -> Result<SampleSet, RemoteError> {
        let samples = status.samples.ok_or_else(|| RemoteError::Malformed("done job without samples".into()))?;
        let energies = status.energies.ok_or_else(|| RemoteError::Malformed("done job without energies".into()))?;
        let width = problem.num_qubits();
        if samples.len() != params.num_reads
            || energies.len() != samples.len()
            || samples.iter().any(|s| s.len() != width || s.iter().any(|&v| v != 1 && v != -1))
        {
            return Err(RemoteError::Malformed("sample shape does not match the request".into()));
        }
        Ok(SampleSet {
            provenance: Some(crate::formats::content_id(problem)),
            qubits: problem.qubits(),
            samples,
            energies,
            params: params.clone(),
            streams: params.streams(),
        })
    }
}

impl Sampler for RemoteSampler {
    fn sample(&self, problem: &PhysicalProblem, params: &SamplerParams) -> crate::Result<SampleSet> {
        Ok(self.sample_remote(problem, params)?)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    /// Extra wait before each job starts, for exercising client deadlines.
    pub delay: Duration,
}

enum Job {
    Pending,
    Done(SampleSet),
    Failed(String),
}

/// Running loopback server; stops when dropped.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn reply(req: tiny_http::Request, status: u16, body: Value) {
    let header =
        tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header is valid");
    let resp = tiny_http::Response::from_string(body.to_string()).with_status_code(status).with_header(header);
    let _ = req.respond(resp);
}

/// Serves the local backend at `addr` (use port 0 for an ephemeral port).
pub fn serve(addr: &str, options: ServeOptions) -> crate::Result<Server> {
    let server =
        tiny_http::Server::http(addr).map_err(|e| crate::Error::InvalidInput(format!("cannot bind {addr}: {e}")))?;
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| crate::Error::InvalidInput("server is not bound to an IP address".into()))?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let jobs: Arc<Mutex<HashMap<u64, Job>>> = Arc::default();
    let counter = Arc::new(AtomicU64::new(0));
    let handle = std::thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            let mut req = match server.recv_timeout(Duration::from_millis(25)) {
                Ok(Some(r)) => r,
                Ok(None) => continue,
                Err(_) => break,
            };
            let url = req.url().trim_end_matches('/').to_string();
            match (req.method().clone(), url.as_str()) {
                (tiny_http::Method::Post, "/jobs") => {
                    let mut body = String::new();
                    if req.as_reader().read_to_string(&mut body).is_err() {
                        reply(req, 400, json!({"error": "unreadable body"}));
                        continue;
                    }
                    let sub: Submission = match serde_json::from_str(&body) {
                        Ok(s) => s,
                        Err(e) => {
                            reply(req, 400, json!({"error": format!("bad submission: {e}")}));
                            continue;
                        }
                    };
                    if let Err(e) = sub.problem.check_ranges().and_then(|_| sub.params.validate()) {
                        reply(req, 422, json!({"error": e.to_string()}));
                        continue;
                    }
                    let id = counter.fetch_add(1, Ordering::SeqCst);
                    jobs.lock().expect("job table").insert(id, Job::Pending);
                    let table = jobs.clone();
                    let delay = options.delay;
                    std::thread::spawn(move || {
                        std::thread::sleep(delay);
                        let job = match LocalSampler.sample(&sub.problem, &sub.params) {
                            Ok(set) => Job::Done(set),
                            Err(e) => Job::Failed(e.to_string()),
                        };
                        table.lock().expect("job table").insert(id, job);
                    });
                    reply(req, 200, json!({"job_id": id.to_string()}));
                }
                (tiny_http::Method::Get, path) if path.starts_with("/jobs/") => {
                    let id: Option<u64> = path["/jobs/".len()..].parse().ok();
                    let table = jobs.lock().expect("job table");
                    match id.and_then(|i| table.get(&i)) {
                        None => {
                            drop(table);
                            reply(req, 404, json!({"error": "unknown job"}));
                        }
                        Some(Job::Pending) => {
                            drop(table);
                            reply(req, 200, json!({"status": "pending"}));
                        }
                        Some(Job::Failed(msg)) => {
                            let body = json!({"status": "failed", "error": msg});
                            drop(table);
                            reply(req, 200, body);
                        }
                        Some(Job::Done(set)) => {
                            let body = json!({
                                "status": "done",
                                "samples": set.samples,
                                "energies": set.energies,
                            });
                            drop(table);
                            reply(req, 200, body);
                        }
                    }
                }
                _ => reply(req, 404, json!({"error": "no such route"})),
            }
        }
    });
    Ok(Server { addr: bound, stop, handle: Some(handle) })
}
