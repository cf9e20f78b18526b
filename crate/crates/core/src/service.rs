//! Newline-delimited JSON scoring over stdio or TCP.
//!
//! Every request line gets exactly one response line, in request order per
//! stream. Blank lines are skipped. A line that cannot be parsed is answered
//! with an error object and `"id": null`; the stream stays open.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pretext::PretextMcq;
use crate::reward::{score, RewardBreakdown, RewardConfig, RewardMode, TaskDescriptor};

pub const PROTOCOL_VERSION: u32 = 1;

pub const ENV_R_T_SCALE: &str = "VISS_R_T_SCALE";
pub const ENV_R_F_SCALE: &str = "VISS_R_F_SCALE";
pub const ENV_PRETEXT_SCALE: &str = "VISS_PRETEXT_SCALE";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    BindError {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-request replacements for the service's default scales.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleOverrides {
    pub r_t_scale: Option<f64>,
    pub r_f_scale: Option<f64>,
    pub pretext_scale: Option<f64>,
    pub regression_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub id: String,
    pub mode: RewardMode,
    pub raw_output: String,
    #[serde(default)]
    pub task: Option<TaskDescriptor>,
    #[serde(default)]
    pub pretext: Option<PretextMcq>,
    #[serde(default)]
    pub config: Option<ScaleOverrides>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// `malformed_request` or `invalid_config`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub version: u32,
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<RewardBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

/// Immutable scoring defaults shared by all connections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scorer {
    defaults: RewardConfig,
}

impl Default for Scorer {
    fn default() -> Self {
        Self::new(RewardConfig::default())
    }
}

fn env_scale(name: &str) -> Result<Option<f64>, ServiceError> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite() && *x >= 0.0)
            .map(Some)
            .ok_or_else(|| ServiceError::Config(format!("{name}={v:?} is not a non-negative number"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(ServiceError::Config(format!("{name}: {e}"))),
    }
}

impl Scorer {
    pub fn new(defaults: RewardConfig) -> Self {
        Self { defaults }
    }

    /// Defaults with `VISS_R_T_SCALE`, `VISS_R_F_SCALE` and
    /// `VISS_PRETEXT_SCALE` applied when set.
    pub fn from_env() -> Result<Self, ServiceError> {
        let mut defaults = RewardConfig::default();
        if let Some(v) = env_scale(ENV_R_T_SCALE)? {
            defaults.r_t_scale = v;
        }
        if let Some(v) = env_scale(ENV_R_F_SCALE)? {
            defaults.r_f_scale = v;
        }
        if let Some(v) = env_scale(ENV_PRETEXT_SCALE)? {
            defaults.pretext_scale = v;
        }
        Ok(Self::new(defaults))
    }

    pub fn defaults(&self) -> &RewardConfig {
        &self.defaults
    }

    /// The configuration a request is scored under.
    pub fn config_for(&self, request: &ScoreRequest) -> RewardConfig {
        let o = request.config.unwrap_or_default();
        RewardConfig {
            mode: request.mode,
            r_t_scale: o.r_t_scale.unwrap_or(self.defaults.r_t_scale),
            r_f_scale: o.r_f_scale.unwrap_or(self.defaults.r_f_scale),
            pretext_scale: o.pretext_scale.unwrap_or(self.defaults.pretext_scale),
            regression_epsilon: o.regression_epsilon.unwrap_or(self.defaults.regression_epsilon),
        }
    }

    pub fn respond(&self, request: &ScoreRequest) -> ScoreResponse {
        let config = self.config_for(request);
        if !config.is_valid() {
            return error_response(
                Some(request.id.clone()),
                "invalid_config",
                "scales must be finite and non-negative, regression_epsilon positive".into(),
            );
        }
        ScoreResponse {
            version: PROTOCOL_VERSION,
            id: Some(request.id.clone()),
            breakdown: Some(score(
                &request.raw_output,
                request.task.as_ref(),
                request.pretext.as_ref(),
                &config,
            )),
            error: None,
        }
    }

    /// Answers one request line. A line that is JSON but not a valid request
    /// echoes its `id` when that is a string.
    pub fn handle_line(&self, line: &str) -> ScoreResponse {
        match serde_json::from_str::<ScoreRequest>(line) {
            Ok(request) => self.respond(&request),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id")?.as_str().map(String::from));
                error_response(id, "malformed_request", e.to_string())
            }
        }
    }
}

fn error_response(id: Option<String>, kind: &str, message: String) -> ScoreResponse {
    ScoreResponse {
        version: PROTOCOL_VERSION,
        id,
        breakdown: None,
        error: Some(ErrorBody {
            kind: kind.into(),
            message,
        }),
    }
}

/// Serves one stream until end of input. Returns the number of responses.
pub fn serve_lines<R: BufRead, W: Write>(scorer: &Scorer, input: R, output: W) -> io::Result<usize> {
    let mut out = BufWriter::new(output);
    let mut count = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let body = serde_json::to_string(&scorer.handle_line(&line)).expect("responses serialize");
        out.write_all(body.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        count += 1;
    }
    Ok(count)
}

pub fn serve_stdio(scorer: &Scorer) -> io::Result<usize> {
    serve_lines(scorer, io::stdin().lock(), io::stdout().lock())
}

/// TCP listener with one thread per connection.
pub struct TcpServer {
    listener: TcpListener,
    scorer: Scorer,
    stop: Arc<AtomicBool>,
}

/// Handle to a server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl TcpServer {
    pub fn bind<A: ToSocketAddrs + std::fmt::Display>(addr: A, scorer: Scorer) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServiceError::BindError {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Self {
            listener,
            scorer,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the stop flag is raised.
    pub fn run(&self) {
        for stream in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let scorer = self.scorer;
            thread::spawn(move || {
                let _ = handle_connection(&scorer, stream);
            });
        }
    }

    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let thread = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

fn handle_connection(scorer: &Scorer, stream: TcpStream) -> io::Result<usize> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(scorer, reader, stream)
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting; open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_and_join();
        }
    }
}
