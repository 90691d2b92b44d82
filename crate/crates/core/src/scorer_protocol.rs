//! Client for external scorers speaking the `al-scorer` line protocol.
//!
//! The scorer is a child process. It first prints a handshake line
//!
//! ```text
//! {"protocol":"al-scorer","version":1}
//! ```
//!
//! then answers each request line on stdin with exactly one response line on
//! stdout:
//!
//! ```text
//! -> {"request_id":1,"texts":["raw text",...]}
//! <- {"request_id":1,"probs":[[p_not_hope,p_hope],...]}
//! ```
//!
//! One request is in flight at a time. Texts are sent un-normalized.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::classifier::{Learner, ProbDist, Scorer};
use crate::corpus::{Document, LabeledDocument};
use crate::error::{Error, ProtocolError};

pub const PROTOCOL_NAME: &str = "al-scorer";
pub const PROTOCOL_VERSION: u64 = 1;
/// Pairs summing to within this of one are renormalized; others rejected.
pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub version: u64,
}

impl Handshake {
    pub fn current() -> Self {
        Handshake {
            protocol: PROTOCOL_NAME.to_string(),
            version: PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub request_id: u64,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub request_id: u64,
    pub probs: Vec<Vec<f64>>,
}

impl ScoreResponse {
    /// Checks the response against the request it answers and converts the
    /// rows into distributions.
    pub fn validate(&self, request: &ScoreRequest) -> Result<Vec<ProbDist>, ProtocolError> {
        if self.request_id != request.request_id {
            return Err(ProtocolError::IdMismatch {
                expected: request.request_id,
                found: self.request_id,
            });
        }
        if self.probs.len() != request.texts.len() {
            return Err(ProtocolError::CountMismatch {
                expected: request.texts.len(),
                found: self.probs.len(),
            });
        }
        self.probs
            .iter()
            .enumerate()
            .map(|(row, pair)| match pair.as_slice() {
                &[a, b] => {
                    ProbDist::renormalized(a, b, SUM_TOLERANCE).map_err(|_| ProtocolError::BadProbability { row, a, b })
                }
                _ => Err(ProtocolError::Malformed {
                    line: serde_json::to_string(pair).unwrap_or_default(),
                    reason: format!("row {row} is not a pair"),
                }),
            })
            .collect()
    }
}

/// A running external scorer process.
pub struct ScorerSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    response_timeout: Option<Duration>,
}

impl std::fmt::Debug for ScorerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScorerSession")
            .field("pid", &self.child.id())
            .field("next_id", &self.next_id)
            .finish()
    }
}

impl ScorerSession {
    /// Starts `argv` and waits up to `timeout` for the handshake.
    pub fn spawn<S: AsRef<str>>(argv: &[S], timeout: Duration) -> Result<Self, ProtocolError> {
        let (program, args) = argv.split_first().ok_or(ProtocolError::EmptyCommand)?;
        let mut child = Command::new(program.as_ref())
            .args(args.iter().map(AsRef::as_ref))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ProtocolError::Spawn {
                command: program.as_ref().to_string(),
                source,
            })?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if tx.send(line).is_err() || failed {
                    break;
                }
            }
        });
        let mut session = ScorerSession {
            child,
            stdin,
            lines: rx,
            next_id: 1,
            response_timeout: None,
        };
        session.handshake(timeout)?;
        Ok(session)
    }

    /// Parses a command string such as `my_scorer --lang ur` with shell
    /// quoting rules, then spawns it.
    pub fn spawn_command(command: &str, timeout: Duration) -> Result<Self, ProtocolError> {
        let argv = shlex::split(command).ok_or_else(|| ProtocolError::BadCommand(command.to_string()))?;
        Self::spawn(&argv, timeout)
    }

    /// Bounds the wait for each response. Unbounded by default.
    pub fn with_response_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.response_timeout = timeout;
        self
    }

    fn handshake(&mut self, timeout: Duration) -> Result<(), ProtocolError> {
        let deadline = Instant::now() + timeout;
        let line = match self
            .lines
            .recv_timeout(deadline.saturating_duration_since(Instant::now()))
        {
            Ok(Ok(line)) => line,
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
            Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::HandshakeTimeout(timeout)),
        };
        let hs: Handshake =
            serde_json::from_str(line.trim_end_matches('\r')).map_err(|_| ProtocolError::BadHandshake(line.clone()))?;
        if hs.protocol != PROTOCOL_NAME {
            return Err(ProtocolError::BadHandshake(line));
        }
        if hs.version != PROTOCOL_VERSION {
            return Err(ProtocolError::VersionMismatch {
                expected: PROTOCOL_VERSION,
                found: hs.version,
            });
        }
        Ok(())
    }

    fn read_line(&mut self, request_id: u64) -> Result<String, ProtocolError> {
        let received = match self.response_timeout {
            Some(t) => self.lines.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => ProtocolError::ResponseTimeout(request_id),
                RecvTimeoutError::Disconnected => ProtocolError::Closed,
            })?,
            None => self.lines.recv().map_err(|_| ProtocolError::Closed)?,
        };
        received.map_err(|_| ProtocolError::Closed)
    }

    /// Sends one request and waits for its response.
    pub fn score_texts<S: AsRef<str>>(&mut self, texts: &[S]) -> Result<Vec<ProbDist>, ProtocolError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let request = ScoreRequest {
            request_id: self.next_id,
            texts: texts.iter().map(|t| t.as_ref().to_string()).collect(),
        };
        self.next_id += 1;
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or(ProtocolError::Closed)?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(ProtocolError::BrokenPipe)?;

        let reply = self.read_line(request.request_id)?;
        let response: ScoreResponse = serde_json::from_str(&reply).map_err(|e| ProtocolError::Malformed {
            line: reply.clone(),
            reason: e.to_string(),
        })?;
        response.validate(&request)
    }

    /// Id that the next request will carry.
    pub fn next_request_id(&self) -> u64 {
        self.next_id
    }
}

impl Scorer for ScorerSession {
    fn score_batch(&mut self, docs: &[Document]) -> crate::error::Result<Vec<ProbDist>> {
        let texts: Vec<&str> = docs.iter().map(|d| d.raw_text.as_str()).collect();
        Ok(self.score_texts(&texts)?)
    }
}

/// External models are trained out of process; refitting is a no-op.
impl Learner for ScorerSession {
    fn fit(&mut self, _labeled: &[LabeledDocument]) -> Result<(), Error> {
        Ok(())
    }
}

impl Drop for ScorerSession {
    fn drop(&mut self) {
        // closing stdin asks a well-behaved scorer to exit
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(_) => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
