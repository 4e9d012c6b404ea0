//! Client for out-of-process scorers speaking a line protocol:
//! `SCORE <id> <smiles>` answered by `OK <id> <score>` or `ERR <id> <message>`.
//! Ids increase by one per request on each connection, starting at 1, and
//! only one request is in flight at a time.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use molrnn_core::critics::{Critic, CriticError};
use molrnn_core::smiles;
use molrnn_core::MolGraph;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `exec:program arg...`, talking over the child's stdin and stdout.
    Spawn { program: String, args: Vec<String> },
}

impl Endpoint {
    pub fn parse(spec: &str) -> Result<Self, ExternalError> {
        if let Some(addr) = spec.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(ExternalError::Endpoint(spec.to_string()));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = spec.strip_prefix("exec:") {
            let mut words = cmd.split_whitespace().map(str::to_string);
            let program = words.next().ok_or_else(|| ExternalError::Endpoint(spec.to_string()))?;
            return Ok(Endpoint::Spawn {
                program,
                args: words.collect(),
            });
        }
        Err(ExternalError::Endpoint(spec.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("endpoint {0:?} is neither tcp://host:port nor exec:command")]
    Endpoint(String),
    #[error("cannot reach scorer: {0}")]
    Connect(std::io::Error),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("scorer closed the connection")]
    Closed,
    #[error("reply id {found} does not answer request {expected}")]
    Desync { expected: u64, found: u64 },
    #[error("malformed reply {0:?}")]
    Malformed(String),
    #[error("scorer error: {0}")]
    Scorer(String),
    #[error("molecule cannot be written as SMILES: {0}")]
    Unwritable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExternalError {
    /// Faults of the transport, after which the connection is reopened.
    fn is_transport(&self) -> bool {
        matches!(
            self,
            ExternalError::Timeout(_) | ExternalError::Closed | ExternalError::Desync { .. } | ExternalError::Io(_)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProtocolStats {
    pub requests: u64,
    pub replies: u64,
    /// Connections opened, including the first.
    pub connections: u64,
    pub desyncs: u64,
    pub timeouts: u64,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    replies: Receiver<std::io::Result<String>>,
    next_id: u64,
    child: Option<Child>,
    tcp: Option<TcpStream>,
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Self, ExternalError> {
        let (tx, replies) = mpsc::channel();
        let pump = move |reader: Box<dyn BufRead + Send>| {
            thread::spawn(move || {
                for line in reader.lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
        };
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(ExternalError::Connect)?;
                stream.set_nodelay(true).ok();
                pump(Box::new(BufReader::new(stream.try_clone()?)));
                Ok(Connection {
                    writer: Box::new(stream.try_clone()?),
                    replies,
                    next_id: 1,
                    child: None,
                    tcp: Some(stream),
                })
            }
            Endpoint::Spawn { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(ExternalError::Connect)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                pump(Box::new(BufReader::new(stdout)));
                Ok(Connection {
                    writer: Box::new(stdin),
                    replies,
                    next_id: 1,
                    child: Some(child),
                    tcp: None,
                })
            }
        }
    }

    fn request(&mut self, smiles: &str, timeout: Duration, stats: &mut ProtocolStats) -> Result<f64, ExternalError> {
        let id = self.next_id;
        self.next_id += 1;
        stats.requests += 1;
        self.writer.write_all(format!("SCORE {id} {smiles}\n").as_bytes())?;
        self.writer.flush()?;
        let line = match self.replies.recv_timeout(timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => {
                stats.timeouts += 1;
                return Err(ExternalError::Timeout(timeout));
            }
            Err(RecvTimeoutError::Disconnected) => return Err(ExternalError::Closed),
        };
        stats.replies += 1;
        let malformed = || ExternalError::Malformed(line.clone());
        let mut parts = line.splitn(3, ' ');
        let status = parts.next().unwrap_or("");
        let found: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(malformed)?;
        let rest = parts.next().unwrap_or("").trim();
        if found != id {
            stats.desyncs += 1;
            return Err(ExternalError::Desync { expected: id, found });
        }
        match status {
            "OK" => rest.parse::<f64>().ok().filter(|s| s.is_finite()).ok_or_else(malformed),
            "ERR" => Err(ExternalError::Scorer(rest.to_string())),
            _ => Err(malformed()),
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(stream) = &self.tcp {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A [`Critic`] backed by an external scorer. The connection opens lazily
/// and is reopened after timeouts, disconnects or id mismatches, up to
/// `retries` extra attempts per molecule.
pub struct ExternalCritic {
    endpoint: Endpoint,
    timeout: Duration,
    retries: usize,
    name: String,
    conn: Option<Connection>,
    pub stats: ProtocolStats,
}

impl ExternalCritic {
    pub fn new(endpoint: Endpoint, timeout: Duration, retries: usize) -> Self {
        let name = match &endpoint {
            Endpoint::Tcp(addr) => format!("external:tcp://{addr}"),
            Endpoint::Spawn { program, .. } => format!("external:exec:{program}"),
        };
        ExternalCritic {
            endpoint,
            timeout,
            retries,
            name,
            conn: None,
            stats: ProtocolStats::default(),
        }
    }

    pub fn score_smiles(&mut self, smiles: &str) -> Result<f64, ExternalError> {
        let mut attempt = 0;
        loop {
            if self.conn.is_none() {
                self.conn = Some(Connection::open(&self.endpoint)?);
                self.stats.connections += 1;
            }
            let conn = self.conn.as_mut().expect("connection just opened");
            match conn.request(smiles, self.timeout, &mut self.stats) {
                Err(e) if e.is_transport() => {
                    self.conn = None;
                    if attempt >= self.retries {
                        return Err(e);
                    }
                    log::warn!("{}: {e}; retrying", self.name);
                    attempt += 1;
                }
                result => return result,
            }
        }
    }
}

impl Critic for ExternalCritic {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, g: &MolGraph) -> Result<f64, CriticError> {
        let text = smiles::write(g).map_err(|e| CriticError::Failed(ExternalError::Unwritable(e.to_string()).to_string()))?;
        self.score_smiles(&text).map_err(|e| CriticError::Failed(e.to_string()))
    }
}
