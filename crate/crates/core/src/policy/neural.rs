//! Client for the neural policy service: newline-delimited JSON over TCP or
//! a child process's stdio, one request in flight per connection.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;

use super::{Policy, PolicyError};
use crate::grammar::{DerivationState, RuleId, RULE_COUNT};
use crate::rational::Condition;

/// Environment variable that overrides the service address.
pub const ENDPOINT_ENV: &str = "ASYMREG_POLICY_ENDPOINT";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port`
    Tcp(String),
    /// Shell command whose stdin/stdout speak the protocol.
    Stdio(String),
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("stdio:") {
            if cmd.trim().is_empty() {
                return Err("empty stdio command".into());
            }
            return Ok(Endpoint::Stdio(cmd.to_string()));
        }
        let addr = s.strip_prefix("tcp://").unwrap_or(s);
        match addr.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                Ok(Endpoint::Tcp(addr.to_string()))
            }
            _ => Err(format!(
                "invalid endpoint {s:?}, expected tcp://host:port or stdio:COMMAND"
            )),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp://{addr}"),
            Endpoint::Stdio(cmd) => write!(f, "stdio:{cmd}"),
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    rules: &'a [RuleId],
    c0: i32,
    cinf: i32,
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    next_id: u64,
    child: Option<Child>,
}

impl Connection {
    fn round_trip(&mut self, line: &str) -> Result<Value, PolicyError> {
        let unavailable = |e: std::io::Error| PolicyError::ServiceUnavailable(e.to_string());
        self.writer
            .write_all(format!("{line}\n").as_bytes())
            .map_err(unavailable)?;
        self.writer.flush().map_err(unavailable)?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply).map_err(unavailable)? == 0 {
            return Err(PolicyError::ServiceUnavailable("connection closed".into()));
        }
        serde_json::from_str(&reply).map_err(|e| PolicyError::Protocol(format!("malformed reply: {e}")))
    }
}

/// A single connection to the service. Calls are serialized by a mutex, so
/// one client may be shared, but parallel workers should each connect.
pub struct NeuralPolicyClient {
    conn: Mutex<Connection>,
    endpoint: Option<Endpoint>,
}

impl NeuralPolicyClient {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, PolicyError> {
        let unavailable = |e: std::io::Error| PolicyError::ServiceUnavailable(format!("{endpoint}: {e}"));
        let conn = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(unavailable)?;
                stream.set_nodelay(true).map_err(unavailable)?;
                let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
                Connection {
                    reader: Box::new(reader),
                    writer: Box::new(stream),
                    next_id: 0,
                    child: None,
                }
            }
            Endpoint::Stdio(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(unavailable)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    next_id: 0,
                    child: Some(child),
                }
            }
        };
        Ok(NeuralPolicyClient {
            conn: Mutex::new(conn),
            endpoint: Some(endpoint.clone()),
        })
    }

    /// Connects to the endpoint named by [`ENDPOINT_ENV`], or `default`.
    pub fn from_env_or(default: &Endpoint) -> Result<Self, PolicyError> {
        match std::env::var(ENDPOINT_ENV) {
            Ok(s) if !s.is_empty() => Self::connect(&s.parse().map_err(PolicyError::ServiceUnavailable)?),
            _ => Self::connect(default),
        }
    }

    /// Wraps an already-open duplex stream.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        NeuralPolicyClient {
            conn: Mutex::new(Connection {
                reader: Box::new(reader),
                writer: Box::new(writer),
                next_id: 0,
                child: None,
            }),
            endpoint: None,
        }
    }

    pub fn endpoint(&self) -> Option<&Endpoint> {
        self.endpoint.as_ref()
    }

    pub fn ping(&self) -> Result<(), PolicyError> {
        let mut conn = self.lock()?;
        let reply = conn.round_trip(r#"{"op":"ping"}"#)?;
        match reply.get("op").and_then(Value::as_str) {
            Some("pong") => Ok(()),
            _ => Err(PolicyError::Protocol(format!("expected pong, got {reply}"))),
        }
    }

    /// Raw next-rule probabilities as sent by the service.
    pub fn query(&self, rules: &[RuleId], condition: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        let mut conn = self.lock()?;
        let id = conn.next_id;
        conn.next_id += 1;
        let line = serde_json::to_string(&Request {
            id,
            rules,
            c0: condition.c0,
            cinf: condition.cinf,
        })
        .expect("request serializes");
        let reply = conn.round_trip(&line)?;
        parse_reply(&reply, id)
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, Connection>, PolicyError> {
        self.conn
            .lock()
            .map_err(|_| PolicyError::ServiceUnavailable("connection poisoned by an earlier panic".into()))
    }
}

fn parse_reply(reply: &Value, id: u64) -> Result<[f64; RULE_COUNT], PolicyError> {
    let got = reply.get("id").and_then(Value::as_u64);
    if got != Some(id) {
        return Err(PolicyError::Protocol(format!(
            "reply id {got:?} does not match request id {id}"
        )));
    }
    if let Some(err) = reply.get("error") {
        return Err(PolicyError::Protocol(format!("service error: {err}")));
    }
    let probs = reply
        .get("probs")
        .and_then(Value::as_array)
        .ok_or_else(|| PolicyError::Protocol("reply has no probs array".into()))?;
    if probs.len() != RULE_COUNT {
        return Err(PolicyError::Protocol(format!(
            "expected {RULE_COUNT} probs, got {}",
            probs.len()
        )));
    }
    let mut out = [0.0; RULE_COUNT];
    for (slot, p) in out.iter_mut().zip(probs) {
        match p.as_f64() {
            Some(v) if v.is_finite() && v >= 0.0 => *slot = v,
            _ => return Err(PolicyError::Protocol(format!("invalid probability {p}"))),
        }
    }
    Ok(out)
}

impl Policy for NeuralPolicyClient {
    fn raw_distribution(
        &self,
        state: &DerivationState,
        condition: Condition,
    ) -> Result<[f64; RULE_COUNT], PolicyError> {
        self.query(state.rules(), condition)
    }
}

impl Drop for NeuralPolicyClient {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl fmt::Debug for NeuralPolicyClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeuralPolicyClient")
            .field("endpoint", &self.endpoint)
            .finish()
    }
}
