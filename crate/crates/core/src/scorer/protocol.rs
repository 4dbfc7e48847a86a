//! Newline-delimited JSON protocol for out-of-process scorers.
//!
//! ```text
//! > {"v":1,"op":"extend","words":["he","she"]}
//! < {"ok":true}
//! > {"v":1,"op":"score","id":0,"tokens":["[MASK]","runs"],"mask":0,"candidates":["she","he"]}
//! < {"id":0,"scores":{"he":0.6,"she":0.4}}
//! > {"v":1,"op":"bye"}
//! ```
//!
//! A refused extension is answered with `{"ok":false,"word":w}`; a server may
//! answer any request with `{"id":n,"error":"..."}`. Score requests may be
//! pipelined; responses are matched by `id`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::{CandidateScores, Scorer, ScorerQuery};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum RequestBody {
    Extend {
        words: Vec<String>,
    },
    Score {
        id: u64,
        tokens: Vec<String>,
        mask: usize,
        candidates: Vec<String>,
    },
    Bye,
}

impl Request {
    pub fn new(body: RequestBody) -> Request {
        Request {
            v: PROTOCOL_VERSION,
            body,
        }
    }

    pub fn score(id: u64, query: &ScorerQuery) -> Request {
        Request::new(RequestBody::Score {
            id,
            tokens: query.tokens.clone(),
            mask: query.mask_index,
            candidates: query.candidates.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Scores {
        id: u64,
        scores: BTreeMap<String, f64>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        error: String,
    },
    Ack {
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        word: Option<String>,
    },
}

pub fn encode<T: Serialize>(message: &T) -> Result<String> {
    let mut line = serde_json::to_string(message)?;
    line.push('\n');
    Ok(line)
}

/// Rounds to nine significant digits, the float format servers emit.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    closed: bool,
}

impl Connection {
    fn send(&mut self, request: &Request) -> Result<()> {
        self.writer.write_all(encode(request)?.as_bytes())?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Response> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("connection closed by scorer".into()));
        }
        serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Protocol(format!("unparseable response `{}`: {e}", line.trim_end())))
    }
}

/// Client side of the protocol. Usable from several threads; requests on one
/// connection are serialized internally.
pub struct ProtocolScorer {
    conn: Mutex<Connection>,
    next_id: AtomicU64,
    extended: AtomicBool,
    name: String,
}

impl ProtocolScorer {
    pub fn new(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        name: impl Into<String>,
    ) -> ProtocolScorer {
        ProtocolScorer {
            conn: Mutex::new(Connection {
                reader: Box::new(reader),
                writer: Box::new(writer),
                child: None,
                closed: false,
            }),
            next_id: AtomicU64::new(0),
            extended: AtomicBool::new(false),
            name: name.into(),
        }
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<ProtocolScorer> {
        let name = format!("external-tcp({addr})");
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(ProtocolScorer::new(reader, stream, name))
    }

    /// Spawns `command` (whitespace-separated program and arguments) and
    /// talks to it over its stdin and stdout.
    pub fn spawn(command: &str) -> Result<ProtocolScorer> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Protocol("empty scorer command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let scorer = ProtocolScorer::new(
            BufReader::new(stdout),
            stdin,
            format!("external-stdio({command})"),
        );
        scorer.conn.lock().expect("fresh mutex").child = Some(child);
        Ok(scorer)
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, Connection>> {
        self.conn
            .lock()
            .map_err(|_| Error::Protocol("connection poisoned by an earlier panic".into()))
    }

    /// Sends `bye` and waits for a spawned server to exit. Idempotent.
    pub fn shutdown(&self) -> Result<()> {
        let mut conn = self.lock()?;
        if conn.closed {
            return Ok(());
        }
        conn.closed = true;
        conn.send(&Request::new(RequestBody::Bye))?;
        conn.writer.flush()?;
        if let Some(mut child) = conn.child.take() {
            drop(std::mem::replace(&mut conn.writer, Box::new(std::io::sink())));
            child.wait()?;
        }
        Ok(())
    }

    fn ensure_extended(&self) -> Result<()> {
        if self.extended.load(Ordering::Acquire) {
            Ok(())
        } else {
            Err(Error::Protocol(
                "score requested before vocabulary extension was acknowledged".into(),
            ))
        }
    }
}

fn take_scores(response: Response, query: &ScorerQuery) -> Result<(u64, CandidateScores)> {
    match response {
        Response::Scores { id, scores } => Ok((id, CandidateScores(scores).checked_for(query)?)),
        Response::Error { error, .. } => Err(Error::Protocol(format!("server error: {error}"))),
        Response::Ack { .. } => Err(Error::Protocol("expected scores, got acknowledgment".into())),
    }
}

impl Scorer for ProtocolScorer {
    fn identity(&self) -> String {
        self.name.clone()
    }

    fn extend_vocabulary(&self, words: &[String]) -> Result<()> {
        let mut conn = self.lock()?;
        conn.send(&Request::new(RequestBody::Extend {
            words: words.to_vec(),
        }))?;
        conn.writer.flush()?;
        match conn.recv()? {
            Response::Ack { ok: true, .. } => {
                self.extended.store(true, Ordering::Release);
                Ok(())
            }
            Response::Ack { ok: false, word } => Err(Error::ExtensionRefused(
                word.unwrap_or_else(|| "<unspecified>".into()),
            )),
            Response::Error { error, .. } => Err(Error::Protocol(format!("server error: {error}"))),
            Response::Scores { .. } => {
                Err(Error::Protocol("expected acknowledgment, got scores".into()))
            }
        }
    }

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores> {
        let mut out = self.score_batch(std::slice::from_ref(query))?;
        Ok(out.pop().expect("one response per query"))
    }

    fn score_batch(&self, queries: &[ScorerQuery]) -> Result<Vec<CandidateScores>> {
        self.ensure_extended()?;
        for q in queries {
            q.validate()?;
        }
        let mut conn = self.lock()?;
        let first = self.next_id.fetch_add(queries.len() as u64, Ordering::Relaxed);
        for (offset, q) in queries.iter().enumerate() {
            conn.send(&Request::score(first + offset as u64, q))?;
        }
        conn.writer.flush()?;
        let mut by_id = HashMap::with_capacity(queries.len());
        for _ in 0..queries.len() {
            let response = conn.recv()?;
            let id = match &response {
                Response::Scores { id, .. } => *id,
                Response::Error { error, .. } => {
                    return Err(Error::Protocol(format!("server error: {error}")))
                }
                Response::Ack { .. } => {
                    return Err(Error::Protocol("expected scores, got acknowledgment".into()))
                }
            };
            if id < first || id >= first + queries.len() as u64 {
                return Err(Error::Protocol(format!("response for unknown id {id}")));
            }
            if by_id.insert(id, response).is_some() {
                return Err(Error::Protocol(format!("duplicate response for id {id}")));
            }
        }
        queries
            .iter()
            .enumerate()
            .map(|(offset, q)| {
                let response = by_id.remove(&(first + offset as u64)).expect("all ids seen");
                take_scores(response, q).map(|(_, s)| s)
            })
            .collect()
    }
}

impl Drop for ProtocolScorer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Serves `scorer` over one connection until `bye` or end of input.
/// Malformed lines are answered with an error frame.
pub fn serve(scorer: &dyn Scorer, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response::Error {
                id: None,
                error: format!("malformed request: {e}"),
            },
            Ok(req) if req.v != PROTOCOL_VERSION => Response::Error {
                id: None,
                error: format!("unsupported protocol version {}", req.v),
            },
            Ok(req) => match req.body {
                RequestBody::Bye => break,
                RequestBody::Extend { words } => match scorer.extend_vocabulary(&words) {
                    Ok(()) => Response::Ack { ok: true, word: None },
                    Err(Error::ExtensionRefused(word)) => Response::Ack {
                        ok: false,
                        word: Some(word),
                    },
                    Err(e) => Response::Error {
                        id: None,
                        error: e.to_string(),
                    },
                },
                RequestBody::Score {
                    id,
                    tokens,
                    mask,
                    candidates,
                } => {
                    let query = ScorerQuery {
                        tokens,
                        mask_index: mask,
                        candidates,
                    };
                    match scorer.score(&query) {
                        Ok(scores) => Response::Scores {
                            id,
                            scores: scores.0.into_iter().map(|(k, v)| (k, round_sig9(v))).collect(),
                        },
                        Err(e) => Response::Error {
                            id: Some(id),
                            error: e.to_string(),
                        },
                    }
                }
            },
        };
        writer.write_all(encode(&response)?.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}
