//! Line-delimited JSON protocol for providers that run as child processes.
//!
//! A provider writes one handshake line `{"fingerprint": ..., "dim": ...}`
//! on startup, then answers each request line with one response line
//! carrying the same `id`. Failures are reported as `{"id": .., "error": ..}`.
//! Span offsets on the wire are character offsets.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::dense::{validate_vector, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::reader::{AnswerCandidate, ReaderProvider};
use crate::synthgen::{byte_to_char, char_to_byte, GeneratedSequence, GeneratorProvider};

/// Milliseconds to wait for the handshake and for each response.
pub const TIMEOUT_ENV: &str = "ORQA_PROVIDER_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    EmbedQuery {
        id: u64,
        text: String,
    },
    EmbedPassage {
        id: u64,
        #[serde(default)]
        title: String,
        text: String,
    },
    Generate {
        id: u64,
        text: String,
        n: usize,
        k: usize,
        p: f64,
    },
    Read {
        id: u64,
        question: String,
        text: String,
    },
    ScoreSpan {
        id: u64,
        question: String,
        text: String,
        start: usize,
        end: usize,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match *self {
            Self::EmbedQuery { id, .. }
            | Self::EmbedPassage { id, .. }
            | Self::Generate { id, .. }
            | Self::Read { id, .. }
            | Self::ScoreSpan { id, .. } => id,
        }
    }

    fn with_id(mut self, new: u64) -> Self {
        match &mut self {
            Self::EmbedQuery { id, .. }
            | Self::EmbedPassage { id, .. }
            | Self::Generate { id, .. }
            | Self::Read { id, .. }
            | Self::ScoreSpan { id, .. } => *id = new,
        }
        self
    }
}

/// Union of all response shapes; which fields are set depends on the request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequences: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn missing(field: &str) -> Error {
    Error::Provider(format!("response is missing {field:?}"))
}

pub fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

struct Channel {
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A running provider process. Requests are serialized over one pipe.
pub struct SubprocessClient {
    command: String,
    child: Child,
    channel: Mutex<Channel>,
    handshake: Handshake,
    timeout: Duration,
}

impl SubprocessClient {
    /// Launches `command` (split with shell quoting rules) and reads its handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, timeout_from_env())
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::invalid(format!("cannot parse provider command {command:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Provider(format!("cannot launch {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut client = Self {
            command: command.to_owned(),
            child,
            channel: Mutex::new(Channel {
                stdin,
                lines: rx,
                next_id: 0,
            }),
            handshake: Handshake {
                fingerprint: String::new(),
                dim: None,
            },
            timeout,
        };
        let line = {
            let channel = client.channel.get_mut().expect("fresh mutex");
            client_recv(&channel.lines, timeout, &client.command)?
        };
        client.handshake = serde_json::from_str(&line)
            .map_err(|e| Error::Provider(format!("bad handshake from {command:?}: {e}")))?;
        Ok(client)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends one request (its id is reassigned) and waits for the matching response.
    pub fn call(&self, request: Request) -> Result<Response> {
        let mut ch = self
            .channel
            .lock()
            .map_err(|_| Error::Provider("provider channel poisoned".into()))?;
        let id = ch.next_id;
        ch.next_id += 1;
        let mut line = serde_json::to_string(&request.with_id(id)).expect("requests serialize");
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| Error::Provider(format!("{}: write failed: {e}", self.command)))?;
        let reply = client_recv(&ch.lines, self.timeout, &self.command)?;
        let resp: Response = serde_json::from_str(&reply).map_err(|e| {
            Error::Provider(format!("{}: bad response {reply:?}: {e}", self.command))
        })?;
        if resp.id != id {
            return Err(Error::Provider(format!(
                "{}: response id {} does not match request {id}",
                self.command, resp.id
            )));
        }
        if let Some(err) = resp.error {
            return Err(Error::Provider(format!("{}: {err}", self.command)));
        }
        Ok(resp)
    }
}

fn client_recv(
    lines: &Receiver<std::io::Result<String>>,
    timeout: Duration,
    command: &str,
) -> Result<String> {
    match lines.recv_timeout(timeout) {
        Ok(Ok(line)) => Ok(line),
        Ok(Err(e)) => Err(Error::Provider(format!("{command}: read failed: {e}"))),
        Err(RecvTimeoutError::Timeout) => Err(Error::Provider(format!(
            "{command}: no response within {} ms (set {TIMEOUT_ENV} to change)",
            timeout.as_millis()
        ))),
        Err(RecvTimeoutError::Disconnected) => {
            Err(Error::Provider(format!("{command}: provider exited")))
        }
    }
}

impl Drop for SubprocessClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct SubprocessEmbedder {
    client: SubprocessClient,
    dim: usize,
}

impl SubprocessEmbedder {
    pub fn spawn(command: &str) -> Result<Self> {
        Self::from_client(SubprocessClient::spawn(command)?)
    }

    pub fn from_client(client: SubprocessClient) -> Result<Self> {
        let dim = client.handshake().dim.filter(|&d| d > 0).ok_or_else(|| {
            Error::Provider(format!(
                "{}: embedding handshake lacks a positive dim",
                client.command()
            ))
        })?;
        Ok(Self { client, dim })
    }

    fn vector(&self, request: Request, what: &str) -> Result<Vec<f32>> {
        let v = self
            .client
            .call(request)?
            .vector
            .ok_or_else(|| missing("vector"))?;
        validate_vector(what, &v, self.dim)?;
        Ok(v)
    }
}

impl EmbeddingProvider for SubprocessEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        self.client.handshake().fingerprint.clone()
    }

    fn embed_query(&self, text: &str) -> Result<Vec<f32>> {
        self.vector(
            Request::EmbedQuery {
                id: 0,
                text: text.to_owned(),
            },
            "query",
        )
    }

    fn embed_passage(&self, title: &str, text: &str) -> Result<Vec<f32>> {
        self.vector(
            Request::EmbedPassage {
                id: 0,
                title: title.to_owned(),
                text: text.to_owned(),
            },
            "passage",
        )
    }
}

pub struct SubprocessGenerator {
    client: SubprocessClient,
}

impl SubprocessGenerator {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(Self {
            client: SubprocessClient::spawn(command)?,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.client.handshake().fingerprint
    }
}

impl GeneratorProvider for SubprocessGenerator {
    fn generate(
        &self,
        passage_text: &str,
        n: usize,
        k: usize,
        p: f64,
    ) -> Result<Vec<GeneratedSequence>> {
        let resp = self.client.call(Request::Generate {
            id: 0,
            text: passage_text.to_owned(),
            n,
            k,
            p,
        })?;
        Ok(resp
            .sequences
            .ok_or_else(|| missing("sequences"))?
            .into_iter()
            .map(GeneratedSequence)
            .collect())
    }
}

pub struct SubprocessReader {
    client: SubprocessClient,
}

impl SubprocessReader {
    pub fn spawn(command: &str) -> Result<Self> {
        Ok(Self {
            client: SubprocessClient::spawn(command)?,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.client.handshake().fingerprint
    }
}

impl ReaderProvider for SubprocessReader {
    fn read(&self, question: &str, passage: &Passage) -> Result<AnswerCandidate> {
        let resp = self.client.call(Request::Read {
            id: 0,
            question: question.to_owned(),
            text: passage.text.clone(),
        })?;
        let (cs, ce) = (
            resp.start.ok_or_else(|| missing("start"))?,
            resp.end.ok_or_else(|| missing("end"))?,
        );
        let bad_span = || {
            Error::Provider(format!(
                "reader span {cs}..{ce} outside passage {}",
                passage.id
            ))
        };
        let start = char_to_byte(&passage.text, cs).ok_or_else(bad_span)?;
        let end = char_to_byte(&passage.text, ce)
            .filter(|&e| e > start)
            .ok_or_else(bad_span)?;
        let text = passage.text[start..end].to_owned();
        if resp.text.as_deref().is_some_and(|t| t != text) {
            return Err(Error::Provider(format!(
                "reader text {:?} does not match span {cs}..{ce} of passage {}",
                resp.text.unwrap_or_default(),
                passage.id
            )));
        }
        Ok(AnswerCandidate {
            text,
            start,
            end,
            reader_score: resp.score.ok_or_else(|| missing("score"))?,
            passage_id: passage.id.clone(),
        })
    }

    fn score_span(
        &self,
        question: &str,
        passage: &Passage,
        start: usize,
        end: usize,
    ) -> Result<f64> {
        if passage.text.get(start..end).is_none() || end <= start {
            return Err(Error::invalid(format!(
                "invalid span {start}..{end} in passage {}",
                passage.id
            )));
        }
        let resp = self.client.call(Request::ScoreSpan {
            id: 0,
            question: question.to_owned(),
            text: passage.text.clone(),
            start: byte_to_char(&passage.text, start),
            end: byte_to_char(&passage.text, end),
        })?;
        resp.score.ok_or_else(|| missing("score"))
    }
}

/// Answers requests from `input` until it closes, writing responses to `output`.
///
/// Errors from `handle` are sent as error responses; malformed request lines
/// get an error response with id 0.
pub fn serve(
    handshake: &Handshake,
    input: impl BufRead,
    mut output: impl Write,
    mut handle: impl FnMut(Request) -> Result<Response>,
) -> std::io::Result<()> {
    emit(&mut output, handshake)?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let id = req.id();
                handle(req)
                    .map(|r| Response { id, ..r })
                    .unwrap_or_else(|e| Response {
                        id,
                        error: Some(e.to_string()),
                        ..Response::default()
                    })
            }
            Err(e) => Response {
                error: Some(format!("bad request: {e}")),
                ..Response::default()
            },
        };
        emit(&mut output, &resp)?;
    }
    Ok(())
}

fn emit(out: &mut impl Write, value: &impl Serialize) -> std::io::Result<()> {
    let mut line = serde_json::to_string(value).expect("protocol types serialize");
    line.push('\n');
    out.write_all(line.as_bytes())?;
    out.flush()
}

fn unsupported(req: &Request) -> Error {
    Error::Provider(format!("unsupported request {:?}", op_name(req)))
}

fn op_name(req: &Request) -> &'static str {
    match req {
        Request::EmbedQuery { .. } => "embed_query",
        Request::EmbedPassage { .. } => "embed_passage",
        Request::Generate { .. } => "generate",
        Request::Read { .. } => "read",
        Request::ScoreSpan { .. } => "score_span",
    }
}

pub fn serve_embedder(
    provider: &dyn EmbeddingProvider,
    input: impl BufRead,
    output: impl Write,
) -> std::io::Result<()> {
    let hs = Handshake {
        fingerprint: provider.fingerprint(),
        dim: Some(provider.dim()),
    };
    serve(&hs, input, output, |req| {
        let vector = match &req {
            Request::EmbedQuery { text, .. } => provider.embed_query(text)?,
            Request::EmbedPassage { title, text, .. } => provider.embed_passage(title, text)?,
            other => return Err(unsupported(other)),
        };
        Ok(Response {
            vector: Some(vector),
            ..Response::default()
        })
    })
}

pub fn serve_generator(
    provider: &dyn GeneratorProvider,
    fingerprint: &str,
    input: impl BufRead,
    output: impl Write,
) -> std::io::Result<()> {
    let hs = Handshake {
        fingerprint: fingerprint.to_owned(),
        dim: None,
    };
    serve(&hs, input, output, |req| match &req {
        Request::Generate { text, n, k, p, .. } => Ok(Response {
            sequences: Some(
                provider
                    .generate(text, *n, *k, *p)?
                    .into_iter()
                    .map(|s| s.0)
                    .collect(),
            ),
            ..Response::default()
        }),
        other => Err(unsupported(other)),
    })
}

pub fn serve_reader(
    provider: &dyn ReaderProvider,
    fingerprint: &str,
    input: impl BufRead,
    output: impl Write,
) -> std::io::Result<()> {
    let hs = Handshake {
        fingerprint: fingerprint.to_owned(),
        dim: None,
    };
    serve(&hs, input, output, |req| match req {
        Request::Read { question, text, .. } => {
            let passage = Passage::new("request", text);
            let a = provider.read(&question, &passage)?;
            Ok(Response {
                start: Some(byte_to_char(&passage.text, a.start)),
                end: Some(byte_to_char(&passage.text, a.end)),
                text: Some(a.text),
                score: Some(a.reader_score),
                ..Response::default()
            })
        }
        Request::ScoreSpan {
            question,
            text,
            start,
            end,
            ..
        } => {
            let passage = Passage::new("request", text);
            let bad = || Error::invalid(format!("span {start}..{end} outside the text"));
            let s = char_to_byte(&passage.text, start).ok_or_else(bad)?;
            let e = char_to_byte(&passage.text, end).ok_or_else(bad)?;
            Ok(Response {
                score: Some(provider.score_span(&question, &passage, s, e)?),
                ..Response::default()
            })
        }
        other => Err(unsupported(&other)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::HashEmbedder;
    use crate::reader::LexicalReader;

    fn transcript(input: &str, run: impl FnOnce(&[u8], &mut Vec<u8>)) -> Vec<serde_json::Value> {
        let mut out = Vec::new();
        run(input.as_bytes(), &mut out);
        String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn embedder_server_round_trip() {
        let e = HashEmbedder::new(8);
        let lines = transcript(
            "{\"op\":\"embed_query\",\"id\":3,\"text\":\"fever\"}\n\nnot json\n{\"op\":\"generate\",\"id\":4,\"text\":\"x\",\"n\":1,\"k\":1,\"p\":0.5}\n",
            |i, o| serve_embedder(&e, i, o).unwrap(),
        );
        assert_eq!(lines[0]["dim"], 8);
        assert_eq!(lines[0]["fingerprint"], e.fingerprint());
        assert_eq!(lines[1]["id"], 3);
        let v: Vec<f32> = serde_json::from_value(lines[1]["vector"].clone()).unwrap();
        assert_eq!(v, e.embed_query("fever").unwrap());
        assert!(lines[2]["error"]
            .as_str()
            .unwrap()
            .starts_with("bad request"));
        assert_eq!(lines[3]["id"], 4);
        assert!(lines[3]["error"].is_string());
    }

    #[test]
    fn reader_server_uses_char_offsets() {
        let r = LexicalReader::default();
        let text = "Ünïcode intro. The sky is blue.";
        let req = serde_json::json!({"op": "read", "id": 1, "question": "sky blue", "text": text});
        let lines = transcript(&format!("{req}\n"), |i, o| {
            serve_reader(&r, "lexical", i, o).unwrap()
        });
        assert_eq!(lines[1]["text"], "The sky is blue.");
        assert_eq!(lines[1]["start"], 15);
        assert_eq!(lines[1]["end"], 31);
        assert_eq!(lines[1]["score"], 2.0);
    }

    #[test]
    fn request_wire_format() {
        let r = Request::EmbedPassage {
            id: 2,
            title: "T".into(),
            text: "x".into(),
        };
        let j = serde_json::to_value(&r).unwrap();
        assert_eq!(
            j,
            serde_json::json!({"op": "embed_passage", "id": 2, "title": "T", "text": "x"})
        );
        assert_eq!(r.with_id(9).id(), 9);
    }

    #[test]
    fn spawn_failures_are_provider_errors() {
        assert!(matches!(
            SubprocessClient::spawn_with_timeout(
                "/nonexistent/provider-binary",
                Duration::from_millis(200)
            ),
            Err(Error::Provider(_))
        ));
        assert!(SubprocessClient::spawn_with_timeout("", Duration::from_millis(200)).is_err());
        // Exits without a handshake.
        assert!(SubprocessClient::spawn_with_timeout("true", Duration::from_secs(5)).is_err());
    }
}
