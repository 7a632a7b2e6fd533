//! Subprocess adapter: any executable that speaks the newline-delimited
//! JSON protocol below can stand in as a classifier.
//!
//! Requests go to the process's standard input, one JSON object per line;
//! responses come back on standard output, one line per request, in request
//! order:
//!
//! ```text
//! {"op":"fit","examples":[{"text":"...","label":"..."},...]}   -> {"ok":true}
//! {"op":"predict","text":"..."}                                -> {"label":"...","confidence":0.87}
//! ```
//!
//! Any response may instead be `{"ok":false,"error":"..."}`. The adapter
//! distinguishes three failure modes: the process died, the process wrote
//! something that is not protocol, and the process took too long.
//!
//! [`serve_protocol`] is the other side of the same wire: it exposes any
//! in-process [`Classifier`] to a host speaking the protocol, and is what
//! `nexcv serve` runs on stdin/stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifierFactory, Prediction};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};

/// Default per-call timeout.
const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// How to start an engine process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl EngineCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = String>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().collect(),
        }
    }

    /// Parses a whitespace-separated invocation such as
    /// `python3 my_engine.py --fast`. No shell quoting is interpreted.
    pub fn parse(invocation: &str) -> Result<Self> {
        let mut parts = invocation.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty engine command".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Fit { examples: &'a [LabeledExample] },
    Predict { text: &'a str },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum WireResponse {
    Ack {
        ok: bool,
        #[serde(default)]
        error: Option<String>,
    },
    Pred {
        label: String,
        confidence: f64,
    },
}

/// A classifier backed by a child process speaking the line protocol.
/// One in-flight request at a time; `predict` serializes calls through a
/// mutex. The child is killed when the adapter is dropped.
pub struct ExternalClassifier {
    wire: Mutex<Wire>,
    timeout: Duration,
    fitted: bool,
}

struct Wire {
    child: Child,
    stdin: ChildStdin,
    responses: Receiver<std::io::Result<String>>,
    /// 1-based count of response lines consumed, for protocol errors.
    response_line: usize,
}

impl Wire {
    fn exit_status(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            Ok(None) => "still running, stream closed".into(),
            Err(e) => format!("status unknown: {e}"),
        }
    }

    fn roundtrip(&mut self, request: &Request<'_>, timeout: Duration) -> Result<WireResponse> {
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).is_err() || self.stdin.flush().is_err() {
            return Err(Error::EngineExited {
                status: self.exit_status(),
            });
        }
        let raw = match self.responses.recv_timeout(timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(Error::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::EngineTimeout {
                    timeout_ms: timeout.as_millis() as u64,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::EngineExited {
                    status: self.exit_status(),
                })
            }
        };
        self.response_line += 1;
        serde_json::from_str(&raw).map_err(|e| Error::EngineProtocol {
            line: self.response_line,
            reason: format!("{e} in {raw:?}"),
        })
    }
}

impl Drop for Wire {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl ExternalClassifier {
    /// Starts the engine process with stdin/stdout piped. The process's
    /// stderr is passed through for diagnostics.
    pub fn spawn(command: &EngineCommand) -> Result<Self> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("child stdin piped");
        let stdout = child.stdout.take().expect("child stdout piped");
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
            // Sender drops here; a receiver after EOF sees Disconnected.
        });
        Ok(Self {
            wire: Mutex::new(Wire {
                child,
                stdin,
                responses: rx,
                response_line: 0,
            }),
            timeout: DEFAULT_TIMEOUT,
            fitted: false,
        })
    }

    /// Overrides the per-call timeout (default 60 s).
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn locked(&self) -> std::sync::MutexGuard<'_, Wire> {
        self.wire.lock().unwrap_or_else(std::sync::PoisonError::into_inner)
    }
}

impl Classifier for ExternalClassifier {
    fn fit(&mut self, train: &[LabeledExample]) -> Result<()> {
        let timeout = self.timeout;
        let mut wire = self.locked();
        match wire.roundtrip(&Request::Fit { examples: train }, timeout)? {
            WireResponse::Ack { ok: true, .. } => {
                drop(wire);
                self.fitted = true;
                Ok(())
            }
            WireResponse::Ack { ok: false, error } => Err(Error::EngineError(
                error.unwrap_or_else(|| "unspecified engine error".into()),
            )),
            WireResponse::Pred { .. } => Err(Error::EngineProtocol {
                line: wire.response_line,
                reason: "prediction received in answer to fit".into(),
            }),
        }
    }

    fn predict(&self, text: &str) -> Result<Prediction> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let mut wire = self.locked();
        match wire.roundtrip(&Request::Predict { text }, self.timeout)? {
            WireResponse::Pred { label, confidence } => {
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(Error::EngineProtocol {
                        line: wire.response_line,
                        reason: format!("confidence {confidence} outside [0, 1]"),
                    });
                }
                Ok(Prediction { label, confidence })
            }
            WireResponse::Ack { ok: false, error } => Err(Error::EngineError(
                error.unwrap_or_else(|| "unspecified engine error".into()),
            )),
            WireResponse::Ack { ok: true, .. } => Err(Error::EngineProtocol {
                line: wire.response_line,
                reason: "bare acknowledgement received in answer to predict".into(),
            }),
        }
    }
}

/// Serves the line protocol over arbitrary streams. Each `fit` request
/// builds a fresh classifier from `factory` and trains it; `predict`
/// requests are answered from the most recent successful fit. Errors are
/// reported in-band as `{"ok":false,...}` responses; the loop ends at EOF.
pub fn serve_protocol(
    input: impl BufRead,
    mut output: impl Write,
    factory: &ClassifierFactory<'_>,
) -> Result<()> {
    #[derive(Deserialize)]
    #[serde(tag = "op", rename_all = "lowercase")]
    enum Incoming {
        Fit { examples: Vec<LabeledExample> },
        Predict { text: String },
    }

    #[derive(Serialize)]
    struct Ack {
        ok: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    }

    let mut current: Option<Box<dyn Classifier>> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Incoming>(&line) {
            Err(e) => serde_json::to_string(&Ack {
                ok: false,
                error: Some(format!("malformed request: {e}")),
            })?,
            Ok(Incoming::Fit { examples }) => {
                let outcome = factory().and_then(|mut clf| {
                    clf.fit(&examples)?;
                    Ok(clf)
                });
                match outcome {
                    Ok(clf) => {
                        current = Some(clf);
                        serde_json::to_string(&Ack {
                            ok: true,
                            error: None,
                        })?
                    }
                    Err(e) => serde_json::to_string(&Ack {
                        ok: false,
                        error: Some(e.to_string()),
                    })?,
                }
            }
            Ok(Incoming::Predict { text }) => match &current {
                None => serde_json::to_string(&Ack {
                    ok: false,
                    error: Some("predict before fit".into()),
                })?,
                Some(clf) => match clf.predict(&text) {
                    Ok(prediction) => serde_json::to_string(&prediction)?,
                    Err(e) => serde_json::to_string(&Ack {
                        ok: false,
                        error: Some(e.to_string()),
                    })?,
                },
            },
        };
        output.write_all(reply.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
