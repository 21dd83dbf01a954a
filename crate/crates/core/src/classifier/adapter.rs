//! External model adapters speaking newline-delimited JSON over a child process's standard
//! streams or a local TCP socket.
//!
//! ```text
//! -> {"op":"hello","mode":"transparent","labels":["A1",...]}
//! <- {"ok":true,"capabilities":["predict","train"]}
//! -> {"op":"predict","id":7,"text":"..."}
//! <- {"id":7,"scores":{"A1":0.12,...}}
//! -> {"op":"train","examples":[{"text":"...","targets":{"A1":1,...}}],"config":{...}}
//! <- {"ok":true}
//! -> {"op":"save","path":"..."}   /   {"op":"load","path":"..."}
//! <- {"ok":true}
//! ```
//!
//! Every probability must lie in `[0, 1]`; anything else aborts with a protocol error.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClassifierError, Learner, Mode, Predictor, ProvenanceStage, TrainConfig, TrainingSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterEndpoint {
    Process {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Tcp {
        address: String,
    },
}

impl FromStr for AdapterEndpoint {
    type Err = ClassifierError;

    /// `tcp://host:port`, or a whitespace-separated command line.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(address) = s.strip_prefix("tcp://") {
            return Ok(AdapterEndpoint::Tcp {
                address: address.to_string(),
            });
        }
        let mut parts = s.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| ClassifierError::Handshake("empty adapter command".into()))?;
        Ok(AdapterEndpoint::Process {
            program,
            args: parts.collect(),
        })
    }
}

struct Session {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Session {
    fn open(endpoint: &AdapterEndpoint) -> Result<Session, ClassifierError> {
        match endpoint {
            AdapterEndpoint::Process { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| ClassifierError::Handshake(format!("cannot start {program:?}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Session {
                    reader: Box::new(BufReader::new(stdout)),
                    writer: Box::new(stdin),
                    child: Some(child),
                })
            }
            AdapterEndpoint::Tcp { address } => {
                let stream = TcpStream::connect(address)
                    .map_err(|e| ClassifierError::Handshake(format!("cannot connect to {address}: {e}")))?;
                let read_half = stream.try_clone()?;
                Ok(Session {
                    reader: Box::new(BufReader::new(read_half)),
                    writer: Box::new(stream),
                    child: None,
                })
            }
        }
    }

    fn request(&mut self, message: &Value) -> Result<Value, ClassifierError> {
        let mut line = serde_json::to_string(message).map_err(std::io::Error::from)?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| ClassifierError::Protocol(format!("adapter closed its input: {e}")))?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ClassifierError::Protocol("adapter closed the connection".into()));
        }
        serde_json::from_str(&reply).map_err(|e| ClassifierError::Protocol(format!("reply is not JSON: {e}")))
    }

    fn expect_ok(&mut self, message: &Value) -> Result<Value, ClassifierError> {
        let reply = self.request(message)?;
        if reply.get("ok") == Some(&Value::Bool(true)) {
            Ok(reply)
        } else {
            let op = message.get("op").and_then(Value::as_str).unwrap_or("?");
            Err(ClassifierError::Protocol(format!("{op} failed: {reply}")))
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A connected external model.
pub struct AdapterModel {
    endpoint: AdapterEndpoint,
    mode: Mode,
    labels: Vec<String>,
    capabilities: Vec<String>,
    decision_threshold: f64,
    provenance: Vec<ProvenanceStage>,
    next_id: AtomicU64,
    session: Mutex<Session>,
}

impl std::fmt::Debug for AdapterModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterModel")
            .field("endpoint", &self.endpoint)
            .field("mode", &self.mode)
            .field("capabilities", &self.capabilities)
            .finish_non_exhaustive()
    }
}

/// Opens a session and performs the handshake.
pub fn connect_adapter(endpoint: &AdapterEndpoint, mode: Mode) -> Result<AdapterModel, ClassifierError> {
    let mut session = Session::open(endpoint)?;
    let labels = mode.labels();
    let reply = session
        .request(&json!({"op": "hello", "mode": mode.name(), "labels": labels}))
        .map_err(|e| ClassifierError::Handshake(e.to_string()))?;
    if reply.get("ok") != Some(&Value::Bool(true)) {
        return Err(ClassifierError::Handshake(format!("adapter refused: {reply}")));
    }
    let capabilities: Vec<String> = reply
        .get("capabilities")
        .and_then(Value::as_array)
        .ok_or_else(|| ClassifierError::Handshake("reply lacks a capabilities list".into()))?
        .iter()
        .filter_map(|c| c.as_str().map(String::from))
        .collect();
    if !capabilities.iter().any(|c| c == "predict") {
        return Err(ClassifierError::Handshake("adapter cannot predict".into()));
    }
    Ok(AdapterModel {
        endpoint: endpoint.clone(),
        mode,
        labels,
        capabilities,
        decision_threshold: 0.5,
        provenance: Vec::new(),
        next_id: AtomicU64::new(1),
        session: Mutex::new(session),
    })
}

impl AdapterModel {
    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    pub fn supports(&self, capability: &str) -> bool {
        self.capabilities.iter().any(|c| c == capability)
    }

    fn call(&self, message: &Value) -> Result<Value, ClassifierError> {
        self.session
            .lock()
            .expect("adapter session poisoned")
            .expect_ok(message)
    }

    /// Sends one training request.
    pub fn train(&mut self, data: &TrainingSet<'_>, config: &TrainConfig) -> Result<(), ClassifierError> {
        if !self.supports("train") {
            return Err(ClassifierError::Capability("train".into()));
        }
        if data.examples.is_empty() {
            return Err(ClassifierError::EmptyData);
        }
        let examples: Vec<Value> = data
            .examples
            .iter()
            .map(|e| {
                let targets: serde_json::Map<String, Value> = self
                    .labels
                    .iter()
                    .zip(&e.targets)
                    .map(|(l, t)| (l.clone(), json!(u8::from(*t))))
                    .collect();
                json!({"text": e.text, "targets": targets})
            })
            .collect();
        self.call(&json!({"op": "train", "examples": examples, "config": config}))?;
        self.provenance.push(ProvenanceStage {
            kind: if self.provenance.is_empty() { "train" } else { "tune" }.into(),
            dataset: data.dataset.clone(),
            learning_rate: config.learning_rate,
            examples: data.examples.len(),
            epochs_run: config.epochs,
            best_epoch: 0,
            best_validation_loss: f64::NAN,
        });
        Ok(())
    }

    pub fn load_state(&self, path: &Path) -> Result<(), ClassifierError> {
        self.call(&json!({"op": "load", "path": path}))?;
        Ok(())
    }
}

impl Predictor for AdapterModel {
    fn mode(&self) -> Mode {
        self.mode
    }

    fn probabilities(&self, text: &str) -> Result<Vec<f64>, ClassifierError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let reply = self
            .session
            .lock()
            .expect("adapter session poisoned")
            .request(&json!({"op": "predict", "id": id, "text": text}))?;
        if reply.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(ClassifierError::Protocol(format!(
                "reply id does not match request {id}: {reply}"
            )));
        }
        let scores = reply
            .get("scores")
            .and_then(Value::as_object)
            .ok_or_else(|| ClassifierError::Protocol(format!("reply lacks scores: {reply}")))?;
        self.labels
            .iter()
            .map(|label| {
                let p = scores
                    .get(label)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| ClassifierError::Protocol(format!("no score for label {label}")))?;
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(ClassifierError::Protocol(format!(
                        "probability {p} for {label} is outside [0, 1]"
                    )))
                }
            })
            .collect()
    }

    fn decision_threshold(&self) -> f64 {
        self.decision_threshold
    }

    fn provenance(&self) -> Vec<ProvenanceStage> {
        self.provenance.clone()
    }

    fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        self.call(&json!({"op": "save", "path": path}))?;
        Ok(())
    }
}

/// Trains external models, one fresh adapter session per fit.
#[derive(Debug, Clone)]
pub struct AdapterLearner {
    pub endpoint: AdapterEndpoint,
    pub mode: Mode,
    /// Where initial-model state is handed over between sessions when tuning.
    pub scratch_dir: PathBuf,
}

impl Learner for AdapterLearner {
    type Model = AdapterModel;

    fn fit(
        &self,
        data: &TrainingSet<'_>,
        config: &TrainConfig,
        init: Option<&AdapterModel>,
    ) -> Result<AdapterModel, ClassifierError> {
        let mut model = connect_adapter(&self.endpoint, self.mode)?;
        if !model.supports("train") {
            return Err(ClassifierError::Capability("train".into()));
        }
        if let Some(init) = init {
            static HANDOFF: AtomicU64 = AtomicU64::new(0);
            let n = HANDOFF.fetch_add(1, Ordering::Relaxed);
            let path = self
                .scratch_dir
                .join(format!("handoff-{}-{n}.state", std::process::id()));
            init.save(&path)?;
            model.load_state(&path)?;
            model.provenance = init.provenance.clone();
        }
        model.train(data, config)?;
        Ok(model)
    }

    fn load(&self, path: &Path) -> Result<AdapterModel, ClassifierError> {
        let model = connect_adapter(&self.endpoint, self.mode)?;
        model.load_state(path)?;
        Ok(model)
    }
}
