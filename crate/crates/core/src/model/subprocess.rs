//! `model/1`: JSON-lines protocol for models hosted in another process.
//!
//! Each request is one JSON object on its own line; each response is one
//! line `{"ok": true, ...}` or `{"ok": false, "error": "..."}`.
//!
//! | op           | request fields                                      | response fields          |
//! |--------------|-----------------------------------------------------|--------------------------|
//! | `describe`   |                                                     | `descriptor`, `eos`      |
//! | `tokenize`   | `text`                                              | `tokens`                 |
//! | `detokenize` | `tokens`                                            | `text`                   |
//! | `forward`    | `tokens`, `interventions`, `prompt_len`, `capture_layer` | `logits`, `capture` |
//! | `generate`   | `prompt`, `config`, `interventions`                 | `generation`             |

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_generation, ForwardOutput, Generation, GenerationConfig, InterventionHandle,
    LanguageModel, ModelDescriptor, ResidualActivation, TokenId,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Request {
    Describe,
    Tokenize {
        text: String,
    },
    Detokenize {
        tokens: Vec<TokenId>,
    },
    Forward {
        tokens: Vec<TokenId>,
        interventions: Vec<InterventionHandle>,
        prompt_len: usize,
        capture_layer: Option<usize>,
    },
    Generate {
        prompt: Vec<TokenId>,
        config: GenerationConfig,
        interventions: Vec<InterventionHandle>,
    },
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Client side of `model/1`: a model served by a child process.
pub struct SubprocessModel {
    name: String,
    pipe: Mutex<Pipe>,
    descriptor: ModelDescriptor,
    eos: Option<TokenId>,
}

impl SubprocessModel {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(format!("spawning model adapter `{program}`"), e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let pipe = Mutex::new(Pipe {
            child,
            stdin,
            stdout,
        });
        let mut model = Self {
            name: program.to_string(),
            pipe,
            descriptor: ModelDescriptor {
                model_id: String::new(),
                num_layers: 1,
                hidden_dim: 1,
                vocab_size: 1,
                default_steering_layer: 0,
                max_context: 1,
            },
            eos: None,
        };
        let resp = model.call(&Request::Describe)?;
        model.descriptor = field(&model.name, &resp, "descriptor")?;
        model.descriptor.validate()?;
        model.eos = field(&model.name, &resp, "eos")?;
        Ok(model)
    }

    fn call(&self, request: &Request) -> Result<Value> {
        let mut pipe = self.pipe.lock().unwrap_or_else(|p| p.into_inner());
        let line = serde_json::to_string(request).expect("requests serialize");
        let adapter_err = |reason: String| Error::Adapter {
            name: self.name.clone(),
            reason,
        };
        writeln!(pipe.stdin, "{line}")
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| adapter_err(format!("write failed: {e}")))?;
        let mut buf = String::new();
        let n = pipe
            .stdout
            .read_line(&mut buf)
            .map_err(|e| adapter_err(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(adapter_err("adapter closed its output".into()));
        }
        let value: Value = serde_json::from_str(buf.trim_end())
            .map_err(|e| adapter_err(format!("malformed response: {e}")))?;
        if value.get("ok").and_then(Value::as_bool) != Some(true) {
            let msg = value
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("unspecified error");
            return Err(adapter_err(msg.to_string()));
        }
        Ok(value)
    }
}

fn field<T: for<'de> Deserialize<'de>>(name: &str, value: &Value, key: &str) -> Result<T> {
    let v = value.get(key).cloned().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|e| Error::Adapter {
        name: name.to_string(),
        reason: format!("bad `{key}` in response: {e}"),
    })
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        let pipe = self.pipe.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = pipe.child.kill();
        let _ = pipe.child.wait();
    }
}

impl LanguageModel for SubprocessModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let req = Request::Tokenize {
            text: text.to_string(),
        };
        match self.call(&req).and_then(|v| field(&self.name, &v, "tokens")) {
            Ok(tokens) => tokens,
            Err(e) => {
                log::error!("tokenize via {} failed: {e}", self.name);
                Vec::new()
            }
        }
    }

    fn detokenize(&self, tokens: &[TokenId]) -> String {
        let req = Request::Detokenize {
            tokens: tokens.to_vec(),
        };
        match self.call(&req).and_then(|v| field(&self.name, &v, "text")) {
            Ok(text) => text,
            Err(e) => {
                log::error!("detokenize via {} failed: {e}", self.name);
                String::new()
            }
        }
    }

    fn eos_token(&self) -> Option<TokenId> {
        self.eos
    }

    fn forward(
        &self,
        tokens: &[TokenId],
        interventions: &[InterventionHandle],
        prompt_len: usize,
        capture_layer: Option<usize>,
    ) -> Result<ForwardOutput> {
        let resp = self.call(&Request::Forward {
            tokens: tokens.to_vec(),
            interventions: interventions.to_vec(),
            prompt_len,
            capture_layer,
        })?;
        let logits: Vec<Vec<f64>> = field(&self.name, &resp, "logits")?;
        let capture: Option<Vec<Vec<f64>>> = field(&self.name, &resp, "capture")?;
        Ok(ForwardOutput {
            logits,
            capture: match (capture_layer, capture) {
                (Some(layer), Some(rows)) => Some(ResidualActivation { layer, rows }),
                _ => None,
            },
        })
    }

    fn generate(
        &self,
        prompt: &[TokenId],
        config: &GenerationConfig,
        interventions: &[InterventionHandle],
    ) -> Result<Generation> {
        check_generation(&self.descriptor, prompt, config, interventions)?;
        let resp = self.call(&Request::Generate {
            prompt: prompt.to_vec(),
            config: config.clone(),
            interventions: interventions.to_vec(),
        })?;
        field(&self.name, &resp, "generation")
    }
}

/// Serves `model` over `model/1` until `input` reaches end of file.
pub fn serve_model<R: BufRead, W: Write>(
    model: &dyn LanguageModel,
    input: R,
    mut output: W,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => json!({"ok": false, "error": format!("bad request: {e}")}),
            Ok(req) => match handle(model, req) {
                Ok(v) => v,
                Err(e) => json!({"ok": false, "error": e.to_string()}),
            },
        };
        writeln!(output, "{response}")?;
        output.flush()?;
    }
    Ok(())
}

fn handle(model: &dyn LanguageModel, req: Request) -> Result<Value> {
    Ok(match req {
        Request::Describe => {
            json!({"ok": true, "descriptor": model.descriptor(), "eos": model.eos_token()})
        }
        Request::Tokenize { text } => json!({"ok": true, "tokens": model.tokenize(&text)}),
        Request::Detokenize { tokens } => json!({"ok": true, "text": model.detokenize(&tokens)}),
        Request::Forward {
            tokens,
            interventions,
            prompt_len,
            capture_layer,
        } => {
            let out = model.forward(&tokens, &interventions, prompt_len, capture_layer)?;
            json!({"ok": true, "logits": out.logits, "capture": out.capture.map(|c| c.rows)})
        }
        Request::Generate {
            prompt,
            config,
            interventions,
        } => {
            let generation = model.generate(&prompt, &config, &interventions)?;
            json!({"ok": true, "generation": generation})
        }
    })
}
