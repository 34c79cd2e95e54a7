//! `scorer/1`: line protocol for classifiers running in another process.
//!
//! Request: `<n>:<text>\n`, where `<n>` is the UTF-8 byte length of `<text>`
//! (the text may itself contain newlines).
//! Response: one line, either whitespace-separated decimal scores or
//! `ERR <message>`. Embedders answer with per-token vectors separated by `;`.
//!
//! Adapter executables are looked up by name in the directory named by the
//! `STEERLAB_ADAPTERS` environment variable; a name containing a path
//! separator is used as a path directly.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::metrics::TokenEmbedder;

pub const ADAPTERS_ENV: &str = "STEERLAB_ADAPTERS";

/// Resolves an adapter name to an executable path.
pub fn find_adapter(name: &str) -> Result<PathBuf> {
    if name.contains(std::path::MAIN_SEPARATOR) || name.contains('/') {
        let p = PathBuf::from(name);
        return if p.is_file() {
            Ok(p)
        } else {
            Err(Error::Adapter {
                name: name.into(),
                reason: "no such file".into(),
            })
        };
    }
    let dir = std::env::var_os(ADAPTERS_ENV).ok_or_else(|| Error::Adapter {
        name: name.into(),
        reason: format!("{ADAPTERS_ENV} is not set"),
    })?;
    let p = PathBuf::from(dir).join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::Adapter {
            name: name.into(),
            reason: format!("not found in {}", p.parent().unwrap_or(&p).display()),
        })
    }
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// One channel to a `scorer/1` process. Each worker owns its own.
pub struct ScorerAdapter {
    name: String,
    pipe: Mutex<Pipe>,
}

impl ScorerAdapter {
    pub fn spawn(name: &str, args: &[String]) -> Result<Self> {
        let path = find_adapter(name)?;
        let mut child = Command::new(&path)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Adapter {
                name: name.into(),
                reason: format!("cannot start {}: {e}", path.display()),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            name: name.into(),
            pipe: Mutex::new(Pipe { child, stdin, stdout }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Adapter {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Sends one text and returns the raw response line.
    pub fn request(&self, text: &str) -> Result<String> {
        let mut pipe = self.pipe.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(pipe.stdin, "{}:{}", text.len(), text)
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| self.err(format!("write failed: {e}")))?;
        let mut line = String::new();
        let n = pipe
            .stdout
            .read_line(&mut line)
            .map_err(|e| self.err(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(self.err("adapter closed its output"));
        }
        let line = line.trim_end_matches(['\n', '\r']).to_string();
        if let Some(msg) = line.strip_prefix("ERR") {
            return Err(self.err(msg.trim().to_string()));
        }
        Ok(line)
    }

    pub fn scores(&self, text: &str) -> Result<Vec<f64>> {
        let line = self.request(text)?;
        let values = parse_decimals(&line).map_err(|e| self.err(e))?;
        if values.is_empty() {
            return Err(self.err("empty response"));
        }
        Ok(values)
    }
}

impl Drop for ScorerAdapter {
    fn drop(&mut self) {
        let pipe = self.pipe.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = pipe.child.kill();
        let _ = pipe.child.wait();
    }
}

fn parse_decimals(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a finite decimal: `{t}`"))
        })
        .collect()
}

/// Token embedder behind a `scorer/1` channel.
pub struct AdapterEmbedder(pub ScorerAdapter);

impl TokenEmbedder for AdapterEmbedder {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>> {
        let line = self.0.request(text)?;
        if line.trim().is_empty() {
            return Ok(Vec::new());
        }
        line.split(';')
            .map(|v| parse_decimals(v).map_err(|e| self.0.err(e)))
            .collect()
    }
}

/// Reads `scorer/1` requests from `input`. Test adapters and the bundled
/// helper binaries build on it.
pub fn read_request<R: BufRead>(input: &mut R) -> std::io::Result<Option<String>> {
    let mut len_buf = Vec::new();
    if input.read_until(b':', &mut len_buf)? == 0 {
        return Ok(None);
    }
    let digits = std::str::from_utf8(&len_buf[..len_buf.len() - 1]).unwrap_or("");
    let len: usize = digits
        .trim()
        .parse()
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "bad length prefix"))?;
    let mut body = vec![0u8; len + 1];
    input.read_exact(&mut body)?;
    body.pop();
    String::from_utf8(body)
        .map(Some)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
