//! Serves a tiny model over `model/1` on standard input and output.
//!
//! Usage: `steerlab-model-server [FIXTURE]`. Without an argument the
//! reference weights are served.

use std::io::{self, BufWriter};
use std::path::Path;
use std::process::ExitCode;

use steerlab_core::model::{serve_model, TinyModel};

fn main() -> ExitCode {
    let model = match std::env::args().nth(1) {
        None => TinyModel::reference(),
        Some(p) => match TinyModel::load(Path::new(&p)) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    match serve_model(&model, stdin, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
