//! Built-in scorers behind the `scorer/1` protocol, for wiring tests and as
//! a template for external adapters.
//!
//! Usage: `steerlab-scorer <kind>` with kind one of
//! - `stars`: a 5-way star distribution derived from lexicon sentiment
//! - `profanity`: profanity hit rate
//! - `readability`: signed readability, `(10 − grade) / 2`
//! - `grade`: Flesch–Kincaid grade
//! - `embed`: hashed token embeddings

use std::io::{self, BufReader, Write};
use std::process::ExitCode;

use steerlab_core::metrics::{HashEmbedder, TokenEmbedder};
use steerlab_core::scorers::adapter::read_request;
use steerlab_core::scorers::{flesch_kincaid_grade, lexicon_sentiment, Lexicon, ProfanityScorer, ToxicityScorer};

fn stars(text: &str, lexicon: &Lexicon) -> String {
    // Put the expected star count at 3 + 2·compound, spread over two neighbours.
    let target = 3.0 + 2.0 * lexicon_sentiment(text, lexicon).value;
    let lo = target.floor().clamp(1.0, 5.0);
    let frac = target - lo;
    let mut p = [0.0; 5];
    p[lo as usize - 1] += 1.0 - frac;
    if frac > 0.0 {
        p[lo as usize] += frac;
    }
    p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn respond(kind: &str, text: &str, lexicon: &Lexicon, profanity: &ProfanityScorer, embedder: &HashEmbedder) -> String {
    let result = match kind {
        "stars" => Ok(stars(text, lexicon)),
        "profanity" => profanity.score(text).map(|v| v.to_string()),
        "readability" => flesch_kincaid_grade(text).map(|g| ((10.0 - g) / 2.0).to_string()),
        "grade" => flesch_kincaid_grade(text).map(|g| g.to_string()),
        _ => embedder.embed(text).map(|vs| {
            vs.iter()
                .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join(";")
        }),
    };
    match result {
        Ok(line) => line,
        Err(e) => format!("ERR {}", e.to_string().replace('\n', " ")),
    }
}

fn main() -> ExitCode {
    let kind = std::env::args().nth(1).unwrap_or_default();
    if !["stars", "profanity", "readability", "grade", "embed"].contains(&kind.as_str()) {
        eprintln!("usage: steerlab-scorer <stars|profanity|readability|grade|embed>");
        return ExitCode::from(2);
    }
    let lexicon = Lexicon::builtin();
    let profanity = ProfanityScorer::builtin();
    let embedder = HashEmbedder::default();
    let mut input = BufReader::new(io::stdin().lock());
    let mut out = io::stdout().lock();
    loop {
        match read_request(&mut input) {
            Ok(Some(text)) => {
                let line = respond(&kind, &text, &lexicon, &profanity, &embedder);
                if writeln!(out, "{line}").and_then(|_| out.flush()).is_err() {
                    return ExitCode::from(3);
                }
            }
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
        }
    }
}
