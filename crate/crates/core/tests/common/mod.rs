//! Shared helpers for the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use steerlab_core::corpus::{load_pairs, PairDataset};
use steerlab_core::experiment::{aggregate_report, execute, spearman, ExecuteOptions, MetricGroup, Mode, RunConfig, RunInputs};
use steerlab_core::model::{LanguageModel, SubprocessModel};
use steerlab_core::newts::{load_newts, sample_articles, Split};
use steerlab_core::scorers::Lexicon;
use steerlab_core::steering::extract_steering_vector;
use steerlab_core::Behavior;

pub const PRETRAINED_ENV: &str = "STEERLAB_PRETRAINED_MODEL";
pub const NEWTS_ENV: &str = "STEERLAB_NEWTS_TEST";

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn starter_pairs(behavior: &str) -> PairDataset {
    load_pairs(&repo().join("data/pairs").join(format!("{behavior}.tsv"))).expect("starter pairs load")
}

/// Pretrained model command and NEWTS test records, when both are configured.
pub fn pretrained_setup() -> Option<(String, PathBuf)> {
    let model = std::env::var(PRETRAINED_ENV).ok()?;
    let newts = std::env::var(NEWTS_ENV).ok()?;
    Some((model, PathBuf::from(newts)))
}

fn spawn(command: &str) -> Result<SubprocessModel, String> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or("empty model command")?;
    let args: Vec<String> = parts.map(str::to_string).collect();
    SubprocessModel::spawn(program, &args).map_err(|e| e.to_string())
}

/// Mean metric per λ over a steer-only sweep of 50 fixed test articles.
fn steer_means(command: &str, newts: &Path, grid: &[f64], metric: &str, out: &Path) -> Result<Vec<(f64, f64)>, String> {
    let model = spawn(command)?;
    let d = model.descriptor().clone();
    let layer = steerlab_core::model::ModelDescriptor::conventional_layer(&d.model_id).unwrap_or(d.default_steering_layer);
    let vector = extract_steering_vector(&model, &starter_pairs("sentiment"), layer, 1).map_err(|e| e.to_string())?;
    let records = load_newts(newts, Split::Test, None, true).map_err(|e| e.to_string())?;
    let sample = sample_articles(&records, 50, 0, Split::Test).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(&d.model_id, layer, Behavior::Sentiment);
    config.grid = grid.to_vec();
    config.modes = vec![Mode::Steer];
    config.n_articles = 50;
    config.scoring.groups = vec![MetricGroup::Distinct2, MetricGroup::Sentiment];
    let inputs = RunInputs {
        model: &model,
        perplexity_model: None,
        vectors: vec![vector],
        sample: &sample,
        artifacts: None,
        lexicon: Lexicon::builtin(),
    };
    execute(&config, &inputs, &ExecuteOptions::new(out)).map_err(|e| e.to_string())?;
    let rows = steerlab_core::experiment::read_results(out).map_err(|e| e.to_string())?;
    let table = aggregate_report(&rows, "sentiment").map_err(|e| e.to_string())?;
    let mut means: Vec<(f64, f64)> = table
        .cells
        .iter()
        .filter(|c| c.metric == metric && c.mode == Mode::Steer)
        .map(|c| (c.lambda, c.mean))
        .collect();
    means.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(means)
}

/// Sentiment rises with λ on a pretrained model.
pub fn pretrained_trend(command: &str, newts: &Path) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let means = steer_means(command, newts, &[-2.0, -1.0, 0.0, 1.0, 2.0], "sentiment_lexicon", dir.path())?;
    let xs: Vec<f64> = means.iter().map(|m| m.0).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.1).collect();
    let rho = spearman(&xs, &ys).ok_or("sentiment means are constant")?;
    let increasing = ys.windows(2).all(|w| w[1] > w[0]);
    if increasing && rho >= 0.9 {
        Ok(format!("means {ys:.3?}, rho {rho:.3}"))
    } else {
        Err(format!("means {ys:.3?}, rho {rho:.3}"))
    }
}

/// Distinct-2 collapses at λ = ±5 on a pretrained model.
pub fn pretrained_degradation(command: &str, newts: &Path) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let means = steer_means(command, newts, &[-5.0, 0.0, 5.0], "distinct2_word", dir.path())?;
    let get = |x: f64| means.iter().find(|m| m.0 == x).map(|m| m.1).ok_or(format!("no λ={x} cell"));
    let (lo, base, hi) = (get(-5.0)?, get(0.0)?, get(5.0)?);
    let msg = format!("distinct2_word λ=-5 {lo:.3}, λ=0 {base:.3}, λ=5 {hi:.3}");
    if base - lo >= 0.2 && base - hi >= 0.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}
