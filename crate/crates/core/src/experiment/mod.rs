//! Steering-strength sweeps: condition planning, execution, aggregation.

mod report;
mod run;
mod score;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behavior::Behavior;
use crate::error::{Error, Result};
use crate::model::{DecodeMode, PositionPolicy};
use crate::prompt::PromptVariant;

pub use report::{
    aggregate_report, emit_plot_series, read_results, spearman, write_report, AggregateCell, ReportTable,
    SeriesSummary, WIDE_COLUMNS,
};
pub use run::{execute, ExecuteOptions, RunInputs, RunRow, RunSummary, RESULTS_FILE, MANIFEST_FILE, TIMINGS_FILE};
pub use score::{AdapterConfig, MetricGroup, Scored, Scorers, ScoringConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Steer,
    Prompt,
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Steer, Mode::Prompt, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Steer => "steer",
            Mode::Prompt => "prompt",
            Mode::Combined => "combined",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown mode `{s}` (expected steer, prompt or combined)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub mode: Mode,
    pub behavior: Behavior,
    pub lambda: f64,
    pub variant: PromptVariant,
}

impl Condition {
    /// Combined mode's prompt variant for a strength.
    pub fn combined_variant(lambda: f64) -> PromptVariant {
        if lambda > 0.0 {
            PromptVariant::Encourage
        } else if lambda < 0.0 {
            PromptVariant::Discourage
        } else {
            PromptVariant::Neutral
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.mode {
            Mode::Steer => self.variant == PromptVariant::Neutral,
            Mode::Prompt => self.lambda == 0.0,
            Mode::Combined => self.variant == Self::combined_variant(self.lambda),
        }
    }

    /// Generation-level identity: conditions with equal keys produce the same summary.
    pub fn cell_key(&self) -> (u64, PromptVariant) {
        // +0.0 and -0.0 share a cell.
        ((self.lambda + 0.0).to_bits(), self.variant)
    }
}

/// Conditions in run order: steer over the grid, prompt over
/// discourage/neutral/encourage, combined over the grid.
pub fn plan_conditions(behavior: Behavior, grid: &[f64], modes: &[Mode]) -> Vec<Condition> {
    let mut out = Vec::new();
    for mode in Mode::ALL.into_iter().filter(|m| modes.contains(m)) {
        match mode {
            Mode::Steer | Mode::Combined => {
                for &lambda in grid {
                    let variant = if mode == Mode::Steer {
                        PromptVariant::Neutral
                    } else {
                        Condition::combined_variant(lambda)
                    };
                    out.push(Condition {
                        mode,
                        behavior,
                        lambda,
                        variant,
                    });
                }
            }
            Mode::Prompt => {
                for variant in PromptVariant::ALL {
                    out.push(Condition {
                        mode,
                        behavior,
                        lambda: 0.0,
                        variant,
                    });
                }
            }
        }
    }
    out
}

/// A distinct generation: one (λ, variant) shared by one or more conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub lambda: f64,
    pub variant: PromptVariant,
    pub modes: Vec<Mode>,
}

/// Merges conditions with the same (λ, variant), keeping first-seen order.
pub fn dedup_cells(conditions: &[Condition]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for c in conditions {
        match cells
            .iter_mut()
            .find(|cell| (cell.lambda + 0.0).to_bits() == c.cell_key().0 && cell.variant == c.variant)
        {
            Some(cell) => {
                if !cell.modes.contains(&c.mode) {
                    cell.modes.push(c.mode);
                }
            }
            None => cells.push(Cell {
                lambda: c.lambda + 0.0,
                variant: c.variant,
                modes: vec![c.mode],
            }),
        }
    }
    cells
}

pub const DEFAULT_GRID: [f64; 9] = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
pub const EXTREME_STRENGTHS: [f64; 2] = [-5.0, 5.0];

/// Everything that determines the contents of a result file. Worker count
/// and output location are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model_id: String,
    pub layer: usize,
    pub behavior: Behavior,
    pub vector_paths: Vec<String>,
    pub grid: Vec<f64>,
    pub modes: Vec<Mode>,
    pub n_articles: usize,
    pub seed: u64,
    pub max_new_tokens: usize,
    pub decode: DecodeMode,
    pub policy: PositionPolicy,
    pub scoring: ScoringConfig,
}

impl RunConfig {
    pub fn new(model_id: &str, layer: usize, behavior: Behavior) -> Self {
        Self {
            model_id: model_id.to_string(),
            layer,
            behavior,
            vector_paths: Vec::new(),
            grid: DEFAULT_GRID.to_vec(),
            modes: Mode::ALL.to_vec(),
            n_articles: 250,
            seed: 0,
            max_new_tokens: 150,
            decode: DecodeMode::Greedy,
            policy: PositionPolicy::default(),
            scoring: ScoringConfig::default(),
        }
    }

    /// Adds ±5 to the grid.
    pub fn with_extremes(mut self) -> Self {
        for x in EXTREME_STRENGTHS {
            if !self.grid.contains(&x) {
                self.grid.push(x);
            }
        }
        self.grid.sort_by(f64::total_cmp);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid.contains(&0.0) {
            return Err(Error::Invalid("strength grid must contain 0".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("strength grid values must be finite".into()));
        }
        if self.n_articles == 0 {
            return Err(Error::Invalid("n_articles must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Invalid("at least one mode is required".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Invalid("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }

    pub fn conditions(&self) -> Vec<Condition> {
        plan_conditions(self.behavior, &self.grid, &self.modes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_plans_nine_conditions_and_seven_cells() {
        let c = plan_conditions(Behavior::Sentiment, &[-1.0, 0.0, 1.0], &Mode::ALL);
        assert_eq!(c.len(), 9);
        assert!(c.iter().all(Condition::is_valid));
        let combined_neg = c.iter().find(|x| x.mode == Mode::Combined && x.lambda == -1.0).unwrap();
        assert_eq!(combined_neg.variant, PromptVariant::Discourage);
        let cells = dedup_cells(&c);
        assert_eq!(cells.len(), 7);
        let base = cells.iter().find(|x| x.lambda == 0.0 && x.variant == PromptVariant::Neutral).unwrap();
        assert_eq!(base.modes, vec![Mode::Steer, Mode::Prompt, Mode::Combined]);
    }

    #[test]
    fn grid_must_contain_zero() {
        let mut cfg = RunConfig::new("m", 0, Behavior::Sentiment);
        assert!(cfg.validate().is_ok());
        cfg.grid = vec![1.0];
        assert!(cfg.validate().is_err());
        let ext = RunConfig::new("m", 0, Behavior::Sentiment).with_extremes();
        assert_eq!(ext.grid.first(), Some(&-5.0));
    }
}
