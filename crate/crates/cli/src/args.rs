use std::cmp::Ordering;
use std::path::PathBuf;

use clap::Parser;
use disco::{AggKind, DiscoConfig, InferenceConfig};

/// Distributional synthetic controls on long-format micro data.
#[derive(Debug, Parser)]
#[command(name = "disco", version)]
pub struct Args {
    /// Long-format CSV with one row per observation.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "id_col")]
    pub id_col: String,
    #[arg(long, default_value = "time_col")]
    pub time_col: String,
    #[arg(long, default_value = "y_col")]
    pub y_col: String,
    /// Optional column with display names for the weights table.
    #[arg(long)]
    pub name_col: Option<String>,

    #[arg(long)]
    pub target_id: i64,
    /// First treated period.
    #[arg(long)]
    pub t0: i64,
    /// Probability points used for fitting.
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Points on which quantile functions and CDFs are reported.
    #[arg(long, default_value_t = 100)]
    pub g: usize,
    /// Fit mixtures of CDFs (for categorical outcomes).
    #[arg(long, conflicts_with = "no_simplex")]
    pub mixture: bool,
    /// Allow negative weights (quantile mode only).
    #[arg(long)]
    pub no_simplex: bool,
    #[arg(long, default_value_t = 0.0)]
    pub qmin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub qmax: f64,

    /// Bootstrap confidence bands.
    #[arg(long)]
    pub ci: bool,
    #[arg(long, default_value_t = 300)]
    pub boots: usize,
    #[arg(long, default_value_t = 0.95)]
    pub cl: f64,
    /// Pointwise instead of uniform bands.
    #[arg(long)]
    pub no_uniform: bool,
    /// Placebo permutation test.
    #[arg(long)]
    pub permutation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// quantile, cdf, quantileDiff or cdfDiff.
    #[arg(long, default_value = "quantileDiff", value_parser = parse_agg)]
    pub agg: AggKind,
    /// Comma-separated partition points for the summary table.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<f64>>,

    #[arg(long, default_value = "disco_out")]
    pub out: PathBuf,
    /// Also write SVG panels.
    #[arg(long)]
    pub plots: bool,
    /// Bar panels instead of lines.
    #[arg(long)]
    pub categorical: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub hline: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub vline: Option<f64>,
    /// Rows in the weights table.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Weights are rounded to a multiple of this.
    #[arg(long, default_value_t = 1e-4)]
    pub round: f64,
}

fn parse_agg(s: &str) -> Result<AggKind, String> {
    s.parse().map_err(|e: disco::DiscoError| e.to_string())
}

impl Args {
    /// Estimator configuration; rejects inconsistent settings before any work is done.
    pub fn config(&self) -> Result<DiscoConfig, String> {
        let config = DiscoConfig {
            target_id: self.target_id,
            t0: self.t0,
            m: self.m,
            g: self.g,
            mixture: self.mixture,
            simplex: !self.no_simplex,
            qmin: self.qmin,
            qmax: self.qmax,
            seed: self.seed,
            inference: InferenceConfig {
                ci: self.ci,
                boots: self.boots,
                cl: self.cl,
                uniform: !self.no_uniform,
                permutation: self.permutation,
            },
            agg: self.agg,
            samples: self.samples.clone(),
        };
        config.validate().map_err(|e| e.to_string())?;
        if self.ci && self.boots < 1 {
            return Err("--boots must be at least 1".into());
        }
        if let Some(samples) = &self.samples {
            if samples.len() < 2 || samples.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
                return Err("--samples needs at least two strictly increasing points".into());
            }
        }
        if !(self.round > 0.0 && self.round.is_finite()) {
            return Err("--round must be positive".into());
        }
        Ok(config)
    }
}
