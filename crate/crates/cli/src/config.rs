//! Key-value run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every tunable the subcommands read. All keys are optional in the file;
/// flags override file values, and unset keys fall back to the defaults in
/// [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub seed: u64,
    pub cutoff: Option<NaiveDate>,
    pub holdout_fraction: f64,

    pub tau: Option<u32>,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub top_m: Option<usize>,
    pub n_prefix: usize,
    pub leave_one_out: bool,

    pub k_max: usize,
    pub lookback_days: u32,
    pub repeat_threshold: u32,

    pub fallback_by_cluster: bool,
    pub activity_days: u32,
    pub slice_date: Option<NaiveDate>,
    pub group_a: String,
    pub group_b: String,

    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub segments: usize,
    pub favored_clusters: usize,
    pub orders_per_user: f64,
    pub basket_size: f64,
    pub concentration: f64,
    pub start_date: NaiveDate,
    pub span_days: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gen = grocer_rank::experiment::GeneratorConfig::default();
        Self {
            input: None,
            out: None,
            format: None,
            seed: 0,
            cutoff: None,
            holdout_fraction: 0.04,
            tau: None,
            sigma: 100.0,
            alpha: 1.0,
            beta: 1.0,
            top_m: Some(100),
            n_prefix: 4000,
            leave_one_out: false,
            k_max: 30,
            lookback_days: 365,
            repeat_threshold: 2,
            fallback_by_cluster: true,
            activity_days: 365,
            slice_date: None,
            group_a: "top-k".into(),
            group_b: "top-n".into(),
            users: gen.n_users,
            items: gen.n_items,
            clusters: gen.n_clusters,
            segments: gen.n_segments,
            favored_clusters: gen.favored_clusters,
            orders_per_user: gen.mean_orders_per_user,
            basket_size: gen.mean_basket_size,
            concentration: gen.preference_concentration,
            start_date: gen.start_date,
            span_days: gen.span_days,
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        let path = self.input.as_deref().ok_or_else(|| {
            CliError::Config("no input given (--input or `input` in the config)".into())
        })?;
        if !path.exists() {
            return Err(CliError::Config(format!(
                "input {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn cousin(&self) -> grocer_rank::CousinConfig {
        grocer_rank::CousinConfig {
            tau_days: self.tau,
            sigma_percent: self.sigma,
            alpha: self.alpha,
            beta: self.beta,
            top_m: self.top_m,
            n_prefix: self.n_prefix,
            leave_one_out: self.leave_one_out,
            value_mode: grocer_rank::ValueMode::Binary,
        }
    }

    pub fn egnn(&self, reference_date: Option<NaiveDate>) -> grocer_rank::EgnnConfig {
        grocer_rank::EgnnConfig {
            lookback_days: self.lookback_days,
            repeat_threshold: self.repeat_threshold,
            reference_date,
            max_prefix: Some(self.k_max),
        }
    }

    pub fn model(&self, name: &str) -> Result<grocer_rank::ModelSpec, CliError> {
        use grocer_rank::ModelSpec;
        match name.to_ascii_lowercase().as_str() {
            "top-n" | "cousin" => Ok(ModelSpec::Cousin(self.cousin())),
            "top-k" | "egnn" => Ok(ModelSpec::Egnn(self.egnn(None))),
            "popularity" => Ok(ModelSpec::Popularity),
            other => Err(CliError::Config(format!(
                "unknown model {other:?} (expected top-n, top-k or popularity)"
            ))),
        }
    }

    /// Prefix length for an arm running `name`.
    pub fn prefix_for(&self, name: &str) -> usize {
        match name.to_ascii_lowercase().as_str() {
            "top-k" | "egnn" => self.k_max,
            _ => self.n_prefix,
        }
    }

    pub fn generator(&self) -> grocer_rank::experiment::GeneratorConfig {
        grocer_rank::experiment::GeneratorConfig {
            n_users: self.users,
            n_items: self.items,
            n_clusters: self.clusters,
            n_segments: self.segments,
            favored_clusters: self.favored_clusters,
            mean_orders_per_user: self.orders_per_user,
            mean_basket_size: self.basket_size,
            preference_concentration: self.concentration,
            start_date: self.start_date,
            span_days: self.span_days,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.cousin()
            .matrix_spec(NaiveDate::MIN)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.alpha >= 1.0 && self.beta >= 1.0) {
            return Err(CliError::Config("alpha and beta must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(CliError::Config(
                "holdout_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}
