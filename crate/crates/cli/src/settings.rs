//! Flat run configuration: a TOML or JSON file of `key = value` pairs, overridden by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use dicke_core::grid::PolarGrid;
use dicke_core::ModelParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Every tunable of every subcommand. Unset fields take the subcommand's default,
/// which is written back before the manifest is recorded.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Number of atoms N (even)
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    /// Boson truncation n_trc (even)
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trc: Option<usize>,
    /// Coupling λ
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Field frequency ω [default: 1]
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Atomic splitting ω0 [default: 1]
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    /// Rescaled energy ℰ = E/j of the shell or window centre
    #[arg(long, allow_negative_numbers = true, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Window half-width: states with ε in [ℰ−δE, ℰ+2δE] [default: 0.04]
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    /// Truncation increment for convergence checks [default: 20]
    #[arg(long, help_heading = "Model")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trc_step: Option<usize>,

    /// Polar grid, "n" or "n_r x n_theta"
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Lyapunov integration time [default: 1000]
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Section seeds per axis of the (q2, p2) seed lattice [default: 6]
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    /// Section crossings per seed [default: 200]
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossings: Option<usize>,
    /// Integrator tolerance for sections [default: 1e-10]
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Integration time cap per section seed [default: 5000]
    #[arg(long, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Extra couplings for the averaged-exponent table, comma separated
    #[arg(long, allow_negative_numbers = true, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<String>,
    /// Extra energies for the averaged-exponent table, comma separated
    #[arg(long, allow_negative_numbers = true, help_heading = "Classical")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energies: Option<String>,

    /// Histogram bins for P(r) [default: 25]
    #[arg(long, help_heading = "Ratios")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Levels per sliding window [default: 150]
    #[arg(long, help_heading = "Ratios")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_size: Option<usize>,
    /// Sliding-window stride in levels [default: window_size / 2]
    #[arg(long, help_heading = "Ratios")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,

    /// Restrict Husimi output to these eigenstate indices, comma separated
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<String>,
    /// Chaos-mask threshold on Λ [default: 0.02]
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Ensembles "min:max:step,…"
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensembles: Option<String>,
    /// Mixed-state cutoff M_c [default: 0.8]
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<f64>,
    /// Cutoff sweep "start:stop:step"
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_sweep: Option<String>,
    /// Histogram bins for P(M) [default: 20]
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_bins: Option<usize>,
    /// Truncation per atom for ensemble members [default: 1.7]
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trc_per_atom: Option<f64>,
    /// Minimum truncation for ensemble members [default: 20]
    #[arg(long, help_heading = "Husimi / overlap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trc_min: Option<usize>,

    /// Run directory [default: runs/<command>-<settings hash>]
    #[arg(long, help_heading = "Output")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Content-addressed cache directory [default: .dicke-cache]
    #[arg(long, help_heading = "Output")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Neither read nor write the cache
    #[arg(long, help_heading = "Output", num_args = 0, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_cache: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    /// Parse a flat TOML (default) or JSON (`.json`) config file.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, path.extension().is_some_and(|e| e == "json"))
    }

    pub fn parse(text: &str, json: bool) -> CliResult<Self> {
        if json {
            serde_json::from_str(text).map_err(|e| CliError::config("config", e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| CliError::config("config", e.message().to_string()))
        }
    }

    /// Fields set in `flags` win over those already present.
    pub fn overlay(mut self, flags: &Settings) -> Self {
        let this = &mut self;
        overlay!(
            this, flags, n_atoms, n_trc, lambda, omega, omega0, energy, delta_e, n_trc_step, grid, t_end, seeds,
            crossings, tol, t_max, lambdas, energies, bins, window_size, stride, states, threshold, ensembles, mc,
            mc_sweep, m_bins, n_trc_per_atom, n_trc_min, out, cache_dir, no_cache,
        );
        self
    }

    pub fn model(&self) -> CliResult<ModelParams> {
        Ok(ModelParams::new(
            self.omega.unwrap_or(1.0),
            self.omega0.unwrap_or(1.0),
            require(self.lambda, "lambda")?,
            require(self.n_atoms, "n_atoms")?,
            require(self.n_trc, "n_trc")?,
        )?)
    }

    /// Classical flow parameters; N and n_trc do not enter the classical limit.
    pub fn classical(&self, lambda: f64) -> CliResult<ModelParams> {
        Ok(ModelParams::new(self.omega.unwrap_or(1.0), self.omega0.unwrap_or(1.0), lambda, 2, 2)?)
    }

    pub fn grid(&self) -> CliResult<PolarGrid> {
        let text = self.grid.as_deref().unwrap_or("60");
        let bad = || CliError::config("grid", format!("`{text}` is not `n` or `n_r x n_theta`"));
        let dims: Vec<usize> = text
            .split(['x', 'X', '*'])
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<CliResult<_>>()?;
        match dims.as_slice() {
            [n] => Ok(PolarGrid::new(*n, *n)?),
            [a, b] => Ok(PolarGrid::new(*a, *b)?),
            _ => Err(bad()),
        }
    }

    pub fn cache_enabled(&self) -> bool {
        !self.no_cache.unwrap_or(false)
    }

    /// Stable JSON used for hashing and manifests (fields in declaration order, unset fields omitted).
    pub fn canonical_json(&self) -> String {
        let mut s = self.clone();
        s.out = None;
        s.cache_dir = None;
        s.no_cache = None;
        serde_json::to_string(&s).expect("settings serialise")
    }
}

pub fn require<T>(value: Option<T>, field: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::config(field, "is required (set it in the config file or pass the flag)"))
}

pub fn positive(value: f64, field: &str) -> CliResult<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CliError::config(field, format!("must be finite and > 0, got {value}")))
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str, field: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| CliError::config(field, format!("`{}` is not a valid entry", p.trim())))
        })
        .collect()
}
