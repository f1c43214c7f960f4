mod classical;
mod phase;
mod spectrum;

use std::path::PathBuf;

use dicke_core::spectrum::{diagonalize_window, spectrum_for};
use dicke_core::{assemble_hamiltonian, build_even_parity_basis, ModelParams, Spectrum};

pub use classical::{lyapunov, poincare};
pub use phase::{husimi, overlap, scan};
pub use spectrum::{ratio, spectrum};

use crate::cache::{key_of, Cache};
use crate::error::CliResult;
use crate::manifest::{sha256_hex, RunDir, RunManifest};
use crate::settings::Settings;

/// Effective settings plus provenance of where they came from.
pub struct Invocation {
    pub settings: Settings,
    pub config_sha256: Option<String>,
}

/// Shared state of one subcommand run.
pub struct Ctx {
    pub cache: Cache,
    pub run: RunDir,
}

impl Ctx {
    /// Called once defaults are filled in, so the directory name and manifest reflect them.
    pub fn open(command: &str, inv: &Invocation, settings: &Settings) -> CliResult<Self> {
        let out = settings.out.clone().unwrap_or_else(|| {
            let h = sha256_hex(settings.canonical_json().as_bytes());
            PathBuf::from("runs").join(format!("{command}-{}", &h[..12]))
        });
        let cache_dir = settings.cache_enabled().then(|| settings.cache_dir.clone().unwrap_or(".dicke-cache".into()));
        let mut manifest = RunManifest::new(command, settings.clone());
        if let Some(h) = &inv.config_sha256 {
            manifest.input_hashes.insert("config".into(), h.clone());
        }
        Ok(Self {
            cache: Cache::new(cache_dir)?,
            run: RunDir::create(out, manifest)?,
        })
    }

    pub fn manifest(&mut self) -> &mut RunManifest {
        &mut self.run.manifest
    }

    fn record_input(&mut self, label: String, key: &str, hit: bool) {
        if hit {
            eprintln!("cache hit: {label}");
        }
        self.run.manifest.input_hashes.insert(label.clone(), key.to_string());
        self.run
            .manifest
            .notes
            .push(format!("{label}: {}", if hit { "cache hit" } else { "computed" }));
    }

    /// All eigenvalues, no eigenvectors.
    pub fn levels(&mut self, params: &ModelParams) -> CliResult<Spectrum> {
        let key = key_of("spectrum", &(params, None::<(f64, f64)>));
        let (s, hit) = self.cache.spectrum(&key, || Ok(spectrum_for(params)?))?;
        self.record_input(format!("levels N={} n_trc={}", params.n_atoms, params.n_trc), &key, hit);
        Ok(s)
    }

    /// All eigenvalues plus the eigenvectors with ε in `[lo, hi]`.
    pub fn window_spectrum(&mut self, params: &ModelParams, lo: f64, hi: f64) -> CliResult<Spectrum> {
        let key = key_of("spectrum", &(params, Some((lo, hi))));
        let (s, hit) = self.cache.spectrum(&key, || {
            let basis = build_even_parity_basis(params)?;
            Ok(diagonalize_window(&assemble_hamiltonian(params, &basis)?, lo, hi)?)
        })?;
        self.record_input(format!("spectrum N={} n_trc={} window=[{lo}, {hi}]", params.n_atoms, params.n_trc), &key, hit);
        Ok(s)
    }

    /// Write the manifest; failed audits turn into a non-zero exit after everything is on disk.
    pub fn finish(self) -> CliResult<PathBuf> {
        let path = self.run.path.clone();
        let manifest = self.run.finish()?;
        for a in manifest.audits.iter().filter(|a| !a.passed) {
            eprintln!("audit failed: {}: {}", a.name, a.detail);
        }
        match manifest.failed_audits() {
            0 => Ok(path),
            n => Err(crate::error::CliError::Audit(n)),
        }
    }
}

fn set<T>(slot: &mut Option<T>, default: T) {
    slot.get_or_insert(default);
}
