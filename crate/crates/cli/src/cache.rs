//! Content-addressed cache for spectra, Lyapunov maps and ensemble members.
//!
//! Entries are keyed by the SHA-256 of a JSON description of everything that determines
//! them. Writes go to a temporary file that is renamed into place, so a reader never
//! sees a partial entry.

use std::fs;
use std::path::{Path, PathBuf};

use dicke_core::{ModelParams, Spectrum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::sha256_hex;

pub struct Cache {
    dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumMeta {
    params: ModelParams,
    basis_digest: u64,
    dim: usize,
    vector_indices: Vec<usize>,
}

pub fn key_of<K: Serialize>(kind: &str, key: &K) -> String {
    let body = serde_json::to_string(key).expect("cache key serialises");
    sha256_hex(format!("{kind}\n{body}").as_bytes())
}

pub fn f64s_to_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_to_f64s(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| CliError::io(format!("creating cache {}", d.display()), e))?;
        }
        Ok(Self { dir })
    }

    fn path(&self, key: &str, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.{ext}")))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, bytes)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| CliError::io(format!("writing cache entry {}", path.display()), e))
    }

    /// Cached value for `key`, or compute and store it. The flag reports a hit.
    pub fn json<T, F>(&self, key: &str, compute: F) -> CliResult<(T, bool)>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> CliResult<T>,
    {
        let path = self.path(key, "json");
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let text = fs::read(p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
            let value = serde_json::from_slice(&text).map_err(|e| CliError::Cache {
                key: key.into(),
                reason: e.to_string(),
            })?;
            return Ok((value, true));
        }
        let value = compute()?;
        if let Some(p) = path {
            Self::write_atomic(&p, &serde_json::to_vec(&value).expect("cache value serialises"))?;
        }
        Ok((value, false))
    }

    pub fn spectrum<F>(&self, key: &str, compute: F) -> CliResult<(Spectrum, bool)>
    where
        F: FnOnce() -> CliResult<Spectrum>,
    {
        if let (Some(meta_p), Some(bin_p)) = (self.path(key, "json"), self.path(key, "bin")) {
            if meta_p.exists() && bin_p.exists() {
                return Ok((self.load_spectrum(key, &meta_p, &bin_p)?, true));
            }
        }
        let s = compute()?;
        if let (Some(meta_p), Some(bin_p)) = (self.path(key, "json"), self.path(key, "bin")) {
            let mut bytes = f64s_to_le(s.eigenvalues());
            bytes.extend(f64s_to_le(s.vectors()));
            Self::write_atomic(&bin_p, &bytes)?;
            let meta = SpectrumMeta {
                params: *s.params(),
                basis_digest: s.basis_digest(),
                dim: s.dim(),
                vector_indices: s.vector_indices().to_vec(),
            };
            Self::write_atomic(&meta_p, &serde_json::to_vec(&meta).expect("meta serialises"))?;
        }
        Ok((s, false))
    }

    fn load_spectrum(&self, key: &str, meta_p: &Path, bin_p: &Path) -> CliResult<Spectrum> {
        let corrupt = |reason: String| CliError::Cache {
            key: key.into(),
            reason,
        };
        let meta: SpectrumMeta = serde_json::from_slice(&fs::read(meta_p).map_err(|e| CliError::io("reading cache", e))?)
            .map_err(|e| corrupt(e.to_string()))?;
        let all = le_to_f64s(&fs::read(bin_p).map_err(|e| CliError::io("reading cache", e))?)
            .ok_or_else(|| corrupt("blob length is not a multiple of 8".into()))?;
        if all.len() != meta.dim * (1 + meta.vector_indices.len()) {
            return Err(corrupt(format!("blob holds {} values", all.len())));
        }
        let (values, vectors) = all.split_at(meta.dim);
        Spectrum::from_parts(meta.params, meta.basis_digest, values.to_vec(), meta.vector_indices, vectors.to_vec())
            .map_err(|e| corrupt(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dicke_core::spectrum::diagonalize_window;
    use dicke_core::{assemble_hamiltonian, build_even_parity_basis};

    #[test]
    fn spectrum_round_trips_through_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(Some(dir.path().to_path_buf())).unwrap();
        let p = ModelParams::resonant(0.6, 8, 16).unwrap();
        let compute = || {
            let b = build_even_parity_basis(&p)?;
            Ok(diagonalize_window(&assemble_hamiltonian(&p, &b)?, -0.6, -0.2)?)
        };
        let (first, hit1) = cache.spectrum("k", compute).unwrap();
        let (second, hit2) = cache.spectrum("k", || panic!("must not recompute")).unwrap();
        assert!(!hit1 && hit2);
        assert_eq!(first, second);
    }

    #[test]
    fn disabled_cache_always_computes() {
        let cache = Cache::new(None).unwrap();
        let (v, hit) = cache.json("k", || Ok(3u32)).unwrap();
        let (_, hit2) = cache.json::<u32, _>("k", || Ok(3)).unwrap();
        assert_eq!((v, hit, hit2), (3, false, false));
    }

    #[test]
    fn keys_separate_kinds() {
        assert_ne!(key_of("a", &1), key_of("b", &1));
        assert_eq!(key_of("a", &(1, 2.5)), key_of("a", &(1, 2.5)));
    }

    #[test]
    fn blob_encoding_is_little_endian() {
        assert_eq!(f64s_to_le(&[1.0])[7], 0x3f);
        assert_eq!(le_to_f64s(&f64s_to_le(&[-0.25, 3.5])).unwrap(), vec![-0.25, 3.5]);
        assert!(le_to_f64s(&[0; 7]).is_none());
    }
}
