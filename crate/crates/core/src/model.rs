//! Model parameters and the even-parity product basis |n> ⊗ |j, m>.

use serde::{Deserialize, Serialize};

use crate::error::{DickeError, Result};

/// Parameters of a single Dicke run. All frequencies are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub omega0: f64,
    pub lambda: f64,
    pub n_atoms: usize,
    pub n_trc: usize,
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, lambda: f64, n_atoms: usize, n_trc: usize) -> Result<Self> {
        let p = Self {
            omega,
            omega0,
            lambda,
            n_atoms,
            n_trc,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resonant parameters `omega = omega0 = 1`, the setting used throughout.
    pub fn resonant(lambda: f64, n_atoms: usize, n_trc: usize) -> Result<Self> {
        Self::new(1.0, 1.0, lambda, n_atoms, n_trc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(DickeError::param("omega", format!("must be finite and > 0, got {}", self.omega)));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(DickeError::param("omega0", format!("must be finite and > 0, got {}", self.omega0)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(DickeError::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if self.n_atoms == 0 || !self.n_atoms.is_multiple_of(2) {
            return Err(DickeError::param(
                "n_atoms",
                format!("must be a positive even integer, got {}", self.n_atoms),
            ));
        }
        if self.n_trc == 0 || !self.n_trc.is_multiple_of(2) {
            return Err(DickeError::param(
                "n_trc",
                format!("must be a positive even integer, got {}", self.n_trc),
            ));
        }
        Ok(())
    }

    /// Total spin quantum number j = N/2 (integral because N is even).
    pub fn j(&self) -> i64 {
        (self.n_atoms / 2) as i64
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    pub fn with_n_trc(&self, n_trc: usize) -> Self {
        Self { n_trc, ..*self }
    }

    pub fn with_n_atoms(&self, n_atoms: usize) -> Self {
        Self { n_atoms, ..*self }
    }
}

/// One product state |n_boson> ⊗ |j, m>.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub n_boson: usize,
    pub m: i64,
}

impl BasisState {
    pub fn is_even(&self, j: i64) -> bool {
        (self.n_boson as i64 + self.m + j).rem_euclid(2) == 0
    }
}

/// Even-parity basis ordered lexicographically in `(n_boson, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisIndex {
    j: i64,
    n_trc: usize,
    states: Vec<BasisState>,
    // dense lookup over the full (n_boson, m) rectangle; `usize::MAX` marks odd states
    lookup: Vec<usize>,
}

impl BasisIndex {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn j(&self) -> i64 {
        self.j
    }

    pub fn n_trc(&self) -> usize {
        self.n_trc
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> BasisState {
        self.states[i]
    }

    /// Row index of `(n_boson, m)`, or `None` if it is outside the truncation or odd.
    pub fn index(&self, n_boson: usize, m: i64) -> Option<usize> {
        if n_boson > self.n_trc || m < -self.j || m > self.j {
            return None;
        }
        let slot = n_boson * (2 * self.j as usize + 1) + (m + self.j) as usize;
        match self.lookup[slot] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// Whether this basis was built from `params`.
    pub fn matches(&self, params: &ModelParams) -> bool {
        self.j == params.j() && self.n_trc == params.n_trc
    }

    /// Order-sensitive FNV-1a digest of the state list, used to key cached eigenvectors.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.j as u64);
        feed(self.n_trc as u64);
        for s in &self.states {
            feed(s.n_boson as u64);
            feed(s.m as u64);
        }
        h
    }
}

pub fn build_even_parity_basis(params: &ModelParams) -> Result<BasisIndex> {
    params.validate()?;
    let j = params.j();
    let width = 2 * j as usize + 1;
    let mut lookup = vec![usize::MAX; (params.n_trc + 1) * width];
    let mut states = Vec::new();
    for n_boson in 0..=params.n_trc {
        for m in -j..=j {
            let s = BasisState { n_boson, m };
            if s.is_even(j) {
                lookup[n_boson * width + (m + j) as usize] = states.len();
                states.push(s);
            }
        }
    }
    let (_, d_even) = hilbert_dims(params)?;
    debug_assert_eq!(states.len(), d_even);
    Ok(BasisIndex {
        j,
        n_trc: params.n_trc,
        states,
        lookup,
    })
}

/// `(d_full, d_even)` for the j = N/2 subspace under the boson truncation.
pub fn hilbert_dims(params: &ModelParams) -> Result<(usize, usize)> {
    params.validate()?;
    let n = params.n_atoms;
    let t = params.n_trc;
    Ok(((n + 1) * (t + 1), (n / 2 + 1) * (t + 1) - t / 2))
}
