//! Run configuration: a JSON document with every field optional, merged over
//! defaults, then overridden by command-line flags.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::emission::{ErrorPattern, DEFAULT_MAX_PHOTONS};
use crate::error::{Error, Result};
use crate::hamiltonian::EnvState;
use crate::oracle::DEFAULT_MAX_QUBITS;
use crate::spin::MAX_SITES;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    Full,
    PureDephasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathConfig {
    pub n_sites: usize,
    pub a_over_omega: f64,
    pub dipolar_ratio: f64,
    pub omega_ratio: f64,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self { n_sites: 10, a_over_omega: 2.0, dipolar_ratio: 2500.0, omega_ratio: 1e-3 }
    }
}

/// One pure member of an ensemble file: amplitudes as `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMember {
    pub weight: f64,
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    /// Uniform mixture over the `Σ_k I_k^y = m` sector.
    SectorUniform(i32),
    /// Product basis state, site `N` first, `'1'` for `I^y = -1`.
    Pure(String),
    /// JSON file holding a list of [`EnsembleMember`].
    EnsembleFile(PathBuf),
    /// Normalized random pure state drawn from the run seed.
    RandomPure,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::SectorUniform(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub bounds: bool,
    pub markov_fit: bool,
    pub trajectory_fit: bool,
    pub polarization: bool,
    /// Also run the pure-dephasing model at the same parameters and report
    /// its band maxima (only meaningful for full-Hamiltonian runs).
    pub compare_pure_dephasing: bool,
    /// Bath sizes for an `N` sweep of a single pattern.
    pub scaling_sweep: Vec<usize>,
    /// Pattern tracked by the sweep, written `α_n … α_1`.
    pub scaling_pattern: Option<String>,
    /// Also write a whitespace-free plotting table ordered by `(h, pattern)`.
    pub plot_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            bounds: true,
            markov_fit: true,
            trajectory_fit: false,
            polarization: false,
            compare_pure_dephasing: false,
            scaling_sweep: Vec::new(),
            scaling_pattern: None,
            plot_data: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_photons: usize,
    pub max_sites: usize,
    pub max_oracle_qubits: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_photons: DEFAULT_MAX_PHOTONS, max_sites: MAX_SITES, max_oracle_qubits: DEFAULT_MAX_QUBITS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_photons: usize,
    pub bath: BathConfig,
    pub hamiltonian: HamiltonianKind,
    pub env_state: EnvConfig,
    pub outputs: OutputConfig,
    pub seed: u64,
    pub limits: Limits,
    /// Free-form labels copied into the summary (e.g. assumed parameters).
    pub labels: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_photons: 5,
            bath: BathConfig::default(),
            hamiltonian: HamiltonianKind::PureDephasing,
            env_state: EnvConfig::default(),
            outputs: OutputConfig::default(),
            seed: 0,
            limits: Limits::default(),
            labels: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.limits;
        if self.n_photons == 0 {
            return Err(Error::Config("n_photons must be at least 1".into()));
        }
        if self.n_photons > l.max_photons {
            return Err(Error::TooLarge { what: "photons", value: self.n_photons, limit: l.max_photons });
        }
        if l.max_sites > MAX_SITES {
            return Err(Error::Config(format!("limits.max_sites cannot exceed {MAX_SITES}")));
        }
        let sizes = std::iter::once(self.bath.n_sites).chain(self.outputs.scaling_sweep.iter().copied());
        for n in sizes {
            if n == 0 {
                return Err(Error::Config("bath sizes must be at least 1".into()));
            }
            if n > l.max_sites {
                return Err(Error::TooLarge { what: "bath sites", value: n, limit: l.max_sites });
            }
        }
        let b = &self.bath;
        if !(b.a_over_omega >= 0.0 && b.a_over_omega.is_finite()) {
            return Err(Error::Config(format!("bath.a_over_omega must be non-negative, got {}", b.a_over_omega)));
        }
        if !(b.dipolar_ratio >= 0.0 && b.dipolar_ratio.is_finite()) {
            return Err(Error::Config(format!("bath.dipolar_ratio must be non-negative, got {}", b.dipolar_ratio)));
        }
        if !b.omega_ratio.is_finite() {
            return Err(Error::Config("bath.omega_ratio must be finite".into()));
        }
        if let Some(p) = &self.outputs.scaling_pattern {
            let a = ErrorPattern::parse(p).map_err(|e| Error::Config(e.to_string()))?;
            if a.len() != self.n_photons {
                return Err(Error::Config(format!(
                    "scaling_pattern has {} photons but n_photons = {}",
                    a.len(),
                    self.n_photons
                )));
            }
        }
        Ok(())
    }

    pub fn scaling_pattern(&self) -> Result<Option<ErrorPattern>> {
        self.outputs.scaling_pattern.as_deref().map(ErrorPattern::parse).transpose()
    }

    /// Initial bath state on `n_sites` sites.
    pub fn env_state(&self, n_sites: usize) -> Result<EnvState> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        match &self.env_state {
            EnvConfig::SectorUniform(m) => EnvState::sector_uniform(n_sites, *m).map_err(cfg_err),
            EnvConfig::Pure(bits) => {
                if bits.len() != n_sites {
                    return Err(Error::Config(format!("pure env bitstring has {} sites, bath has {n_sites}", bits.len())));
                }
                EnvState::from_bitstring(bits).map_err(cfg_err)
            }
            EnvConfig::EnsembleFile(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let members: Vec<EnsembleMember> =
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let members = members
                    .into_iter()
                    .map(|m| (m.weight, m.amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect()))
                    .collect();
                EnvState::ensemble(n_sites, members).map_err(cfg_err)
            }
            EnvConfig::RandomPure => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut v: Array1<C64> =
                    (0..1usize << n_sites).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.mapv_inplace(|z| z / norm);
                EnvState::pure(n_sites, v).map_err(cfg_err)
            }
        }
    }

    /// Canonical JSON used for the fingerprint.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.canonical_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_panel() {
        let c = RunConfig::default();
        assert_eq!((c.n_photons, c.bath.n_sites), (5, 10));
        assert_eq!(c.hamiltonian, HamiltonianKind::PureDephasing);
        assert_eq!(c.env_state, EnvConfig::SectorUniform(0));
        assert_eq!(c.bath.dipolar_ratio, 2500.0);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn parses_partial_documents() {
        let c = RunConfig::from_json(
            r#"{"n_photons": 3, "bath": {"n_sites": 4}, "hamiltonian": "full", "env_state": {"pure": "0101"}}"#,
        )
        .unwrap();
        assert_eq!(c.n_photons, 3);
        assert_eq!(c.bath.n_sites, 4);
        assert_eq!(c.bath.a_over_omega, 2.0);
        assert_eq!(c.hamiltonian, HamiltonianKind::Full);
        let env = c.env_state(4).unwrap();
        assert_eq!(env.populations()[0b0101], 1.0);
    }

    #[test]
    fn rejects_unknown_fields_with_location() {
        let err = RunConfig::from_json("{\n  \"n_photon\": 3\n}").unwrap_err().to_string();
        assert!(err.contains("n_photon") && err.contains("line 2"), "{err}");
        assert!(RunConfig::from_json(r#"{"bath": {"sites": 3}}"#).is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig { n_photons: 13, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::TooLarge { .. })));
        c.n_photons = 5;
        c.outputs.scaling_pattern = Some("0110".into());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.outputs.scaling_pattern = Some("01100".into());
        c.validate().unwrap();
        c.bath.a_over_omega = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn random_env_is_seeded() {
        let c = RunConfig { env_state: EnvConfig::RandomPure, seed: 7, ..Default::default() };
        let a = c.env_state(3).unwrap().purification();
        let b = c.env_state(3).unwrap().purification();
        assert_eq!(a, b);
        let d = RunConfig { seed: 8, ..c }.env_state(3).unwrap().purification();
        assert_ne!(a, d);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..Default::default() };
        assert_eq!(a.fingerprint(), RunConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
