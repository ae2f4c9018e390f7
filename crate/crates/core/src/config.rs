//! Run configuration: a TOML file whose every key is optional, plus
//! command-line overrides. Defaults reproduce the reference hyperparameters
//! (20 layers, 20 Fourier modes, Adam 15000 x 0.001, 1000 shots,
//! epsilon 0.01, alpha 0.05).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iqae::{EstimationMode, IqaeConfig};
use crate::ltd::{LtdError, ProcessSpec, PHI_SCALAR};
use crate::statevec::MAX_QUBITS;
use crate::vqc::{AnsatzSpec, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub process: String,
    pub mass_scan: Vec<f64>,
    pub seed: u64,
    /// Fourier truncation used for integration.
    pub n_fourier: usize,
    /// Read ancilla probabilities from the statevector instead of sampling.
    pub exact: bool,
    /// Directory for cached model and series artifacts.
    pub artifact_dir: Option<PathBuf>,
    /// Load a cached model instead of retraining when one matches.
    pub reuse_artifacts: bool,
    /// Write wall-clock seconds into result rows. Off gives byte-identical
    /// tables across runs.
    pub record_seconds: bool,
    pub physics: PhysicsConfig,
    pub qnn: QnnConfig,
    pub iqae: IqaeSection,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            process: PHI_SCALAR.to_string(),
            mass_scan: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            seed: 0,
            n_fourier: 20,
            exact: false,
            artifact_dir: None,
            reuse_artifacts: true,
            record_seconds: true,
            physics: PhysicsConfig::default(),
            qnn: QnnConfig::default(),
            iqae: IqaeSection::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub sqrt_s: f64,
    pub coupling: f64,
    /// Replaces the default `m1..m6` derived from the mass ratio.
    pub masses: Option<[f64; 6]>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { sqrt_s: 1.0, coupling: 1.0, masses: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QnnConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub encodings_per_variable: usize,
    pub n_variables: usize,
    pub measured_qubit: usize,
    /// Training points per dimension (cell midpoints).
    pub grid_points: usize,
    /// Targets are mapped onto `[-margin, margin]` before training.
    pub margin: f64,
    pub max_steps: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub restarts: usize,
    pub target_loss: Option<f64>,
}

impl Default for QnnConfig {
    fn default() -> Self {
        let a = AnsatzSpec::default();
        let t = TrainConfig::default();
        Self {
            n_qubits: a.n_qubits,
            n_layers: a.n_layers,
            encodings_per_variable: a.encodings_per_variable,
            n_variables: a.n_variables,
            measured_qubit: a.measured_qubit,
            grid_points: 31,
            margin: 0.9,
            max_steps: t.max_steps,
            step_size: t.step_size,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon_adam: t.epsilon_adam,
            restarts: t.restarts,
            target_loss: t.target_loss,
        }
    }
}

impl QnnConfig {
    pub fn ansatz(&self) -> AnsatzSpec {
        AnsatzSpec {
            n_qubits: self.n_qubits,
            n_layers: self.n_layers,
            encodings_per_variable: self.encodings_per_variable,
            n_variables: self.n_variables,
            measured_qubit: self.measured_qubit,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_steps: self.max_steps,
            step_size: self.step_size,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon_adam: self.epsilon_adam,
            seed,
            restarts: self.restarts,
            target_loss: self.target_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IqaeSection {
    pub epsilon: f64,
    pub alpha: f64,
    pub shots: u64,
    pub max_rounds: usize,
    /// Grid qubits per integration dimension; one ancilla is added.
    pub grid_bits: [usize; 2],
}

impl Default for IqaeSection {
    fn default() -> Self {
        let c = IqaeConfig::default();
        Self { epsilon: c.epsilon, alpha: c.alpha, shots: c.shots, max_rounds: c.max_rounds, grid_bits: [2, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Coarse panel count; the reported value uses twice as many.
    pub panels: usize,
    /// Largest accepted relative change between the two resolutions.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { order: 32, panels: 8, tolerance: 1e-3 }
    }
}

/// Values given on the command line; `None` keeps the file or default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub process: Option<String>,
    pub mass_ratios: Vec<f64>,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
    pub layers: Option<usize>,
    pub n_fourier: Option<usize>,
    pub exact: Option<bool>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always encodable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.process {
            self.process = p.clone();
        }
        if !o.mass_ratios.is_empty() {
            self.mass_scan = o.mass_ratios.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(s) = o.shots {
            self.iqae.shots = s;
        }
        if let Some(e) = o.epsilon {
            self.iqae.epsilon = e;
        }
        if let Some(a) = o.alpha {
            self.iqae.alpha = a;
        }
        if let Some(l) = o.layers {
            self.qnn.n_layers = l;
        }
        if let Some(n) = o.n_fourier {
            self.n_fourier = n;
        }
        if let Some(e) = o.exact {
            self.exact = e;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.process.is_empty() {
            return Err(invalid("process name is empty"));
        }
        if self.mass_scan.is_empty() {
            return Err(invalid("mass_scan is empty"));
        }
        if let Some(m) = self.mass_scan.iter().find(|m| !(0.0..1.0).contains(*m)) {
            return Err(invalid(format!("mass ratio {m} not in [0, 1)")));
        }
        if !(1..=crate::fourier::MAX_N_MAX).contains(&self.n_fourier) {
            return Err(invalid(format!("n_fourier {} not in 1..={}", self.n_fourier, crate::fourier::MAX_N_MAX)));
        }
        self.qnn.ansatz().validate().map_err(|e| invalid(e.to_string()))?;
        self.qnn.train(self.seed).validate().map_err(|e| invalid(e.to_string()))?;
        if self.qnn.grid_points < 2 {
            return Err(invalid("qnn.grid_points must be at least 2"));
        }
        if !(self.qnn.margin > 0.0 && self.qnn.margin <= 1.0) {
            return Err(invalid("qnn.margin must be in (0, 1]"));
        }
        self.iqae_config().validate().map_err(|e| invalid(e.to_string()))?;
        let [b1, b2] = self.iqae.grid_bits;
        if b1 == 0 || b2 == 0 || b1 + b2 + 1 > MAX_QUBITS {
            return Err(invalid(format!("grid_bits {:?} need 1..={} qubits each", self.iqae.grid_bits, MAX_QUBITS - 2)));
        }
        if self.oracle.order < 2 || self.oracle.panels == 0 || !(self.oracle.tolerance > 0.0) {
            return Err(invalid("oracle needs order >= 2, panels >= 1, tolerance > 0"));
        }
        for m in &self.mass_scan {
            self.process_spec(*m).map_err(|e| invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn iqae_config(&self) -> IqaeConfig {
        IqaeConfig {
            epsilon: self.iqae.epsilon,
            alpha: self.iqae.alpha,
            shots: self.iqae.shots,
            max_rounds: self.iqae.max_rounds,
            mode: if self.exact { EstimationMode::Exact } else { EstimationMode::Sampled },
            seed: self.seed,
        }
    }

    pub fn process_spec(&self, mass_ratio: f64) -> Result<ProcessSpec, LtdError> {
        let mut spec = ProcessSpec::new(&self.process, self.physics.sqrt_s, mass_ratio)?;
        spec.coupling = self.physics.coupling;
        if let Some(m) = self.physics.masses {
            spec.masses = m;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.mass_scan, vec![0.0, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!((c.qnn.n_layers, c.n_fourier, c.qnn.max_steps), (20, 20, 15000));
        assert_eq!(c.qnn.step_size, 0.001);
        assert_eq!((c.iqae.shots, c.iqae.epsilon, c.iqae.alpha), (1000, 0.01, 0.05));
        assert_eq!(c.iqae.grid_bits.iter().sum::<usize>() + 1, 5);
    }

    #[test]
    fn empty_file_is_default_and_round_trips() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
        let mut c = RunConfig::default();
        c.physics.masses = Some([0.0, 0.1, 0.1, 0.1, 0.1, 1.0]);
        c.qnn.target_loss = Some(1e-4);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_and_overrides() {
        let mut c = RunConfig::from_toml("seed = 4\nmass_scan = [0.2]\n[qnn]\nn_layers = 3\n[iqae]\nshots = 50\n").unwrap();
        assert_eq!((c.seed, c.qnn.n_layers, c.iqae.shots), (4, 3, 50));
        assert_eq!(c.qnn.n_qubits, 6);
        c.apply(&Overrides { mass_ratios: vec![0.1, 0.3], epsilon: Some(0.005), exact: Some(true), ..Default::default() });
        assert_eq!(c.mass_scan, vec![0.1, 0.3]);
        assert_eq!(c.iqae_config().epsilon, 0.005);
        assert_eq!(c.iqae_config().mode, EstimationMode::Exact);
    }

    #[test]
    fn rejects_invalid_values() {
        for text in [
            "mass_scan = [1.0]",
            "mass_scan = []",
            "n_fourier = 0",
            "unknown = 1",
            "[qnn]\nn_qubits = 5",
            "[iqae]\nepsilon = 0.7",
            "[iqae]\ngrid_bits = [0, 2]",
            "[iqae]\ngrid_bits = [6, 6]",
            "[oracle]\norder = 1",
            "[physics]\nmasses = [0.0, 0.1, 0.1, 0.1, 0.1, 2.0]",
            "seed = -1",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
