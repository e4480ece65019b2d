//! TOML configuration: sections [ring], [modulator], [detector], [solver],
//! [sweep], [readout], all optional with working defaults. A run manifest
//! embeds the fully resolved config, so re-running from a manifest
//! reproduces the same results byte for byte.

use crate::readout::{ReadoutSettings, TrainTestProtocol};
use crate::ring::{OutputPort, RingParams, SolverSettings};
use crate::signal::{DetectorModel, ModulatorModel};
use crate::sweep::{PipelineModels, SweepGrid};
use crate::tasks::TaskSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse: {0}")]
    Parse(String),
    #[error("config field: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything a run needs; every section and field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ring: RingParams,
    pub modulator: ModulatorModel,
    pub detector: DetectorModel,
    pub solver: SolverSettings,
    pub readout: ReadoutSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub folds: usize,
    pub threshold: f64,
    pub lambda_points: usize,
    pub lambda_min_factor: f64,
    pub lambda_max_factor: f64,
    pub warmup_bits: usize,
    pub train_bits: usize,
    pub test_bits: usize,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let s = ReadoutSettings::default();
        let p = TrainTestProtocol::default();
        Self {
            folds: s.folds,
            threshold: s.threshold,
            lambda_points: s.lambda_points,
            lambda_min_factor: s.lambda_min_factor,
            lambda_max_factor: s.lambda_max_factor,
            warmup_bits: p.warmup_bits,
            train_bits: p.train_bits,
            test_bits: p.test_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Axis overrides; whatever is absent comes from the selected base
    /// grid (desk or full).
    pub bitrates_mbps: Option<Vec<f64>>,
    pub detunings_ghz: Option<Vec<f64>>,
    pub powers_dbm: Option<Vec<f64>>,
    pub n_v: Option<Vec<usize>>,
    /// Tasks as `OP:n1:n2` strings.
    pub tasks: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub sim_sample_rate_hz: f64,
    pub output_port: OutputPort,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            bitrates_mbps: None,
            detunings_ghz: None,
            powers_dbm: None,
            n_v: None,
            tasks: None,
            seeds: None,
            sim_sample_rate_hz: 40e9,
            output_port: OutputPort::Through,
        }
    }
}

/// Base grid selector for `resolve_grid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Desk,
    Full,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Load a config, accepting either a plain config file or a run
    /// manifest (whose embedded snapshot is used).
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if let Ok(manifest) = toml::from_str::<RunManifest>(&text) {
            return Ok(manifest.config);
        }
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// The models bundle consumed by the pipeline.
    pub fn models(&self) -> PipelineModels {
        PipelineModels {
            ring: self.ring.clone(),
            modulator: self.modulator.clone(),
            detector: self.detector.clone(),
            solver: self.solver,
            readout: ReadoutSettings {
                folds: self.readout.folds,
                threshold: self.readout.threshold,
                lambda_points: self.readout.lambda_points,
                lambda_min_factor: self.readout.lambda_min_factor,
                lambda_max_factor: self.readout.lambda_max_factor,
            },
            protocol: TrainTestProtocol {
                warmup_bits: self.readout.warmup_bits,
                train_bits: self.readout.train_bits,
                test_bits: self.readout.test_bits,
            },
            sim_sample_rate: self.sweep.sim_sample_rate_hz,
            output_port: self.sweep.output_port,
        }
    }

    /// Resolve the sweep grid: start from the base (desk or full) and
    /// apply any axis overrides from [sweep].
    pub fn resolve_grid(&self, base: GridKind) -> Result<SweepGrid, ConfigError> {
        let mut grid = match base {
            GridKind::Desk => SweepGrid::desk(),
            GridKind::Full => SweepGrid::paper_full(),
        };
        if let Some(v) = &self.sweep.bitrates_mbps {
            grid.bitrates_mbps = v.clone();
        }
        if let Some(v) = &self.sweep.detunings_ghz {
            grid.detunings_ghz = v.clone();
        }
        if let Some(v) = &self.sweep.powers_dbm {
            grid.powers_dbm = v.clone();
        }
        if let Some(v) = &self.sweep.n_v {
            grid.n_v_list = v.clone();
        }
        if let Some(v) = &self.sweep.seeds {
            grid.seeds = v.clone();
        }
        if let Some(strings) = &self.sweep.tasks {
            let mut tasks = Vec::with_capacity(strings.len());
            for s in strings {
                tasks.push(
                    s.parse::<TaskSpec>()
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                );
            }
            grid.tasks = tasks;
        }
        grid.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(grid)
    }
}

/// Reproducibility record written next to every output set. Re-running
/// `sweep --config manifest.toml` replays the embedded snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix_s: u64,
    pub grid_hash: String,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub config: Config,
}

impl RunManifest {
    pub fn new(config: &Config, grid: &SweepGrid, workers: usize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            grid_hash: grid_hash(config, grid),
            seeds: grid.seeds.clone(),
            workers,
            config: config.clone(),
        }
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Hash of the resolved configuration and grid, for manifest bookkeeping.
pub fn grid_hash(config: &Config, grid: &SweepGrid) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.to_toml_string().as_bytes());
    hasher.update(format!("{grid:?}").as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.ring.q_loaded, 6.0e3);
        assert_eq!(c.detector.adc_sample_rate, 20e9);
    }

    #[test]
    fn sections_override_defaults() {
        let c = Config::from_toml_str(
            r#"
[ring]
q_loaded = 8000.0
coupling_loss_db = 3.0

[modulator]
bandwidth_3db = 5e9
extinction_ratio_db = inf

[detector]
noise_rms_rel = 0.0

[solver]
rel_tol = 1e-7

[readout]
folds = 4

[sweep]
bitrates_mbps = [100.0]
tasks = ["XOR:2:3"]
output_port = "drop"
"#,
        )
        .unwrap();
        assert_eq!(c.ring.q_loaded, 8000.0);
        assert!(c.modulator.extinction_ratio_db.is_infinite());
        assert_eq!(c.readout.folds, 4);
        assert_eq!(c.sweep.output_port, OutputPort::Drop);
        let grid = c.resolve_grid(GridKind::Desk).unwrap();
        assert_eq!(grid.bitrates_mbps, vec![100.0]);
        assert_eq!(grid.tasks.len(), 1);
        assert_eq!(grid.tasks[0].to_string(), "XOR:2:3");
        // Axes not overridden keep the desk defaults.
        assert_eq!(grid.detunings_ghz.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected_with_context() {
        let err = Config::from_toml_str("[ring]\nquality = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("quality"), "message was: {msg}");
    }

    #[test]
    fn bad_task_strings_name_the_field() {
        let c = Config::from_toml_str("[sweep]\ntasks = [\"XOR:2\"]\n").unwrap();
        let err = c.resolve_grid(GridKind::Desk).unwrap_err();
        assert!(err.to_string().contains("n2"), "got: {err}");
    }

    #[test]
    fn config_toml_round_trip() {
        let c = Config::default();
        let text = c.to_toml_string();
        let back = Config::from_toml_str(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn manifest_embeds_a_loadable_config() {
        let mut c = Config::default();
        c.ring.q_loaded = 7000.0;
        let grid = c.resolve_grid(GridKind::Desk).unwrap();
        let manifest = RunManifest::new(&c, &grid, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        manifest.write(&path).unwrap();
        let loaded = Config::load(&path).unwrap();
        assert_eq!(loaded, c);
        assert_eq!(manifest.grid_hash, grid_hash(&c, &grid));
    }

    #[test]
    fn full_grid_resolves() {
        let c = Config::default();
        let grid = c.resolve_grid(GridKind::Full).unwrap();
        assert_eq!(grid.bitrates_mbps.len(), 13);
        assert_eq!(grid.detunings_ghz.len(), 13);
        assert_eq!(grid.powers_dbm.len(), 11);
        assert_eq!(grid.n_v_list, vec![3, 4, 5, 10, 15, 20, 30]);
    }
}
