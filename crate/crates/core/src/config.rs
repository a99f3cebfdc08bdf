//! Run configuration, read from TOML. Every key is optional and defaults to
//! the 60 GHz reference setup; unknown keys are rejected.
//!
//! ```toml
//! seed = 0                  # Monte Carlo trial streams
//!
//! [geometry]
//! num_layers = 9
//! m_x = 12
//! m_y = 12
//!
//! [train]
//! max_iters = 200
//! decay = 0.95
//! seed = 0                  # initial phases
//!
//! [protocol]
//! t_x = 100
//! t_y = 100
//! snr_db = 10.0
//! source = "per_observation"  # or "per_snapshot"
//!
//! [experiment]
//! decays = [0.9, 0.95, 0.99]
//! snr_db = [-10, -5, 0, 5, 10, 15, 20]
//! trials = 100
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, ExperimentParams, ExperimentSpec};
use crate::geometry::{GeometryParams, SimGeometry};
use crate::protocol::ProtocolConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometryParams,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub experiment: ExperimentParams,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; the literal path `default` yields the built-in
    /// reference configuration.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == "default" {
            return Ok(RunConfig::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn geometry(&self) -> Result<SimGeometry> {
        SimGeometry::new(self.geometry)
    }

    pub fn spec(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            kind,
            geometry: self.geometry()?,
            train: self.train,
            protocol: self.protocol,
            params: self.experiment.clone(),
            seed: self.seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.train.validate()?;
        self.protocol.validate()?;
        // configs are echoed into JSON sidecars, which have no infinities
        let finite = std::iter::once(self.protocol.snr_db)
            .chain(self.experiment.snr_db.iter().copied())
            .chain(self.experiment.decays.iter().copied())
            .chain(self.experiment.spectrum_cases.iter().flatten().copied())
            .all(f64::is_finite);
        if !finite {
            return Err(Error::InvalidConfig(
                "config values must be finite numbers".into(),
            ));
        }
        self.experiment.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_reference_setup() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.geometry().unwrap(), SimGeometry::reference());
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let cfg = RunConfig::from_toml_str(
            "seed = 7\n[geometry]\nnum_layers = 3\n[train]\ndecay = 0.9\n[protocol]\nsource = \"per_snapshot\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.geometry.num_layers, 3);
        assert_eq!(cfg.geometry.m_x, 12);
        assert_eq!(cfg.train.decay, 0.9);
        assert_eq!(cfg.train.max_iters, 200);
        assert_eq!(
            cfg.protocol.source,
            crate::protocol::SourceModel::PerSnapshot
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "sed = 1",
            "[geometry]\nlayers = 2",
            "[train]\nlr = 0.1",
            "[protocol]\nsnr = 3.0",
            "[experiment]\nruns = 3",
            "[extra]",
        ] {
            assert!(
                matches!(RunConfig::from_toml_str(text), Err(Error::ConfigParse(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[geometry]\nm_x = 0",
            "[geometry]\nwavelength = -1.0",
            "[train]\ndecay = 1.0",
            "[protocol]\nt_x = 0",
            "[protocol]\nsnr_db = -inf",
            "[experiment]\natoms = [50]",
            "[experiment]\nsnr_db = [nan]",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn toml_and_json_round_trip() {
        let cfg = RunConfig::from_toml_str("seed = 3\n[geometry]\nd_x = 0.0031\n").unwrap();
        assert_eq!(
            RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&json).unwrap(), cfg);
    }
}
