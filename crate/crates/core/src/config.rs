//! Run configuration: every tunable parameter with its default. Loaded from
//! JSON; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crf::CrfParams;
use crate::dstf::DstfParams;
use crate::error::{Error, Result};
use crate::ilp::IlpParams;
use crate::stf::StfParams;

/// Which image-level prior forests `train` builds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IlpVariant {
    /// Multi-label forest only.
    Context,
    /// Independent per-class forests only; the bundle is flagged as baseline.
    Multiclass,
    /// Both; the multi-label forest is the one used by `predict`.
    #[default]
    Both,
}

impl std::str::FromStr for IlpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(IlpVariant::Context),
            "multiclass" => Ok(IlpVariant::Multiclass),
            "both" => Ok(IlpVariant::Both),
            other => Err(Error::param(format!("unknown ilp variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationParams {
    /// Cells per side of the normalised location grid.
    pub grid: usize,
}

impl Default for LocationParams {
    fn default() -> Self {
        LocationParams { grid: 21 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Worker threads; 0 uses all cores. `CHEAPSEG_THREADS` overrides it.
    pub threads: usize,
    pub stf: StfParams,
    pub dstf: DstfParams,
    pub ilp: IlpParams,
    pub ilp_variant: IlpVariant,
    pub location: LocationParams,
    pub crf: CrfParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            threads: 0,
            stf: StfParams::default(),
            dstf: DstfParams::default(),
            ilp: IlpParams::default(),
            ilp_variant: IlpVariant::Both,
            location: LocationParams::default(),
            crf: CrfParams::default(),
        }
    }
}

pub const THREADS_ENV: &str = "CHEAPSEG_THREADS";

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.stf.validate()?;
        self.dstf.recognizer.validate()?;
        if !(self.dstf.cap_fraction > 0.0 && self.dstf.cap_fraction <= 1.0) {
            return Err(Error::param("dstf cap_fraction must be in (0, 1]"));
        }
        if self.dstf.min_members == 0 {
            return Err(Error::param("dstf min_members must be positive"));
        }
        self.ilp.validate()?;
        if self.location.grid == 0 {
            return Err(Error::param("location grid must be positive"));
        }
        self.crf.validate()
    }

    /// Worker count after applying the environment override; 0 means all cores.
    pub fn effective_threads(&self) -> Result<usize> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::param(format!(
                    "{THREADS_ENV} must be a non-negative integer, got `{v}`"
                ))
            }),
            Err(_) => Ok(self.threads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"crf": {"omgea": 0.5}}"#).is_err());
        let c = RunConfig::from_json(r#"{"crf": {"omega": 0.5}}"#).unwrap();
        assert_eq!(c.crf.omega, 0.5);
        assert_eq!(c.crf.lambda, CrfParams::default().lambda);
    }
}
