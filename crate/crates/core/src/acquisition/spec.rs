use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionKind {
    #[serde(rename = "QEI")]
    Qei,
    #[serde(rename = "TS")]
    Ts,
    #[serde(rename = "PQEI_MC")]
    PqeiMc,
}

impl AcquisitionKind {
    pub fn label(&self) -> &'static str {
        match self {
            AcquisitionKind::Qei => "QEI",
            AcquisitionKind::Ts => "TS",
            AcquisitionKind::PqeiMc => "PQEI_MC",
        }
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "QEI" => Ok(AcquisitionKind::Qei),
            "TS" => Ok(AcquisitionKind::Ts),
            "PQEI_MC" | "PQEI" => Ok(AcquisitionKind::PqeiMc),
            _ => Err(Error::invalid(format!("unknown acquisition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Monte-Carlo draws behind q-EI and pq-EI.
    pub mc_samples: usize,
    pub restarts: usize,
    pub min_within_batch_dist: f64,
    /// Random candidate points per Thompson draw.
    pub ts_candidate_grid: usize,
    /// Sampled grid points kept when refining a Thompson draw.
    pub ts_neighbours: usize,
    pub numeric_grad_step: f64,
    /// Iteration cap of each local ascent.
    pub local_iters: usize,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        AcquisitionSpec {
            kind: AcquisitionKind::Qei,
            mc_samples: 5000,
            restarts: 30,
            min_within_batch_dist: 0.05,
            ts_candidate_grid: 500,
            ts_neighbours: 100,
            numeric_grad_step: 1e-5,
            local_iters: 40,
        }
    }
}

impl AcquisitionSpec {
    pub fn with_kind(kind: AcquisitionKind) -> Self {
        AcquisitionSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be at least 1"));
        }
        if !(self.min_within_batch_dist >= 0.0) {
            return Err(Error::invalid("min_within_batch_dist must be non-negative"));
        }
        if self.mc_samples == 0 || self.ts_candidate_grid == 0 || self.ts_neighbours == 0 {
            return Err(Error::invalid("sample and grid sizes must be positive"));
        }
        if !(self.numeric_grad_step > 0.0) {
            return Err(Error::invalid("numeric_grad_step must be positive"));
        }
        Ok(())
    }
}
