use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// System dimensions shared by every channel in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Antenna count `N_a`.
    pub n_ant: usize,
    /// Subcarrier count `N_f`.
    pub n_sub: usize,
    /// CSI-RS pilot spacing `D_RS` in subcarriers.
    pub pilot_spacing: usize,
    /// Number of CSI-RS pilots `M_f`.
    pub n_pilots: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing_hz: f64,
}

impl SystemConfig {
    /// Builds and validates a configuration.
    pub fn new(
        n_ant: usize,
        n_sub: usize,
        pilot_spacing: usize,
        n_pilots: usize,
        subcarrier_spacing_hz: f64,
    ) -> Result<Self> {
        let cfg = Self {
            n_ant,
            n_sub,
            pilot_spacing,
            n_pilots,
            subcarrier_spacing_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration with `n_pilots = n_sub / pilot_spacing` (floor).
    pub fn with_spacing(
        n_ant: usize,
        n_sub: usize,
        pilot_spacing: usize,
        subcarrier_spacing_hz: f64,
    ) -> Result<Self> {
        if pilot_spacing == 0 {
            return Err(Error::InvalidConfig("pilot spacing must be positive".into()));
        }
        Self::new(
            n_ant,
            n_sub,
            pilot_spacing,
            n_sub / pilot_spacing,
            subcarrier_spacing_hz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ant == 0 || self.n_sub == 0 || self.pilot_spacing == 0 || self.n_pilots == 0 {
            return Err(Error::InvalidConfig(format!(
                "all dimensions must be positive: {self:?}"
            )));
        }
        if !(self.subcarrier_spacing_hz.is_finite() && self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "subcarrier spacing must be a positive finite number, got {}",
                self.subcarrier_spacing_hz
            )));
        }
        if self.n_pilots * self.pilot_spacing > self.n_sub {
            return Err(Error::InvalidConfig(format!(
                "n_pilots * pilot_spacing = {} exceeds n_sub = {}",
                self.n_pilots * self.pilot_spacing,
                self.n_sub
            )));
        }
        Ok(())
    }

    /// Delay bins `j < M_f` survive uniform subsampling without folding.
    pub fn max_unaliased_delay_taps(&self) -> usize {
        self.n_pilots
    }

    /// True when `n_sub = M_f * D_RS`, the precondition of the fold identity.
    pub fn is_exact_fold(&self) -> bool {
        self.n_sub == self.n_pilots * self.pilot_spacing
    }

    pub fn require_exact_fold(&self) -> Result<()> {
        if self.is_exact_fold() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "n_sub = {} is not n_pilots * pilot_spacing = {}",
                self.n_sub,
                self.n_pilots * self.pilot_spacing
            )))
        }
    }

    /// Drops trailing subcarriers so that `n_sub = M_f * D_RS`.
    pub fn truncated_to_fold(&self) -> Self {
        Self {
            n_sub: self.n_pilots * self.pilot_spacing,
            ..*self
        }
    }

    /// Duration of one delay tap, `1 / (N_f * Δf)` seconds.
    pub fn tap_duration_s(&self) -> f64 {
        1.0 / (self.n_sub as f64 * self.subcarrier_spacing_hz)
    }
}
