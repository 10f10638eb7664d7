//! Error metrics, RMS delay spread and delay-spread clusters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_shape, diff_frobenius_sqr, CsiMatrix};
use crate::transforms::TransformPlan;

/// `‖Ĥ − H‖²/‖H‖²`.
pub fn nmse_ratio(h_hat: &CsiMatrix, h: &CsiMatrix) -> Result<f64> {
    h_hat.expect_domain(h.domain())?;
    check_shape(h_hat.shape(), h.shape())?;
    let den = h.frobenius_norm_sqr();
    if den == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok(diff_frobenius_sqr(h_hat.data(), h.data()) / den)
}

/// NMSE in dB; `f64::NEG_INFINITY` for an exact match.
pub fn nmse_db(h_hat: &CsiMatrix, h: &CsiMatrix) -> Result<f64> {
    Ok(10.0 * nmse_ratio(h_hat, h)?.log10())
}

/// Power-weighted standard deviation of delay, in seconds.
///
/// Tap `j` sits at `j / (n_sub Δf)`; the weight is the beam-summed BD power.
pub fn rms_delay_spread_s(h: &CsiMatrix, plan: &TransformPlan, subcarrier_spacing_hz: f64) -> Result<f64> {
    let bd = plan.bd_forward(h)?;
    let tap = 1.0 / (plan.n_sub() as f64 * subcarrier_spacing_hz);
    let p: Vec<f64> = bd
        .data()
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let mean = p.iter().enumerate().map(|(j, w)| w * j as f64).sum::<f64>() / total;
    let var = p
        .iter()
        .enumerate()
        .map(|(j, w)| w * (j as f64 - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(var.sqrt() * tap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cluster {
    CL1,
    CL2,
    CL3,
}

impl Cluster {
    pub const ALL: [Cluster; 3] = [Cluster::CL1, Cluster::CL2, Cluster::CL3];

    pub fn name(self) -> &'static str {
        match self {
            Cluster::CL1 => "CL1",
            Cluster::CL2 => "CL2",
            Cluster::CL3 => "CL3",
        }
    }
}

impl fmt::Display for Cluster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cluster {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cluster::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Report(format!("unknown cluster {s:?}")))
    }
}

pub const CL1_UPPER_S: f64 = 500e-9;
pub const CL3_LOWER_S: f64 = 1000e-9;

/// CL1 below 500 ns, CL3 above 1000 ns, CL2 in between (both ends inclusive).
pub fn cluster(ds_s: f64) -> Result<Cluster> {
    if !(ds_s >= 0.0) {
        return Err(Error::Negative("delay spread"));
    }
    Ok(if ds_s < CL1_UPPER_S {
        Cluster::CL1
    } else if ds_s <= CL3_LOWER_S {
        Cluster::CL2
    } else {
        Cluster::CL3
    })
}
