//! Rule-based upsamplers: linear interpolation, UL masking, oracle masking and
//! the masked beam-delay recovery.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_shape, CsiMatrix, Domain, C64};
use crate::pilots::PilotPattern;
use crate::transforms::{zero_insert, TransformPlan};

/// Real-valued beam-delay weighting, entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMask {
    values: Array2<f64>,
    binary: bool,
}

impl FilterMask {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidChannel("mask entries must lie in [0, 1]".into()));
        }
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self { values, binary })
    }

    pub fn from_support(support: Array2<bool>) -> Self {
        Self {
            values: support.mapv(|s| if s { 1.0 } else { 0.0 }),
            binary: true,
        }
    }

    pub fn ones(n_ant: usize, n_sub: usize) -> Self {
        Self {
            values: Array2::ones((n_ant, n_sub)),
            binary: true,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Number of nonzero entries.
    pub fn support_len(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn support_within(&self, other: &FilterMask) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(&a, &b)| a == 0.0 || b != 0.0)
    }

    /// `mask ∘ h` on a BD matrix, scaled by `gain`.
    pub fn apply(&self, h_bd: &CsiMatrix, gain: f64) -> Result<CsiMatrix> {
        h_bd.expect_domain(Domain::BD)?;
        check_shape(h_bd.shape(), self.shape())?;
        let mut out = h_bd.data().clone();
        Zip::from(&mut out)
            .and(&self.values)
            .for_each(|z, &m| *z *= m * gain);
        Ok(CsiMatrix::new(out, Domain::BD))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub r_level: f64,
    pub epsilon: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            r_level: 1.0,
            epsilon: 1e-9,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_level >= 0.0) {
            return Err(Error::Negative("r_level"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Negative("epsilon"));
        }
        Ok(())
    }
}

/// Default threshold grid for R sweeps.
pub const DEFAULT_R_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskWarning {
    /// UL channel carries no power; every entry passes the zero threshold.
    ZeroPower,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UlMask {
    pub mask: FilterMask,
    pub warning: Option<MaskWarning>,
}

/// Gain applied to the masked zero-inserted spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskScale {
    /// Multiply by `D_RS`, undoing the `1/D_RS` of the fold.
    #[default]
    PilotSpacing,
    /// No rescaling.
    Unit,
}

/// Per-antenna linear interpolation across subcarriers with flat extrapolation.
pub fn linear_interp(h_compact: &Array2<C64>, pattern: &PilotPattern) -> Result<CsiMatrix> {
    if pattern.is_empty() {
        return Err(Error::InvalidPattern("interpolation needs at least one pilot".into()));
    }
    check_shape(h_compact.dim(), (h_compact.nrows(), pattern.len()))?;
    let idx = pattern.indices();
    let n_sub = pattern.n_sub();
    let mut out = Array2::zeros((h_compact.nrows(), n_sub));
    for (src, mut dst) in h_compact.rows().into_iter().zip(out.rows_mut()) {
        let mut seg = 0;
        for f in 0..n_sub {
            dst[f] = if f <= idx[0] {
                src[0]
            } else if f >= idx[idx.len() - 1] {
                src[idx.len() - 1]
            } else {
                while idx[seg + 1] < f {
                    seg += 1;
                }
                let (a, b) = (idx[seg], idx[seg + 1]);
                let t = (f - a) as f64 / (b - a) as f64;
                src[seg] * (1.0 - t) + src[seg + 1] * t
            };
        }
    }
    Ok(CsiMatrix::new(out, Domain::AF))
}

/// `Φ_UL[i,j] = 1` iff `|H_UL,BD[i,j]| ≥ R √P` with `P` the mean BD power.
pub fn build_ul_mask(h_ul: &CsiMatrix, plan: &TransformPlan, mc: &MaskConfig) -> Result<UlMask> {
    mc.validate()?;
    let bd = plan.bd_forward(h_ul)?;
    let p = bd.frobenius_norm_sqr() / bd.data().len() as f64;
    let t = mc.r_level * p.sqrt();
    let mask = FilterMask::from_support(bd.data().mapv(|z| z.norm() >= t));
    let warning = (p == 0.0).then_some(MaskWarning::ZeroPower);
    Ok(UlMask { mask, warning })
}

/// Support of the true channel: `|H_BD| > ε · max |H_BD|`.
pub fn build_oracle_mask(h_true: &CsiMatrix, plan: &TransformPlan, mc: &MaskConfig) -> Result<FilterMask> {
    mc.validate()?;
    let bd = plan.bd_forward(h_true)?;
    let peak = bd.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let t = mc.epsilon * peak;
    Ok(FilterMask::from_support(bd.data().mapv(|z| z.norm() > t)))
}

/// Masked recovery from a uniform comb: `bd_inverse(scale · Φ ∘ bd_forward(H_DS))`.
pub fn masked_upsample(
    h_rs_compact: &Array2<C64>,
    pattern: &PilotPattern,
    mask: &FilterMask,
    plan: &TransformPlan,
    scale: MaskScale,
) -> Result<CsiMatrix> {
    if !pattern.is_uniform() {
        return Err(Error::InvalidPattern("masked upsampling needs a purely uniform comb".into()));
    }
    let d = pattern.uniform_spacing().unwrap_or(0);
    let m = pattern.uniform_count().unwrap_or(0);
    if d * m != pattern.n_sub() {
        return Err(Error::InvalidConfig(format!(
            "n_sub = {} is not {m} pilots × spacing {d}",
            pattern.n_sub()
        )));
    }
    let h_ds = zero_insert(h_rs_compact, pattern)?;
    let bd = plan.bd_forward(&h_ds)?;
    let gain = match scale {
        MaskScale::PilotSpacing => d as f64,
        MaskScale::Unit => 1.0,
    };
    plan.bd_inverse(&mask.apply(&bd, gain)?)
}
