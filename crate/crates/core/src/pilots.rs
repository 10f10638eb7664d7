//! Pilot index sets and sampling.
//!
//! A pattern is the sorted union of a uniform CSI-RS comb
//! `{0, D_RS, ..., (M_f-1) D_RS}` and an optional contiguous block of virtual
//! pilots `{I, ..., I+P-1}` (synchronization / broadcast subcarriers).

use ndarray::{Array2, Axis};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::matrix::{CsiMatrix, Domain, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatternKind {
    Uniform,
    NonUniform { start: usize, len: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PilotPattern {
    n_sub: usize,
    indices: Vec<usize>,
    uniform_spacing: Option<usize>,
    uniform_count: Option<usize>,
    virtual_start: Option<usize>,
    virtual_len: Option<usize>,
}

/// Builds the pilot pattern for `cfg`.
pub fn build_pattern(cfg: &SystemConfig, kind: PatternKind) -> Result<PilotPattern> {
    let (d, m, n) = (cfg.pilot_spacing, cfg.n_pilots, cfg.n_sub);
    if d == 0 || m == 0 || d * (m - 1) >= n {
        return Err(Error::InvalidPattern(format!(
            "uniform comb of {m} pilots at spacing {d} does not fit in {n} subcarriers"
        )));
    }
    let mut indices: Vec<usize> = (0..m).map(|k| k * d).collect();
    let (virtual_start, virtual_len) = match kind {
        PatternKind::Uniform => (None, None),
        PatternKind::NonUniform { start, len } => {
            if start + len > n {
                return Err(Error::InvalidPattern(format!(
                    "virtual block [{start}, {}) exceeds {n} subcarriers",
                    start + len
                )));
            }
            indices.extend(start..start + len);
            indices.sort_unstable();
            indices.dedup();
            (Some(start), Some(len))
        }
    };
    Ok(PilotPattern {
        n_sub: n,
        indices,
        uniform_spacing: Some(d),
        uniform_count: Some(m),
        virtual_start,
        virtual_len,
    })
}

impl PilotPattern {
    /// Arbitrary pattern from an explicit index list (no uniform / virtual
    /// structure recorded). Indices must be strictly increasing and `< n_sub`.
    pub fn from_indices(n_sub: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPattern(
                "indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= n_sub {
                return Err(Error::InvalidPattern(format!(
                    "index {last} out of range for {n_sub} subcarriers"
                )));
            }
        }
        Ok(Self {
            n_sub,
            indices,
            uniform_spacing: None,
            uniform_count: None,
            virtual_start: None,
            virtual_len: None,
        })
    }

    /// Every subcarrier observed.
    pub fn full(n_sub: usize) -> Self {
        Self::from_indices(n_sub, (0..n_sub).collect()).expect("full range is valid")
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn uniform_spacing(&self) -> Option<usize> {
        self.uniform_spacing
    }

    pub fn uniform_count(&self) -> Option<usize> {
        self.uniform_count
    }

    pub fn virtual_start(&self) -> Option<usize> {
        self.virtual_start
    }

    pub fn virtual_len(&self) -> Option<usize> {
        self.virtual_len
    }

    /// Only the uniform comb, no virtual block.
    pub fn is_uniform(&self) -> bool {
        self.uniform_spacing.is_some() && self.virtual_start.is_none()
    }

    /// The CSI-RS comb `Ψ_RS`, if this pattern has one.
    pub fn uniform_indices(&self) -> Option<Vec<usize>> {
        match (self.uniform_spacing, self.uniform_count) {
            (Some(d), Some(m)) => Some((0..m).map(|k| k * d).collect()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleForm {
    /// `n_ant × |Ψ_P|` column selection.
    Compact,
    /// `n_ant × n_sub` with zeros off the pattern.
    ZeroFilled,
}

/// Observes an AF-domain channel on the pattern's subcarriers.
pub fn sample(h: &CsiMatrix, pattern: &PilotPattern, form: SampleForm) -> Result<Array2<C64>> {
    h.expect_domain(Domain::AF)?;
    if h.n_sub() != pattern.n_sub {
        return Err(Error::ShapeMismatch {
            expected: (h.n_ant(), pattern.n_sub),
            found: h.shape(),
        });
    }
    let compact = h.data().select(Axis(1), &pattern.indices);
    Ok(match form {
        SampleForm::Compact => compact,
        SampleForm::ZeroFilled => scatter_columns(&compact, &pattern.indices, pattern.n_sub),
    })
}

/// Places compact pilot columns back on the full subcarrier grid.
pub fn embed(compact: &Array2<C64>, pattern: &PilotPattern) -> Result<Array2<C64>> {
    if compact.ncols() != pattern.len() {
        return Err(Error::ShapeMismatch {
            expected: (compact.nrows(), pattern.len()),
            found: compact.dim(),
        });
    }
    Ok(scatter_columns(compact, &pattern.indices, pattern.n_sub))
}

pub(crate) fn scatter_columns(compact: &Array2<C64>, indices: &[usize], n_sub: usize) -> Array2<C64> {
    let mut out = Array2::zeros((compact.nrows(), n_sub));
    for (col, &idx) in compact.columns().into_iter().zip(indices) {
        out.column_mut(idx).assign(&col);
    }
    out
}
