use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Which axes of a CSI matrix have been transformed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Antenna-frequency (raw).
    AF,
    /// Antenna-delay: frequency axis transformed, antenna axis untouched.
    AD,
    /// Beam-delay: both axes transformed.
    BD,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Domain::AF => "antenna-frequency",
            Domain::AD => "antenna-delay",
            Domain::BD => "beam-delay",
        };
        f.write_str(s)
    }
}

/// Complex `n_ant × n_sub` matrix tagged with its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiMatrix {
    data: Array2<C64>,
    domain: Domain,
}

impl CsiMatrix {
    pub fn new(data: Array2<C64>, domain: Domain) -> Self {
        Self { data, domain }
    }

    pub fn zeros(n_ant: usize, n_sub: usize, domain: Domain) -> Self {
        Self::new(Array2::zeros((n_ant, n_sub)), domain)
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_ant(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_sub(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(Error::WrongDomain {
                expected,
                found: self.domain,
            })
        }
    }

    pub fn expect_shape(&self, expected: (usize, usize)) -> Result<()> {
        check_shape(self.data.dim(), expected)
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        frobenius_sqr(&self.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self::new(self.data.mapv(|z| z * alpha), self.domain)
    }

    /// Same data under a different tag. Only transform code should need this.
    pub(crate) fn retagged(data: Array2<C64>, domain: Domain) -> Self {
        Self::new(data, domain)
    }
}

pub(crate) fn check_shape(found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}

pub fn frobenius_sqr(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖a − b‖_F²`.
pub fn diff_frobenius_sqr(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}
