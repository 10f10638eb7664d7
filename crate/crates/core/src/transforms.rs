//! Unitary domain transforms and the operators built on them.
//!
//! Conventions (all `1/√N` scaled):
//! - antenna → beam: forward DFT over rows, `X[b] = N_a^{-1/2} Σ_a x[a] e^{-i2π ab/N_a}`;
//! - frequency → delay: inverse DFT over columns, `X[j] = N_f^{-1/2} Σ_f x[f] e^{+i2π fj/N_f}`.
//!
//! With these, a path at delay tap `d` (AF factor `e^{-i2π f d/N_f}`) lands in
//! delay bin `d`, and the trimmed sensing operator has orthonormal rows.

use std::sync::Arc;

use ndarray::{Array2, ArrayViewMut1, Axis};
use rustfft::{Fft, FftPlanner};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::matrix::{check_shape, CsiMatrix, Domain, C64};
use crate::pilots::{scatter_columns, PilotPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Forward,
    Inverse,
}

/// Precomputed FFT kernels for one `(n_ant, n_sub)` geometry.
///
/// Immutable after construction; every call allocates its own scratch.
#[derive(Clone)]
pub struct TransformPlan {
    n_ant: usize,
    n_sub: usize,
    ant_fwd: Arc<dyn Fft<f64>>,
    ant_inv: Arc<dyn Fft<f64>>,
    sub_fwd: Arc<dyn Fft<f64>>,
    sub_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan")
            .field("n_ant", &self.n_ant)
            .field("n_sub", &self.n_sub)
            .finish()
    }
}

impl TransformPlan {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self::with_dims(cfg.n_ant, cfg.n_sub)
    }

    pub fn with_dims(n_ant: usize, n_sub: usize) -> Self {
        assert!(n_ant > 0 && n_sub > 0, "transform dimensions must be positive");
        let mut planner = FftPlanner::new();
        Self {
            n_ant,
            n_sub,
            ant_fwd: planner.plan_fft_forward(n_ant),
            ant_inv: planner.plan_fft_inverse(n_ant),
            sub_fwd: planner.plan_fft_forward(n_sub),
            sub_inv: planner.plan_fft_inverse(n_sub),
        }
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_ant, self.n_sub)
    }

    fn check(&self, h: &CsiMatrix, domain: Domain) -> Result<()> {
        h.expect_domain(domain)?;
        h.expect_shape(self.shape())
    }

    /// `H_BD = F_AB H F_FD`.
    pub fn bd_forward(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::AF)?;
        let mut data = h.data().clone();
        self.antenna_axis(&mut data, Dir::Forward);
        self.subcarrier_axis(&mut data, Dir::Inverse);
        Ok(CsiMatrix::retagged(data, Domain::BD))
    }

    pub fn bd_inverse(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::BD)?;
        let mut data = h.data().clone();
        self.subcarrier_axis(&mut data, Dir::Forward);
        self.antenna_axis(&mut data, Dir::Inverse);
        Ok(CsiMatrix::retagged(data, Domain::AF))
    }

    /// `H_AD = H F_FD`: delay transform only.
    ///
    /// The antenna axis is left alone even though the literature calls this
    /// the angle-delay domain.
    pub fn ad_forward(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::AF)?;
        let mut data = h.data().clone();
        self.subcarrier_axis(&mut data, Dir::Inverse);
        Ok(CsiMatrix::retagged(data, Domain::AD))
    }

    pub fn ad_inverse(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::AD)?;
        let mut data = h.data().clone();
        self.subcarrier_axis(&mut data, Dir::Forward);
        Ok(CsiMatrix::retagged(data, Domain::AF))
    }

    /// AD → BD: antenna DFT on an antenna-delay matrix.
    pub fn lift_to_beam(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::AD)?;
        let mut data = h.data().clone();
        self.antenna_axis(&mut data, Dir::Forward);
        Ok(CsiMatrix::retagged(data, Domain::BD))
    }

    /// BD → AD.
    pub fn drop_to_antenna(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        self.check(h, Domain::BD)?;
        let mut data = h.data().clone();
        self.antenna_axis(&mut data, Dir::Inverse);
        Ok(CsiMatrix::retagged(data, Domain::AD))
    }

    /// Unitary DFT over the antenna axis of a raw array (beam ← antenna when
    /// `inverse` is false).
    pub(crate) fn antenna_dft(&self, data: &mut Array2<C64>, inverse: bool) {
        let dir = if inverse { Dir::Inverse } else { Dir::Forward };
        self.antenna_axis(data, dir);
    }

    /// Trimmed sensing operator: AD-domain `x` to its AF values on the
    /// pattern's subcarriers, `n_ant × |Ψ_P|`.
    pub fn sensing_apply(&self, x: &CsiMatrix, pattern: &PilotPattern) -> Result<Array2<C64>> {
        self.check(x, Domain::AD)?;
        self.check_pattern(pattern)?;
        let mut data = x.data().clone();
        self.subcarrier_axis(&mut data, Dir::Forward);
        Ok(data.select(Axis(1), pattern.indices()))
    }

    /// Exact adjoint of [`Self::sensing_apply`].
    pub fn sensing_adjoint(&self, y: &Array2<C64>, pattern: &PilotPattern) -> Result<CsiMatrix> {
        self.check_pattern(pattern)?;
        check_shape(y.dim(), (self.n_ant, pattern.len()))?;
        let mut data = scatter_columns(y, pattern.indices(), self.n_sub);
        self.subcarrier_axis(&mut data, Dir::Inverse);
        Ok(CsiMatrix::retagged(data, Domain::AD))
    }

    fn check_pattern(&self, pattern: &PilotPattern) -> Result<()> {
        if pattern.n_sub() != self.n_sub {
            return Err(Error::InvalidPattern(format!(
                "pattern spans {} subcarriers, plan has {}",
                pattern.n_sub(),
                self.n_sub
            )));
        }
        Ok(())
    }

    fn subcarrier_axis(&self, data: &mut Array2<C64>, dir: Dir) {
        let fft = match dir {
            Dir::Forward => &self.sub_fwd,
            Dir::Inverse => &self.sub_inv,
        };
        let scale = 1.0 / (self.n_sub as f64).sqrt();
        let mut buf = vec![C64::default(); self.n_sub];
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        for row in data.rows_mut() {
            run_lane(fft.as_ref(), row, &mut buf, &mut scratch, scale);
        }
    }

    fn antenna_axis(&self, data: &mut Array2<C64>, dir: Dir) {
        if self.n_ant == 1 {
            return;
        }
        let fft = match dir {
            Dir::Forward => &self.ant_fwd,
            Dir::Inverse => &self.ant_inv,
        };
        let scale = 1.0 / (self.n_ant as f64).sqrt();
        let mut buf = vec![C64::default(); self.n_ant];
        let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
        for col in data.columns_mut() {
            run_lane(fft.as_ref(), col, &mut buf, &mut scratch, scale);
        }
    }
}

fn run_lane(
    fft: &dyn Fft<f64>,
    mut lane: ArrayViewMut1<C64>,
    buf: &mut [C64],
    scratch: &mut [C64],
    scale: f64,
) {
    for (b, v) in buf.iter_mut().zip(lane.iter()) {
        *b = *v;
    }
    fft.process_with_scratch(buf, scratch);
    for (v, b) in lane.iter_mut().zip(buf.iter()) {
        *v = *b * scale;
    }
}

/// Zero-insertion upsampling of the CSI-RS observations: `H_DS`.
///
/// Column `j` of `h_rs` is the channel at subcarrier `Ψ_RS[j]`.
pub fn zero_insert(h_rs: &Array2<C64>, pattern: &PilotPattern) -> Result<CsiMatrix> {
    let comb = pattern
        .uniform_indices()
        .ok_or_else(|| Error::InvalidPattern("pattern has no uniform CSI-RS part".into()))?;
    if h_rs.ncols() != comb.len() {
        return Err(Error::ShapeMismatch {
            expected: (h_rs.nrows(), comb.len()),
            found: h_rs.dim(),
        });
    }
    Ok(CsiMatrix::new(
        scatter_columns(h_rs, &comb, pattern.n_sub()),
        Domain::AF,
    ))
}

/// Delay-domain fold caused by uniform subsampling at spacing `d_rs`:
/// `out[i, j] = (1/d_rs) Σ_r h[i, (j mod M_f) + r M_f]`, `M_f = n_sub / d_rs`.
pub fn aliasing_fold(h_bd: &CsiMatrix, d_rs: usize) -> Result<CsiMatrix> {
    h_bd.expect_domain(Domain::BD)?;
    let n_sub = h_bd.n_sub();
    if d_rs == 0 || n_sub % d_rs != 0 {
        return Err(Error::InvalidConfig(format!(
            "n_sub = {n_sub} is not divisible by d_rs = {d_rs}"
        )));
    }
    let m_f = n_sub / d_rs;
    let scale = 1.0 / d_rs as f64;
    let src = h_bd.data();
    let mut out = Array2::zeros(src.dim());
    for (i, row) in src.rows().into_iter().enumerate() {
        for j in 0..m_f {
            let s: C64 = (0..d_rs).map(|r| row[j + r * m_f]).sum::<C64>() * scale;
            for r in 0..d_rs {
                out[[i, j + r * m_f]] = s;
            }
        }
    }
    Ok(CsiMatrix::new(out, Domain::BD))
}

/// Dense `O(N²)` matrix implementations of the transforms, kept as an
/// independent reference for testing the FFT path.
pub mod reference {
    use std::f64::consts::PI;

    use ndarray::Array2;

    use crate::matrix::C64;

    /// Unitary DFT matrix `W[k, n] = N^{-1/2} e^{sign·i2π kn/N}`.
    pub fn dft_matrix(n: usize, sign: f64) -> Array2<C64> {
        let scale = 1.0 / (n as f64).sqrt();
        Array2::from_shape_fn((n, n), |(k, m)| {
            let phase = sign * 2.0 * PI * ((k * m) % n) as f64 / n as f64;
            C64::from_polar(scale, phase)
        })
    }

    /// `F_AB`: left-multiplies an `n_ant × n_sub` matrix.
    pub fn f_ab(n_ant: usize) -> Array2<C64> {
        dft_matrix(n_ant, -1.0)
    }

    /// `F_FD`: right-multiplies an `n_ant × n_sub` matrix.
    pub fn f_fd(n_sub: usize) -> Array2<C64> {
        // (H F)[i, j] = Σ_f H[i, f] F[f, j]; symmetric, so orientation is moot.
        dft_matrix(n_sub, 1.0)
    }

    pub fn adjoint(m: &Array2<C64>) -> Array2<C64> {
        m.t().mapv(|z| z.conj())
    }

    pub fn bd_forward(h: &Array2<C64>) -> Array2<C64> {
        f_ab(h.nrows()).dot(h).dot(&f_fd(h.ncols()))
    }

    pub fn bd_inverse(h: &Array2<C64>) -> Array2<C64> {
        adjoint(&f_ab(h.nrows()))
            .dot(h)
            .dot(&adjoint(&f_fd(h.ncols())))
    }

    pub fn ad_forward(h: &Array2<C64>) -> Array2<C64> {
        h.dot(&f_fd(h.ncols()))
    }

    /// Trimmed matrix `F̃ = (F_FD^H)[:, Ψ]`, so that `y = x F̃` for AD rows `x`.
    pub fn trimmed(n_sub: usize, indices: &[usize]) -> Array2<C64> {
        let full = adjoint(&f_fd(n_sub));
        full.select(ndarray::Axis(1), indices)
    }
}
