//! Paired uplink/downlink channel synthesis.
//!
//! UL and DL share path delays and beams (multipath reciprocity) while their
//! complex gains have equal magnitude and independent phases. Generated
//! channels use an exponential power-delay profile: path delays are drawn from
//! an exponential law of scale `2σ` truncated to the delay axis and weighted by
//! `e^{-τ/2σ}`, so the power-weighted delay distribution decays as `e^{-τ/σ}`
//! and its RMS spread is `σ`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::matrix::{CsiMatrix, Domain, C64};
use crate::seed::{derive_seed, rng_from_seed};
use crate::transforms::TransformPlan;

/// One propagation path. Integer `delay_tap` and `beam` put the path exactly
/// on the beam-delay grid; fractional values leak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSpec {
    pub delay_tap: f64,
    pub beam: f64,
    pub gain_dl: C64,
    pub gain_ul: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultipathSpec {
    paths: Vec<PathSpec>,
}

impl MultipathSpec {
    pub fn new(paths: Vec<PathSpec>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidChannel("at least one path is required".into()));
        }
        if paths.iter().all(|p| p.gain_dl == C64::default())
            || paths.iter().all(|p| p.gain_ul == C64::default())
        {
            return Err(Error::InvalidChannel("path gains are all zero".into()));
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    pub fn is_on_grid(&self) -> bool {
        self.paths
            .iter()
            .all(|p| p.delay_tap.fract() == 0.0 && p.beam.fract() == 0.0)
    }

    fn validate_for(&self, cfg: &SystemConfig) -> Result<()> {
        for (k, p) in self.paths.iter().enumerate() {
            if !(p.delay_tap >= 0.0 && p.delay_tap < cfg.n_sub as f64) {
                return Err(Error::InvalidChannel(format!(
                    "path {k}: delay tap {} outside [0, {})",
                    p.delay_tap, cfg.n_sub
                )));
            }
            if !(p.beam >= 0.0 && p.beam < cfg.n_ant as f64) {
                return Err(Error::InvalidChannel(format!(
                    "path {k}: beam {} outside [0, {})",
                    p.beam, cfg.n_ant
                )));
            }
        }
        Ok(())
    }
}

/// Random multipath generator parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorParams {
    pub n_paths: usize,
    pub rms_delay_spread_s: f64,
    pub on_grid: bool,
}

impl GeneratorParams {
    /// Draws a multipath realization. Deterministic in `seed`.
    pub fn draw(&self, cfg: &SystemConfig, seed: u64) -> Result<MultipathSpec> {
        if self.n_paths == 0 {
            return Err(Error::InvalidChannel("zero paths requested".into()));
        }
        if !(self.rms_delay_spread_s.is_finite() && self.rms_delay_spread_s >= 0.0) {
            return Err(Error::InvalidChannel(format!(
                "RMS delay spread must be finite and nonnegative, got {}",
                self.rms_delay_spread_s
            )));
        }
        let axis = cfg.n_sub as f64;
        let spread_taps = self.rms_delay_spread_s / cfg.tap_duration_s();
        let scale = 2.0 * spread_taps;
        if scale >= axis {
            return Err(Error::InvalidChannel(format!(
                "RMS delay spread of {spread_taps:.1} taps needs delays beyond the {} tap axis",
                cfg.n_sub
            )));
        }

        let mut rng = rng_from_seed(seed);
        let mass = if scale > 0.0 { -(-axis / scale).exp_m1() } else { 1.0 };
        let mut raw = Vec::with_capacity(self.n_paths);
        for _ in 0..self.n_paths {
            let u_delay: f64 = rng.random();
            let u_beam: f64 = rng.random();
            let phase_dl: f64 = rng.random::<f64>() * 2.0 * PI;
            let phase_ul: f64 = rng.random::<f64>() * 2.0 * PI;
            let delay = if scale > 0.0 {
                -scale * (-u_delay * mass).ln_1p()
            } else {
                0.0
            };
            raw.push((delay, u_beam * cfg.n_ant as f64, phase_dl, phase_ul));
        }
        let first = raw.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let delays: Vec<f64> = raw
            .iter()
            .map(|r| {
                let d = (r.0 - first).min(axis - 1.0);
                if self.on_grid {
                    d.floor()
                } else {
                    d
                }
            })
            .collect();
        let weights: Vec<f64> = delays
            .iter()
            .map(|&d| if scale > 0.0 { (-d / scale).exp() } else { 1.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let paths = raw
            .iter()
            .zip(delays.iter().zip(&weights))
            .map(|(&(_, beam, pd, pu), (&delay_tap, &w))| {
                let mag = (w / total).sqrt();
                PathSpec {
                    delay_tap,
                    beam: if self.on_grid { beam.floor() } else { beam },
                    gain_dl: C64::from_polar(mag, pd),
                    gain_ul: C64::from_polar(mag, pu),
                }
            })
            .collect();
        MultipathSpec::new(paths)
    }
}

#[derive(Clone, Debug)]
pub enum ChannelSource {
    Spec(MultipathSpec),
    Generator(GeneratorParams),
}

/// DL/UL channel pair sharing one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPair {
    pub dl: CsiMatrix,
    pub ul: CsiMatrix,
    pub truth: Option<MultipathSpec>,
    pub seed: u64,
}

/// Synthesizes a reciprocal DL/UL pair.
pub fn synth_channel_pair(
    source: &ChannelSource,
    cfg: &SystemConfig,
    seed: u64,
) -> Result<ChannelPair> {
    cfg.validate()?;
    let spec = match source {
        ChannelSource::Spec(s) => s.clone(),
        ChannelSource::Generator(g) => g.draw(cfg, seed)?,
    };
    spec.validate_for(cfg)?;
    let (dl, ul) = if spec.is_on_grid() {
        let plan = TransformPlan::new(cfg);
        (
            on_grid(&spec, cfg, &plan, |p| p.gain_dl)?,
            on_grid(&spec, cfg, &plan, |p| p.gain_ul)?,
        )
    } else {
        (
            off_grid(&spec, cfg, |p| p.gain_dl),
            off_grid(&spec, cfg, |p| p.gain_ul),
        )
    };
    Ok(ChannelPair {
        dl,
        ul,
        truth: Some(spec),
        seed,
    })
}

fn on_grid(
    spec: &MultipathSpec,
    cfg: &SystemConfig,
    plan: &TransformPlan,
    gain: impl Fn(&PathSpec) -> C64,
) -> Result<CsiMatrix> {
    let mut bd = Array2::zeros((cfg.n_ant, cfg.n_sub));
    for p in spec.paths() {
        bd[[p.beam as usize, p.delay_tap as usize]] += gain(p);
    }
    plan.bd_inverse(&CsiMatrix::new(bd, Domain::BD))
}

// H[a, f] = Σ_p g_p (1/√N_a) e^{+i2π a b_p/N_a} (1/√N_f) e^{-i2π f τ_p/N_f};
// with integer (b_p, τ_p) this is exactly the on-grid construction.
fn off_grid(spec: &MultipathSpec, cfg: &SystemConfig, gain: impl Fn(&PathSpec) -> C64) -> CsiMatrix {
    let (na, nf) = (cfg.n_ant, cfg.n_sub);
    let norm = 1.0 / ((na * nf) as f64).sqrt();
    let mut h = Array2::zeros((na, nf));
    for p in spec.paths() {
        let g = gain(p) * norm;
        let steer: Vec<C64> = (0..na)
            .map(|a| C64::from_polar(1.0, 2.0 * PI * a as f64 * p.beam / na as f64))
            .collect();
        let delay: Vec<C64> = (0..nf)
            .map(|f| C64::from_polar(1.0, -2.0 * PI * f as f64 * p.delay_tap / nf as f64))
            .collect();
        for (a, s) in steer.iter().enumerate() {
            let gs = g * s;
            for (f, d) in delay.iter().enumerate() {
                h[[a, f]] += gs * d;
            }
        }
    }
    CsiMatrix::new(h, Domain::AF)
}

/// Generates `count` pairs; record `i` uses seed `derive_seed(seed, i)` so the
/// result does not depend on evaluation order.
pub fn synth_dataset(
    params: &GeneratorParams,
    cfg: &SystemConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<ChannelPair>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            synth_channel_pair(
                &ChannelSource::Generator(*params),
                cfg,
                derive_seed(seed, i as u64),
            )
        })
        .collect()
}

/// Adds circularly-symmetric complex Gaussian estimation noise at the given
/// per-element SNR. `snr_db = +∞` returns the input unchanged.
pub fn add_estimation_noise(h: &CsiMatrix, snr_db: f64, seed: u64) -> Result<CsiMatrix> {
    h.expect_domain(Domain::AF)?;
    if snr_db == f64::INFINITY {
        return Ok(h.clone());
    }
    let n = (h.n_ant() * h.n_sub()) as f64;
    let variance = h.frobenius_norm_sqr() / n / 10f64.powf(snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = rng_from_seed(seed);
    let data = h.data().mapv(|z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + C64::new(re, im) * sigma
    });
    Ok(CsiMatrix::new(data, Domain::AF))
}

/// Circularly shifts the beam axis by `shift` (angle-domain augmentation).
pub fn circular_shift_augment(h: &CsiMatrix, shift: i64) -> Result<CsiMatrix> {
    h.expect_domain(Domain::AF)?;
    let (na, nf) = h.shape();
    let plan = TransformPlan::with_dims(na, nf);
    let mut beam = h.data().clone();
    plan.antenna_dft(&mut beam, false);
    let s = shift.rem_euclid(na as i64) as usize;
    let mut rolled = Array2::zeros((na, nf));
    for (i, row) in beam.rows().into_iter().enumerate() {
        rolled.row_mut((i + s) % na).assign(&row);
    }
    plan.antenna_dft(&mut rolled, true);
    Ok(CsiMatrix::new(rolled, Domain::AF))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_ant: usize, n_sub: usize) -> SystemConfig {
        SystemConfig::with_spacing(n_ant, n_sub, 4, 15e3).unwrap()
    }

    fn support(m: &CsiMatrix) -> Vec<(usize, usize)> {
        let max = m.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        m.data()
            .indexed_iter()
            .filter(|(_, z)| z.norm() > 1e-10 * max)
            .map(|(ij, _)| ij)
            .collect()
    }

    fn one_path(delay: f64, beam: f64) -> MultipathSpec {
        MultipathSpec::new(vec![PathSpec {
            delay_tap: delay,
            beam,
            gain_dl: C64::new(1.0, 0.0),
            gain_ul: C64::new(0.0, 1.0),
        }])
        .unwrap()
    }

    #[test]
    fn single_tap_is_a_single_bd_entry() {
        let c = cfg(4, 16);
        let pair = synth_channel_pair(&ChannelSource::Spec(one_path(0.0, 0.0)), &c, 1).unwrap();
        let bd = TransformPlan::new(&c).bd_forward(&pair.dl).unwrap();
        let nz: Vec<_> = bd
            .data()
            .indexed_iter()
            .filter(|(_, z)| **z != C64::default())
            .collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0, (0, 0));
        assert!((nz[0].1 - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn generator_is_deterministic() {
        let c = cfg(4, 64);
        let g = ChannelSource::Generator(GeneratorParams {
            n_paths: 7,
            rms_delay_spread_s: 300e-9,
            on_grid: false,
        });
        let a = synth_channel_pair(&g, &c, 99).unwrap();
        let b = synth_channel_pair(&g, &c, 99).unwrap();
        assert_eq!(a, b);
        let d = synth_channel_pair(&g, &c, 100).unwrap();
        assert_ne!(a.dl, d.dl);
    }

    #[test]
    fn on_grid_supports_are_reciprocal() {
        let c = cfg(4, 64);
        let plan = TransformPlan::new(&c);
        let g = GeneratorParams {
            n_paths: 10,
            rms_delay_spread_s: 2e-6,
            on_grid: true,
        };
        for seed in 0..50 {
            let pair = synth_channel_pair(&ChannelSource::Generator(g), &c, seed).unwrap();
            let dl = support(&plan.bd_forward(&pair.dl).unwrap());
            let ul = support(&plan.bd_forward(&pair.ul).unwrap());
            assert!(dl.len() <= 10);
            assert_eq!(dl, ul);
        }
    }

    #[test]
    fn integer_off_grid_formula_matches_on_grid_construction() {
        let c = cfg(5, 24);
        let spec = MultipathSpec::new(vec![
            PathSpec {
                delay_tap: 3.0,
                beam: 2.0,
                gain_dl: C64::new(0.3, -0.2),
                gain_ul: C64::new(0.1, 0.5),
            },
            PathSpec {
                delay_tap: 17.0,
                beam: 4.0,
                gain_dl: C64::new(-0.6, 0.1),
                gain_ul: C64::new(0.2, 0.2),
            },
        ])
        .unwrap();
        let plan = TransformPlan::new(&c);
        let grid = on_grid(&spec, &c, &plan, |p| p.gain_dl).unwrap();
        let formula = off_grid(&spec, &c, |p| p.gain_dl);
        let err: f64 = grid
            .data()
            .iter()
            .zip(formula.data().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn fractional_path_leaks() {
        let c = cfg(4, 32);
        let pair = synth_channel_pair(&ChannelSource::Spec(one_path(3.5, 1.0)), &c, 0).unwrap();
        let bd = TransformPlan::new(&c).bd_forward(&pair.dl).unwrap();
        assert!(support(&bd).len() > 8);
    }

    #[test]
    fn generator_magnitudes_are_reciprocal() {
        let c = cfg(8, 120);
        let g = GeneratorParams {
            n_paths: 12,
            rms_delay_spread_s: 800e-9,
            on_grid: false,
        };
        let spec = g.draw(&c, 5).unwrap();
        for p in spec.paths() {
            assert!((p.gain_dl.norm() - p.gain_ul.norm()).abs() < 1e-15);
            assert!(p.delay_tap >= 0.0 && p.delay_tap < 120.0);
            assert!(p.beam >= 0.0 && p.beam < 8.0);
        }
        let power: f64 = spec.paths().iter().map(|p| p.gain_dl.norm_sqr()).sum();
        assert!((power - 1.0).abs() < 1e-12);
        assert!(spec.paths().iter().any(|p| p.delay_tap == 0.0));
    }

    #[test]
    fn generator_errors() {
        let c = cfg(2, 64);
        let zero = GeneratorParams {
            n_paths: 0,
            rms_delay_spread_s: 1e-7,
            on_grid: true,
        };
        assert!(zero.draw(&c, 0).is_err());
        // 64 taps of 1/(64·15 kHz) ≈ 1.04 µs each; a 40 µs spread does not fit
        let huge = GeneratorParams {
            n_paths: 3,
            rms_delay_spread_s: 40e-6,
            on_grid: true,
        };
        assert!(huge.draw(&c, 0).is_err());
        assert!(MultipathSpec::new(vec![]).is_err());
        let out_of_range = ChannelSource::Spec(one_path(64.0, 0.0));
        assert!(synth_channel_pair(&out_of_range, &c, 0).is_err());
    }

    #[test]
    fn zero_spread_is_flat_in_frequency() {
        let c = cfg(2, 32);
        let g = GeneratorParams {
            n_paths: 4,
            rms_delay_spread_s: 0.0,
            on_grid: true,
        };
        let spec = g.draw(&c, 3).unwrap();
        assert!(spec.paths().iter().all(|p| p.delay_tap == 0.0));
    }

    #[test]
    fn infinite_snr_is_identity() {
        let c = cfg(3, 16);
        let g = GeneratorParams {
            n_paths: 3,
            rms_delay_spread_s: 1e-7,
            on_grid: false,
        };
        let pair = synth_channel_pair(&ChannelSource::Generator(g), &c, 2).unwrap();
        assert_eq!(add_estimation_noise(&pair.dl, f64::INFINITY, 1).unwrap(), pair.dl);
        let a = add_estimation_noise(&pair.dl, 10.0, 1).unwrap();
        let b = add_estimation_noise(&pair.dl, 10.0, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_power_matches_snr() {
        let c = SystemConfig::with_spacing(16, 640, 4, 15e3).unwrap();
        let g = GeneratorParams {
            n_paths: 6,
            rms_delay_spread_s: 5e-7,
            on_grid: false,
        };
        let pair = synth_channel_pair(&ChannelSource::Generator(g), &c, 11).unwrap();
        for (snr, seed) in [(0.0, 1u64), (0.0, 2), (10.0, 3), (-5.0, 4)] {
            let noisy = add_estimation_noise(&pair.dl, snr, seed).unwrap();
            let noise: f64 = noisy
                .data()
                .iter()
                .zip(pair.dl.data().iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let realized_db = 10.0 * (pair.dl.frobenius_norm_sqr() / noise).log10();
            assert!((realized_db - snr).abs() < 0.25, "snr {snr}: realized {realized_db}");
            if snr == 0.0 {
                let ratio = noise / pair.dl.frobenius_norm_sqr();
                assert!((0.95..=1.05).contains(&ratio));
            }
        }
    }

    #[test]
    fn shift_augment_identities() {
        let c = cfg(6, 20);
        let g = GeneratorParams {
            n_paths: 5,
            rms_delay_spread_s: 1e-7,
            on_grid: false,
        };
        let h = synth_channel_pair(&ChannelSource::Generator(g), &c, 8).unwrap().dl;
        let close = |a: &CsiMatrix, b: &CsiMatrix| {
            a.data()
                .iter()
                .zip(b.data().iter())
                .all(|(x, y)| (x - y).norm() < 1e-14)
        };
        assert!(close(&circular_shift_augment(&h, 0).unwrap(), &h));
        assert!(close(&circular_shift_augment(&h, 6).unwrap(), &h));
        assert!(close(&circular_shift_augment(&h, -6).unwrap(), &h));
        let s = circular_shift_augment(&h, 1).unwrap();
        assert!((s.frobenius_norm() - h.frobenius_norm()).abs() < 1e-12);
        let back = circular_shift_augment(&s, -1).unwrap();
        assert!(close(&back, &h));

        let plan = TransformPlan::new(&c);
        let row_powers = |m: &CsiMatrix| {
            let mut b = m.data().clone();
            plan.antenna_dft(&mut b, false);
            let mut p: Vec<f64> = b
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|z| z.norm_sqr()).sum())
                .collect();
            p.sort_by(f64::total_cmp);
            p
        };
        for (a, b) in row_powers(&h).iter().zip(row_powers(&s).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_order_independent() {
        let c = cfg(2, 32);
        let g = GeneratorParams {
            n_paths: 3,
            rms_delay_spread_s: 2e-7,
            on_grid: false,
        };
        let all = synth_dataset(&g, &c, 8, 77).unwrap();
        let fifth = synth_channel_pair(&ChannelSource::Generator(g), &c, derive_seed(77, 5)).unwrap();
        assert_eq!(all[5], fifth);
    }
}
