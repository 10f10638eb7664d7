//! ISTA recovery of antenna-delay CSI from non-uniform pilots, with an
//! optional reciprocity-assist (RA) blend against a beam-delay mask.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::antialias::FilterMask;
use crate::error::{Error, Result};
use crate::matrix::{check_shape, diff_frobenius_sqr, frobenius_sqr, CsiMatrix, Domain, C64};
use crate::metrics::nmse_db;
use crate::pilots::PilotPattern;
use crate::transforms::TransformPlan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSchedule {
    Constant(f64),
    PerPhase(Vec<f64>),
}

impl StepSchedule {
    /// Step for phase `k` (1-based).
    pub fn at(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant(s) => *s,
            StepSchedule::PerPhase(v) => v[k - 1],
        }
    }
}

/// `θ_k = theta0_rel · m₀ · decay^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub theta0_rel: f64,
    pub decay: f64,
}

impl ThresholdSchedule {
    pub fn at(&self, k: usize, m0: f64) -> f64 {
        self.theta0_rel * m0 * self.decay.powi(k as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    /// `w_k = w0 (1 − k/K)`.
    LinearDecay,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendSchedule {
    pub w0: f64,
    pub mode: BlendMode,
}

impl BlendSchedule {
    pub fn at(&self, k: usize, phases: usize) -> f64 {
        match self.mode {
            BlendMode::LinearDecay => self.w0 * (1.0 - k as f64 / phases as f64),
            BlendMode::Constant => self.w0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IstaConfig {
    pub phases: usize,
    pub step: StepSchedule,
    pub threshold: ThresholdSchedule,
    pub blend: BlendSchedule,
    /// Stop once the relative iterate change drops below this.
    pub stop_tol: f64,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            phases: 50,
            step: StepSchedule::Constant(1.0),
            threshold: ThresholdSchedule {
                theta0_rel: 0.1,
                decay: 0.9,
            },
            blend: BlendSchedule {
                w0: 1.0,
                mode: BlendMode::LinearDecay,
            },
            stop_tol: 0.0,
        }
    }
}

impl IstaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSolver(m));
        if self.phases == 0 {
            return bad("phase count must be positive".into());
        }
        let steps: Vec<f64> = match &self.step {
            StepSchedule::Constant(s) => vec![*s],
            StepSchedule::PerPhase(v) => {
                if v.len() != self.phases {
                    return bad(format!("{} steps given for {} phases", v.len(), self.phases));
                }
                v.clone()
            }
        };
        if let Some(s) = steps.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return bad(format!("step {s} outside (0, 1]"));
        }
        let t = &self.threshold;
        if !(t.theta0_rel > 0.0 && t.theta0_rel.is_finite()) {
            return bad(format!("theta0_rel = {} must be positive", t.theta0_rel));
        }
        if !(t.decay > 0.0 && t.decay <= 1.0) {
            return bad(format!("decay = {} outside (0, 1]", t.decay));
        }
        if !(0.0..=1.0).contains(&self.blend.w0) {
            return bad(format!("w0 = {} outside [0, 1]", self.blend.w0));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Negative("stop_tol"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub objective: f64,
    pub iterate_delta: f64,
    pub nmse_db: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: CsiMatrix,
    pub r: CsiMatrix,
    pub k: usize,
    pub trace: Vec<PhaseRecord>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub h_hat: CsiMatrix,
    pub state: SolverState,
}

/// Minimum-norm least-squares start. The sensing rows are orthonormal, so
/// this is the adjoint image of `y`.
pub fn ls_init(y: &Array2<C64>, pattern: &PilotPattern, plan: &TransformPlan) -> Result<CsiMatrix> {
    if pattern.is_empty() {
        return Err(Error::InvalidPattern("no pilots to initialize from".into()));
    }
    plan.sensing_adjoint(y, pattern)
}

pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Minimum-norm solution of `x A = y` row by row for an explicit
/// `n_sub × |Ψ|` operator: `x = y (Aᴴ A)⁻¹ Aᴴ`.
pub fn ls_init_with_operator(y: &Array2<C64>, a: &Array2<C64>) -> Result<Array2<C64>> {
    check_shape(y.dim(), (y.nrows(), a.ncols()))?;
    let ah = a.t().mapv(|z| z.conj());
    let gram = ah.dot(a);
    let inv = invert(&gram)?;
    let cond = norm1(&gram) * norm1(&inv);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram(cond));
    }
    Ok(y.dot(&inv).dot(&ah))
}

fn norm1(m: &Array2<C64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(m: &Array2<C64>) -> Result<Array2<C64>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = Array2::<C64>::eye(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[[i, col]].norm().total_cmp(&a[[j, col]].norm()))
            .unwrap_or(col);
        if a[[piv, col]].norm() == 0.0 {
            return Err(Error::SingularGram(f64::INFINITY));
        }
        for j in 0..n {
            a.swap([col, j], [piv, j]);
            inv.swap([col, j], [piv, j]);
        }
        let p = a[[col, col]].inv();
        a.row_mut(col).mapv_inplace(|z| z * p);
        inv.row_mut(col).mapv_inplace(|z| z * p);
        for i in (0..n).filter(|&i| i != col) {
            let f = a[[i, col]];
            if f == C64::default() {
                continue;
            }
            for j in 0..n {
                let (ac, ic) = (a[[col, j]], inv[[col, j]]);
                a[[i, j]] -= f * ac;
                inv[[i, j]] -= f * ic;
            }
        }
    }
    Ok(inv)
}

/// `r = x − ρ Sᴴ(S x − y)`.
pub fn gradient_step(
    x: &CsiMatrix,
    y: &Array2<C64>,
    pattern: &PilotPattern,
    plan: &TransformPlan,
    step: f64,
) -> Result<CsiMatrix> {
    let mut resid = plan.sensing_apply(x, pattern)?;
    check_shape(y.dim(), resid.dim())?;
    resid -= y;
    let g = plan.sensing_adjoint(&resid, pattern)?;
    let mut r = x.data().clone();
    Zip::from(&mut r).and(g.data()).for_each(|a, &b| *a -= b * step);
    Ok(CsiMatrix::new(r, Domain::AD))
}

/// Complex soft threshold: `z ↦ max(|z| − θ, 0) z/|z|`.
pub fn shrink(r: &CsiMatrix, theta: f64) -> Result<CsiMatrix> {
    if !(theta >= 0.0) {
        return Err(Error::Negative("theta"));
    }
    let data = r.data().mapv(|z| {
        let m = z.norm();
        if m > theta {
            z * ((m - theta) / m)
        } else {
            C64::default()
        }
    });
    Ok(CsiMatrix::new(data, r.domain()))
}

/// `w · Φ ∘ r_BD + (1 − w) · r_BD`, evaluated in the beam domain.
pub fn ra_apply(r: &CsiMatrix, mask: &FilterMask, plan: &TransformPlan, w: f64) -> Result<CsiMatrix> {
    check_shape(mask.shape(), r.shape())?;
    let bd = plan.lift_to_beam(r)?;
    let mut data = bd.into_data();
    Zip::from(&mut data)
        .and(mask.values())
        .for_each(|z, &m| *z *= w * m + (1.0 - w));
    plan.drop_to_antenna(&CsiMatrix::new(data, Domain::BD))
}

/// `½‖S x − y‖² + θ Σ|x|`.
pub fn objective(
    x: &CsiMatrix,
    y: &Array2<C64>,
    pattern: &PilotPattern,
    plan: &TransformPlan,
    theta: f64,
) -> Result<f64> {
    let sx = plan.sensing_apply(x, pattern)?;
    let l1: f64 = x.data().iter().map(|z| z.norm()).sum();
    Ok(0.5 * diff_frobenius_sqr(&sx, y) + theta * l1)
}

/// Runs up to `cfg.phases` ISTA phases and returns the AF reconstruction.
pub fn solve(
    y: &Array2<C64>,
    pattern: &PilotPattern,
    plan: &TransformPlan,
    cfg: &IstaConfig,
    mask: Option<&FilterMask>,
    truth: Option<&CsiMatrix>,
) -> Result<Solution> {
    cfg.validate()?;
    if let Some(t) = truth {
        t.expect_domain(Domain::AF)?;
        t.expect_shape(plan.shape())?;
    }
    let mut x = ls_init(y, pattern, plan)?;
    let m0 = x.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut r = x.clone();
    let mut trace = Vec::with_capacity(cfg.phases);
    let mut k = 0;
    while k < cfg.phases {
        k += 1;
        r = gradient_step(&x, y, pattern, plan, cfg.step.at(k))?;
        if let Some(m) = mask {
            r = ra_apply(&r, m, plan, cfg.blend.at(k, cfg.phases))?;
        }
        let theta = cfg.threshold.at(k, m0);
        let next = shrink(&r, theta)?;

        let prev = frobenius_sqr(x.data());
        let change = diff_frobenius_sqr(next.data(), x.data());
        let iterate_delta = if prev > 0.0 {
            (change / prev).sqrt()
        } else {
            change.sqrt()
        };
        x = next;
        let nmse = match truth {
            Some(t) => Some(nmse_db(&plan.ad_inverse(&x)?, t)?),
            None => None,
        };
        trace.push(PhaseRecord {
            objective: objective(&x, y, pattern, plan, theta)?,
            iterate_delta,
            nmse_db: nmse,
        });
        if iterate_delta < cfg.stop_tol {
            break;
        }
    }
    Ok(Solution {
        h_hat: plan.ad_inverse(&x)?,
        state: SolverState { x, r, k, trace },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antialias::{build_oracle_mask, MaskConfig};
    use crate::config::SystemConfig;
    use crate::pilots::{build_pattern, sample, PatternKind, SampleForm};
    use crate::seed::rng_from_seed;
    use crate::transforms::reference;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(shape: (usize, usize), seed: u64) -> Array2<C64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_simple_fn(shape, || {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn setup(n_ant: usize, n_sub: usize, d: usize, start: usize, len: usize) -> (PilotPattern, TransformPlan) {
        let cfg = SystemConfig::with_spacing(n_ant, n_sub, d, 15e3).unwrap();
        let pat = build_pattern(&cfg, PatternKind::NonUniform { start, len }).unwrap();
        (pat, TransformPlan::new(&cfg))
    }

    fn ad(data: Array2<C64>) -> CsiMatrix {
        CsiMatrix::new(data, Domain::AD)
    }

    #[test]
    fn shrink_examples() {
        let z = ad(Array2::from_elem((1, 1), C64::new(3.0, 4.0)));
        let s = shrink(&z, 1.0).unwrap();
        assert!((s.data()[[0, 0]] - C64::new(2.4, 3.2)).norm() < 1e-15);
        let r = ad(randn((2, 5), 1));
        assert_eq!(shrink(&r, 0.0).unwrap(), r);
        let peak = r.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(shrink(&r, peak).unwrap().data().iter().all(|z| *z == C64::default()));
        assert!(matches!(shrink(&r, -0.1), Err(Error::Negative(_))));
    }

    #[test]
    fn ls_init_examples() {
        let plan = TransformPlan::with_dims(2, 8);
        let full = PilotPattern::full(8);
        let h = CsiMatrix::new(randn((2, 8), 2), Domain::AF);
        let x0 = ls_init(h.data(), &full, &plan).unwrap();
        let expect = plan.ad_forward(&h).unwrap();
        assert!(diff_frobenius_sqr(x0.data(), expect.data()) < 1e-26);

        let (pat, plan) = setup(2, 16, 4, 5, 3);
        let zero = Array2::zeros((2, pat.len()));
        assert_eq!(frobenius_sqr(ls_init(&zero, &pat, &plan).unwrap().data()), 0.0);

        let y = randn((2, pat.len()), 3);
        let x0 = ls_init(&y, &pat, &plan).unwrap();
        let resid = diff_frobenius_sqr(&plan.sensing_apply(&x0, &pat).unwrap(), &y).sqrt();
        assert!(resid <= 1e-10);

        let empty = PilotPattern::from_indices(16, vec![]).unwrap();
        assert!(ls_init(&Array2::zeros((2, 0)), &empty, &plan).is_err());
    }

    #[test]
    fn general_gram_solve_matches_adjoint() {
        let (pat, plan) = setup(2, 16, 4, 5, 3);
        let y = randn((2, pat.len()), 4);
        let a = reference::trimmed(16, pat.indices());
        let dense = ls_init_with_operator(&y, &a).unwrap();
        let fast = ls_init(&y, &pat, &plan).unwrap();
        assert!(diff_frobenius_sqr(&dense, fast.data()) < 1e-24);

        let scaled = a.mapv(|z| z * 3.0);
        let x = ls_init_with_operator(&y, &scaled).unwrap();
        assert!(diff_frobenius_sqr(&x.dot(&scaled), &y) < 1e-20);

        let mut dup = a.clone();
        let c0 = dup.column(0).to_owned();
        dup.column_mut(1).assign(&c0);
        assert!(matches!(ls_init_with_operator(&y, &dup), Err(Error::SingularGram(_))));
    }

    #[test]
    fn gradient_step_examples() {
        let (pat, plan) = setup(2, 16, 4, 5, 3);
        let x = ad(randn((2, 16), 5));
        let y = plan.sensing_apply(&x, &pat).unwrap();
        let r = gradient_step(&x, &y, &pat, &plan, 1.0).unwrap();
        assert!(diff_frobenius_sqr(r.data(), x.data()) < 1e-26);

        let y = randn((2, pat.len()), 6);
        let r = gradient_step(&CsiMatrix::zeros(2, 16, Domain::AD), &y, &pat, &plan, 0.5).unwrap();
        let expect = plan.sensing_adjoint(&y, &pat).unwrap().scaled(C64::new(0.5, 0.0));
        assert!(diff_frobenius_sqr(r.data(), expect.data()) < 1e-26);

        let before = diff_frobenius_sqr(&plan.sensing_apply(&x, &pat).unwrap(), &y);
        let r = gradient_step(&x, &y, &pat, &plan, 1.0).unwrap();
        let after = diff_frobenius_sqr(&plan.sensing_apply(&r, &pat).unwrap(), &y);
        assert!(after.sqrt() <= before.sqrt() + 1e-12);

        assert!(gradient_step(&x, &Array2::zeros((2, 3)), &pat, &plan, 1.0).is_err());
    }

    #[test]
    fn ra_examples() {
        let plan = TransformPlan::with_dims(4, 8);
        let r = ad(randn((4, 8), 7));
        let mask = FilterMask::from_support(Array2::from_shape_fn((4, 8), |(i, j)| (i + j) % 3 == 0));
        let same = |a: &CsiMatrix| diff_frobenius_sqr(a.data(), r.data()) < 1e-26;
        assert!(same(&ra_apply(&r, &mask, &plan, 0.0).unwrap()));
        assert!(same(&ra_apply(&r, &FilterMask::ones(4, 8), &plan, 1.0).unwrap()));
        let out = plan.lift_to_beam(&ra_apply(&r, &mask, &plan, 1.0).unwrap()).unwrap();
        for ((i, j), z) in out.data().indexed_iter() {
            if mask.values()[[i, j]] == 0.0 {
                assert!(z.norm() < 1e-14);
            }
        }
        assert!(ra_apply(&r, &FilterMask::ones(4, 7), &plan, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(IstaConfig::default().validate().is_ok());
        let with = |f: &dyn Fn(&mut IstaConfig)| {
            let mut c = IstaConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(&|c| c.phases = 0).is_err());
        assert!(with(&|c| c.step = StepSchedule::Constant(1.5)).is_err());
        assert!(with(&|c| c.step = StepSchedule::Constant(0.0)).is_err());
        assert!(with(&|c| c.step = StepSchedule::PerPhase(vec![1.0; 3])).is_err());
        assert!(with(&|c| c.step = StepSchedule::PerPhase(vec![0.5; 50])).is_ok());
        assert!(with(&|c| c.threshold.theta0_rel = 0.0).is_err());
        assert!(with(&|c| c.threshold.decay = 1.2).is_err());
        assert!(with(&|c| c.blend.w0 = -0.1).is_err());
        assert!(with(&|c| c.stop_tol = -1.0).is_err());
    }

    #[test]
    fn full_pattern_converges() {
        let plan = TransformPlan::with_dims(2, 16);
        let mut b = Array2::zeros((2, 16));
        b[[0, 3]] = C64::new(1.0, 0.5);
        b[[1, 11]] = C64::new(-0.7, 0.2);
        let h = plan.bd_inverse(&CsiMatrix::new(b, Domain::BD)).unwrap();
        let full = PilotPattern::full(16);
        let cfg = IstaConfig {
            threshold: ThresholdSchedule {
                theta0_rel: 1e-3,
                decay: 0.5,
            },
            ..IstaConfig::default()
        };
        let sol = solve(h.data(), &full, &plan, &cfg, None, Some(&h)).unwrap();
        assert!(nmse_db(&sol.h_hat, &h).unwrap() <= -100.0);
        assert_eq!(sol.state.trace.len(), 50);
        assert!(sol.state.trace.iter().all(|t| t.nmse_db.is_some()));
    }

    #[test]
    fn zero_measurements_give_zero() {
        let (pat, plan) = setup(2, 16, 4, 5, 3);
        let y = Array2::zeros((2, pat.len()));
        let cfg = IstaConfig {
            phases: 1,
            ..IstaConfig::default()
        };
        let sol = solve(&y, &pat, &plan, &cfg, None, None).unwrap();
        assert_eq!(frobenius_sqr(sol.h_hat.data()), 0.0);
        assert_eq!(sol.state.k, 1);
    }

    #[test]
    fn early_stop() {
        let plan = TransformPlan::with_dims(1, 8);
        let full = PilotPattern::full(8);
        let y = randn((1, 8), 9);
        let cfg = IstaConfig {
            phases: 500,
            stop_tol: 1e-6,
            ..IstaConfig::default()
        };
        let sol = solve(&y, &full, &plan, &cfg, None, None).unwrap();
        assert!(sol.state.k < 500);
        assert!(sol.state.trace.last().unwrap().iterate_delta < 1e-6);
    }

    #[test]
    fn objective_is_monotone_at_fixed_threshold() {
        for seed in 0..20 {
            let (pat, plan) = setup(2, 24, 4, 3 + seed as usize % 5, 6);
            let y = randn((2, pat.len()), 100 + seed);
            let cfg = IstaConfig {
                phases: 40,
                threshold: ThresholdSchedule {
                    theta0_rel: 0.05,
                    decay: 1.0,
                },
                ..IstaConfig::default()
            };
            let sol = solve(&y, &pat, &plan, &cfg, None, None).unwrap();
            for w in sol.state.trace.windows(2) {
                assert!(w[1].objective <= w[0].objective + 1e-10);
            }
        }
    }

    #[test]
    fn oracle_masked_truth_is_a_fixed_point() {
        let (pat, plan) = setup(4, 32, 4, 6, 5);
        let mut b = Array2::zeros((4, 32));
        b[[0, 2]] = C64::new(1.0, 0.3);
        b[[2, 13]] = C64::new(-0.8, 0.4);
        b[[3, 27]] = C64::new(0.0, 0.9);
        let h = plan.bd_inverse(&CsiMatrix::new(b, Domain::BD)).unwrap();
        let mask = build_oracle_mask(&h, &plan, &MaskConfig::default()).unwrap();
        let x = plan.ad_forward(&h).unwrap();
        let y = sample(&h, &pat, SampleForm::Compact).unwrap();
        let r = gradient_step(&x, &y, &pat, &plan, 1.0).unwrap();
        let r = ra_apply(&r, &mask, &plan, 1.0).unwrap();
        assert!(diff_frobenius_sqr(r.data(), x.data()) < 1e-26);

        let min_path = x.data().iter().map(|z| z.norm()).filter(|&m| m > 1e-9).fold(f64::INFINITY, f64::min);
        let theta = 1e-3 * min_path;
        let next = shrink(&r, theta).unwrap();
        let nnz = x.data().iter().filter(|z| z.norm() > 1e-9).count() as f64;
        assert!(diff_frobenius_sqr(next.data(), x.data()).sqrt() <= theta * nnz.sqrt() + 1e-12);
        for (a, b) in next.data().iter().zip(x.data().iter()) {
            assert_eq!(a.norm() > 0.0, b.norm() > 1e-9);
        }
    }

    /// Direct matrix iteration of the same recursion, one antenna at a time.
    fn dense_ista(y: &Array2<C64>, idx: &[usize], n_sub: usize, cfg: &IstaConfig) -> Vec<Array2<C64>> {
        let a = reference::trimmed(n_sub, idx);
        let ah = a.t().mapv(|z| z.conj());
        let mut x = y.dot(&ah);
        let m0 = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut out = vec![];
        for k in 1..=cfg.phases {
            let r = &x - &((&x.dot(&a) - y).dot(&ah) * C64::new(cfg.step.at(k), 0.0));
            let th = cfg.threshold.at(k, m0);
            x = r.mapv(|z| if z.norm() > th { z * (1.0 - th / z.norm()) } else { C64::default() });
            out.push(x.clone());
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn matches_dense_oracle(seed in 0u64..1000, start in 0usize..16, len in 1usize..8) {
            let (pat, plan) = setup(2, 24, 3, start, len);
            let y = randn((2, pat.len()), seed);
            let cfg = IstaConfig { phases: 12, ..IstaConfig::default() };
            let dense = dense_ista(&y, pat.indices(), 24, &cfg);
            let sol = solve(&y, &pat, &plan, &cfg, None, None).unwrap();
            let diff = diff_frobenius_sqr(sol.state.x.data(), &dense[11]).sqrt();
            prop_assert!(diff < 1e-9);
        }

        #[test]
        fn shrink_is_nonexpansive(sa in 0u64..1000, sb in 1000u64..2000, theta in 0.0f64..2.0) {
            let a = ad(randn((3, 5), sa));
            let b = ad(randn((3, 5), sb));
            let d_out = diff_frobenius_sqr(shrink(&a, theta).unwrap().data(), shrink(&b, theta).unwrap().data());
            prop_assert!(d_out <= diff_frobenius_sqr(a.data(), b.data()) + 1e-12);
        }
    }
}
