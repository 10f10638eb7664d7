//! Monte-Carlo comparison of recovery methods over a dataset, and report export.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::antialias::{
    build_oracle_mask, build_ul_mask, linear_interp, masked_upsample, MaskConfig, MaskScale,
};
use crate::channel::{add_estimation_noise, ChannelPair};
use crate::config::SystemConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ista::{
    solve, BlendMode, BlendSchedule, IstaConfig, PhaseRecord, StepSchedule, ThresholdSchedule,
};
use crate::matrix::{CsiMatrix, Domain};
use crate::metrics::{cluster, nmse_ratio, rms_delay_spread_s, Cluster};
use crate::pilots::{build_pattern, sample, PatternKind, PilotPattern, SampleForm};
use crate::seed::derive_seed;
use crate::transforms::TransformPlan;

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Interp,
    UlMask { r_level: f64 },
    OracleMask { epsilon: Option<f64> },
    Ista(IstaConfig),
    IstaRa { ista: IstaConfig, r_level: f64 },
}

impl Method {
    pub fn uses_virtual_pilots(&self) -> bool {
        matches!(self, Method::Ista(_) | Method::IstaRa { .. })
    }
}

/// A method together with the name it is reported under.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub method: Method,
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::InvalidMethod(format!("{key}={v:?} is not a number")))
}

fn parse_ista(kv: &mut BTreeMap<String, String>) -> Result<IstaConfig> {
    let mut cfg = IstaConfig::default();
    if let Some(v) = kv.remove("K") {
        cfg.phases = v
            .parse()
            .map_err(|_| Error::InvalidMethod(format!("K={v:?} is not a phase count")))?;
    }
    if let Some(v) = kv.remove("step") {
        cfg.step = StepSchedule::Constant(parse_num("step", &v)?);
    }
    let mut th = ThresholdSchedule { ..cfg.threshold };
    if let Some(v) = kv.remove("theta") {
        th.theta0_rel = parse_num("theta", &v)?;
    }
    if let Some(v) = kv.remove("decay") {
        th.decay = parse_num("decay", &v)?;
    }
    cfg.threshold = th;
    let mut bl = BlendSchedule { ..cfg.blend };
    if let Some(v) = kv.remove("w0") {
        bl.w0 = parse_num("w0", &v)?;
    }
    if let Some(v) = kv.remove("blend") {
        bl.mode = match v.as_str() {
            "linear" => BlendMode::LinearDecay,
            "constant" => BlendMode::Constant,
            _ => return Err(Error::InvalidMethod(format!("unknown blend mode {v:?}"))),
        };
    }
    cfg.blend = bl;
    if let Some(v) = kv.remove("tol") {
        cfg.stop_tol = parse_num("tol", &v)?;
    }
    cfg.validate()
        .map_err(|e| Error::InvalidMethod(e.to_string()))?;
    Ok(cfg)
}

/// Parses `kind[:key=value]*`, e.g. `ulmask:R=2` or `ista_ra:K=80:R=1:theta=0.05`.
impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim();
        let mut parts = name.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut kv = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::InvalidMethod(format!("expected key=value, got {p:?}")))?;
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::InvalidMethod(format!("{k} given twice in {name:?}")));
            }
        }
        let r_level = |kv: &mut BTreeMap<String, String>| -> Result<f64> {
            let r = match kv.remove("R") {
                Some(v) => parse_num("R", &v)?,
                None => 1.0,
            };
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidMethod(format!("R = {r} must be nonnegative")));
            }
            Ok(r)
        };
        let method = match kind {
            "interp" => Method::Interp,
            "ulmask" => Method::UlMask {
                r_level: r_level(&mut kv)?,
            },
            "oraclemask" => Method::OracleMask {
                epsilon: kv.remove("eps").map(|v| parse_num("eps", &v)).transpose()?,
            },
            "ista" => Method::Ista(parse_ista(&mut kv)?),
            "ista_ra" => {
                let r = r_level(&mut kv)?;
                Method::IstaRa {
                    ista: parse_ista(&mut kv)?,
                    r_level: r,
                }
            }
            _ => return Err(Error::InvalidMethod(format!("unknown method {kind:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::InvalidMethod(format!("{kind} does not take {k:?}")));
        }
        Ok(MethodSpec {
            name: name.to_string(),
            method,
        })
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<MethodSpec>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub methods: Vec<MethodSpec>,
    pub virtual_start: usize,
    pub virtual_len: usize,
    pub master_seed: u64,
    /// Per-element SNR of the observed DL pilots and UL channel; `None` is noiseless.
    pub snr_db: Option<f64>,
    pub oracle_epsilon: f64,
    pub mask_scale: MaskScale,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![],
            virtual_start: 0,
            virtual_len: 24,
            master_seed: 0,
            snr_db: None,
            oracle_epsilon: 1e-9,
            mask_scale: MaskScale::PilotSpacing,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub system: SystemConfig,
    /// Set when the dataset's `n_sub` was cut down to `n_pilots · pilot_spacing`.
    pub truncated_from_n_sub: Option<usize>,
    pub methods: Vec<String>,
    pub virtual_start: usize,
    pub virtual_len: usize,
    pub master_seed: u64,
    pub snr_db: Option<f64>,
    pub oracle_epsilon: f64,
    pub mask_scale: MaskScale,
    pub trials: usize,
    pub uniform_pattern: Vec<usize>,
    pub channel_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: usize,
    #[serde(with = "db_value")]
    pub mean_nmse_db: Option<f64>,
    #[serde(with = "db_value")]
    pub std_nmse_db: Option<f64>,
    /// `10 log10` of the summed per-channel ratios divided by the count.
    #[serde(with = "db_value")]
    pub sum_ratio_nmse_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ConfigEcho,
    pub pattern: Vec<usize>,
    pub methods: BTreeMap<String, BTreeMap<String, ClusterStats>>,
    pub aggregation: String,
}

pub const AGGREGATION: &str = "mean-db";
pub const CLUSTER_KEYS: [&str; 4] = ["ALL", "CL1", "CL2", "CL3"];

/// Serializes NMSE values, writing infinities as `"-inf"` / `"inf"`.
mod db_value {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) if x.is_nan() => s.serialize_none(),
            Some(x) => s.serialize_f64(*x),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Text(t)) => super::parse_db(&t)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad NMSE value {t:?}"))),
        }
    }
}

fn parse_db(t: &str) -> Option<f64> {
    match t {
        "-inf" => Some(f64::NEG_INFINITY),
        "inf" => Some(f64::INFINITY),
        _ => t.parse().ok(),
    }
}

fn format_db(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x.is_nan() => String::new(),
        Some(x) => x.to_string(),
    }
}

/// Per-channel outcome of a benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelResult {
    pub seed: u64,
    pub rms_delay_spread_s: f64,
    pub cluster: Cluster,
    /// NMSE ratios in method order.
    pub nmse: Vec<f64>,
}

/// Resolved geometry shared by all methods of a run.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub cfg: SystemConfig,
    pub truncated_from: Option<usize>,
    pub plan: TransformPlan,
    pub uniform: PilotPattern,
    pub augmented: Option<PilotPattern>,
}

impl Geometry {
    pub fn new(cfg: &SystemConfig, virtual_start: usize, virtual_len: usize) -> Result<Self> {
        let (cfg_used, truncated_from) = if cfg.is_exact_fold() {
            (*cfg, None)
        } else {
            (cfg.truncated_to_fold(), Some(cfg.n_sub))
        };
        let uniform = build_pattern(&cfg_used, PatternKind::Uniform)?;
        let augmented = build_pattern(
            &cfg_used,
            PatternKind::NonUniform {
                start: virtual_start,
                len: virtual_len,
            },
        )
        .ok();
        Ok(Self {
            plan: TransformPlan::new(&cfg_used),
            cfg: cfg_used,
            truncated_from,
            uniform,
            augmented,
        })
    }

    fn crop(&self, h: &CsiMatrix) -> Result<CsiMatrix> {
        h.expect_domain(Domain::AF)?;
        if h.n_ant() != self.cfg.n_ant || h.n_sub() < self.cfg.n_sub {
            return Err(Error::ShapeMismatch {
                expected: (self.cfg.n_ant, self.truncated_from.unwrap_or(self.cfg.n_sub)),
                found: h.shape(),
            });
        }
        Ok(CsiMatrix::new(
            h.data().slice(ndarray::s![.., ..self.cfg.n_sub]).to_owned(),
            Domain::AF,
        ))
    }

    fn virtual_pattern(&self) -> Result<&PilotPattern> {
        self.augmented
            .as_ref()
            .ok_or_else(|| Error::InvalidPattern("virtual pilot block does not fit the band".into()))
    }
}

/// One channel as seen by the methods: the clean DL reference and the
/// (possibly noisy) DL and UL observations.
#[derive(Clone, Debug)]
pub struct Observation {
    pub dl_true: CsiMatrix,
    pub dl_observed: CsiMatrix,
    pub ul_observed: CsiMatrix,
}

impl Observation {
    pub fn new(pair: &ChannelPair, geo: &Geometry, snr_db: Option<f64>, seed: u64) -> Result<Self> {
        let dl = geo.crop(&pair.dl)?;
        let ul = geo.crop(&pair.ul)?;
        let (dl_observed, ul_observed) = match snr_db {
            Some(snr) => (
                add_estimation_noise(&dl, snr, derive_seed(seed, 0))?,
                add_estimation_noise(&ul, snr, derive_seed(seed, 1))?,
            ),
            None => (dl.clone(), ul.clone()),
        };
        Ok(Self {
            dl_true: dl,
            dl_observed,
            ul_observed,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub h_hat: CsiMatrix,
    pub trace: Option<Vec<PhaseRecord>>,
}

/// Runs one method on one observed channel.
pub fn recover(
    method: &Method,
    obs: &Observation,
    geo: &Geometry,
    bc: &BenchConfig,
    with_trace: bool,
) -> Result<Recovery> {
    let plan = &geo.plan;
    let ul_mask = |r: f64| {
        build_ul_mask(&obs.ul_observed, plan, &MaskConfig { r_level: r, epsilon: 0.0 }).map(|m| m.mask)
    };
    let no_trace = |h_hat| Recovery { h_hat, trace: None };
    match method {
        Method::Interp => {
            let y = sample(&obs.dl_observed, &geo.uniform, SampleForm::Compact)?;
            linear_interp(&y, &geo.uniform).map(no_trace)
        }
        Method::UlMask { r_level } => {
            let y = sample(&obs.dl_observed, &geo.uniform, SampleForm::Compact)?;
            masked_upsample(&y, &geo.uniform, &ul_mask(*r_level)?, plan, bc.mask_scale).map(no_trace)
        }
        Method::OracleMask { epsilon } => {
            let mc = MaskConfig {
                r_level: 0.0,
                epsilon: epsilon.unwrap_or(bc.oracle_epsilon),
            };
            let mask = build_oracle_mask(&obs.dl_true, plan, &mc)?;
            let y = sample(&obs.dl_observed, &geo.uniform, SampleForm::Compact)?;
            masked_upsample(&y, &geo.uniform, &mask, plan, bc.mask_scale).map(no_trace)
        }
        Method::Ista(cfg) | Method::IstaRa { ista: cfg, .. } => {
            let pattern = geo.virtual_pattern()?;
            let y = sample(&obs.dl_observed, pattern, SampleForm::Compact)?;
            let mask = match method {
                Method::IstaRa { r_level, .. } => Some(ul_mask(*r_level)?),
                _ => None,
            };
            let truth = with_trace.then_some(&obs.dl_true);
            let sol = solve(&y, pattern, plan, cfg, mask.as_ref(), truth)?;
            Ok(Recovery {
                h_hat: sol.h_hat,
                trace: with_trace.then_some(sol.state.trace),
            })
        }
    }
}

fn check_methods(methods: &[MethodSpec]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::InvalidMethod("no methods configured".into()));
    }
    let mut seen = HashSet::new();
    for m in methods {
        if !seen.insert(m.name.as_str()) {
            return Err(Error::InvalidMethod(format!("method {:?} listed twice", m.name)));
        }
    }
    Ok(())
}

/// Noise seed of channel `i`.
pub fn channel_seed(master_seed: u64, i: usize) -> u64 {
    derive_seed(master_seed, i as u64)
}

/// Evaluates every method on every channel.
pub fn run_channels(dataset: &Dataset, bc: &BenchConfig) -> Result<(Geometry, Vec<ChannelResult>)> {
    check_methods(&bc.methods)?;
    if dataset.records.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    let geo = Geometry::new(&dataset.cfg, bc.virtual_start, bc.virtual_len)?;
    if bc.methods.iter().any(|m| m.method.uses_virtual_pilots()) {
        geo.virtual_pattern()?;
    }
    let spacing = geo.cfg.subcarrier_spacing_hz;
    let results = dataset
        .records
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let obs = Observation::new(pair, &geo, bc.snr_db, channel_seed(bc.master_seed, i))?;
            let ds = rms_delay_spread_s(&obs.dl_true, &geo.plan, spacing)?;
            let nmse = bc
                .methods
                .iter()
                .map(|m| {
                    let rec = recover(&m.method, &obs, &geo, bc, false)?;
                    nmse_ratio(&rec.h_hat, &obs.dl_true)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ChannelResult {
                seed: pair.seed,
                rms_delay_spread_s: ds,
                cluster: cluster(ds)?,
                nmse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((geo, results))
}

/// Mean, standard deviation and summed-ratio aggregate of per-channel ratios.
pub fn aggregate(ratios: &[f64]) -> ClusterStats {
    let n = ratios.len();
    if n == 0 {
        return ClusterStats {
            count: 0,
            mean_nmse_db: None,
            std_nmse_db: None,
            sum_ratio_nmse_db: None,
        };
    }
    let db: Vec<f64> = ratios.iter().map(|r| 10.0 * r.log10()).collect();
    let mean = db.iter().sum::<f64>() / n as f64;
    let std = if mean.is_finite() {
        Some((db.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt())
    } else {
        None
    };
    ClusterStats {
        count: n,
        mean_nmse_db: Some(mean),
        std_nmse_db: std,
        sum_ratio_nmse_db: Some(10.0 * (ratios.iter().sum::<f64>() / n as f64).log10()),
    }
}

pub fn run_benchmark(dataset: &Dataset, bc: &BenchConfig) -> Result<BenchReport> {
    let (geo, results) = run_channels(dataset, bc)?;
    let mut methods = BTreeMap::new();
    for (m, spec) in bc.methods.iter().enumerate() {
        let mut per = BTreeMap::new();
        let all: Vec<f64> = results.iter().map(|r| r.nmse[m]).collect();
        per.insert("ALL".to_string(), aggregate(&all));
        for c in Cluster::ALL {
            let sel: Vec<f64> = results
                .iter()
                .filter(|r| r.cluster == c)
                .map(|r| r.nmse[m])
                .collect();
            per.insert(c.name().to_string(), aggregate(&sel));
        }
        methods.insert(spec.name.clone(), per);
    }
    let uses_virtual = bc.methods.iter().any(|m| m.method.uses_virtual_pilots());
    let pattern = match (&geo.augmented, uses_virtual) {
        (Some(p), true) => p.indices().to_vec(),
        _ => geo.uniform.indices().to_vec(),
    };
    Ok(BenchReport {
        config: ConfigEcho {
            system: geo.cfg,
            truncated_from_n_sub: geo.truncated_from,
            methods: bc.methods.iter().map(|m| m.name.clone()).collect(),
            virtual_start: bc.virtual_start,
            virtual_len: bc.virtual_len,
            master_seed: bc.master_seed,
            snr_db: bc.snr_db,
            oracle_epsilon: bc.oracle_epsilon,
            mask_scale: bc.mask_scale,
            trials: results.len(),
            uniform_pattern: geo.uniform.indices().to_vec(),
            channel_seeds: results.iter().map(|r| r.seed).collect(),
        },
        pattern,
        methods,
        aggregation: AGGREGATION.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Report(format!("unknown format {s:?}"))),
        }
    }
}

pub const CSV_HEADER: &str = "method,cluster,count,mean_nmse_db,std_nmse_db";

pub fn report_to_json(report: &BenchReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_from_json(text: &str) -> Result<BenchReport> {
    Ok(serde_json::from_str(text)?)
}

/// One row per (method, cluster), methods in configured order.
pub fn report_to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for name in &report.config.methods {
        let Some(per) = report.methods.get(name) else {
            continue;
        };
        for key in CLUSTER_KEYS {
            if let Some(st) = per.get(key) {
                out.push_str(&format!(
                    "{name},{key},{},{},{}\n",
                    st.count,
                    format_db(st.mean_nmse_db),
                    format_db(st.std_nmse_db)
                ));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub method: String,
    pub cluster: String,
    pub count: usize,
    pub mean_nmse_db: Option<f64>,
    pub std_nmse_db: Option<f64>,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Report("missing CSV header".into()));
    }
    let opt = |t: &str| -> Result<Option<f64>> {
        if t.is_empty() {
            Ok(None)
        } else {
            parse_db(t)
                .map(Some)
                .ok_or_else(|| Error::Report(format!("bad NMSE value {t:?}")))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Report(format!("expected 5 fields in {l:?}")));
            }
            Ok(CsvRow {
                method: f[0].to_string(),
                cluster: f[1].to_string(),
                count: f[2]
                    .parse()
                    .map_err(|_| Error::Report(format!("bad count {:?}", f[2])))?,
                mean_nmse_db: opt(f[3])?,
                std_nmse_db: opt(f[4])?,
            })
        })
        .collect()
}

pub fn export_report(report: &BenchReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report),
    };
    fs::write(path, text)?;
    Ok(())
}
