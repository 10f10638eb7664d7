use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use csi_upsample::antialias::MaskScale;
use csi_upsample::bench::{
    channel_seed, export_report, recover, run_benchmark, BenchConfig, Geometry, MethodSpec,
    Observation, ReportFormat,
};
use csi_upsample::channel::{synth_dataset, GeneratorParams};
use csi_upsample::dataset::{read_dataset, write_dataset};
use csi_upsample::metrics::nmse_db;
use csi_upsample::SystemConfig;

#[derive(Parser)]
#[command(name = "csiup", version, about = "Downlink CSI upsampling from sparse pilots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of reciprocal DL/UL channel pairs.
    Synth(SynthArgs),
    /// Score recovery methods over a dataset.
    Bench(BenchArgs),
    /// Recover a single channel and optionally dump the solver trace.
    Recover(RecoverArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    n_ant: usize,
    #[arg(long, default_value_t = 240)]
    n_sub: usize,
    /// CSI-RS spacing in subcarriers.
    #[arg(long, default_value_t = 12)]
    d_rs: usize,
    #[arg(long, default_value_t = 10)]
    paths: usize,
    #[arg(long, default_value_t = 300.0)]
    rms_ds_ns: f64,
    /// Snap delays and beams to the transform grid.
    #[arg(long)]
    on_grid: bool,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15e3)]
    subcarrier_spacing_hz: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    /// Multiply the masked spectrum by the pilot spacing.
    DRs,
    Unit,
}

#[derive(Args)]
struct ObservationArgs {
    #[arg(long, default_value_t = 0)]
    virtual_start: usize,
    #[arg(long, default_value_t = 24)]
    virtual_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-element SNR of the observed channels; noiseless when absent.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, value_enum, default_value_t = Scale::DRs)]
    mask_scale: Scale,
}

impl ObservationArgs {
    fn bench_config(&self, methods: Vec<MethodSpec>) -> BenchConfig {
        BenchConfig {
            methods,
            virtual_start: self.virtual_start,
            virtual_len: self.virtual_len,
            master_seed: self.seed,
            snr_db: self.snr_db,
            mask_scale: match self.mask_scale {
                Scale::DRs => MaskScale::PilotSpacing,
                Scale::Unit => MaskScale::Unit,
            },
            ..BenchConfig::default()
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated list, e.g. interp,ulmask:R=1.0,oraclemask,ista:K=50,ista_ra:K=50:R=1.0
    #[arg(long)]
    methods: String,
    #[command(flatten)]
    obs: ObservationArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    method: String,
    #[command(flatten)]
    obs: ObservationArgs,
    #[arg(long)]
    dump_trace: Option<PathBuf>,
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SystemConfig::with_spacing(a.n_ant, a.n_sub, a.d_rs, a.subcarrier_spacing_hz)?;
    let params = GeneratorParams {
        n_paths: a.paths,
        rms_delay_spread_s: a.rms_ds_ns * 1e-9,
        on_grid: a.on_grid,
    };
    let records = synth_dataset(&params, &cfg, a.count, a.seed)?;
    write_dataset(&a.out, &cfg, &records)
        .with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} channel pairs to {}", records.len(), a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let ds = read_dataset(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    let methods = csi_upsample::bench::parse_methods(&a.methods)?;
    let report = run_benchmark(&ds, &a.obs.bench_config(methods))?;
    let format = match a.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    export_report(&report, &a.out, format).with_context(|| format!("writing {}", a.out.display()))?;
    for (name, per) in &report.methods {
        let all = &per["ALL"];
        match all.mean_nmse_db {
            Some(m) => eprintln!("{name:>24}  {m:9.3} dB over {}", all.count),
            None => eprintln!("{name:>24}  no channels"),
        }
    }
    Ok(())
}

fn recover_one(a: RecoverArgs) -> Result<()> {
    let ds = read_dataset(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    let Some(pair) = ds.records.get(a.index) else {
        bail!("index {} out of range for {} records", a.index, ds.records.len());
    };
    let spec: MethodSpec = a.method.parse()?;
    let bc = a.obs.bench_config(vec![spec.clone()]);
    let geo = Geometry::new(&ds.cfg, bc.virtual_start, bc.virtual_len)?;
    let obs = Observation::new(pair, &geo, bc.snr_db, channel_seed(bc.master_seed, a.index))?;
    let rec = recover(&spec.method, &obs, &geo, &bc, a.dump_trace.is_some())?;
    let nmse = nmse_db(&rec.h_hat, &obs.dl_true)?;
    println!("{}", json!({ "index": a.index, "method": spec.name, "nmse_db": db(nmse) }));
    if let Some(path) = a.dump_trace {
        let trace: Vec<_> = rec
            .trace
            .unwrap_or_default()
            .iter()
            .enumerate()
            .map(|(k, t)| {
                json!({
                    "phase": k + 1,
                    "objective": t.objective,
                    "iterate_delta": t.iterate_delta,
                    "nmse_db": t.nmse_db.map(db),
                })
            })
            .collect();
        let doc = json!({ "index": a.index, "method": spec.name, "nmse_db": db(nmse), "trace": trace });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn db(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("inf")
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::Recover(a) => recover_one(a),
    }
}
