//! The `gridreduce` command line.
//!
//! Every stage reads upstream artifacts, checks the hashes they embed, and
//! writes deterministic outputs: identical inputs give byte-identical files.
//!
//! Settings resolve as command-line flag, then `--config` file, then the
//! built-in default. The config file is TOML with these optional top-level
//! keys:
//!
//! ```toml
//! seed = 7
//! sigma = 0.15
//! split = "8000/2000"   # or a train fraction such as "0.8"
//! method = "lbfgs"      # gd | bfgs | lbfgs | tnc
//! batch_size = 100      # 0 trains on the full batch
//! max_iter = 500
//! tol = 1e-6
//! b_lower_bound = 1e-6  # tnc only
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learn::dataset::{read_dataset_csv, write_dataset_csv};
use crate::learn::scenarios::{read_scenarios_csv, write_scenarios_csv};
use crate::learn::{
    build_dataset, evaluate, generate_scenarios, optimize, Checkpoint, Dataset, DatasetMeta,
    HyperParams, Method, Metrics,
};
use crate::netmodel::{parse_case, BusKind, Network};
use crate::reduce::{
    build_reduction, hex, init_params, load_partition, zone_sizes, EquivalentParams,
    FlowAggregator, InjectionAggregator, TieLine, ZonePartition,
};

macro_rules! wln {
    ($out:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($out, $($arg)*);
    }};
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DEFAULT_SIGMA: f64 = 0.15;
pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "gridreduce", version, about = "Learned DC equivalents of zonal network reductions")]
pub struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gd,
    Bfgs,
    Lbfgs,
    Tnc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gd => Method::GD,
            MethodArg::Bfgs => Method::BFGS,
            MethodArg::Lbfgs => Method::LBFGS,
            MethodArg::Tnc => Method::TNC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the zonal reduction of a case and write it as a JSON bundle.
    Reduce {
        #[arg(long)]
        case: PathBuf,
        /// Zone file; every bus becomes its own zone when omitted.
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw injection scenarios (CSV plus a `.json` sidecar).
    Gen {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// `TRAIN/TEST` counts or a train fraction.
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the AC power flow per scenario and aggregate onto the zones.
    Dataset {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the reduced model parameters on the training split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Scenarios per mini-batch; 0 uses the full batch.
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep every b at or above this value (tnc only).
        #[arg(long)]
        b_lower_bound: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint (or the untrained baseline) on a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluates the baseline parameters when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Output directory for metrics.json and the plot CSVs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a case, bundle, scenario, dataset, checkpoint or metrics file.
    Inspect { path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub split: Option<String>,
    pub method: Option<String>,
    pub batch_size: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub b_lower_bound: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_text(path)?)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub version: String,
    pub case_hash: String,
    pub seed: u64,
    pub sigma: f64,
    pub count: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub base_mva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionBundle {
    pub version: String,
    pub case_hash: String,
    pub zone_hash: String,
    pub zone_count: usize,
    pub ref_zone: usize,
    pub zone_sizes: Vec<usize>,
    pub tie_lines: Vec<TieLine>,
    pub flow_aggregator: FlowAggregator,
    pub injection_aggregator: InjectionAggregator,
    pub init_params: EquivalentParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: String,
    pub zone_hash: String,
    pub dataset_hash: String,
    /// Empty when the baseline parameters were evaluated.
    pub checkpoint_hash: String,
    pub seed: u64,
    pub split: String,
    pub tie_order: Vec<String>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Parses arguments, runs the command and maps errors to exit codes:
/// 0 ok, 2 input error, 3 numerical failure.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(text) => {
            use std::io::Write;
            // A closed pipe (e.g. `| head`) is not an error of the command.
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Runs one command and returns its console summary.
pub fn run(cli: Cli) -> Result<String> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Reduce { case, zones, out } => cmd_reduce(&case, zones.as_deref(), &out),
        Command::Gen {
            case,
            count,
            sigma,
            seed,
            split,
            out,
        } => {
            let sigma = sigma.or(cfg.sigma).unwrap_or(DEFAULT_SIGMA);
            let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
            let split = split.or(cfg.split);
            cmd_gen(&case, count, sigma, seed, split.as_deref(), &out)
        }
        Command::Dataset {
            case,
            zones,
            scenarios,
            out,
        } => cmd_dataset(&case, zones.as_deref(), &scenarios, &out),
        Command::Train {
            dataset,
            method,
            batch_size,
            max_iter,
            tol,
            seed,
            b_lower_bound,
            out,
        } => {
            let method = match (method, &cfg.method) {
                (Some(m), _) => m.into(),
                (None, Some(s)) => s.parse()?,
                (None, None) => Method::LBFGS,
            };
            let batch = batch_size.or(cfg.batch_size).unwrap_or(DEFAULT_BATCH_SIZE);
            let hp = HyperParams {
                max_iter: max_iter.or(cfg.max_iter),
                tol: tol.or(cfg.tol).unwrap_or(HyperParams::default().tol),
                batch_size: (batch > 0).then_some(batch),
                seed: seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
                b_lower_bound: b_lower_bound.or(cfg.b_lower_bound),
                ..HyperParams::default()
            };
            cmd_train(&dataset, method, &hp, &out)
        }
        Command::Eval {
            dataset,
            checkpoint,
            split,
            out,
        } => cmd_eval(&dataset, checkpoint.as_deref(), split, &out),
        Command::Inspect { path } => cmd_inspect(&path),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn check_hash(expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::HashMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

fn load_case(path: &Path) -> Result<(Network, String)> {
    let text = read_text(path)?;
    Ok((parse_case(&text)?, sha256_hex(text.as_bytes())))
}

fn load_zones(zones: Option<&Path>, net: &Network) -> Result<ZonePartition> {
    match zones {
        Some(p) => load_partition(&read_text(p)?, net),
        None => {
            warn!("no zone file given; every bus becomes its own zone");
            Ok(ZonePartition::singletons(net))
        }
    }
}

/// `"8000/2000"` as counts, or `"0.8"` as the train fraction of `count`.
pub fn parse_split(spec: &str, count: usize) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("invalid split {spec:?}"));
    if let Some((a, b)) = spec.split_once('/') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a + b != count {
            return Err(Error::InvalidArgument(format!(
                "split {a}/{b} does not add up to {count} scenarios"
            )));
        }
        return Ok((a, b));
    }
    let f: f64 = spec.trim().parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&f) {
        return Err(bad());
    }
    let a = (count as f64 * f).round() as usize;
    Ok((a, count - a))
}

pub fn cmd_reduce(case: &Path, zones: Option<&Path>, out: &Path) -> Result<String> {
    let mut out_text = String::new();
    let (net, case_hash) = load_case(case)?;
    let zp = load_zones(zones, &net)?;
    let (rn, flow_aggregator, injection_aggregator) = build_reduction(&net, &zp)?;
    let bundle = ReductionBundle {
        version: VERSION.into(),
        case_hash,
        zone_hash: zp.hash(),
        zone_count: rn.zone_count,
        ref_zone: rn.ref_zone,
        zone_sizes: zone_sizes(&zp),
        init_params: init_params(&net, &rn)?,
        tie_lines: rn.tie_lines,
        flow_aggregator,
        injection_aggregator,
    };
    write_json(out, &bundle)?;

    wln!(out_text, 
        "{} buses, {} branches -> {} zones, {} tie-lines (reference zone {})",
        net.bus_count(),
        net.branch_count(),
        bundle.zone_count,
        bundle.tie_lines.len(),
        bundle.ref_zone
    );
    wln!(out_text, "{:>6} {:>6} {:>9} {:>10}", "tie", "zones", "branches", "b_init");
    for (k, t) in bundle.tie_lines.iter().enumerate() {
        wln!(out_text, 
            "{:>6} {:>6} {:>9} {:>10.4}",
            k,
            format!("{}-{}", t.from_zone, t.to_zone),
            t.crossings.len(),
            bundle.init_params.b[k]
        );
    }
    Ok(out_text)
}

pub fn cmd_gen(case: &Path, count: usize, sigma: f64, seed: u64, split: Option<&str>, out: &Path) -> Result<String> {
    let mut out_text = String::new();
    let (net, case_hash) = load_case(case)?;
    let mut set = generate_scenarios(&net, count, sigma, seed)?;
    if let Some(spec) = split {
        let (a, b) = parse_split(spec, count)?;
        set = set.with_split(a, b)?;
    }
    let mut buf = Vec::new();
    write_scenarios_csv(&set, &mut buf)?;
    fs::write(out, buf)?;
    write_json(
        &sidecar_path(out),
        &ScenarioMeta {
            version: VERSION.into(),
            case_hash,
            seed,
            sigma,
            count,
            train_count: set.train_count,
            test_count: set.test_count,
            base_mva: net.base_mva,
        },
    )?;
    wln!(out_text, 
        "{count} scenarios ({} train / {} test), sigma {sigma}, seed {seed}",
        set.train_count, set.test_count
    );
    Ok(out_text)
}

pub fn cmd_dataset(case: &Path, zones: Option<&Path>, scenarios: &Path, out: &Path) -> Result<String> {
    let mut out_text = String::new();
    let (net, case_hash) = load_case(case)?;
    let zp = load_zones(zones, &net)?;
    let smeta: ScenarioMeta = read_json(&sidecar_path(scenarios))?;
    check_hash(&smeta.case_hash, &case_hash)?;
    let bus_ids: Vec<usize> = net.buses.iter().map(|b| b.id).collect();
    let set = read_scenarios_csv(read_bytes(scenarios)?.as_slice(), &bus_ids, smeta.seed, smeta.sigma)?;
    let (rn, _, _) = build_reduction(&net, &zp)?;
    let data = build_dataset(&net, &zp, &set)?;

    let mut buf = Vec::new();
    write_dataset_csv(&data, &rn, &mut buf)?;
    fs::write(out, buf)?;
    let meta = DatasetMeta {
        version: VERSION.into(),
        zone_hash: zp.hash(),
        case_hash,
        seed: smeta.seed,
        sigma: smeta.sigma,
        base_mva: net.base_mva,
        zone_count: rn.zone_count,
        ref_zone: rn.ref_zone,
        tie_lines: rn.tie_lines.iter().map(|t| (t.from_zone, t.to_zone)).collect(),
        init_params: init_params(&net, &rn)?,
        scenario_count: set.len(),
        discarded: data.discarded,
    };
    write_json(&sidecar_path(out), &meta)?;
    wln!(out_text, 
        "{} of {} scenarios solved ({} discarded), {} zone inputs, {} tie targets",
        data.len(),
        set.len(),
        data.discarded,
        rn.zone_count - 1,
        rn.tie_count()
    );
    Ok(out_text)
}

fn load_dataset(path: &Path) -> Result<(Dataset, DatasetMeta, String)> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    let bytes = read_bytes(path)?;
    let data = read_dataset_csv(bytes.as_slice(), &meta)?;
    Ok((data, meta, sha256_hex(&bytes)))
}

pub fn cmd_train(dataset: &Path, method: Method, hp: &HyperParams, out: &Path) -> Result<String> {
    let mut out_text = String::new();
    let (data, meta, dataset_hash) = load_dataset(dataset)?;
    let rn = meta.reduced_network()?;
    let train = data.train();
    let report = optimize(&rn, &train, &meta.init_params, method, hp)?;
    let ckpt = Checkpoint {
        version: VERSION.into(),
        zone_hash: meta.zone_hash.clone(),
        dataset_hash,
        seed: hp.seed,
        method,
        ref_zone: rn.ref_zone,
        zone_count: rn.zone_count,
        tie_order: rn.tie_labels(),
        b: report.params.b.clone(),
        gamma: report.params.gamma.clone(),
        rho: report.params.rho.clone(),
        final_loss: *report.loss_history.last().unwrap(),
        iterations: report.iterations,
        stop: report.stop,
    };
    write_json(out, &ckpt)?;
    wln!(out_text, 
        "{method} on {} scenarios: loss {:.6} -> {:.6} in {} iterations ({:.2} s, {:?})",
        train.len(),
        report.loss_history[0],
        ckpt.final_loss,
        report.iterations,
        report.wall_time,
        report.stop
    );
    Ok(out_text)
}

pub fn cmd_eval(dataset: &Path, checkpoint: Option<&Path>, split: SplitArg, out: &Path) -> Result<String> {
    let mut out_text = String::new();
    let (data, meta, dataset_hash) = load_dataset(dataset)?;
    let rn = meta.reduced_network()?;
    let (params, checkpoint_hash, seed) = match checkpoint {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let ckpt: Checkpoint = serde_json::from_slice(&bytes)
                .map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
            check_hash(&meta.zone_hash, &ckpt.zone_hash)?;
            if ckpt.tie_order != rn.tie_labels() {
                return Err(Error::InvalidArgument("checkpoint tie order differs from the dataset".into()));
            }
            (ckpt.params(), sha256_hex(&bytes), ckpt.seed)
        }
        None => (meta.init_params.clone(), String::new(), meta.seed),
    };
    let subset = match split {
        SplitArg::Train => data.train(),
        SplitArg::Test => data.test(),
        SplitArg::All => data,
    };
    let metrics = evaluate(&rn, &params, &subset, meta.base_mva)?;
    fs::create_dir_all(out)?;
    let report = MetricsReport {
        version: VERSION.into(),
        zone_hash: meta.zone_hash,
        dataset_hash,
        checkpoint_hash,
        seed,
        split: format!("{split:?}").to_lowercase(),
        tie_order: rn.tie_labels(),
        metrics,
    };
    write_json(&out.join("metrics.json"), &report)?;

    let mut w = csv::Writer::from_path(out.join("per_tie_mae.csv")).map_err(csv_io)?;
    w.write_record(["tie", "mae_mw"]).map_err(csv_io)?;
    for (label, mae) in report.tie_order.iter().zip(&report.metrics.per_tie_mae_mw) {
        w.write_record([label.clone(), mae.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("cumulative_error.csv")).map_err(csv_io)?;
    w.write_record(["abs_error_pu", "fraction"]).map_err(csv_io)?;
    for (e, f) in &report.metrics.cumulative_abs_error {
        w.write_record([e.to_string(), f.to_string()]).map_err(csv_io)?;
    }
    w.flush()?;

    let m = &report.metrics;
    wln!(out_text, 
        "{} scenarios: MAE {:.4} MW, max error {:.5} pu, squared two-norm loss {:.6} (per scenario {:.3e})",
        m.scenarios, m.mae_mw, m.inf_norm_loss, m.sq_two_norm_loss, m.sq_two_norm_loss_mean
    );
    Ok(out_text)
}

fn csv_io(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn cmd_inspect(path: &Path) -> Result<String> {
    let mut out_text = String::new();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "m" => {
            let (net, hash) = load_case(path)?;
            let count = |k: BusKind| net.buses.iter().filter(|b| b.kind == k).count();
            let p = net.p_injections();
            wln!(out_text, "case {}", path.display());
            wln!(out_text, "  sha256   {hash}");
            wln!(out_text, "  base     {} MVA", net.base_mva);
            wln!(out_text, 
                "  buses    {} ({} slack, {} PV, {} PQ)",
                net.bus_count(),
                count(BusKind::Slack),
                count(BusKind::PV),
                count(BusKind::PQ)
            );
            wln!(out_text, "  branches {}", net.branch_count());
            wln!(out_text, "  ref bus  {}", net.ref_bus);
            let gen: f64 = p.iter().filter(|v| **v > 0.0).sum();
            let load: f64 = -p.iter().filter(|v| **v < 0.0).sum::<f64>();
            wln!(out_text, 
                "  injections {:.2} MW out, {:.2} MW in",
                gen * net.base_mva,
                load * net.base_mva
            );
        }
        "csv" => {
            let text = read_text(path)?;
            let mut lines = text.lines();
            let header = lines.next().unwrap_or("");
            wln!(out_text, "table {}", path.display());
            wln!(out_text, "  rows    {}", lines.count());
            wln!(out_text, "  columns {}", header.split(',').count());
            let side = sidecar_path(path);
            if side.exists() {
                wln!(out_text, "  sidecar {}", side.display());
                wln!(out_text, "{}", read_text(&side)?.trim_end());
            }
        }
        _ => {
            let value: serde_json::Value = read_json(path)?;
            let obj = value
                .as_object()
                .ok_or_else(|| Error::InvalidArgument(format!("{}: not a JSON object", path.display())))?;
            wln!(out_text, "json {}", path.display());
            for (k, v) in obj {
                let shown = match v {
                    serde_json::Value::Array(a) => format!("[{} entries]", a.len()),
                    serde_json::Value::Object(o) => format!("{{{} keys}}", o.len()),
                    other => other.to_string(),
                };
                wln!(out_text, "  {k:<22} {shown}");
            }
        }
    }
    Ok(out_text)
}
