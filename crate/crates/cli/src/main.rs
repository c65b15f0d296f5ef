//! `qsc` — evaluate, sweep, and search per-layer fixed-point precision
//! assignments for small CNN classifiers.
//!
//! Machine-readable results (trace CSV/JSON, traffic reports) go to stdout
//! or to `--out-csv`/`--out-json` files; progress notes go to stderr. Output
//! files are written atomically: contents are staged to a temporary file in
//! the destination directory and renamed into place only once complete, so a
//! failed run never leaves a partial file behind.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qsc_core::io::{
    layer_traces_to_csv, layer_traces_to_json, load_idx, load_model, load_weights, trace_from_json,
    trace_to_csv, trace_to_json, traffic_report_to_csv, traffic_report_to_json,
};
use qsc_core::{
    count_accesses, evaluate, select_for_tolerance, traffic, DescentOptions, ExplorationTrace,
    Explorer, FixedPointFormat, NetworkModel, PrecisionConfig, Sample, SweepSpec, SweepTarget,
    ToleranceSelection, TrafficMode, WeightStore,
};

#[derive(Parser)]
#[command(
    name = "qsc",
    version,
    about = "Per-layer fixed-point precision exploration for CNN classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure top-1 accuracy under an optional precision configuration.
    Eval(EvalArgs),
    /// Sweep one bit width applied to every group at once.
    SweepUniform(SweepArgs),
    /// Sweep one bit width over each group in turn, others at full precision.
    SweepLayer(SweepArgs),
    /// Greedy one-bit descent plus a per-tolerance selection summary.
    Search(SearchArgs),
    /// Count memory accesses and bit traffic for a configuration.
    Traffic(TrafficArgs),
    /// Re-query a saved trace (JSON) at new tolerances.
    Select(SelectArgs),
}

#[derive(Args)]
struct ModelInputs {
    /// Network description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Trained weights (QSCW binary).
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Args)]
struct DatasetInputs {
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Use only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Forward-pass minibatch size (throughput knob; results are identical).
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
}

#[derive(Args)]
struct TrafficModelArgs {
    /// Weight re-read model: per image (single) or once per batch (batch).
    #[arg(long, value_enum, default_value_t = ModeArg::Single)]
    mode: ModeArg,
    /// Batch size assumed by the traffic model.
    #[arg(long, default_value_t = 1)]
    traffic_batch: usize,
}

#[derive(Args)]
struct OutputArgs {
    /// Write results as CSV to this path.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write results as JSON to this path.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeArg {
    Single,
    Batch,
}

impl From<ModeArg> for TrafficMode {
    fn from(m: ModeArg) -> TrafficMode {
        match m {
            ModeArg::Single => TrafficMode::Single,
            ModeArg::Batch => TrafficMode::Batch,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum TargetArg {
    /// Weight fractional bits (integer bits pinned by --weight-int).
    Weights,
    /// Data integer bits (fractional bits pinned by --data-frac).
    DataInt,
    /// Data fractional bits (integer bits pinned by --data-int).
    DataFrac,
}

impl From<TargetArg> for SweepTarget {
    fn from(t: TargetArg) -> SweepTarget {
        match t {
            TargetArg::Weights => SweepTarget::WeightsFrac,
            TargetArg::DataInt => SweepTarget::DataInt,
            TargetArg::DataFrac => SweepTarget::DataFrac,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelInputs,
    #[command(flatten)]
    data: DatasetInputs,
    /// Precision configuration: a config file path, a compact
    /// "w=...;d=..." string, or a dashed "I.F-I.F-..." string applied to
    /// both weights and data ("full" = full precision). Omit for an
    /// all-full-precision baseline run.
    #[arg(long)]
    config: Option<String>,
    /// Baseline top-1 for reporting relative accuracy.
    #[arg(long)]
    baseline: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelInputs,
    #[command(flatten)]
    data: DatasetInputs,
    #[command(flatten)]
    traffic: TrafficModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Which per-group parameter the swept value sets.
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Smallest swept bit count.
    #[arg(long)]
    min: u32,
    /// Largest swept bit count.
    #[arg(long)]
    max: u32,
    /// Weight integer bits used when sweeping weight fractions.
    #[arg(long, default_value_t = 1)]
    weight_int: u32,
    /// Data integer bits used when sweeping data fractions.
    #[arg(long, default_value_t = 8)]
    data_int: u32,
    /// Data fractional bits used when sweeping data integers.
    #[arg(long, default_value_t = 8)]
    data_frac: u32,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    model: ModelInputs,
    #[command(flatten)]
    data: DatasetInputs,
    #[command(flatten)]
    traffic: TrafficModelArgs,
    #[command(flatten)]
    out: OutputArgs,
    /// Initial uniform data format "I.F".
    #[arg(long)]
    init: String,
    /// Initial uniform weight format "I.F"; defaults to --init.
    #[arg(long)]
    init_weights: Option<String>,
    /// Hold every fractional width fixed during the descent and start the
    /// data side at this F; only data integer bits are then reduced.
    #[arg(long)]
    fix_fraction: Option<u32>,
    /// Stop the descent once adopted accuracy falls below this fraction of
    /// the baseline.
    #[arg(long, default_value_t = 0.5)]
    floor: f64,
    /// Comma-separated accuracy-loss tolerances, as fractions or percents
    /// (e.g. "0.01,0.05" or "1%,5%").
    #[arg(long, default_value = "0.01,0.02,0.05,0.1")]
    tolerance: String,
}

#[derive(Args)]
struct TrafficArgs {
    /// Network description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Precision configuration (file path, compact, or dashed string).
    /// Omit for full precision.
    #[arg(long)]
    config: Option<String>,
    /// Weight re-read model: per image (single) or once per batch (batch).
    #[arg(long, value_enum, default_value_t = ModeArg::Single)]
    mode: ModeArg,
    /// Batch size assumed by the traffic model.
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SelectArgs {
    /// Trace JSON emitted by search or a sweep.
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated accuracy-loss tolerances.
    #[arg(long, default_value = "0.01,0.02,0.05,0.1")]
    tolerance: String,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Eval(args) => cmd_eval(args),
        Command::SweepUniform(args) => cmd_sweep(args, true),
        Command::SweepLayer(args) => cmd_sweep(args, false),
        Command::Search(args) => cmd_search(args),
        Command::Traffic(args) => cmd_traffic(args),
        Command::Select(args) => cmd_select(args),
    }
}

fn load_inputs(
    model: &ModelInputs,
    data: &DatasetInputs,
) -> Result<(NetworkModel, WeightStore, Vec<Sample>)> {
    let net = load_model(&model.model)?;
    let store = load_weights(&model.weights)?;
    let mut samples = load_idx(&data.images, &data.labels)?;
    if let Some(n) = data.limit {
        if n == 0 {
            bail!("--limit must be positive");
        }
        samples.truncate(n);
    }
    Ok((net, store, samples))
}

/// Accepts a config-document path, a compact "w=...;d=..." string, or a
/// dashed string applied to both sides.
fn parse_config_arg(arg: &str, model: &NetworkModel) -> Result<PrecisionConfig> {
    let names = model.group_names();
    let cfg = if Path::new(arg).is_file() {
        let text =
            fs::read_to_string(arg).with_context(|| format!("reading config file {arg}"))?;
        PrecisionConfig::parse_document(&names, &text)?
    } else if arg.contains('=') {
        PrecisionConfig::parse_compact(&names, arg)?
    } else {
        PrecisionConfig::parse_dashed(&names, arg)?
    };
    Ok(cfg)
}

fn parse_tolerances(s: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let value = match tok.strip_suffix('%') {
            Some(pct) => {
                pct.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad tolerance {tok:?}"))?
                    / 100.0
            }
            None => tok
                .parse::<f64>()
                .with_context(|| format!("bad tolerance {tok:?}"))?,
        };
        out.push(value);
    }
    if out.is_empty() {
        bail!("no tolerances given");
    }
    Ok(out)
}

/// "0.01" -> "1%", "0.025" -> "2.5%".
fn tolerance_label(t: f64) -> String {
    let pct = t * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV to stdout when no output file was requested; otherwise only the
/// requested files are written.
fn emit(out: &OutputArgs, csv: &str, json: &str) -> Result<()> {
    if out.out_csv.is_none() && out.out_json.is_none() {
        print!("{csv}");
        return Ok(());
    }
    if let Some(path) = &out.out_csv {
        write_atomic(path, csv)?;
        eprintln!("wrote {}", path.display());
    }
    if let Some(path) = &out.out_json {
        write_atomic(path, json)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// One line per tolerance: label, compact config, traffic ratio.
fn print_summary(trace: &ExplorationTrace, tolerances: &[f64]) -> Result<()> {
    println!("tolerance  config  TR");
    for &tol in tolerances {
        match select_for_tolerance(trace, trace.baseline_top1, tol)? {
            ToleranceSelection::Selected { index, .. } => {
                let r = &trace.records[index];
                println!(
                    "{}  {}  {:.4}",
                    tolerance_label(tol),
                    r.config.to_compact(),
                    r.traffic.traffic_ratio
                );
            }
            ToleranceSelection::Infeasible { best_relative, .. } => {
                println!(
                    "{}  infeasible(best relative {:.4})  -",
                    tolerance_label(tol),
                    best_relative
                );
            }
        }
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (net, store, samples) = load_inputs(&args.model, &args.data)?;
    let config = match &args.config {
        Some(c) => parse_config_arg(c, &net)?,
        None => PrecisionConfig::for_model(&net),
    };
    let result = evaluate(
        &net,
        &store,
        &config,
        &samples,
        args.data.batch_size,
        args.baseline,
    )?;
    println!("top-1 {:.6} on {} images", result.top1, result.images);
    if let Some(rel) = result.relative {
        println!("relative {rel:.6}");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, uniform: bool) -> Result<()> {
    let (net, store, samples) = load_inputs(&args.model, &args.data)?;
    let spec = SweepSpec::new(args.target.into(), args.min, args.max)?
        .with_weight_int(args.weight_int)?
        .with_data_int(args.data_int)?
        .with_data_frac(args.data_frac)?;
    let explorer = Explorer::new(
        &net,
        &store,
        &samples,
        args.data.batch_size,
        args.traffic.traffic_batch,
        args.traffic.mode.into(),
    )?;
    eprintln!(
        "baseline top-1 {:.6} on {} images",
        explorer.baseline_top1(),
        samples.len()
    );
    let (csv, json) = if uniform {
        let trace = explorer.sweep_uniform(&spec)?;
        (trace_to_csv(&trace)?, trace_to_json(&trace)?)
    } else {
        let traces = explorer.sweep_per_layer(&spec)?;
        (layer_traces_to_csv(&traces)?, layer_traces_to_json(&traces)?)
    };
    emit(&args.out, &csv, &json)
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    let (net, store, samples) = load_inputs(&args.model, &args.data)?;
    let tolerances = parse_tolerances(&args.tolerance)?;
    let data_fmt: FixedPointFormat = args.init.parse()?;
    let data_fmt = match args.fix_fraction {
        Some(f) => FixedPointFormat::new(data_fmt.integer_bits(), f)?,
        None => data_fmt,
    };
    let weight_fmt: FixedPointFormat = match &args.init_weights {
        Some(s) => s.parse()?,
        None => data_fmt,
    };
    let init = PrecisionConfig::uniform_for(net.group_names(), Some(weight_fmt), Some(data_fmt));
    let opts = DescentOptions {
        vary_fraction: args.fix_fraction.is_none(),
        accuracy_floor: args.floor,
    };
    let explorer = Explorer::new(
        &net,
        &store,
        &samples,
        args.data.batch_size,
        args.traffic.traffic_batch,
        args.traffic.mode.into(),
    )?;
    let trace = explorer.greedy_descent(&init, &opts)?;
    eprintln!(
        "baseline top-1 {:.6}; visited {} configurations",
        explorer.baseline_top1(),
        trace.len()
    );
    if args.out.out_csv.is_some() || args.out.out_json.is_some() {
        emit(&args.out, &trace_to_csv(&trace)?, &trace_to_json(&trace)?)?;
    }
    print_summary(&trace, &tolerances)
}

fn cmd_traffic(args: TrafficArgs) -> Result<()> {
    let net = load_model(&args.model)?;
    let counts = count_accesses(&net, args.batch_size, args.mode.into())?;
    let config = match &args.config {
        Some(c) => parse_config_arg(c, &net)?,
        None => PrecisionConfig::for_model(&net),
    };
    let report = traffic(&counts, &config)?;
    emit(
        &args.out,
        &traffic_report_to_csv(&report)?,
        &traffic_report_to_json(&report)?,
    )
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let text = fs::read_to_string(&args.trace)
        .with_context(|| format!("reading trace {}", args.trace.display()))?;
    let trace = trace_from_json(&text)?;
    let tolerances = parse_tolerances(&args.tolerance)?;
    print_summary(&trace, &tolerances)
}
