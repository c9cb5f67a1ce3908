//! `nslbp`: compile networks, run them on the simulator or the reference
//! model, verify the two agree, and produce margin and energy reports.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 configuration or
//! input error.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use nslbp_core::config::SimConfig;
use nslbp_core::isa::{print_program, read_jsonl, write_jsonl, Program, TraceEvent};
use nslbp_core::mapper::compile_mlp_layer;
use nslbp_core::net::{op_count_for_layer, Activation, ApproxConfig, LayerSpec, NetworkSpec, Shape};
use nslbp_core::perf::{account, calibrate, compare_networks, Report};
use nslbp_core::pipeline::{reference_image, simulate_image};
use nslbp_core::sensor::{load_idx_images, load_pgm, RawImage};
use nslbp_core::subarray::monte_carlo_margin;
use nslbp_core::synth::{random_image, random_network, rng, SynthParams};

#[derive(Parser)]
#[command(name = "nslbp", version, about = "Near-sensor LBP network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a network and emit its sub-array programs and per-layer plan.
    Compile {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run inference and write ofmaps (plus trace and report when simulating).
    Run {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Mode::Simulate)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run simulator and reference side by side; exit 1 on any difference.
    Verify {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sense-margin analysis.
    Margin {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated noise levels in mV.
        #[arg(long, value_delimiter = ',', default_value = "0,5,15,30")]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy/latency report for one trace, or a comparison of several.
    Report {
        /// JSONL trace; repeat to compare, optionally as NAME=PATH.
        #[arg(long, required = true)]
        trace: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the in-array energy to a TOPS/W target and write the config.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 37.4)]
        target: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct NetArgs {
    /// Network spec (JSON). Without it a synthetic network is generated from --seed.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Approximated LSBs; defaults to the value stored in the network.
    #[arg(long)]
    apx: Option<u32>,
    /// Simulator configuration (voltage model, cost table, sub-arrays).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file, a P5 PGM file, or a directory of PGM files.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Number of images: synthetic frames to generate, or a cap on loaded ones.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Reference,
    Simulate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Simulator and reference disagree.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match setup_threads().and_then(|_| dispatch(cli.cmd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Mismatch>() => {
            eprintln!("verification failed: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn setup_threads() -> Result<()> {
    let Ok(v) = std::env::var("NSLBP_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).with_context(|| format!("NSLBP_THREADS={v:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Compile { net, out } => compile(&net, &out),
        Cmd::Run { net, data, mode, out } => run(&net, &data, mode, &out),
        Cmd::Verify { net, data, out } => verify(&net, &data, out.as_deref()),
        Cmd::Margin { config, sigma, trials, seed, out } => margin(config.as_deref(), &sigma, trials, seed, out.as_deref()),
        Cmd::Report { trace, config, format, out } => report(&trace, config.as_deref(), format, out.as_deref()),
        Cmd::Calibrate { config, target, out } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.costs = calibrate(&cfg.costs, target)?;
            write_file(&out, &cfg.to_json())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    Ok(match path {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

struct Workload {
    spec: NetworkSpec,
    cfg: ApproxConfig,
    sim: SimConfig,
    images: Vec<RawImage>,
}

fn load_network(net: &NetArgs, geometry: Option<(usize, usize)>) -> Result<(NetworkSpec, ApproxConfig, SimConfig)> {
    let sim = load_config(net.config.as_deref())?;
    let spec = match &net.network {
        Some(p) => NetworkSpec::load(p).with_context(|| format!("network {}", p.display()))?,
        None => {
            let (height, width) = geometry.unwrap_or((28, 28));
            random_network(net.seed, &SynthParams { height, width, ..SynthParams::default() })
        }
    };
    spec.validate()?;
    let cfg = net.apx.map_or_else(|| spec.approx(), ApproxConfig::new);
    spec.check_apx(cfg)?;
    Ok((spec, cfg, sim))
}

fn load_images(path: &Path) -> Result<Vec<RawImage>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no .pgm files in {}", path.display());
        }
        return files.iter().map(|f| load_pgm(f).with_context(|| format!("image {}", f.display()))).collect();
    }
    let ctx = || format!("images {}", path.display());
    if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
        Ok(vec![load_pgm(path).with_context(ctx)?])
    } else {
        load_idx_images(path).with_context(ctx)
    }
}

fn workload(net: &NetArgs, data: &DataArgs) -> Result<Workload> {
    let mut images = match &data.images {
        Some(p) => load_images(p)?,
        None => Vec::new(),
    };
    if let Some(n) = data.count.filter(|_| data.images.is_some()) {
        images.truncate(n);
    }
    let geometry = images.first().map(|im| (im.height(), im.width()));
    let (spec, cfg, sim) = load_network(net, geometry)?;
    if data.images.is_none() {
        let g = spec.input;
        let mut r = rng(net.seed.wrapping_add(1));
        images = (0..data.count.unwrap_or(10)).map(|_| random_image(&mut r, g.height, g.width, g.bits)).collect();
    }
    if let Some((i, im)) = images.iter().enumerate().find(|(_, im)| (im.height(), im.width()) != (spec.input.height, spec.input.width)) {
        bail!(
            "image {i} is {}x{}, the network expects {}x{}",
            im.height(),
            im.width(),
            spec.input.height,
            spec.input.width
        );
    }
    Ok(Workload { spec, cfg, sim, images })
}

fn compile(net: &NetArgs, out: &Path) -> Result<()> {
    let (spec, cfg, sim) = load_network(net, None)?;
    let shapes = spec.shapes()?;
    let mut layers = Vec::new();
    let mut input = Shape::Map {
        channels: spec.input.channels,
        height: spec.input.height,
        width: spec.input.width,
        bits: spec.input.bits,
    };
    for (i, layer) in spec.layers.iter().enumerate() {
        let entry = match layer {
            LayerSpec::Lbp(l) => {
                let Shape::Map { height, width, .. } = input else { bail!("layer {i}: LBP layer without a map input") };
                let per_pixel = op_count_for_layer(l, cfg)?;
                let comparisons = per_pixel.comparisons * (height * width) as u64;
                json!({
                    "layer": i,
                    "kind": layer.kind(),
                    "ops_per_pixel": per_pixel,
                    "comparisons": comparisons,
                    "tiles": comparisons.div_ceil(256),
                })
            }
            LayerSpec::Mlp(m) => {
                let plan = compile_mlp_layer(m.outputs(), m.inputs(), m.weight_bits, m.act_bits, sim.sub_arrays)?;
                let mut files = Vec::new();
                for lane in 0..sim.sub_arrays {
                    let instructions = plan.tiles.iter().filter(|t| t.lane == lane).flat_map(|t| t.program.instructions.clone()).collect();
                    let name = format!("layer{i}_sa{lane}.asm");
                    write_file(&out.join(&name), &print_program(&Program::new(lane as u32, instructions)))?;
                    files.push(name);
                }
                json!({ "layer": i, "kind": layer.kind(), "tiles": plan.tiles.len(), "programs": files })
            }
            _ => json!({ "layer": i, "kind": layer.kind(), "unit": "dpu" }),
        };
        layers.push(entry);
        input = shapes[i];
    }
    let summary = json!({ "apx": cfg.apx, "sub_arrays": sim.sub_arrays, "layers": layers, "shapes": shapes });
    write_file(&out.join("network.json"), &spec.to_json())?;
    write_file(&out.join("plan.json"), &serde_json::to_string_pretty(&summary)?)
}

/// Simulates every image in parallel, keeping input order.
fn simulate_all(w: &Workload) -> Result<Vec<(Vec<Activation>, Vec<TraceEvent>)>> {
    w.images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            let o = simulate_image(&w.spec, im, w.cfg, &w.sim).with_context(|| format!("image {i}"))?;
            Ok((o.activations, o.trace))
        })
        .collect()
}

fn reference_all(w: &Workload) -> Result<Vec<Vec<Activation>>> {
    w.images
        .par_iter()
        .enumerate()
        .map(|(i, im)| reference_image(&w.spec, im, w.cfg).with_context(|| format!("image {i}")))
        .collect()
}

/// Concatenates per-frame traces, offsetting cycles so frames run back to back.
fn join_traces(traces: Vec<Vec<TraceEvent>>) -> Vec<TraceEvent> {
    let mut out = Vec::new();
    let mut base = 0;
    for t in traces {
        let next = base + t.iter().map(|e| e.cycle + 1).max().unwrap_or(0);
        out.extend(t.into_iter().map(|mut e| {
            e.cycle += base;
            e
        }));
        base = next;
    }
    out
}

fn ofmaps_jsonl(all: &[Vec<Activation>]) -> Result<String> {
    let mut s = String::new();
    for (i, layers) in all.iter().enumerate() {
        s.push_str(&serde_json::to_string(&json!({ "image": i, "layers": layers }))?);
        s.push('\n');
    }
    Ok(s)
}

fn write_report(dir: &Path, r: &Report) -> Result<()> {
    write_file(&dir.join("report.json"), &r.to_json())?;
    write_file(&dir.join("report.csv"), &r.to_csv()?)
}

fn run(net: &NetArgs, data: &DataArgs, mode: Mode, out: &Path) -> Result<()> {
    let w = workload(net, data)?;
    match mode {
        Mode::Reference => write_file(&out.join("ofmaps.jsonl"), &ofmaps_jsonl(&reference_all(&w)?)?),
        Mode::Simulate => {
            let (acts, traces): (Vec<_>, Vec<_>) = simulate_all(&w)?.into_iter().unzip();
            let trace = join_traces(traces);
            write_file(&out.join("ofmaps.jsonl"), &ofmaps_jsonl(&acts)?)?;
            let mut buf = Vec::new();
            write_jsonl(&trace, &mut buf)?;
            fs::write(out.join("trace.jsonl"), buf)?;
            write_report(out, &account(&trace, &w.sim.costs)?)
        }
    }
}

fn verify(net: &NetArgs, data: &DataArgs, out: Option<&Path>) -> Result<()> {
    let w = workload(net, data)?;
    let (sim, traces): (Vec<_>, Vec<_>) = simulate_all(&w)?.into_iter().unzip();
    let golden = reference_all(&w)?;
    let mut mismatches = Vec::new();
    for (i, (a, b)) in sim.iter().zip(&golden).enumerate() {
        if let Some(layer) = (0..a.len().max(b.len())).find(|&l| a.get(l) != b.get(l)) {
            mismatches.push(json!({ "image": i, "first_layer": layer }));
        }
    }
    if let Some(dir) = out {
        let report = account(&join_traces(traces), &w.sim.costs)?;
        write_report(dir, &report)?;
        let summary = json!({ "images": w.images.len(), "apx": w.cfg.apx, "mismatches": mismatches });
        write_file(&dir.join("verify.json"), &serde_json::to_string_pretty(&summary)?)?;
    }
    println!("{} images, apx {}, {} mismatching", w.images.len(), w.cfg.apx, mismatches.len());
    if !mismatches.is_empty() {
        return Err(Mismatch(format!("{} of {} images differ, first at {}", mismatches.len(), w.images.len(), mismatches[0])).into());
    }
    Ok(())
}

fn margin(config: Option<&Path>, sigmas: &[f64], trials: u64, seed: u64, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    if let Some(s) = sigmas.iter().find(|s| !s.is_finite() || **s < 0.0) {
        bail!("sigma must be a non-negative number, got {s}");
    }
    let reports: Vec<_> = sigmas.par_iter().map(|&s| monte_carlo_margin(&cfg.voltage, s, trials, seed)).collect();
    emit(out, &(serde_json::to_string_pretty(&reports)? + "\n"))
}

fn report(traces: &[String], config: Option<&Path>, format: Format, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut reports = Vec::new();
    for t in traces {
        let (name, path) = t.split_once('=').unwrap_or((t.as_str(), t.as_str()));
        let file = fs::File::open(path).with_context(|| format!("cannot open trace {path}"))?;
        let events = read_jsonl(BufReader::new(file)).with_context(|| format!("trace {path}"))?;
        reports.push((name.to_string(), account(&events, &cfg.costs)?));
    }
    let text = if let [(_, r)] = reports.as_slice() {
        match format {
            Format::Json => r.to_json() + "\n",
            Format::Csv => r.to_csv()?,
        }
    } else {
        let c = compare_networks(&reports)?;
        match format {
            Format::Json => c.to_json() + "\n",
            Format::Csv => c.to_csv()?,
        }
    };
    emit(out, &text)
}
