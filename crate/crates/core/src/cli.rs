//! `tiedgo` command line: ingest, train, eval, predict, gtp, inspect.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evaluator::{evaluate, evaluate_oracle, predict_ranked, Evaluation, UniformPredictor, DEFAULT_TOPK};
use crate::goboard::DEFAULT_SIZE;
use crate::gtp::{run_gtp, vertex_to_string, Engine, Vertex};
use crate::sgfio::{board_before, build_dataset, parse_sgf_bytes, BuildOptions, Dataset, Split};
use crate::symmetry::Symmetry;
use crate::symnet::Network;
use crate::trainer::{train, Checkpoint, TrainConfig, TrainOptions, DEFAULT_SEED};

/// Environment variable naming the default dataset directory.
pub const DATA_ENV: &str = "TIEDGO_DATA";

#[derive(Debug, Parser)]
#[command(name = "tiedgo", version, about = "Go move prediction with reflection-tied convolutional networks")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Single worker; results are bit-identical across runs.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse SGF files and write train/val/test shards.
    Ingest(IngestArgs),
    /// Train a network from a TOML config.
    Train(TrainArgs),
    /// Score a model on a dataset split.
    Eval(EvalArgs),
    /// Rank the moves of one position from an SGF file.
    Predict(PredictArgs),
    /// Play over the Go Text Protocol on stdin/stdout.
    Gtp(GtpArgs),
    /// Show orbit counts, parameter statistics and filters of a layer.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    sgf_dir: PathBuf,
    /// Output directory [default: $TIEDGO_DATA].
    #[arg(long, env = DATA_ENV)]
    out: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.88,0.04,0.08", value_parser = parse_fractions)]
    split: [f64; 3],
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = crate::sgfio::DEFAULT_SHARD_RECORDS)]
    shard_records: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value` config override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many optimizer steps in total.
    #[arg(long)]
    stop_after_steps: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    /// All probability on the recorded move.
    Oracle,
    /// Equal probability on every legal move.
    Uniform,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "baseline")]
    model: Option<PathBuf>,
    /// Dataset directory or manifest [default: $TIEDGO_DATA].
    #[arg(long, env = DATA_ENV)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Write topk.tsv and move_number.tsv into this directory.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Score only the first N examples.
    #[arg(long)]
    limit: Option<usize>,
    /// Score a reference predictor instead of a model.
    #[arg(long, value_enum, conflicts_with = "model")]
    baseline: Option<Baseline>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    sgf: PathBuf,
    /// Moves played before the position (0 = empty board).
    #[arg(long, default_value_t = 0)]
    move_number: usize,
    #[arg(long, default_value_t = 10)]
    topk: usize,
}

#[derive(Debug, Args)]
struct GtpArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Layer index; the dense top layer comes after the convolutions.
    #[arg(long)]
    layer: Option<usize>,
}

fn parse_fractions(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 3] = parts.try_into().map_err(|_| "expected three comma-separated fractions".to_string())?;
    if arr.iter().any(|v| *v < 0.0) || (arr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err("fractions must be non-negative and sum to 1".into());
    }
    Ok(arr)
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 success, 1 runtime failure, 2 usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = if cli.deterministic { Some(1) } else { cli.jobs };
    if let Some(n) = threads {
        // Fails harmlessly if a pool already exists in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Predict(a) => predict_cmd(a, out),
        Command::Gtp(a) => gtp_cmd(a),
        Command::Inspect(a) => inspect_cmd(a, out),
    }
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let opts = BuildOptions { fractions: a.split, seed: a.seed, shard_records: a.shard_records };
    let m = build_dataset(&a.sgf_dir, &a.out, &opts)?;
    writeln!(out, "source_files={}", m.source_files)?;
    writeln!(out, "rejected={}", m.rejected)?;
    for s in Split::ALL {
        let info = m.split(s);
        writeln!(out, "{s}_games={}", info.games.len())?;
        writeln!(out, "{s}_examples={}", info.examples)?;
    }
    writeln!(out, "manifest={}", a.out.join(crate::sgfio::MANIFEST_FILE).display())?;
    Ok(())
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut overrides = a.overrides.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = TrainConfig::load(&a.config, &overrides)?;
    let outcome = train(&cfg, &TrainOptions { resume: a.resume, stop_after_steps: a.stop_after_steps })?;
    for h in &outcome.history {
        let v = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.4}"));
        writeln!(
            out,
            "epoch={} lr={} train_nll={:.4} val_nll={} val_accuracy={}",
            h.epoch,
            h.lr,
            h.train_nll,
            v(h.val_nll),
            v(h.val_accuracy)
        )?;
    }
    writeln!(out, "checkpoint={}", outcome.checkpoint.display())?;
    writeln!(out, "finished={}", outcome.finished)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Network<f32>> {
    Ok(Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?.network)
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::open(&a.data)?;
    let result: Evaluation = match (a.baseline, &a.model) {
        (Some(Baseline::Oracle), _) => evaluate_oracle(&data, a.split, a.limit)?,
        (Some(Baseline::Uniform), _) => evaluate(&UniformPredictor, &data, a.split, a.limit)?,
        (None, Some(m)) => evaluate(&load_model(m)?, &data, a.split, a.limit)?,
        (None, None) => bail!("--model or --baseline is required"),
    };
    writeln!(out, "split={}", a.split)?;
    write!(out, "{}", result.metrics.to_key_values())?;
    for k in [1, 5, 10] {
        writeln!(out, "top{k}={:.4}", result.curves.topk(k))?;
    }
    if let Some(dir) = a.curves {
        fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
        fs::write(dir.join("topk.tsv"), result.curves.topk_tsv(DEFAULT_TOPK))?;
        fs::write(dir.join("move_number.tsv"), result.curves.move_number_tsv())?;
        writeln!(out, "curves={}", dir.display())?;
    }
    Ok(())
}

fn predict_cmd(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_model(&a.model)?;
    let bytes = fs::read(&a.sgf).with_context(|| a.sgf.display().to_string())?;
    let game = parse_sgf_bytes(&bytes).with_context(|| a.sgf.display().to_string())?;
    if game.board_size != DEFAULT_SIZE {
        bail!("only {DEFAULT_SIZE}x{DEFAULT_SIZE} games are supported");
    }
    let board = board_before(&game, a.move_number)?;
    let ranked = predict_ranked(&net, &board)?;
    writeln!(out, "to_move={}", board.to_move())?;
    if let Some(&(_, mv)) = game.moves.get(a.move_number) {
        let actual = match mv {
            crate::sgfio::Move::Play(p) => Vertex::Point(p),
            crate::sgfio::Move::Pass => Vertex::Pass,
        };
        writeln!(out, "actual={}", vertex_to_string(actual, DEFAULT_SIZE))?;
    }
    for (i, (p, prob)) in ranked.iter().take(a.topk).enumerate() {
        writeln!(out, "{}\t{}\t{prob:.6}", i + 1, vertex_to_string(Vertex::Point(*p), DEFAULT_SIZE))?;
    }
    Ok(())
}

fn gtp_cmd(a: GtpArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let mut engine = Engine::new(net);
    let stdin = io::stdin();
    run_gtp(&mut engine, stdin.lock(), io::stdout().lock())?;
    Ok(())
}

fn stats(values: &[f32]) -> String {
    if values.is_empty() {
        return "n=0".into();
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    format!("n={} mean={mean:.6} std={:.6} min={min:.6} max={max:.6}", values.len(), var.sqrt())
}

/// Largest change of a square grid under any board symmetry.
fn asymmetry(grid: &[f32], k: usize) -> f32 {
    Symmetry::ALL
        .iter()
        .map(|&g| {
            let r = g.reflect_grid(grid, k);
            r.iter().zip(grid).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
        })
        .fold(0.0, f32::max)
}

fn render_grid(s: &mut String, grid: &[f32], k: usize) {
    for row in grid.chunks(k) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>9.5}")).collect();
        writeln!(s, "    {}", cells.join(" ")).unwrap();
    }
}

fn inspect_cmd(a: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(&a.model)?;
    let net = &ck.network;
    let spec = net.spec();
    let mut s = String::new();
    writeln!(s, "tied={} activation={:?} encoding_channels={}", spec.tied, spec.activation, spec.input_channels())?;
    writeln!(s, "free_parameters={} untied_equivalent={}", net.free_parameter_count(), net.raw_parameter_count())?;
    writeln!(s, "epochs_trained={}", ck.header.progress.epoch)?;
    let convs = net.conv_layers();
    match a.layer {
        None => {
            for (i, c) in convs.iter().enumerate() {
                writeln!(
                    s,
                    "layer {i}: conv {k}x{k} {}->{} orbits_per_pair={}",
                    c.in_channels(),
                    c.out_channels(),
                    c.spatial_params(),
                    k = c.kernel()
                )?;
            }
            let d = net.dense_layer();
            writeln!(
                s,
                "layer {}: dense {}x{n}x{n}->{n}x{n} pair_orbits={} bias_orbits={}",
                convs.len(),
                d.in_channels(),
                d.pair_orbits().orbit_count(),
                d.output_orbits().orbit_count(),
                n = d.side()
            )?;
        }
        Some(i) if i < convs.len() => {
            let c = &convs[i];
            let k = c.kernel();
            writeln!(s, "layer {i}: conv {k}x{k} {}->{}", c.in_channels(), c.out_channels())?;
            writeln!(s, "free_spatial_parameters_per_pair={}", c.spatial_params())?;
            writeln!(s, "weights: {}", stats(c.weights()))?;
            writeln!(s, "bias: {}", stats(c.bias()))?;
            for o in 0..c.out_channels().min(4) {
                for inp in 0..c.in_channels().min(2) {
                    let f = c.filter(o, inp);
                    writeln!(s, "  filter out={o} in={inp} asymmetry={:.3e}", asymmetry(f, k))?;
                    render_grid(&mut s, f, k);
                }
            }
        }
        Some(i) if i == convs.len() => {
            let d = net.dense_layer();
            let n = d.side();
            writeln!(s, "layer {i}: dense {}x{n}x{n}->{n}x{n}", d.in_channels())?;
            writeln!(s, "pair_orbits_per_channel={} bias_orbits={}", d.pair_orbits().orbit_count(), d.output_orbits().orbit_count())?;
            writeln!(s, "weights: {}", stats(d.weights()))?;
            writeln!(s, "bias: {}", stats(d.bias()))?;
            writeln!(s, "  output bias map asymmetry={:.3e}", asymmetry(d.expanded_bias(), n))?;
            render_grid(&mut s, d.expanded_bias(), n);
        }
        Some(i) => return Err(anyhow!("layer {i} does not exist (network has {} layers)", convs.len() + 1)),
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}
