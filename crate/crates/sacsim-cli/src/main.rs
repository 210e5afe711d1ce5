//! `sacsim`: pack sparse power-of-two models, compile them into instruction
//! streams for a selector-accumulator array, simulate images, and check the
//! simulator against an independent integer reference.
//!
//! Every command prints a machine-readable JSON report on stdout; pass
//! `--human` for tables instead. Exit codes are a stable contract:
//!
//! * `0` — success
//! * `1` — usage error (bad flags or arguments)
//! * `2` — validation failure (unreadable or invalid inputs)
//! * `3` — comparison mismatch (`compare` found differing logits)
//! * `4` — pack warning (column combining dropped non-zero weights)

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sacsim::model::{load_manifest, save_manifest, ModelManifest, QuantTensor};
use sacsim::oracle::{gen_input, gen_synthetic, ref_forward, SyntheticSpec};
use sacsim::packer::{combine_columns, dropped_weights};
use sacsim::scheduler::{compile, ArrayConfig, LayerKind, Program};
use sacsim::sim::{execute, run_model, Fidelity, SimOptions, SimReport};

const EXIT_USAGE: i32 = 1;
const EXIT_VALIDATION: i32 = 2;
const EXIT_MISMATCH: i32 = 3;
const EXIT_PACK_WARNING: i32 = 4;

#[derive(Parser)]
#[command(
    name = "sacsim",
    version,
    about = "Compiler and simulator for sparse power-of-two CNNs on a bit-serial systolic array"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a model, fold batch norm and pack it into cell-code blocks
    Pack(PackArgs),
    /// Compile a model into a binary instruction stream for one array size
    Compile(CompileArgs),
    /// Run a compiled stream over an image and report logits and counters
    Simulate(SimulateArgs),
    /// Diff the simulator against the integer reference on one image
    Compare(CompareArgs),
    /// Generate a deterministic synthetic model, and optionally an input
    Gen(GenArgs),
}

#[derive(Args)]
struct PackArgs {
    /// Model manifest (JSON)
    manifest: PathBuf,
    /// Output path for the concatenated packed-layer blocks
    #[arg(long)]
    out: PathBuf,
    /// Print a table instead of JSON
    #[arg(long)]
    human: bool,
}

#[derive(Args)]
struct CompileArgs {
    /// Model manifest (JSON)
    manifest: PathBuf,
    /// Array geometry as ROWSxCOLS, e.g. 128x64
    #[arg(long, value_parser = parse_array)]
    array: ArrayConfig,
    /// Override the manifest clock for latency reporting
    #[arg(long, value_name = "F")]
    clock_mhz: Option<f64>,
    /// Output path for the instruction stream
    #[arg(long)]
    out: PathBuf,
    /// Print a table instead of JSON
    #[arg(long)]
    human: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Compiled instruction stream
    stream: PathBuf,
    /// Input tensor file (see `gen --input-out`); omitted with --batch
    #[arg(required_unless_present = "batch", conflicts_with = "batch")]
    image: Option<PathBuf>,
    /// Simulate every .tensor file in this directory instead
    #[arg(long, value_name = "DIR")]
    batch: Option<PathBuf>,
    /// Accumulator model; both fidelities produce identical results
    #[arg(long, value_enum, default_value_t = FidelityArg::Bit)]
    fidelity: FidelityArg,
    /// Count every cell-cycle as active instead of skipping zero data
    #[arg(long)]
    no_zero_skip: bool,
    /// Override the stream clock for latency reporting
    #[arg(long, value_name = "F")]
    clock_mhz: Option<f64>,
    /// Also write the JSON report here (a directory in batch mode)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a summary instead of JSON
    #[arg(long)]
    human: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Model manifest (JSON)
    manifest: PathBuf,
    /// Input tensor file
    image: PathBuf,
    /// Array geometry to compile for, e.g. 128x64
    #[arg(long, value_parser = parse_array, required_unless_present = "stream")]
    array: Option<ArrayConfig>,
    /// Simulate this pre-compiled stream instead of compiling the manifest
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Accumulator model; both fidelities produce identical results
    #[arg(long, value_enum, default_value_t = FidelityArg::Bit)]
    fidelity: FidelityArg,
    /// Count every cell-cycle as active instead of skipping zero data
    #[arg(long)]
    no_zero_skip: bool,
    /// Also write the JSON diff report here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a summary instead of JSON
    #[arg(long)]
    human: bool,
}

#[derive(Args)]
struct GenArgs {
    /// RNG seed; the input tensor, when requested, uses seed + 1
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model topology to generate
    #[arg(long, value_enum, default_value_t = Preset::Tiny)]
    preset: Preset,
    /// Output path for the model manifest (JSON)
    #[arg(long)]
    out: PathBuf,
    /// Also write a matching random input tensor here
    #[arg(long, value_name = "PATH")]
    input_out: Option<PathBuf>,
    /// Fraction of input values that are exactly zero
    #[arg(long, default_value_t = 0.5)]
    zero_fraction: f64,
    /// Print a summary instead of JSON
    #[arg(long)]
    human: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    /// Model every bit of every serial adder
    Bit,
    /// Word-level shift-adds (bit-exact with `bit`, much faster)
    Word,
}

impl From<FidelityArg> for Fidelity {
    fn from(f: FidelityArg) -> Fidelity {
        match f {
            FidelityArg::Bit => Fidelity::BitSerial,
            FidelityArg::Word => Fidelity::Word,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Two small convolution layers and three classes
    Tiny,
    /// A 20-layer, 1000-class topology at 224x224 input scale
    ImagenetSmall56,
    /// A small random topology drawn from the seed
    Random,
}

fn parse_array(s: &str) -> std::result::Result<ArrayConfig, String> {
    s.parse().map_err(|e: sacsim::Error| e.to_string())
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Pack(args) => cmd_pack(&args),
        Command::Compile(args) => cmd_compile(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Gen(args) => cmd_gen(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_VALIDATION
        }
    }
}

fn cmd_pack(args: &PackArgs) -> Result<i32> {
    let manifest = read_manifest(&args.manifest)?;
    let folded = manifest.folded()?;

    let mut blob = Vec::new();
    let mut layers = Vec::new();
    let mut rows = Vec::new();
    let mut total_dropped = 0usize;
    for (i, (kind, layer)) in folded
        .layers
        .iter()
        .map(|l| ("conv", l))
        .chain(std::iter::once(("fc", &folded.fc)))
        .enumerate()
    {
        let dropped = dropped_weights(layer);
        let packed = combine_columns(layer);
        let bytes = packed.to_bytes()?;
        layers.push(json!({
            "layer": i,
            "kind": kind,
            "filters": packed.rows,
            "channels": layer.channels,
            "group_size": layer.group_size,
            "packed_cols": packed.cols,
            "kept": packed.count_nonzero(),
            "dropped": dropped,
            "bytes": bytes.len(),
        }));
        rows.push(vec![
            i.to_string(),
            kind.to_string(),
            packed.rows.to_string(),
            layer.channels.to_string(),
            layer.group_size.to_string(),
            packed.cols.to_string(),
            packed.count_nonzero().to_string(),
            dropped.to_string(),
        ]);
        total_dropped += dropped;
        blob.extend_from_slice(&bytes);
    }
    write_file(&args.out, &blob)?;

    if args.human {
        print_table(
            &[
                "layer", "kind", "filters", "channels", "group", "packed", "kept", "dropped",
            ],
            &rows,
        );
        println!("wrote {} bytes to {}", blob.len(), args.out.display());
    } else {
        print_json(&json!({
            "out": args.out.display().to_string(),
            "output_bytes": blob.len(),
            "total_dropped": total_dropped,
            "layers": layers,
        }));
    }
    if total_dropped > 0 {
        eprintln!(
            "warning: column combining dropped {total_dropped} non-zero weight(s); \
             the packed model is not equivalent to the manifest"
        );
        return Ok(EXIT_PACK_WARNING);
    }
    Ok(0)
}

fn cmd_compile(args: &CompileArgs) -> Result<i32> {
    let mut manifest = read_manifest(&args.manifest)?;
    if let Some(mhz) = args.clock_mhz {
        validate_clock(mhz)?;
        manifest.clock_mhz = mhz;
    }
    let program = compile(&manifest, args.array)?;
    let bytes = program.to_bytes()?;
    write_file(&args.out, &bytes)?;

    let mut layers = Vec::new();
    let mut rows = Vec::new();
    for (i, layer) in program.layers.iter().enumerate() {
        let kind = kind_name(layer.kind);
        layers.push(json!({
            "layer": i,
            "kind": kind,
            "filters": layer.filters,
            "packed_cols": layer.packed_cols(),
            "data_dims": [layer.data_dims.0, layer.data_dims.1],
            "row_tiles": layer.plan.row_tiles.len(),
            "col_tiles": layer.plan.col_tiles.len(),
            "instructions": layer.instructions.len(),
        }));
        rows.push(vec![
            i.to_string(),
            kind.to_string(),
            layer.filters.to_string(),
            layer.packed_cols().to_string(),
            format!("{}x{}", layer.data_dims.0, layer.data_dims.1),
            format!(
                "{}x{}",
                layer.plan.row_tiles.len(),
                layer.plan.col_tiles.len()
            ),
            layer.instructions.len().to_string(),
        ]);
    }
    if args.human {
        print_table(
            &[
                "layer",
                "kind",
                "filters",
                "packed",
                "data",
                "tiles",
                "instructions",
            ],
            &rows,
        );
        println!(
            "array {}, clock {} MHz: {} instructions, {} bytes -> {}",
            program.array,
            program.clock_mhz,
            program.total_instructions(),
            bytes.len(),
            args.out.display()
        );
    } else {
        print_json(&json!({
            "array": program.array.to_string(),
            "clock_mhz": program.clock_mhz,
            "total_instructions": program.total_instructions(),
            "stream_bytes": bytes.len(),
            "out": args.out.display().to_string(),
            "layers": layers,
        }));
    }
    Ok(0)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut program = read_program(&args.stream)?;
    if let Some(mhz) = args.clock_mhz {
        validate_clock(mhz)?;
        program.clock_mhz = mhz;
    }
    let options = SimOptions {
        fidelity: args.fidelity.into(),
        zero_skip: !args.no_zero_skip,
    };

    if let Some(dir) = &args.batch {
        return simulate_batch(&program, &options, dir, args);
    }

    let image_path = args.image.as_ref().expect("clap enforces image xor batch");
    let image = read_tensor(image_path)?;
    let report = execute(&program, &image, &options)?;
    let value = report_value(image_path, &report);
    if args.human {
        print_human_report(image_path, &report);
    } else {
        print_json(&value);
    }
    if let Some(out) = &args.out {
        write_json(out, &value)?;
    }
    Ok(0)
}

/// Runs every `.tensor` file in `dir` through the program, one at a time in
/// name order, writing one report file per image.
fn simulate_batch(
    program: &Program,
    options: &SimOptions,
    dir: &Path,
    args: &SimulateArgs,
) -> Result<i32> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tensor"))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        bail!("no .tensor files in {}", dir.display());
    }
    let report_dir = args.out.clone().unwrap_or_else(|| dir.to_path_buf());
    fs::create_dir_all(&report_dir)
        .with_context(|| format!("creating {}", report_dir.display()))?;

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for input in &inputs {
        let image = read_tensor(input)?;
        let report = execute(program, &image, options)?;
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        let out = report_dir.join(format!("{stem}.report.json"));
        write_json(&out, &report_value(input, &report))?;
        summaries.push(json!({
            "input": input.display().to_string(),
            "report": out.display().to_string(),
            "argmax": report.argmax(),
            "cycles": report.cycles,
            "latency_ms": report.latency_ms,
        }));
        rows.push(vec![
            input.display().to_string(),
            report.argmax().to_string(),
            report.cycles.to_string(),
            format!("{:.6}", report.latency_ms),
        ]);
    }
    if args.human {
        print_table(&["input", "class", "cycles", "latency_ms"], &rows);
    } else {
        print_json(&json!({ "processed": inputs.len(), "images": summaries }));
    }
    Ok(0)
}

fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    let manifest = read_manifest(&args.manifest)?;
    let image = read_tensor(&args.image)?;
    let options = SimOptions {
        fidelity: args.fidelity.into(),
        zero_skip: !args.no_zero_skip,
    };

    let reference = ref_forward(&manifest, &image)?;
    let (simulated, source) = match &args.stream {
        Some(path) => {
            let program = read_program(path)?;
            (
                execute(&program, &image, &options)?,
                path.display().to_string(),
            )
        }
        None => {
            let array = args.array.expect("clap enforces array xor stream");
            (
                run_model(&manifest, &image, array, &options)?,
                format!("compiled for {array}"),
            )
        }
    };

    let sim: Vec<i64> = simulated.logits.iter().map(|&v| v as i64).collect();
    let mut mismatches = Vec::new();
    let mut mismatch_count = 0usize;
    let mut max_abs_diff = 0u64;
    for (class, (&s, &r)) in sim.iter().zip(&reference).enumerate() {
        if s != r {
            mismatch_count += 1;
            max_abs_diff = max_abs_diff.max(s.abs_diff(r));
            if mismatches.len() < 10 {
                mismatches.push(json!({ "class": class, "simulated": s, "reference": r }));
            }
        }
    }
    let identical = sim.len() == reference.len() && mismatch_count == 0;

    let report = json!({
        "simulated_from": source,
        "classes": reference.len(),
        "simulated_classes": sim.len(),
        "identical": identical,
        "max_abs_diff": max_abs_diff,
        "mismatched_classes": mismatch_count,
        "first_mismatches": mismatches,
        "simulated_argmax": argmax_i64(&sim),
        "reference_argmax": argmax_i64(&reference),
    });
    if args.human {
        println!("simulated from  {source}");
        println!(
            "classes         {} (simulated {})",
            reference.len(),
            sim.len()
        );
        if identical {
            println!("verdict         identical");
        } else {
            println!(
                "verdict         {mismatch_count} of {} classes differ, max |diff| = {max_abs_diff}",
                reference.len()
            );
            for m in &mismatches {
                println!(
                    "  class {}: simulated {} vs reference {}",
                    m["class"], m["simulated"], m["reference"]
                );
            }
        }
    } else {
        print_json(&report);
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if identical {
        Ok(0)
    } else {
        eprintln!(
            "comparison mismatch: {mismatch_count} classes differ (max |diff| = {max_abs_diff})"
        );
        Ok(EXIT_MISMATCH)
    }
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    if !(0.0..=1.0).contains(&args.zero_fraction) {
        bail!(
            "--zero-fraction must be within [0, 1], got {}",
            args.zero_fraction
        );
    }
    let spec = match args.preset {
        Preset::Tiny => SyntheticSpec::tiny(),
        Preset::ImagenetSmall56 => SyntheticSpec::imagenet_small_56(),
        Preset::Random => SyntheticSpec::random(&mut ChaCha8Rng::seed_from_u64(args.seed)),
    };
    let manifest = gen_synthetic(args.seed, &spec);
    write_file(&args.out, save_manifest(&manifest).as_bytes())?;

    let mut input = None;
    if let Some(path) = &args.input_out {
        let tensor = gen_input(
            args.seed.wrapping_add(1),
            manifest.input_shape,
            args.zero_fraction,
        );
        let mut bytes = Vec::new();
        tensor.write_to(&mut bytes)?;
        write_file(path, &bytes)?;
        input = Some(path.display().to_string());
    }

    let preset = args
        .preset
        .to_possible_value()
        .expect("no skipped variants");
    if args.human {
        let (c, h, w) = manifest.input_shape;
        println!(
            "wrote {} ({} preset, seed {}): {} conv layers, {} classes, input {c}x{h}x{w}",
            args.out.display(),
            preset.get_name(),
            args.seed,
            manifest.layers.len(),
            manifest.classes(),
        );
        if let Some(input) = &input {
            println!("wrote input tensor {input}");
        }
    } else {
        print_json(&json!({
            "out": args.out.display().to_string(),
            "preset": preset.get_name(),
            "seed": args.seed,
            "conv_layers": manifest.layers.len(),
            "classes": manifest.classes(),
            "input_shape": [manifest.input_shape.0, manifest.input_shape.1, manifest.input_shape.2],
            "input": input,
        }));
    }
    Ok(0)
}

fn read_manifest(path: &Path) -> Result<ModelManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_manifest(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_tensor(path: &Path) -> Result<QuantTensor> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    QuantTensor::read_from(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
}

fn read_program(path: &Path) -> Result<Program> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Program::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, report: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn print_json(report: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(report).expect("reports serialize")
    );
}

/// Wraps a simulator report with its input path and decided class.
fn report_value(input: &Path, report: &SimReport) -> Value {
    let mut value = serde_json::to_value(report).expect("reports serialize");
    let map = value
        .as_object_mut()
        .expect("a report serializes to an object");
    map.insert("input".into(), json!(input.display().to_string()));
    map.insert("argmax".into(), json!(report.argmax()));
    value
}

fn print_human_report(input: &Path, report: &SimReport) {
    println!("input          {}", input.display());
    println!("class          {}", report.argmax());
    println!("cycles         {}", report.cycles);
    println!("latency_ms     {:.6}", report.latency_ms);
    println!(
        "cell activity  {} / {} ({:.1}%)",
        report.cell_cycles_active,
        report.cell_cycles_total,
        100.0 * report.energy_proxy
    );
    let mut ranked: Vec<(usize, i32)> = report.logits.iter().copied().enumerate().collect();
    ranked.sort_by_key(|&(i, v)| (std::cmp::Reverse(v), i));
    let top: Vec<String> = ranked
        .iter()
        .take(5)
        .map(|(i, v)| format!("{i}: {v}"))
        .collect();
    println!(
        "top logits     {}  (sum over {} positions)",
        top.join(", "),
        report.logit_scale
    );
}

fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let render = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let headers: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    println!("{}", render(&headers));
    for row in rows {
        println!("{}", render(row));
    }
}

fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv => "conv",
        LayerKind::Fc => "fc",
    }
}

/// Highest logit, ties to the lowest class index (the simulator's rule).
fn argmax_i64(v: &[i64]) -> usize {
    v.iter()
        .enumerate()
        .max_by_key(|&(i, &v)| (v, std::cmp::Reverse(i)))
        .map_or(0, |(i, _)| i)
}

fn validate_clock(mhz: f64) -> Result<()> {
    if !(mhz.is_finite() && mhz > 0.0) {
        bail!("--clock-mhz must be a positive finite number, got {mhz}");
    }
    Ok(())
}
