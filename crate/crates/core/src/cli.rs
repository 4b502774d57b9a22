//! Command-line front end: `run`, `sweep` and `validate`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

use crate::engine::{self, resolve_seed, RunOutput};
use crate::scenario::{bundled, set_path, sweep_value, Scenario, ValidationReport};
use crate::trace::{write_storage, write_trace, TraceFormat};

pub const OUT_DIR_ENV: &str = "SLIPT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "slipt-out";

#[derive(Debug, Parser)]
#[command(name = "slipt", version, about = "Simulate optical power-and-data links to underwater sensor nodes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one scenario and write its trace, summary and storage dumps.
    Run(RunArgs),
    /// Run a scenario once per value of one parameter.
    Sweep(SweepArgs),
    /// Check a scenario and list every problem found.
    Validate(Source),
}

#[derive(Debug, Args)]
struct Source {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; overrides the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Output {
    /// Output directory [default: $SLIPT_OUT_DIR or ./slipt-out]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: TraceFormat,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    output: Output,
    /// Stop after validation.
    #[arg(long)]
    validate_only: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    output: Output,
    /// Dotted path of the parameter to vary, e.g. `policy.alpha` or `seed`.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long)]
    validate_only: bool,
}

fn parse_format(s: &str) -> Result<TraceFormat, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(ValidationReport),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Cmd::Run(a) => run_cmd(a),
        Cmd::Sweep(a) => sweep_cmd(a),
        Cmd::Validate(s) => validate_cmd(s),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Invalid(r) => {
                    eprintln!("error: scenario is invalid");
                    for v in &r.violations {
                        eprintln!("  {v}");
                    }
                }
            }
            f.code()
        }
    }
}

fn read_source(path: &Path) -> Result<String, Failure> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(text),
        Err(e) => match path.to_str().and_then(bundled) {
            Some(text) if !path.exists() => Ok(text.to_string()),
            _ => Err(Failure::Usage(format!("cannot read scenario `{}`: {e}", path.display()))),
        },
    }
}

fn load(source: &Source) -> Result<(Value, Scenario, u64), Failure> {
    let text = read_source(&source.scenario)?;
    let value = Scenario::parse_value(&text).map_err(Failure::Invalid)?;
    let resolved = Scenario::from_value(&value);
    let seed = match &resolved {
        Ok(s) => resolve_seed(s, source.seed),
        Err(_) => Ok(0),
    };
    match (resolved, seed) {
        (Ok(s), Ok(seed)) => Ok((value, s, seed)),
        (Err(mut r), _) | (Ok(_), Err(mut r)) => {
            r.violations.sort();
            Err(Failure::Invalid(r))
        }
    }
}

fn out_dir(output: &Output) -> PathBuf {
    output
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Writes via a sibling temporary file and a rename, so readers never see
/// a partial file.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut fs::File) -> std::io::Result<()>) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("cannot write `{}`: {e}", path.display()));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.partial"));
    let mut file = fs::File::create(&tmp).map_err(io)?;
    fill(&mut file).map_err(io)?;
    file.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn write_outputs(dir: &Path, out: &RunOutput, format: TraceFormat) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create `{}`: {e}", dir.display())))?;
    write_atomic(&dir.join(format!("trace.{}", format.extension())), |f| write_trace(&out.trace, format, f))?;
    write_atomic(&dir.join("summary.json"), |f| {
        f.write_all(out.metrics.to_json().as_bytes())?;
        f.write_all(b"\n")
    })?;
    for (node, records) in &out.storage {
        write_atomic(&dir.join(format!("storage_{node}.csv")), |f| write_storage(records, f))?;
    }
    Ok(())
}

fn simulate(scenario: &Scenario, seed: u64) -> Result<RunOutput, Failure> {
    engine::run(scenario, seed).map_err(|e| Failure::Runtime(e.to_string()))
}

fn validate_cmd(source: Source) -> Result<(), Failure> {
    let (_, scenario, _) = load(&source)?;
    println!("ok: {} (sha256 {})", source.scenario.display(), scenario.hash);
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), Failure> {
    let (_, scenario, seed) = load(&args.source)?;
    if args.validate_only {
        println!("ok: {} (sha256 {})", args.source.scenario.display(), scenario.hash);
        return Ok(());
    }
    let out = simulate(&scenario, seed)?;
    let dir = out_dir(&args.output);
    write_outputs(&dir, &out, args.output.format)?;
    for (id, m) in &out.metrics.nodes {
        let first_full = m.charge_completions_s.first().map_or("never".to_string(), |t| format!("{:.1} min", t / 60.0));
        println!(
            "{id}: harvested {:.3} J, consumed {:.3} J, decoded {:.0} bits, first full {first_full}",
            m.harvested_j, m.consumed_j, m.decoded_bits
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

struct Cell {
    label: String,
    scenario: Scenario,
    seed: u64,
}

fn sweep_cmd(args: SweepArgs) -> Result<(), Failure> {
    let text = read_source(&args.source.scenario)?;
    let base = Scenario::parse_value(&text).map_err(Failure::Invalid)?;
    let seed_sweep = args.param == "seed";
    if seed_sweep && args.source.seed.is_some() {
        return Err(Failure::Usage("--seed conflicts with sweeping over `seed`".into()));
    }

    let mut cells = Vec::new();
    let mut report = ValidationReport::default();
    for raw in &args.values {
        let label = raw.trim().to_string();
        let mut value = base.clone();
        let new = sweep_value(&label);
        if let Err(e) = set_path(&mut value, &args.param, new) {
            return Err(Failure::Usage(e));
        }
        let resolved = Scenario::from_value(&value).and_then(|s| {
            let seed = resolve_seed(&s, args.source.seed)?;
            Ok((s, seed))
        });
        match resolved {
            Ok((scenario, seed)) => cells.push(Cell { label, scenario, seed }),
            Err(r) => {
                for v in r.violations {
                    report.push(format!("[{}={label}] {}", args.param, v.path), v.message);
                }
            }
        }
    }
    if !report.is_empty() {
        return Err(Failure::Invalid(report));
    }
    if args.validate_only {
        println!("ok: {} sweep cells", cells.len());
        return Ok(());
    }

    let dir = out_dir(&args.output);
    let format = args.output.format;
    let rows: Vec<(String, f64, f64, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let out = simulate(&cell.scenario, cell.seed)?;
            write_outputs(&dir.join(format!("cell_{i:03}")), &out, format)?;
            let nodes = out.metrics.nodes.values();
            let harvested = nodes.clone().map(|m| m.harvested_j).sum();
            let bits = nodes.clone().map(|m| m.decoded_bits).sum();
            let consumed = nodes.map(|m| m.consumed_j).sum();
            Ok((cell.label.clone(), harvested, bits, consumed))
        })
        .collect::<Result<_, Failure>>()?;

    write_atomic(&dir.join("sweep.csv"), |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record([args.param.as_str(), "harvested_j", "decoded_bits", "consumed_j"])?;
        for (label, h, b, c) in &rows {
            w.write_record([label.clone(), h.to_string(), b.to_string(), c.to_string()])?;
        }
        w.flush()
    })?;
    println!("wrote {} cells and {}", rows.len(), dir.join("sweep.csv").display());
    Ok(())
}
