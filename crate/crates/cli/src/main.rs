//! `mlp-bench`: runs the multilevel Picard benchmark tables.
//!
//! Every option can also be given in a TOML config file (`--config`) using
//! the flag name as key; flags on the command line win.

use std::collections::BTreeMap;
use std::num::NonZeroU32;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use mlp_core::harness::{emit_csv, emit_plot, render_table, run_experiment_cells, ExperimentSpec, ReferenceMode};
use mlp_core::{ExampleName, FixtureTable, TruncationRadius};

#[derive(Debug, Parser)]
#[command(name = "mlp-bench", version, about = "Multilevel Picard benchmark runner")]
struct Args {
    /// TOML file with defaults for any of the options below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// allen-cahn | sine-gordon | heat-system | semilinear-bs
    #[arg(long)]
    example: Option<String>,
    /// Spatial dimensions, e.g. `10,100`.
    #[arg(long)]
    d: Option<String>,
    /// Iteration indices (M = n), e.g. `1..6` or `1,2,5`.
    #[arg(long)]
    n: Option<String>,
    /// Independent realizations per cell.
    #[arg(long)]
    runs: Option<String>,
    /// paper-ds | paper-mlp | self:N[:RUNS]
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    csv: Option<String>,
    /// SVG output; plot data is written next to it with a `.dat` extension.
    #[arg(long)]
    plot: Option<String>,
    /// Reference-value fixture file (defaults to the bundled table).
    #[arg(long)]
    fixtures: Option<String>,
    /// Evaluation time override.
    #[arg(long)]
    t: Option<String>,
    /// Truncation radius override (`inf` for none).
    #[arg(long)]
    r: Option<String>,
    /// Replace the exact flow by Euler-Maruyama with this many steps per horizon.
    #[arg(long = "em-steps")]
    em_steps: Option<String>,
    /// Leave the runtime column empty (makes the CSV fully reproducible).
    #[arg(long = "no-timing")]
    no_timing: bool,
    /// Do not print the results table.
    #[arg(long)]
    quiet: bool,
}

const KEYS: [&str; 14] = [
    "example", "d", "n", "runs", "reference", "seed", "workers", "csv", "plot", "fixtures", "t", "r", "em-steps",
    "no-timing",
];

fn config_values(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (key, value) in table {
        let key = key.replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            bail!("unknown config key `{key}`");
        }
        let text = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => bail!("unsupported value for `{key}`: {other}"),
        };
        out.insert(key, text);
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} `{p}`: {e}")))
        .collect()
}

/// `a..b` (inclusive), `a..=b`, or a comma-separated list.
fn parse_n(s: &str) -> Result<Vec<u32>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.trim_start_matches('=');
        let lo: u32 = lo.trim().parse().with_context(|| format!("bad range start in `{s}`"))?;
        let hi: u32 = hi.trim().parse().with_context(|| format!("bad range end in `{s}`"))?;
        if hi < lo {
            bail!("empty range `{s}`");
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(s, "n")
}

struct Settings {
    spec: ExperimentSpec,
    csv: Option<PathBuf>,
    plot: Option<PathBuf>,
    fixtures: Option<PathBuf>,
}

fn settings(args: &Args) -> Result<Settings> {
    let mut values = match &args.config {
        Some(path) => config_values(path)?,
        None => BTreeMap::new(),
    };
    let flags = [
        ("example", &args.example),
        ("d", &args.d),
        ("n", &args.n),
        ("runs", &args.runs),
        ("reference", &args.reference),
        ("seed", &args.seed),
        ("workers", &args.workers),
        ("csv", &args.csv),
        ("plot", &args.plot),
        ("fixtures", &args.fixtures),
        ("t", &args.t),
        ("r", &args.r),
        ("em-steps", &args.em_steps),
    ];
    for (key, v) in flags {
        if let Some(v) = v {
            values.insert(key.to_string(), v.clone());
        }
    }
    if args.no_timing {
        values.insert("no-timing".into(), "true".into());
    }
    let get = |k: &str| values.get(k).map(String::as_str);

    let example: ExampleName = get("example").context("--example is required")?.parse()?;
    let dims = parse_list::<usize>(get("d").unwrap_or("10"), "d")?;
    let ns = parse_n(get("n").unwrap_or("1..5"))?;
    let mut spec = ExperimentSpec::new(example, dims, ns);
    if let Some(v) = get("runs") {
        spec.runs = v.parse().context("bad --runs")?;
    }
    if let Some(v) = get("reference") {
        spec.reference = v.parse::<ReferenceMode>()?;
    }
    if let Some(v) = get("seed") {
        spec.seed = v.parse().context("bad --seed (expected a decimal 64-bit integer)")?;
    }
    spec.workers = match get("workers") {
        Some(v) => v.parse().context("bad --workers")?,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if let Some(v) = get("t") {
        spec.t = Some(v.parse().context("bad --t")?);
    }
    if let Some(v) = get("r") {
        spec.r = Some(v.parse::<TruncationRadius>()?);
    }
    if let Some(v) = get("em-steps") {
        let steps: u32 = v.parse().context("bad --em-steps")?;
        spec.em_steps = Some(NonZeroU32::new(steps).context("--em-steps must be positive")?);
    }
    if let Some(v) = get("no-timing") {
        spec.timing = !v.parse::<bool>().context("bad no-timing value")?;
    }
    spec.validate()?;
    Ok(Settings {
        spec,
        csv: get("csv").map(PathBuf::from),
        plot: get("plot").map(PathBuf::from),
        fixtures: get("fixtures").map(PathBuf::from),
    })
}

fn run(args: Args) -> Result<bool> {
    let s = settings(&args)?;
    let fixtures = match &s.fixtures {
        Some(path) => FixtureTable::load(path)?,
        None => FixtureTable::builtin(),
    };
    let outcome = run_experiment_cells(&s.spec, &fixtures)?;
    for f in &outcome.failures {
        eprintln!("cell d={} n={} failed (run {}): {}", f.d, f.n, f.run, f.error);
    }
    if !args.quiet && !outcome.rows.is_empty() {
        println!(
            "{} | runs per cell: {} | seed: {} | workers: {}",
            s.spec.example, s.spec.runs, s.spec.seed, s.spec.workers
        );
        print!("{}", render_table(&outcome.rows));
    }
    if !outcome.rows.is_empty() {
        if let Some(path) = &s.csv {
            emit_csv(&outcome.rows, path)?;
        }
        if let Some(path) = &s.plot {
            emit_plot(&outcome.rows, path)?;
        }
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
