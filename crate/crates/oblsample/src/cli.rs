//! Command-line front end.
//!
//! Exit codes: 0 success, 1 exact-property failure, 2 statistical failure,
//! 3 configuration error, 4 any other error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use oblsample_core::accounting::{epoch_budget, PrivacyBudget, SamplingKind, SamplingSpec};
use oblsample_core::memory::{ExternalMemory, Phase, Region};
use oblsample_core::prp::Permutation;
use oblsample_core::sampling::{
    samples_poisson, samples_swo, PoissonSecrets, SampleSizes, ScanOptions, SwoSecrets,
};
use oblsample_core::seed::{derive, Seed};
use oblsample_core::shuffle::{oblivious_shuffle, ShuffleConfig, DEFAULT_PADDING};
use rand_core::{OsRng, TryRngCore};
use serde_json::json;

use crate::audit::{self, Algorithm, AuditReport, RunConfig, SeedPolicy};
use crate::data;
use crate::error::{Error, Result};
use crate::format::{self, BoundaryFile, CiphertextFile, Dataset, PoissonManifest, SwoManifest};

#[derive(Debug, Parser)]
#[command(
    name = "oblsample",
    version,
    about = "Oblivious sampling over a simulated enclave"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset file.
    GenData(GenData),
    /// Obliviously shuffle a dataset and report the access cost.
    Shuffle(ShuffleCmd),
    /// Draw samples without replacement.
    Swo(SwoCmd),
    /// Draw Poisson samples.
    Poisson(PoissonCmd),
    /// Privacy budget of a sampled mechanism.
    Budget(BudgetCmd),
    /// Audit obliviousness and output distributions.
    Audit {
        #[command(subcommand)]
        kind: AuditKind,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed as hex; drawn from the OS when absent.
    #[arg(long)]
    seed: Option<String>,
    /// Write the external access trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print a machine-readable report.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 8)]
    record_size: usize,
    /// Store keys in random order.
    #[arg(long)]
    scatter_keys: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Debug, Args)]
struct ShuffleCmd {
    /// Dataset file; a synthetic dataset of `--n` elements is used otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 2)]
    c: u32,
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    padding: f64,
    /// Write the shuffled ciphertexts here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SwoCmd {
    #[arg(long)]
    input: PathBuf,
    /// Sample size; must divide n.
    #[arg(long, conflicts_with = "sizes", required_unless_present = "sizes")]
    m: Option<u64>,
    /// Comma-separated sample sizes summing to n.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<u64>>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    padding: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct PoissonCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    padding: f64,
    /// Also write the secret sample boundaries (testing only).
    #[arg(long)]
    unsafe_reveal_boundaries: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mechanism {
    Shuffle,
    Swo,
    Poisson,
}

#[derive(Debug, Args)]
struct BudgetCmd {
    #[arg(long, value_enum)]
    mechanism: Mechanism,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Samples per epoch.
    #[arg(long = "T", default_value_t = 1)]
    t: u64,
    /// Epochs.
    #[arg(long = "E", default_value_t = 1)]
    e: u64,
    #[arg(long, default_value_t = 1e-6)]
    delta2: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Swo,
    Poisson,
    Shuffle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    FixedData,
    VariedData,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long, value_enum, default_value = "swo")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 1024)]
    n: u64,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    c: u32,
    #[arg(long, default_value_t = DEFAULT_PADDING)]
    padding: f64,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, value_enum, default_value = "varied-data")]
    policy: PolicyArg,
    /// Run the scan without its final dummy read (a deliberately broken
    /// variant; the trace audit must catch it).
    #[arg(long)]
    skip_terminal_read: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum AuditKind {
    /// Byte equality of traces across runs.
    Trace(AuditArgs),
    /// Checks on revealed sample ids and positions.
    Reveal(AuditArgs),
    /// Distribution of the opened samples.
    Dist(AuditArgs),
    /// Trace length per element across dataset sizes.
    Cost {
        #[command(flatten)]
        args: AuditArgs,
        /// Comma-separated dataset sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [4096u64, 16384, 65536])]
        sizes: Vec<u64>,
    },
}

/// Parses a hex seed; 32-byte seeds are used as is, others are hashed.
pub fn parse_seed(hex_seed: &str) -> Result<Seed> {
    let bytes =
        hex::decode(hex_seed.trim()).map_err(|e| Error::Config(format!("seed is not hex: {e}")))?;
    match <Seed>::try_from(bytes.as_slice()) {
        Ok(s) => Ok(s),
        Err(_) if !bytes.is_empty() => Ok(derive(&bytes, "cli-seed", 0)),
        Err(_) => Err(Error::Config("seed is empty".into())),
    }
}

fn seed_or_random(seed: &Option<String>) -> Result<Seed> {
    match seed {
        Some(s) => parse_seed(s),
        None => {
            let mut s = [0u8; 32];
            OsRng
                .try_fill_bytes(&mut s)
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
            Ok(s)
        }
    }
}

/// Formats `x` with `digits` significant digits.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit, e.g. 9.999995 -> 10.00000
    if s.trim_start_matches('-')
        .replace('.', "")
        .trim_start_matches('0')
        .len()
        > digits
        && decimals > 0
    {
        return format!("{:.*}", decimals - 1, x);
    }
    s
}

fn write_trace_file(path: &Option<PathBuf>, mem: &ExternalMemory) -> Result<()> {
    if let Some(p) = path {
        format::write_trace(mem.trace().records(), BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_from(BufReader::new(File::open(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn gen_data(cmd: GenData) -> Result<i32> {
    let seed = seed_or_random(&cmd.seed)?;
    let d = data::synthetic(
        cmd.n,
        cmd.record_size,
        derive(&seed, "gen-data", 0),
        cmd.scatter_keys,
    )?;
    d.write_to(BufWriter::new(File::create(&cmd.out)?))?;
    println!(
        "wrote {} elements of {} bytes to {}",
        d.len(),
        d.record_size,
        cmd.out.display()
    );
    Ok(0)
}

fn shuffle(cmd: ShuffleCmd) -> Result<i32> {
    let seed = seed_or_random(&cmd.common.seed)?;
    let dataset = match (&cmd.input, cmd.n) {
        (Some(p), _) => read_dataset(p)?,
        (None, Some(n)) => data::synthetic(n, 8, derive(&seed, "shuffle-data", 0), false)?,
        (None, None) => return Err(Error::Config("give --input or --n".into())),
    };
    if let (Some(n), true) = (cmd.n, cmd.input.is_some()) {
        if n != dataset.len() as u64 {
            return Err(Error::Config(format!(
                "--n {n} does not match the dataset's {}",
                dataset.len()
            )));
        }
    }
    let n = dataset.len();
    let cfg = ShuffleConfig::new(n)
        .with_passes(cmd.c)
        .with_padding(cmd.padding);
    cfg.validate()?;
    let (mut enclave, mut mem) = data::load(&dataset, derive(&seed, "enclave", 0), &cfg)?;
    let pi = Permutation::keyed(&derive(&seed, "shuffle", 0), n as u64)?;
    mem.begin_phase(Phase::Shuffle);
    let report = oblivious_shuffle(&mut enclave, &mut mem, Region::Dataset, &pi, &cfg)?;
    write_trace_file(&cmd.common.trace, &mem)?;
    if let Some(out) = &cmd.out {
        let records = mem
            .contents(Region::Dataset)
            .iter()
            .map(|s| {
                s.as_ref()
                    .expect("shuffle fills every slot")
                    .parts()
                    .to_vec()
            })
            .collect();
        CiphertextFile { records }.write_to(BufWriter::new(File::create(out)?))?;
    }
    let layout = cfg.layout();
    if cmd.common.json {
        println!(
            "{}",
            json!({
                "n": n,
                "attempts": report.attempts,
                "accesses": report.accesses,
                "predicted": cfg.access_cost(),
                "buckets": layout.buckets,
                "cell": layout.cell,
                "private_peak": enclave.private.peak(),
            })
        );
    } else {
        println!(
            "n = {n}, buckets = {}, cell = {}",
            layout.buckets, layout.cell
        );
        println!(
            "attempts = {}, accesses = {} (retry-free prediction {})",
            report.attempts,
            report.accesses,
            cfg.access_cost()
        );
        println!(
            "private peak = {} of {}",
            enclave.private.peak(),
            enclave.private.capacity()
        );
    }
    Ok(0)
}

fn swo(cmd: SwoCmd) -> Result<i32> {
    let seed = seed_or_random(&cmd.common.seed)?;
    let dataset = read_dataset(&cmd.input)?;
    let n = dataset.len() as u64;
    let sizes = match (cmd.m, cmd.sizes) {
        (Some(m), _) => SampleSizes::Fixed(m),
        (None, Some(s)) => SampleSizes::Variable(s),
        (None, None) => return Err(Error::Config("give --m or --sizes".into())),
    };
    let cfg = ShuffleConfig::new(n as usize).with_padding(cmd.padding);
    let secrets = SwoSecrets::derive(n, &sizes, &derive(&seed, "swo", 0))?;
    let (mut enclave, mut mem) = data::load(&dataset, derive(&seed, "enclave", 0), &cfg)?;
    let run = samples_swo(&mut enclave, &mut mem, &secrets, &cfg)?;
    write_trace_file(&cmd.common.trace, &mem)?;

    fs::create_dir_all(&cmd.out)?;
    let mut files = Vec::new();
    for (i, s) in run.output.samples.iter().enumerate() {
        let name = format!("sample_{:04}.oblc", i + 1);
        let records = s.iter().map(|c| vec![c.clone()]).collect();
        CiphertextFile { records }.write_to(BufWriter::new(File::create(cmd.out.join(&name))?))?;
        files.push(name);
    }
    let manifest = SwoManifest {
        algorithm: "swo".into(),
        n,
        m: cmd.m,
        sizes: run.output.samples.iter().map(|s| s.len() as u64).collect(),
        k: files.len(),
        record_size: dataset.record_size,
        files,
    };
    write_json(&cmd.out.join("manifest.json"), &manifest)?;
    if cmd.common.json {
        println!("{}", serde_json::to_string(&manifest)?);
    } else {
        println!(
            "wrote {} samples to {} (shuffle attempts {}, {})",
            manifest.k,
            cmd.out.display(),
            run.shuffles[0].attempts,
            run.shuffles[1].attempts
        );
    }
    Ok(0)
}

fn poisson(cmd: PoissonCmd) -> Result<i32> {
    let seed = seed_or_random(&cmd.common.seed)?;
    let dataset = read_dataset(&cmd.input)?;
    let n = dataset.len() as u64;
    let cfg = ShuffleConfig::new(n as usize).with_padding(cmd.padding);
    let secrets = PoissonSecrets::derive(n, cmd.gamma, cmd.k, &derive(&seed, "poisson", 0))?;
    let (mut enclave, mut mem) = data::load(&dataset, derive(&seed, "enclave", 0), &cfg)?;
    let run = samples_poisson(&mut enclave, &mut mem, &secrets, &cfg)?;
    write_trace_file(&cmd.common.trace, &mem)?;

    fs::create_dir_all(&cmd.out)?;
    let file = "samples.oblc".to_owned();
    let records = run
        .output
        .entries
        .iter()
        .map(|e| vec![e.element.clone(), e.sample_id.clone()])
        .collect();
    CiphertextFile { records }.write_to(BufWriter::new(File::create(cmd.out.join(&file))?))?;
    let manifest = PoissonManifest {
        algorithm: "poisson".into(),
        n,
        gamma: cmd.gamma,
        k: cmd.k,
        record_size: dataset.record_size,
        file,
    };
    write_json(&cmd.out.join("manifest.json"), &manifest)?;
    if cmd.unsafe_reveal_boundaries {
        let b = &run.boundaries;
        let boundaries = BoundaryFile {
            samples: b.samples,
            sizes: b.sizes.clone(),
            real: b.real,
        };
        write_json(&cmd.out.join("boundaries.json"), &boundaries)?;
        eprintln!("warning: sample boundaries written in the clear; use for testing only");
    }
    if cmd.common.json {
        println!("{}", serde_json::to_string(&manifest)?);
    } else {
        println!("wrote {n} entries to {}", cmd.out.display());
    }
    Ok(0)
}

fn budget(cmd: BudgetCmd) -> Result<i32> {
    let need = |v: Option<u64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("--{name} is required")))
    };
    let kind = match cmd.mechanism {
        Mechanism::Poisson => match (cmd.gamma, cmd.m, cmd.n) {
            (Some(gamma), _, _) => SamplingKind::Poisson { gamma },
            (None, Some(m), Some(n)) if n > 0 => SamplingKind::Poisson {
                gamma: m as f64 / n as f64,
            },
            _ => {
                return Err(Error::Config(
                    "poisson needs --gamma or --m with --n".into(),
                ))
            }
        },
        Mechanism::Swo => SamplingKind::Swo {
            m: need(cmd.m, "m")?,
            n: need(cmd.n, "n")?,
        },
        Mechanism::Shuffle => SamplingKind::Shuffle {
            m: need(cmd.m, "m")?,
            n: need(cmd.n, "n")?,
        },
    };
    let spec = SamplingSpec {
        kind,
        t: cmd.t,
        epochs: cmd.e,
        delta_slack: cmd.delta2,
    };
    let b = epoch_budget(&spec, PrivacyBudget::new(cmd.eps, cmd.delta)?)?;
    if cmd.json {
        println!(
            "{}",
            json!({
                "step_epsilon": b.step.epsilon,
                "step_delta": b.step.delta,
                "epsilon": b.total.epsilon,
                "delta": b.total.delta,
            })
        );
    } else {
        println!("amplified epsilon: {}", significant(b.step.epsilon, 6));
        println!("amplified delta:   {}", significant(b.step.delta, 6));
        println!("total epsilon:     {}", significant(b.total.epsilon, 6));
        println!("total delta:       {}", significant(b.total.delta, 6));
    }
    Ok(0)
}

fn run_config(a: &AuditArgs) -> Result<RunConfig> {
    let algorithm = match a.algorithm {
        AlgorithmArg::Swo => Algorithm::Swo(SampleSizes::Fixed(
            a.m.ok_or_else(|| Error::Config("--m is required for swo".into()))?,
        )),
        AlgorithmArg::Poisson => Algorithm::Poisson {
            gamma: a
                .gamma
                .ok_or_else(|| Error::Config("--gamma is required for poisson".into()))?,
            k: a.k
                .ok_or_else(|| Error::Config("--k is required for poisson".into()))?,
        },
        AlgorithmArg::Shuffle => Algorithm::Shuffle,
    };
    let seed = match &a.seed {
        Some(s) => parse_seed(s)?,
        None => [0; 32],
    };
    Ok(RunConfig {
        c: a.c,
        padding: a.padding,
        policy: match a.policy {
            PolicyArg::FixedData => SeedPolicy::FixedData,
            PolicyArg::VariedData => SeedPolicy::VariedData,
        },
        scan: ScanOptions {
            terminal_read: !a.skip_terminal_read,
        },
        ..RunConfig::new(algorithm, a.n)
            .with_runs(a.runs)
            .with_seed(seed)
    })
}

fn print_report(r: &AuditReport, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(r)?);
        return Ok(());
    }
    println!("runs: {}", r.runs);
    println!("trace_equal: {}", r.trace_equal);
    if let Some(d) = &r.first_divergence {
        println!(
            "first divergence: run {} record {}: expected {:?}, found {:?}",
            d.run, d.index, d.expected, d.found
        );
    }
    for t in &r.tests {
        let p = t.p.map(|p| format!(" p={p:.4}")).unwrap_or_default();
        println!(
            "{} {}: statistic={:.6}{p}",
            if t.pass { "PASS" } else { "FAIL" },
            t.name,
            t.statistic
        );
    }
    for (region, count) in &r.access_counts {
        println!("accesses {region}: {count}");
    }
    Ok(())
}

fn audit(kind: AuditKind) -> Result<i32> {
    let (report, json) = match kind {
        AuditKind::Trace(a) => (audit::audit_trace_invariance(&run_config(&a)?)?, a.json),
        AuditKind::Reveal(a) => (audit::audit_revealed_values(&run_config(&a)?)?, a.json),
        AuditKind::Dist(a) => (audit::audit_distribution(&run_config(&a)?)?, a.json),
        AuditKind::Cost { args, sizes } => {
            (audit::audit_cost(&run_config(&args)?, &sizes)?, args.json)
        }
    };
    print_report(&report, json)?;
    Ok(report.exit_code())
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Shuffle(c) => shuffle(c),
        Command::Swo(c) => swo(c),
        Command::Poisson(c) => poisson(c),
        Command::Budget(c) => budget(c),
        Command::Audit { kind } => audit(kind),
    }
}

/// Parses the process arguments, runs and maps errors to exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                3
            } else {
                4
            }
        }
    }
}
