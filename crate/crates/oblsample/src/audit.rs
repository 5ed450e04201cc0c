//! Obliviousness audits.
//!
//! Every audit executes independent runs of one algorithm, each with fresh
//! secrets (and fresh data under [`SeedPolicy::VariedData`]), all derived
//! from the configuration's master seed so that a report is reproducible.
//! Runs execute in parallel; each owns its memory instance.
//!
//! Traces are compared byte-for-byte over the shuffle and replication
//! phases, grouped by the shuffles' retry counts. The reveal phase is
//! excluded from byte equality; its revealed values are tested separately.

use std::collections::{BTreeMap, HashMap};

use oblsample_core::memory::{write_canonical, AccessTrace, Phase, Record, Region};
use oblsample_core::prp::Permutation;
use oblsample_core::sampling::{
    open_poisson, open_swo, samples_poisson_with, samples_swo_with, PoissonSecrets, SampleSizes,
    ScanOptions, SwoSecrets,
};
use oblsample_core::seed::{derive, Seed};
use oblsample_core::shuffle::{oblivious_shuffle, ShuffleConfig, DEFAULT_PADDING};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::stats;

/// Significance level of every chi-square test.
pub const ALPHA: f64 = 0.001;
/// Tolerance, in standard errors, of the marginal-frequency tests.
pub const Z_TOLERANCE: f64 = 4.0;
/// Allowed relative spread of the trace-length/n ratio.
pub const COST_RATIO_TOLERANCE: f64 = 0.15;
/// Largest tolerated fraction of shuffles that needed a retry.
pub const MAX_RETRY_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Swo(SampleSizes),
    Poisson { gamma: f64, k: usize },
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// One dataset, fresh secrets per run.
    FixedData,
    /// Fresh dataset and secrets per run.
    VariedData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub n: u64,
    pub record_size: usize,
    pub c: u32,
    pub padding: f64,
    pub policy: SeedPolicy,
    pub runs: usize,
    pub seed: Seed,
    pub scan: ScanOptions,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, n: u64) -> Self {
        RunConfig {
            algorithm,
            n,
            record_size: 8,
            c: 2,
            padding: DEFAULT_PADDING,
            policy: SeedPolicy::VariedData,
            runs: 50,
            seed: [0; 32],
            scan: ScanOptions::default(),
        }
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_policy(mut self, policy: SeedPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_scan(mut self, scan: ScanOptions) -> Self {
        self.scan = scan;
        self
    }

    pub fn shuffle_config(&self) -> ShuffleConfig {
        ShuffleConfig::new(self.n as usize)
            .with_passes(self.c)
            .with_padding(self.padding)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        self.shuffle_config().validate()?;
        match &self.algorithm {
            Algorithm::Swo(SampleSizes::Fixed(m)) if *m == 0 || !self.n.is_multiple_of(*m) => {
                Err(Error::Config(format!("m = {m} must divide n = {}", self.n)))
            }
            Algorithm::Poisson { gamma, k } if !(*gamma > 0.0 && *gamma < 1.0) || *k == 0 => {
                Err(Error::Config(format!(
                    "need 0 < γ < 1 and k ≥ 1, got γ = {gamma}, k = {k}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn audited_phases(&self) -> &'static [Phase] {
        match self.algorithm {
            Algorithm::Shuffle => &[Phase::Shuffle],
            _ => &[
                Phase::FirstShuffle,
                Phase::Replication,
                Phase::SecondShuffle,
            ],
        }
    }
}

/// Everything one run exposes to the audits.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Retry count of each shuffle, in execution order.
    pub retries: Vec<u32>,
    pub trace: AccessTrace,
    /// Revealed sample ids (SWO) or positions (Poisson); empty for a shuffle.
    pub revealed: Vec<u64>,
    /// Opened output keys: one list per sample, or the shuffled order.
    pub samples: Vec<Vec<u64>>,
    /// The dataset's keys in input order.
    pub input: Vec<u64>,
}

/// Executes run `run` of `cfg`.
pub fn execute(cfg: &RunConfig, run: u64) -> Result<RunOutcome> {
    cfg.validate()?;
    let data_index = match cfg.policy {
        SeedPolicy::FixedData => 0,
        SeedPolicy::VariedData => run,
    };
    let dataset = data::synthetic(
        cfg.n,
        cfg.record_size,
        derive(&cfg.seed, "audit-data", data_index),
        cfg.policy == SeedPolicy::VariedData,
    )?;
    let shuffle_cfg = cfg.shuffle_config();
    let (mut enclave, mut mem) = data::load(
        &dataset,
        derive(&cfg.seed, "audit-enclave", run),
        &shuffle_cfg,
    )?;
    let secrets = derive(&cfg.seed, "audit-secrets", run);
    let input = dataset.elements.iter().map(|e| e.key).collect();

    let keys =
        |v: Vec<oblsample_core::memory::Element>| v.into_iter().map(|e| e.key).collect::<Vec<_>>();
    let (retries, revealed, samples) = match &cfg.algorithm {
        Algorithm::Swo(sizes) => {
            let s = SwoSecrets::derive(cfg.n, sizes, &secrets)?;
            let out = samples_swo_with(&mut enclave, &mut mem, &s, &shuffle_cfg, cfg.scan)?;
            let opened = open_swo(&enclave.vault, &out.output)?;
            (
                out.shuffles.iter().map(|r| r.retries()).collect(),
                out.revealed_ids,
                opened.into_iter().map(keys).collect(),
            )
        }
        Algorithm::Poisson { gamma, k } => {
            let s = PoissonSecrets::derive(cfg.n, *gamma, *k, &secrets)?;
            let out = samples_poisson_with(&mut enclave, &mut mem, &s, &shuffle_cfg, cfg.scan)?;
            let opened = open_poisson(&enclave.vault, &out.output, &out.boundaries)?;
            (
                out.shuffles.iter().map(|r| r.retries()).collect(),
                out.revealed_positions,
                opened.into_iter().map(keys).collect(),
            )
        }
        Algorithm::Shuffle => {
            let pi = Permutation::keyed(&secrets, cfg.n)?;
            mem.begin_phase(Phase::Shuffle);
            let report =
                oblivious_shuffle(&mut enclave, &mut mem, Region::Dataset, &pi, &shuffle_cfg)?;
            let order = mem
                .contents(Region::Dataset)
                .iter()
                .map(|slot| {
                    let slot = slot
                        .as_ref()
                        .ok_or_else(|| Error::Format("empty slot after shuffle".into()))?;
                    match enclave.vault.decrypt(&slot.parts()[0])? {
                        Record::Real(e) => Ok(e.key),
                        Record::Dummy => Err(Error::Format("dummy in shuffle output".into())),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (vec![report.retries()], Vec::new(), vec![order])
        }
    };
    Ok(RunOutcome {
        retries,
        trace: mem.take_trace(),
        revealed,
        samples,
        input,
    })
}

/// First position where two runs' audited traces differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub run: usize,
    /// Zero-based record index within the audited phases.
    pub index: usize,
    /// Record of the reference run (absent if its trace ended).
    pub expected: Option<String>,
    /// Record of the diverging run (absent if its trace ended).
    pub found: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestKind {
    /// Must hold on every run; a violation is a hard failure.
    #[default]
    Exact,
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p: Option<f64>,
    pub pass: bool,
    #[serde(skip)]
    pub kind: TestKind,
}

impl TestResult {
    fn exact(name: impl Into<String>, violations: usize) -> Self {
        TestResult {
            name: name.into(),
            statistic: violations as f64,
            p: None,
            pass: violations == 0,
            kind: TestKind::Exact,
        }
    }

    fn chi_square(name: impl Into<String>, (statistic, p): (f64, f64)) -> Self {
        TestResult {
            name: name.into(),
            statistic,
            p: Some(p),
            pass: p > ALPHA,
            kind: TestKind::Statistical,
        }
    }

    fn z_bound(name: impl Into<String>, (z, p): (f64, f64)) -> Self {
        TestResult {
            name: name.into(),
            statistic: z,
            p: Some(p),
            pass: z <= Z_TOLERANCE,
            kind: TestKind::Statistical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub runs: usize,
    pub trace_equal: bool,
    pub first_divergence: Option<Divergence>,
    pub tests: Vec<TestResult>,
    pub access_counts: BTreeMap<String, usize>,
}

impl AuditReport {
    /// 0 if everything passed, 1 on an exact failure (including unequal
    /// traces), 2 if only statistical tests failed.
    pub fn exit_code(&self) -> i32 {
        let failed = |k: TestKind| self.tests.iter().any(|t| !t.pass && t.kind == k);
        if !self.trace_equal || failed(TestKind::Exact) {
            1
        } else if failed(TestKind::Statistical) {
            2
        } else {
            0
        }
    }

    pub fn passed(&self) -> bool {
        self.exit_code() == 0
    }

    pub fn test(&self, name: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.name == name)
    }
}

fn canonical(trace: &AccessTrace, phases: &[Phase]) -> String {
    let mut s = String::new();
    write_canonical(&trace.records_in(phases), &mut s).expect("writing to a String cannot fail");
    s
}

fn first_divergence(run: usize, expected: &str, found: &str) -> Option<Divergence> {
    let mut a = expected.lines();
    let mut b = found.lines();
    let mut index = 0;
    loop {
        match (a.next(), b.next()) {
            (None, None) => return None,
            (x, y) if x == y => index += 1,
            (x, y) => {
                return Some(Divergence {
                    run,
                    index,
                    expected: x.map(str::to_owned),
                    found: y.map(str::to_owned),
                })
            }
        }
    }
}

fn counts_map(trace: &AccessTrace) -> BTreeMap<String, usize> {
    trace
        .counts_by_region()
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(r, c)| (r.name().to_owned(), *c))
        .collect()
}

struct Batch<T> {
    reference: RunOutcome,
    runs: Vec<(Vec<u32>, T)>,
    trace_equal: bool,
    first_divergence: Option<Divergence>,
}

/// Executes all runs, compares their audited traces within retry groups
/// against a faithful reference run, and keeps `extract` of every run.
fn run_batch<T, F>(cfg: &RunConfig, extract: F) -> Result<Batch<T>>
where
    T: Send,
    F: Fn(&RunOutcome) -> T + Sync,
{
    cfg.validate()?;
    if cfg.runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    let phases = cfg.audited_phases();
    let faithful = RunConfig {
        scan: ScanOptions::default(),
        ..cfg.clone()
    };
    // the faithful twin of run 0: same secrets, hence the same retries
    let reference = execute(&faithful, 0)?;
    let reference_trace = canonical(&reference.trace, phases);

    let results = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let out = execute(cfg, r as u64)?;
            let trace = canonical(&out.trace, phases);
            let divergence = (out.retries == reference.retries)
                .then(|| first_divergence(r, &reference_trace, &trace))
                .flatten();
            let leftover = (out.retries != reference.retries).then_some(trace);
            Ok((out.retries.clone(), extract(&out), divergence, leftover))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut first: Option<Divergence> = None;
    let mut groups: HashMap<Vec<u32>, (usize, String)> = HashMap::new();
    let mut runs = Vec::with_capacity(results.len());
    for (r, (retries, data, divergence, leftover)) in results.into_iter().enumerate() {
        if first.is_none() {
            first = divergence;
        }
        if let Some(trace) = leftover {
            match groups.get(&retries) {
                Some((_, prev)) => {
                    if first.is_none() {
                        first = first_divergence(r, prev, &trace);
                    }
                }
                None => {
                    groups.insert(retries.clone(), (r, trace));
                }
            }
        }
        runs.push((retries, data));
    }
    Ok(Batch {
        reference,
        runs,
        trace_equal: first.is_none(),
        first_divergence: first,
    })
}

fn retry_test<T>(runs: &[(Vec<u32>, T)]) -> TestResult {
    let shuffles: usize = runs.iter().map(|(r, _)| r.len()).sum();
    let retried = runs.iter().flat_map(|(r, _)| r).filter(|&&x| x > 0).count();
    let rate = retried as f64 / shuffles.max(1) as f64;
    TestResult {
        name: "retry_rate".into(),
        statistic: rate,
        p: None,
        pass: rate < MAX_RETRY_RATE,
        kind: TestKind::Statistical,
    }
}

fn report<T>(batch: &Batch<T>, tests: Vec<TestResult>) -> AuditReport {
    AuditReport {
        runs: batch.runs.len(),
        trace_equal: batch.trace_equal,
        first_divergence: batch.first_divergence.clone(),
        tests,
        access_counts: counts_map(&batch.reference.trace),
    }
}

/// Byte equality of the audited phases across runs.
pub fn audit_trace_invariance(cfg: &RunConfig) -> Result<AuditReport> {
    if cfg.runs < 2 {
        return Err(Error::Config(
            "trace comparison needs at least two runs".into(),
        ));
    }
    let batch = run_batch(cfg, |_| ())?;
    let tests = vec![retry_test(&batch.runs)];
    Ok(report(&batch, tests))
}

fn sample_sizes(cfg: &RunConfig) -> Result<Vec<u64>> {
    match &cfg.algorithm {
        Algorithm::Swo(SampleSizes::Fixed(m)) => Ok(vec![*m; (cfg.n / m) as usize]),
        Algorithm::Swo(SampleSizes::Variable(sizes)) => Ok(sizes.clone()),
        _ => Err(Error::Config("sample sizes are only fixed for SWO".into())),
    }
}

/// Exact and statistical checks on the values the reveal phase discloses.
pub fn audit_revealed_values(cfg: &RunConfig) -> Result<AuditReport> {
    let n = cfg.n as usize;
    match &cfg.algorithm {
        Algorithm::Shuffle => Err(Error::Config("a standalone shuffle reveals nothing".into())),
        Algorithm::Swo(_) => {
            let sizes = sample_sizes(cfg)?;
            let batch = run_batch(cfg, |o| o.revealed.clone())?;
            let mut violations = 0;
            let mut id1_at = vec![0u64; n];
            for (_, revealed) in &batch.runs {
                let mut counts = vec![0u64; sizes.len()];
                let mut ok = revealed.len() == n;
                for (t, &id) in revealed.iter().enumerate() {
                    match counts.get_mut((id as usize).wrapping_sub(1)) {
                        Some(c) => *c += 1,
                        None => ok = false,
                    }
                    if id == 1 {
                        id1_at[t] += 1;
                    }
                }
                if !ok || counts != sizes {
                    violations += 1;
                }
            }
            let mut tests = vec![
                TestResult::exact("id_multiplicity", violations),
                retry_test(&batch.runs),
            ];
            if n >= 2 && sizes[0] < cfg.n {
                tests.push(TestResult::chi_square(
                    "id1_position_uniformity",
                    stats::chi_square_uniform(&id1_at),
                ));
            }
            Ok(report(&batch, tests))
        }
        Algorithm::Poisson { .. } => {
            let batch = run_batch(cfg, |o| o.revealed.clone())?;
            let expected: Vec<u64> = (1..=cfg.n).collect();
            let mut violations = 0;
            let mut pos1_at = vec![0u64; n];
            for (_, revealed) in &batch.runs {
                let mut sorted = revealed.clone();
                sorted.sort_unstable();
                if sorted != expected {
                    violations += 1;
                }
                if let Some(t) = revealed.iter().position(|&p| p == 1) {
                    pos1_at[t] += 1;
                }
            }
            let mut tests = vec![
                TestResult::exact("positions_permutation", violations),
                retry_test(&batch.runs),
            ];
            if n >= 2 {
                tests.push(TestResult::chi_square(
                    "position1_placement_uniformity",
                    stats::chi_square_uniform(&pos1_at),
                ));
            }
            Ok(report(&batch, tests))
        }
    }
}

fn binomial_coefficient(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

fn factorial(n: u64) -> Option<u64> {
    (1..=n).try_fold(1u64, |acc, x| acc.checked_mul(x))
}

/// Chi-square over `cells` equally likely outcomes; absent outcomes count
/// as zero.
fn outcome_uniformity<K: std::hash::Hash + Eq>(
    name: &str,
    outcomes: impl Iterator<Item = K>,
    cells: u64,
) -> TestResult {
    let mut counts: HashMap<K, u64> = HashMap::new();
    for o in outcomes {
        *counts.entry(o).or_default() += 1;
    }
    let mut observed: Vec<u64> = counts.into_values().collect();
    if observed.len() as u64 > cells {
        return TestResult::exact(name, observed.len() - cells as usize);
    }
    observed.resize(cells as usize, 0);
    TestResult::chi_square(name, stats::chi_square_uniform(&observed))
}

/// Minimum expected count per cell for a chi-square test to be run.
const MIN_EXPECTED: u64 = 5;

/// Distribution of the opened samples against the ideal sampler.
pub fn audit_distribution(cfg: &RunConfig) -> Result<AuditReport> {
    let n = cfg.n;
    let batch = run_batch(cfg, |o| (o.input.clone(), o.samples.clone()))?;
    let runs = batch.runs.len() as u64;
    let mut tests = Vec::new();
    match &cfg.algorithm {
        Algorithm::Swo(_) => {
            let sizes = sample_sizes(cfg)?;
            let mut violations = 0;
            let mut member = vec![vec![0u64; n as usize]; sizes.len()];
            for (_, (_, samples)) in &batch.runs {
                let mut ok = samples.len() == sizes.len();
                for (i, s) in samples.iter().enumerate() {
                    let mut keys = s.clone();
                    keys.sort_unstable();
                    keys.dedup();
                    ok &= keys.len() == s.len() && Some(&(s.len() as u64)) == sizes.get(i);
                    ok &= keys.iter().all(|k| (1..=n).contains(k));
                    for &k in &keys {
                        if let Some(c) = member.get_mut(i).and_then(|m| m.get_mut((k - 1) as usize))
                        {
                            *c += 1;
                        }
                    }
                }
                if !ok {
                    violations += 1;
                }
            }
            tests.push(TestResult::exact("sample_shape", violations));
            let worst = sizes
                .iter()
                .zip(&member)
                .filter(|(&m, _)| m < n)
                .map(|(&m, counts)| stats::max_abs_z(counts, runs, m as f64 / n as f64))
                .fold((0.0, 1.0), |a, b| if b.0 > a.0 { b } else { a });
            tests.push(TestResult::z_bound("membership_marginal", worst));
            for (i, &m) in sizes.iter().enumerate() {
                let Some(cells) = binomial_coefficient(n, m) else {
                    continue;
                };
                if cells < 2 || cells.saturating_mul(MIN_EXPECTED) > runs {
                    continue;
                }
                let outcomes = batch.runs.iter().map(|(_, (_, samples))| {
                    let mut keys = samples[i].clone();
                    keys.sort_unstable();
                    keys
                });
                tests.push(outcome_uniformity(
                    &format!("subset_uniformity_sample{}", i + 1),
                    outcomes,
                    cells,
                ));
            }
        }
        Algorithm::Poisson { gamma, .. } => {
            let mut violations = 0;
            let mut member = vec![0u64; n as usize];
            let mut size_sum = 0.0;
            for (_, (_, samples)) in &batch.runs {
                let mut ok = !samples.is_empty();
                for s in samples {
                    let mut keys = s.clone();
                    keys.sort_unstable();
                    keys.dedup();
                    ok &= keys.len() == s.len() && keys.iter().all(|k| (1..=n).contains(k));
                }
                ok &= samples.iter().map(Vec::len).sum::<usize>() as u64 <= n;
                if let Some(first) = samples.first() {
                    size_sum += first.len() as f64;
                    for &k in first {
                        if let Some(c) = member.get_mut((k as usize).wrapping_sub(1)) {
                            *c += 1;
                        }
                    }
                }
                if !ok {
                    violations += 1;
                }
            }
            tests.push(TestResult::exact("sample_shape", violations));
            tests.push(TestResult::z_bound(
                "membership_marginal",
                stats::max_abs_z(&member, runs, *gamma),
            ));
            let mean = size_sum / runs as f64;
            let se = (n as f64 * gamma * (1.0 - gamma) / runs as f64).sqrt();
            let z = (mean - n as f64 * gamma).abs() / se;
            tests.push(TestResult::z_bound(
                "sample1_size_mean",
                (z, stats::two_sided_normal_p(z)),
            ));
        }
        Algorithm::Shuffle => {
            let mut violations = 0;
            for (_, (input, samples)) in &batch.runs {
                let mut a = input.clone();
                let mut b = samples[0].clone();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    violations += 1;
                }
            }
            tests.push(TestResult::exact("multiset_preserved", violations));
            // input order is fixed under FixedData, so output order is the permutation
            if cfg.policy == SeedPolicy::FixedData {
                if let Some(cells) =
                    factorial(n).filter(|&c| c >= 2 && c.saturating_mul(MIN_EXPECTED) <= runs)
                {
                    let outcomes = batch.runs.iter().map(|(_, (_, s))| s[0].clone());
                    tests.push(outcome_uniformity("order_uniformity", outcomes, cells));
                }
            }
        }
    }
    tests.push(retry_test(&batch.runs));
    Ok(report(&batch, tests))
}

/// External accesses of a retry-free run of `cfg`.
pub fn predicted_cost(cfg: &RunConfig) -> usize {
    let s = cfg.shuffle_config();
    let n = cfg.n as usize;
    match cfg.algorithm {
        Algorithm::Shuffle => s.access_cost(),
        // two shuffles, the replication scan, then one read and one write
        // per stream entry while revealing
        _ => 2 * s.access_cost() + (2 * n + 2) + 2 * n,
    }
}

/// Trace length per element across dataset sizes.
pub fn audit_cost(cfg: &RunConfig, sizes: &[u64]) -> Result<AuditReport> {
    if sizes.is_empty() {
        return Err(Error::Config("no dataset sizes given".into()));
    }
    let mut tests = Vec::new();
    let mut ratios = Vec::new();
    let mut counts = BTreeMap::new();
    for &n in sizes {
        let sized = RunConfig { n, ..cfg.clone() };
        let out = execute(&sized, 0)?;
        let s = sized.shuffle_config();
        let failed: usize = out
            .retries
            .iter()
            .map(|&r| r as usize * s.failed_attempt_cost())
            .sum();
        let normalized = out.trace.len() - failed;
        let ratio = normalized as f64 / n as f64;
        tests.push(TestResult {
            name: format!("cost_model_n{n}"),
            statistic: ratio,
            p: None,
            pass: normalized == predicted_cost(&sized),
            kind: TestKind::Exact,
        });
        if !matches!(cfg.algorithm, Algorithm::Shuffle) {
            let scan = out.trace.phase_records(Phase::Replication).len();
            tests.push(TestResult {
                name: format!("replication_scan_n{n}"),
                statistic: scan as f64,
                p: None,
                pass: scan as u64 == 2 * n + 2,
                kind: TestKind::Exact,
            });
        }
        ratios.push(ratio);
        counts = counts_map(&out.trace);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo - 1.0;
    tests.push(TestResult {
        name: "ratio_stability".into(),
        statistic: spread,
        p: None,
        pass: spread <= COST_RATIO_TOLERANCE,
        kind: TestKind::Exact,
    });
    Ok(AuditReport {
        runs: sizes.len(),
        trace_equal: true,
        first_divergence: None,
        tests,
        access_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_located() {
        assert_eq!(first_divergence(0, "a\nb\n", "a\nb\n"), None);
        let d = first_divergence(3, "a\nb\nc\n", "a\nb\n").unwrap();
        assert_eq!((d.run, d.index), (3, 2));
        assert_eq!(d.expected.as_deref(), Some("c"));
        assert_eq!(d.found, None);
    }

    #[test]
    fn counting_helpers() {
        assert_eq!(binomial_coefficient(6, 2), Some(15));
        assert_eq!(binomial_coefficient(100, 10), Some(17_310_309_456_440));
        assert_eq!(factorial(5), Some(120));
        assert_eq!(factorial(25), None);
    }

    #[test]
    fn exit_codes() {
        let mut r = AuditReport {
            runs: 2,
            trace_equal: true,
            first_divergence: None,
            tests: vec![TestResult::chi_square("x", (1.0, 0.5))],
            access_counts: BTreeMap::new(),
        };
        assert_eq!(r.exit_code(), 0);
        r.tests.push(TestResult::chi_square("y", (99.0, 1e-9)));
        assert_eq!(r.exit_code(), 2);
        r.tests.push(TestResult::exact("z", 1));
        assert_eq!(r.exit_code(), 1);
        r.tests.clear();
        r.trace_equal = false;
        assert_eq!(r.exit_code(), 1);
    }

    #[test]
    fn report_json_schema() {
        let r = AuditReport {
            runs: 2,
            trace_equal: true,
            first_divergence: None,
            tests: vec![TestResult::exact("id_multiplicity", 0)],
            access_counts: [("dataset".to_owned(), 4)].into_iter().collect(),
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [
                "access_counts",
                "first_divergence",
                "runs",
                "tests",
                "trace_equal"
            ]
        );
        let t = v["tests"][0].as_object().unwrap();
        let mut tk: Vec<&str> = t.keys().map(String::as_str).collect();
        tk.sort_unstable();
        assert_eq!(tk, ["name", "p", "pass", "statistic"]);
    }

    #[test]
    fn audits_are_reproducible() {
        let cfg = RunConfig::new(Algorithm::Swo(SampleSizes::Fixed(4)), 12)
            .with_runs(20)
            .with_seed([7; 32]);
        let a = audit_revealed_values(&cfg).unwrap();
        let b = audit_revealed_values(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace_equal);
    }

    #[test]
    fn bad_configs_rejected() {
        let bad_m = RunConfig::new(Algorithm::Swo(SampleSizes::Fixed(5)), 12);
        assert!(audit_trace_invariance(&bad_m).unwrap_err().is_config());
        let one_run = RunConfig::new(Algorithm::Shuffle, 12).with_runs(1);
        assert!(audit_trace_invariance(&one_run).unwrap_err().is_config());
        let shuffle = RunConfig::new(Algorithm::Shuffle, 12);
        assert!(audit_revealed_values(&shuffle).unwrap_err().is_config());
        let c3 = RunConfig {
            c: 3,
            ..RunConfig::new(Algorithm::Shuffle, 12)
        };
        assert!(audit_cost(&c3, &[16]).unwrap_err().is_config());
    }
}
