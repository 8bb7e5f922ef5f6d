//! Experiment runner: independent realizations per `(d, n)` cell with
//! `M = n`, relative L²-errors against a reference, randomness counts and
//! single-realization wall time.
//!
//! Realization `j` of every cell is rooted at `MultiIndexKey::root(j)`.
//! Whole realizations are distributed over the worker pool and merged by
//! `(d, n, run)` index, so all outputs except timings are a function of the
//! spec alone.

mod output;

use std::num::NonZeroU32;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

pub use output::{emit_csv, emit_plot, parse_csv, plot_data, plot_svg, render_table, write_csv};

use crate::error::{Error, Result};
use crate::estimator::{CostCounters, Mlp};
use crate::model::{MlpQuery, SemilinearProblem, TruncationRadius};
use crate::problems::{builtin_problem, default_query, ExampleName, FixtureTable, Provenance, ReferenceSolution};
use crate::rng::MultiIndexKey;

/// Root offset for self-computed reference realizations, keeping them
/// disjoint from the per-run roots `0..runs`.
pub const SELF_REFERENCE_ROOT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    PaperDs,
    PaperMlp,
    SelfComputed { n_ref: u32, runs_ref: usize },
}

impl std::str::FromStr for ReferenceMode {
    type Err = Error;

    /// `paper-ds`, `paper-mlp`, `self:N` or `self:N:RUNS`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "paper-ds" => return Ok(ReferenceMode::PaperDs),
            "paper-mlp" => return Ok(ReferenceMode::PaperMlp),
            _ => {}
        }
        let bad = || Error::InvalidSpec(format!("bad reference mode `{s}`"));
        let rest = norm.strip_prefix("self:").ok_or_else(bad)?;
        let mut parts = rest.split(':');
        let n_ref = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let runs_ref = match parts.next() {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => 5,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(ReferenceMode::SelfComputed { n_ref, runs_ref })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub example: ExampleName,
    pub dims: Vec<usize>,
    /// Iteration indices; each cell uses `M = n`.
    pub ns: Vec<u32>,
    pub runs: usize,
    pub reference: ReferenceMode,
    pub seed: u64,
    pub workers: usize,
    /// Record wall time of the first realization of each cell.
    pub timing: bool,
    pub t: Option<f64>,
    pub r: Option<TruncationRadius>,
    pub em_steps: Option<NonZeroU32>,
}

impl ExperimentSpec {
    pub fn new(example: ExampleName, dims: Vec<usize>, ns: Vec<u32>) -> Self {
        Self {
            example,
            dims,
            ns,
            runs: 5,
            reference: ReferenceMode::PaperMlp,
            seed: 0,
            workers: 1,
            timing: true,
            t: None,
            r: None,
            em_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidSpec("runs per cell must be at least 1".into()));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::InvalidSpec("n list must be nonempty with every n >= 1".into()));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidSpec("d list must be nonempty with every d >= 1".into()));
        }
        if let ReferenceMode::SelfComputed { n_ref, runs_ref } = self.reference {
            if runs_ref == 0 {
                return Err(Error::InvalidSpec("reference runs must be at least 1".into()));
            }
            let max_n = self.ns.iter().copied().max().unwrap_or(0);
            if n_ref < max_n {
                return Err(Error::InvalidSpec(format!(
                    "reference iteration {n_ref} is below the largest n ({max_n})"
                )));
            }
        }
        Ok(())
    }

    fn problem(&self, d: usize) -> Result<SemilinearProblem> {
        let p = builtin_problem(self.example, d)?;
        Ok(match self.em_steps {
            Some(steps) => p.with_euler_maruyama(steps),
            None => p,
        })
    }

    fn query(&self, d: usize, n: u32) -> MlpQuery {
        let mut q = default_query(self.example, d);
        if let Some(t) = self.t {
            q.t = t;
        }
        if let Some(r) = self.r {
            q.r = r;
        }
        q.n = n;
        q.m = n;
        q
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub d: usize,
    pub n: u32,
    /// First realization of the cell.
    pub value: Vec<f64>,
    pub reference: Vec<f64>,
    pub provenance: Provenance,
    pub rel_l2_error: f64,
    pub gaussian_scalars: u64,
    pub uniforms: u64,
    pub runtime_seconds: Option<f64>,
    /// All realizations of the cell; not serialized.
    pub realizations: Vec<Vec<f64>>,
}

/// `sqrt(mean ||v - ref||²) / ||ref||` with Euclidean norms.
pub fn relative_l2_error(samples: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidSpec("relative error needs at least one sample".into()));
    }
    let ref_norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(Error::ZeroReference);
    }
    let mse = samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / samples.len() as f64;
    Ok(mse.sqrt() / ref_norm)
}

struct Realization {
    value: Vec<f64>,
    counters: CostCounters,
    seconds: f64,
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
fn run_pool<J, T, F>(jobs: &[J], workers: usize, run: F) -> Vec<Result<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(&run).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run(&jobs[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("job finished"))
        .collect()
}

fn realize(problem: &SemilinearProblem, q: &MlpQuery, seed: u64, root: u64, timing: bool) -> Result<Realization> {
    // No clock on wasm32-unknown-unknown; only touch it when asked to.
    let start = timing.then(Instant::now);
    let est = Mlp::new(problem, q.m, q.r).estimate(seed, &MultiIndexKey::root(root), q.n, q.t, &q.x)?;
    Ok(Realization {
        value: est.value,
        counters: est.counters,
        seconds: start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
    })
}

/// Mean of `runs_ref` independent realizations of `V_{n_ref, n_ref}` at the
/// example's evaluation point.
pub fn self_reference(spec: &ExperimentSpec, d: usize, n_ref: u32, runs_ref: usize) -> Result<ReferenceSolution> {
    if runs_ref == 0 {
        return Err(Error::InvalidSpec("reference runs must be at least 1".into()));
    }
    let problem = spec.problem(d)?;
    let q = spec.query(d, n_ref);
    q.validate(&problem)?;
    let jobs: Vec<u64> = (0..runs_ref as u64).map(|j| SELF_REFERENCE_ROOT + j).collect();
    let runs = run_pool(&jobs, spec.workers, |&root| realize(&problem, &q, spec.seed, root, false))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceSolution {
        example: spec.example,
        d,
        provenance: Provenance::SelfComputed,
        value: mean(runs.iter().map(|r| r.value.as_slice()), problem.k),
    })
}

fn mean<'a>(values: impl Iterator<Item = &'a [f64]>, k: usize) -> Vec<f64> {
    let mut acc = vec![0.0; k];
    let mut count = 0usize;
    for v in values {
        count += 1;
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    acc.iter().map(|a| a / count as f64).collect()
}

/// A cell whose realizations could not all be computed.
#[derive(Debug)]
pub struct CellFailure {
    pub d: usize,
    pub n: u32,
    pub run: u64,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs every `(d, n)` cell of `spec`, keeping the rows of cells that
/// succeeded. Spec, fixture and reference errors still abort the whole run.
pub fn run_experiment_cells(spec: &ExperimentSpec, fixtures: &FixtureTable) -> Result<ExperimentOutcome> {
    spec.validate()?;

    let mut references = Vec::with_capacity(spec.dims.len());
    for &d in &spec.dims {
        let r = match spec.reference {
            ReferenceMode::PaperDs => fixtures.reference_value(spec.example, d, Provenance::PaperDs)?,
            ReferenceMode::PaperMlp => fixtures.reference_value(spec.example, d, Provenance::PaperMlp)?,
            ReferenceMode::SelfComputed { n_ref, runs_ref } => self_reference(spec, d, n_ref, runs_ref)?,
        };
        references.push(r);
    }

    let mut problems = Vec::with_capacity(spec.dims.len());
    for &d in &spec.dims {
        let p = spec.problem(d)?;
        for &n in &spec.ns {
            spec.query(d, n).validate(&p)?;
        }
        problems.push(p);
    }

    let mut jobs = Vec::new();
    for di in 0..spec.dims.len() {
        for &n in &spec.ns {
            for run in 0..spec.runs as u64 {
                jobs.push((di, n, run));
            }
        }
    }
    let results = run_pool(&jobs, spec.workers, |&(di, n, run)| {
        let d = spec.dims[di];
        realize(&problems[di], &spec.query(d, n), spec.seed, run, spec.timing)
    });

    let mut outcome = ExperimentOutcome::default();
    let mut results = results.into_iter();
    for cell_jobs in jobs.chunks(spec.runs) {
        let (di, n, _) = cell_jobs[0];
        let d = spec.dims[di];
        let mut chunk = Vec::with_capacity(spec.runs);
        let mut failed = None;
        for &(_, _, run) in cell_jobs {
            match results.next().expect("one result per job") {
                Ok(r) => chunk.push(r),
                Err(error) if failed.is_none() => failed = Some(CellFailure { d, n, run, error }),
                Err(_) => {}
            }
        }
        if let Some(f) = failed {
            outcome.failures.push(f);
            continue;
        }
        let reference = &references[di];
        let realizations: Vec<Vec<f64>> = chunk.iter().map(|r| r.value.clone()).collect();
        let first = &chunk[0];
        outcome.rows.push(ResultRow {
            d,
            n,
            value: first.value.clone(),
            reference: reference.value.clone(),
            provenance: reference.provenance,
            rel_l2_error: relative_l2_error(&realizations, &reference.value)?,
            gaussian_scalars: first.counters.gaussian_scalars,
            uniforms: first.counters.uniforms,
            runtime_seconds: spec.timing.then_some(first.seconds),
            realizations,
        });
    }
    Ok(outcome)
}

/// Runs every `(d, n)` cell of `spec`; rows are ordered by `(d, n)` as
/// given. The first failing cell aborts the experiment.
pub fn run_experiment(spec: &ExperimentSpec, fixtures: &FixtureTable) -> Result<Vec<ResultRow>> {
    let outcome = run_experiment_cells(spec, fixtures)?;
    match outcome.failures.into_iter().next() {
        Some(f) => Err(f.error),
        None => Ok(outcome.rows),
    }
}
