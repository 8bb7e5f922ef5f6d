//! Full-history recursive multilevel Picard estimator.
//!
//! `V_{n,M,r}(t, x)` is the Monte Carlo average of `M^n` terminal values
//! `g(X_{t,T})` plus, for every level `l < n`, `M^(n-l)` samples of
//! `(T - t) [f(X, trunc(V_l)) - f(X, trunc(V_{l-1}))]` taken at a uniformly
//! drawn time `R ∈ [t, T)` and state `X = X_{t,R}`. The nested estimators
//! `V_l` and `V_{l-1}` are themselves full recursions with the same `M`,
//! rooted at the node keys `(θ, l, m)` and `(θ, l, -m)` respectively, so each
//! node draws from its own independent streams.
//!
//! Sums are accumulated in blocks of [`SUM_BLOCK`] consecutive copies and the
//! block totals are added in index order. The top-level blocks can be
//! spread over several threads without changing a single bit of the result.

use std::ops::{Add, AddAssign};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::flows::sample_flow;
use crate::model::{sample_time, truncate_in_place, MlpQuery, SemilinearProblem, TruncationRadius};
use crate::rng::{KeyCursor, KeyedSource, MultiIndexKey, NodeStream, PathStep, StreamSource, StreamTag};

/// Consecutive copies summed before being folded into the running total.
pub const SUM_BLOCK: u64 = 256;

/// Work and randomness consumed by one estimate, aggregated over the whole
/// recursion tree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CostCounters {
    pub gaussian_scalars: u64,
    pub uniforms: u64,
    pub f_evals: u64,
    pub g_evals: u64,
    pub flow_samples: u64,
    /// Truncations that actually moved a component.
    pub clamp_hits: u64,
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.gaussian_scalars += o.gaussian_scalars;
        self.uniforms += o.uniforms;
        self.f_evals += o.f_evals;
        self.g_evals += o.g_evals;
        self.flow_samples += o.flow_samples;
        self.clamp_hits += o.clamp_hits;
    }
}

impl Add for CostCounters {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub counters: CostCounters,
}

/// Failure inside the recursion; `steps` is collected leaf-first while the
/// error unwinds.
enum NodeFailure {
    NonFinite {
        what: &'static str,
        steps: Vec<PathStep>,
    },
    Other(Error),
}

impl NodeFailure {
    fn at(self, level: u32, copy: i64) -> Self {
        match self {
            NodeFailure::NonFinite { what, mut steps } => {
                steps.push(PathStep { level, copy });
                NodeFailure::NonFinite { what, steps }
            }
            other => other,
        }
    }

    fn into_error(self, root: &MultiIndexKey) -> Error {
        match self {
            NodeFailure::NonFinite { what, steps } => {
                let mut key = root.clone();
                key.path.extend(steps.into_iter().rev());
                Error::NonFinite {
                    what,
                    path: key.to_string(),
                }
            }
            NodeFailure::Other(e) => e,
        }
    }
}

impl From<Error> for NodeFailure {
    fn from(e: Error) -> Self {
        NodeFailure::Other(e)
    }
}

type NodeResult<T> = std::result::Result<T, NodeFailure>;

fn non_finite(what: &'static str) -> NodeFailure {
    NodeFailure::NonFinite {
        what,
        steps: Vec::new(),
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn copies(m: u32, exponent: u32) -> Result<u64> {
    u64::from(m)
        .checked_pow(exponent)
        .ok_or(Error::Overflow("M^n"))
}

/// Configured estimator for one problem, Monte Carlo base `M` and
/// truncation radius.
pub struct Mlp<'a, S: StreamSource = KeyedSource> {
    problem: &'a SemilinearProblem,
    source: S,
    m: u32,
    r: TruncationRadius,
    workers: usize,
    level_zero_f: bool,
}

impl<'a> Mlp<'a, KeyedSource> {
    pub fn new(problem: &'a SemilinearProblem, m: u32, r: TruncationRadius) -> Self {
        Self {
            problem,
            source: KeyedSource,
            m,
            r,
            workers: 1,
            level_zero_f: true,
        }
    }
}

impl<'a, S: StreamSource> Mlp<'a, S> {
    pub fn with_source<T: StreamSource>(self, source: T) -> Mlp<'a, T> {
        Mlp {
            problem: self.problem,
            source,
            m: self.m,
            r: self.r,
            workers: self.workers,
            level_zero_f: self.level_zero_f,
        }
    }

    /// Threads used for the top-level sums. Does not affect the result.
    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Ablation switch: when disabled, the `l = 0` f-terms are still
    /// evaluated (same randomness and cost) but not added to the value.
    pub fn level_zero_f(mut self, enabled: bool) -> Self {
        self.level_zero_f = enabled;
        self
    }

    /// Evaluates `V_{n,M,r}(t, x)` rooted at `root`.
    pub fn estimate(&self, master_seed: u64, root: &MultiIndexKey, n: u32, t: f64, x: &[f64]) -> Result<Estimate> {
        if self.m == 0 {
            return Err(Error::InvalidQuery("M must be at least 1".into()));
        }
        if !(0.0..=self.problem.horizon).contains(&t) {
            return Err(Error::InvalidQuery(format!("t={t} outside [0, {}]", self.problem.horizon)));
        }
        if x.len() != self.problem.d {
            return Err(Error::InvalidQuery(format!(
                "x has length {}, problem dimension is {}",
                x.len(),
                self.problem.d
            )));
        }
        // Fail early on M^n overflow instead of deep inside the tree.
        copies(self.m, n)?;
        let cursor = KeyCursor::from_key(master_seed, root);
        let mut counters = CostCounters::default();
        let value = self
            .node(cursor, n, t, x, &mut counters, self.workers)
            .map_err(|e| e.into_error(root))?;
        Ok(Estimate { value, counters })
    }

    fn node(
        &self,
        key: KeyCursor,
        n: u32,
        t: f64,
        x: &[f64],
        c: &mut CostCounters,
        workers: usize,
    ) -> NodeResult<Vec<f64>> {
        let p = self.problem;
        let k = p.k;
        if n == 0 {
            return Ok(vec![0.0; k]);
        }
        if t == p.horizon {
            c.g_evals += 1;
            let gx = p.eval_g(x);
            if !all_finite(&gx) {
                return Err(non_finite("terminal condition"));
            }
            return Ok(gx);
        }

        let g_copies = copies(self.m, n)?;
        let (mut acc, gc) = self.blocked_sum(g_copies, workers, |m, c| {
            self.terminal_sample(key, t, x, m, c)
                .map_err(|e| e.at(0, -(m as i64)))
        })?;
        *c += gc;
        let scale = g_copies as f64;
        for v in acc.iter_mut() {
            *v /= scale;
        }

        for l in 0..n {
            let level_copies = copies(self.m, n - l)?;
            let weight = (p.horizon - t) / level_copies as f64;
            let (sum, lc) = self.blocked_sum(level_copies, workers, |m, c| {
                self.level_sample(key, l, m, t, x, c)
                    .map_err(|e| e.at(l, m as i64))
            })?;
            *c += lc;
            for (a, s) in acc.iter_mut().zip(&sum) {
                *a += weight * s;
            }
        }
        Ok(acc)
    }

    fn terminal_sample(&self, key: KeyCursor, t: f64, x: &[f64], m: u64, c: &mut CostCounters) -> NodeResult<Vec<f64>> {
        let p = self.problem;
        let node = key.child(0, -(m as i64));
        let mut stream = self.source.open(node, StreamTag::Gaussian);
        let sample = sample_flow(&p.flow, p.horizon, x, t, p.horizon, &mut stream)?;
        c.flow_samples += 1;
        c.gaussian_scalars += sample.draws_used.gaussian_scalars;
        c.uniforms += sample.draws_used.uniforms;
        if !all_finite(&sample.state) {
            return Err(non_finite("flow sample"));
        }
        c.g_evals += 1;
        let gx = p.eval_g(&sample.state);
        if !all_finite(&gx) {
            return Err(non_finite("terminal condition"));
        }
        Ok(gx)
    }

    fn level_sample(
        &self,
        key: KeyCursor,
        l: u32,
        m: u64,
        t: f64,
        x: &[f64],
        c: &mut CostCounters,
    ) -> NodeResult<Vec<f64>> {
        let p = self.problem;
        let node = key.child(l, m as i64);

        let u = self.source.open(node, StreamTag::Uniform).next_uniform();
        c.uniforms += 1;
        let r_time = sample_time(t, p.horizon, u);

        let mut stream = self.source.open(node, StreamTag::Gaussian);
        let sample = sample_flow(&p.flow, p.horizon, x, t, r_time, &mut stream)?;
        c.flow_samples += 1;
        c.gaussian_scalars += sample.draws_used.gaussian_scalars;
        c.uniforms += sample.draws_used.uniforms;
        let state = sample.state;
        if !all_finite(&state) {
            return Err(non_finite("flow sample"));
        }

        let mut upper = self.node(node, l, r_time, &state, c, 1)?;
        c.clamp_hits += truncate_in_place(self.r, &mut upper) as u64;
        let mut term = p.eval_f(&state, &upper);
        c.f_evals += 1;
        if !all_finite(&term) {
            return Err(non_finite("nonlinearity"));
        }

        if l >= 1 {
            let companion = key.child(l, -(m as i64));
            let mut lower = self
                .node(companion, l - 1, r_time, &state, c, 1)
                .map_err(|e| e.at(l, -(m as i64)))?;
            c.clamp_hits += truncate_in_place(self.r, &mut lower) as u64;
            let lower_term = p.eval_f(&state, &lower);
            c.f_evals += 1;
            if !all_finite(&lower_term) {
                return Err(non_finite("nonlinearity"));
            }
            for (a, b) in term.iter_mut().zip(&lower_term) {
                *a -= b;
            }
        } else if !self.level_zero_f {
            term.fill(0.0);
        }
        Ok(term)
    }

    /// Sums `item(m)` for `m = 1..=count` in fixed blocks. The block layout
    /// and the order in which block totals are added depend only on `count`.
    fn blocked_sum<F>(&self, count: u64, workers: usize, item: F) -> NodeResult<(Vec<f64>, CostCounters)>
    where
        F: Fn(u64, &mut CostCounters) -> NodeResult<Vec<f64>> + Sync,
    {
        let k = self.problem.k;
        let blocks = count.div_ceil(SUM_BLOCK);
        let block = |b: u64, c: &mut CostCounters| -> NodeResult<Vec<f64>> {
            let mut sum = vec![0.0; k];
            let first = b * SUM_BLOCK + 1;
            let last = ((b + 1) * SUM_BLOCK).min(count);
            for m in first..=last {
                let v = item(m, c)?;
                for (s, vi) in sum.iter_mut().zip(&v) {
                    *s += vi;
                }
            }
            Ok(sum)
        };

        let mut total = vec![0.0; k];
        let mut counters = CostCounters::default();
        if workers <= 1 || blocks <= 1 {
            for b in 0..blocks {
                let s = block(b, &mut counters)?;
                for (t, si) in total.iter_mut().zip(&s) {
                    *t += si;
                }
            }
            return Ok((total, counters));
        }

        let nblocks = usize::try_from(blocks).map_err(|_| Error::Overflow("block count"))?;
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Vec<f64>>>> = (0..nblocks).map(|_| Mutex::new(None)).collect();
        let results: Vec<NodeResult<CostCounters>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers.min(nblocks))
                .map(|_| {
                    scope.spawn(|| {
                        let mut c = CostCounters::default();
                        loop {
                            let b = next.fetch_add(1, Ordering::Relaxed);
                            if b >= nblocks {
                                break;
                            }
                            match block(b as u64, &mut c) {
                                Ok(s) => *slots[b].lock().unwrap() = Some(s),
                                Err(e) => {
                                    next.store(nblocks, Ordering::Relaxed);
                                    return Err(e);
                                }
                            }
                        }
                        Ok(c)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("estimator worker panicked")).collect()
        });
        for r in results {
            counters += r?;
        }
        for slot in slots {
            let s = slot.into_inner().unwrap().expect("every block completed");
            for (t, si) in total.iter_mut().zip(&s) {
                *t += si;
            }
        }
        Ok((total, counters))
    }
}

/// Evaluates `V_{n,M,r}(t, x)` for `query` with keyed randomness rooted at
/// `root`.
pub fn mlp_estimate(
    problem: &SemilinearProblem,
    query: &MlpQuery,
    root: &MultiIndexKey,
    master_seed: u64,
) -> Result<Estimate> {
    query.validate(problem)?;
    Mlp::new(problem, query.m, query.r).estimate(master_seed, root, query.n, query.t, &query.x)
}

fn checked_pow(m: u32, e: u32) -> Result<u128> {
    u128::from(m).checked_pow(e).ok_or(Error::Overflow("M^n"))
}

/// Shared recursion of the two cost predictors: `base(n)` is the cost of
/// the terminal sum of one node, every level copy costs one unit plus its
/// nested estimators.
fn predicted_cost(n: u32, m: u32, base: impl Fn(u32) -> Result<u128>) -> Result<u128> {
    if m == 0 {
        return Err(Error::InvalidQuery("M must be at least 1".into()));
    }
    let overflow = || Error::Overflow("predicted cost");
    let mut table: Vec<u128> = Vec::with_capacity(n as usize + 1);
    table.push(0);
    for j in 1..=n {
        let mut total = base(j)?;
        for l in 0..j {
            let nested = if l >= 1 {
                table[l as usize]
                    .checked_add(table[l as usize - 1])
                    .ok_or_else(overflow)?
            } else {
                table[0]
            };
            let per_copy = nested.checked_add(1).ok_or_else(overflow)?;
            let level = checked_pow(m, j - l)?
                .checked_mul(per_copy)
                .ok_or_else(overflow)?;
            total = total.checked_add(level).ok_or_else(overflow)?;
        }
        table.push(total);
    }
    Ok(table[n as usize])
}

/// Flow samples drawn by one `V_{n,M}` evaluation at `t < T`.
pub fn predicted_flow_samples(n: u32, m: u32) -> Result<u128> {
    predicted_cost(n, m, |j| checked_pow(m, j))
}

/// Uniform draws made by one `V_{n,M}` evaluation at `t < T`.
pub fn predicted_uniforms(n: u32, m: u32) -> Result<u128> {
    predicted_cost(n, m, |_| Ok(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{builtin_problem, ExampleName};
    use crate::rng::ConstantSource;

    fn allen_cahn(d: usize) -> SemilinearProblem {
        builtin_problem(ExampleName::AllenCahn, d).unwrap()
    }

    /// Literal unrolling of the recursion, independent of the table-based
    /// implementation.
    fn fs_naive(n: i64, m: u128) -> u128 {
        if n <= 0 {
            return 0;
        }
        let mut total = m.pow(n as u32);
        for l in 0..n {
            let lower = if l >= 1 { fs_naive(l - 1, m) } else { 0 };
            total += m.pow((n - l) as u32) * (1 + fs_naive(l, m) + lower);
        }
        total
    }

    fn uc_naive(n: i64, m: u128) -> u128 {
        if n <= 0 {
            return 0;
        }
        (0..n)
            .map(|l| {
                let lower = if l >= 1 { uc_naive(l - 1, m) } else { 0 };
                m.pow((n - l) as u32) * (1 + uc_naive(l, m) + lower)
            })
            .sum()
    }

    #[test]
    fn predictor_examples() {
        assert_eq!(predicted_flow_samples(1, 1).unwrap(), 2);
        assert_eq!(predicted_flow_samples(0, 5).unwrap(), 0);
        assert_eq!(predicted_flow_samples(2, 2).unwrap(), 18);
        assert_eq!(predicted_flow_samples(1, 3).unwrap(), 6);
        assert_eq!(predicted_flow_samples(2, 3).unwrap(), 39);
        assert_eq!(predicted_flow_samples(3, 3).unwrap(), 255);
        assert_eq!(predicted_uniforms(1, 1).unwrap(), 1);
        assert_eq!(predicted_uniforms(0, 3).unwrap(), 0);
        assert_eq!(predicted_uniforms(2, 2).unwrap(), 10);
    }

    #[test]
    fn predictors_match_naive_unrolling() {
        for n in 0..7u32 {
            for m in 1..7u32 {
                assert_eq!(predicted_flow_samples(n, m).unwrap(), fs_naive(n.into(), m.into()));
                assert_eq!(predicted_uniforms(n, m).unwrap(), uc_naive(n.into(), m.into()));
            }
        }
    }

    #[test]
    fn predictor_overflow_is_reported() {
        assert!(matches!(predicted_flow_samples(60, 1000), Err(Error::Overflow(_))));
        assert!(predicted_flow_samples(3, 0).is_err());
    }

    #[test]
    fn zero_iteration_is_zero() {
        let p = allen_cahn(4);
        let est = Mlp::new(&p, 3, TruncationRadius::Finite(4.0))
            .estimate(1, &MultiIndexKey::root(0), 0, 0.3, &[0.1; 4])
            .unwrap();
        assert_eq!(est.value, vec![0.0]);
        assert_eq!(est.counters, CostCounters::default());
    }

    #[test]
    fn zero_noise_hand_evaluation() {
        let p = allen_cahn(10);
        let est = Mlp::new(&p, 1, TruncationRadius::Finite(4.0))
            .with_source(ConstantSource { uniform: 0.5, gaussian: 0.0 })
            .estimate(0, &MultiIndexKey::root(0), 1, 0.0, &[0.0; 10])
            .unwrap();
        assert_eq!(est.value, vec![0.5]);
    }

    #[test]
    fn counters_match_predictors() {
        for d in [1usize, 10] {
            let p = allen_cahn(d);
            for n in 0..=4u32 {
                for m in 1..=4u32 {
                    let est = Mlp::new(&p, m, TruncationRadius::Finite(4.0))
                        .estimate(3, &MultiIndexKey::root(1), n, 0.0, &vec![0.0; d])
                        .unwrap();
                    let fs = predicted_flow_samples(n, m).unwrap() as u64;
                    assert_eq!(est.counters.flow_samples, fs, "n={n} M={m}");
                    assert_eq!(est.counters.uniforms, predicted_uniforms(n, m).unwrap() as u64);
                    assert_eq!(est.counters.gaussian_scalars, d as u64 * fs);
                }
            }
        }
    }

    #[test]
    fn terminal_time_returns_g() {
        let p = allen_cahn(3);
        let x = [0.3, -1.2, 2.0];
        for n in 1..=3 {
            let est = Mlp::new(&p, n, TruncationRadius::Finite(4.0))
                .estimate(17, &MultiIndexKey::root(2), n, 1.0, &x)
                .unwrap();
            assert_eq!(est.value, p.eval_g(&x));
            assert_eq!(est.counters.gaussian_scalars, 0);
        }
    }

    #[test]
    fn worker_count_does_not_change_value() {
        let p = allen_cahn(5);
        let x = [0.0; 5];
        let serial = Mlp::new(&p, 4, TruncationRadius::Finite(4.0))
            .estimate(9, &MultiIndexKey::root(0), 4, 0.0, &x)
            .unwrap();
        for w in [2, 3, 8] {
            let par = Mlp::new(&p, 4, TruncationRadius::Finite(4.0))
                .workers(w)
                .estimate(9, &MultiIndexKey::root(0), 4, 0.0, &x)
                .unwrap();
            assert_eq!(par.value[0].to_bits(), serial.value[0].to_bits(), "workers={w}");
            assert_eq!(par.counters, serial.counters);
        }
    }

    #[test]
    fn roots_and_seeds_give_independent_values() {
        let p = allen_cahn(2);
        let mlp = Mlp::new(&p, 2, TruncationRadius::Infinite);
        let a = mlp.estimate(1, &MultiIndexKey::root(0), 2, 0.0, &[0.0; 2]).unwrap();
        let b = mlp.estimate(1, &MultiIndexKey::root(1), 2, 0.0, &[0.0; 2]).unwrap();
        let c = mlp.estimate(2, &MultiIndexKey::root(0), 2, 0.0, &[0.0; 2]).unwrap();
        let a2 = mlp.estimate(1, &MultiIndexKey::root(0), 2, 0.0, &[0.0; 2]).unwrap();
        assert_ne!(a.value, b.value);
        assert_ne!(a.value, c.value);
        assert_eq!(a, a2);
    }

    #[test]
    fn truncation_inert_without_hits() {
        let p = allen_cahn(10);
        let x = [0.0; 10];
        let mut compared = 0;
        for n in 1..=3u32 {
            for m in 1..=3u32 {
                for seed in 0..4u64 {
                    let root = MultiIndexKey::root(seed);
                    let capped = Mlp::new(&p, m, TruncationRadius::Finite(4.0))
                        .estimate(seed, &root, n, 0.0, &x)
                        .unwrap();
                    let free = Mlp::new(&p, m, TruncationRadius::Infinite)
                        .estimate(seed, &root, n, 0.0, &x)
                        .unwrap();
                    if capped.counters.clamp_hits == 0 {
                        compared += 1;
                        assert_eq!(capped.value[0].to_bits(), free.value[0].to_bits());
                    }
                    assert_eq!(free.counters.clamp_hits, 0);
                }
            }
        }
        assert!(compared > 0);
    }

    #[test]
    fn clamp_hits_are_counted() {
        // r = 0 clamps every nonzero nested value.
        let p = allen_cahn(2);
        let est = Mlp::new(&p, 2, TruncationRadius::Finite(0.0))
            .estimate(1, &MultiIndexKey::root(0), 3, 0.0, &[0.0; 2])
            .unwrap();
        assert!(est.counters.clamp_hits > 0);
    }

    #[test]
    fn non_finite_reports_path() {
        use std::sync::Arc;
        let mut p = allen_cahn(2);
        p.f = Arc::new(|_, y, out| out[0] = if y[0] != 0.0 { f64::NAN } else { 0.0 });
        let err = Mlp::new(&p, 1, TruncationRadius::Infinite)
            .estimate(1, &MultiIndexKey::root(7), 2, 0.0, &[0.0; 2])
            .unwrap_err();
        match err {
            Error::NonFinite { what, path } => {
                assert_eq!(what, "nonlinearity");
                assert!(path.starts_with("(7,1,1"), "{path}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_queries_rejected() {
        let p = allen_cahn(2);
        let mlp = Mlp::new(&p, 2, TruncationRadius::Infinite);
        assert!(mlp.estimate(0, &MultiIndexKey::root(0), 1, 1.5, &[0.0; 2]).is_err());
        assert!(mlp.estimate(0, &MultiIndexKey::root(0), 1, 0.0, &[0.0; 3]).is_err());
        let zero_m = Mlp::new(&p, 0, TruncationRadius::Infinite);
        assert!(zero_m.estimate(0, &MultiIndexKey::root(0), 1, 0.0, &[0.0; 2]).is_err());
        let huge = Mlp::new(&p, u32::MAX, TruncationRadius::Infinite);
        assert!(matches!(
            huge.estimate(0, &MultiIndexKey::root(0), 3, 0.0, &[0.0; 2]),
            Err(Error::Overflow(_))
        ));
    }
}
