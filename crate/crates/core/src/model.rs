//! Problem description types and the two scalar maps the recursion relies
//! on: componentwise truncation and the uniform time subsampling map.

use std::fmt;
use std::num::NonZeroU32;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Nonlinearity `f(x, y, out)`: writes `f(x, y) ∈ R^k` into `out`.
pub type Nonlinearity = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Terminal condition `g(x, out)`: writes `g(x) ∈ R^k` into `out`.
pub type TerminalCondition = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Drift `mu(x, out)` with `out ∈ R^d`.
pub type Drift = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Diffusion `sigma(x, out)`, `out` is a row-major `d × d` matrix.
pub type Diffusion = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Default Euler–Maruyama resolution: steps per full time horizon.
pub const DEFAULT_EM_STEPS: u32 = 20;

/// How `X_{t,s}` is sampled.
#[derive(Clone)]
pub enum FlowSpec {
    /// `X_{t,s} = x + scale (W_s - W_t)`.
    ScaledBrownian { scale: f64 },
    /// Geometric Brownian motion with `mu(x) = x`, `sigma(x) = diag(x)`.
    UnitDriftGbm,
    /// Generic SDE discretized by Euler–Maruyama. `mu` and `sigma` must be
    /// globally Lipschitz. `em_steps` is the number of steps over the full
    /// horizon `[0, T]`; shorter intervals use proportionally fewer steps.
    GenericSde {
        mu: Drift,
        sigma: Diffusion,
        em_steps: Option<NonZeroU32>,
    },
}

impl fmt::Debug for FlowSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowSpec::ScaledBrownian { scale } => {
                f.debug_struct("ScaledBrownian").field("scale", scale).finish()
            }
            FlowSpec::UnitDriftGbm => f.write_str("UnitDriftGbm"),
            FlowSpec::GenericSde { em_steps, .. } => f
                .debug_struct("GenericSde")
                .field("em_steps", em_steps)
                .finish_non_exhaustive(),
        }
    }
}

impl FlowSpec {
    /// Euler–Maruyama equivalent of an exact flow.
    pub fn to_euler_maruyama(&self, d: usize, em_steps: NonZeroU32) -> FlowSpec {
        match self {
            FlowSpec::ScaledBrownian { scale } => {
                let scale = *scale;
                FlowSpec::GenericSde {
                    mu: Arc::new(|_, out| out.fill(0.0)),
                    sigma: Arc::new(move |_, out| {
                        out.fill(0.0);
                        for i in 0..d {
                            out[i * d + i] = scale;
                        }
                    }),
                    em_steps: Some(em_steps),
                }
            }
            FlowSpec::UnitDriftGbm => FlowSpec::GenericSde {
                mu: Arc::new(|x, out| out.copy_from_slice(x)),
                sigma: Arc::new(move |x, out| {
                    out.fill(0.0);
                    for i in 0..d {
                        out[i * d + i] = x[i];
                    }
                }),
                em_steps: Some(em_steps),
            },
            FlowSpec::GenericSde { mu, sigma, .. } => FlowSpec::GenericSde {
                mu: mu.clone(),
                sigma: sigma.clone(),
                em_steps: Some(em_steps),
            },
        }
    }
}

/// One semilinear parabolic problem: dimensions, horizon, nonlinearity,
/// terminal condition and the diffusion it is driven by.
#[derive(Clone)]
pub struct SemilinearProblem {
    pub d: usize,
    pub k: usize,
    pub horizon: f64,
    pub f: Nonlinearity,
    pub g: TerminalCondition,
    pub flow: FlowSpec,
}

impl fmt::Debug for SemilinearProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemilinearProblem")
            .field("d", &self.d)
            .field("k", &self.k)
            .field("horizon", &self.horizon)
            .field("flow", &self.flow)
            .finish_non_exhaustive()
    }
}

impl SemilinearProblem {
    pub fn new(
        d: usize,
        k: usize,
        horizon: f64,
        f: Nonlinearity,
        g: TerminalCondition,
        flow: FlowSpec,
    ) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::InvalidQuery(format!("dimensions must be positive (d={d}, k={k})")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidQuery(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { d, k, horizon, f, g, flow })
    }

    pub fn eval_f(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        (self.f)(x, y, &mut out);
        out
    }

    pub fn eval_g(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        (self.g)(x, &mut out);
        out
    }

    /// Replaces the flow by its Euler–Maruyama discretization.
    pub fn with_euler_maruyama(mut self, em_steps: NonZeroU32) -> Self {
        self.flow = self.flow.to_euler_maruyama(self.d, em_steps);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationRadius {
    Infinite,
    Finite(f64),
}

impl TruncationRadius {
    pub fn finite(r: f64) -> Result<Self> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::InvalidQuery(format!("truncation radius must be >= 0, got {r}")));
        }
        Ok(if r.is_infinite() {
            TruncationRadius::Infinite
        } else {
            TruncationRadius::Finite(r)
        })
    }
}

impl fmt::Display for TruncationRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationRadius::Infinite => f.write_str("inf"),
            TruncationRadius::Finite(r) => write!(f, "{r}"),
        }
    }
}

impl std::str::FromStr for TruncationRadius {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(TruncationRadius::Infinite),
            other => other
                .parse::<f64>()
                .map_err(|e| Error::InvalidQuery(format!("bad truncation radius `{s}`: {e}")))
                .and_then(TruncationRadius::finite),
        }
    }
}

/// One estimator evaluation request `V_{n,M,r}(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQuery {
    pub t: f64,
    pub x: Vec<f64>,
    pub n: u32,
    pub m: u32,
    pub r: TruncationRadius,
}

impl MlpQuery {
    pub fn validate(&self, problem: &SemilinearProblem) -> Result<()> {
        if !(0.0..=problem.horizon).contains(&self.t) {
            return Err(Error::InvalidQuery(format!(
                "t={} outside [0, {}]",
                self.t, problem.horizon
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidQuery("M must be at least 1".into()));
        }
        if self.x.len() != problem.d {
            return Err(Error::InvalidQuery(format!(
                "x has length {}, problem dimension is {}",
                self.x.len(),
                problem.d
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidQuery("x must be finite".into()));
        }
        Ok(())
    }
}

/// Componentwise clamp of `y` to `[-r, r]`; identity for an infinite radius.
pub fn truncate(r: TruncationRadius, y: &[f64]) -> Vec<f64> {
    let mut out = y.to_vec();
    truncate_in_place(r, &mut out);
    out
}

/// In-place [`truncate`]. Returns the number of components that were moved.
pub fn truncate_in_place(r: TruncationRadius, y: &mut [f64]) -> usize {
    let TruncationRadius::Finite(r) = r else {
        return 0;
    };
    let mut hits = 0;
    for v in y.iter_mut() {
        let c = v.clamp(-r, r);
        if c != *v {
            hits += 1;
            *v = c;
        }
    }
    hits
}

/// `t + (T - t) u`, the time point drawn for a level sample.
#[inline]
pub fn sample_time(t: f64, horizon: f64, u: f64) -> f64 {
    t + (horizon - t) * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(TruncationRadius::Infinite, &[-7.3, 2.1]), vec![-7.3, 2.1]);
        assert_eq!(truncate(TruncationRadius::Finite(4.0), &[5.2]), vec![4.0]);
        assert_eq!(truncate(TruncationRadius::Finite(2.0), &[-3.0, 0.5]), vec![-2.0, 0.5]);
        assert_eq!(truncate(TruncationRadius::Finite(0.0), &[1.0, -1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn sample_time_examples() {
        assert_eq!(sample_time(1.0, 1.0, 0.73), 1.0);
        assert_eq!(sample_time(0.0, 1.0, 0.0), 0.0);
        assert_eq!(sample_time(0.5, 1.0, 0.5), 0.75);
    }

    #[test]
    fn radius_parsing() {
        assert_eq!("inf".parse::<TruncationRadius>().unwrap(), TruncationRadius::Infinite);
        assert_eq!("4".parse::<TruncationRadius>().unwrap(), TruncationRadius::Finite(4.0));
        assert_eq!("0".parse::<TruncationRadius>().unwrap(), TruncationRadius::Finite(0.0));
        assert!("-1".parse::<TruncationRadius>().is_err());
        assert!("abc".parse::<TruncationRadius>().is_err());
    }

    fn radius() -> impl Strategy<Value = TruncationRadius> {
        prop_oneof![
            Just(TruncationRadius::Infinite),
            (0.0..10.0f64).prop_map(TruncationRadius::Finite),
        ]
    }

    proptest! {
        #[test]
        fn truncate_idempotent(r in radius(), y in prop::collection::vec(-50.0..50.0f64, 1..4)) {
            let once = truncate(r, &y);
            prop_assert_eq!(truncate(r, &once), once);
        }

        #[test]
        fn truncate_bounded(r in 0.0..10.0f64, y in prop::collection::vec(-50.0..50.0f64, 1..4)) {
            let out = truncate(TruncationRadius::Finite(r), &y);
            prop_assert!(out.iter().all(|v| v.abs() <= r));
        }

        #[test]
        fn truncate_fixes_inside(r in 0.0..10.0f64, y in prop::collection::vec(-1.0..1.0f64, 1..4)) {
            let y: Vec<f64> = y.iter().map(|v| v * r).collect();
            prop_assert_eq!(truncate(TruncationRadius::Finite(r), &y), y);
        }

        #[test]
        fn sample_time_in_range_and_monotone(t in 0.0..1.0f64, u in 0.0..=1.0f64, v in 0.0..=1.0f64) {
            let a = sample_time(t, 1.0, u);
            prop_assert!((t..=1.0).contains(&a));
            let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
            prop_assert!(sample_time(t, 1.0, lo) <= sample_time(t, 1.0, hi));
        }
    }
}
