//! Samplers for the diffusion `X_{t,s}` started at `x` at time `t`.
//!
//! Scaled Brownian motion and the unit-drift GBM are sampled exactly from a
//! single Gaussian vector; everything else goes through Euler–Maruyama.
//! Zero-length intervals return `x` and consume no randomness.

use crate::error::{Error, Result};
use crate::model::{Diffusion, Drift, FlowSpec, DEFAULT_EM_STEPS};
use crate::rng::NodeStream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrawCount {
    pub gaussian_scalars: u64,
    pub uniforms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub state: Vec<f64>,
    pub draws_used: DrawCount,
}

fn check_interval(t: f64, s: f64) -> Result<()> {
    if s < t {
        return Err(Error::BackwardInterval { start: t, end: s });
    }
    Ok(())
}

/// `x + scale * sqrt(s - t) * z`.
pub fn sample_scaled_brownian(x: &[f64], t: f64, s: f64, scale: f64, z: &[f64]) -> Result<Vec<f64>> {
    check_interval(t, s)?;
    let sd = (s - t).sqrt();
    Ok(x.iter().zip(z).map(|(xi, zi)| xi + scale * (sd * zi)).collect())
}

/// Exact GBM step with unit drift and volatility:
/// `x_i exp((s - t)/2 + sqrt(s - t) z_i)`.
pub fn sample_gbm(x: &[f64], t: f64, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    check_interval(t, s)?;
    let dt = s - t;
    let sd = dt.sqrt();
    Ok(x.iter()
        .zip(z)
        .map(|(xi, zi)| xi * (0.5 * dt + sd * zi).exp())
        .collect())
}

/// Euler–Maruyama with `steps` uniform steps on `[t, s]`.
pub fn sample_euler_maruyama<S: NodeStream>(
    mu: &Drift,
    sigma: &Diffusion,
    x: &[f64],
    t: f64,
    s: f64,
    steps: u32,
    stream: &mut S,
) -> Result<FlowSample> {
    check_interval(t, s)?;
    if steps == 0 {
        return Err(Error::InvalidQuery("Euler-Maruyama needs at least one step".into()));
    }
    let d = x.len();
    let mut state = x.to_vec();
    if s == t {
        return Ok(FlowSample {
            state,
            draws_used: DrawCount::default(),
        });
    }
    let h = (s - t) / f64::from(steps);
    let sqrt_h = h.sqrt();
    let mut drift = vec![0.0; d];
    let mut diffusion = vec![0.0; d * d];
    let mut dw = vec![0.0; d];
    for _ in 0..steps {
        stream.fill_gaussian(&mut dw);
        for w in dw.iter_mut() {
            *w *= sqrt_h;
        }
        mu(&state, &mut drift);
        sigma(&state, &mut diffusion);
        for i in 0..d {
            let row = &diffusion[i * d..(i + 1) * d];
            let noise: f64 = row.iter().zip(&dw).map(|(a, b)| a * b).sum();
            state[i] = state[i] + drift[i] * h + noise;
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "Euler-Maruyama state",
                path: String::from("<flow>"),
            });
        }
    }
    Ok(FlowSample {
        state,
        draws_used: DrawCount {
            gaussian_scalars: u64::from(steps) * d as u64,
            uniforms: 0,
        },
    })
}

/// Number of Euler–Maruyama steps used on `[t, s]` when the full horizon
/// gets `per_horizon` steps.
pub fn em_steps_for(per_horizon: u32, t: f64, s: f64, horizon: f64) -> u32 {
    let raw = (f64::from(per_horizon) * (s - t) / horizon).ceil();
    (raw as u32).max(1)
}

/// Samples `X_{t,s}` according to `spec`.
pub fn sample_flow<S: NodeStream>(
    spec: &FlowSpec,
    horizon: f64,
    x: &[f64],
    t: f64,
    s: f64,
    stream: &mut S,
) -> Result<FlowSample> {
    check_interval(t, s)?;
    if s == t {
        return Ok(FlowSample {
            state: x.to_vec(),
            draws_used: DrawCount::default(),
        });
    }
    let d = x.len();
    let exact = |state: Vec<f64>| FlowSample {
        state,
        draws_used: DrawCount {
            gaussian_scalars: d as u64,
            uniforms: 0,
        },
    };
    match spec {
        FlowSpec::ScaledBrownian { scale } => {
            let mut z = vec![0.0; d];
            stream.fill_gaussian(&mut z);
            sample_scaled_brownian(x, t, s, *scale, &z).map(exact)
        }
        FlowSpec::UnitDriftGbm => {
            let mut z = vec![0.0; d];
            stream.fill_gaussian(&mut z);
            sample_gbm(x, t, s, &z).map(exact)
        }
        FlowSpec::GenericSde { mu, sigma, em_steps } => {
            let per_horizon = em_steps.map_or(DEFAULT_EM_STEPS, |n| n.get());
            let steps = em_steps_for(per_horizon, t, s, horizon);
            sample_euler_maruyama(mu, sigma, x, t, s, steps, stream)
        }
    }
}
