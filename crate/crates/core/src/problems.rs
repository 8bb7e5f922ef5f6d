//! The four built-in test problems and their published reference values.
//!
//! All four use `T = 1`. Allen-Cahn, Sine-Gordon and the heat system are
//! driven by `sqrt(2) W` (generator: the Laplacian); the semilinear
//! Black-Scholes problem by a GBM with `mu(x) = x`, `sigma(x) = diag(x)`.
//! Norms are Euclidean.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{FlowSpec, MlpQuery, SemilinearProblem, TruncationRadius};

/// Fixture table shipped with the crate.
pub const BUILTIN_FIXTURES: &str = include_str!("../data/reference_values.txt");

/// Radius used for Allen-Cahn: `sup |u| <= e sqrt(1 + 1/4) = sqrt(5) e / 2 < 4`.
pub const ALLEN_CAHN_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleName {
    AllenCahn,
    SineGordon,
    HeatSystem,
    SemilinearBs,
}

impl ExampleName {
    pub const ALL: [ExampleName; 4] = [
        ExampleName::AllenCahn,
        ExampleName::SineGordon,
        ExampleName::HeatSystem,
        ExampleName::SemilinearBs,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExampleName::AllenCahn => "allen_cahn",
            ExampleName::SineGordon => "sine_gordon",
            ExampleName::HeatSystem => "heat_system",
            ExampleName::SemilinearBs => "semilinear_bs",
        }
    }

    pub fn k(self) -> usize {
        match self {
            ExampleName::HeatSystem => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ExampleName::ALL
            .into_iter()
            .find(|e| e.id() == norm)
            .ok_or_else(|| Error::UnknownExample(s.to_string()))
    }
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn bump(x: &[f64]) -> f64 {
    1.0 / (2.0 + 0.4 * sq_norm(x))
}

fn log_half(x: &[f64]) -> f64 {
    (0.5 * (1.0 + sq_norm(x))).ln()
}

pub fn builtin_problem(name: ExampleName, d: usize) -> Result<SemilinearProblem> {
    let sqrt2 = FlowSpec::ScaledBrownian {
        scale: std::f64::consts::SQRT_2,
    };
    match name {
        ExampleName::AllenCahn => SemilinearProblem::new(
            d,
            1,
            1.0,
            Arc::new(|_, y, out| out[0] = y[0] - y[0] * y[0] * y[0]),
            Arc::new(|x, out| out[0] = bump(x)),
            sqrt2,
        ),
        ExampleName::SineGordon => SemilinearProblem::new(
            d,
            1,
            1.0,
            Arc::new(|_, y, out| out[0] = y[0].sin()),
            Arc::new(|x, out| out[0] = bump(x)),
            sqrt2,
        ),
        ExampleName::HeatSystem => SemilinearProblem::new(
            d,
            2,
            1.0,
            Arc::new(|_, y, out| {
                out[0] = y[1] / (1.0 + y[1] * y[1]);
                out[1] = 2.0 * y[0] / 3.0;
            }),
            Arc::new(|x, out| {
                out[0] = bump(x);
                out[1] = log_half(x);
            }),
            sqrt2,
        ),
        ExampleName::SemilinearBs => SemilinearProblem::new(
            d,
            1,
            1.0,
            Arc::new(|_, y, out| out[0] = y[0] / (1.0 + y[0] * y[0])),
            Arc::new(|x, out| out[0] = log_half(x)),
            FlowSpec::UnitDriftGbm,
        ),
    }
}

/// Evaluation point and truncation radius used for `name`; `n` and `M` are
/// set to zero and left for the caller.
pub fn default_query(name: ExampleName, d: usize) -> MlpQuery {
    let (x, r) = match name {
        ExampleName::AllenCahn => (vec![0.0; d], TruncationRadius::Finite(ALLEN_CAHN_RADIUS)),
        ExampleName::SineGordon | ExampleName::HeatSystem => (vec![0.0; d], TruncationRadius::Infinite),
        ExampleName::SemilinearBs => (vec![50.0; d], TruncationRadius::Infinite),
    };
    MlpQuery { t: 0.0, x, n: 0, m: 0, r }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    PaperDs,
    PaperMlp,
    SelfComputed,
}

impl Provenance {
    pub fn id(self) -> &'static str {
        match self {
            Provenance::PaperDs => "paper_ds",
            Provenance::PaperMlp => "paper_mlp",
            Provenance::SelfComputed => "self",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "paper_ds" => Ok(Provenance::PaperDs),
            "paper_mlp" => Ok(Provenance::PaperMlp),
            "self" | "self_computed" => Ok(Provenance::SelfComputed),
            _ => Err(Error::InvalidSpec(format!("unknown provenance `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub example: ExampleName,
    pub d: usize,
    pub provenance: Provenance,
    pub value: Vec<f64>,
}

/// Parsed fixture file: one [`ReferenceSolution`] per record.
#[derive(Debug, Clone, Default)]
pub struct FixtureTable {
    entries: Vec<ReferenceSolution>,
}

impl FixtureTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_FIXTURES).expect("bundled fixture file is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Whitespace-separated records `example d provenance k v_1 .. v_k`;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 5 {
                return Err(bad(format!("expected at least 5 fields, got {}", fields.len())));
            }
            let example: ExampleName = fields[0].parse().map_err(|e: Error| bad(e.to_string()))?;
            let d: usize = fields[1].parse().map_err(|e| bad(format!("bad d: {e}")))?;
            let provenance: Provenance = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
            let k: usize = fields[3].parse().map_err(|e| bad(format!("bad k: {e}")))?;
            if k != example.k() {
                return Err(bad(format!("{example} has k={}, record says {k}", example.k())));
            }
            if fields.len() != 4 + k {
                return Err(bad(format!("expected {k} value fields, got {}", fields.len() - 4)));
            }
            let value = fields[4..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("bad value `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if value.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite reference value".into()));
            }
            entries.push(ReferenceSolution {
                example,
                d,
                provenance,
                value,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ReferenceSolution] {
        &self.entries
    }

    pub fn reference_value(&self, example: ExampleName, d: usize, provenance: Provenance) -> Result<ReferenceSolution> {
        self.entries
            .iter()
            .find(|e| e.example == example && e.d == d && e.provenance == provenance)
            .cloned()
            .ok_or_else(|| Error::MissingFixture {
                example: example.to_string(),
                d,
                provenance: provenance.to_string(),
            })
    }
}

/// Looks up a published reference value in the bundled fixtures.
pub fn reference_value(example: ExampleName, d: usize, provenance: Provenance) -> Result<ReferenceSolution> {
    FixtureTable::builtin().reference_value(example, d, provenance)
}
