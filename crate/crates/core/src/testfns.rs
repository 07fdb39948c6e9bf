//! Built-in multiplier functions `b` used by the experiments.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, Grid, GridFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BuiltinB {
    /// `max(0, ln(1/|x|))`: in bmo, not in lmo.
    ClippedLog,
    /// `(1 - |x|)_+`: Lipschitz with compact support.
    LipschitzBump,
    /// Seeded sum of eight cosines with decaying amplitudes.
    RandomOscillation { seed: u64 },
    Constant(f64),
}

impl BuiltinB {
    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        match *self {
            BuiltinB::ClippedLog => GridFunction::from_fn(*grid, |p| (1.0 / norm(p)).ln().max(0.0)),
            BuiltinB::LipschitzBump => GridFunction::from_fn(*grid, |p| (1.0 - norm(p)).max(0.0)),
            BuiltinB::Constant(c) => Ok(GridFunction::constant(*grid, c)),
            BuiltinB::RandomOscillation { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let waves: Vec<(f64, [f64; 2], f64)> = (1..=8)
                    .map(|k| {
                        let amp = rng.gen_range(0.5..1.0) / k as f64;
                        let freq = rng.gen_range(1.0..16.0);
                        let theta = if grid.dim() == 1 { 0.0 } else { rng.gen_range(0.0..std::f64::consts::TAU) };
                        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                        (amp, [freq * theta.cos(), freq * theta.sin()], phase)
                    })
                    .collect();
                GridFunction::from_fn(*grid, |p| {
                    waves.iter().map(|(a, w, ph)| a * (w[0] * p[0] + w[1] * p[1] + ph).cos()).sum()
                })
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, BuiltinB::Constant(_))
    }
}

impl fmt::Display for BuiltinB {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinB::ClippedLog => write!(f, "clipped-log"),
            BuiltinB::LipschitzBump => write!(f, "lipschitz-bump"),
            BuiltinB::RandomOscillation { seed } => write!(f, "random-osc:{seed}"),
            BuiltinB::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for BuiltinB {
    type Err = Error;

    /// Accepts `clipped-log`, `lipschitz-bump`, `random-osc[:seed]`, `constant[:c]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Parse(format!("bad argument in b spec `{s}`"));
        match (name.trim(), arg) {
            ("clipped-log", None) => Ok(BuiltinB::ClippedLog),
            ("lipschitz-bump", None) => Ok(BuiltinB::LipschitzBump),
            ("random-osc", a) => Ok(BuiltinB::RandomOscillation { seed: a.map_or(Ok(7), |v| v.parse().map_err(|_| bad()))? }),
            ("constant", a) => Ok(BuiltinB::Constant(a.map_or(Ok(1.0), |v| v.parse().map_err(|_| bad()))?)),
            _ => Err(Error::Parse(format!("unknown b function `{s}`"))),
        }
    }
}
