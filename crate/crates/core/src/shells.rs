//! Dyadic-shell quadrature and the geometric-decay convergence test.

use serde::{Deserialize, Serialize};

use crate::grid::Point;

/// Ratio every one of the last few shell increments must respect against its
/// predecessor for a partial-sum sequence to count as convergent.
pub const DECAY_FACTOR: f64 = 0.9;
/// Number of trailing increments inspected by [`decays_geometrically`].
pub const DECAY_WINDOW: usize = 4;

/// True when each of the last `DECAY_WINDOW` increments is at most
/// `DECAY_FACTOR` times the one before it, or negligible against the total.
pub fn decays_geometrically(increments: &[f64]) -> bool {
    if increments.len() < DECAY_WINDOW + 1 {
        return false;
    }
    let total: f64 = increments.iter().map(|v| v.abs()).sum();
    let tol = 1e-12 * total.max(1.0);
    let tail = &increments[increments.len() - DECAY_WINDOW - 1..];
    tail.windows(2).all(|w| w[1].abs() <= tol || w[1].abs() <= DECAY_FACTOR * w[0].abs())
}

/// Shell-by-shell partial sums together with the verdict of the decay test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellTrend {
    /// Outer radius of each shell.
    pub radii: Vec<f64>,
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub decaying: bool,
}

impl ShellTrend {
    pub fn from_increments(radii: Vec<f64>, increments: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let partial_sums = increments
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        let decaying = decays_geometrically(&increments);
        Self { radii, increments, partial_sums, decaying }
    }

    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

/// Polar quadrature: midpoint rule in `ln |x|` with `per_octave` nodes per
/// dyadic shell, and in two dimensions a uniform angular rule whose nodes come
/// in antipodal pairs, so odd integrands cancel exactly.
#[derive(Clone, Copy, Debug)]
pub struct PolarRule {
    pub dim: usize,
    pub per_octave: usize,
    pub angles: usize,
}

impl PolarRule {
    pub fn new(dim: usize, per_octave: usize, angles: usize) -> Self {
        assert!(angles % 2 == 0);
        Self { dim, per_octave, angles }
    }

    /// Integral of `g` over the sphere of radius `rho`, divided by `rho^{n-1}`.
    /// Each antipodal pair is summed before accumulating.
    pub fn sphere_sum(&self, rho: f64, g: &mut impl FnMut(Point) -> f64) -> f64 {
        if self.dim == 1 {
            return g([rho, 0.0]) + g([-rho, 0.0]);
        }
        let half = self.angles / 2;
        let dtheta = std::f64::consts::TAU / self.angles as f64;
        let mut s = 0.0;
        for m in 0..half {
            let th = (m as f64 + 0.5) * dtheta;
            let p = [rho * th.cos(), rho * th.sin()];
            s += g(p) + g([-p[0], -p[1]]);
        }
        s * dtheta
    }

    /// Log-radius nodes of the shell `2^k <= |x| < 2^{k+1}` with their
    /// weights `d(ln rho) * rho^n`.
    pub fn shell_nodes(&self, k: i32) -> impl Iterator<Item = (f64, f64)> + '_ {
        let ds = std::f64::consts::LN_2 / self.per_octave as f64;
        let s0 = k as f64 * std::f64::consts::LN_2;
        let n = self.dim as i32;
        (0..self.per_octave).map(move |i| {
            let rho = (s0 + (i as f64 + 0.5) * ds).exp();
            (rho, ds * rho.powi(n))
        })
    }

    /// Integral of `g` over the shell `2^k <= |x| < 2^{k+1}`.
    pub fn shell_integral(&self, k: i32, mut g: impl FnMut(Point) -> f64) -> f64 {
        self.shell_nodes(k).map(|(rho, w)| w * self.sphere_sum(rho, &mut g)).sum()
    }

    /// Integral of a function of `|x|` only over the same shell.
    pub fn radial_shell_integral(&self, k: i32, mut g: impl FnMut(f64) -> f64) -> f64 {
        let area = if self.dim == 1 { 2.0 } else { std::f64::consts::TAU };
        self.shell_nodes(k).map(|(rho, w)| w * area * g(rho)).sum()
    }
}
