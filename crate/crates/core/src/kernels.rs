//! Convolution δ-kernels, localizers, and sampling certifiers for their
//! size, smoothness, cancellation and decay conditions.
//!
//! Suprema are estimated from seeded log-uniform samples in radius (uniform in
//! angle). Convergence of an integral is witnessed by dyadic-shell partial sums
//! whose increments shrink geometrically; see [`crate::shells`].

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, GridFunction, Point};
use crate::shells::{PolarRule, ShellTrend};

pub type Evaluator = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Smallest sample budget accepted by the kernel certifier.
pub const MIN_BUDGET: usize = 1000;
/// Relative change between half and full budget tolerated for a stable constant.
pub const STABILITY_TOLERANCE: f64 = 0.25;
/// Tolerance on `∫ψ = 1`.
pub const PSI_MASS_TOLERANCE: f64 = 1e-6;
/// Sampled radii cover `[2^-R, 2^R]`.
const LOG2_RADIUS_RANGE: f64 = 10.0;

#[derive(Clone)]
pub struct ConvolutionKernel {
    pub name: String,
    pub dim: usize,
    pub delta: f64,
    pub size_constant: f64,
    pub cancellation_bound: f64,
    pub extra_decay: Option<f64>,
    pub odd_symmetric: bool,
    /// Radius outside which the kernel vanishes, when known.
    pub support_radius: Option<f64>,
    eval: Evaluator,
}

impl fmt::Debug for ConvolutionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvolutionKernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("delta", &self.delta)
            .field("size_constant", &self.size_constant)
            .field("cancellation_bound", &self.cancellation_bound)
            .field("extra_decay", &self.extra_decay)
            .field("odd_symmetric", &self.odd_symmetric)
            .finish()
    }
}

impl ConvolutionKernel {
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            delta: 1.0,
            size_constant: 1.0,
            cancellation_bound: 0.0,
            extra_decay: None,
            odd_symmetric: false,
            support_radius: None,
            eval: Arc::new(eval),
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_constants(mut self, size: f64, cancellation: f64) -> Self {
        self.size_constant = size;
        self.cancellation_bound = cancellation;
        self
    }

    pub fn with_extra_decay(mut self, eps: Option<f64>) -> Self {
        self.extra_decay = eps;
        self
    }

    pub fn odd(mut self, odd: bool) -> Self {
        self.odd_symmetric = odd;
        self
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        (self.eval)(x)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.eval.clone()
    }

    /// The product kernel `x -> K(x) η(x)`.
    pub fn localized(&self, eta: &Localizer) -> Self {
        let k = self.eval.clone();
        let e = eta.evaluator();
        let odd = self.odd_symmetric && eta.even;
        Self {
            name: format!("{}*{}", self.name, eta.name),
            dim: self.dim,
            delta: self.delta.min(eta.delta),
            size_constant: self.size_constant * eta.sup_bound,
            cancellation_bound: self.cancellation_bound,
            extra_decay: if eta.compact_radius.is_some() { Some(1.0) } else { self.extra_decay },
            odd_symmetric: odd,
            support_radius: match (self.support_radius, eta.compact_radius) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            eval: Arc::new(move |x| k(x) * e(x)),
        }
    }

    /// The reflected kernel `x -> K(-x)`.
    pub fn reflected(&self) -> Self {
        let k = self.eval.clone();
        Self { name: format!("{}~", self.name), eval: Arc::new(move |x| k([-x[0], -x[1]])), ..self.clone() }
    }

    /// Kernel given by samples on a grid, multilinearly interpolated between
    /// cell centers and zero outside the sampled box.
    pub fn from_samples(name: impl Into<String>, samples: &GridFunction) -> Self {
        let grid = *samples.grid();
        let values: Arc<Vec<f64>> = Arc::new(samples.values().to_vec());
        let dim = grid.dim();
        let eval = move |x: Point| interpolate(&grid, &values, x);
        Self::new(name, dim, eval)
    }

    /// Checks `K(-x) = -K(x)` on a seeded sample of points.
    pub fn check_odd(&self, samples: usize, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples).all(|_| {
            let x = sample_point(&mut rng, self.dim, LOG2_RADIUS_RANGE);
            self.eval(x) == -self.eval([-x[0], -x[1]])
        })
    }
}

fn interpolate(grid: &crate::grid::Grid, values: &[f64], x: Point) -> f64 {
    let h = grid.spacing();
    let n = grid.points_per_axis();
    let l = grid.half_width();
    let axis = |c: f64| -> Option<(usize, f64)> {
        let t = (c + l) / h - 0.5;
        if t < 0.0 || t > (n - 1) as f64 {
            return None;
        }
        let i = (t.floor() as usize).min(n - 2);
        Some((i, t - i as f64))
    };
    let Some((i, ti)) = axis(x[0]) else { return 0.0 };
    if grid.dim() == 1 {
        return values[i] * (1.0 - ti) + values[i + 1] * ti;
    }
    let Some((j, tj)) = axis(x[1]) else { return 0.0 };
    let v = |a: usize, b: usize| values[a * n + b];
    (1.0 - ti) * ((1.0 - tj) * v(i, j) + tj * v(i, j + 1)) + ti * ((1.0 - tj) * v(i + 1, j) + tj * v(i + 1, j + 1))
}

/// `K(x) = 1/(πx)`.
pub fn hilbert_kernel() -> ConvolutionKernel {
    ConvolutionKernel::new("hilbert", 1, |x| 1.0 / (std::f64::consts::PI * x[0]))
        .with_constants(1.0 / std::f64::consts::PI, 0.0)
        .odd(true)
}

/// `K(x) = c_n x_j / |x|^{n+1}` with `c_1 = 1/π`, `c_2 = 1/(2π)`; `j` is 1-based.
pub fn riesz_kernel(j: usize, n: usize) -> Result<ConvolutionKernel> {
    if !(n == 1 || n == 2) || j == 0 || j > n {
        return Err(Error::InvalidArgument(format!("riesz kernel needs 1 <= j <= n <= 2, got j={j} n={n}")));
    }
    let c = if n == 1 { 1.0 / std::f64::consts::PI } else { 1.0 / std::f64::consts::TAU };
    let axis = j - 1;
    let k = if n == 1 {
        ConvolutionKernel::new("riesz1", 1, move |x| c * x[0] / (x[0] * x[0]))
    } else {
        ConvolutionKernel::new(format!("riesz{j}"), 2, move |x| {
            let r = norm(x);
            c * x[axis] / (r * r * r)
        })
    };
    Ok(k.with_constants(c, 0.0).odd(true))
}

/// `K(x) = |x|^{-n}`: satisfies size and smoothness but has no cancellation.
pub fn inverse_power_kernel(n: usize) -> ConvolutionKernel {
    ConvolutionKernel::new(format!("inverse-power{n}"), n, move |x| norm(x).powi(-(n as i32)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalizerKind {
    Eta,
    Psi,
}

/// A spatial cutoff η or a Fourier-side mollifier ψ.
#[derive(Clone)]
pub struct Localizer {
    pub name: String,
    pub kind: LocalizerKind,
    pub dim: usize,
    pub delta: f64,
    /// Radius outside which the function vanishes, when known.
    pub compact_radius: Option<f64>,
    /// Known bound on `sup |value|`.
    pub sup_bound: f64,
    /// Whether the function is even.
    pub even: bool,
    eval: Evaluator,
}

impl fmt::Debug for Localizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Localizer")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("compact_radius", &self.compact_radius)
            .finish()
    }
}

impl Localizer {
    pub fn new(
        name: impl Into<String>,
        kind: LocalizerKind,
        dim: usize,
        eval: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            dim,
            delta: 1.0,
            compact_radius: None,
            sup_bound: 1.0,
            even: false,
            eval: Arc::new(eval),
        }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        (self.eval)(x)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.eval.clone()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let e = self.eval.clone();
        Self {
            name: format!("{s}*{}", self.name),
            sup_bound: self.sup_bound * s.abs(),
            eval: Arc::new(move |x| s * e(x)),
            ..self.clone()
        }
    }
}

/// Smooth transition: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// The standard C∞ bump: 1 on `B(0,1)`, 0 outside `B(0,2)`.
pub fn standard_bump(dim: usize) -> Localizer {
    let mut l = Localizer::new("bump", LocalizerKind::Eta, dim, |x| smooth_step(2.0 - norm(x)));
    l.compact_radius = Some(2.0);
    l.even = true;
    l
}

/// Constant cutoff `η ≡ c` (a control that fails the decay condition).
pub fn constant_eta(dim: usize, c: f64) -> Localizer {
    let mut l = Localizer::new(format!("const{c}"), LocalizerKind::Eta, dim, move |_| c);
    l.sup_bound = c.abs();
    l.even = true;
    if c == 0.0 {
        l.compact_radius = Some(0.0);
    }
    l
}

/// Normalized Gaussian `(2πσ²)^{-n/2} exp(-|x|²/(2σ²))`.
pub fn gaussian_psi(dim: usize, sigma: f64) -> Localizer {
    let c = (std::f64::consts::TAU * sigma * sigma).powf(-(dim as f64) / 2.0);
    let mut l = Localizer::new(format!("gauss{sigma}"), LocalizerKind::Psi, dim, move |x| {
        c * (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sigma * sigma)).exp()
    });
    l.sup_bound = c;
    l.even = true;
    l
}

/// `ψ ≡ 0`; fails `∫ψ = 1` and serves identity tests that bypass certification.
pub fn zero_psi(dim: usize) -> Localizer {
    let mut l = Localizer::new("zero", LocalizerKind::Psi, dim, |_| 0.0);
    l.sup_bound = 0.0;
    l.even = true;
    l.compact_radius = Some(0.0);
    l
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub condition: String,
    pub point: Point,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    /// Observed constant (full budget).
    pub observed: f64,
    /// Same estimate from the first half of the budget.
    pub observed_half: f64,
    pub passed: bool,
    /// Shell data backing integral conditions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shells: Option<ShellTrend>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl ConditionReport {
    fn sampled(name: &str, half: f64, full: f64) -> Self {
        let passed = full.is_finite() && half.is_finite() && relative_change(half, full) < STABILITY_TOLERANCE;
        Self {
            name: name.into(),
            observed: full,
            observed_half: half,
            passed,
            shells: None,
            note: String::new(),
        }
    }

    fn shell(name: &str, trend: ShellTrend) -> Self {
        let total = trend.total();
        Self {
            name: name.into(),
            observed: total,
            observed_half: total,
            passed: total.is_finite() && trend.decaying,
            shells: Some(trend),
            note: String::new(),
        }
    }

    /// Relative change between half and full budget.
    pub fn stability(&self) -> f64 {
        relative_change(self.observed_half, self.observed)
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCertificate {
    pub subject: String,
    pub budget: usize,
    pub seed: u64,
    pub conditions: Vec<ConditionReport>,
    pub witnesses: Vec<Witness>,
}

impl KernelCertificate {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn condition_passed(&self, name: &str) -> bool {
        self.condition(name).is_some_and(|c| c.passed)
    }

    pub fn observed(&self, name: &str) -> f64 {
        self.condition(name).map_or(f64::NAN, |c| c.observed)
    }

    pub fn observed_size_constant(&self) -> f64 {
        self.observed(SIZE)
    }

    pub fn observed_smoothness_constant(&self) -> f64 {
        self.observed(SMOOTHNESS)
    }

    pub fn observed_cancellation(&self) -> f64 {
        self.observed(CANCELLATION)
    }
}

pub const SIZE: &str = "size";
pub const SMOOTHNESS: &str = "smoothness";
pub const CANCELLATION: &str = "cancellation";
pub const BOUNDED: &str = "bounded";
pub const LOCAL_LIPSCHITZ: &str = "local-lipschitz";
pub const DECAY_NEAR_ZERO: &str = "decay-near-zero";
pub const DECAY_AT_INFINITY: &str = "decay-at-infinity";
pub const UNIT_MASS: &str = "unit-mass";
pub const L1_FINITE: &str = "l1-finite";
pub const L2_FINITE: &str = "l2-finite";
pub const TAIL_MOMENT: &str = "tail-moment";
pub const TAIL_SMOOTHNESS: &str = "tail-smoothness";

fn sample_direction(rng: &mut ChaCha8Rng, dim: usize) -> Point {
    if dim == 1 {
        [if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0]
    } else {
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        [th.cos(), th.sin()]
    }
}

fn sample_point(rng: &mut ChaCha8Rng, dim: usize, log2_range: f64) -> Point {
    let r = rng.gen_range(-log2_range..log2_range).exp2();
    let d = sample_direction(rng, dim);
    [r * d[0], r * d[1]]
}

/// Pair `(x, y)` with `0 < 2|y| <= |x|`, `|y|/|x|` log-uniform in `[2^-13, 1/2]`.
fn sample_pair(rng: &mut ChaCha8Rng, dim: usize) -> (Point, Point) {
    let x = sample_point(rng, dim, LOG2_RADIUS_RANGE);
    let u = rng.gen_range(-13.0..-1.0f64).exp2();
    let d = sample_direction(rng, dim);
    let ry = u * norm(x);
    (x, [ry * d[0], ry * d[1]])
}

/// Running max over a stream, recorded at the half-way mark and at the end.
struct HalfFullMax {
    half_at: usize,
    count: usize,
    max: f64,
    half: f64,
}

impl HalfFullMax {
    fn new(budget: usize) -> Self {
        Self { half_at: budget / 2, count: 0, max: 0.0, half: 0.0 }
    }

    fn push(&mut self, v: f64) {
        if v.is_nan() || v > self.max {
            self.max = if v.is_nan() { f64::INFINITY } else { v };
        }
        self.count += 1;
        if self.count == self.half_at {
            self.half = self.max;
        }
    }
}

/// Number of dyadic shells examined on each side of the unit sphere.
fn shell_count(budget: usize) -> i32 {
    ((budget as f64).log2().ceil() as i32).max(8)
}

/// Samples the size, smoothness and cancellation conditions of `k`.
///
/// A sampled constant passes when it is finite and the half-budget estimate is
/// within [`STABILITY_TOLERANCE`] of the full one. Cancellation passes when the
/// largest annulus integral over `S` shells each side of the unit sphere
/// exceeds the same supremum over `S/2` shells by at most a quarter.
pub fn certify_delta_kernel(k: &ConvolutionKernel, budget: usize, seed: u64) -> Result<KernelCertificate> {
    if budget < MIN_BUDGET {
        return Err(Error::InvalidArgument(format!("budget {budget} below {MIN_BUDGET}")));
    }
    let n = k.dim as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witnesses = Vec::new();

    let mut size = HalfFullMax::new(budget);
    for _ in 0..budget {
        let x = sample_point(&mut rng, k.dim, LOG2_RADIUS_RANGE);
        let v = k.eval(x);
        if !v.is_finite() {
            witnesses.push(Witness { condition: SIZE.into(), point: x, value: v });
        }
        size.push(v.abs() * norm(x).powi(n));
    }

    let mut smooth = HalfFullMax::new(budget);
    for _ in 0..budget {
        let (x, y) = sample_pair(&mut rng, k.dim);
        let a = k.eval(sub(x, y));
        let b = k.eval(x);
        if !(a.is_finite() && b.is_finite()) {
            witnesses.push(Witness { condition: SMOOTHNESS.into(), point: x, value: if a.is_finite() { b } else { a } });
        }
        let ratio = (a - b).abs() * norm(x).powf(k.dim as f64 + k.delta) / norm(y).powf(k.delta);
        smooth.push(ratio);
    }

    let s = shell_count(budget);
    let rule = PolarRule::new(k.dim, 32, 64);
    let mut radii = Vec::new();
    let mut incs = Vec::new();
    for j in -s..s {
        let mut bad = None;
        let v = rule.shell_integral(j, |x| {
            let v = k.eval(x);
            if !v.is_finite() && bad.is_none() {
                bad = Some((x, v));
            }
            v
        });
        if let Some((p, val)) = bad {
            witnesses.push(Witness { condition: CANCELLATION.into(), point: p, value: val });
        }
        radii.push((j as f64 + 1.0).exp2());
        incs.push(v);
    }
    let sup_full = annulus_sup(&incs);
    let q = (s / 2) as usize;
    let inner = &incs[(s as usize - q)..(s as usize + q)];
    let sup_half = annulus_sup(inner);
    let cancel_ok = sup_full.is_finite() && sup_full <= 1.25 * sup_half + 1e-12;
    let trend = ShellTrend::from_increments(radii, incs);

    let mut conditions = vec![
        ConditionReport::sampled(SIZE, size.half, size.max),
        ConditionReport::sampled(SMOOTHNESS, smooth.half, smooth.max),
        ConditionReport {
            name: CANCELLATION.into(),
            observed: sup_full,
            observed_half: sup_half,
            passed: cancel_ok,
            shells: Some(trend),
            note: format!("sup over annuli within 2^-{s}..2^{s}; half range 2^-{q}..2^{q}"),
        },
    ];
    if !witnesses.is_empty() {
        for c in conditions.iter_mut() {
            if witnesses.iter().any(|w| w.condition == c.name) {
                c.passed = false;
            }
        }
    }
    Ok(KernelCertificate { subject: k.name.clone(), budget, seed, conditions, witnesses })
}

/// `sup_{i<j} |Σ_{i<=m<j} inc_m|`: the largest annulus integral assembled from
/// consecutive shells.
fn annulus_sup(incs: &[f64]) -> f64 {
    let mut acc = 0.0;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in incs {
        acc += v;
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    hi - lo
}

/// Certifies a spatial cutoff with the default budget and seed.
pub fn certify_localizer_eta(eta: &Localizer, delta: f64) -> Result<KernelCertificate> {
    certify_localizer_eta_with(eta, delta, 20_000, 0x5eed)
}

/// Boundedness, the local Lipschitz-ratio condition
/// `sup_{2|y|<=|x|} |η(x-y)-η(x)| |x|^δ/|y|^δ < ∞`, and convergence of
/// `∫_{|x|<1} |η-1|/|x|^n` and `∫_{|x|>=1} |η|/|x|^n` by dyadic shells.
pub fn certify_localizer_eta_with(eta: &Localizer, delta: f64, budget: usize, seed: u64) -> Result<KernelCertificate> {
    if eta.kind != LocalizerKind::Eta {
        return Err(Error::InvalidArgument(format!("{} is not a spatial cutoff", eta.name)));
    }
    if budget < MIN_BUDGET {
        return Err(Error::InvalidArgument(format!("budget {budget} below {MIN_BUDGET}")));
    }
    let dim = eta.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witnesses = Vec::new();

    let mut bound = HalfFullMax::new(budget);
    for _ in 0..budget {
        let x = sample_point(&mut rng, dim, LOG2_RADIUS_RANGE);
        let v = eta.eval(x);
        if !v.is_finite() {
            witnesses.push(Witness { condition: BOUNDED.into(), point: x, value: v });
        }
        bound.push(v.abs());
    }

    let mut lip = HalfFullMax::new(budget);
    for _ in 0..budget {
        let (x, y) = sample_pair(&mut rng, dim);
        let r = (eta.eval(sub(x, y)) - eta.eval(x)).abs() * (norm(x) / norm(y)).powf(delta);
        if !r.is_finite() {
            witnesses.push(Witness { condition: LOCAL_LIPSCHITZ.into(), point: x, value: r });
        }
        lip.push(r);
    }

    let rule = PolarRule::new(dim, 32, 64);
    let shells = 24;
    let n = dim as i32;
    let (mut r0, mut i0) = (Vec::new(), Vec::new());
    for k in 1..=shells {
        // Shells march inward: [2^-k, 2^{-k+1}).
        r0.push((-(k as f64)).exp2());
        i0.push(rule.shell_integral(-k, |x| (eta.eval(x) - 1.0).abs() / norm(x).powi(n)));
    }
    let (mut r1, mut i1) = (Vec::new(), Vec::new());
    for k in 0..shells {
        r1.push((k as f64 + 1.0).exp2());
        i1.push(rule.shell_integral(k, |x| eta.eval(x).abs() / norm(x).powi(n)));
    }

    let mut conditions = vec![
        ConditionReport::sampled(BOUNDED, bound.half, bound.max),
        ConditionReport::sampled(LOCAL_LIPSCHITZ, lip.half, lip.max),
        ConditionReport::shell(DECAY_NEAR_ZERO, ShellTrend::from_increments(r0, i0)),
        ConditionReport::shell(DECAY_AT_INFINITY, ShellTrend::from_increments(r1, i1)),
    ];
    let at_origin = eta.eval([0.0, 0.0]);
    conditions[0].note = format!("eta(0) = {at_origin}");
    for c in conditions.iter_mut() {
        if witnesses.iter().any(|w| w.condition == c.name) {
            c.passed = false;
        }
    }
    Ok(KernelCertificate { subject: eta.name.clone(), budget, seed, conditions, witnesses })
}

/// Log-radial sampling of `ψ` used by the ψ certifier: nodes `ρ_i`, their
/// weights, and sphere sums of `|ψ|`, `ψ`, `ψ²`.
struct RadialProfile {
    rule: PolarRule,
    lo_shell: i32,
    hi_shell: i32,
}

impl RadialProfile {
    fn shells(&self, mut g: impl FnMut(Point) -> f64) -> (Vec<f64>, Vec<f64>) {
        let mut radii = Vec::new();
        let mut incs = Vec::new();
        for k in self.lo_shell..self.hi_shell {
            radii.push((k as f64 + 1.0).exp2());
            incs.push(self.rule.shell_integral(k, &mut g));
        }
        (radii, incs)
    }
}

/// Mass, integrability and the two tail conditions on a Fourier-side mollifier.
///
/// The tail conditions are evaluated with radial cumulative integrals of `|ψ|`
/// (tail mass beyond `|x|/2` and the `δ`-moment inside it) and a nested polar
/// rule for the difference integral; their outer shells over `|x| >= 1` must
/// decay geometrically.
pub fn certify_localizer_psi(psi: &Localizer) -> Result<KernelCertificate> {
    if psi.kind != LocalizerKind::Psi {
        return Err(Error::InvalidArgument(format!("{} is not a mollifier", psi.name)));
    }
    let dim = psi.dim;
    let n = dim as i32;
    let delta = psi.delta;
    let prof = RadialProfile { rule: PolarRule::new(dim, 32, 64), lo_shell: -40, hi_shell: 24 };
    let mut witnesses = Vec::new();

    let (_, mass_incs) = prof.shells(|x| psi.eval(x));
    let mass: f64 = mass_incs.iter().sum();
    let mass_ok = (mass - 1.0).abs() <= PSI_MASS_TOLERANCE;

    let check_both_ends = |name: &str, radii: Vec<f64>, incs: Vec<f64>| {
        let trend = ShellTrend::from_increments(radii, incs.clone());
        let inward: Vec<f64> = incs.iter().rev().copied().collect();
        let inner_ok = crate::shells::decays_geometrically(&inward);
        let mut rep = ConditionReport::shell(name, trend);
        rep.passed = rep.passed && inner_ok;
        rep
    };
    let (radii, l1) = prof.shells(|x| psi.eval(x).abs());
    let l1_rep = check_both_ends(L1_FINITE, radii.clone(), l1.clone());
    let (_, l2) = prof.shells(|x| psi.eval(x).powi(2));
    let mut l2_rep = check_both_ends(L2_FINITE, radii.clone(), l2);
    l2_rep.observed = l2_rep.observed.sqrt();

    // Cumulative radial profiles on the log-node lattice: node m of shell k
    // has radius 2^{k + (m + 1/2)/P}.
    let p = prof.rule.per_octave;
    let mut node_r = Vec::new();
    let mut abs_w = Vec::new();
    let mut mom_w = Vec::new();
    for k in prof.lo_shell..prof.hi_shell {
        for (rho, w) in prof.rule.shell_nodes(k) {
            let s = prof.rule.sphere_sum(rho, &mut |x| psi.eval(x).abs());
            if !s.is_finite() {
                witnesses.push(Witness { condition: L1_FINITE.into(), point: [rho, 0.0], value: s });
            }
            node_r.push(rho);
            abs_w.push(w * s);
            mom_w.push(w * s * rho.powf(delta));
        }
    }
    let total_abs: f64 = abs_w.iter().sum();
    // tail[i] = mass of |ψ| at nodes >= i; moment[i] = δ-moment at nodes < i.
    let mut tail = vec![0.0; node_r.len() + 1];
    for i in (0..node_r.len()).rev() {
        tail[i] = tail[i + 1] + abs_w[i];
    }
    let mut moment = vec![0.0; node_r.len() + 1];
    for i in 0..node_r.len() {
        moment[i + 1] = moment[i] + mom_w[i];
    }
    // Node index of radius |x|/2 is exactly P below that of |x|.
    let offset = (0 - prof.lo_shell) as usize * p;
    let area = if dim == 1 { 2.0 } else { std::f64::consts::TAU };
    let ds = std::f64::consts::LN_2 / p as f64;
    let mut radii_out = Vec::new();
    let mut tail_incs = Vec::new();
    for k in 0..prof.hi_shell - 1 {
        let mut shell = 0.0;
        for m in 0..p {
            let i = offset + k as usize * p + m;
            let rho = node_r[i];
            let half = i - p;
            let outer = tail[half] / rho.powi(n);
            let inner = moment[half] / rho.powf(dim as f64 + delta);
            shell += ds * rho.powi(n) * area * (outer + inner);
        }
        radii_out.push((k as f64 + 1.0).exp2());
        tail_incs.push(shell);
    }
    let tail_rep = ConditionReport::shell(TAIL_MOMENT, ShellTrend::from_increments(radii_out.clone(), tail_incs));

    // Nested difference integral over |x| >= 1, |y| <= |x|/2.
    let outer_rule = PolarRule::new(dim, 8, 16);
    let inner_rule = PolarRule::new(dim, 8, 16);
    let mut smooth_incs = Vec::new();
    for k in 0..prof.hi_shell - 1 {
        let v = outer_rule.shell_integral(k, |x| {
            let rx = norm(x);
            let top = (rx / 2.0).log2().floor() as i32;
            let px = psi.eval(x);
            let mut acc = 0.0;
            // y shells strictly inside |x|/2, 40 octaves deep.
            for j in (top - 40)..top {
                acc += inner_rule.shell_integral(j, |y| (psi.eval(sub(x, y)) - px).abs() / norm(y).powi(n));
            }
            // Partial shell from 2^top to |x|/2.
            let frac = (rx / 2.0).log2() - top as f64;
            if frac > 0.0 {
                let steps = 8;
                let ds = frac * std::f64::consts::LN_2 / steps as f64;
                for m in 0..steps {
                    let rho = (top as f64 * std::f64::consts::LN_2 + (m as f64 + 0.5) * ds).exp();
                    acc += ds * inner_rule.sphere_sum(rho, &mut |y| (psi.eval(sub(x, y)) - px).abs());
                }
            }
            acc
        });
        smooth_incs.push(v);
    }
    let smooth_rep = ConditionReport::shell(TAIL_SMOOTHNESS, ShellTrend::from_increments(radii_out, smooth_incs));

    let mut conditions = vec![
        ConditionReport {
            name: UNIT_MASS.into(),
            observed: mass,
            observed_half: mass,
            passed: mass_ok,
            shells: None,
            note: format!("L1 mass {total_abs}"),
        },
        l1_rep,
        l2_rep,
        tail_rep,
        smooth_rep,
    ];
    for c in conditions.iter_mut() {
        if !c.observed.is_finite() || witnesses.iter().any(|w| w.condition == c.name) {
            c.passed = false;
        }
    }
    Ok(KernelCertificate { subject: psi.name.clone(), budget: 0, seed: 0, conditions, witnesses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn hilbert_values() {
        let k = hilbert_kernel();
        assert_eq!(k.eval([1.0, 0.0]), 1.0 / std::f64::consts::PI);
        assert!(k.check_odd(1000, 1));
    }

    #[test]
    fn hilbert_annulus_integral_vanishes() {
        let k = hilbert_kernel();
        let rule = PolarRule::new(1, 16, 2);
        let total: f64 = (-5..5).map(|j| rule.shell_integral(j, |x| k.eval(x))).sum();
        assert!(total.abs() < 1e-14);
    }

    #[test]
    fn riesz_oddness_and_normalization() {
        let k = riesz_kernel(1, 2).unwrap();
        assert!(k.check_odd(1000, 2));
        assert!((k.eval([1.0, 0.0]) - 1.0 / std::f64::consts::TAU).abs() < 1e-16);
        let k2 = riesz_kernel(2, 2).unwrap();
        assert_eq!(k2.eval([1.0, 0.0]), 0.0);
        assert_eq!(riesz_kernel(1, 1).unwrap().eval([2.0, 0.0]), 1.0 / (2.0 * std::f64::consts::PI));
        assert!(riesz_kernel(3, 2).is_err());
        assert!(riesz_kernel(1, 3).is_err());
    }

    #[test]
    fn riesz_smoothness_ratio_is_finite_on_dense_pairs() {
        let k = riesz_kernel(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m: f64 = 0.0;
        for _ in 0..100_000 {
            let (x, y) = sample_pair(&mut rng, 2);
            let r = (k.eval(sub(x, y)) - k.eval(x)).abs() * norm(x).powi(3) / norm(y);
            m = m.max(r);
        }
        assert!(m.is_finite() && m < 2.0, "{m}");
    }

    #[test]
    fn hilbert_certificate_passes() {
        let c = certify_delta_kernel(&hilbert_kernel(), 4000, 11).unwrap();
        assert!(c.passed(), "{c:#?}");
        assert!(c.observed_cancellation() < 1e-12);
        assert!((c.observed_size_constant() - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn inverse_power_fails_cancellation_only() {
        let c = certify_delta_kernel(&inverse_power_kernel(1), 4000, 3).unwrap();
        assert!(c.condition_passed(SIZE));
        assert!(c.condition_passed(SMOOTHNESS));
        assert!(!c.condition_passed(CANCELLATION));
        let incs = &c.condition(CANCELLATION).unwrap().shells.as_ref().unwrap().increments;
        for v in incs {
            assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_kernel_yields_witness() {
        let k = ConvolutionKernel::new("bad", 1, |x| if x[0] > 100.0 { f64::NAN } else { 1.0 / x[0] });
        let c = certify_delta_kernel(&k, 2000, 5).unwrap();
        assert!(!c.passed());
        assert!(!c.witnesses.is_empty());
    }

    #[test]
    fn small_budget_rejected() {
        assert!(certify_delta_kernel(&hilbert_kernel(), 10, 0).is_err());
    }

    #[test]
    fn bump_cutoff_passes() {
        let c = certify_localizer_eta(&standard_bump(1), 1.0).unwrap();
        assert!(c.passed(), "{c:#?}");
        let c2 = certify_localizer_eta(&standard_bump(2), 1.0).unwrap();
        assert!(c2.passed(), "{c2:#?}");
    }

    #[test]
    fn constant_cutoffs_fail_decay() {
        let one = certify_localizer_eta(&constant_eta(1, 1.0), 1.0).unwrap();
        assert!(one.condition_passed(LOCAL_LIPSCHITZ));
        assert_eq!(one.observed(LOCAL_LIPSCHITZ), 0.0);
        assert!(one.condition_passed(DECAY_NEAR_ZERO));
        assert!(!one.condition_passed(DECAY_AT_INFINITY));
        let incs = &one.condition(DECAY_AT_INFINITY).unwrap().shells.as_ref().unwrap().increments;
        assert!(incs.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));

        let zero = certify_localizer_eta(&constant_eta(2, 0.0), 1.0).unwrap();
        assert!(!zero.condition_passed(DECAY_NEAR_ZERO));
    }

    #[test]
    fn psi_certificates() {
        for dim in [1, 2] {
            let c = certify_localizer_psi(&gaussian_psi(dim, 0.5)).unwrap();
            assert!(c.passed(), "{c:#?}");
            assert!((c.observed(UNIT_MASS) - 1.0).abs() < 1e-9);
        }
        let z = certify_localizer_psi(&zero_psi(1)).unwrap();
        assert!(!z.condition_passed(UNIT_MASS));
        let two = certify_localizer_psi(&gaussian_psi(1, 0.5).scaled(2.0)).unwrap();
        assert!(!two.condition_passed(UNIT_MASS));
        assert!((two.observed(UNIT_MASS) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn localized_kernel_inherits() {
        let k = hilbert_kernel().localized(&standard_bump(1));
        assert!(k.odd_symmetric);
        assert_eq!(k.eval([3.0, 0.0]), 0.0);
        assert_eq!(k.eval([0.5, 0.0]), 2.0 / std::f64::consts::PI);
        let c = certify_delta_kernel(&k, 4000, 9).unwrap();
        assert!(c.passed(), "{c:#?}");
    }

    #[test]
    fn sampled_kernel_interpolates() {
        let g = Grid::new(1, 4.0, 64).unwrap();
        let f = GridFunction::from_fn(g, |p| 2.0 * p[0] + 1.0).unwrap();
        let k = ConvolutionKernel::from_samples("lin", &f);
        assert!((k.eval([0.3, 0.0]) - 1.6).abs() < 1e-12);
        assert_eq!(k.eval([5.0, 0.0]), 0.0);
        let g2 = Grid::new(2, 1.0, 16).unwrap();
        let f2 = GridFunction::from_fn(g2, |p| p[0] - 3.0 * p[1]).unwrap();
        let k2 = ConvolutionKernel::from_samples("plane", &f2);
        assert!((k2.eval([0.2, 0.1]) - (0.2 - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn reflected_kernel() {
        let k = ConvolutionKernel::new("shift", 1, |x| (x[0] - 0.5).exp());
        let r = k.reflected();
        assert_eq!(r.eval([0.25, 0.0]), k.eval([-0.25, 0.0]));
    }
}
