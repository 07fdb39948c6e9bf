//! Oscillation norms over finite ball families, maximal functions, the
//! smooth-maximal `h¹` estimate, and the mean and weighted-tail ratios.
//!
//! Every supremum here runs over a finite family and is therefore a lower
//! bound for the continuum quantity. Ball measures are discrete (cell count
//! times `h^dim`) throughout, so discrete identities hold to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sub, Ball, Grid, GridFunction, Point, Region};
use crate::operators::convolve;
use crate::shells::ShellTrend;

/// Balls centered on a vertex lattice with dyadic radii.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
}

impl BallFamily {
    /// Centers at the cell vertices `-L + k s h` (`s` = stride) and radii
    /// `2^k h`, `k >= 2`, up to `r_max`, plus any `extra_radii`. Balls that do
    /// not fit in the box are dropped.
    pub fn dyadic(grid: &Grid, stride: usize, r_max: f64, extra_radii: &[f64]) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("family stride must be positive".into()));
        }
        let h = grid.spacing();
        let mut radii = Vec::new();
        let mut r = 4.0 * h;
        while r <= r_max * (1.0 + 1e-12) {
            radii.push(r);
            r *= 2.0;
        }
        radii.extend_from_slice(extra_radii);
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let n = grid.points_per_axis();
        let l = grid.half_width();
        let ticks: Vec<f64> = (1..n).step_by(stride).map(|k| -l + k as f64 * h).collect();
        let mut centers: Vec<Point> = Vec::new();
        if grid.dim() == 1 {
            centers.extend(ticks.iter().map(|&x| [x, 0.0]));
        } else {
            for &x in &ticks {
                for &y in &ticks {
                    centers.push([x, y]);
                }
            }
        }
        let balls = radii
            .iter()
            .flat_map(|&r| centers.iter().map(move |&c| Ball { center: c, radius: r }))
            .filter(|b| grid.ball_fits(b))
            .collect();
        Ok(Self { balls })
    }

    pub fn from_balls(balls: Vec<Ball>) -> Self {
        Self { balls }
    }

    /// Every cell center as a center and every radius `m h`, `m = 1..N`,
    /// clipped-away balls dropped; meant for tiny grids.
    pub fn exhaustive(grid: &Grid) -> Self {
        let h = grid.spacing();
        let mut balls = Vec::new();
        for m in 1..=grid.points_per_axis() {
            for i in 0..grid.len() {
                let b = Ball { center: grid.point(i), radius: m as f64 * h };
                if grid.ball_fits(&b) {
                    balls.push(b);
                }
            }
        }
        Self { balls }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.balls.iter().map(|b| b.radius).collect();
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub value: f64,
    pub ball: Option<Ball>,
}

impl NormEntry {
    const ZERO: NormEntry = NormEntry { value: 0.0, ball: None };

    fn offer(&mut self, v: f64, b: &Ball) {
        if self.ball.is_none() || v > self.value {
            self.value = v;
            self.ball = Some(*b);
        }
    }
}

/// All oscillation quantities of one function over one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    /// `sup_B (⨍_B |b - c_B|^p)^{1/p}` for `p = 1, 2, 6`.
    pub bmo: NormEntry,
    pub bmo2: NormEntry,
    pub bmo6: NormEntry,
    /// The `p = 1` supremum split by the two `c_B` rules.
    pub small_balls: NormEntry,
    pub large_balls: NormEntry,
    /// `sup_{r<1} ⨍_B |b - b_B|` and its `L²` version.
    pub bmo_loc: NormEntry,
    pub bmo_loc2: NormEntry,
    /// `sup_{r<1} log(1 + 1/r) ⨍_B |b - b_B|` and its `L²` version.
    pub lmo_loc: NormEntry,
    pub lmo_loc2: NormEntry,
    /// `sup_{r>=1} ⨍_B |b|`.
    pub large_mean: NormEntry,
    /// `lmo_loc + large_mean`.
    pub lmo: f64,
    pub balls: usize,
}

impl OscillationReport {
    pub fn bmo_p(&self, p: u32) -> Result<f64> {
        match p {
            1 => Ok(self.bmo.value),
            2 => Ok(self.bmo2.value),
            6 => Ok(self.bmo6.value),
            _ => Err(Error::InvalidArgument(format!("p = {p} not in {{1, 2, 6}}"))),
        }
    }
}

#[derive(Clone, Copy)]
struct BallStats {
    osc1: f64,
    osc2: f64,
    osc6: f64,
    loc1: f64,
    loc2: f64,
    mean_abs: f64,
}

fn ball_stats(b: &GridFunction, ball: &Ball) -> Option<BallStats> {
    let cells = b.grid().cells_in_ball(ball);
    if cells.is_empty() {
        return None;
    }
    let m = cells.len() as f64;
    let v = b.values();
    let mean = cells.iter().map(|&i| v[i]).sum::<f64>() / m;
    let c = if ball.is_small() { mean } else { 0.0 };
    let (mut s1, mut s2, mut s6, mut l1, mut l2, mut a) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &cells {
        let d = (v[i] - c).abs();
        s1 += d;
        s2 += d * d;
        s6 += d.powi(6);
        let e = (v[i] - mean).abs();
        l1 += e;
        l2 += e * e;
        a += v[i].abs();
    }
    let osc1 = s1 / m;
    // Power means are monotone in p; the max removes rounding-level inversions.
    let osc2 = (s2 / m).sqrt().max(osc1);
    let osc6 = (s6 / m).powf(1.0 / 6.0).max(osc2);
    let loc1 = l1 / m;
    let loc2 = (l2 / m).sqrt().max(loc1);
    Some(BallStats { osc1, osc2, osc6, loc1, loc2, mean_abs: a / m })
}

/// One pass over the family computing every oscillation norm.
pub fn oscillation_report(b: &GridFunction, family: &BallFamily) -> Result<OscillationReport> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty ball family".into()));
    }
    let per_ball: Vec<Option<BallStats>> = family.balls.par_iter().map(|ball| ball_stats(b, ball)).collect();
    let mut rep = OscillationReport {
        bmo: NormEntry::ZERO,
        bmo2: NormEntry::ZERO,
        bmo6: NormEntry::ZERO,
        small_balls: NormEntry::ZERO,
        large_balls: NormEntry::ZERO,
        bmo_loc: NormEntry::ZERO,
        bmo_loc2: NormEntry::ZERO,
        lmo_loc: NormEntry::ZERO,
        lmo_loc2: NormEntry::ZERO,
        large_mean: NormEntry::ZERO,
        lmo: 0.0,
        balls: family.len(),
    };
    for (ball, st) in family.balls.iter().zip(per_ball) {
        let Some(s) = st else { continue };
        rep.bmo.offer(s.osc1, ball);
        rep.bmo2.offer(s.osc2, ball);
        rep.bmo6.offer(s.osc6, ball);
        if ball.is_small() {
            rep.small_balls.offer(s.osc1, ball);
            rep.bmo_loc.offer(s.loc1, ball);
            rep.bmo_loc2.offer(s.loc2, ball);
            let lf = ball.log_factor();
            rep.lmo_loc.offer(lf * s.loc1, ball);
            rep.lmo_loc2.offer(lf * s.loc2, ball);
        } else {
            rep.large_balls.offer(s.osc1, ball);
            rep.large_mean.offer(s.mean_abs, ball);
        }
    }
    rep.lmo = rep.lmo_loc.value + rep.large_mean.value;
    Ok(rep)
}

/// `‖b‖_{bmo,p}` over the family, `p ∈ {1, 2, 6}`.
pub fn bmo_norm(b: &GridFunction, family: &BallFamily, p: u32) -> Result<f64> {
    oscillation_report(b, family)?.bmo_p(p)
}

/// The LMO_loc and lmo quantities of the report.
pub fn lmo_norms(b: &GridFunction, family: &BallFamily) -> Result<OscillationReport> {
    oscillation_report(b, family)
}

/// `M_b f(x) = max_{B ∋ x} (1/|B|) ∫_B |b(x) - b(y)| |f(y)| dy` over the family.
pub fn ball_commutator_maximal(b: &GridFunction, f: &GridFunction, family: &BallFamily) -> Result<GridFunction> {
    b.ensure_same_grid(f)?;
    let g = *f.grid();
    let bv = b.values();
    let fv = f.values();
    let per_ball: Vec<Vec<(usize, f64)>> = family
        .balls
        .par_iter()
        .map(|ball| {
            let cells = g.cells_in_ball(ball);
            let support: Vec<usize> = cells.iter().copied().filter(|&i| fv[i] != 0.0).collect();
            if support.is_empty() {
                return Vec::new();
            }
            let m = cells.len() as f64;
            cells
                .iter()
                .map(|&x| {
                    let s: f64 = support.iter().map(|&y| (bv[x] - bv[y]).abs() * fv[y].abs()).sum();
                    (x, s / m)
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0f64; g.len()];
    for list in per_ball {
        for (x, v) in list {
            out[x] = out[x].max(v);
        }
    }
    GridFunction::new(g, out)
}

/// Hardy–Littlewood maximal function over the family.
pub fn hardy_littlewood_maximal(f: &GridFunction, family: &BallFamily) -> Result<GridFunction> {
    let g = *f.grid();
    let fv = f.values();
    let per_ball: Vec<(Vec<usize>, f64)> = family
        .balls
        .par_iter()
        .map(|ball| {
            let cells = g.cells_in_ball(ball);
            let m = cells.len().max(1) as f64;
            let s = cells.iter().map(|&i| fv[i].abs()).sum::<f64>() / m;
            (cells, s)
        })
        .collect();
    let mut out = vec![0.0f64; g.len()];
    for (cells, s) in per_ball {
        for x in cells {
            out[x] = out[x].max(s);
        }
    }
    GridFunction::new(g, out)
}

/// Shapes of the dictionary test functions, in the variable `u = (y - x)/t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 1 on `|u| <= 1/2`, `cos²` ramp to 0 at `|u| = 1`.
    FlatTop,
    /// `(1 - |u|²)²`.
    Bump,
    /// `u_1 (1 - |u|²)²`, sign changing.
    OddBump,
}

impl Profile {
    pub fn eval(&self, u: Point) -> f64 {
        let r = norm(u);
        if r > 1.0 {
            return 0.0;
        }
        match self {
            Profile::FlatTop => {
                if r <= 0.5 {
                    1.0
                } else {
                    (std::f64::consts::PI * (r - 0.5)).cos().powi(2)
                }
            }
            Profile::Bump => (1.0 - r * r).powi(2),
            Profile::OddBump => u[0] * (1.0 - r * r).powi(2),
        }
    }

    /// Bound on `sup |∇_u profile|`.
    pub fn gradient_bound(&self) -> f64 {
        match self {
            Profile::FlatTop => std::f64::consts::PI,
            Profile::Bump => 8.0 / (3.0 * 3f64.sqrt()),
            // |∇(u1 (1-|u|²)²)| <= (1-|u|²)² + 4|u|²(1-|u|²) <= 4/3.
            Profile::OddBump => 4.0 / 3.0,
        }
    }

    pub fn plateau(&self) -> f64 {
        match self {
            Profile::FlatTop => 0.5,
            _ => 0.0,
        }
    }
}

/// One (profile, scale) member, tabulated on lattice offsets.
#[derive(Clone, Debug)]
pub struct Template {
    pub profile: Profile,
    pub scale: f64,
    /// Normalization height `min(1, 1/G) / |B(x,t)|`.
    pub height: f64,
    /// Lattice offsets (per axis, in cells) and values `φ(x + d h)`.
    pub taps: Vec<([isize; 2], f64)>,
}

/// Finite family of normalized `C¹` test functions centered at every grid point.
#[derive(Clone, Debug)]
pub struct TestDictionary {
    pub templates: Vec<Template>,
}

impl TestDictionary {
    /// Default profiles at scales `2^{-k}`, `k = 1..6`, keeping `t > 2h`.
    pub fn standard(grid: &Grid) -> Result<Self> {
        let scales: Vec<f64> = (1..=6).map(|k| (-(k as f64)).exp2()).filter(|&t| t > 2.0 * grid.spacing()).collect();
        Self::new(grid, &[Profile::FlatTop, Profile::Bump, Profile::OddBump], &scales)
    }

    /// Builds every member and verifies `‖φ‖_∞ <= |B|^{-1}` and the lattice
    /// difference quotients `<= (t|B|)^{-1}`, with `|B|` the larger of the
    /// discrete and exact ball measures.
    pub fn new(grid: &Grid, profiles: &[Profile], scales: &[f64]) -> Result<Self> {
        let h = grid.spacing();
        let dim = grid.dim();
        let mut templates = Vec::new();
        for &t in scales {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidArgument(format!("dictionary scale {t} outside (0, 1)")));
            }
            let m = (t / h).floor() as isize;
            let mut offsets = Vec::new();
            let range1 = if dim == 1 { 0..=0 } else { -m..=m };
            for d0 in -m..=m {
                for d1 in range1.clone() {
                    let y = [d0 as f64 * h, d1 as f64 * h];
                    if norm(y) <= t {
                        offsets.push([d0, d1]);
                    }
                }
            }
            let disc = offsets.len() as f64 * grid.cell_volume();
            let exact = Ball { center: [0.0, 0.0], radius: t }.exact_volume(dim);
            let vol = disc.max(exact);
            for &p in profiles {
                let height = p.gradient_bound().recip().min(1.0) / vol;
                let taps: Vec<([isize; 2], f64)> = offsets
                    .iter()
                    .map(|&d| (d, height * p.eval([d[0] as f64 * h / t, d[1] as f64 * h / t])))
                    .collect();
                let tpl = Template { profile: p, scale: t, height, taps };
                verify_template(&tpl, h, dim, vol)?;
                templates.push(tpl);
            }
        }
        Ok(Self { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn verify_template(tpl: &Template, h: f64, dim: usize, vol: f64) -> Result<()> {
    let t = tpl.scale;
    let value_at = |d: [isize; 2]| -> f64 {
        tpl.taps.iter().find(|(o, _)| *o == d).map_or(0.0, |(_, v)| *v)
    };
    let sup = tpl.taps.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    if sup > 1.0 / vol * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("member {:?}@{t} exceeds size bound", tpl.profile)));
    }
    let grad_bound = 1.0 / (t * vol) * (1.0 + 1e-12);
    for (d, v) in &tpl.taps {
        for axis in 0..dim {
            let mut e = *d;
            e[axis] += 1;
            let q = (value_at(e) - v).abs() / h;
            if q > grad_bound {
                return Err(Error::InvalidArgument(format!("member {:?}@{t} exceeds gradient bound", tpl.profile)));
            }
        }
    }
    Ok(())
}

/// Applies `reduce(x, taps)` at every grid point, with out-of-box taps dropped.
fn dictionary_scan(
    grid: &Grid,
    dict: &TestDictionary,
    pairing: impl Fn(usize, &Template) -> f64 + Sync,
) -> Result<GridFunction> {
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|x| dict.templates.iter().map(|t| pairing(x, t).abs()).fold(0.0, f64::max))
        .collect();
    GridFunction::new(*grid, values)
}

fn shifted(grid: &Grid, x: usize, d: [isize; 2]) -> Option<usize> {
    let n = grid.points_per_axis() as isize;
    let [i, j] = grid.unflatten(x);
    let a = i as isize + d[0];
    let b = j as isize + d[1];
    if a < 0 || a >= n || b < 0 || b >= n {
        return None;
    }
    Some(grid.flatten([a as usize, b as usize]))
}

/// `max_φ |∫ (b(x) - b(y)) f(y) φ(y) dy|` over members centered at `x`; a
/// lower bound for the test-function commutator maximal function.
pub fn commutator_maximal_lower(b: &GridFunction, f: &GridFunction, dict: &TestDictionary) -> Result<GridFunction> {
    b.ensure_same_grid(f)?;
    let g = *f.grid();
    let w = g.cell_volume();
    let (bv, fv) = (b.values(), f.values());
    dictionary_scan(&g, dict, |x, tpl| {
        let mut s = 0.0;
        for (d, phi) in &tpl.taps {
            if let Some(y) = shifted(&g, x, *d) {
                if fv[y] != 0.0 {
                    s += (bv[x] - bv[y]) * fv[y] * phi;
                }
            }
        }
        w * s
    })
}

/// `max_φ |⟨f, φ⟩|` over members centered at `x`; a lower bound for the
/// grand maximal function.
pub fn grand_maximal_lower(f: &GridFunction, dict: &TestDictionary) -> Result<GridFunction> {
    let g = *f.grid();
    let w = g.cell_volume();
    let fv = f.values();
    dictionary_scan(&g, dict, |x, tpl| {
        let mut s = 0.0;
        for (d, phi) in &tpl.taps {
            if let Some(y) = shifted(&g, x, *d) {
                s += fv[y] * phi;
            }
        }
        w * s
    })
}

/// Dyadic scales `2^{-k}` in `(h, 1)`, optionally with the half-dyadic
/// midpoints `2^{-k-1/2}`.
pub fn dyadic_scales(grid: &Grid, half_steps: bool) -> Vec<f64> {
    let step = if half_steps { 0.5 } else { 1.0 };
    let mut out = Vec::new();
    let mut k = 1.0;
    loop {
        let t = (-k as f64).exp2();
        if t <= grid.spacing() {
            break;
        }
        out.push(t);
        k += step;
    }
    out
}

/// Standard Gaussian `(2π)^{-n/2} e^{-|x|²/2}`, the default smooth profile
/// for the `h¹` estimate.
pub fn gaussian_profile(dim: usize) -> impl Fn(Point) -> f64 + Sync + Copy {
    let c = std::f64::consts::TAU.powf(-(dim as f64) / 2.0);
    move |x: Point| c * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()
}

/// `‖ sup_t |f * ψ_t| ‖_1` over the given scales, `ψ_t(y) = t^{-n} ψ(y/t)`.
/// `ψ` is treated as vanishing beyond `support` (in units of `t`).
pub fn h1_norm_estimate(f: &GridFunction, psi: impl Fn(Point) -> f64 + Sync, support: f64, scales: &[f64]) -> Result<f64> {
    Ok(smooth_maximal(f, psi, support, scales)?.norm(1.0))
}

/// `x -> max_t |f * ψ_t(x)|`.
pub fn smooth_maximal(f: &GridFunction, psi: impl Fn(Point) -> f64 + Sync, support: f64, scales: &[f64]) -> Result<GridFunction> {
    let g = *f.grid();
    let dim = g.dim() as i32;
    let mut best = vec![0.0f64; g.len()];
    for &t in scales {
        let conv = convolve(
            |y| if norm(y) <= support * t { t.powi(-dim) * psi([y[0] / t, y[1] / t]) } else { 0.0 },
            Some(support * t),
            f,
        )?;
        for (m, v) in best.iter_mut().zip(conv.values()) {
            *m = m.max(v.abs());
        }
    }
    GridFunction::new(g, best)
}

/// Cutoff radius, in units of the scale, of the Gaussian profile.
pub const GAUSSIAN_SUPPORT: f64 = 9.0;

/// `h¹` estimate with the Gaussian profile and dyadic scales.
pub fn h1_estimate(f: &GridFunction) -> Result<f64> {
    let scales = dyadic_scales(f.grid(), false);
    h1_norm_estimate(f, gaussian_profile(f.grid().dim()), GAUSSIAN_SUPPORT, &scales)
}

fn check_support(g: &GridFunction, ball: &Ball) -> Result<()> {
    let grid = g.grid();
    if let Some(i) = (0..grid.len()).find(|&i| g.value_at(i) != 0.0 && !ball.contains(grid.point(i))) {
        return Err(Error::InvalidArgument(format!("function nonzero at {:?}, outside the ball", grid.point(i))));
    }
    Ok(())
}

/// `|∫g| log(1 + 1/r) / ‖g‖_{h¹}` for `g` supported in `B`.
pub fn mean_bound_ratio(g: &GridFunction, ball: &Ball) -> Result<f64> {
    check_support(g, ball)?;
    let mean = g.integrate();
    if mean == 0.0 {
        return Ok(0.0);
    }
    let h1 = h1_estimate(g)?;
    if h1 == 0.0 {
        return Err(Error::Inconsistent("h1 estimate vanishes for a function with nonzero integral".into()));
    }
    Ok(mean.abs() * ball.log_factor() / h1)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailRatio {
    pub ratio: f64,
    pub numerator: f64,
    pub trend: ShellTrend,
}

/// `r^δ ∫_{|x-x0|>r} |b - c_B|^p |x-x0|^{-n-δ} dx / bmo^p`, with the integral
/// truncated at the box and its dyadic-shell increments attached.
pub fn weighted_tail_ratio(b: &GridFunction, ball: &Ball, delta: f64, p: f64, bmo: f64) -> Result<TailRatio> {
    if !(delta > 0.0 && p >= 1.0) {
        return Err(Error::InvalidArgument(format!("need delta > 0 and p >= 1, got {delta}, {p}")));
    }
    let g = b.grid();
    let n = g.dim() as f64;
    let c = ball.c_b(b);
    let r = ball.radius;
    let w = g.cell_volume();
    let kmax = ((2.0 * g.half_width() * 2f64.sqrt() / r).log2().ceil() as usize).max(1);
    let mut shells = vec![0.0f64; kmax + 1];
    for (i, &v) in b.values().iter().enumerate() {
        let d = norm(sub(g.point(i), ball.center));
        if d <= r {
            continue;
        }
        let term = (v - c).abs().powf(p) / d.powf(n + delta);
        let k = ((d / r).log2().floor() as usize).min(kmax);
        shells[k] += w * term;
    }
    while shells.len() > 1 && shells.last() == Some(&0.0) {
        shells.pop();
    }
    let numerator = r.powf(delta) * shells.iter().sum::<f64>();
    let radii = (0..shells.len()).map(|k| r * (k as f64 + 1.0).exp2()).collect();
    let trend = ShellTrend::from_increments(radii, shells.iter().map(|s| s * r.powf(delta)).collect());
    let ratio = if bmo == 0.0 {
        if numerator != 0.0 {
            return Err(Error::Inconsistent("bmo norm vanishes but the tail integral does not".into()));
        }
        0.0
    } else {
        numerator / bmo.powf(p)
    };
    Ok(TailRatio { ratio, numerator, trend })
}

/// `∫ |f|` restricted to a region; convenience for split norms.
pub fn l1_over(f: &GridFunction, region: Region) -> f64 {
    f.lp_norm(1.0, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn g1(l: f64, n: usize) -> Grid {
        Grid::new(1, l, n).unwrap()
    }

    #[test]
    fn family_shape() {
        let g = g1(4.0, 256);
        let f = BallFamily::dyadic(&g, 4, 2.0, &[]).unwrap();
        let radii = f.radii();
        assert!(radii.iter().filter(|&&r| r < 1.0).count() >= 3);
        assert!(radii.iter().any(|&r| r >= 1.0));
        assert!(f.balls.iter().all(|b| g.ball_fits(b)));
        // Vertex-centered dyadic balls have exact discrete measure in 1D.
        for b in f.balls.iter().take(50) {
            assert_eq!(g.ball_measure(b), 2.0 * b.radius);
        }
    }

    #[test]
    fn constant_function_norms() {
        let g = g1(4.0, 256);
        let fam = BallFamily::dyadic(&g, 4, 2.0, &[]).unwrap();
        let b = GridFunction::constant(g, -3.0);
        let rep = oscillation_report(&b, &fam).unwrap();
        assert_eq!(rep.small_balls.value, 0.0);
        assert_eq!(rep.large_balls.value, 3.0);
        assert_eq!(rep.bmo.value, 3.0);
        assert_eq!(rep.lmo_loc.value, 0.0);
        assert_eq!(rep.lmo, 3.0);
    }

    #[test]
    fn linear_function_oscillation() {
        let g = g1(4.0, 1024);
        let fam = BallFamily::dyadic(&g, 8, 0.5, &[]).unwrap();
        let b = GridFunction::from_fn(g, |p| p[0]).unwrap();
        for ball in fam.balls.iter().step_by(37) {
            let osc = ball_stats(&b, ball).unwrap().osc1;
            assert!((osc - ball.radius / 2.0).abs() < 1e-12, "{osc} vs {}", ball.radius);
        }
        let near_one = BallFamily::dyadic(&g, 8, 0.5, &[1.0 - g.spacing()]).unwrap();
        let rep = oscillation_report(&b, &near_one).unwrap();
        assert!((rep.small_balls.value - 0.5).abs() < 0.01);
    }

    #[test]
    fn c_b_rules_reported_separately() {
        let g = g1(4.0, 256);
        let h = g.spacing();
        let b = GridFunction::from_fn(g, |p| 2.0 + p[0]).unwrap();
        let fam = BallFamily::from_balls(vec![Ball { center: [0.0, 0.0], radius: 1.0 - h }, Ball { center: [0.0, 0.0], radius: 1.0 }]);
        let rep = oscillation_report(&b, &fam).unwrap();
        assert!(rep.small_balls.value < 0.5);
        assert!((rep.large_balls.value - 2.0).abs() < 1e-12);
        assert_eq!(rep.large_balls.ball.unwrap().radius, 1.0);
    }

    #[test]
    fn power_means_are_ordered() {
        let g = g1(4.0, 256);
        let fam = BallFamily::dyadic(&g, 4, 2.0, &[]).unwrap();
        let b = GridFunction::from_fn(g, |p| (1.0 / p[0].abs()).ln().max(0.0) + (5.0 * p[0]).sin()).unwrap();
        let rep = oscillation_report(&b, &fam).unwrap();
        assert!(rep.bmo.value <= rep.bmo2.value && rep.bmo2.value <= rep.bmo6.value);
        assert!(rep.bmo_p(3).is_err());
        assert!(oscillation_report(&b, &BallFamily::from_balls(vec![])).is_err());
    }

    #[test]
    fn lipschitz_lmo_envelope() {
        let g = g1(4.0, 1024);
        let fam = BallFamily::dyadic(&g, 4, 2.0, &[]).unwrap();
        let b = GridFunction::from_fn(g, |p| (1.0 - p[0].abs()).max(0.0)).unwrap();
        let rep = oscillation_report(&b, &fam).unwrap();
        let envelope = fam.radii().iter().filter(|&&r| r < 1.0).map(|&r| (1.0 / r).ln_1p() * r).fold(0.0, f64::max);
        assert!(rep.lmo_loc.value <= envelope + 1e-12);
    }

    #[test]
    fn log_has_growing_lmo() {
        let mut prev = 0.0;
        for n in [256, 512, 1024, 2048] {
            let g = g1(4.0, n);
            let fam = BallFamily::dyadic(&g, 4, 2.0, &[]).unwrap();
            let b = GridFunction::from_fn(g, |p| (1.0 / p[0].abs()).ln().max(0.0)).unwrap();
            let v = oscillation_report(&b, &fam).unwrap().lmo_loc.value;
            assert!(v > prev * 1.05, "{v} vs {prev}");
            prev = v;
        }
    }

    #[test]
    fn commutator_maximal_basics() {
        let g = g1(2.0, 128);
        let fam = BallFamily::dyadic(&g, 2, 1.0, &[]).unwrap();
        let f = GridFunction::from_fn(g, |p| if p[0].abs() < 0.3 { 1.0 + p[0] } else { 0.0 }).unwrap();
        let b0 = GridFunction::constant(g, 2.0);
        assert_eq!(ball_commutator_maximal(&b0, &f, &fam).unwrap().sup_norm(), 0.0);
        let b = GridFunction::from_fn(g, |p| (3.0 * p[0]).sin()).unwrap();
        let mb = ball_commutator_maximal(&b, &f, &fam).unwrap();
        let hl = hardy_littlewood_maximal(&f, &fam).unwrap();
        let bound = 2.0 * b.sup_norm();
        for (m, h) in mb.values().iter().zip(hl.values()) {
            assert!(*m <= bound * h * (1.0 + 1e-12));
        }
        let shifted_b = b.map(|v| v + 1.0);
        let mb2 = ball_commutator_maximal(&shifted_b, &f, &fam).unwrap();
        for (a, c) in mb.values().iter().zip(mb2.values()) {
            assert!((a - c).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn commutator_maximal_matches_enumeration() {
        let g = g1(1.0, 16);
        let fam = BallFamily::exhaustive(&g);
        let b = GridFunction::from_fn(g, |p| p[0] * p[0] - 0.3 * p[0]).unwrap();
        let f = GridFunction::from_fn(g, |p| (4.0 * p[0]).cos()).unwrap();
        let fast = ball_commutator_maximal(&b, &f, &fam).unwrap();
        for x in 0..g.len() {
            let mut best: f64 = 0.0;
            for ball in &fam.balls {
                let cells: Vec<usize> = (0..g.len()).filter(|&i| ball.contains(g.point(i))).collect();
                if !cells.contains(&x) {
                    continue;
                }
                let s: f64 = cells
                    .iter()
                    .filter(|&&y| f.value_at(y) != 0.0)
                    .map(|&y| (b.value_at(x) - b.value_at(y)).abs() * f.value_at(y).abs())
                    .sum();
                best = best.max(s / cells.len() as f64);
            }
            assert_eq!(fast.value_at(x), best);
        }
    }

    #[test]
    fn dictionary_members_are_normalized() {
        for (dim, n) in [(1, 256), (2, 64)] {
            let g = Grid::new(dim, 2.0, n).unwrap();
            let d = TestDictionary::standard(&g).unwrap();
            assert!(!d.is_empty());
            for t in &d.templates {
                assert!(t.taps.iter().all(|(_, v)| v.abs() <= t.height * (1.0 + 1e-15)));
            }
        }
    }

    #[test]
    fn dictionary_domination_and_constant_b() {
        for (dim, n) in [(1, 128), (2, 32)] {
            let g = Grid::new(dim, 2.0, n).unwrap();
            let dict = TestDictionary::standard(&g).unwrap();
            let f = GridFunction::from_fn(g, |p| if norm(p) < 0.4 { 1.0 - p[0] + p[1] } else { 0.0 }).unwrap();
            let b = GridFunction::from_fn(g, |p| (2.0 * p[0]).sin() + p[1]).unwrap();
            let lower = commutator_maximal_lower(&b, &f, &dict).unwrap();
            let mut balls = Vec::new();
            for x in 0..g.len() {
                for t in dict.templates.iter().map(|t| t.scale) {
                    balls.push(Ball { center: g.point(x), radius: t });
                }
            }
            // Support balls reaching outside the box are kept so the family
            // covers every dictionary member.
            let fam = BallFamily::from_balls(balls);
            let upper = ball_commutator_maximal(&b, &f, &fam).unwrap();
            for (l, u) in lower.values().iter().zip(upper.values()) {
                assert!(*l <= *u * (1.0 + 1e-12) + 1e-15, "{l} > {u}");
            }
            let c = GridFunction::constant(g, 1.5);
            assert_eq!(commutator_maximal_lower(&c, &f, &dict).unwrap().sup_norm(), 0.0);
        }
    }

    #[test]
    fn dictionary_matches_direct_enumeration() {
        let g = g1(1.0, 16);
        let dict = TestDictionary::new(&g, &[Profile::FlatTop, Profile::Bump, Profile::OddBump], &[0.25, 0.5]).unwrap();
        let b = GridFunction::from_fn(g, |p| p[0].exp()).unwrap();
        let f = GridFunction::from_fn(g, |p| (3.0 * p[0]).sin()).unwrap();
        let fast = commutator_maximal_lower(&b, &f, &dict).unwrap();
        let h = g.spacing();
        for x in 0..g.len() {
            let mut best: f64 = 0.0;
            for t in &dict.templates {
                let mut s = 0.0;
                for (d, phi) in &t.taps {
                    let y = x as isize + d[0];
                    if y >= 0 && (y as usize) < g.len() && f.value_at(y as usize) != 0.0 {
                        let y = y as usize;
                        s += (b.value_at(x) - b.value_at(y)) * f.value_at(y) * phi;
                    }
                }
                best = best.max((h * s).abs());
            }
            assert_eq!(fast.value_at(x), best);
        }
    }

    #[test]
    fn grand_maximal_properties() {
        let g = g1(2.0, 256);
        let zero = GridFunction::zeros(g);
        let dict = TestDictionary::standard(&g).unwrap();
        assert_eq!(grand_maximal_lower(&zero, &dict).unwrap().sup_norm(), 0.0);
        let f = GridFunction::from_fn(g, |p| if p[0].abs() < 0.1 { 1.0 } else { 0.0 }).unwrap();
        let small = TestDictionary::new(&g, &[Profile::FlatTop], &[0.25]).unwrap();
        let big = TestDictionary::new(&g, &[Profile::FlatTop, Profile::Bump], &[0.25, 0.5]).unwrap();
        let a = grand_maximal_lower(&f, &small).unwrap();
        let c = grand_maximal_lower(&f, &big).unwrap();
        assert!(a.values().iter().zip(c.values()).all(|(x, y)| x <= y));
        // f sits inside the plateau of the t = 1/4 flat-top member at the center.
        let center = g.locate([1e-9, 0.0]).unwrap();
        let tpl = &small.templates[0];
        assert!(a.value_at(center) >= tpl.height * f.integrate() * (1.0 - 1e-12));
    }

    #[test]
    fn h1_estimate_properties() {
        let g = g1(8.0, 1024);
        assert_eq!(h1_estimate(&GridFunction::zeros(g)).unwrap(), 0.0);
        let bump = GridFunction::from_fn(g, |p| if p[0].abs() < 0.25 { 2.0 } else { 0.0 }).unwrap();
        let psi = gaussian_profile(1);
        let coarse = dyadic_scales(&g, false);
        let fine = dyadic_scales(&g, true);
        let a = h1_norm_estimate(&bump, psi, GAUSSIAN_SUPPORT, &coarse).unwrap();
        let b = h1_norm_estimate(&bump, psi, GAUSSIAN_SUPPORT, &fine).unwrap();
        assert!(b >= a);
        assert!((b - a) / a < 0.1);
        let l1 = bump.norm(1.0);
        assert!(a / l1 >= 0.5 && a / l1 <= 3.0, "{}", a / l1);
    }

    #[test]
    fn mean_bound_ratio_cases() {
        let g = g1(8.0, 1024);
        let ball = Ball { center: [0.0, 0.0], radius: 0.25 };
        let ind = GridFunction::constant(g, 1.0).restrict_to_ball(&ball);
        let ind = ind.scale(1.0 / ind.integrate());
        let r = mean_bound_ratio(&ind, &ball).unwrap();
        assert!(r.is_finite() && r > 0.0);
        let zero_mean = GridFunction::from_fn(g, |p| if p[0].abs() < 0.25 { p[0] } else { 0.0 }).unwrap();
        assert_eq!(mean_bound_ratio(&zero_mean, &ball).unwrap(), 0.0);
        let outside = GridFunction::constant(g, 1.0);
        assert!(mean_bound_ratio(&outside, &ball).is_err());
    }

    #[test]
    fn tail_ratio_constant_cases() {
        let g = g1(8.0, 2048);
        let b = GridFunction::constant(g, 2.0);
        let small = Ball { center: [0.5, 0.0], radius: 0.25 };
        assert_eq!(weighted_tail_ratio(&b, &small, 1.0, 1.0, 2.0).unwrap().ratio, 0.0);
        let big = Ball { center: [0.5, 0.0], radius: 1.0 };
        let delta = 0.5;
        let t = weighted_tail_ratio(&b, &big, delta, 2.0, 2.0).unwrap();
        let l = g.half_width();
        let side = |end: f64| (1.0f64.powf(-delta) - end.powf(-delta)) / delta;
        let oracle = 4.0 * (side(l - 0.5) + side(l + 0.5));
        assert!((t.numerator - oracle).abs() / oracle < 0.01, "{} {}", t.numerator, oracle);
        assert!(matches!(weighted_tail_ratio(&b, &big, delta, 2.0, 0.0), Err(Error::Inconsistent(_))));
    }
}
