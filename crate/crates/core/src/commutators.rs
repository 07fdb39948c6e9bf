//! Commutators `[b, T]` on atoms, the per-ball pairing `T*_B(b)`, and the
//! trial sweeps built on them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{
    decompose_approx_atom, make_approx_h1b_atom, make_perez_h1b_atom, validate_molecule, Atom, AtomKind, BContext,
    MoleculeCertificate, ATOM_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::grid::{norm, sub, Ball, Grid, GridFunction, Point, Region};
use crate::kernels::{hilbert_kernel, riesz_kernel, standard_bump, ConvolutionKernel, Localizer};
use crate::operators::apply_pv;
use crate::shells::ShellTrend;
use crate::spaces::{ball_commutator_maximal, commutator_maximal_lower, h1_estimate, BallFamily, TestDictionary};

pub type PairEvaluator = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelForm {
    /// `K(x, y) = K_0(x - y)`.
    Convolution(ConvolutionKernel),
    General(PairEvaluator),
}

/// A kernel `K(x, y)` with `|K(x,y)| <= C min(|x-y|^{-n}, |x-y|^{-n-ε})`.
#[derive(Clone)]
pub struct InhomogeneousKernel {
    pub name: String,
    pub dim: usize,
    pub form: KernelForm,
    pub delta: f64,
    pub extra_decay: f64,
    pub size_constant: f64,
    /// `K(x, y) = 0` once `|x - y|` exceeds this.
    pub support: Option<f64>,
}

impl std::fmt::Debug for InhomogeneousKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InhomogeneousKernel").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl InhomogeneousKernel {
    /// `K_0(x - y) η(x - y)` for a convolution kernel with size constant `c`
    /// and a cutoff supported in `B(0, R)`, `R >= 1`; the size constant
    /// becomes `c R sup|η|`.
    pub fn localized(k: &ConvolutionKernel, eta: &Localizer) -> Result<Self> {
        let radius = eta
            .compact_radius
            .ok_or_else(|| Error::InvalidArgument("localizing cutoff must have compact support".into()))?;
        let kl = k.localized(eta);
        Ok(Self {
            name: kl.name.clone(),
            dim: k.dim,
            delta: kl.delta,
            extra_decay: 1.0,
            size_constant: k.size_constant * eta.sup_bound * radius.max(1.0),
            support: kl.support_radius,
            form: KernelForm::Convolution(kl),
        })
    }

    /// Hilbert kernel in 1D, first Riesz kernel in 2D, times the standard bump.
    pub fn default_for(dim: usize) -> Result<Self> {
        let k = if dim == 1 { hilbert_kernel() } else { riesz_kernel(1, 2)? };
        Self::localized(&k, &standard_bump(dim))
    }

    pub fn general(
        name: impl Into<String>,
        dim: usize,
        eval: impl Fn(Point, Point) -> f64 + Send + Sync + 'static,
        size_constant: f64,
        extra_decay: f64,
        support: Option<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            form: KernelForm::General(Arc::new(eval)),
            delta: 1.0,
            extra_decay,
            size_constant,
            support,
        }
    }

    pub fn eval(&self, x: Point, y: Point) -> f64 {
        match &self.form {
            KernelForm::Convolution(k) => k.eval(sub(x, y)),
            KernelForm::General(e) => e(x, y),
        }
    }

    /// `K^t(x, y) = K(y, x)`.
    pub fn transpose(&self) -> Self {
        let form = match &self.form {
            KernelForm::Convolution(k) => KernelForm::Convolution(k.reflected()),
            KernelForm::General(e) => {
                let e = e.clone();
                KernelForm::General(Arc::new(move |x, y| e(y, x)))
            }
        };
        Self { name: format!("{}^t", self.name), form, ..self.clone() }
    }

    /// Samples `samples` pairs in `[-l, l]^n` and checks the size bound at each.
    pub fn spot_check_size(&self, l: f64, samples: usize, seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim as i32;
        (0..samples).all(|_| {
            let mut p = || -> Point {
                let a = rng.gen_range(-l..l);
                let b = if self.dim == 2 { rng.gen_range(-l..l) } else { 0.0 };
                [a, b]
            };
            let (x, y) = (p(), p());
            let d = norm(sub(x, y));
            if d == 0.0 {
                return true;
            }
            let bound = self.size_constant * d.powi(-n).min(d.powf(-(n as f64) - self.extra_decay));
            self.eval(x, y).abs() <= bound * (1.0 + 1e-12)
        })
    }
}

fn check_dim(k: &InhomogeneousKernel, f: &GridFunction) -> Result<()> {
    if k.dim != f.grid().dim() {
        return Err(Error::DimensionMismatch { expected: k.dim, found: f.grid().dim() });
    }
    Ok(())
}

/// `Tf(x_i) = h^n Σ_{|x_i - x_j| >= ε} K(x_i, x_j) f(x_j)`.
pub fn apply_inhomogeneous(k: &InhomogeneousKernel, f: &GridFunction, eps: f64) -> Result<GridFunction> {
    check_dim(k, f)?;
    match &k.form {
        KernelForm::Convolution(c) => apply_pv(c, f, eps),
        KernelForm::General(e) => {
            let g = *f.grid();
            if !(eps >= g.spacing() / 2.0) {
                return Err(Error::InvalidArgument(format!("truncation radius {eps} below h/2")));
            }
            let w = g.cell_volume();
            let input: Vec<(Point, f64)> =
                f.values().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (g.point(j), *v)).collect();
            let e2 = eps * eps;
            let reach2 = k.support.map_or(f64::INFINITY, |s| s * s);
            let values = (0..g.len())
                .into_par_iter()
                .map(|i| {
                    let x = g.point(i);
                    let mut acc = 0.0;
                    for &(y, v) in &input {
                        let d = sub(x, y);
                        let d2 = d[0] * d[0] + d[1] * d[1];
                        if d2 >= e2 && d2 <= reach2 {
                            acc += e(x, y) * v;
                        }
                    }
                    w * acc
                })
                .collect();
            GridFunction::new(g, values)
        }
    }
}

/// `T^t g`.
pub fn apply_transpose(k: &InhomogeneousKernel, g: &GridFunction, eps: f64) -> Result<GridFunction> {
    apply_inhomogeneous(&k.transpose(), g, eps)
}

/// The two terms of `[b, T] a = (b - c_B) T a - T(a (b - c_B))`.
#[derive(Clone, Debug)]
pub struct CommutatorTerms {
    pub output: GridFunction,
    pub first: GridFunction,
    pub second: GridFunction,
}

impl CommutatorTerms {
    pub fn l1(&self) -> f64 {
        self.output.norm(1.0)
    }

    pub fn split(&self) -> (f64, f64) {
        (self.first.norm(1.0), self.second.norm(1.0))
    }
}

/// `[b, T] a` with `c_B` taken from the atom's ball.
pub fn commutator_apply(b: &GridFunction, k: &InhomogeneousKernel, a: &Atom, eps: f64) -> Result<CommutatorTerms> {
    b.ensure_same_grid(&a.values)?;
    let cb = a.ball.c_b(b);
    let shifted = b.map(|v| v - cb);
    let ta = apply_inhomogeneous(k, &a.values, eps)?;
    let first = ta.mul(&shifted)?;
    let second = apply_inhomogeneous(k, &a.values.mul(&shifted)?, eps)?;
    let output = first.sub(&second)?;
    Ok(CommutatorTerms { output, first, second })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pairing {
    pub value: f64,
    /// Contributions of the dyadic shells `2^k r < |x - x0| <= 2^{k+1} r`,
    /// preceded by the ball itself.
    pub trend: ShellTrend,
}

/// `⟨T*_B(b), g⟩ = ∫ (b - b_B) T g` for `g` supported in `B` with `∫g = 0`.
pub fn t_star_pairing(k: &InhomogeneousKernel, b: &GridFunction, ball: &Ball, g: &GridFunction, eps: f64) -> Result<Pairing> {
    b.ensure_same_grid(g)?;
    let grid = *g.grid();
    if g.lp_norm(1.0, Region::Outside(*ball)) != 0.0 {
        return Err(Error::InvalidArgument("pairing function is not supported in the ball".into()));
    }
    let mean = g.integrate();
    if mean.abs() > ATOM_TOLERANCE * g.norm(1.0) {
        return Err(Error::InvalidArgument(format!("pairing function has integral {mean:e}, not zero")));
    }
    let bb = b.mean_over(ball);
    let tg = apply_inhomogeneous(k, g, eps)?;
    let w = grid.cell_volume();
    let r = ball.radius;
    let kmax = ((2.0 * grid.half_width() * 2f64.sqrt() / r).log2().ceil() as usize).max(1);
    let mut shells = vec![0.0f64; kmax + 2];
    for (i, (&t, &bv)) in tg.values().iter().zip(b.values()).enumerate() {
        if t == 0.0 {
            continue;
        }
        let d = norm(sub(grid.point(i), ball.center));
        let slot = if d <= r { 0 } else { ((d / r).log2().floor() as usize).min(kmax) + 1 };
        shells[slot] += w * (bv - bb) * t;
    }
    while shells.len() > 1 && shells.last() == Some(&0.0) {
        shells.pop();
    }
    let radii = (0..shells.len()).map(|k| r * (k as f64).exp2()).collect();
    let trend = ShellTrend::from_increments(radii, shells);
    Ok(Pairing { value: trend.total(), trend })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TStarBCheck {
    /// `(⨍_B |f - f_B|²)^{1/2}` for `f = T^t(b - b_B)` on `B`.
    pub oscillation: f64,
    /// `log(1 + 1/r)`.
    pub bound: f64,
    pub passed: bool,
}

/// Realizes `T*_B(b)` on `B` through the transposed kernel and compares its
/// `L²` mean oscillation with `log(1 + 1/r)`.
pub fn t_star_b_condition(k: &InhomogeneousKernel, b: &GridFunction, ball: &Ball, eps: f64) -> Result<TStarBCheck> {
    if !ball.is_small() {
        return Err(Error::InvalidArgument("the per-ball condition concerns r < 1".into()));
    }
    let grid = *b.grid();
    let bb = b.mean_over(ball);
    let f = apply_transpose(k, &b.map(|v| v - bb), eps)?;
    let cells = grid.cells_in_ball(ball);
    if cells.is_empty() {
        return Err(Error::InvalidArgument("ball holds no cells".into()));
    }
    let m = cells.len() as f64;
    let fb = cells.iter().map(|&i| f.value_at(i)).sum::<f64>() / m;
    let oscillation = (cells.iter().map(|&i| (f.value_at(i) - fb).powi(2)).sum::<f64>() / m).sqrt();
    let bound = ball.log_factor();
    Ok(TStarBCheck { oscillation, bound, passed: oscillation <= bound })
}

/// Molecule check of `(b - c_B) T a` on `2B` at `s = 3/2`, `λ = n/2 + μ`.
pub fn commutator_molecule_check(b: &GridFunction, k: &InhomogeneousKernel, a: &Atom, mu: f64, eps: f64) -> Result<MoleculeCertificate> {
    let limit = 1.5 * k.delta.min(k.extra_decay);
    if !(mu > 0.0 && mu < limit) {
        return Err(Error::InvalidArgument(format!("mu = {mu} outside (0, {limit})")));
    }
    let cb = a.ball.c_b(b);
    let m = apply_inhomogeneous(k, &a.values, eps)?.zip_with(b, |t, v| (v - cb) * t)?;
    let n = b.grid().dim() as f64;
    validate_molecule(&m, &a.ball.dilate(2.0), 1.5, n / 2.0 + mu)
}

/// `a = (s - s_B) χ_B / |B|` with `s = sgn(b - b_B)`.
pub fn sign_atom(b: &GridFunction, ball: &Ball) -> Result<Atom> {
    let grid = *b.grid();
    let cells = grid.cells_in_ball(ball);
    if cells.is_empty() {
        return Err(Error::InvalidArgument("ball holds no cells".into()));
    }
    let m = cells.len() as f64;
    let measure = m * grid.cell_volume();
    let bb = b.mean_over(ball);
    let s: Vec<f64> = cells.iter().map(|&i| sgn(b.value_at(i) - bb)).collect();
    let sb = s.iter().sum::<f64>() / m;
    let mut v = vec![0.0; grid.len()];
    for (&i, si) in cells.iter().zip(&s) {
        v[i] = (si - sb) / measure;
    }
    Ok(Atom { values: GridFunction::new(grid, v)?, ball: *ball, kind: AtomKind::Goldberg })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SignAtomIdentity {
    pub radius: f64,
    /// `log(1+1/r) ⨍_B |b - b_B|`.
    pub oscillation_side: f64,
    /// `log(1+1/r) |∫ a b|`.
    pub pairing_side: f64,
}

impl SignAtomIdentity {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.oscillation_side.abs().max(self.pairing_side.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.oscillation_side - self.pairing_side).abs() / scale
        }
    }
}

pub fn sign_atom_identity(b: &GridFunction, ball: &Ball) -> Result<SignAtomIdentity> {
    let a = sign_atom(b, ball)?;
    let lf = ball.log_factor();
    let grid = b.grid();
    let cells = grid.cells_in_ball(ball);
    let bb = b.mean_over(ball);
    let osc = cells.iter().map(|&i| (b.value_at(i) - bb).abs()).sum::<f64>() / cells.len() as f64;
    let pairing = a.values.mul(b)?.integrate().abs();
    Ok(SignAtomIdentity { radius: ball.radius, oscillation_side: lf * osc, pairing_side: lf * pairing })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalizedMeanBound {
    /// `sup_{r<1} ‖|b - b_B| χ_B‖_{h¹} / |B|` over the balls.
    pub small: f64,
    /// `sup_{r>=1} ‖|b| χ_B‖_{h¹} / |B|` over the balls.
    pub large: f64,
}

/// The two suprema of localized `h¹` estimates over `balls`.
pub fn localized_mean_bound(b: &GridFunction, balls: &[Ball]) -> Result<LocalizedMeanBound> {
    let grid = *b.grid();
    let per: Vec<Result<(bool, f64)>> = balls
        .par_iter()
        .map(|ball| {
            let measure = grid.ball_measure(ball);
            let bb = b.mean_over(ball);
            let f = if ball.is_small() { b.map(|v| (v - bb).abs()) } else { b.map(f64::abs) };
            let f = f.restrict_to_ball(ball);
            Ok((ball.is_small(), h1_estimate(&f)? / measure))
        })
        .collect();
    let mut out = LocalizedMeanBound { small: 0.0, large: 0.0 };
    for p in per {
        let (small, v) = p?;
        if small {
            out.small = out.small.max(v);
        } else {
            out.large = out.large.max(v);
        }
    }
    Ok(out)
}

/// Seeded placement of atom balls for trial sweeps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomSweep {
    pub radii: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Centers are multiples of this step.
    pub center_step: f64,
    /// Centers lie in `[-c, c]^n`, further limited so that `|x0| + r + reach` stays in the box.
    pub center_range: f64,
    pub reach: f64,
}

impl AtomSweep {
    pub fn rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }

    /// Ball of the given trial; radii cycle through the list.
    pub fn ball(&self, grid: &Grid, trial: usize, rng: &mut ChaCha8Rng) -> Result<Ball> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("empty radius list".into()));
        }
        let r = self.radii[trial % self.radii.len()];
        let room = (grid.half_width() - r - self.reach).min(self.center_range).max(0.0);
        let steps = (room / self.center_step).floor() as i64;
        let mut pick = || if steps == 0 { 0.0 } else { rng.gen_range(-steps..=steps) as f64 * self.center_step };
        let x = pick();
        let y = if grid.dim() == 2 { pick() } else { 0.0 };
        Ball::new([x, y], r)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommutatorRow {
    pub trial: usize,
    pub radius: f64,
    pub center: Point,
    /// `‖Σ_j λ_j [b,T] a_j‖_1 / ‖b‖_bmo` over the decomposition of the atom
    /// (the atom itself when `r >= 1`).
    pub ratio: f64,
    /// `‖[b,T] A‖_1 / ‖b‖_bmo` applied to the generated atom directly.
    pub direct_ratio: f64,
    /// `max_j ‖[b,T] a_j‖_1 / ‖b‖_bmo` over the parts.
    pub max_part_ratio: f64,
    pub split_first: f64,
    pub split_second: f64,
    pub parts: usize,
    pub ell_one: f64,
}

fn ensure_nonconstant(b: &GridFunction) -> Result<()> {
    let v = b.values();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), &x| (a.min(x), c.max(x)));
    if lo == hi {
        return Err(Error::InvalidArgument("b must not be constant".into()));
    }
    Ok(())
}

/// `‖[b,T] a‖_1 / ‖b‖_bmo` over approximate `h¹_b` atoms, each first split
/// into atoms with vanishing integral when `r < 1`.
pub fn commutator_l1_experiment(ctx: &BContext, k: &InhomogeneousKernel, sweep: &AtomSweep, eps: f64) -> Result<Vec<CommutatorRow>> {
    ensure_nonconstant(&ctx.b)?;
    let bmo = ctx.report.bmo.value;
    let grid = *ctx.b.grid();
    (0..sweep.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = sweep.rng(trial);
            let ball = sweep.ball(&grid, trial, &mut rng)?;
            let budget: f64 = rng.gen_range(0.0..=1.0);
            let seed: u64 = rng.gen();
            let (atom, _) = make_approx_h1b_atom(&ball, &ctx.b, seed, budget)?;
            let whole = commutator_apply(&ctx.b, k, &atom, eps)?;
            let (split_first, split_second) = whole.split();
            let direct = whole.l1();
            let (parts, ell_one, through, worst) = if ball.is_small() {
                let d = decompose_approx_atom(&atom, &ctx.b)?;
                let mut worst = 0.0f64;
                let mut acc = vec![0.0; grid.len()];
                for (lambda, part) in d.coefficients.iter().zip(&d.atoms) {
                    let out = commutator_apply(&ctx.b, k, part, eps)?.output;
                    worst = worst.max(out.norm(1.0));
                    acc.iter_mut().zip(out.values()).for_each(|(x, v)| *x += lambda * v);
                }
                (d.atoms.len(), d.ell_one_sum, GridFunction::new(grid, acc)?.norm(1.0), worst)
            } else {
                (1, 1.0, direct, direct)
            };
            Ok(CommutatorRow {
                trial,
                radius: ball.radius,
                center: ball.center,
                ratio: through / bmo,
                direct_ratio: direct / bmo,
                max_part_ratio: worst / bmo,
                split_first,
                split_second,
                parts,
                ell_one,
            })
    })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoleculeRow {
    pub trial: usize,
    pub radius: f64,
    pub multiple: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub tail_decaying: bool,
    /// `|∫ (b - b_B) T a|` and its bound `osc(T*_B b) ‖a‖_2 |B|^{1/2}`.
    pub pairing: f64,
    pub pairing_bound: f64,
    pub tstar_oscillation: f64,
    pub tstar_bound: f64,
}

/// Molecule multiples of `(b - c_B) T a` for Pérez atoms with `r < 1`, with
/// the mean cross-checked against the per-ball `T*` condition.
pub fn molecule_experiment(ctx: &BContext, k: &InhomogeneousKernel, sweep: &AtomSweep, mu: f64, eps: f64) -> Result<Vec<MoleculeRow>> {
    let grid = *ctx.b.grid();
    (0..sweep.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = sweep.rng(trial);
            let ball = sweep.ball(&grid, trial, &mut rng)?;
            if !ball.is_small() {
                return Err(Error::InvalidArgument("molecule sweep needs radii below 1".into()));
            }
            let atom = make_perez_h1b_atom(&ball, &ctx.b, rng.gen())?;
            let cert = commutator_molecule_check(&ctx.b, k, &atom, mu, eps)?;
            let tstar = t_star_b_condition(k, &ctx.b, &ball, eps)?;
            let pairing = t_star_pairing(k, &ctx.b, &ball, &atom.values, eps)?.value.abs();
            let pairing_bound = tstar.oscillation * atom.values.norm(2.0) * grid.ball_measure(&ball).sqrt();
            Ok(MoleculeRow {
                trial,
                radius: ball.radius,
                multiple: cert.multiple(),
                m1: cert.m1.ratio,
                m2: cert.m2.ratio,
                m3: cert.m3.ratio,
                tail_decaying: cert.tail.decaying || cert.tail.total() == 0.0,
                pairing,
                pairing_bound,
                tstar_oscillation: tstar.oscillation,
                tstar_bound: tstar.bound,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximalRow {
    pub trial: usize,
    pub radius: f64,
    /// `‖M_b a‖_1 / ‖b‖_bmo` over the ball family.
    pub ratio: f64,
    /// `‖𝓜_b a‖_1` from the dictionary.
    pub dictionary_l1: f64,
    /// `h¹` estimate of `a (b - c_B)`.
    pub h1_abc: f64,
    /// `‖𝓜_b a‖_1 / (‖a(b-c_B)‖_{h¹} + ‖b‖_bmo)`.
    pub lower_constant: f64,
    /// `‖a(b-c_B)‖_{h¹} / (‖𝓜_b a‖_1 + ‖b‖_bmo)`.
    pub upper_constant: f64,
    /// `max |𝓜_b a|` outside `2B`.
    pub outside_double: f64,
}

/// Maximal commutator norms of Pérez atoms and the two-sided comparison with
/// the `h¹` estimate of `a (b - c_B)`.
pub fn maximal_atom_experiment(
    ctx: &BContext,
    family: &BallFamily,
    dict: &TestDictionary,
    sweep: &AtomSweep,
) -> Result<Vec<MaximalRow>> {
    ensure_nonconstant(&ctx.b)?;
    let bmo = ctx.report.bmo.value;
    let grid = *ctx.b.grid();
    let rows: Vec<Result<MaximalRow>> = (0..sweep.trials)
        .map(|trial| {
            let mut rng = sweep.rng(trial);
            let ball = sweep.ball(&grid, trial, &mut rng)?;
            let atom = make_perez_h1b_atom(&ball, &ctx.b, rng.gen())?;
            let mb = ball_commutator_maximal(&ctx.b, &atom.values, family)?;
            let md = commutator_maximal_lower(&ctx.b, &atom.values, dict)?;
            let cb = ball.c_b(&ctx.b);
            let abc = atom.values.zip_with(&ctx.b, |x, y| x * (y - cb))?;
            let h1_abc = h1_estimate(&abc)?;
            let dictionary_l1 = md.norm(1.0);
            let outside_double = md.lp_norm(f64::INFINITY, Region::Outside(ball.dilate(2.0)));
            Ok(MaximalRow {
                trial,
                radius: ball.radius,
                ratio: mb.norm(1.0) / bmo,
                dictionary_l1,
                h1_abc,
                lower_constant: dictionary_l1 / (h1_abc + bmo),
                upper_constant: h1_abc / (dictionary_l1 + bmo),
                outside_double,
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::make_h1_atom;
    use crate::kernels::standard_bump;
    use crate::testfns::BuiltinB;

    fn ctx(g: &Grid, b: BuiltinB) -> BContext {
        let fam = BallFamily::dyadic(g, 4, 2.0, &[]).unwrap();
        BContext::new(b.sample(g).unwrap(), &fam).unwrap()
    }

    #[test]
    fn default_kernel_satisfies_size_bound() {
        for dim in [1, 2] {
            let k = InhomogeneousKernel::default_for(dim).unwrap();
            assert!(k.spot_check_size(4.0, 20000, 1));
        }
        let bad = InhomogeneousKernel::general("flat", 1, |_, _| 1.0, 1.0, 1.0, None);
        assert!(!bad.spot_check_size(4.0, 1000, 1));
    }

    #[test]
    fn convolution_form_equals_localized_operator() {
        let g = Grid::new(1, 4.0, 256).unwrap();
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let f = GridFunction::from_fn(g, |p| if p[0].abs() < 0.5 { (3.0 * p[0]).cos() } else { 0.0 }).unwrap();
        let a = apply_inhomogeneous(&k, &f, g.spacing()).unwrap();
        let b = crate::operators::apply_localized(&hilbert_kernel(), &standard_bump(1), &f, g.spacing()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn general_form_matches_double_loop_and_decays() {
        let g = Grid::new(1, 2.0, 32).unwrap();
        let k = InhomogeneousKernel::general(
            "asym",
            1,
            |x, y| {
                let d = x[0] - y[0];
                (1.0 + 0.5 * (x[0] * y[0]).sin()) / (d * (1.0 + d * d))
            },
            1.5,
            2.0,
            None,
        );
        let f = GridFunction::from_fn(g, |p| (2.0 * p[0]).sin() + 0.3).unwrap();
        let t = apply_inhomogeneous(&k, &f, g.spacing()).unwrap();
        let h = g.spacing();
        for i in 0..g.len() {
            let mut acc = 0.0;
            for j in 0..g.len() {
                let (x, y) = (g.point(i), g.point(j));
                if (x[0] - y[0]).abs() >= h && f.value_at(j) != 0.0 {
                    acc += k.eval(x, y) * f.value_at(j);
                }
            }
            assert_eq!(t.value_at(i), h * acc);
        }
        // Size bound away from the support.
        let g = Grid::new(1, 8.0, 512).unwrap();
        let bump = GridFunction::from_fn(g, |p| if p[0].abs() < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let t = apply_inhomogeneous(&k, &bump, g.spacing()).unwrap();
        for i in 0..g.len() {
            let x = g.point(i)[0];
            let dist = x.abs() - 0.5;
            if dist > 1.0 {
                assert!(t.value_at(i).abs() <= k.size_constant * dist.powf(-3.0) * bump.norm(1.0));
            }
        }
    }

    #[test]
    fn commutator_identities() {
        let g = Grid::new(1, 4.0, 512).unwrap();
        let c = ctx(&g, BuiltinB::ClippedLog);
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let eps = g.spacing();
        for r in [0.125, 2.0] {
            let ball = Ball { center: [0.25, 0.0], radius: r };
            let a = make_perez_h1b_atom(&ball, &c.b, 3).unwrap();
            let terms = commutator_apply(&c.b, &k, &a, eps).unwrap();
            let direct = apply_inhomogeneous(&k, &a.values, eps)
                .unwrap()
                .mul(&c.b)
                .unwrap()
                .sub(&apply_inhomogeneous(&k, &a.values.mul(&c.b).unwrap(), eps).unwrap())
                .unwrap();
            let diff = terms.output.zip_with(&direct, |x, y| (x - y).abs()).unwrap().sup_norm();
            assert!(diff < 1e-10, "{diff}");
            let (s1, s2) = terms.split();
            assert!(terms.l1() <= s1 + s2 + 1e-12);
            let constant = GridFunction::constant(g, 2.5);
            assert!(commutator_apply(&constant, &k, &a, eps).unwrap().l1() < 1e-12);
        }
        let small = Ball { center: [0.0, 0.0], radius: 0.25 };
        let a = make_h1_atom(&g, &small, 1, true).unwrap();
        let base = commutator_apply(&c.b, &k, &a, eps).unwrap().output;
        let shifted = commutator_apply(&c.b.map(|v| v + 3.0), &k, &a, eps).unwrap().output;
        let diff = base.zip_with(&shifted, |x, y| (x - y).abs()).unwrap().sup_norm();
        assert!(diff < 1e-12 * (1.0 + base.sup_norm()));
        let mean = c.b.integrate() / (2.0 * g.half_width());
        let centered = c.b.map(|v| v - mean);
        let one = commutator_apply(&centered, &k, &a, eps).unwrap().l1();
        let two = commutator_apply(&centered.scale(2.0), &k, &a, eps).unwrap().l1();
        assert!((two - 2.0 * one).abs() <= 1e-8 * two);
    }

    #[test]
    fn commutator_matches_brute_force() {
        let g = Grid::new(1, 2.0, 32).unwrap();
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let b = GridFunction::from_fn(g, |p| p[0] * p[0]).unwrap();
        let ball = Ball { center: [0.0, 0.0], radius: 0.5 };
        let a = make_h1_atom(&g, &ball, 2, true).unwrap();
        let out = commutator_apply(&b, &k, &a, g.spacing()).unwrap().output;
        let cb = ball.c_b(&b);
        let h = g.spacing();
        let kc = match &k.form {
            KernelForm::Convolution(c) => c.clone(),
            _ => unreachable!(),
        };
        for i in 0..g.len() {
            let (mut t1, mut t2) = (0.0, 0.0);
            for j in 0..g.len() {
                let d = [g.point(i)[0] - g.point(j)[0], 0.0];
                if d[0].abs() >= h && a.values.value_at(j) != 0.0 {
                    t1 += kc.eval(d) * a.values.value_at(j);
                }
                let v = a.values.value_at(j) * (b.value_at(j) - cb);
                if d[0].abs() >= h && v != 0.0 {
                    t2 += kc.eval(d) * v;
                }
            }
            let expect = (b.value_at(i) - cb) * (h * t1) - h * t2;
            assert_eq!(out.value_at(i), expect);
        }
    }

    #[test]
    fn pairing_rules_and_adjoint() {
        let g = Grid::new(1, 4.0, 256).unwrap();
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let eps = g.spacing();
        let c = ctx(&g, BuiltinB::ClippedLog);
        let ball = Ball { center: [0.5, 0.0], radius: 0.25 };
        let a = make_h1_atom(&g, &ball, 4, true).unwrap();
        let p = t_star_pairing(&k, &c.b, &ball, &a.values, eps).unwrap();
        let bb = c.b.mean_over(&ball);
        let adj = apply_transpose(&k, &c.b.map(|v| v - bb), eps).unwrap();
        let other = adj.mul(&a.values).unwrap().integrate();
        assert!((p.value - other).abs() <= 1e-12 * (1.0 + p.value.abs()), "{} {}", p.value, other);
        let constant = GridFunction::constant(g, 1.0);
        assert!(t_star_pairing(&k, &constant, &ball, &a.values, eps).unwrap().value.abs() < 1e-12);
        let no_cancel = make_h1_atom(&g, &ball, 4, false).unwrap();
        assert!(t_star_pairing(&k, &c.b, &ball, &no_cancel.values, eps).is_err());
        let chk = t_star_b_condition(&k, &constant, &ball, eps).unwrap();
        assert_eq!(chk.oscillation, 0.0);
        assert!(chk.passed);
        let one = t_star_b_condition(&k, &c.b, &ball, eps).unwrap();
        let shifted = t_star_b_condition(&k, &c.b.map(|v| v + 5.0), &ball, eps).unwrap();
        assert!((one.oscillation - shifted.oscillation).abs() < 1e-10 * (1.0 + one.oscillation));
    }

    #[test]
    fn molecule_check_behaviour() {
        let g = Grid::new(1, 4.0, 512).unwrap();
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let eps = g.spacing();
        let c = ctx(&g, BuiltinB::LipschitzBump);
        let ball = Ball { center: [0.0, 0.0], radius: 0.125 };
        let a = make_perez_h1b_atom(&ball, &c.b, 1).unwrap();
        let cert = commutator_molecule_check(&c.b, &k, &a, 0.75, eps).unwrap();
        assert!(cert.multiple().is_finite() && cert.multiple() > 0.0);
        assert!(commutator_molecule_check(&c.b, &k, &a, 1.6, eps).is_err());
        let constant = GridFunction::constant(g, 1.0);
        let zero = commutator_molecule_check(&constant, &k, &a, 0.75, eps).unwrap();
        assert!(zero.passed);
    }

    #[test]
    fn sign_atom_identity_is_exact() {
        let g = Grid::new(1, 4.0, 1024).unwrap();
        let b = BuiltinB::RandomOscillation { seed: 3 }.sample(&g).unwrap();
        for r in [0.03125, 0.25, 0.5] {
            let id = sign_atom_identity(&b, &Ball { center: [0.0, 0.0], radius: r }).unwrap();
            assert!(id.relative_gap() < 1e-12, "{id:?}");
        }
    }

    #[test]
    fn maximal_vanishes_outside_double_ball_for_large_atoms() {
        let g = Grid::new(1, 8.0, 512).unwrap();
        let c = ctx(&g, BuiltinB::ClippedLog);
        let fam = BallFamily::dyadic(&g, 8, 2.0, &[]).unwrap();
        let dict = TestDictionary::standard(&g).unwrap();
        let sweep = AtomSweep { radii: vec![1.0, 2.0], trials: 2, seed: 9, center_step: 0.25, center_range: 1.0, reach: 0.0 };
        let rows = maximal_atom_experiment(&c, &fam, &dict, &sweep).unwrap();
        for row in rows {
            assert_eq!(row.outside_double, 0.0);
            assert!(row.ratio.is_finite() && row.ratio > 0.0);
        }
    }

    #[test]
    fn sweeps_are_deterministic_and_reject_constant_b() {
        let g = Grid::new(1, 4.0, 256).unwrap();
        let c = ctx(&g, BuiltinB::ClippedLog);
        let k = InhomogeneousKernel::default_for(1).unwrap();
        let sweep = AtomSweep { radii: vec![0.0625, 0.25, 1.0], trials: 6, seed: 1, center_step: 0.125, center_range: 0.5, reach: 2.0 };
        let a = commutator_l1_experiment(&c, &k, &sweep, g.spacing()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| commutator_l1_experiment(&c, &k, &sweep, g.spacing())).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let flat = ctx(&g, BuiltinB::Constant(1.0));
        assert!(commutator_l1_experiment(&flat, &k, &sweep, g.spacing()).is_err());
        let empty = AtomSweep { trials: 0, ..sweep };
        assert!(commutator_l1_experiment(&c, &k, &empty, g.spacing()).unwrap().is_empty());
    }

    #[test]
    fn localized_mean_bound_is_finite() {
        let g = Grid::new(1, 8.0, 512).unwrap();
        let b = BuiltinB::LipschitzBump.sample(&g).unwrap();
        let balls: Vec<Ball> = [0.125, 0.5, 1.0, 2.0].iter().map(|&r| Ball { center: [0.0, 0.0], radius: r }).collect();
        let q = localized_mean_bound(&b, &balls).unwrap();
        assert!(q.small.is_finite() && q.small > 0.0);
        assert!(q.large.is_finite() && q.large > 0.0);
    }
}
