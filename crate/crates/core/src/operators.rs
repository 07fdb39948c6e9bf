//! Truncated singular integrals on grids, the two localizations `T_η` and
//! `T^ψ`, the maximal error kernel `K_*` relating them, and local Riesz
//! transforms defined by Fourier multipliers.
//!
//! Every spatial operator is a direct sum over lattice offsets with zero
//! extension outside the box. Output cells are computed in parallel, each with
//! a fixed summation order, so results do not depend on the thread count.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, norm_sq, Grid, GridFunction, Point};
use crate::kernels::{ConvolutionKernel, Localizer};

/// Kernel values on integer lattice offsets `d h`, `d ∈ [-(N-1), N-1]^dim`.
struct OffsetTable {
    n: usize,
    dim: usize,
    /// Offsets with `|d| > reach` cells are known to vanish.
    reach: usize,
    values: Vec<f64>,
}

impl OffsetTable {
    /// `exclude_below`: offsets with `|d h| < ε` are set to zero. `None` keeps
    /// the zero offset too.
    fn build(grid: &Grid, eval: impl Fn(Point) -> f64 + Sync, exclude_below: Option<f64>, support: Option<f64>) -> Self {
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let dim = grid.dim();
        let reach = match support {
            Some(r) => ((r / h).ceil() as usize + 1).min(n - 1),
            None => n - 1,
        };
        let side = 2 * n - 1;
        let eps_sq = exclude_below.map(|e| e * e);
        let at = |d0: isize, d1: isize| -> f64 {
            let x = [d0 as f64 * h, d1 as f64 * h];
            if let Some(e2) = eps_sq {
                if norm_sq(x) < e2 {
                    return 0.0;
                }
            }
            if d0.unsigned_abs() > reach || d1.unsigned_abs() > reach {
                return 0.0;
            }
            eval(x)
        };
        let off = (n - 1) as isize;
        let values: Vec<f64> = if dim == 1 {
            (0..side).into_par_iter().map(|k| at(k as isize - off, 0)).collect()
        } else {
            (0..side * side)
                .into_par_iter()
                .map(|k| at((k / side) as isize - off, (k % side) as isize - off))
                .collect()
        };
        Self { n, dim, reach, values }
    }

    #[inline]
    fn get(&self, d0: isize, d1: isize) -> f64 {
        let off = (self.n - 1) as isize;
        if self.dim == 1 {
            self.values[(d0 + off) as usize]
        } else {
            self.values[(d0 + off) as usize * (2 * self.n - 1) + (d1 + off) as usize]
        }
    }
}

/// Nonzero input samples grouped by row, columns ascending.
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    fn new(f: &GridFunction) -> Self {
        let g = f.grid();
        let n = g.points_per_axis();
        let nrows = if g.dim() == 1 { 1 } else { n };
        let mut rows = vec![Vec::new(); nrows];
        for (idx, &v) in f.values().iter().enumerate() {
            if v != 0.0 {
                let [i, j] = g.unflatten(idx);
                if g.dim() == 1 {
                    rows[0].push((i, v));
                } else {
                    rows[i].push((j, v));
                }
            }
        }
        Self { rows }
    }
}

/// `h^dim Σ_j table[i - j] f_j` at every output cell.
fn convolve_table(table: &OffsetTable, f: &GridFunction) -> Result<GridFunction> {
    let g = *f.grid();
    let n = g.points_per_axis();
    let w = g.cell_volume();
    let input = SparseRows::new(f);
    let reach = table.reach;
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let [i0, i1] = g.unflatten(idx);
            let mut acc = 0.0;
            if g.dim() == 1 {
                let row = &input.rows[0];
                let lo = i0.saturating_sub(reach);
                let hi = i0 + reach;
                let start = row.partition_point(|&(c, _)| c < lo);
                for &(c, v) in &row[start..] {
                    if c > hi {
                        break;
                    }
                    acc += table.get(i0 as isize - c as isize, 0) * v;
                }
            } else {
                let r_lo = i0.saturating_sub(reach);
                let r_hi = (i0 + reach).min(n - 1);
                let c_lo = i1.saturating_sub(reach);
                let c_hi = i1 + reach;
                for r in r_lo..=r_hi {
                    let row = &input.rows[r];
                    let start = row.partition_point(|&(c, _)| c < c_lo);
                    let d0 = i0 as isize - r as isize;
                    for &(c, v) in &row[start..] {
                        if c > c_hi {
                            break;
                        }
                        acc += table.get(d0, i1 as isize - c as isize) * v;
                    }
                }
            }
            w * acc
        })
        .collect();
    GridFunction::new(g, values)
}

fn check_dims(k_dim: usize, f: &GridFunction) -> Result<()> {
    if k_dim != f.grid().dim() {
        return Err(Error::DimensionMismatch { expected: k_dim, found: f.grid().dim() });
    }
    Ok(())
}

fn check_eps(eps: f64, grid: &Grid) -> Result<()> {
    if !(eps >= grid.spacing() / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation radius {eps} below half the grid spacing {}",
            grid.spacing() / 2.0
        )));
    }
    Ok(())
}

/// Discrete convolution of `f` with an arbitrary function of the offset,
/// including the zero offset.
pub fn convolve(eval: impl Fn(Point) -> f64 + Sync, support: Option<f64>, f: &GridFunction) -> Result<GridFunction> {
    let table = OffsetTable::build(f.grid(), eval, None, support);
    convolve_table(&table, f)
}

/// `(Tf)(x_i) = h^dim Σ_{|x_i - x_j| >= ε} K(x_i - x_j) f(x_j)`.
pub fn apply_pv(k: &ConvolutionKernel, f: &GridFunction, eps: f64) -> Result<GridFunction> {
    check_dims(k.dim, f)?;
    check_eps(eps, f.grid())?;
    let table = OffsetTable::build(f.grid(), |x| k.eval(x), Some(eps), k.support_radius);
    convolve_table(&table, f)
}

/// A kernel together with its truncation radius.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub kernel: ConvolutionKernel,
    pub epsilon: f64,
}

impl TruncatedOperator {
    /// Truncation at one grid spacing.
    pub fn new(kernel: ConvolutionKernel, grid: &Grid) -> Self {
        Self { kernel, epsilon: grid.spacing() }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        apply_pv(&self.kernel, f, self.epsilon)
    }
}

/// `T_η f`: the truncated operator with kernel `K η`.
pub fn apply_localized(k: &ConvolutionKernel, eta: &Localizer, f: &GridFunction, eps: f64) -> Result<GridFunction> {
    if eta.dim != k.dim {
        return Err(Error::DimensionMismatch { expected: k.dim, found: eta.dim });
    }
    apply_pv(&k.localized(eta), f, eps)
}

/// `ψ * f` by direct discrete convolution.
pub fn mollify(psi: &Localizer, f: &GridFunction) -> Result<GridFunction> {
    check_dims(psi.dim, f)?;
    convolve(|x| psi.eval(x), psi.compact_radius, f)
}

/// `T^ψ f = T(f - ψ * f)`. The caller certifies `ψ`; the padding contract on
/// `f` is enforced here.
pub fn apply_fourier_localized(k: &ConvolutionKernel, psi: &Localizer, f: &GridFunction, eps: f64) -> Result<GridFunction> {
    check_dims(k.dim, f)?;
    f.check_padding()?;
    let g = f.sub(&mollify(psi, f)?)?;
    apply_pv(k, &g, eps)
}

/// `T` with the reflected kernel `x -> K(-x)`; the transpose of [`apply_pv`].
pub fn adjoint_apply(k: &ConvolutionKernel, g: &GridFunction, eps: f64) -> Result<GridFunction> {
    apply_pv(&k.reflected(), g, eps)
}

/// Dyadic truncation radii `h, 2h, 4h, ...` up to and including 1.
pub fn default_eps_list(grid: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = grid.spacing();
    while e <= 1.0 {
        out.push(e);
        e *= 2.0;
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShellMass {
    pub inner: f64,
    pub outer: f64,
    pub mass: f64,
}

#[derive(Clone, Debug)]
pub struct ErrorKernelResult {
    pub k_star: GridFunction,
    pub l1_norm: f64,
    /// L¹ mass of `K_*` on `|x| < h` followed by dyadic shells `[2^k, 2^{k+1})`.
    pub shell_profile: Vec<ShellMass>,
    pub eps_list: Vec<f64>,
}

impl ErrorKernelResult {
    pub fn shell_increments(&self) -> Vec<f64> {
        self.shell_profile.iter().map(|s| s.mass).collect()
    }
}

/// `K_*(x) = max_{ε ∈ εList} |(Kη)_ε(x) - K_ε(x) + (K_ε * ψ)(x)|` on `grid`.
///
/// The maximum over a finite list of radii is a lower bound for the supremum
/// over all `ε > 0`.
pub fn error_kernel_star(
    k: &ConvolutionKernel,
    eta: &Localizer,
    psi: &Localizer,
    eps_list: &[f64],
    grid: &Grid,
) -> Result<ErrorKernelResult> {
    if k.dim != grid.dim() || eta.dim != grid.dim() || psi.dim != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: k.dim });
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty truncation list".into()));
    }
    for &e in eps_list {
        check_eps(e, grid)?;
    }
    let psi_s = GridFunction::from_fn(*grid, |x| psi.eval(x))?;
    let local = GridFunction::from_fn(*grid, |x| k.eval(x) * (eta.eval(x) - 1.0))?;
    let mut star = vec![0.0f64; grid.len()];
    for &e in eps_list {
        let conv = apply_pv(k, &psi_s, e)?;
        let e2 = e * e;
        for (i, s) in star.iter_mut().enumerate() {
            let x = grid.point(i);
            let trunc = if norm_sq(x) >= e2 { local.value_at(i) } else { 0.0 };
            *s = s.max((trunc + conv.value_at(i)).abs());
        }
    }
    let k_star = GridFunction::new(*grid, star)?;
    let l1_norm = k_star.integrate();
    let shell_profile = shell_masses(&k_star);
    Ok(ErrorKernelResult { k_star, l1_norm, shell_profile, eps_list: eps_list.to_vec() })
}

/// L¹ mass of a nonnegative grid function in `|x| < h` and in dyadic shells
/// out to the box edge.
pub fn shell_masses(f: &GridFunction) -> Vec<ShellMass> {
    let g = f.grid();
    let h = g.spacing();
    let kmin = h.log2().floor() as i32;
    let kmax = g.half_width().log2().ceil() as i32;
    let mut out = vec![ShellMass { inner: 0.0, outer: (kmin as f64).exp2(), mass: 0.0 }];
    for k in kmin..kmax {
        out.push(ShellMass { inner: (k as f64).exp2(), outer: (k as f64 + 1.0).exp2(), mass: 0.0 });
    }
    let w = g.cell_volume();
    for (i, &v) in f.values().iter().enumerate() {
        let r = norm(g.point(i));
        let slot = if r < out[0].outer { 0 } else { ((r.log2().floor() as i32 - kmin) as usize + 1).min(out.len() - 1) };
        out[slot].mass += w * v.abs();
    }
    // Shells that only reach the box corners in two dimensions stay in the list.
    out
}

/// Checks that `φ` is within `1e-6` of 1 at the lowest nonzero frequencies.
fn check_cutoff_near_zero(grid: &Grid, phi: &impl Fn(Point) -> f64) -> Result<()> {
    let xi = grid.frequency(1);
    let probes: Vec<Point> = if grid.dim() == 1 {
        vec![[xi, 0.0], [-xi, 0.0]]
    } else {
        vec![[xi, 0.0], [-xi, 0.0], [0.0, xi], [0.0, -xi], [xi, xi]]
    };
    for p in probes {
        let v = phi(p);
        if (v - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("cutoff equals {v} at frequency {p:?}; must be 1 near 0")));
        }
    }
    Ok(())
}

/// Multiplier `(1 - φ(ξ)) i ξ_j / |ξ|`, zero at `ξ = 0`; `j` is 1-based.
pub fn local_riesz_multiplier(j: usize, phi: impl Fn(Point) -> f64) -> impl Fn(Point) -> Complex64 {
    move |xi: Point| {
        let r = norm(xi);
        if r == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, (1.0 - phi(xi)) * xi[j - 1] / r)
        }
    }
}

/// Goldberg's local Riesz transform `r_j`. The transform convention is
/// `f̂(ξ) = Σ f(x) e^{-i x ξ}`, under which the kernel `c_n x_j/|x|^{n+1}`
/// has multiplier `-i ξ_j/|ξ|`.
pub fn local_riesz_goldberg(j: usize, phi: impl Fn(Point) -> f64, f: &GridFunction) -> Result<GridFunction> {
    check_cutoff_near_zero(f.grid(), &phi)?;
    local_riesz_unchecked(j, phi, f)
}

/// As [`local_riesz_goldberg`] without the cutoff check, so the degenerate
/// cutoff `φ ≡ 0` (the full Riesz transform) can be applied.
pub fn local_riesz_unchecked(j: usize, phi: impl Fn(Point) -> f64, f: &GridFunction) -> Result<GridFunction> {
    if j == 0 || j > f.grid().dim() {
        return Err(Error::InvalidArgument(format!("axis {j} out of range")));
    }
    f.check_padding()?;
    Ok(f.fourier_multiply(local_riesz_multiplier(j, phi)))
}
