//! Uniform cell-centered grids and the functions sampled on them.
//!
//! A [`Grid`] covers the box `[-L, L]^dim` with `N` cells per axis; samples sit
//! at cell centers `x_i = -L + (i + 1/2) h`, so no sample ever lands on the
//! origin. Values are stored row-major: in two dimensions the first axis is
//! the slow one.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the box. One-dimensional points keep a zero second coordinate.
pub type Point = [f64; 2];

/// Threshold, relative to the sup norm, below which a sample counts as zero
/// when measuring numerical support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

#[inline]
pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

#[inline]
pub fn norm_sq(p: Point) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("{n} points per axis; need a power of two >= 8")));
        }
        Ok(Self { dim, half_width, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^dim`, the weight of every sample in the midpoint rule.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// Per-axis indices of a flat index.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn flatten(&self, ij: [usize; 2]) -> usize {
        if self.dim == 1 {
            ij[0]
        } else {
            ij[0] * self.n + ij[1]
        }
    }

    pub fn point(&self, idx: usize) -> Point {
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    /// Axis index of the cell containing coordinate `x`, if inside the box.
    pub fn axis_index(&self, x: f64) -> Option<usize> {
        let t = (x + self.half_width) / self.spacing();
        if t < 0.0 || t >= self.n as f64 {
            None
        } else {
            Some(t.floor() as usize)
        }
    }

    /// Flat index of the cell containing `p`.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let i = self.axis_index(p[0])?;
        if self.dim == 1 {
            Some(i)
        } else {
            Some(self.flatten([i, self.axis_index(p[1])?]))
        }
    }

    /// Same box, twice the resolution.
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }

    /// Grid with the same spacing on a box of a different half width.
    pub fn with_half_width(&self, half_width: f64) -> Result<Self> {
        let n = (self.n as f64 * half_width / self.half_width).round() as usize;
        Self::new(self.dim, half_width, n)
    }

    /// Axis index range `[lo, hi)` of cells whose centers lie in `[c - r, c + r]`.
    fn axis_window(&self, c: f64, r: f64) -> (usize, usize) {
        let h = self.spacing();
        let lo = ((c - r + self.half_width) / h - 0.5).ceil().max(0.0);
        let hi = ((c + r + self.half_width) / h - 0.5).floor() + 1.0;
        let hi = hi.min(self.n as f64).max(lo);
        (lo as usize, hi as usize)
    }

    /// Flat indices of all cells whose centers satisfy `|x - x0| <= r`, in
    /// increasing order.
    pub fn cells_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        let (lo0, hi0) = self.axis_window(ball.center[0], ball.radius);
        if self.dim == 1 {
            for i in lo0..hi0 {
                if ball.contains(self.point(i)) {
                    out.push(i);
                }
            }
        } else {
            let (lo1, hi1) = self.axis_window(ball.center[1], ball.radius);
            for i in lo0..hi0 {
                for j in lo1..hi1 {
                    let idx = self.flatten([i, j]);
                    if ball.contains(self.point(idx)) {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }

    /// Whether the whole ball lies inside the box.
    pub fn ball_fits(&self, ball: &Ball) -> bool {
        (0..self.dim).all(|k| ball.center[k].abs() + ball.radius <= self.half_width)
    }

    /// Discrete measure of a ball: number of cell centers inside times `h^dim`.
    pub fn ball_measure(&self, ball: &Ball) -> f64 {
        self.cells_in_ball(ball).len() as f64 * self.cell_volume()
    }

    /// Discrete angular frequency `pi k / L` of FFT bin `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        let k = if j < self.n / 2 { j as f64 } else { j as f64 - self.n as f64 };
        std::f64::consts::PI * k / self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!("ball radius {radius} must be positive")));
        }
        Ok(Self { center, radius })
    }

    /// Membership uses squared distances so dyadic geometry is decided exactly.
    pub fn contains(&self, p: Point) -> bool {
        norm_sq(sub(p, self.center)) <= self.radius * self.radius
    }

    pub fn is_small(&self) -> bool {
        self.radius < 1.0
    }

    pub fn dilate(&self, factor: f64) -> Self {
        Self { center: self.center, radius: self.radius * factor }
    }

    /// `ln(1 + 1/r)`.
    pub fn log_factor(&self) -> f64 {
        (1.0 / self.radius).ln_1p()
    }

    /// Lebesgue measure of the continuous ball.
    pub fn exact_volume(&self, dim: usize) -> f64 {
        match dim {
            1 => 2.0 * self.radius,
            _ => std::f64::consts::PI * self.radius * self.radius,
        }
    }

    /// Mean of `b` over the ball when `r < 1`, zero otherwise.
    pub fn c_b(&self, b: &GridFunction) -> f64 {
        if self.is_small() {
            b.mean_over(self)
        } else {
            0.0
        }
    }
}

/// Where a norm or integral is taken.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    Whole,
    Inside(Ball),
    Outside(Ball),
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Region::Whole => true,
            Region::Inside(b) => b.contains(p),
            Region::Outside(b) => !b.contains(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value_at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn ensure_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn map_points(&self, f: impl Fn(Point, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.point(i), v))
            .collect();
        Self { grid: self.grid, values }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Midpoint rule: `h^dim * sum(values)`.
    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn integrate_over(&self, region: Region) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| region.contains(self.grid.point(*i)))
            .map(|(_, v)| v)
            .sum();
        self.grid.cell_volume() * s
    }

    /// Midpoint-rule `L^p` norm over a region; `p = f64::INFINITY` gives the grid max.
    pub fn lp_norm(&self, p: f64, region: Region) -> f64 {
        assert!(p >= 1.0, "lp_norm needs p >= 1");
        let it = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| region.contains(self.grid.point(*i)))
            .map(|(_, v)| v.abs());
        if p.is_infinite() {
            it.fold(0.0, f64::max)
        } else if p == 1.0 {
            self.grid.cell_volume() * it.sum::<f64>()
        } else if p == 2.0 {
            (self.grid.cell_volume() * it.map(|v| v * v).sum::<f64>()).sqrt()
        } else {
            (self.grid.cell_volume() * it.map(|v| v.powf(p)).sum::<f64>()).powf(1.0 / p)
        }
    }

    pub fn norm(&self, p: f64) -> f64 {
        self.lp_norm(p, Region::Whole)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean over the discrete ball.
    pub fn mean_over(&self, ball: &Ball) -> f64 {
        let cells = self.grid.cells_in_ball(ball);
        if cells.is_empty() {
            return 0.0;
        }
        cells.iter().map(|&i| self.values[i]).sum::<f64>() / cells.len() as f64
    }

    /// Zero outside `ball`.
    pub fn restrict_to_ball(&self, ball: &Ball) -> Self {
        self.map_points(|p, v| if ball.contains(p) { v } else { 0.0 })
    }

    /// Largest `max_k |x_k|` over cells where `|f| > SUPPORT_THRESHOLD * sup|f|`;
    /// zero for the zero function.
    pub fn support_extent(&self) -> f64 {
        let m = self.sup_norm();
        if m == 0.0 {
            return 0.0;
        }
        let dim = self.grid.dim();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > SUPPORT_THRESHOLD * m)
            .map(|(i, _)| {
                let p = self.grid.point(i);
                (0..dim).map(|k| p[k].abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Numerical support must sit inside `[-L/4, L/4]^dim` before any
    /// periodic-transform operator is applied.
    pub fn check_padding(&self) -> Result<()> {
        let extent = self.support_extent();
        let limit = self.grid.half_width() / 4.0;
        if extent > limit {
            Err(Error::PaddingContract { extent, limit })
        } else {
            Ok(())
        }
    }

    /// Applies the Fourier multiplier `m` on the periodic extension of the box
    /// and returns the real part of the result. Frequencies are the angular
    /// frequencies `pi k / L`, `k` in `[-N/2, N/2)`.
    pub fn fourier_multiply(&self, m: impl Fn(Point) -> Complex64) -> Self {
        let g = self.grid;
        let n = g.points_per_axis();
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        if g.dim() == 1 {
            fwd.process(&mut data);
            for (j, z) in data.iter_mut().enumerate() {
                *z *= m([g.frequency(j), 0.0]);
            }
            inv.process(&mut data);
        } else {
            fft2(&mut data, n, fwd.as_ref());
            for (idx, z) in data.iter_mut().enumerate() {
                *z *= m([g.frequency(idx / n), g.frequency(idx % n)]);
            }
            fft2(&mut data, n, inv.as_ref());
        }
        let scale = 1.0 / g.len() as f64;
        Self { grid: g, values: data.iter().map(|z| z.re * scale).collect() }
    }

    pub fn write_gfn(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_gfn_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_gfn_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.grid.dim(), self.grid.points_per_axis(), self.grid.half_width())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_gfn(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_gfn_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_gfn_from(r: &mut impl BufRead) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("gfn header `{}` needs `dim N L`", header.trim())));
        }
        let dim: usize = parts[0].parse().map_err(|_| Error::Parse(format!("bad dim `{}`", parts[0])))?;
        let n: usize = parts[1].parse().map_err(|_| Error::Parse(format!("bad N `{}`", parts[1])))?;
        let l: f64 = parts[2].parse().map_err(|_| Error::Parse(format!("bad L `{}`", parts[2])))?;
        let grid = Grid::new(dim, l, n)?;
        let mut bytes = vec![0u8; 8 * grid.len()];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(grid, values)
    }
}

fn fft2(data: &mut [Complex64], n: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g1(l: f64, n: usize) -> Grid {
        Grid::new(1, l, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 1.0, 16).is_err());
        assert!(Grid::new(1, 1.0, 12).is_err());
        assert!(Grid::new(1, 1.0, 4).is_err());
        assert!(Grid::new(1, -1.0, 16).is_err());
    }

    #[test]
    fn cell_centers_avoid_origin() {
        let g = g1(1.0, 16);
        assert!((0..16).all(|i| g.coord(i) != 0.0));
        assert_eq!(g.coord(0), -1.0 + 1.0 / 16.0);
    }

    #[test]
    fn integrate_constant_is_exact() {
        let f = GridFunction::constant(g1(1.0, 64), 1.0);
        assert_eq!(f.integrate(), 2.0);
    }

    #[test]
    fn integrate_odd_vanishes() {
        let f = GridFunction::from_fn(g1(1.0, 256), |p| p[0]).unwrap();
        assert!(f.integrate().abs() < 1e-15);
    }

    #[test]
    fn gaussian_integral_and_l1_norm() {
        // Reference value sqrt(pi) from a 64-point Gauss-Legendre rule on
        // [-8, 8] split into 16 panels.
        let rule = gauss_quad::legendre::GaussLegendre::new(64.try_into().unwrap());
        let oracle: f64 = (0..16)
            .map(|k| {
                let a = -8.0 + k as f64;
                rule.integrate(a, a + 1.0, |x| (-x * x).exp())
            })
            .sum();
        assert!((oracle - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        let f = GridFunction::from_fn(g1(8.0, 4096), |p| (-p[0] * p[0]).exp()).unwrap();
        assert!((f.integrate() - oracle).abs() < 1e-8);
        assert!((f.norm(1.0) - oracle).abs() < 1e-8);
    }

    #[test]
    fn indicator_l2_and_sup() {
        let g = g1(4.0, 256);
        let ball = Ball::new([0.0, 0.0], 1.0).unwrap();
        let f = GridFunction::constant(g, 1.0).restrict_to_ball(&ball);
        assert!((f.norm(2.0) - 2f64.sqrt()).abs() < 1e-12);
        let x = GridFunction::from_fn(g1(1.0, 64), |p| p[0]).unwrap();
        let m = x.norm(f64::INFINITY);
        assert!(m <= 1.0 && m > 0.98);
    }

    #[test]
    fn restriction_measure_matches_volume() {
        for (dim, n) in [(1, 512), (2, 256)] {
            let g = Grid::new(dim, 2.0, n).unwrap();
            let center = if dim == 1 { [0.1, 0.0] } else { [0.1, -0.2] };
            let ball = Ball::new(center, 0.7).unwrap();
            let m = GridFunction::constant(g, 1.0).restrict_to_ball(&ball).integrate();
            let err = (m - ball.exact_volume(dim)).abs();
            assert!(err < 4.0 * g.spacing(), "dim {dim}: {err}");
            assert!((m - g.ball_measure(&ball)).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction_edge_cases() {
        let g = g1(2.0, 64);
        let f = GridFunction::from_fn(g, |p| (-p[0] * p[0]).exp() * (p[0].abs() < 0.5) as u8 as f64).unwrap();
        assert_eq!(f.restrict_to_ball(&Ball::new([0.0, 0.0], 10.0).unwrap()), f);
        let far = f.restrict_to_ball(&Ball::new([1.5, 0.0], 0.25).unwrap());
        assert!(far.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cells_in_ball_matches_brute_force() {
        let g = Grid::new(2, 1.0, 32).unwrap();
        let ball = Ball::new([g.coord(9), g.coord(20)], 0.25).unwrap();
        let brute: Vec<usize> = (0..g.len()).filter(|&i| ball.contains(g.point(i))).collect();
        assert_eq!(g.cells_in_ball(&ball), brute);
    }

    #[test]
    fn multiplier_identities() {
        let g = g1(4.0, 128);
        let f = GridFunction::from_fn(g, |p| (-4.0 * p[0] * p[0]).exp() * (1.0 + p[0])).unwrap();
        let same = f.fourier_multiply(|_| Complex64::new(1.0, 0.0));
        for (a, b) in same.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let zero = f.fourier_multiply(|_| Complex64::new(0.0, 0.0));
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn multipliers_compose_2d() {
        let g = Grid::new(2, 4.0, 32).unwrap();
        let f = GridFunction::from_fn(g, |p| (-(p[0] * p[0] + 2.0 * p[1] * p[1])).exp() * (1.0 + p[0])).unwrap();
        // Even real multipliers keep the transform Hermitian, so taking the real
        // part between the two steps loses nothing.
        let m1 = |x: Point| Complex64::new(1.0 / (1.0 + norm_sq(x)), 0.0);
        let m2 = |x: Point| Complex64::new((-0.1 * norm_sq(x)).exp(), 0.0);
        let two = f.fourier_multiply(m1).fourier_multiply(m2);
        let one = f.fourier_multiply(|x| m1(x) * m2(x));
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_is_second_order() {
        let f = |n| GridFunction::from_fn(g1(3.0, n), |p| (p[0].cos() + 2.0) * (-p[0] * p[0]).exp()).unwrap();
        // Integrand decays to ~1e-4 at the box edge, so compare against the
        // same truncated integral.
        let rule = gauss_quad::legendre::GaussLegendre::new(80.try_into().unwrap());
        let exact = rule.integrate(-3.0, 3.0, |x| (x.cos() + 2.0) * (-x * x).exp());
        let e1 = (f(64).integrate() - exact).abs();
        let e2 = (f(128).integrate() - exact).abs();
        assert!(e2 < 0.3 * e1, "{e1} {e2}");
        assert!(e1 < 0.05 * (6.0f64 / 64.0).powi(2));
    }

    #[test]
    fn gfn_round_trip() {
        let g = Grid::new(2, 1.5, 8).unwrap();
        let f = GridFunction::from_fn(g, |p| p[0] * 3.0 - p[1].sin()).unwrap();
        let mut buf = Vec::new();
        f.write_gfn_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"2 8 1.5\n"));
        let back = GridFunction::read_gfn_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn gfn_rejects_short_payload() {
        let mut bytes = b"1 8 1\n".to_vec();
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(GridFunction::read_gfn_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn padding_contract() {
        let g = g1(8.0, 256);
        let ok = GridFunction::from_fn(g, |p| if p[0].abs() < 1.5 { 1.0 } else { 0.0 }).unwrap();
        assert!(ok.check_padding().is_ok());
        let bad = GridFunction::from_fn(g, |p| if p[0].abs() < 3.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(bad.check_padding(), Err(Error::PaddingContract { .. })));
    }

    #[test]
    fn combining_different_grids_fails() {
        let a = GridFunction::zeros(g1(1.0, 16));
        let b = GridFunction::zeros(g1(1.0, 32));
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn c_b_rule() {
        let g = g1(4.0, 128);
        let b = GridFunction::constant(g, 3.0);
        assert!((Ball::new([0.0, 0.0], 0.5).unwrap().c_b(&b) - 3.0).abs() < 1e-15);
        assert_eq!(Ball::new([0.0, 0.0], 1.0).unwrap().c_b(&b), 0.0);
    }

    proptest! {
        #[test]
        fn integrate_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let g = g1(2.0, 64);
            let f = GridFunction::from_fn(g, |p| ((seed as f64 + 1.0) * p[0]).sin()).unwrap();
            let h = GridFunction::from_fn(g, |p| (p[0] * 0.7 + seed as f64).cos()).unwrap();
            let comb = f.scale(alpha).add(&h.scale(beta)).unwrap();
            let lhs = comb.integrate();
            let rhs = alpha * f.integrate() + beta * h.integrate();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + f.norm(1.0) + h.norm(1.0)));
        }

        #[test]
        fn holder_at_grid_level(vals in proptest::collection::vec(-5.0f64..5.0, 32), ws in proptest::collection::vec(-5.0f64..5.0, 32), p in 1.1f64..6.0) {
            let g = g1(1.0, 32);
            let f = GridFunction::new(g, vals).unwrap();
            let w = GridFunction::new(g, ws).unwrap();
            let q = p / (p - 1.0);
            let lhs = f.mul(&w).unwrap().norm(1.0);
            prop_assert!(lhs <= f.norm(p) * w.norm(q) * (1.0 + 1e-12) + 1e-300);
        }
    }
}
