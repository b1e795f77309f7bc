//! Quasilocal scattering on a 1-D momentum grid: translates of a smooth
//! kernel, their box integral, cell decompositions and the momentum-balance
//! spread of the resulting branches.
//!
//! Only the total momentum is modeled. Grid index `m` carries momentum
//! `P_m = 2 pi hbar m / L` with `m` in signed FFT order
//! (`0, 1, .., N/2 - 1, -N/2, .., -1`). Momentum amplitudes of a lattice
//! function are `psi(P_m) = N^{-1/2} sum_j psi(x_j) exp(i P_m x_j / hbar)`, so
//! multiplying by `exp(i P y / hbar)` moves a state by `+y` and the kernel
//! translate `tau(P', P) exp(i (P' - P) x / hbar)` acts near `x`.
//!
//! Summation order: cell transforms come from one FFT per cell; kernel
//! application sums inputs in ascending index order for each output, and
//! outputs are computed in parallel, so results are bitwise stable.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

/// Tolerance on `sum_k g_k = 1`.
pub const PARTITION_TOL: f64 = 1e-12;
/// Smoothing of default cells as a fraction of the cell width.
pub const DEFAULT_SMOOTHING: f64 = 0.05;
/// Distance beyond a cell edge, in smoothing lengths, past which the cell
/// function is below 1e-12.
pub const SUPPORT_MARGIN: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuasilocalError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("kernel entry ({out}, {inp}) is not finite")]
    NonFiniteKernel { out: usize, inp: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("cell functions do not sum to one: max deviation {max_deviation:e}")]
    PartitionNotUnity { max_deviation: f64 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("translation {x} lies outside the box of length {length}")]
    TranslationOutOfBox { x: f64, length: f64 },
    #[error("expected {expected} amplitudes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("branch for cell {cell} has zero norm")]
    ZeroNormBranch { cell: usize },
}

pub type Result<T> = std::result::Result<T, QuasilocalError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentumGrid {
    pub points: usize,
    /// Spatial lattice spacing.
    pub dx: f64,
    pub hbar: f64,
}

impl MomentumGrid {
    pub fn new(points: usize, dx: f64, hbar: f64) -> Result<Self> {
        if points < 16 || !points.is_multiple_of(2) {
            return Err(QuasilocalError::InvalidGrid(format!(
                "need an even number of points >= 16, got {points}"
            )));
        }
        for (name, v) in [("dx", dx), ("hbar", hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(QuasilocalError::InvalidGrid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { points, dx, hbar })
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn box_length(&self) -> f64 {
        self.points as f64 * self.dx
    }

    pub fn dp(&self) -> f64 {
        2.0 * PI * self.hbar / self.box_length()
    }

    pub fn planck(&self) -> f64 {
        2.0 * PI * self.hbar
    }

    pub fn mode(&self, m: usize) -> i64 {
        let n = self.points as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    pub fn momentum(&self, m: usize) -> f64 {
        self.mode(m) as f64 * self.dp()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.points).map(|m| self.momentum(m)).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.points).map(|j| j as f64 * self.dx).collect()
    }

    /// `exp(2 pi i k / N)` for `k = 0 .. N`.
    fn roots(&self) -> Vec<Complex64> {
        let n = self.points as f64;
        (0..self.points)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n))
            .collect()
    }

    fn check_len(&self, found: usize) -> Result<()> {
        if found == self.points {
            Ok(())
        } else {
            Err(QuasilocalError::DimensionMismatch {
                expected: self.points,
                found,
            })
        }
    }
}

/// `sum_j f_j exp(+2 pi i m j / N)` for every `m`.
fn transform_plus(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

/// `sum_m f_m exp(-2 pi i m j / N)` for every `j`.
fn transform_minus(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

pub fn position_to_momentum(grid: &MomentumGrid, psi_x: &[Complex64]) -> Result<Vec<Complex64>> {
    grid.check_len(psi_x.len())?;
    let s = 1.0 / (grid.points as f64).sqrt();
    Ok(transform_plus(psi_x).into_iter().map(|a| a * s).collect())
}

pub fn momentum_to_position(grid: &MomentumGrid, psi_p: &[Complex64]) -> Result<Vec<Complex64>> {
    grid.check_len(psi_p.len())?;
    let s = 1.0 / (grid.points as f64).sqrt();
    Ok(transform_minus(psi_p).into_iter().map(|a| a * s).collect())
}

/// Unit-norm Gaussian packet in momentum representation, with position
/// standard deviation `sigma` about `center` and mean momentum near `p0`.
pub fn gaussian_packet(grid: &MomentumGrid, center: f64, sigma: f64, p0: f64) -> Result<Vec<Complex64>> {
    let l = grid.box_length();
    let psi_x: Vec<Complex64> = grid
        .positions()
        .iter()
        .map(|&x| {
            let mut d = (x - center).rem_euclid(l);
            if d > l / 2.0 {
                d -= l;
            }
            Complex64::from_polar((-d * d / (4.0 * sigma * sigma)).exp(), p0 * x / grid.hbar)
        })
        .collect();
    let n = psi_x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let psi_x: Vec<Complex64> = psi_x.iter().map(|a| a / n).collect();
    position_to_momentum(grid, &psi_x)
}

/// Plane wave at grid momentum index `m`.
pub fn plane_wave(grid: &MomentumGrid, m: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); grid.points];
    v[m % grid.points] = Complex64::new(1.0, 0.0);
    v
}

/// Multiplies by `exp(i P y / hbar)`, moving the state by `+y`.
pub fn translate_state(grid: &MomentumGrid, psi: &[Complex64], y: f64) -> Vec<Complex64> {
    psi.iter()
        .enumerate()
        .map(|(m, a)| a * Complex64::from_polar(1.0, grid.momentum(m) * y / grid.hbar))
        .collect()
}

/// Matrix elements `tau(P', P)` over output and input grid indices.
pub trait Kernel: Sync {
    fn grid(&self) -> &MomentumGrid;
    fn tau(&self, out: usize, inp: usize) -> Complex64;
}

/// Dense kernel, row-major with the output index slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct TKernel {
    grid: MomentumGrid,
    entries: Vec<Complex64>,
}

impl TKernel {
    pub fn from_fn(grid: MomentumGrid, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let n = grid.points;
        let p = grid.momenta();
        let mut entries = Vec::with_capacity(n * n);
        for out in 0..n {
            for inp in 0..n {
                let v = f(p[out], p[inp]);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(QuasilocalError::NonFiniteKernel { out, inp });
                }
                entries.push(v);
            }
        }
        Ok(Self { grid, entries })
    }

    pub fn from_kernel(k: &impl Kernel) -> Self {
        let grid = *k.grid();
        let n = grid.points;
        let entries = (0..n * n).map(|i| k.tau(i / n, i % n)).collect();
        Self { grid, entries }
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &TKernel) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.grid.points;
        (0..n * n)
            .filter(|i| i / n != i % n)
            .map(|i| self.entries[i].norm())
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        let n = self.grid.points;
        (0..n).map(|i| self.entries[i * n + i]).collect()
    }

    pub fn add(&self, other: &TKernel) -> TKernel {
        TKernel {
            grid: self.grid,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        self.grid.check_len(psi.len())?;
        let n = self.grid.points;
        Ok((0..n)
            .into_par_iter()
            .map(|out| {
                let row = &self.entries[out * n..(out + 1) * n];
                row.iter().zip(psi).map(|(t, a)| t * a).sum()
            })
            .collect())
    }
}

impl Kernel for TKernel {
    fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    fn tau(&self, out: usize, inp: usize) -> Complex64 {
        self.entries[out * self.grid.points + inp]
    }
}

/// `tau(P', P) = exp(-(P'^2 - P' P + P^2) / (2 scale^2))`: smooth, real and
/// symmetric, decaying in every direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianKernel {
    pub grid: MomentumGrid,
    pub scale: f64,
}

impl GaussianKernel {
    pub fn new(grid: MomentumGrid, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuasilocalError::InvalidKernel(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { grid, scale })
    }

    pub fn value(&self, p_out: f64, p_in: f64) -> f64 {
        (-(p_out * p_out - p_out * p_in + p_in * p_in) / (2.0 * self.scale * self.scale)).exp()
    }
}

impl Kernel for GaussianKernel {
    fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    fn tau(&self, out: usize, inp: usize) -> Complex64 {
        Complex64::new(self.value(self.grid.momentum(out), self.grid.momentum(inp)), 0.0)
    }
}

/// Kernel of the translate by `x`: `tau(P', P) exp(i (P' - P) x / hbar)`.
pub fn translate_kernel(t: &TKernel, x: f64) -> Result<TKernel> {
    let l = t.grid.box_length();
    if !(x.is_finite() && x.abs() <= l) {
        return Err(QuasilocalError::TranslationOutOfBox { x, length: l });
    }
    let n = t.grid.points;
    let p = t.grid.momenta();
    let hbar = t.grid.hbar;
    let entries = t
        .entries
        .iter()
        .enumerate()
        .map(|(i, v)| v * Complex64::from_polar(1.0, (p[i / n] - p[i % n]) * x / hbar))
        .collect();
    Ok(TKernel { grid: t.grid, entries })
}

/// Sum of the translates over every grid position, times `dx`.
pub fn integrate_over_box(t: &TKernel) -> TKernel {
    let n = t.grid.points;
    let roots = t.grid.roots();
    let dx = t.grid.dx;
    let entries = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (out, inp) = (i / n, i % n);
            let dm = (out + n - inp) % n;
            let mut phase_sum = Complex64::new(0.0, 0.0);
            for j in 0..n {
                phase_sum += roots[(dm * j) % n];
            }
            t.entries[i] * phase_sum * dx
        })
        .collect();
    TKernel { grid: t.grid, entries }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `Phi(u) - Phi(v)` for `u >= v`, accurate in both tails.
fn normal_mass(u: f64, v: f64) -> f64 {
    if v >= 0.0 {
        std_normal_sf(v) - std_normal_sf(u)
    } else if u <= 0.0 {
        std_normal_cdf(u) - std_normal_cdf(v)
    } else {
        1.0 - std_normal_sf(u) - std_normal_cdf(v)
    }
}

/// Cell functions `g_k` sampled on the lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellPartition {
    pub grid: MomentumGrid,
    pub width: f64,
    pub offset: f64,
    /// Smoothing length `s`; zero for sharp or user-supplied cells.
    pub smoothing: f64,
    values: Vec<Vec<f64>>,
}

impl CellPartition {
    /// The whole box as one cell, `g = 1`.
    pub fn single(grid: MomentumGrid) -> Self {
        Self {
            width: grid.box_length(),
            offset: 0.0,
            smoothing: 0.0,
            values: vec![vec![1.0; grid.points]],
            grid,
        }
    }

    /// `cells` Gaussian-smoothed indicators of width `a = L / cells`, the
    /// first starting at `offset`, with smoothing length `ratio * a`.
    pub fn smoothed(grid: MomentumGrid, cells: usize, offset: f64, ratio: f64) -> Result<Self> {
        if cells == 0 {
            return Err(QuasilocalError::InvalidPartition("need at least one cell".into()));
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(QuasilocalError::InvalidPartition(format!("smoothing ratio must be positive, got {ratio}")));
        }
        if cells == 1 {
            let mut p = Self::single(grid);
            p.offset = offset;
            return Ok(p);
        }
        let l = grid.box_length();
        let a = l / cells as f64;
        let s = ratio * a;
        let x = grid.positions();
        let values = (0..cells)
            .map(|k| {
                let center = offset + (k as f64 + 0.5) * a;
                x.iter()
                    .map(|&xj| {
                        let mut d = (xj - center).rem_euclid(l);
                        if d >= l / 2.0 {
                            d -= l;
                        }
                        normal_mass((d + a / 2.0) / s, (d - a / 2.0) / s)
                    })
                    .collect()
            })
            .collect();
        Self::from_parts(grid, a, offset, s, values)
    }

    /// Cells of width `a`, which must divide the box length.
    pub fn with_width(grid: MomentumGrid, a: f64, offset: f64, ratio: f64) -> Result<Self> {
        Self::smoothed(grid, cells_for_width(&grid, a)?, offset, ratio)
    }

    /// User-supplied cell functions; they must sum to one everywhere.
    pub fn from_functions(grid: MomentumGrid, width: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_parts(grid, width, 0.0, 0.0, values)
    }

    fn from_parts(grid: MomentumGrid, width: f64, offset: f64, smoothing: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(QuasilocalError::InvalidPartition("need at least one cell".into()));
        }
        for g in &values {
            grid.check_len(g.len())?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(QuasilocalError::InvalidPartition("cell function is not finite".into()));
            }
        }
        let max_deviation = (0..grid.points)
            .map(|j| (values.iter().map(|g| g[j]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if max_deviation > PARTITION_TOL {
            return Err(QuasilocalError::PartitionNotUnity { max_deviation });
        }
        Ok(Self {
            grid,
            width,
            offset,
            smoothing,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Largest `|g_k|` farther than `margin` outside cell `k` (periodic).
    pub fn max_beyond_cell(&self, k: usize, margin: f64) -> f64 {
        let l = self.grid.box_length();
        let center = self.offset + (k as f64 + 0.5) * self.width;
        self.grid
            .positions()
            .iter()
            .zip(&self.values[k])
            .filter(|(&x, _)| {
                let mut d = (x - center).rem_euclid(l);
                if d >= l / 2.0 {
                    d -= l;
                }
                d.abs() > self.width / 2.0 + margin
            })
            .map(|(_, g)| g.abs())
            .fold(0.0, f64::max)
    }

    /// `g_hat(m) = dx sum_j g(x_j) exp(2 pi i m j / N)`.
    pub fn transform(&self, k: usize) -> Vec<Complex64> {
        let dx = self.grid.dx;
        let vals: Vec<Complex64> = self.values[k].iter().map(|&g| Complex64::new(g * dx, 0.0)).collect();
        transform_plus(&vals)
    }
}

/// Number of cells of width `a` in the box.
pub fn cells_for_width(grid: &MomentumGrid, a: f64) -> Result<usize> {
    let k = grid.box_length() / a;
    let rounded = k.round();
    if !(a.is_finite() && a > 0.0) || rounded < 1.0 || (k - rounded).abs() > 1e-9 * k.max(1.0) {
        return Err(QuasilocalError::InvalidPartition(format!(
            "cell width {a} does not divide the box length {}",
            grid.box_length()
        )));
    }
    Ok(rounded as usize)
}

/// `T_k(P', P) = tau(P', P) g_hat_k((m' - m) mod N)`.
#[derive(Debug, Clone)]
pub struct CellOperator<'a, K: Kernel> {
    pub kernel: &'a K,
    pub cell: usize,
    pub g_hat: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchState {
    pub cell: usize,
    pub amplitudes: Vec<Complex64>,
    pub norm_sqr: f64,
    /// Standard deviation of `P' - P` under `|T_k(P', P) psi(P)|^2`;
    /// `None` for a zero branch.
    pub momentum_spread: Option<f64>,
}

impl<K: Kernel> CellOperator<'_, K> {
    pub fn entry(&self, out: usize, inp: usize) -> Complex64 {
        let n = self.g_hat.len();
        self.kernel.tau(out, inp) * self.g_hat[(out + n - inp) % n]
    }

    pub fn to_dense(&self) -> TKernel {
        let grid = *self.kernel.grid();
        let n = grid.points;
        TKernel {
            grid,
            entries: (0..n * n).map(|i| self.entry(i / n, i % n)).collect(),
        }
    }

    pub fn apply(&self, psi: &[Complex64]) -> Result<BranchState> {
        let grid = *self.kernel.grid();
        grid.check_len(psi.len())?;
        let p = grid.momenta();
        let support: Vec<usize> = (0..psi.len()).filter(|&m| psi[m] != Complex64::new(0.0, 0.0)).collect();
        let per_out: Vec<(Complex64, f64, f64, f64)> = (0..grid.points)
            .into_par_iter()
            .map(|out| {
                let mut amp = Complex64::new(0.0, 0.0);
                let (mut w, mut wq, mut wq2) = (0.0, 0.0, 0.0);
                for &inp in &support {
                    let t = self.entry(out, inp) * psi[inp];
                    amp += t;
                    let q = p[out] - p[inp];
                    let wt = t.norm_sqr();
                    w += wt;
                    wq += wt * q;
                    wq2 += wt * q * q;
                }
                (amp, w, wq, wq2)
            })
            .collect();
        let (mut w, mut wq, mut wq2) = (0.0, 0.0, 0.0);
        for &(_, a, b, c) in &per_out {
            w += a;
            wq += b;
            wq2 += c;
        }
        let amplitudes: Vec<Complex64> = per_out.iter().map(|t| t.0).collect();
        let norm_sqr = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let momentum_spread = (w > 0.0).then(|| {
            let mean = wq / w;
            (wq2 / w - mean * mean).max(0.0).sqrt()
        });
        Ok(BranchState {
            cell: self.cell,
            amplitudes,
            norm_sqr,
            momentum_spread,
        })
    }
}

pub fn cell_operator<'a, K: Kernel>(t: &'a K, cells: &CellPartition, k: usize) -> Result<CellOperator<'a, K>> {
    if cells.grid != *t.grid() {
        return Err(QuasilocalError::InvalidPartition("partition and kernel use different grids".into()));
    }
    if k >= cells.len() {
        return Err(QuasilocalError::InvalidPartition(format!("cell {k} out of range")));
    }
    Ok(CellOperator {
        kernel: t,
        cell: k,
        g_hat: cells.transform(k),
    })
}

pub fn cell_decompose<'a, K: Kernel>(t: &'a K, cells: &CellPartition) -> Result<Vec<CellOperator<'a, K>>> {
    (0..cells.len())
        .into_par_iter()
        .map(|k| cell_operator(t, cells, k))
        .collect()
}

pub fn branch_states<K: Kernel>(t: &K, cells: &CellPartition, psi_in: &[Complex64]) -> Result<Vec<BranchState>> {
    cell_decompose(t, cells)?
        .par_iter()
        .map(|op| op.apply(psi_in))
        .collect()
}

pub fn momentum_balance_spread(b: &BranchState) -> Result<f64> {
    b.momentum_spread
        .ok_or(QuasilocalError::ZeroNormBranch { cell: b.cell })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSummary {
    pub probabilities: Vec<f64>,
    /// `|‖sum_k Psi_k‖^2 - sum_k ‖Psi_k‖^2|`.
    pub coherence_defect: f64,
    pub total_norm_sqr: f64,
}

pub fn summarize(branches: &[BranchState]) -> BranchSummary {
    let norms: Vec<f64> = branches.iter().map(|b| b.norm_sqr).collect();
    let incoherent: f64 = norms.iter().sum();
    let n = branches.first().map_or(0, |b| b.amplitudes.len());
    let coherent: f64 = (0..n)
        .map(|i| branches.iter().map(|b| b.amplitudes[i]).sum::<Complex64>().norm_sqr())
        .sum();
    BranchSummary {
        probabilities: norms.iter().map(|v| if incoherent > 0.0 { v / incoherent } else { 0.0 }).collect(),
        coherence_defect: (coherent - incoherent).abs(),
        total_norm_sqr: coherent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    pub delta_p: f64,
    pub delta_p_a_over_h: f64,
    pub coherence_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadSweep {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of ln(delta_p) against ln(a).
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub grid: MomentumGrid,
    pub tau_scale: f64,
    pub smoothing: f64,
}

impl SweepConfig {
    pub fn default_grid() -> MomentumGrid {
        MomentumGrid::new(1 << 15, 1.0, 1.0).expect("valid grid")
    }

    /// Cell widths `L/4, L/8, .., L/512`.
    pub fn default_widths(grid: &MomentumGrid) -> Vec<f64> {
        (2..=9).map(|e| grid.box_length() / f64::from(1u32 << e)).collect()
    }
}

/// Momentum-balance spread of a zero-momentum plane wave for each cell
/// width. All cells of a partition give the same spread, so it is read off
/// the first; the coherence defect uses every cell.
pub fn spread_sweep(cfg: &SweepConfig, widths: &[f64]) -> Result<SpreadSweep> {
    let kernel = GaussianKernel::new(cfg.grid, cfg.tau_scale)?;
    let psi = plane_wave(&cfg.grid, 0);
    let h = cfg.grid.planck();
    let rows = widths
        .iter()
        .map(|&a| {
            let cells = CellPartition::with_width(cfg.grid, a, 0.0, cfg.smoothing)?;
            let branches = branch_states(&kernel, &cells, &psi)?;
            let delta_p = momentum_balance_spread(&branches[0])?;
            Ok(SweepRow {
                a,
                delta_p,
                delta_p_a_over_h: delta_p * a / h,
                coherence_defect: summarize(&branches).coherence_defect,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&rows);
    Ok(SpreadSweep { rows, slope })
}

fn log_log_slope(rows: &[SweepRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.delta_p > 0.0)
        .map(|r| (r.a.ln(), r.delta_p.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
