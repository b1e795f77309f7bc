//! One thermal ensemble, two pictures: the momentum-diagonal thermal
//! density of a free particle equals a uniform spatial mixture of minimal
//! Gaussian packets.
//!
//! The model is a periodic 1-D lattice of `N` sites on a box of length `L`
//! with momenta `p_n = 2 pi hbar n / L`, `n = -N/2 .. N/2 - 1` in ascending
//! order. A packet of width `sigma` (the standard deviation of `|psi|^2`) is
//! `psi(x) ~ exp(-d^2 / (4 sigma^2))` with `d` the minimum-image distance to
//! its center, so `|phi(p)|^2 ~ exp(-2 sigma^2 p^2 / hbar^2)`. Matching this
//! to `exp(-beta p^2 / 2m)` gives `sigma* = hbar sqrt(beta / 4m)`.
//!
//! Summation order: momentum amplitudes are direct DFT sums over sites in
//! ascending index order; the mixture sums packets in center order (then
//! time order) for each matrix row. Rows are computed in parallel, which
//! does not change any individual sum, so results are bitwise stable.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Proton mass in grams.
pub const PROTON_MASS_G: f64 = 1.672_621_923_69e-24;
/// Boltzmann constant in erg/K.
pub const BOLTZMANN_ERG_PER_K: f64 = 1.380_649e-16;
/// Reduced Planck constant in erg s.
pub const HBAR_CGS: f64 = 1.054_571_817e-27;
/// Planck constant in erg s.
pub const PLANCK_CGS: f64 = 6.626_070_15e-27;
/// Quoted packet width for protons at 1 K, in cm.
pub const REFERENCE_LAMBDA_CM: f64 = 2e-7;

/// Largest acceptable sup-norm mismatch between the two diagonals.
pub const MATCH_TOL: f64 = 1e-8;
/// Default box length in units of the packet width.
pub const DEFAULT_BOX_WIDTHS: f64 = 48.0;
pub const DEFAULT_SITES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid packet family: {0}")]
    InvalidFamily(String),
    #[error("no matching width: residual sup-norm {residual:e} exceeds {MATCH_TOL:e}")]
    NoMatch { residual: f64 },
    #[error("overlap report needs at least two packets, got {0}")]
    TooFewPackets(usize),
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeModel {
    pub sites: usize,
    pub box_length: f64,
    pub mass: f64,
    pub hbar: f64,
    pub beta: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(EnsembleError::InvalidModel(format!("{name} must be positive and finite, got {v}")))
    }
}

impl LatticeModel {
    pub fn new(sites: usize, box_length: f64, mass: f64, hbar: f64, beta: f64) -> Result<Self> {
        if sites < 2 {
            return Err(EnsembleError::InvalidModel(format!("need at least 2 sites, got {sites}")));
        }
        positive("box length", box_length)?;
        positive("mass", mass)?;
        positive("hbar", hbar)?;
        positive("beta", beta)?;
        Ok(Self {
            sites,
            box_length,
            mass,
            hbar,
            beta,
        })
    }

    /// Model with the box set to `DEFAULT_BOX_WIDTHS` matching widths.
    pub fn with_default_box(sites: usize, mass: f64, hbar: f64, beta: f64) -> Result<Self> {
        positive("mass", mass)?;
        positive("hbar", hbar)?;
        positive("beta", beta)?;
        let box_length = DEFAULT_BOX_WIDTHS * sigma_star(hbar, beta, mass);
        Self::new(sites, box_length, mass, hbar, beta)
    }

    /// Protons at temperature `kelvin`, CGS units.
    pub fn proton(kelvin: f64, sites: usize) -> Result<Self> {
        positive("temperature", kelvin)?;
        Self::with_default_box(sites, PROTON_MASS_G, HBAR_CGS, 1.0 / (BOLTZMANN_ERG_PER_K * kelvin))
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.sites as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.sites).map(|j| j as f64 * self.spacing()).collect()
    }

    /// Signed mode numbers in ascending order.
    pub fn modes(&self) -> Vec<i64> {
        let half = (self.sites / 2) as i64;
        (0..self.sites as i64).map(|i| i - half).collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        let dp = 2.0 * PI * self.hbar / self.box_length;
        self.modes().into_iter().map(|n| n as f64 * dp).collect()
    }

    pub fn sigma_star(&self) -> f64 {
        sigma_star(self.hbar, self.beta, self.mass)
    }

    fn minimum_image(&self, x: f64, center: f64) -> f64 {
        let l = self.box_length;
        let d = (x - center).rem_euclid(l);
        if d > l / 2.0 {
            d - l
        } else {
            d
        }
    }
}

/// Width whose packet envelope matches the thermal weights.
pub fn sigma_star(hbar: f64, beta: f64, mass: f64) -> f64 {
    hbar * (beta / (4.0 * mass)).sqrt()
}

/// `h (beta / 2m)^(1/2)`, the order-of-magnitude width with `h` in place of `hbar`.
pub fn h_lambda_formula(beta: f64, mass: f64) -> f64 {
    PLANCK_CGS * (beta / (2.0 * mass)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumDensity {
    pub momenta: Vec<f64>,
    pub diagonal: Vec<f64>,
    /// Row-major N x N matrix when retained; `None` means exactly zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub off_diagonal: Option<Vec<Complex64>>,
}

impl MomentumDensity {
    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal.iter().sum()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.len();
        match &self.off_diagonal {
            None => 0.0,
            Some(m) => (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| a * n + b))
                .map(|i| m[i].norm())
                .fold(0.0, f64::max),
        }
    }

    pub fn sup_distance(&self, other: &MomentumDensity) -> f64 {
        self.diagonal
            .iter()
            .zip(&other.diagonal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Expectation of a momentum function, `sum_p rho(p,p) f(p)`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.momenta.iter().zip(&self.diagonal).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Normalized weights `exp(-beta p^2 / 2m)` on the lattice momenta.
pub fn thermal_density(model: &LatticeModel) -> MomentumDensity {
    let momenta = model.momenta();
    let raw: Vec<f64> = momenta
        .iter()
        .map(|p| (-model.beta * p * p / (2.0 * model.mass)).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    MomentumDensity {
        diagonal: raw.iter().map(|w| w / z).collect(),
        momenta,
        off_diagonal: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacketFamily {
    pub sigma: f64,
    pub centers: Vec<f64>,
    /// Evolution times of each packet copy; a single 0 means no time spread.
    pub times: Vec<f64>,
}

impl PacketFamily {
    /// One packet centered on every lattice site, all minimal at t = 0.
    pub fn uniform(model: &LatticeModel, sigma: f64) -> Result<Self> {
        Self::new(sigma, model.positions(), vec![0.0])
    }

    pub fn new(sigma: f64, centers: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(EnsembleError::InvalidFamily(format!("sigma must be positive, got {sigma}")));
        }
        if centers.is_empty() || times.is_empty() {
            return Err(EnsembleError::InvalidFamily("need at least one center and one time".into()));
        }
        Ok(Self { sigma, centers, times })
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(EnsembleError::InvalidFamily("need at least one time".into()));
        }
        self.times = times;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.centers.len() * self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unit-norm packet sampled on the lattice sites.
pub fn packet_position(model: &LatticeModel, sigma: f64, center: f64) -> Vec<Complex64> {
    let raw: Vec<f64> = model
        .positions()
        .iter()
        .map(|&x| {
            let d = model.minimum_image(x, center);
            (-d * d / (4.0 * sigma * sigma)).exp()
        })
        .collect();
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| Complex64::new(v / n, 0.0)).collect()
}

struct Dft {
    modes: Vec<i64>,
    twiddle: Vec<Complex64>,
}

impl Dft {
    fn new(model: &LatticeModel) -> Self {
        let n = model.sites;
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self {
            modes: model.modes(),
            twiddle,
        }
    }

    /// Unitary transform to the ascending momentum order.
    fn forward(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let scale = 1.0 / (n as f64).sqrt();
        self.modes
            .iter()
            .map(|&m| {
                let m = m.rem_euclid(n as i64) as usize;
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, a) in psi.iter().enumerate() {
                    acc += a * self.twiddle[(m * j) % n];
                }
                acc * scale
            })
            .collect()
    }
}

/// Momentum amplitudes of a packet after free evolution for time `t`.
pub fn packet_momentum(model: &LatticeModel, sigma: f64, center: f64, t: f64) -> Vec<Complex64> {
    momentum_amplitudes(model, &Dft::new(model), sigma, center, t)
}

fn momentum_amplitudes(model: &LatticeModel, dft: &Dft, sigma: f64, center: f64, t: f64) -> Vec<Complex64> {
    let phi = dft.forward(&packet_position(model, sigma, center));
    if t == 0.0 {
        return phi;
    }
    model
        .momenta()
        .iter()
        .zip(phi)
        .map(|(p, a)| a * Complex64::from_polar(1.0, -p * p * t / (2.0 * model.mass * model.hbar)))
        .collect()
}

/// Uniform average of `|psi><psi|` over the family, in the momentum basis.
pub fn packet_mixture_density(model: &LatticeModel, family: &PacketFamily, keep_off_diagonal: bool) -> MomentumDensity {
    let dft = Dft::new(model);
    let packets: Vec<Vec<Complex64>> = family
        .centers
        .par_iter()
        .flat_map_iter(|&c| {
            let dft = &dft;
            family
                .times
                .iter()
                .map(move |&t| momentum_amplitudes(model, dft, family.sigma, c, t))
        })
        .collect();
    let n = model.sites;
    let weight = 1.0 / packets.len() as f64;
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let cols: Vec<usize> = if keep_off_diagonal { (0..n).collect() } else { vec![a] };
            cols.iter()
                .map(|&b| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for phi in &packets {
                        acc += phi[a] * phi[b].conj();
                    }
                    acc * weight
                })
                .collect()
        })
        .collect();
    let (diagonal, off_diagonal) = if keep_off_diagonal {
        let diag = (0..n).map(|a| rows[a][a].re).collect();
        (diag, Some(rows.into_iter().flatten().collect()))
    } else {
        (rows.iter().map(|r| r[0].re).collect(), None)
    };
    MomentumDensity {
        momenta: model.momenta(),
        diagonal,
        off_diagonal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchReport {
    pub sigma_star: f64,
    /// Width recovered by a least-squares fit of the mixture's log weights.
    pub fitted_sigma: f64,
    pub residual_sup_norm: f64,
}

/// Matching width with the sup-norm mismatch of the two diagonals.
pub fn matching_width(model: &LatticeModel) -> Result<MatchReport> {
    let sigma = model.sigma_star();
    let family = PacketFamily::uniform(model, sigma)?;
    let mixture = packet_mixture_density(model, &family, false);
    let thermal = thermal_density(model);
    let residual = mixture.sup_distance(&thermal);
    if residual.is_nan() || residual > MATCH_TOL {
        return Err(EnsembleError::NoMatch { residual });
    }
    let fitted_sigma = fit_width(&mixture, model.hbar);
    Ok(MatchReport {
        sigma_star: sigma,
        fitted_sigma,
        residual_sup_norm: residual,
    })
}

/// Fits `ln w = c - 2 sigma^2 p^2 / hbar^2` over weights above 1e-8 of the
/// peak, where rounding in the mixture sums is negligible.
fn fit_width(d: &MomentumDensity, hbar: f64) -> f64 {
    let peak = d.diagonal.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = d
        .momenta
        .iter()
        .zip(&d.diagonal)
        .filter(|(_, &w)| w > peak * 1e-8)
        .map(|(&p, &w)| (p * p, w.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    hbar * (-slope / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceComparison {
    pub sigma_star: f64,
    pub reference_lambda: f64,
    /// `max(sigma*, lambda) / min(sigma*, lambda)`.
    pub ratio: f64,
}

impl ReferenceComparison {
    pub fn new(sigma_star: f64) -> Self {
        let ratio = if sigma_star > REFERENCE_LAMBDA_CM {
            sigma_star / REFERENCE_LAMBDA_CM
        } else {
            REFERENCE_LAMBDA_CM / sigma_star
        };
        Self {
            sigma_star,
            reference_lambda: REFERENCE_LAMBDA_CM,
            ratio,
        }
    }

    pub fn within_factor(&self, factor: f64) -> bool {
        self.ratio <= factor
    }
}

/// Numerical overlap `|<psi_a|psi_b>|` on the lattice.
pub fn packet_overlap(model: &LatticeModel, sigma: f64, a: f64, b: f64) -> f64 {
    let u = packet_position(model, sigma, a);
    let v = packet_position(model, sigma, b);
    u.iter().zip(&v).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
}

/// Continuum overlap of two packets whose centers are `d` apart.
pub fn gaussian_overlap(d: f64, sigma: f64) -> f64 {
    (-d * d / (8.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    /// Overlap of each center with the next one, in center order.
    pub neighbor_overlaps: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

pub fn overlap_report(model: &LatticeModel, family: &PacketFamily) -> Result<OverlapReport> {
    if family.centers.len() < 2 {
        return Err(EnsembleError::TooFewPackets(family.centers.len()));
    }
    let neighbor_overlaps: Vec<f64> = family
        .centers
        .windows(2)
        .map(|w| packet_overlap(model, family.sigma, w[0], w[1]))
        .collect();
    let min = neighbor_overlaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = neighbor_overlaps.iter().cloned().fold(0.0, f64::max);
    Ok(OverlapReport {
        neighbor_overlaps,
        min,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_model(sites: usize) -> LatticeModel {
        LatticeModel::with_default_box(sites, 1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn infinite_temperature_is_flat() {
        let m = LatticeModel::new(64, 10.0, 1.0, 1.0, 1e-12).unwrap();
        let d = thermal_density(&m);
        let max = d.diagonal.iter().cloned().fold(0.0, f64::max);
        let min = d.diagonal.iter().cloned().fold(1.0, f64::min);
        assert!(max / min - 1.0 < 1e-9);
    }

    #[test]
    fn thermal_weights_are_even_and_normalized() {
        let m = LatticeModel::new(64, 7.0, 1.3, 1.0, 0.8).unwrap();
        let d = thermal_density(&m);
        assert!((d.trace() - 1.0).abs() < 1e-12);
        let modes = m.modes();
        for (i, &n) in modes.iter().enumerate() {
            if let Some(j) = modes.iter().position(|&k| k == -n) {
                assert_eq!(d.diagonal[i], d.diagonal[j]);
            }
        }
    }

    #[test]
    fn thermal_weights_match_pointwise_exponentials() {
        let (beta, mass, l) = (0.7, 1.9, 12.0);
        let m = LatticeModel::new(64, l, mass, 1.0, beta).unwrap();
        let d = thermal_density(&m);
        let raw: Vec<f64> = (-32..32)
            .map(|n| {
                let p = 2.0 * PI * n as f64 / l;
                (-beta * p * p / (2.0 * mass)).exp()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for (w, r) in d.diagonal.iter().zip(&raw) {
            assert!((w - r / z).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_is_diagonal_and_normalized() {
        let m = unit_model(64);
        let fam = PacketFamily::uniform(&m, 1.7 * m.sigma_star()).unwrap();
        let d = packet_mixture_density(&m, &fam, true);
        assert!(d.max_off_diagonal() < 1e-12);
        assert!((d.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_spread_leaves_the_mixture_unchanged() {
        let m = unit_model(64);
        let fam = PacketFamily::uniform(&m, m.sigma_star()).unwrap();
        let spread = fam.clone().with_times(vec![0.0, 0.5, 3.0, 11.0]).unwrap();
        let a = packet_mixture_density(&m, &fam, true);
        let b = packet_mixture_density(&m, &spread, true);
        assert!(a.sup_distance(&b) < 1e-12);
        assert!(b.max_off_diagonal() < 1e-12);
    }

    #[test]
    fn single_packet_envelope_matches_direct_transform() {
        let m = unit_model(64);
        let sigma = m.sigma_star();
        let psi = packet_position(&m, sigma, 0.0);
        let phi = packet_momentum(&m, sigma, 0.0, 0.0);
        let n = m.sites as f64;
        for (a, &mode) in phi.iter().zip(&m.modes()) {
            let mut direct = Complex64::new(0.0, 0.0);
            for (j, v) in psi.iter().enumerate() {
                direct += v * Complex64::from_polar(1.0, -2.0 * PI * mode as f64 * j as f64 / n);
            }
            assert!((a - direct / n.sqrt()).norm() < 1e-13);
        }
    }

    #[test]
    fn matching_width_reproduces_thermal_weights() {
        let m = unit_model(256);
        let r = matching_width(&m).unwrap();
        assert!(r.residual_sup_norm < 1e-8);
        assert!((2.0 * r.sigma_star.powi(2) / m.hbar.powi(2) - m.beta / (2.0 * m.mass)).abs() < 1e-12);
        assert!((r.fitted_sigma / r.sigma_star - 1.0).abs() < 1e-6);
    }

    #[test]
    fn doubling_beta_scales_width() {
        let a = sigma_star(1.0, 1.0, 2.0);
        let b = sigma_star(1.0, 2.0, 2.0);
        assert!((b / a - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wrong_width_is_rejected_by_the_residual() {
        let m = unit_model(128);
        let fam = PacketFamily::uniform(&m, 1.5 * m.sigma_star()).unwrap();
        let d = packet_mixture_density(&m, &fam, false);
        assert!(d.sup_distance(&thermal_density(&m)) > 1e-3);
    }

    #[test]
    fn overlaps_follow_gaussian_formula() {
        let m = unit_model(256);
        let s = m.sigma_star();
        assert!((packet_overlap(&m, s, 0.0, 0.0) - 1.0).abs() < 1e-14);
        assert!((packet_overlap(&m, s, 0.0, s) - (-0.125f64).exp()).abs() < 1e-12);
        assert!((packet_overlap(&m, s, 0.0, s) - 0.8825).abs() < 1e-4);
        let far = packet_overlap(&m, s, 0.0, 10.0 * s);
        assert!((far - gaussian_overlap(10.0 * s, s)).abs() < 1e-12);
        let fam = PacketFamily::uniform(&m, s).unwrap();
        let r = overlap_report(&m, &fam).unwrap();
        assert!(r.min > 0.99);
    }

    #[test]
    fn model_validation() {
        assert!(LatticeModel::new(1, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(LatticeModel::new(8, -1.0, 1.0, 1.0, 1.0).is_err());
        assert!(LatticeModel::new(8, 1.0, 1.0, 1.0, f64::NAN).is_err());
        let fam = PacketFamily::new(1.0, vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(overlap_report(&unit_model(8), &fam), Err(EnsembleError::TooFewPackets(1))));
    }
}
