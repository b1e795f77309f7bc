//! Spin-singlet EPR pattern and the CHSH comparison with per-link hidden
//! states.
//!
//! Events 1 and 2 set the two Stern-Gerlach magnets; their links `gamma`
//! and `delta` are one-dimensional and only carry the setting. Event 3 is
//! the decay emitting the singlet on `alpha` and `beta`. Events 4 and 5 are
//! the binary outcomes on each side, absorbing (`alpha`, `gamma`) and
//! (`beta`, `delta`) with c = 1.
//!
//! Sign convention: `phi_plus(e)` and `phi_minus(e)` are the +1 and -1
//! eigenvectors of `e . sigma`, with `e = (sin t cos f, sin t sin f, cos t)`,
//! `phi_plus = (cos t/2, e^{if} sin t/2)` and
//! `phi_minus = (sin t/2, -e^{if} cos t/2)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    alternative_probabilities, cut_state, Alternative, AlternativeSet, CandidateEvent, DynamicsError,
    ExtensionSampler,
};
use crate::graph::{Cut, History};
use crate::tensor::{FactorLabel, LabeledVector, ProductBra};

pub const DIRECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EprError {
    #[error("direction has norm {0}, expected 1")]
    NonUnitDirection(f64),
    #[error("direction has non-finite components")]
    NonFinite,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

pub type Result<T> = std::result::Result<T, EprError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Direction([f64; 3]);

impl Direction {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EprError::NonFinite);
        }
        let n = norm(v);
        if (n - 1.0).abs() > DIRECTION_TOL {
            return Err(EprError::NonUnitDirection(n));
        }
        Ok(Self(v))
    }

    /// Normalizes any nonzero vector.
    pub fn normalized(v: [f64; 3]) -> Result<Self> {
        let n = norm(v);
        if !(n.is_finite() && n > 0.0) {
            return Err(EprError::NonUnitDirection(n));
        }
        Ok(Self([v[0] / n, v[1] / n, v[2] / n]))
    }

    /// Unit vector in the x-z plane at `deg` degrees from +z towards +x.
    pub fn in_plane_deg(deg: f64) -> Self {
        let t = deg.to_radians();
        Self([t.sin(), 0.0, t.cos()])
    }

    pub fn z() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Polar and azimuthal angles.
    pub fn angles(&self) -> (f64, f64) {
        let [x, y, z] = self.0;
        (z.clamp(-1.0, 1.0).acos(), y.atan2(x))
    }
}

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Plus => '+',
            Outcome::Minus => '-',
        }
    }
}

/// Spin-1/2 state along `e` on the given link.
pub fn spin_state(link: &str, e: &Direction, outcome: Outcome) -> LabeledVector {
    let (theta, phi) = e.angles();
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let phase = Complex64::from_polar(1.0, phi);
    let amps = match outcome {
        Outcome::Plus => vec![Complex64::new(c, 0.0), phase * s],
        Outcome::Minus => vec![Complex64::new(s, 0.0), -phase * c],
    };
    LabeledVector::single(FactorLabel::new(link, SPIN_SPACE, 2), amps).expect("finite amplitudes")
}

pub const SPIN_SPACE: &str = "spin-1/2";
pub const APPARATUS_SPACE: &str = "apparatus";
pub const RECORD_SPACE: &str = "record";

/// The four outcome pairs in report order.
pub const OUTCOME_PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

fn one_dim(link: &str, space: &str) -> LabeledVector {
    LabeledVector::single(FactorLabel::new(link, space, 1), vec![Complex64::new(1.0, 0.0)])
        .expect("finite amplitude")
}

pub fn singlet(a: &str, b: &str) -> LabeledVector {
    let s = FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    LabeledVector::new(
        vec![FactorLabel::new(a, SPIN_SPACE, 2), FactorLabel::new(b, SPIN_SPACE, 2)],
        vec![z, Complex64::new(s, 0.0), Complex64::new(-s, 0.0), z],
    )
    .expect("finite amplitudes")
}

#[derive(Debug, Clone)]
pub struct EprSetup {
    pub e1: Direction,
    pub e2: Direction,
    pub history: History,
    pub cut: Cut,
    /// Outcome pairs (++, +-, -+, --), each realizing events 4 and 5.
    pub alternatives: AlternativeSet,
}

/// Outcome event on one side: absorbs the spin link and the apparatus link.
pub fn outcome_event(id: &str, spin_link: &str, apparatus_link: &str, record_link: &str, e: &Direction, o: Outcome) -> CandidateEvent {
    let bra = ProductBra::new([spin_state(spin_link, e, o), one_dim(apparatus_link, APPARATUS_SPACE)])
        .expect("unit factors on distinct links");
    CandidateEvent::new(Complex64::new(1.0, 0.0), bra, one_dim(record_link, RECORD_SPACE))
        .expect("unit ket")
        .with_id(format!("{id}{}", o.symbol()))
}

pub fn build_epr(e1: Direction, e2: Direction) -> EprSetup {
    let mut history = History::new();
    history
        .add_initial_event_with_id("1".into(), one_dim("gamma", APPARATUS_SPACE), None)
        .expect("fresh history");
    history
        .add_initial_event_with_id("2".into(), one_dim("delta", APPARATUS_SPACE), None)
        .expect("fresh links");
    history
        .add_initial_event_with_id("3".into(), singlet("alpha", "beta"), None)
        .expect("fresh links");
    let alternatives = OUTCOME_PAIRS
        .iter()
        .map(|&(a, b)| {
            Alternative::new(
                format!("{}{}", a.symbol(), b.symbol()),
                vec![
                    outcome_event("4", "alpha", "gamma", "rec4", &e1, a),
                    outcome_event("5", "beta", "delta", "rec5", &e2, b),
                ],
            )
        })
        .collect();
    EprSetup {
        e1,
        e2,
        cut: history.full_cut(),
        history,
        alternatives: AlternativeSet::exhaustive(alternatives),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointDistribution {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl JointDistribution {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }

    pub fn correlation(&self) -> f64 {
        self.p_pp + self.p_mm - self.p_pm - self.p_mp
    }

    pub fn marginal_first_plus(&self) -> f64 {
        self.p_pp + self.p_pm
    }

    pub fn marginal_second_plus(&self) -> f64 {
        self.p_pp + self.p_mp
    }
}

pub fn joint_distribution(setup: &EprSetup) -> Result<JointDistribution> {
    let state = cut_state(&setup.history, &setup.cut)?;
    let p = alternative_probabilities(&state, &setup.alternatives)?;
    Ok(JointDistribution {
        p_pp: p[0],
        p_pm: p[1],
        p_mp: p[2],
        p_mm: p[3],
    })
}

pub fn correlation(setup: &EprSetup) -> Result<f64> {
    Ok(joint_distribution(setup)?.correlation())
}

/// Quantum CHSH value `E(a,b) - E(a,b') + E(a',b) + E(a',b')`.
pub fn chsh(a: Direction, a2: Direction, b: Direction, b2: Direction) -> Result<f64> {
    let e = |x: Direction, y: Direction| correlation(&build_epr(x, y));
    Ok(e(a, b)? - e(a, b2)? + e(a2, b)? + e(a2, b2)?)
}

/// Pre-assigned +-1 answers for the two settings on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeterministicStrategy {
    pub first: [i8; 2],
    pub second: [i8; 2],
}

impl DeterministicStrategy {
    pub fn chsh(&self) -> f64 {
        let [a, a2] = self.first.map(f64::from);
        let [b, b2] = self.second.map(f64::from);
        a * b - a * b2 + a2 * b + a2 * b2
    }
}

/// A probability distribution over deterministic strategies: the most
/// general model in which each link carries its own (unknown) state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalStrategy {
    pub mixture: Vec<(DeterministicStrategy, f64)>,
}

impl ClassicalStrategy {
    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.mixture.iter().map(|(_, p)| p).sum();
        self.mixture.iter().all(|(_, p)| *p >= 0.0) && (sum - 1.0).abs() < 1e-12
    }

    pub fn chsh(&self) -> f64 {
        self.mixture.iter().map(|(s, p)| p * s.chsh()).sum()
    }
}

/// Every deterministic strategy compatible with the settings: coinciding
/// settings on one side must give the same answer.
pub fn deterministic_strategies(a: Direction, a2: Direction, b: Direction, b2: Direction) -> Vec<DeterministicStrategy> {
    let same = |x: &Direction, y: &Direction| (x.dot(y) - 1.0).abs() <= DIRECTION_TOL;
    let tie_first = same(&a, &a2);
    let tie_second = same(&b, &b2);
    let signs = [1i8, -1];
    let mut out = Vec::with_capacity(16);
    for &x in &signs {
        for &x2 in &signs {
            for &y in &signs {
                for &y2 in &signs {
                    if (tie_first && x != x2) || (tie_second && y != y2) {
                        continue;
                    }
                    out.push(DeterministicStrategy {
                        first: [x, x2],
                        second: [y, y2],
                    });
                }
            }
        }
    }
    out
}

/// Largest |S| reachable by per-link hidden states.
pub fn best_classical(a: Direction, a2: Direction, b: Direction, b2: Direction) -> f64 {
    deterministic_strategies(a, a2, b, b2)
        .iter()
        .map(|s| s.chsh().abs())
        .fold(0.0, f64::max)
}

/// Settings maximizing the quantum CHSH value for the singlet, in the x-z
/// plane: a = 0, a' = 90, b = 225 and b' = 315 degrees, giving S = 2 sqrt 2.
pub fn optimal_settings() -> [Direction; 4] {
    [0.0, 90.0, 225.0, 315.0].map(Direction::in_plane_deg)
}

/// Monte Carlo counts of the four outcome pairs.
pub fn sample_outcomes(setup: &EprSetup, runs: u64, seed: u64, replicas: u64) -> Result<[u64; 4]> {
    let state = cut_state(&setup.history, &setup.cut)?;
    let sampler = ExtensionSampler::new(&state, &setup.alternatives)?;
    let counts = sampler.counts(runs, seed, replicas);
    Ok([counts[0], counts[1], counts[2], counts[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Saturation;
    use crate::dynamics::realize_alternative;

    fn at(theta_deg: f64) -> JointDistribution {
        joint_distribution(&build_epr(Direction::z(), Direction::in_plane_deg(theta_deg))).unwrap()
    }

    #[test]
    fn spin_states_are_eigenvectors() {
        let e = Direction::normalized([0.3, -0.5, 0.8]).unwrap();
        let [x, y, z] = e.components();
        let i = Complex64::new(0.0, 1.0);
        // e . sigma
        let m = [
            [Complex64::new(z, 0.0), x - i * y],
            [x + i * y, Complex64::new(-z, 0.0)],
        ];
        for o in [Outcome::Plus, Outcome::Minus] {
            let v = spin_state("s", &e, o);
            let a = v.amplitudes();
            for (r, row) in m.iter().enumerate() {
                let mv = row[0] * a[0] + row[1] * a[1];
                assert!((mv - o.sign() * a[r]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn aligned_magnets_anticorrelate() {
        let d = at(0.0);
        assert!(d.p_pp.abs() < 1e-15 && d.p_mm.abs() < 1e-15);
        assert!((d.p_pm - 0.5).abs() < 1e-15 && (d.p_mp - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distribution_matches_half_angle_formula() {
        for deg in [30.0, 60.0, 90.0, 120.0, 180.0] {
            let d = at(deg);
            let t = f64::to_radians(deg) / 2.0;
            assert!((d.p_pp - 0.5 * t.sin().powi(2)).abs() < 1e-12);
            assert!((d.p_pm - 0.5 * t.cos().powi(2)).abs() < 1e-12);
        }
        let d = at(60.0);
        for (p, e) in d.as_array().iter().zip([0.125, 0.375, 0.375, 0.125]) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_examples() {
        let e = |deg: f64| at(deg).correlation();
        assert!((e(0.0) + 1.0).abs() < 1e-12);
        assert!(e(90.0).abs() < 1e-12);
        assert!((e(60.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn chsh_quantum_and_classical() {
        let [a, a2, b, b2] = optimal_settings();
        let s = chsh(a, a2, b, b2).unwrap();
        assert!((s - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(best_classical(a, a2, b, b2), 2.0);
        // With b' = 135 degrees the four terms cancel.
        let b3 = Direction::in_plane_deg(135.0);
        assert!(chsh(a, a2, b, b3).unwrap().abs() < 1e-12);
        let z = Direction::z();
        assert!((chsh(z, z, z, z).unwrap().abs() - 2.0).abs() < 1e-12);
        assert_eq!(best_classical(z, z, z, z), 2.0);
        assert_eq!(deterministic_strategies(z, z, z, z).len(), 4);
        assert_eq!(deterministic_strategies(a, a2, b, b2).len(), 16);
    }

    #[test]
    fn mixtures_never_beat_two() {
        let strategies = deterministic_strategies(Direction::z(), Direction::in_plane_deg(90.0), Direction::in_plane_deg(45.0), Direction::in_plane_deg(135.0));
        let w = 1.0 / strategies.len() as f64;
        let uniform = ClassicalStrategy {
            mixture: strategies.iter().map(|s| (*s, w)).collect(),
        };
        assert!(uniform.is_valid());
        assert!(uniform.chsh().abs() <= 2.0);
    }

    #[test]
    fn full_realization_saturates_the_source_events() {
        let setup = build_epr(Direction::z(), Direction::in_plane_deg(90.0));
        let mut h = setup.history.clone();
        let (ids, cut) = realize_alternative(&mut h, &setup.cut, &setup.alternatives.alternatives[0]).unwrap();
        assert_eq!(cut, h.full_cut());
        for e in ["1", "2", "3"] {
            assert_eq!(h.saturation_status(&e.into()).unwrap(), Saturation::Saturated);
        }
        for id in &ids {
            assert_eq!(h.saturation_status(id).unwrap(), Saturation::Unsaturated);
        }
        assert!(h.validate().is_empty());
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new([1.0, 0.0, 0.0]).is_ok());
        assert!(matches!(Direction::new([1.0, 1.0, 0.0]), Err(EprError::NonUnitDirection(_))));
        assert!(Direction::normalized([0.0; 3]).is_err());
        assert!(matches!(Direction::new([f64::NAN, 0.0, 0.0]), Err(EprError::NonFinite)));
    }
}
