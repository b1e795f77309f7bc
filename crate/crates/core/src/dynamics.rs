//! Probability law for extending a history.
//!
//! The state behind a cut is the tensor product, over the unsaturated events
//! in the cut, of what each event's emitted vector leaves after contraction
//! with the bras of the events (inside the cut) that absorbed some of its
//! links. Saturated events only contribute a scalar and are skipped. The
//! composite is renormalized to unit length, so probabilities read off a
//! cut state are conditional on the realized past.
//!
//! A candidate event is a rank-1 operator `c |ket><bra|`; its probability is
//! the squared length of the operator applied to the cut state. A joint
//! pattern applies several operators with disjoint bras in list order.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Cut, EventId, GraphError, History, Region, Saturation, EMITTED_TOL};
use crate::rng;
use crate::tensor::{self, EventOperator, LabeledVector, ProductBra, TensorError};

/// Allowed deviation of an exhaustive alternative set from total probability 1.
pub const EXHAUSTIVE_TOL: f64 = 1e-9;

/// Probabilities at or below this are treated as impossible by [`realize`].
pub const ZERO_PROBABILITY: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("candidates both absorb link `{0}`")]
    OverlappingBackwardLinks(String),
    #[error("alternatives are not exhaustive: probabilities sum to {sum}")]
    NotExhaustive { sum: f64 },
    #[error("alternative probabilities sum to {sum}, above 1")]
    ExceedsUnity { sum: f64 },
    #[error("candidate has probability {probability}, cannot be realized")]
    ZeroProbabilityEvent { probability: f64 },
    #[error("realized history has zero weight at event `{0}`")]
    ZeroProbabilityHistory(EventId),
    #[error("alternative set is empty")]
    EmptyAlternativeSet,
    #[error("alternative `{0}` has no events")]
    EmptyAlternative(String),
    #[error("candidate ket on [{labels}] has norm {norm}, expected 1")]
    NonUnitKet { labels: String, norm: f64 },
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// A possible new event: absorbs the bra's links, emits the ket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CandidateDoc", into = "CandidateDoc")]
pub struct CandidateEvent {
    pub id: Option<EventId>,
    pub c: Complex64,
    pub bra: ProductBra,
    pub ket: LabeledVector,
    pub region: Option<Region>,
}

impl CandidateEvent {
    pub fn new(c: Complex64, bra: ProductBra, ket: LabeledVector) -> Result<Self> {
        if !ket.is_unit(EMITTED_TOL) {
            return Err(DynamicsError::NonUnitKet {
                labels: ket.links().collect::<Vec<_>>().join(","),
                norm: ket.norm(),
            });
        }
        Ok(Self {
            id: None,
            c,
            bra,
            ket,
            region: None,
        })
    }

    pub fn with_id(mut self, id: impl Into<EventId>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = Some(region);
        self
    }

    pub fn operator(&self) -> EventOperator {
        EventOperator::new(self.c, self.bra.clone(), self.ket.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<EventId>,
    pub c: Complex64,
    pub bra: ProductBra,
    pub ket: LabeledVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
}

impl TryFrom<CandidateDoc> for CandidateEvent {
    type Error = DynamicsError;

    fn try_from(doc: CandidateDoc) -> Result<Self> {
        let mut cand = CandidateEvent::new(doc.c, doc.bra, doc.ket)?;
        cand.id = doc.id;
        cand.region = doc.region;
        Ok(cand)
    }
}

impl From<CandidateEvent> for CandidateDoc {
    fn from(c: CandidateEvent) -> Self {
        Self {
            id: c.id,
            c: c.c,
            bra: c.bra,
            ket: c.ket,
            region: c.region,
        }
    }
}

/// One possible extension of the pattern: one or more events realized
/// together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub name: String,
    pub events: Vec<CandidateEvent>,
}

impl Alternative {
    pub fn new(name: impl Into<String>, events: Vec<CandidateEvent>) -> Self {
        Self {
            name: name.into(),
            events,
        }
    }
}

/// Mutually exclusive extensions. When `exhaustive`, their probabilities
/// must sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSet {
    pub alternatives: Vec<Alternative>,
    #[serde(default = "default_true")]
    pub exhaustive: bool,
}

fn default_true() -> bool {
    true
}

impl AlternativeSet {
    pub fn exhaustive(alternatives: Vec<Alternative>) -> Self {
        Self {
            alternatives,
            exhaustive: true,
        }
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.is_empty()
    }
}

/// Normalized state on the free links of a cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutState {
    pub contributing_events: Vec<EventId>,
    pub composite: LabeledVector,
}

impl CutState {
    pub fn links(&self) -> impl Iterator<Item = &str> {
        self.composite.links()
    }
}

pub fn cut_state(h: &History, cut: &Cut) -> Result<CutState> {
    h.validate_cut(cut)?;
    let mut contributing = Vec::new();
    let mut composite = LabeledVector::scalar(Complex64::new(1.0, 0.0));
    for id in &cut.past {
        if h.saturation_within(cut, id)? == Saturation::Saturated {
            continue;
        }
        let residual = residual_vector(h, cut, id)?
            .normalized()
            .ok_or_else(|| DynamicsError::ZeroProbabilityHistory(id.clone()))?;
        composite = tensor::tensor_product(&composite, &residual)?;
        contributing.push(id.clone());
    }
    Ok(CutState {
        contributing_events: contributing,
        composite,
    })
}

/// An event's emitted vector contracted with the bra factors of those of
/// its links already absorbed inside the cut.
fn residual_vector(h: &History, cut: &Cut, id: &EventId) -> Result<LabeledVector> {
    let event = h.event(id)?;
    let mut factors = Vec::new();
    for link in &event.forward_links {
        let record = h.link(link)?;
        let Some(target) = record.target.as_ref().filter(|t| cut.contains(t)) else {
            continue;
        };
        let absorber = h.event(target)?;
        let factor = absorber
            .absorption
            .as_ref()
            .and_then(|a| a.bra.factor(link.as_str()))
            .ok_or_else(|| TensorError::MissingLabel(link.to_string()))?;
        factors.push(factor.clone());
    }
    Ok(ProductBra::new(factors)?.contract(&event.emitted)?)
}

pub fn event_probability(s: &CutState, e: &CandidateEvent) -> Result<f64> {
    Ok(e.operator().apply(&s.composite)?.squared_norm())
}

/// Applies the candidates in list order and returns the squared length.
pub fn joint_probability(s: &CutState, es: &[CandidateEvent]) -> Result<f64> {
    Ok(joint_amplitude(s, es)?.squared_norm())
}

/// The unnormalized vector after applying every candidate of a joint
/// pattern to the cut state.
pub fn joint_amplitude(s: &CutState, es: &[CandidateEvent]) -> Result<LabeledVector> {
    let mut seen = BTreeSet::new();
    for e in es {
        for link in e.bra.links() {
            if !seen.insert(link) {
                return Err(DynamicsError::OverlappingBackwardLinks(link.to_owned()));
            }
            if !s.composite.has_label(link) {
                return Err(TensorError::MissingLabel(link.to_owned()).into());
            }
        }
    }
    let mut psi = s.composite.clone();
    for e in es {
        psi = e.operator().apply(&psi)?;
    }
    Ok(psi)
}

/// Probability of each alternative. Fails when the total exceeds one beyond
/// tolerance, and for exhaustive sets when it misses one.
pub fn alternative_probabilities(s: &CutState, alts: &AlternativeSet) -> Result<Vec<f64>> {
    if alts.is_empty() {
        return Err(DynamicsError::EmptyAlternativeSet);
    }
    let probs = alts
        .alternatives
        .iter()
        .map(|a| {
            if a.events.is_empty() {
                Err(DynamicsError::EmptyAlternative(a.name.clone()))
            } else {
                joint_probability(s, &a.events)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let sum: f64 = probs.iter().sum();
    if sum > 1.0 + EXHAUSTIVE_TOL {
        return Err(DynamicsError::ExceedsUnity { sum });
    }
    if alts.exhaustive && (sum - 1.0).abs() > EXHAUSTIVE_TOL {
        return Err(DynamicsError::NotExhaustive { sum });
    }
    Ok(probs)
}

/// Draws alternatives with the probabilities of an exhaustive set.
#[derive(Debug, Clone)]
pub struct ExtensionSampler {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ExtensionSampler {
    pub fn new(s: &CutState, alts: &AlternativeSet) -> Result<Self> {
        let probabilities = alternative_probabilities(s, alts)?;
        Self::from_probabilities(probabilities)
    }

    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(DynamicsError::EmptyAlternativeSet);
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > EXHAUSTIVE_TOL {
            return Err(DynamicsError::NotExhaustive { sum });
        }
        let cumulative = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            probabilities,
            cumulative,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// One draw: a uniform `u` in [0, 1) picks the first alternative whose
    /// cumulative probability exceeds it. Zero-probability alternatives are
    /// never returned.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        for (i, (&cum, &p)) in self.cumulative.iter().zip(&self.probabilities).enumerate() {
            if p > 0.0 && u < cum {
                return i;
            }
        }
        // rounding left u above the final partial sum
        self.probabilities
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("probabilities sum to one")
    }

    /// Outcome counts from `runs` draws split over `replicas` independent
    /// streams (see [`crate::rng`]). Replicas run in parallel; the result
    /// does not depend on scheduling.
    pub fn counts(&self, runs: u64, seed: u64, replicas: u64) -> Vec<u64> {
        let shares = rng::replica_shares(runs, replicas);
        let per_replica: Vec<Vec<u64>> = shares
            .par_iter()
            .enumerate()
            .map(|(r, &n)| {
                let mut stream = rng::replica_rng(seed, r as u64);
                let mut counts = vec![0u64; self.probabilities.len()];
                for _ in 0..n {
                    counts[self.draw(&mut stream)] += 1;
                }
                counts
            })
            .collect();
        let mut total = vec![0u64; self.probabilities.len()];
        for counts in per_replica {
            for (t, c) in total.iter_mut().zip(counts) {
                *t += c;
            }
        }
        total
    }
}

/// Single draw from an exhaustive set with a fresh stream for `seed`.
pub fn sample_extension(s: &CutState, alts: &AlternativeSet, seed: u64) -> Result<usize> {
    let sampler = ExtensionSampler::new(s, alts)?;
    Ok(sampler.draw(&mut rng::seeded(seed)))
}

/// Turns a possible event into a fact: its bra links become established
/// with the new event as target, and its ket opens new free links.
pub fn realize(h: &mut History, cut: &Cut, e: &CandidateEvent) -> Result<EventId> {
    let s = cut_state(h, cut)?;
    let probability = event_probability(&s, e)?;
    if probability <= ZERO_PROBABILITY {
        return Err(DynamicsError::ZeroProbabilityEvent { probability });
    }
    let id = e.id.clone().unwrap_or_else(|| h.next_event_id());
    Ok(h.insert_interior_event(id, e.c, e.bra.clone(), e.ket.clone(), e.region)?)
}

/// Realizes every event of an alternative in order, extending the cut after
/// each one. Returns the new ids and the final cut.
pub fn realize_alternative(h: &mut History, cut: &Cut, alt: &Alternative) -> Result<(Vec<EventId>, Cut)> {
    let mut cut = cut.clone();
    let mut ids = Vec::with_capacity(alt.events.len());
    for e in &alt.events {
        let id = realize(h, &cut, e)?;
        cut = cut.with(id.clone());
        ids.push(id);
    }
    Ok((ids, cut))
}

/// `|P(e1..en) - P(e1) P(e2 | e1) ... |` with each conditional read off the
/// cut state after realizing the earlier events. Zero when the joint is zero.
pub fn chain_rule_defect(h: &History, cut: &Cut, events: &[CandidateEvent]) -> Result<f64> {
    let joint = joint_probability(&cut_state(h, cut)?, events)?;
    let mut h = h.clone();
    let mut cut = cut.clone();
    let mut product = 1.0;
    for e in events {
        let p = event_probability(&cut_state(&h, &cut)?, e)?;
        product *= p;
        if p <= ZERO_PROBABILITY {
            break;
        }
        let id = realize(&mut h, &cut, e)?;
        cut = cut.with(id);
    }
    Ok((joint - product).abs())
}
