//! Histories: the realized pattern of events and causal links.
//!
//! Links are created as free valences when their source event is realized,
//! one per tensor factor of the emitted vector, and become established once
//! a later event absorbs them. Only the DAG is stored; there is no global
//! clock. Cuts are arbitrary past-closed sets of events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{LabeledVector, ProductBra, SpaceType, TensorError};

/// Unit-norm tolerance for emitted vectors stored in a history.
pub const EMITTED_TOL: f64 = 1e-9;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(EventId);
string_id!(LinkId);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown event `{0}`")]
    UnknownEvent(EventId),
    #[error("unknown link `{0}`")]
    UnknownLink(LinkId),
    #[error("event id `{0}` already in use")]
    DuplicateEvent(EventId),
    #[error("link `{0}` already exists in the history")]
    LabelCollision(LinkId),
    #[error("emitted vector on [{labels}] has norm {norm}, expected 1")]
    NonUnitVector { labels: String, norm: f64 },
    #[error("cut is not past-closed: `{event}` needs `{missing}`")]
    InvalidCut { event: EventId, missing: EventId },
    #[error("link `{0}` is already established")]
    LinkEstablished(LinkId),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkStatus {
    Free,
    Established,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub id: LinkId,
    pub space: SpaceType,
    pub source: EventId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<EventId>,
    pub status: LinkStatus,
}

/// Space-time tag: center and half-extents in (t, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: [f64; 4],
    pub extent: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Initial,
    Interior,
}

/// The backward half of a rank-1 event: the constant and the product bra
/// that selected its incoming links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Absorption {
    pub c: Complex64,
    pub bra: ProductBra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: EventId,
    pub kind: EventKind,
    pub backward_links: Vec<LinkId>,
    pub forward_links: Vec<LinkId>,
    pub emitted: LabeledVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorption: Option<Absorption>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Saturation {
    Saturated,
    Unsaturated,
}

/// A past-closed set of events: the subjective past behind a spacelike
/// surface.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cut {
    pub past: BTreeSet<EventId>,
}

impl Cut {
    pub fn new<I, T>(ids: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<EventId>,
    {
        Self {
            past: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.past.contains(id)
    }

    pub fn with(&self, id: EventId) -> Self {
        let mut past = self.past.clone();
        past.insert(id);
        Self { past }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LinkWithoutSource { link: LinkId, source: EventId },
    LinkWithoutTarget { link: LinkId, target: EventId },
    StatusMismatch { link: LinkId },
    SourceNotListingForward { link: LinkId, event: EventId },
    TargetNotListingBackward { link: LinkId, event: EventId },
    UnknownLinkReference { event: EventId, link: LinkId },
    ForeignForwardLink { event: EventId, link: LinkId },
    ForeignBackwardLink { event: EventId, link: LinkId },
    MultipleAbsorbers { link: LinkId, events: Vec<EventId> },
    EmittedLabelsMismatch { event: EventId },
    SpaceMismatch { link: LinkId },
    NonUnitEmitted { event: EventId, norm: f64 },
    InitialWithBackward { event: EventId },
    AbsorptionMismatch { event: EventId },
    Cycle { events: Vec<EventId> },
}

impl Violation {
    /// Id of the offending link or event.
    pub fn subject(&self) -> String {
        match self {
            Violation::LinkWithoutSource { link, .. }
            | Violation::LinkWithoutTarget { link, .. }
            | Violation::StatusMismatch { link }
            | Violation::SourceNotListingForward { link, .. }
            | Violation::TargetNotListingBackward { link, .. }
            | Violation::MultipleAbsorbers { link, .. }
            | Violation::SpaceMismatch { link } => link.to_string(),
            Violation::UnknownLinkReference { event, .. }
            | Violation::ForeignForwardLink { event, .. }
            | Violation::ForeignBackwardLink { event, .. }
            | Violation::EmittedLabelsMismatch { event }
            | Violation::NonUnitEmitted { event, .. }
            | Violation::InitialWithBackward { event }
            | Violation::AbsorptionMismatch { event } => event.to_string(),
            Violation::Cycle { events } => events
                .iter()
                .map(EventId::as_str)
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LinkWithoutSource { link, source } => {
                write!(f, "link {link}: source event {source} does not exist")
            }
            Violation::LinkWithoutTarget { link, target } => {
                write!(f, "link {link}: target event {target} does not exist")
            }
            Violation::StatusMismatch { link } => {
                write!(f, "link {link}: status disagrees with target presence")
            }
            Violation::SourceNotListingForward { link, event } => {
                write!(f, "link {link}: source {event} does not list it as forward")
            }
            Violation::TargetNotListingBackward { link, event } => {
                write!(f, "link {link}: target {event} does not list it as backward")
            }
            Violation::UnknownLinkReference { event, link } => {
                write!(f, "event {event}: references unknown link {link}")
            }
            Violation::ForeignForwardLink { event, link } => {
                write!(f, "event {event}: lists {link} as forward but is not its source")
            }
            Violation::ForeignBackwardLink { event, link } => {
                write!(f, "event {event}: lists {link} as backward but is not its target")
            }
            Violation::MultipleAbsorbers { link, events } => {
                write!(f, "link {link}: claimed backward by {} events", events.len())
            }
            Violation::EmittedLabelsMismatch { event } => {
                write!(f, "event {event}: emitted labels differ from forward links")
            }
            Violation::SpaceMismatch { link } => {
                write!(f, "link {link}: space differs from the emitted factor")
            }
            Violation::NonUnitEmitted { event, norm } => {
                write!(f, "event {event}: emitted vector has norm {norm}")
            }
            Violation::InitialWithBackward { event } => {
                write!(f, "event {event}: initial event with backward links")
            }
            Violation::AbsorptionMismatch { event } => {
                write!(f, "event {event}: absorption bra does not match backward links")
            }
            Violation::Cycle { .. } => write!(f, "cycle through events {}", self.subject()),
        }
    }
}

/// A growing DAG of events and links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistoryDoc", into = "HistoryDoc")]
pub struct History {
    events: BTreeMap<EventId, EventRecord>,
    links: BTreeMap<LinkId, LinkRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assembles a history from raw records without checking invariants;
    /// call [`History::validate`] to inspect the result.
    pub fn from_parts(
        events: impl IntoIterator<Item = EventRecord>,
        links: impl IntoIterator<Item = LinkRecord>,
    ) -> Self {
        Self {
            events: events.into_iter().map(|e| (e.id.clone(), e)).collect(),
            links: links.into_iter().map(|l| (l.id.clone(), l)).collect(),
        }
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.events.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkRecord> {
        self.links.values()
    }

    pub fn event(&self, id: &EventId) -> Result<&EventRecord> {
        self.events
            .get(id)
            .ok_or_else(|| GraphError::UnknownEvent(id.clone()))
    }

    pub fn link(&self, id: &LinkId) -> Result<&LinkRecord> {
        self.links
            .get(id)
            .ok_or_else(|| GraphError::UnknownLink(id.clone()))
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn contains_event(&self, id: &EventId) -> bool {
        self.events.contains_key(id)
    }

    /// The cut containing every event.
    pub fn full_cut(&self) -> Cut {
        Cut {
            past: self.events.keys().cloned().collect(),
        }
    }

    /// Smallest positive integer, as a string, not yet used as an event id.
    pub fn next_event_id(&self) -> EventId {
        (self.events.len() + 1..)
            .map(|n| EventId(n.to_string()))
            .find(|id| !self.events.contains_key(id))
            .expect("unbounded range")
    }

    pub fn add_initial_event(&mut self, vec: LabeledVector, region: Option<Region>) -> Result<EventId> {
        let id = self.next_event_id();
        self.add_initial_event_with_id(id, vec, region)
    }

    pub fn add_initial_event_with_id(
        &mut self,
        id: EventId,
        vec: LabeledVector,
        region: Option<Region>,
    ) -> Result<EventId> {
        if self.events.contains_key(&id) {
            return Err(GraphError::DuplicateEvent(id));
        }
        self.check_emitted(&vec)?;
        let forward_links = self.open_links(&id, &vec);
        self.events.insert(
            id.clone(),
            EventRecord {
                id: id.clone(),
                kind: EventKind::Initial,
                backward_links: Vec::new(),
                forward_links,
                emitted: vec,
                region,
                absorption: None,
            },
        );
        Ok(id)
    }

    /// Records an interior event absorbing the bra's links and emitting
    /// `ket`. Probability bookkeeping lives in the dynamics layer.
    pub(crate) fn insert_interior_event(
        &mut self,
        id: EventId,
        c: Complex64,
        bra: ProductBra,
        ket: LabeledVector,
        region: Option<Region>,
    ) -> Result<EventId> {
        if self.events.contains_key(&id) {
            return Err(GraphError::DuplicateEvent(id));
        }
        self.check_emitted(&ket)?;
        let mut backward_links = Vec::with_capacity(bra.len());
        for link in bra.links() {
            let id = LinkId::from(link);
            let record = self.link(&id)?;
            if record.status == LinkStatus::Established {
                return Err(GraphError::LinkEstablished(id));
            }
            backward_links.push(id);
        }
        for link in &backward_links {
            let record = self.links.get_mut(link).expect("checked above");
            record.target = Some(id.clone());
            record.status = LinkStatus::Established;
        }
        let forward_links = self.open_links(&id, &ket);
        self.events.insert(
            id.clone(),
            EventRecord {
                id: id.clone(),
                kind: EventKind::Interior,
                backward_links,
                forward_links,
                emitted: ket,
                region,
                absorption: Some(Absorption { c, bra }),
            },
        );
        Ok(id)
    }

    fn check_emitted(&self, vec: &LabeledVector) -> Result<()> {
        if !vec.is_unit(EMITTED_TOL) {
            return Err(GraphError::NonUnitVector {
                labels: vec.links().collect::<Vec<_>>().join(","),
                norm: vec.norm(),
            });
        }
        if let Some(clash) = vec.links().find(|l| self.links.contains_key(&LinkId::from(*l))) {
            return Err(GraphError::LabelCollision(LinkId::from(clash)));
        }
        Ok(())
    }

    fn open_links(&mut self, source: &EventId, vec: &LabeledVector) -> Vec<LinkId> {
        vec.labels()
            .iter()
            .map(|label| {
                let id = LinkId(label.link.clone());
                self.links.insert(
                    id.clone(),
                    LinkRecord {
                        id: id.clone(),
                        space: label.space.clone(),
                        source: source.clone(),
                        target: None,
                        status: LinkStatus::Free,
                    },
                );
                id
            })
            .collect()
    }

    /// History-wide saturation: every forward link established.
    pub fn saturation_status(&self, e: &EventId) -> Result<Saturation> {
        let event = self.event(e)?;
        let saturated = event
            .forward_links
            .iter()
            .all(|l| self.links.get(l).is_some_and(|r| r.status == LinkStatus::Established));
        Ok(if saturated {
            Saturation::Saturated
        } else {
            Saturation::Unsaturated
        })
    }

    /// Saturation as seen from inside `cut`: every forward link absorbed by
    /// an event that is itself in the cut.
    pub fn saturation_within(&self, cut: &Cut, e: &EventId) -> Result<Saturation> {
        let event = self.event(e)?;
        let saturated = event.forward_links.iter().all(|l| {
            self.links
                .get(l)
                .and_then(|r| r.target.as_ref())
                .is_some_and(|t| cut.contains(t))
        });
        Ok(if saturated {
            Saturation::Saturated
        } else {
            Saturation::Unsaturated
        })
    }

    pub fn validate_cut(&self, cut: &Cut) -> Result<()> {
        for id in &cut.past {
            let event = self.event(id)?;
            for link in &event.backward_links {
                let source = &self.link(link)?.source;
                if !cut.contains(source) {
                    return Err(GraphError::InvalidCut {
                        event: id.clone(),
                        missing: source.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Links leaving the cut: source inside, not absorbed inside. For the
    /// full cut these are exactly the links with status free.
    pub fn free_links(&self, cut: &Cut) -> Result<BTreeSet<LinkId>> {
        self.validate_cut(cut)?;
        Ok(self
            .links
            .values()
            .filter(|l| cut.contains(&l.source))
            .filter(|l| l.target.as_ref().is_none_or(|t| !cut.contains(t)))
            .map(|l| l.id.clone())
            .collect())
    }

    /// Events in a source-before-target order, or `None` if the established
    /// links contain a cycle.
    pub fn topological_order(&self) -> Option<Vec<EventId>> {
        let (order, _) = self.kahn();
        (order.len() == self.events.len()).then_some(order)
    }

    fn kahn(&self) -> (Vec<EventId>, BTreeSet<EventId>) {
        let mut indegree: BTreeMap<&EventId, usize> = self.events.keys().map(|k| (k, 0)).collect();
        let mut edges: BTreeMap<&EventId, Vec<&EventId>> = BTreeMap::new();
        for link in self.links.values() {
            if let Some(t) = &link.target {
                if self.events.contains_key(&link.source) && self.events.contains_key(t) {
                    *indegree.get_mut(t).expect("present") += 1;
                    edges.entry(&link.source).or_default().push(t);
                }
            }
        }
        let mut queue: VecDeque<&EventId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(self.events.len());
        while let Some(e) = queue.pop_front() {
            order.push(e.clone());
            for &t in edges.get(e).map(Vec::as_slice).unwrap_or_default() {
                let d = indegree.get_mut(t).expect("present");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(t);
                }
            }
        }
        let done: BTreeSet<&EventId> = order.iter().collect();
        let stuck = self
            .events
            .keys()
            .filter(|k| !done.contains(k))
            .cloned()
            .collect();
        (order, stuck)
    }

    /// Every broken invariant, each naming the offending id. Empty for any
    /// history built through the public operations.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        for link in self.links.values() {
            match self.events.get(&link.source) {
                None => out.push(Violation::LinkWithoutSource {
                    link: link.id.clone(),
                    source: link.source.clone(),
                }),
                Some(src) if !src.forward_links.contains(&link.id) => {
                    out.push(Violation::SourceNotListingForward {
                        link: link.id.clone(),
                        event: src.id.clone(),
                    })
                }
                Some(src) => {
                    if src.emitted.label(link.id.as_str()).is_some_and(|l| l.space != link.space) {
                        out.push(Violation::SpaceMismatch { link: link.id.clone() });
                    }
                }
            }
            if (link.status == LinkStatus::Established) != link.target.is_some() {
                out.push(Violation::StatusMismatch { link: link.id.clone() });
            }
            if let Some(t) = &link.target {
                match self.events.get(t) {
                    None => out.push(Violation::LinkWithoutTarget {
                        link: link.id.clone(),
                        target: t.clone(),
                    }),
                    Some(tgt) if !tgt.backward_links.contains(&link.id) => {
                        out.push(Violation::TargetNotListingBackward {
                            link: link.id.clone(),
                            event: tgt.id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            let claimants: Vec<EventId> = self
                .events
                .values()
                .filter(|e| e.backward_links.contains(&link.id))
                .map(|e| e.id.clone())
                .collect();
            if claimants.len() > 1 {
                out.push(Violation::MultipleAbsorbers {
                    link: link.id.clone(),
                    events: claimants,
                });
            }
        }

        for event in self.events.values() {
            for l in &event.forward_links {
                match self.links.get(l) {
                    None => out.push(Violation::UnknownLinkReference {
                        event: event.id.clone(),
                        link: l.clone(),
                    }),
                    Some(r) if r.source != event.id => out.push(Violation::ForeignForwardLink {
                        event: event.id.clone(),
                        link: l.clone(),
                    }),
                    Some(_) => {}
                }
            }
            for l in &event.backward_links {
                match self.links.get(l) {
                    None => out.push(Violation::UnknownLinkReference {
                        event: event.id.clone(),
                        link: l.clone(),
                    }),
                    Some(r) if r.target.as_ref() != Some(&event.id) => {
                        out.push(Violation::ForeignBackwardLink {
                            event: event.id.clone(),
                            link: l.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
            let emitted: BTreeSet<&str> = event.emitted.links().collect();
            let forward: BTreeSet<&str> = event.forward_links.iter().map(LinkId::as_str).collect();
            if emitted != forward || forward.len() != event.forward_links.len() {
                out.push(Violation::EmittedLabelsMismatch { event: event.id.clone() });
            }
            if !event.emitted.is_unit(EMITTED_TOL) {
                out.push(Violation::NonUnitEmitted {
                    event: event.id.clone(),
                    norm: event.emitted.norm(),
                });
            }
            match event.kind {
                EventKind::Initial => {
                    if !event.backward_links.is_empty() {
                        out.push(Violation::InitialWithBackward { event: event.id.clone() });
                    }
                }
                EventKind::Interior => {
                    let matches = event.absorption.as_ref().is_some_and(|a| {
                        let bra: BTreeSet<&str> = a.bra.links().collect();
                        let back: BTreeSet<&str> =
                            event.backward_links.iter().map(LinkId::as_str).collect();
                        bra == back
                    });
                    if !matches {
                        out.push(Violation::AbsorptionMismatch { event: event.id.clone() });
                    }
                }
            }
        }

        let (_, stuck) = self.kahn();
        if !stuck.is_empty() {
            out.push(Violation::Cycle {
                events: stuck.into_iter().collect(),
            });
        }
        out
    }
}

/// Serialized form: `{"events":[...], "links":[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryDoc {
    pub events: Vec<EventRecord>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Error)]
pub enum HistoryDocError {
    #[error("event id `{0}` listed twice")]
    DuplicateEvent(EventId),
    #[error("link id `{0}` listed twice")]
    DuplicateLink(LinkId),
}

impl TryFrom<HistoryDoc> for History {
    type Error = HistoryDocError;

    fn try_from(doc: HistoryDoc) -> std::result::Result<Self, Self::Error> {
        let mut events = BTreeMap::new();
        for e in doc.events {
            if let Some(prev) = events.insert(e.id.clone(), e) {
                return Err(HistoryDocError::DuplicateEvent(prev.id));
            }
        }
        let mut links = BTreeMap::new();
        for l in doc.links {
            if let Some(prev) = links.insert(l.id.clone(), l) {
                return Err(HistoryDocError::DuplicateLink(prev.id));
            }
        }
        Ok(Self { events, links })
    }
}

impl From<History> for HistoryDoc {
    fn from(h: History) -> Self {
        Self {
            events: h.events.into_values().collect(),
            links: h.links.into_values().collect(),
        }
    }
}
