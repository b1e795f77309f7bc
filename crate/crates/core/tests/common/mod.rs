#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use qevents_core::rng::seeded;
use qevents_core::{
    chain_rule_defect, cut_state, event_probability, joint_probability, realize, CandidateEvent, Complex64, Cut,
    FactorLabel, History, LabeledVector, ProductBra,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use oracle::{cut_network_state, Naive, NaiveEvent};

pub const MAX_EVENTS: usize = 6;
pub const MAX_DIM: usize = 4;
pub const MAX_LINKS: usize = 7;

pub struct Gen {
    pub rng: ChaCha8Rng,
    next: usize,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self { rng: seeded(seed), next: 0 }
    }

    pub fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    pub fn complex(&mut self) -> Complex64 {
        Complex64::new(self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0))
    }

    pub fn unit(&mut self, labels: Vec<FactorLabel>) -> LabeledVector {
        let n: usize = labels.iter().map(|l| l.dim()).product();
        loop {
            let amps: Vec<Complex64> = (0..n).map(|_| self.complex()).collect();
            let v = LabeledVector::new(labels.clone(), amps).unwrap();
            if let Some(u) = v.normalized() {
                if v.norm() > 1e-3 {
                    return u;
                }
            }
        }
    }

    pub fn fresh_labels(&mut self, prefix: &str, count: usize, max_dim: usize) -> Vec<FactorLabel> {
        (0..count)
            .map(|_| {
                let d = self.rng.random_range(1..=max_dim);
                FactorLabel::new(self.fresh(prefix), format!("C{d}"), d)
            })
            .collect()
    }

    /// Random history: one to three initial events, then absorbing events
    /// on random free links, at most `max_events` events in total.
    pub fn history(&mut self, max_events: usize) -> History {
        let mut h = History::new();
        let total = self.rng.random_range(1..=max_events);
        let initial = self.rng.random_range(1..=total.min(3));
        let mut links = 0;
        for _ in 0..initial {
            let count = self.rng.random_range(1..=2).min(MAX_LINKS - links).max(1);
            links += count;
            let labels = self.fresh_labels("l", count, MAX_DIM);
            let v = self.unit(labels);
            h.add_initial_event(v, None).unwrap();
        }
        for _ in initial..total {
            let cut = h.full_cut();
            let mut free: Vec<String> = h.free_links(&cut).unwrap().into_iter().map(|l| l.0).collect();
            if free.is_empty() {
                break;
            }
            free.shuffle(&mut self.rng);
            let take = self.rng.random_range(1..=free.len().min(2));
            let ket_links = if links >= MAX_LINKS { 0 } else { self.rng.random_range(0..=1) };
            links += ket_links;
            let cand = self.candidate(&h, &free[..take], ket_links);
            realize(&mut h, &cut, &cand.0).unwrap();
        }
        h
    }

    /// Candidate absorbing `links` with a random unit bra and emitting on
    /// `ket_links` fresh links (a scalar ket when zero).
    pub fn candidate(&mut self, h: &History, links: &[String], ket_links: usize) -> (CandidateEvent, NaiveEvent) {
        let mut naive = BTreeMap::new();
        let factors: Vec<LabeledVector> = links
            .iter()
            .map(|l| {
                let rec = h.link(&l.as_str().into()).unwrap();
                let f = self.unit(vec![FactorLabel::new(l.clone(), rec.space.name.clone(), rec.space.dim)]);
                naive.insert(l.clone(), f.amplitudes().to_vec());
                f
            })
            .collect();
        let ket = if ket_links == 0 {
            LabeledVector::scalar(Complex64::new(1.0, 0.0))
        } else {
            let labels = self.fresh_labels("k", ket_links, 3);
            self.unit(labels)
        };
        let c = self.complex() + Complex64::new(0.1, 0.0);
        let cand = CandidateEvent::new(c, ProductBra::new(factors).unwrap(), ket).unwrap();
        (cand, NaiveEvent { c, bra: naive })
    }

    /// Up to `max` candidates on disjoint links that are free relative to the
    /// cut and not yet absorbed anywhere in the history.
    pub fn disjoint_candidates(&mut self, h: &History, cut: &Cut, max: usize) -> Vec<(CandidateEvent, NaiveEvent)> {
        let mut free: Vec<String> = h
            .free_links(cut)
            .unwrap()
            .into_iter()
            .filter(|l| h.link(l).unwrap().target.is_none())
            .map(|l| l.0)
            .collect();
        free.shuffle(&mut self.rng);
        let mut out = Vec::new();
        let mut rest = &free[..];
        while !rest.is_empty() && out.len() < max {
            let take = self.rng.random_range(1..=rest.len().min(2));
            let ket_links = self.rng.random_range(0..=1);
            out.push(self.candidate(h, &rest[..take], ket_links));
            rest = &rest[take..];
        }
        out
    }

    /// Random past-closed cut: a nonempty prefix of a topological order.
    pub fn cut(&mut self, h: &History) -> Cut {
        let order = h.topological_order().unwrap();
        let len = self.rng.random_range(1..=order.len());
        Cut::new(order[..len].iter().cloned())
    }
}

fn split(cands: &[(CandidateEvent, NaiveEvent)]) -> (Vec<CandidateEvent>, Vec<NaiveEvent>) {
    cands.iter().cloned().unzip()
}

/// Largest deviation between library and oracle over one history: cut
/// state up to phase, single and joint probabilities.
pub fn oracle_defect(h: &History, cut: &Cut, cands: &[(CandidateEvent, NaiveEvent)]) -> f64 {
    let s = cut_state(h, cut).unwrap();
    let naive = cut_network_state(h, cut);
    let mut worst = Naive::from_vector(&s.composite).max_diff_up_to_phase(&naive);
    let (lib, orc) = split(cands);
    for (e, n) in lib.iter().zip(&orc) {
        let p = event_probability(&s, e).unwrap();
        worst = worst.max((p - oracle::joint_probability(&naive, std::slice::from_ref(n))).abs());
    }
    if !lib.is_empty() {
        let p = joint_probability(&s, &lib).unwrap();
        worst = worst.max((p - oracle::joint_probability(&naive, &orc)).abs());
    }
    worst
}

pub struct Defects {
    pub histories: usize,
    pub library: f64,
    pub oracle: f64,
}

fn histories(seeds: std::ops::Range<u64>, mut f: impl FnMut(&mut Gen) -> Option<(f64, f64)>) -> Defects {
    let mut d = Defects {
        histories: 0,
        library: 0.0,
        oracle: 0.0,
    };
    for seed in seeds {
        let mut g = Gen::new(seed);
        if let Some((lib, orc)) = f(&mut g) {
            d.histories += 1;
            d.library = d.library.max(lib);
            d.oracle = d.oracle.max(orc);
        }
    }
    d
}

/// Joint probability against the product of sequential conditionals.
pub fn chain_rule(seeds: std::ops::Range<u64>) -> Defects {
    histories(seeds, |g| {
        let h = g.history(MAX_EVENTS - 2);
        let cut = g.cut(&h);
        let cands = g.disjoint_candidates(&h, &cut, 3);
        if cands.len() < 2 {
            return None;
        }
        let (lib, _) = split(&cands);
        Some((chain_rule_defect(&h, &cut, &lib).unwrap(), oracle_defect(&h, &cut, &cands)))
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Joint probability of disjoint candidates under every reordering.
pub fn permutation_invariance(seeds: std::ops::Range<u64>) -> Defects {
    histories(seeds, |g| {
        let h = g.history(MAX_EVENTS - 3);
        let cut = g.cut(&h);
        let cands = g.disjoint_candidates(&h, &cut, 3);
        if cands.len() < 2 {
            return None;
        }
        let s = cut_state(&h, &cut).unwrap();
        let (lib, _) = split(&cands);
        let base = joint_probability(&s, &lib).unwrap();
        let worst = permutations(lib.len())
            .iter()
            .map(|p| {
                let order: Vec<CandidateEvent> = p.iter().map(|&i| lib[i].clone()).collect();
                (joint_probability(&s, &order).unwrap() - base).abs()
            })
            .fold(0.0, f64::max);
        Some((worst, oracle_defect(&h, &cut, &cands)))
    })
}

/// Probabilities with and without an extra unsaturated initial event.
pub fn spectator_invariance(seeds: std::ops::Range<u64>) -> Defects {
    histories(seeds, |g| {
        let h = g.history(MAX_EVENTS - 1);
        let cut = g.cut(&h);
        let cands = g.disjoint_candidates(&h, &cut, 2);
        if cands.is_empty() {
            return None;
        }
        let mut h2 = h.clone();
        let count = g.rng.random_range(1..=2);
        let labels = g.fresh_labels("s", count, MAX_DIM);
        let v = g.unit(labels);
        let spectator = h2.add_initial_event(v, None).unwrap();
        let cut2 = cut.with(spectator);
        let (s1, s2) = (cut_state(&h, &cut).unwrap(), cut_state(&h2, &cut2).unwrap());
        let (lib, _) = split(&cands);
        let mut worst: f64 = 0.0;
        for e in &lib {
            worst = worst.max((event_probability(&s1, e).unwrap() - event_probability(&s2, e).unwrap()).abs());
        }
        worst = worst.max((joint_probability(&s1, &lib).unwrap() - joint_probability(&s2, &lib).unwrap()).abs());
        Some((worst, oracle_defect(&h, &cut, &cands).max(oracle_defect(&h2, &cut2, &cands))))
    })
}

/// Probabilities with and without a saturated side pattern: an initial
/// event whose only link is absorbed by an event with a scalar ket.
pub fn saturated_irrelevance(seeds: std::ops::Range<u64>) -> Defects {
    histories(seeds, |g| {
        let h = g.history(MAX_EVENTS - 2);
        let cut = g.cut(&h);
        let cands = g.disjoint_candidates(&h, &cut, 2);
        if cands.is_empty() {
            return None;
        }
        let mut h2 = h.clone();
        let labels = g.fresh_labels("side", 1, MAX_DIM);
        let side_link = labels[0].link.clone();
        let v = g.unit(labels);
        let side = h2.add_initial_event(v, None).unwrap();
        let with_side = cut.with(side);
        let (absorber, _) = g.candidate(&h2, &[side_link], 0);
        let end = realize(&mut h2, &with_side, &absorber).unwrap();
        let cut2 = with_side.with(end);
        let (s1, s2) = (cut_state(&h, &cut).unwrap(), cut_state(&h2, &cut2).unwrap());
        let (lib, _) = split(&cands);
        let mut worst: f64 = 0.0;
        for e in &lib {
            worst = worst.max((event_probability(&s1, e).unwrap() - event_probability(&s2, e).unwrap()).abs());
        }
        worst = worst.max((joint_probability(&s1, &lib).unwrap() - joint_probability(&s2, &lib).unwrap()).abs());
        // The enlarged cut contributes exactly the same factors.
        if s1.composite.labels() != s2.composite.labels() {
            worst = f64::INFINITY;
        }
        Some((worst, oracle_defect(&h, &cut, &cands).max(oracle_defect(&h2, &cut2, &cands))))
    })
}
