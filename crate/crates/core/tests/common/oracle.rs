//! Brute-force reference: evaluates a cut by enumerating every index of
//! every link in it at once, with no use of the library's contraction code.

use std::collections::BTreeMap;

use qevents_core::{Complex64, Cut, History, LabeledVector};

/// Amplitudes over named indices, stored as a map from full assignments.
#[derive(Debug, Clone)]
pub struct Naive {
    pub dims: BTreeMap<String, usize>,
    pub amps: BTreeMap<Vec<usize>, Complex64>,
}

/// Every assignment of the given dimensions, first slowest.
pub fn assignments(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Amplitude of a stored vector at a named assignment, read through the
/// row-major layout of its label list.
pub fn lookup(v: &LabeledVector, at: &BTreeMap<String, usize>) -> Complex64 {
    let mut flat = 0;
    for label in v.labels() {
        flat = flat * label.dim() + at[&label.link];
    }
    v.amplitudes()[flat]
}

impl Naive {
    pub fn from_vector(v: &LabeledVector) -> Self {
        let dims: BTreeMap<String, usize> = v.labels().iter().map(|l| (l.link.clone(), l.dim())).collect();
        let keys: Vec<&String> = dims.keys().collect();
        let mut amps = BTreeMap::new();
        for a in assignments(&dims.values().cloned().collect::<Vec<_>>()) {
            let at: BTreeMap<String, usize> = keys.iter().map(|k| (*k).clone()).zip(a.iter().cloned()).collect();
            amps.insert(a, lookup(v, &at));
        }
        Self { dims, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        Self {
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|(k, v)| (k.clone(), v / n)).collect(),
        }
    }

    /// Largest entry-wise difference; label sets must agree.
    pub fn max_diff(&self, other: &Naive) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.amps
            .iter()
            .map(|(k, v)| (v - other.amps[k]).norm())
            .fold(0.0, f64::max)
    }

    /// Same vector up to a global phase.
    pub fn max_diff_up_to_phase(&self, other: &Naive) -> f64 {
        let overlap: Complex64 = self.amps.iter().map(|(k, v)| v.conj() * other.amps[k]).sum();
        let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
        self.amps
            .iter()
            .map(|(k, v)| (v * phase - other.amps[k]).norm())
            .fold(0.0, f64::max)
    }
}

/// Normalized state on the free links of a cut, from the full network of
/// emitted vectors and absorbing bras inside the cut.
pub fn cut_network_state(h: &History, cut: &Cut) -> Naive {
    let mut all: BTreeMap<String, usize> = BTreeMap::new();
    let mut free: BTreeMap<String, usize> = BTreeMap::new();
    for id in &cut.past {
        let e = h.event(id).unwrap();
        for l in e.emitted.labels() {
            all.insert(l.link.clone(), l.dim());
            let link = h.link(&l.link.as_str().into()).unwrap();
            if !link.target.as_ref().is_some_and(|t| cut.contains(t)) {
                free.insert(l.link.clone(), l.dim());
            }
        }
    }
    let names: Vec<String> = all.keys().cloned().collect();
    let free_names: Vec<String> = free.keys().cloned().collect();
    let mut amps: BTreeMap<Vec<usize>, Complex64> = assignments(&free.values().cloned().collect::<Vec<_>>())
        .into_iter()
        .map(|a| (a, Complex64::new(0.0, 0.0)))
        .collect();
    for a in assignments(&all.values().cloned().collect::<Vec<_>>()) {
        let at: BTreeMap<String, usize> = names.iter().cloned().zip(a.iter().cloned()).collect();
        let mut term = Complex64::new(1.0, 0.0);
        for id in &cut.past {
            let e = h.event(id).unwrap();
            term *= lookup(&e.emitted, &at);
            if let Some(abs) = &e.absorption {
                term *= abs.c;
                for f in abs.bra.factors() {
                    term *= lookup(f, &at).conj();
                }
            }
        }
        let key: Vec<usize> = free_names.iter().map(|n| at[n]).collect();
        *amps.get_mut(&key).unwrap() += term;
    }
    Naive { dims: free, amps }.normalized()
}

/// A candidate in oracle form: coefficient and per-link bra amplitudes.
#[derive(Debug, Clone)]
pub struct NaiveEvent {
    pub c: Complex64,
    pub bra: BTreeMap<String, Vec<Complex64>>,
}

/// Squared length after absorbing every candidate's links, by direct
/// enumeration of all link indices of the state. Kets are unit vectors on
/// fresh links, so they only contribute a factor one.
pub fn joint_probability(state: &Naive, events: &[NaiveEvent]) -> f64 {
    let names: Vec<&String> = state.dims.keys().collect();
    let absorbed: Vec<&String> = events.iter().flat_map(|e| e.bra.keys()).collect();
    let rest: Vec<&String> = names.iter().cloned().filter(|n| !absorbed.contains(n)).collect();
    let mut out: BTreeMap<Vec<usize>, Complex64> = BTreeMap::new();
    for (a, amp) in &state.amps {
        let at: BTreeMap<&String, usize> = names.iter().cloned().zip(a.iter().cloned()).collect();
        let mut term = *amp;
        for e in events {
            term *= e.c;
            for (link, bra) in &e.bra {
                term *= bra[at[link]].conj();
            }
        }
        let key: Vec<usize> = rest.iter().map(|n| at[n]).collect();
        *out.entry(key).or_insert(Complex64::new(0.0, 0.0)) += term;
    }
    out.values().map(|v| v.norm_sqr()).sum()
}
