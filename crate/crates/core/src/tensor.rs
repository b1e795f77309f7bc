//! Labeled dense complex tensors.
//!
//! A [`LabeledVector`] is an element of a tensor product of finite-dimensional
//! spaces, one factor per causal link. Factors are identified by their link
//! id and always stored sorted by it, so two vectors over the same labels
//! share one amplitude layout (row-major, first label slowest).

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::UNIT_TOL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("label `{0}` appears more than once")]
    DuplicateLabel(String),
    #[error("label `{0}` is not present in the vector")]
    MissingLabel(String),
    #[error("space `{space}` on link `{link}` has dimension 0")]
    ZeroDimension { link: String, space: String },
    #[error("labels require {expected} amplitudes, found {found}")]
    AmplitudeCount { expected: usize, found: usize },
    #[error("amplitude {index} is not finite")]
    NonFinite { index: usize },
    #[error("link `{link}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        link: String,
        expected: usize,
        found: usize,
    },
    #[error("bra factor must carry exactly one label, found {found}")]
    NotSingleFactor { found: usize },
    #[error("vector on [{labels}] has norm {norm}, expected 1")]
    NonUnit { labels: String, norm: f64 },
    #[error("space `{name}` has dimension {existing}, redeclared with {requested}")]
    SpaceConflict {
        name: String,
        existing: usize,
        requested: usize,
    },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A named finite-dimensional Hilbert space attached to a link type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceType {
    pub name: String,
    pub dim: usize,
}

impl SpaceType {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }
}

/// Keeps space names consistent: one dimension per name.
#[derive(Debug, Clone, Default)]
pub struct SpaceRegistry {
    spaces: BTreeMap<String, usize>,
}

impl SpaceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, space: &SpaceType) -> Result<()> {
        match self.spaces.get(&space.name) {
            Some(&existing) if existing != space.dim => Err(TensorError::SpaceConflict {
                name: space.name.clone(),
                existing,
                requested: space.dim,
            }),
            Some(_) => Ok(()),
            None => {
                self.spaces.insert(space.name.clone(), space.dim);
                Ok(())
            }
        }
    }

    pub fn dim(&self, name: &str) -> Option<usize> {
        self.spaces.get(name).copied()
    }
}

/// One tensor factor: the link it lives on and that link's space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorLabel {
    pub link: String,
    pub space: SpaceType,
}

impl FactorLabel {
    pub fn new(link: impl Into<String>, space: impl Into<String>, dim: usize) -> Self {
        Self {
            link: link.into(),
            space: SpaceType::new(space, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }
}

impl fmt::Display for FactorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}[{}]", self.link, self.space.name, self.space.dim)
    }
}

/// Row-major strides for the given dimensions.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut out = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * dims[i + 1];
    }
    out
}

/// Odometer increment, last digit fastest.
pub(crate) fn advance(digits: &mut [usize], dims: &[usize]) {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < dims[i] {
            return;
        }
        digits[i] = 0;
    }
}

/// Complex amplitudes over an ordered set of link factors.
///
/// The empty label set is a scalar with a single amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorLiteral", into = "VectorLiteral")]
pub struct LabeledVector {
    labels: Vec<FactorLabel>,
    amps: Vec<Complex64>,
}

impl LabeledVector {
    /// Builds a vector from labels in any order; `amps` is indexed
    /// lexicographically over `labels` as given.
    pub fn new(labels: Vec<FactorLabel>, amps: Vec<Complex64>) -> Result<Self> {
        for label in &labels {
            if label.dim() == 0 {
                return Err(TensorError::ZeroDimension {
                    link: label.link.clone(),
                    space: label.space.name.clone(),
                });
            }
        }
        let expected: usize = labels.iter().map(FactorLabel::dim).product();
        if expected != amps.len() {
            return Err(TensorError::AmplitudeCount {
                expected,
                found: amps.len(),
            });
        }
        if let Some(index) = amps.iter().position(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(TensorError::NonFinite { index });
        }
        let (labels, amps) = canonicalize(labels, amps);
        if let Some(w) = labels.windows(2).find(|w| w[0].link == w[1].link) {
            return Err(TensorError::DuplicateLabel(w[0].link.clone()));
        }
        Ok(Self { labels, amps })
    }

    /// Convenience constructor for a single-factor vector.
    pub fn single(label: FactorLabel, amps: Vec<Complex64>) -> Result<Self> {
        Self::new(vec![label], amps)
    }

    pub fn scalar(value: Complex64) -> Self {
        Self {
            labels: Vec::new(),
            amps: vec![value],
        }
    }

    pub fn zeros(labels: Vec<FactorLabel>) -> Result<Self> {
        let len = labels.iter().map(FactorLabel::dim).product();
        Self::new(labels, vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn labels(&self) -> &[FactorLabel] {
        &self.labels
    }

    pub fn links(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.link.as_str())
    }

    pub fn label(&self, link: &str) -> Option<&FactorLabel> {
        self.labels.iter().find(|l| l.link == link)
    }

    pub fn has_label(&self, link: &str) -> bool {
        self.label(link).is_some()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.labels.iter().map(FactorLabel::dim).collect()
    }

    /// Amplitudes in canonical (sorted-link) order.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Number of amplitudes; at least 1, since a scalar has one.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.labels.is_empty()
    }

    /// The single amplitude of a scalar, `None` otherwise.
    pub fn as_scalar(&self) -> Option<Complex64> {
        self.is_scalar().then(|| self.amps[0])
    }

    /// Amplitude at `digits`, given per label in canonical order.
    pub fn amp(&self, digits: &[usize]) -> Complex64 {
        debug_assert_eq!(digits.len(), self.labels.len());
        let s = strides(&self.dims());
        self.amps[digits.iter().zip(&s).map(|(d, s)| d * s).sum::<usize>()]
    }

    /// Amplitudes re-laid out for an arbitrary label order.
    pub fn amplitudes_in_order(&self, order: &[&str]) -> Result<Vec<Complex64>> {
        if order.len() != self.labels.len() {
            return Err(TensorError::AmplitudeCount {
                expected: self.labels.len(),
                found: order.len(),
            });
        }
        let positions = order
            .iter()
            .map(|link| {
                self.labels
                    .iter()
                    .position(|l| l.link == *link)
                    .ok_or_else(|| TensorError::MissingLabel(link.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let own = strides(&self.dims());
        let dims: Vec<usize> = positions.iter().map(|&p| self.labels[p].dim()).collect();
        let mut digits = vec![0; dims.len()];
        let mut out = Vec::with_capacity(self.amps.len());
        for _ in 0..self.amps.len() {
            let flat: usize = digits.iter().zip(&positions).map(|(&d, &p)| d * own[p]).sum();
            out.push(self.amps[flat]);
            advance(&mut digits, &dims);
        }
        Ok(out)
    }

    pub fn squared_norm(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub(crate) fn require_unit(&self, tol: f64) -> Result<()> {
        if self.is_unit(tol) {
            Ok(())
        } else {
            Err(TensorError::NonUnit {
                labels: self.label_list(),
                norm: self.norm(),
            })
        }
    }

    pub(crate) fn label_list(&self) -> String {
        self.labels
            .iter()
            .map(|l| l.link.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            labels: self.labels.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    /// Unit-norm copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    /// Largest entry-wise modulus difference; `None` when label sets differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.labels != other.labels {
            return None;
        }
        Some(
            self.amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        )
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other).is_some_and(|d| d <= tol)
    }

    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        tensor_product(self, other)
    }
}

/// Sorts labels by link id and permutes amplitudes to match.
fn canonicalize(labels: Vec<FactorLabel>, amps: Vec<Complex64>) -> (Vec<FactorLabel>, Vec<Complex64>) {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].link.cmp(&labels[b].link));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return (labels, amps);
    }
    let old_dims: Vec<usize> = labels.iter().map(FactorLabel::dim).collect();
    let old_strides = strides(&old_dims);
    let new_dims: Vec<usize> = order.iter().map(|&o| old_dims[o]).collect();
    let mut digits = vec![0; labels.len()];
    let mut out = Vec::with_capacity(amps.len());
    for _ in 0..amps.len() {
        let flat: usize = digits
            .iter()
            .zip(&order)
            .map(|(&d, &o)| d * old_strides[o])
            .sum();
        out.push(amps[flat]);
        advance(&mut digits, &new_dims);
    }
    let labels = order.iter().map(|&o| labels[o].clone()).collect();
    (labels, out)
}

/// Tensor product over disjoint label sets.
pub fn tensor_product(u: &LabeledVector, v: &LabeledVector) -> Result<LabeledVector> {
    if let Some(clash) = u.labels.iter().find(|l| v.has_label(&l.link)) {
        return Err(TensorError::DuplicateLabel(clash.link.clone()));
    }
    let mut labels = u.labels.clone();
    labels.extend(v.labels.iter().cloned());
    let mut amps = Vec::with_capacity(u.amps.len() * v.amps.len());
    for a in &u.amps {
        amps.extend(v.amps.iter().map(|b| a * b));
    }
    let (labels, amps) = canonicalize(labels, amps);
    Ok(LabeledVector { labels, amps })
}

pub fn squared_norm(psi: &LabeledVector) -> f64 {
    psi.squared_norm()
}

/// A product of unit single-factor vectors, used as the bra side of an
/// event operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabeledVector>", into = "Vec<LabeledVector>")]
pub struct ProductBra {
    factors: BTreeMap<String, LabeledVector>,
}

impl ProductBra {
    pub fn new(factors: impl IntoIterator<Item = LabeledVector>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for f in factors {
            if f.labels.len() != 1 {
                return Err(TensorError::NotSingleFactor {
                    found: f.labels.len(),
                });
            }
            f.require_unit(UNIT_TOL)?;
            let link = f.labels[0].link.clone();
            if map.insert(link.clone(), f).is_some() {
                return Err(TensorError::DuplicateLabel(link));
            }
        }
        Ok(Self { factors: map })
    }

    pub fn empty() -> Self {
        Self {
            factors: BTreeMap::new(),
        }
    }

    pub fn links(&self) -> impl Iterator<Item = &str> {
        self.factors.keys().map(String::as_str)
    }

    pub fn factor(&self, link: &str) -> Option<&LabeledVector> {
        self.factors.get(link)
    }

    pub fn factors(&self) -> impl Iterator<Item = &LabeledVector> {
        self.factors.values()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn contract(&self, psi: &LabeledVector) -> Result<LabeledVector> {
        contract(self, psi)
    }
}

impl TryFrom<Vec<LabeledVector>> for ProductBra {
    type Error = TensorError;

    fn try_from(value: Vec<LabeledVector>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ProductBra> for Vec<LabeledVector> {
    fn from(bra: ProductBra) -> Self {
        bra.factors.into_values().collect()
    }
}

/// Partial inner product of `psi` with a product bra. The bra's labels are
/// summed out; every other factor of `psi` survives in the result.
pub fn contract(bra: &ProductBra, psi: &LabeledVector) -> Result<LabeledVector> {
    let mut bra_at: Vec<Option<&[Complex64]>> = vec![None; psi.labels.len()];
    for (link, factor) in &bra.factors {
        let pos = psi
            .labels
            .iter()
            .position(|l| &l.link == link)
            .ok_or_else(|| TensorError::MissingLabel(link.clone()))?;
        let bra_dim = factor.labels[0].dim();
        if bra_dim != psi.labels[pos].dim() {
            return Err(TensorError::DimensionMismatch {
                link: link.clone(),
                expected: psi.labels[pos].dim(),
                found: bra_dim,
            });
        }
        bra_at[pos] = Some(&factor.amps);
    }

    let dims = psi.dims();
    let kept: Vec<usize> = (0..dims.len()).filter(|&i| bra_at[i].is_none()).collect();
    let out_labels: Vec<FactorLabel> = kept.iter().map(|&i| psi.labels[i].clone()).collect();
    let out_dims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
    let out_strides = strides(&out_dims);
    let out_len: usize = out_dims.iter().product();

    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    let mut digits = vec![0; dims.len()];
    for amp in &psi.amps {
        let mut coeff = *amp;
        let mut target = 0;
        let mut k = 0;
        for (i, &d) in digits.iter().enumerate() {
            match bra_at[i] {
                Some(b) => coeff *= b[d].conj(),
                None => {
                    target += d * out_strides[k];
                    k += 1;
                }
            }
        }
        out[target] += coeff;
        advance(&mut digits, &dims);
    }
    Ok(LabeledVector {
        labels: out_labels,
        amps: out,
    })
}

/// Rank-1 event operator `c |ket><bra|`: absorbs the bra's links and emits
/// the ket's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOperator {
    pub c: Complex64,
    pub bra: ProductBra,
    pub ket: LabeledVector,
}

impl EventOperator {
    pub fn new(c: Complex64, bra: ProductBra, ket: LabeledVector) -> Self {
        Self { c, bra, ket }
    }

    pub fn apply(&self, psi: &LabeledVector) -> Result<LabeledVector> {
        apply_event_operator(self, psi)
    }
}

pub fn apply_event_operator(op: &EventOperator, psi: &LabeledVector) -> Result<LabeledVector> {
    let rest = contract(&op.bra, psi)?;
    Ok(tensor_product(&op.ket, &rest)?.scaled(op.c))
}

/// External vector literal:
/// `{"labels":[{"link":..,"space":..,"dim":..}], "amps":[[re,im],..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorLiteral {
    pub labels: Vec<LabelLiteral>,
    pub amps: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelLiteral {
    pub link: String,
    pub space: String,
    pub dim: usize,
}

impl TryFrom<VectorLiteral> for LabeledVector {
    type Error = TensorError;

    fn try_from(lit: VectorLiteral) -> Result<Self> {
        let labels = lit
            .labels
            .into_iter()
            .map(|l| FactorLabel::new(l.link, l.space, l.dim))
            .collect();
        Self::new(labels, lit.amps)
    }
}

impl From<LabeledVector> for VectorLiteral {
    fn from(v: LabeledVector) -> Self {
        Self {
            labels: v
                .labels
                .into_iter()
                .map(|l| LabelLiteral {
                    link: l.link,
                    space: l.space.name,
                    dim: l.space.dim,
                })
                .collect(),
            amps: v.amps,
        }
    }
}
