//! Product Hilbert spaces, sparse operators bound to them, and states.

pub mod angular;
pub mod sparse;
mod state;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use angular::{clebsch_gordan, clebsch_gordan2};
pub use sparse::SparseMatrix;
pub use state::{DensityMatrix, StateVector};

/// One basis state of an atomic factor. `angular` holds `(2F, 2m)` when the
/// level belongs to a hyperfine manifold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    pub angular: Option<(i32, i32)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    AtomicLevels(Vec<Level>),
    FockMode { truncation: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
}

impl Factor {
    /// Atomic factor with plain labels.
    pub fn atomic<S: AsRef<str>>(name: &str, labels: &[S]) -> Result<Self> {
        let levels = labels
            .iter()
            .map(|l| Level {
                label: l.as_ref().to_string(),
                angular: None,
            })
            .collect();
        Self::atomic_levels(name, levels)
    }

    pub fn atomic_levels(name: &str, levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Shape(format!("factor `{name}` has no levels")));
        }
        let mut seen = HashSet::new();
        for l in &levels {
            if !seen.insert(l.label.as_str()) {
                return Err(Error::Domain(format!("duplicate label `{}` in factor `{name}`", l.label)));
            }
        }
        Ok(Self {
            name: name.to_string(),
            kind: FactorKind::AtomicLevels(levels),
        })
    }

    /// Fock factor holding photon numbers 0..=truncation.
    pub fn fock(name: &str, truncation: usize) -> Result<Self> {
        if truncation < 1 {
            return Err(Error::InvalidTruncation(truncation));
        }
        Ok(Self {
            name: name.to_string(),
            kind: FactorKind::FockMode { truncation },
        })
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            FactorKind::AtomicLevels(levels) => levels.len(),
            FactorKind::FockMode { truncation } => truncation + 1,
        }
    }

    pub fn label(&self, index: usize) -> String {
        match &self.kind {
            FactorKind::AtomicLevels(levels) => levels[index].label.clone(),
            FactorKind::FockMode { .. } => index.to_string(),
        }
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        let found = match &self.kind {
            FactorKind::AtomicLevels(levels) => levels.iter().position(|l| l.label == label),
            FactorKind::FockMode { truncation } => label.parse::<usize>().ok().filter(|n| n <= truncation),
        };
        found.ok_or_else(|| Error::LabelNotFound {
            factor: self.name.clone(),
            label: label.to_string(),
        })
    }

    pub fn levels(&self) -> Option<&[Level]> {
        match &self.kind {
            FactorKind::AtomicLevels(levels) => Some(levels),
            FactorKind::FockMode { .. } => None,
        }
    }

    pub fn is_fock(&self) -> bool {
        matches!(self.kind, FactorKind::FockMode { .. })
    }
}

/// Ordered tensor product of factors. The composite index is row-major:
/// the first factor varies slowest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpace {
    factors: Vec<Factor>,
    total_dim: usize,
}

impl HilbertSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Arc<Self>> {
        if factors.is_empty() {
            return Err(Error::Shape("a space needs at least one factor".into()));
        }
        let mut names = HashSet::new();
        for f in &factors {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Domain(format!("duplicate factor name `{}`", f.name)));
            }
        }
        let total_dim = factors.iter().map(Factor::dim).product();
        Ok(Arc::new(Self { factors, total_dim }))
    }

    pub fn single(factor: Factor) -> Arc<Self> {
        let total_dim = factor.dim();
        Arc::new(Self {
            factors: vec![factor],
            total_dim,
        })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> &Factor {
        &self.factors[index]
    }

    pub fn factor_index(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::LabelNotFound {
                factor: "<space>".into(),
                label: name.to_string(),
            })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Factor::dim).collect()
    }

    /// Composite index of a tuple of per-factor indices.
    pub fn index(&self, parts: &[usize]) -> usize {
        assert_eq!(parts.len(), self.factors.len());
        parts
            .iter()
            .zip(&self.factors)
            .fold(0, |acc, (&p, f)| acc * f.dim() + p)
    }

    /// Inverse of [`HilbertSpace::index`].
    pub fn split(&self, mut index: usize) -> Vec<usize> {
        let mut parts = vec![0; self.factors.len()];
        for (slot, f) in parts.iter_mut().zip(&self.factors).rev() {
            *slot = index % f.dim();
            index /= f.dim();
        }
        parts
    }

    /// Human-readable basis label such as `g3,0,1`.
    pub fn basis_label(&self, index: usize) -> String {
        self.split(index)
            .iter()
            .zip(&self.factors)
            .map(|(&p, f)| f.label(p))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Sparse operator on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: Arc<HilbertSpace>,
    matrix: SparseMatrix,
}

impl Operator {
    pub fn new(space: Arc<HilbertSpace>, matrix: SparseMatrix) -> Result<Self> {
        let d = space.total_dim();
        if matrix.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "matrix is {:?} but the space has dimension {d}",
                matrix.shape()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: &Arc<HilbertSpace>) -> Self {
        Self {
            matrix: SparseMatrix::identity(space.total_dim()),
            space: space.clone(),
        }
    }

    pub fn zero(space: &Arc<HilbertSpace>) -> Self {
        let d = space.total_dim();
        Self {
            matrix: SparseMatrix::zeros(d, d),
            space: space.clone(),
        }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    fn same_space(&self, other: &Self) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space) || self.space == other.space,
            "operators live on different spaces"
        );
    }

    fn with(&self, matrix: SparseMatrix) -> Self {
        Self {
            space: self.space.clone(),
            matrix,
        }
    }

    pub fn adjoint(&self) -> Self {
        self.with(self.matrix.adjoint())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.same_space(other);
        self.with(self.matrix.add(&other.matrix))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.same_space(other);
        self.with(self.matrix.sub(&other.matrix))
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.same_space(other);
        self.with(self.matrix.matmul(&other.matrix))
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        self.with(self.matrix.scale(factor.into()))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Operator plus its adjoint.
    pub fn plus_hc(&self) -> Self {
        self.add(&self.adjoint())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.matrix.is_hermitian(tol)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.is_zero()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<C64> {
        self.matrix.to_dense()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.frobenius_norm()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim={}, nnz={})", self.dim(), self.nnz())
    }
}

/// Annihilation operator on a single Fock factor with photon numbers 0..=N.
pub fn fock_destroy(truncation: usize) -> Result<Operator> {
    let factor = Factor::fock("mode", truncation)?;
    fock_destroy_on(&factor)
}

/// Annihilation operator for an existing Fock factor.
pub fn fock_destroy_on(factor: &Factor) -> Result<Operator> {
    let n = match factor.kind {
        FactorKind::FockMode { truncation } => truncation,
        _ => return Err(Error::Domain(format!("factor `{}` is not a Fock mode", factor.name))),
    };
    let m = SparseMatrix::from_triplets(
        n + 1,
        n + 1,
        (1..=n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))),
    );
    Operator::new(HilbertSpace::single(factor.clone()), m)
}

/// `|i⟩⟨j|` on a single factor.
pub fn projector(factor: &Factor, i: &str, j: &str) -> Result<Operator> {
    let r = factor.index_of(i)?;
    let c = factor.index_of(j)?;
    let d = factor.dim();
    Operator::new(
        HilbertSpace::single(factor.clone()),
        SparseMatrix::from_triplets(d, d, [(r, c, C64::new(1.0, 0.0))]),
    )
}

/// Lifts a single-factor operator into `space`, acting on factor `index`.
pub fn embed(op: &Operator, index: usize, space: &Arc<HilbertSpace>) -> Result<Operator> {
    let own = op.space().factors();
    if own.len() != 1 || index >= space.factors().len() || own[0] != space.factors()[index] {
        return Err(Error::Shape(format!(
            "operator factor does not match factor {index} of the target space"
        )));
    }
    let dims = space.dims();
    let left: usize = dims[..index].iter().product();
    let right: usize = dims[index + 1..].iter().product();
    let m = SparseMatrix::identity(left)
        .kron(op.matrix())
        .kron(&SparseMatrix::identity(right));
    Operator::new(space.clone(), m)
}

/// Kronecker product on the concatenated space.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let mut factors = a.space().factors().to_vec();
    factors.extend(b.space().factors().iter().cloned());
    // factor names may collide when the same local space appears twice
    let mut seen = HashSet::new();
    for (k, f) in factors.iter_mut().enumerate() {
        if !seen.insert(f.name.clone()) {
            f.name = format!("{}#{k}", f.name);
            seen.insert(f.name.clone());
        }
    }
    let space = HilbertSpace::new(factors).expect("names were made unique");
    Operator {
        space,
        matrix: a.matrix().kron(b.matrix()),
    }
}

/// Tr[ρ·op].
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    rho.expect(op)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_level() -> Factor {
        Factor::atomic("atom", &["g3", "g4", "e3", "e4"]).unwrap()
    }

    #[test]
    fn destroy_entries() {
        let a = fock_destroy(2).unwrap();
        let d = a.to_dense();
        assert_eq!(d[1], C64::new(1.0, 0.0));
        assert!((d[5].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.nnz(), 2);
        let n = a.adjoint().mul(&a);
        assert!(n.matrix().is_diagonal());
        for k in 0..3 {
            assert!((n.matrix().get(k, k).re - k as f64).abs() < 1e-14);
        }
        assert!(matches!(fock_destroy(0), Err(Error::InvalidTruncation(0))));
    }

    #[test]
    fn projector_algebra() {
        let f = four_level();
        let p = projector(&f, "g4", "e3").unwrap().mul(&projector(&f, "e3", "g4").unwrap());
        assert_eq!(p, projector(&f, "g4", "g4").unwrap());
        assert!(matches!(projector(&f, "x", "g3"), Err(Error::LabelNotFound { .. })));
    }

    #[test]
    fn embed_counts_nonzeros() {
        let space = HilbertSpace::new(vec![
            Factor::atomic("atom", &["a", "b", "c", "d"]).unwrap(),
            Factor::fock("a", 2).unwrap(),
            Factor::fock("b", 2).unwrap(),
        ])
        .unwrap();
        let a = embed(&fock_destroy_on(space.factor(1)).unwrap(), 1, &space).unwrap();
        assert_eq!(a.dim(), 36);
        assert_eq!(a.nnz(), 4 * 2 * 3);
        let b = embed(&fock_destroy_on(space.factor(2)).unwrap(), 2, &space).unwrap();
        assert!(a.commutator(&b).is_zero());
        let wrong = fock_destroy(3).unwrap();
        assert!(embed(&wrong, 1, &space).is_err());
    }

    #[test]
    fn index_round_trip() {
        let space = HilbertSpace::new(vec![four_level(), Factor::fock("a", 3).unwrap()]).unwrap();
        for k in 0..space.total_dim() {
            assert_eq!(space.index(&space.split(k)), k);
        }
        assert_eq!(space.basis_label(space.index(&[2, 1])), "e3,1");
    }
}
