//! Open-system description shared by every solver.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{embed, fock_destroy_on, projector, HilbertSpace, Operator, SparseMatrix};

/// Scalar prefactor multiplying a Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeDependence {
    Constant,
    /// sin(θ0 + ωt)
    Sin { phase0: f64, omega: f64 },
    /// cos(θ0 + ωt)
    Cos { phase0: f64, omega: f64 },
}

impl TimeDependence {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeDependence::Constant => 1.0,
            TimeDependence::Sin { phase0, omega } => (phase0 + omega * t).sin(),
            TimeDependence::Cos { phase0, omega } => (phase0 + omega * t).cos(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            TimeDependence::Constant => true,
            TimeDependence::Sin { omega, .. } | TimeDependence::Cos { omega, .. } => omega == 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub label: String,
    pub op: Operator,
    pub time: TimeDependence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Output coupling of the cavity mode stored at this factor index.
    Cavity { mode: usize },
    Atomic,
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub label: String,
    pub op: Operator,
    pub kind: ChannelKind,
}

/// Hamiltonian terms, collapse channels and named observables on one space.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    space: Arc<HilbertSpace>,
    hamiltonian: Vec<HamiltonianTerm>,
    channels: Vec<Channel>,
    observables: BTreeMap<String, Operator>,
    atom_index: usize,
    modes: Vec<usize>,
    charge: Option<Vec<i64>>,
}

impl ModelSpec {
    /// Assembles a model. Observables `pop_<level>` for every atomic level,
    /// and `<mode>` / `n_<mode>` for every Fock factor are added automatically.
    pub fn new(space: Arc<HilbertSpace>, hamiltonian: Vec<HamiltonianTerm>, channels: Vec<Channel>) -> Result<Self> {
        let mut labels = HashSet::new();
        for c in &channels {
            if !labels.insert(c.label.as_str()) {
                return Err(Error::Domain(format!("duplicate channel label `{}`", c.label)));
            }
        }
        let d = space.total_dim();
        for op in hamiltonian.iter().map(|t| &t.op).chain(channels.iter().map(|c| &c.op)) {
            if op.dim() != d {
                return Err(Error::Shape(format!("operator of dimension {} in a {d}-dimensional model", op.dim())));
            }
        }
        let atom_index = space
            .factors()
            .iter()
            .position(|f| !f.is_fock())
            .ok_or_else(|| Error::Domain("model has no atomic factor".into()))?;
        let modes: Vec<usize> = (0..space.factors().len()).filter(|&k| space.factor(k).is_fock()).collect();

        let mut observables = BTreeMap::new();
        let atom = space.factor(atom_index);
        for level in atom.levels().unwrap_or_default() {
            let p = projector(atom, &level.label, &level.label)?;
            observables.insert(format!("pop_{}", level.label), embed(&p, atom_index, &space)?);
        }
        for &m in &modes {
            let f = space.factor(m);
            let a = embed(&fock_destroy_on(f)?, m, &space)?;
            observables.insert(format!("n_{}", f.name), a.adjoint().mul(&a));
            observables.insert(f.name.clone(), a);
        }
        Ok(Self {
            space,
            hamiltonian,
            channels,
            observables,
            atom_index,
            modes,
            charge: None,
        })
    }

    /// Attaches a conserved per-basis-state charge that the Liouvillian
    /// respects; enables the block-reduced steady-state solve.
    pub fn with_charge(mut self, charge: Vec<i64>) -> Self {
        assert_eq!(charge.len(), self.space.total_dim());
        self.charge = Some(charge);
        self
    }

    pub fn with_observable(mut self, name: &str, op: Operator) -> Self {
        self.observables.insert(name.to_string(), op);
        self
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn hamiltonian_terms(&self) -> &[HamiltonianTerm] {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label == label)
    }

    pub fn cavity_channels(&self) -> Vec<usize> {
        (0..self.channels.len())
            .filter(|&k| matches!(self.channels[k].kind, ChannelKind::Cavity { .. }))
            .collect()
    }

    pub fn observables(&self) -> &BTreeMap<String, Operator> {
        &self.observables
    }

    pub fn observable(&self, name: &str) -> Result<&Operator> {
        self.observables.get(name).ok_or_else(|| Error::LabelNotFound {
            factor: "observables".into(),
            label: name.to_string(),
        })
    }

    pub fn atom_index(&self) -> usize {
        self.atom_index
    }

    /// Factor indices of the cavity modes.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn mode_names(&self) -> Vec<String> {
        self.modes.iter().map(|&m| self.space.factor(m).name.clone()).collect()
    }

    pub fn level_labels(&self) -> Vec<String> {
        self.space
            .factor(self.atom_index)
            .levels()
            .unwrap_or_default()
            .iter()
            .map(|l| l.label.clone())
            .collect()
    }

    pub fn charge(&self) -> Option<&[i64]> {
        self.charge.as_deref()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.hamiltonian.iter().any(|t| !t.time.is_constant())
    }

    /// H(t) = Σ f_k(t) H_k.
    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        self.hamiltonian
            .iter()
            .fold(Operator::zero(&self.space), |acc, term| acc.add(&term.op.scale(term.time.value(t))))
    }

    /// Total Hamiltonian of a time-independent model.
    pub fn constant_hamiltonian(&self) -> Result<Operator> {
        if self.is_time_dependent() {
            return Err(Error::TimeDependent(
                "constant Hamiltonian requested for a model with harmonic terms".into(),
            ));
        }
        Ok(self.hamiltonian_at(0.0))
    }

    /// Σ_c c†c.
    pub fn decay_operator(&self) -> Operator {
        self.channels
            .iter()
            .fold(Operator::zero(&self.space), |acc, c| acc.add(&c.op.adjoint().mul(&c.op)))
    }

    /// Splits H into a constant part and the time-dependent terms.
    pub fn split_hamiltonian(&self) -> (SparseMatrix, Vec<(SparseMatrix, TimeDependence)>) {
        let d = self.dim();
        let mut constant = SparseMatrix::zeros(d, d);
        let mut varying = Vec::new();
        for term in &self.hamiltonian {
            match term.time {
                TimeDependence::Constant => constant = constant.add(term.op.matrix()),
                t if t.is_constant() => constant = constant.add(&term.op.matrix().scale(C64::new(t.value(0.0), 0.0))),
                t => varying.push((term.op.matrix().clone(), t)),
            }
        }
        (constant, varying)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::Factor;

    #[test]
    fn observables_are_generated() {
        let space = HilbertSpace::new(vec![
            Factor::atomic("atom", &["g", "e"]).unwrap(),
            Factor::fock("a", 2).unwrap(),
        ])
        .unwrap();
        let m = ModelSpec::new(space, vec![], vec![]).unwrap();
        for name in ["pop_g", "pop_e", "a", "n_a"] {
            assert!(m.observable(name).is_ok(), "{name}");
        }
        assert!(!m.is_time_dependent());
    }

    #[test]
    fn duplicate_channel_rejected() {
        let space = HilbertSpace::new(vec![Factor::atomic("atom", &["g", "e"]).unwrap()]).unwrap();
        let op = Operator::identity(&space);
        let ch = |l: &str| Channel {
            label: l.into(),
            op: op.clone(),
            kind: ChannelKind::Atomic,
        };
        assert!(ModelSpec::new(space.clone(), vec![], vec![ch("x"), ch("x")]).is_err());
    }
}
