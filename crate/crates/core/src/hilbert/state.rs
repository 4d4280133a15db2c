use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{HilbertSpace, Operator};
use crate::error::{Error, Result};
use crate::linalg;

/// Density matrix stored densely in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: Arc<HilbertSpace>,
    data: Vec<C64>,
}

impl DensityMatrix {
    /// Wraps a row-major matrix without normalizing it. Used for the
    /// non-Hermitian operands of regression calculations too.
    pub fn from_dense(space: &Arc<HilbertSpace>, data: Vec<C64>) -> Result<Self> {
        let d = space.total_dim();
        if data.len() != d * d {
            return Err(Error::Shape(format!("expected {} entries, got {}", d * d, data.len())));
        }
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    pub fn basis(space: &Arc<HilbertSpace>, index: usize) -> Self {
        let d = space.total_dim();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        data[index * d + index] = C64::new(1.0, 0.0);
        Self {
            space: space.clone(),
            data,
        }
    }

    pub fn maximally_mixed(space: &Arc<HilbertSpace>) -> Self {
        let d = space.total_dim();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            data[i * d + i] = C64::new(1.0 / d as f64, 0.0);
        }
        Self {
            space: space.clone(),
            data,
        }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let d = psi.data.len();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = psi.data[i] * psi.data[j].conj();
            }
        }
        Self {
            space: psi.space.clone(),
            data,
        }
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.data[i * d + i]).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.data[i * d + i].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(self.dim(), &self.hermitian_part())
    }

    fn hermitian_part(&self) -> Vec<C64> {
        let d = self.dim();
        let mut h = self.data.clone();
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = 0.5 * (self.data[i * d + j] + self.data[j * d + i].conj());
            }
        }
        h
    }

    /// Tr[ρ·op].
    pub fn expect(&self, op: &Operator) -> Result<C64> {
        let d = self.dim();
        if op.dim() != d {
            return Err(Error::Shape(format!(
                "operator dimension {} differs from state dimension {d}",
                op.dim()
            )));
        }
        // Tr[ρ A] = Σ_{ij} ρ_ji A_ij
        Ok(op
            .matrix()
            .iter()
            .map(|(i, j, a)| self.data[j * d + i] * a)
            .sum())
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape("trace distance between different dimensions".into()));
        }
        let diff: Vec<C64> = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        let d = Self {
            space: self.space.clone(),
            data: diff,
        };
        Ok(0.5 * d.eigenvalues()?.iter().map(|x| x.abs()).sum::<f64>())
    }

    /// Reduced populations of factor `index`.
    pub fn factor_populations(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space.factor(index).dim()];
        for (k, p) in self.populations().into_iter().enumerate() {
            out[self.space.split(k)[index]] += p;
        }
        out
    }
}

/// Pure state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: Arc<HilbertSpace>,
    data: Vec<C64>,
}

impl StateVector {
    pub fn new(space: &Arc<HilbertSpace>, data: Vec<C64>) -> Result<Self> {
        if data.len() != space.total_dim() {
            return Err(Error::Shape(format!(
                "expected {} amplitudes, got {}",
                space.total_dim(),
                data.len()
            )));
        }
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    pub fn basis(space: &Arc<HilbertSpace>, index: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); space.total_dim()];
        data[index] = C64::new(1.0, 0.0);
        Self {
            space: space.clone(),
            data,
        }
    }

    /// Product basis state from per-factor labels.
    pub fn from_labels(space: &Arc<HilbertSpace>, labels: &[&str]) -> Result<Self> {
        if labels.len() != space.factors().len() {
            return Err(Error::Shape("one label per factor required".into()));
        }
        let parts = labels
            .iter()
            .zip(space.factors())
            .map(|(l, f)| f.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::basis(space, space.index(&parts)))
    }

    pub fn space(&self) -> &Arc<HilbertSpace> {
        &self.space
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.data.iter_mut().for_each(|z| *z /= n);
        }
    }

    pub fn expect(&self, op: &Operator) -> C64 {
        let mut tmp = vec![C64::new(0.0, 0.0); self.data.len()];
        op.matrix().matvec(&self.data, &mut tmp);
        self.data.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed, fock_destroy_on, projector, Factor};

    #[test]
    fn mixed_atom_and_vacuum() {
        let space = HilbertSpace::new(vec![
            Factor::atomic("atom", &["g3", "g4", "e3", "e4"]).unwrap(),
            Factor::fock("a", 2).unwrap(),
        ])
        .unwrap();
        let p = embed(&projector(space.factor(0), "e3", "e3").unwrap(), 0, &space).unwrap();
        let atom_only = HilbertSpace::single(space.factor(0).clone());
        let rho = DensityMatrix::maximally_mixed(&atom_only);
        let p_atom = projector(space.factor(0), "e3", "e3").unwrap();
        assert!((rho.expect(&p_atom).unwrap().re - 0.25).abs() < 1e-15);
        assert!(rho.expect(&p).is_err());

        let vac = DensityMatrix::from_pure(&StateVector::from_labels(&space, &["g3", "0"]).unwrap());
        let a = embed(&fock_destroy_on(space.factor(1)).unwrap(), 1, &space).unwrap();
        let n = a.adjoint().mul(&a);
        assert_eq!(vac.expect(&n).unwrap(), C64::new(0.0, 0.0));
        assert!((vac.expect(&Operator::identity(&space)).unwrap().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let space = HilbertSpace::single(Factor::fock("a", 1).unwrap());
        let a = DensityMatrix::basis(&space, 0);
        let b = DensityMatrix::basis(&space, 1);
        assert!((a.trace_distance(&b).unwrap() - 1.0).abs() < 1e-14);
    }
}
