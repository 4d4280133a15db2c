//! Lindblad generator in superoperator form.
//!
//! Density matrices are vectorized row-major: ρ_ij sits at `i*d + j`, so
//! vec(AρB) = (A ⊗ Bᵀ) vec(ρ).

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::SparseMatrix;
use crate::model::ModelSpec;

/// Constant generator pieces: A = −iH − ½Σc†c and the channel operators,
/// each also stored transposed for column access.
#[derive(Clone, Debug)]
pub struct Generator {
    d: usize,
    a: SparseMatrix,
    a_t: SparseMatrix,
    channels: Vec<SparseMatrix>,
    channels_t: Vec<SparseMatrix>,
}

impl Generator {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let h = model.constant_hamiltonian()?;
        Ok(Self::from_parts(h.matrix(), model))
    }

    /// Uses `h` as the Hamiltonian together with the model's channels.
    pub fn from_parts(h: &SparseMatrix, model: &ModelSpec) -> Self {
        let decay = model.decay_operator();
        let a = h
            .scale(C64::new(0.0, -1.0))
            .add(&decay.matrix().scale(C64::new(-0.5, 0.0)));
        let channels: Vec<SparseMatrix> = model.channels().iter().map(|c| c.op.matrix().clone()).collect();
        Self {
            d: model.dim(),
            a_t: a.transpose(),
            a,
            channels_t: channels.iter().map(SparseMatrix::transpose).collect(),
            channels,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Nonzeros of L applied to the basis matrix E_ij, as `(row-major index, value)`.
    pub fn column(&self, i: usize, j: usize, out: &mut Vec<(usize, C64)>) {
        let d = self.d;
        // A E_ij: entries (k, j) with A_ki
        for (k, v) in self.a_t.row(i) {
            out.push((k * d + j, v));
        }
        // E_ij A†: entries (i, l) with conj(A_lj)
        for (l, v) in self.a_t.row(j) {
            out.push((i * d + l, v.conj()));
        }
        for ct in &self.channels_t {
            for (k, u) in ct.row(i) {
                for (l, v) in ct.row(j) {
                    out.push((k * d + l, u * v.conj()));
                }
            }
        }
    }

    /// dρ/dt = Aρ + ρA† + Σ cρc† on a dense row-major ρ. `rho` need not be
    /// Hermitian.
    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        self.apply_add(rho, out);
    }

    pub fn apply_add(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.d;
        let one = C64::new(1.0, 0.0);
        self.a.mul_dense_add(one, rho, d, out);
        // ρA† = (Aρ†)†, done directly
        self.a.dense_mul_adjoint_add(one, rho, d, out);
        let mut tmp = vec![C64::new(0.0, 0.0); d * d];
        for c in &self.channels {
            tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            c.mul_dense_add(one, rho, d, &mut tmp);
            c.dense_mul_adjoint_add(one, &tmp, d, out);
        }
    }

    /// Rows of the generator restricted to `indices` (which must be an
    /// invariant set); returned matrix acts on the local numbering.
    pub fn restricted_matrix(&self, indices: &[usize], local: &[usize]) -> SparseMatrix {
        let n = indices.len();
        let mut triplets = Vec::new();
        let mut col = Vec::new();
        for (c_local, &c) in indices.iter().enumerate() {
            col.clear();
            self.column(c / self.d, c % self.d, &mut col);
            for &(r, v) in &col {
                let r_local = local[r];
                debug_assert!(r_local != usize::MAX, "index set is not invariant");
                triplets.push((r_local, c_local, v));
            }
        }
        SparseMatrix::from_triplets(n, n, triplets)
    }

    /// Smallest invariant index set containing `seeds`.
    pub fn closure(&self, seeds: &[usize]) -> Vec<usize> {
        let d2 = self.d * self.d;
        let mut seen = vec![false; d2];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        let mut col = Vec::new();
        while let Some(c) = stack.pop() {
            col.clear();
            self.column(c / self.d, c % self.d, &mut col);
            for &(r, v) in &col {
                if v != C64::new(0.0, 0.0) && !seen[r] {
                    seen[r] = true;
                    stack.push(r);
                }
            }
        }
        (0..d2).filter(|&k| seen[k]).collect()
    }
}

/// Full superoperator on vectorized density matrices.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    pub dim: usize,
    pub matrix: SparseMatrix,
}

pub fn liouvillian(model: &ModelSpec) -> Result<Liouvillian> {
    if model.is_time_dependent() {
        return Err(Error::TimeDependent("build the generator from dynamics::evolve instead".into()));
    }
    let g = Generator::new(model)?;
    let d2 = g.dim() * g.dim();
    let all: Vec<usize> = (0..d2).collect();
    Ok(Liouvillian {
        dim: g.dim(),
        matrix: g.restricted_matrix(&all, &all),
    })
}

/// Local numbering for an index subset of 0..n.
pub fn local_map(indices: &[usize], n: usize) -> Vec<usize> {
    let mut local = vec![usize::MAX; n];
    for (k, &i) in indices.iter().enumerate() {
        local[i] = k;
    }
    local
}
