//! Normal-ordered polynomials in σ_kl, a† and a for one atom and one mode.
//!
//! A [`Mono`] is `coeff · σ_kl · a†^p a^q`; a missing `sigma` means the atomic
//! identity. Polynomials are plain `Vec<Mono>` kept in canonical form by
//! [`simplify`].

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::hilbert::{HilbertSpace, Operator, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mono {
    pub coeff: C64,
    pub sigma: Option<(usize, usize)>,
    pub create: u32,
    pub destroy: u32,
}

pub type Poly = Vec<Mono>;

impl Mono {
    pub fn new(coeff: impl Into<C64>, sigma: Option<(usize, usize)>, create: u32, destroy: u32) -> Self {
        Self {
            coeff: coeff.into(),
            sigma,
            create,
            destroy,
        }
    }

    pub fn sigma(coeff: impl Into<C64>, k: usize, l: usize) -> Self {
        Self::new(coeff, Some((k, l)), 0, 0)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            coeff: self.coeff.conj(),
            sigma: self.sigma.map(|(k, l)| (l, k)),
            create: self.destroy,
            destroy: self.create,
        }
    }

    fn key(&self) -> (Option<(usize, usize)>, u32, u32) {
        (self.sigma, self.create, self.destroy)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Product of two monomials, normal ordered:
/// a^q a†^r = Σ_j C(q,j) C(r,j) j! a†^(r−j) a^(q−j).
pub fn mul_mono(x: &Mono, y: &Mono) -> Poly {
    let sigma = match (x.sigma, y.sigma) {
        (None, s) | (s, None) => s,
        (Some((i, j)), Some((k, l))) => {
            if j != k {
                return Vec::new();
            }
            Some((i, l))
        }
    };
    let (q, r) = (x.destroy, y.create);
    (0..=q.min(r))
        .map(|j| Mono {
            coeff: x.coeff * y.coeff * binomial(q, j) * binomial(r, j) * factorial(j),
            sigma,
            create: x.create + r - j,
            destroy: q - j + y.destroy,
        })
        .collect()
}

pub fn mul(a: &[Mono], b: &[Mono]) -> Poly {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            out.extend(mul_mono(x, y));
        }
    }
    simplify(out)
}

pub fn adjoint(a: &[Mono]) -> Poly {
    simplify(a.iter().map(Mono::adjoint).collect())
}

pub fn scale(a: &[Mono], s: impl Into<C64>) -> Poly {
    let s = s.into();
    simplify(
        a.iter()
            .map(|m| Mono {
                coeff: m.coeff * s,
                ..*m
            })
            .collect(),
    )
}

pub fn add(a: &[Mono], b: &[Mono]) -> Poly {
    simplify(a.iter().chain(b).copied().collect())
}

/// Merges equal monomials and drops vanishing ones.
pub fn simplify(terms: Poly) -> Poly {
    let mut acc: BTreeMap<(Option<(usize, usize)>, u32, u32), C64> = BTreeMap::new();
    for m in terms {
        *acc.entry(m.key()).or_insert(C64::new(0.0, 0.0)) += m.coeff;
    }
    acc.into_iter()
        .filter(|(_, c)| c.norm() > 1e-300)
        .map(|((sigma, create, destroy), coeff)| Mono {
            coeff,
            sigma,
            create,
            destroy,
        })
        .collect()
}

/// Adjoint (Heisenberg-picture) generator of the master equation applied to
/// `o`: i[H, O] + Σ_c (c†Oc − ½{c†c, O}).
pub fn heisenberg(h: &[Mono], channels: &[Poly], o: &[Mono]) -> Poly {
    let i = C64::new(0.0, 1.0);
    let mut out = scale(&add(&mul(h, o), &scale(&mul(o, h), -1.0)), i);
    for c in channels {
        let cd = adjoint(c);
        let cdc = mul(&cd, c);
        out = add(&out, &mul(&mul(&cd, o), c));
        out = add(&out, &scale(&add(&mul(&cdc, o), &mul(o, &cdc)), -0.5));
    }
    out
}

/// Matrix of a polynomial on `space`, with the atomic factor at
/// `atom_index` and the field mode at `mode_index`.
pub fn materialize(poly: &[Mono], space: &Arc<HilbertSpace>, atom_index: usize, mode_index: usize) -> Result<Operator> {
    let dims = space.dims();
    let d = space.total_dim();
    let n_max = dims[mode_index] - 1;
    let mut triplets = Vec::new();
    for col in 0..d {
        let parts = space.split(col);
        for m in poly {
            let mut row_parts = parts.clone();
            if let Some((k, l)) = m.sigma {
                if parts[atom_index] != l {
                    continue;
                }
                row_parts[atom_index] = k;
            }
            let n = parts[mode_index];
            if (n as u32) < m.destroy {
                continue;
            }
            let mid = n - m.destroy as usize;
            let out = mid + m.create as usize;
            if out > n_max {
                continue;
            }
            // a^q|n⟩ = sqrt(n!/(n-q)!)|n-q⟩, a†^p|m⟩ = sqrt((m+p)!/m!)|m+p⟩
            let mut amp = 1.0;
            for k in (mid + 1)..=n {
                amp *= (k as f64).sqrt();
            }
            for k in (mid + 1)..=out {
                amp *= (k as f64).sqrt();
            }
            row_parts[mode_index] = out;
            triplets.push((space.index(&row_parts), col, m.coeff * amp));
        }
    }
    Operator::new(space.clone(), SparseMatrix::from_triplets(d, d, triplets))
}
