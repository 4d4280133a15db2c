//! Dense reference constructions shared by the test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use oneatom::fourstate::{build_four_state, build_raman_variant, FourStateParams};
use oneatom::hilbert::DensityMatrix;
use oneatom::model::ModelSpec;
use oneatom::C64;

pub fn dense_op(m: &oneatom::hilbert::SparseMatrix) -> DMatrix<C64> {
    let (r, c) = m.shape();
    DMatrix::from_row_slice(r, c, &m.to_dense())
}

/// Textbook Lindblad superoperator for row-major vec(ρ):
/// vec(AρB) = (A ⊗ Bᵀ) vec ρ.
pub fn textbook_liouvillian(model: &ModelSpec) -> DMatrix<C64> {
    let d = model.dim();
    let id = DMatrix::<C64>::identity(d, d);
    let h = dense_op(model.constant_hamiltonian().unwrap().matrix());
    let mi = C64::new(0.0, -1.0);
    let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * mi;
    for ch in model.channels() {
        let c = dense_op(ch.op.matrix());
        let cdc = c.adjoint() * &c;
        l += c.kronecker(&c.map(|z| z.conj()));
        l -= (cdc.kronecker(&id) + id.kronecker(&cdc.transpose())) * C64::new(0.5, 0.0);
    }
    l
}

/// Unit-trace null vector of the dense Liouvillian from its SVD, with the
/// two smallest singular values.
pub fn dense_steady(model: &ModelSpec) -> (DMatrix<C64>, f64, f64) {
    let d = model.dim();
    let l = textbook_liouvillian(model);
    let svd = l.svd(false, true);
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let vt = svd.v_t.unwrap();
    let v: DVector<C64> = vt.row(order[0]).transpose().map(|z| z.conj());
    let rho = DMatrix::from_row_slice(d, d, v.as_slice());
    let tr = rho.trace();
    (rho / tr, sv[order[0]], sv[order[1]])
}

pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let diff = a - b;
    let herm = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    0.5 * herm.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}

pub fn to_dense_rho(rho: &DensityMatrix) -> DMatrix<C64> {
    DMatrix::from_row_slice(rho.dim(), rho.dim(), rho.data())
}

/// Every model of the library with Hilbert dimension ≤ 32 at a few
/// operating points.
pub fn small_models() -> Vec<(String, ModelSpec)> {
    let mut out = Vec::new();
    for n in [1usize, 3, 7] {
        for (i3, i4) in [(0.5, 3.0), (3.0, 3.0), (20.0, 1.0)] {
            let p = FourStateParams::cs_defaults().with_intensities(i3, i4).with_truncation(n);
            out.push((format!("four-state N={n} I3={i3} I4={i4}"), build_four_state(&p).unwrap()));
        }
        let mut p = FourStateParams::cs_defaults().with_intensities(2.0, 3.0).with_truncation(n);
        p.delta3 = oneatom::units::mhz(5.0);
        p.delta_ac = oneatom::units::mhz(-3.0);
        out.push((format!("four-state detuned N={n}"), build_four_state(&p).unwrap()));
        let p = FourStateParams::cs_defaults().with_intensities(2.0, 3.0).with_truncation(n);
        out.push((format!("raman N={n}"), build_raman_variant(&p, 0.07).unwrap()));
    }
    out
}
