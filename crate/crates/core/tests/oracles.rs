mod common;

use common::*;
use oneatom::liouvillian::liouvillian;
use oneatom::steady::steady_state;

#[test]
fn generator_matches_textbook_construction() {
    for (name, model) in small_models() {
        let ours = dense_op(&liouvillian(&model).unwrap().matrix);
        let want = textbook_liouvillian(&model);
        let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let worst = (&ours - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-12 * scale.max(1.0), "{name}: {worst:e}");
    }
}

#[test]
fn sparse_steady_state_matches_dense_null_vector() {
    for (name, model) in small_models() {
        let (dense, s0, s1) = dense_steady(&model);
        assert!(s0 < 1e-9 * s1, "{name}: null space not one-dimensional ({s0:e}, {s1:e})");
        let sparse = to_dense_rho(&steady_state(&model).unwrap());
        let td = trace_distance(&sparse, &dense);
        assert!(td < 1e-9, "{name}: trace distance {td:e}");
    }
}
