//! Steady states of time-independent models and the observables derived
//! from them.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourstate::{beta_43, critical_numbers, FourStateParams};
use crate::hilbert::{DensityMatrix, SparseMatrix};
use crate::linalg::{hermitian_eigen, SparseLu};
use crate::liouvillian::{local_map, Generator};
use crate::model::ModelSpec;

/// Residual bound relative to ‖L‖·‖ρ‖ accepted from the direct solve.
const RESIDUAL_TOL: f64 = 1e-10;
/// Eigenvalues in [−NEG_TOL, 0) are treated as rounding noise.
const NEG_TOL: f64 = 1e-10;
const CLIP_MASS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    DirectLu,
    InverseIteration,
}

#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub rho: DensityMatrix,
    /// ‖Lρ‖ / (‖L‖·‖ρ‖) on the invariant block.
    pub residual: f64,
    pub clipped_mass: f64,
    pub method: SolveMethod,
    /// Number of unknowns actually solved for.
    pub unknowns: usize,
}

/// Invariant block of the generator that contains all populations.
struct Block {
    gen: Generator,
    indices: Vec<usize>,
    matrix: SparseMatrix,
    diag_local: Vec<usize>,
}

impl Block {
    fn new(model: &ModelSpec) -> Result<Self> {
        let gen = Generator::new(model)?;
        let d = gen.dim();
        let seeds: Vec<usize> = (0..d).map(|i| i * d + i).collect();
        let indices = gen.closure(&seeds);
        let local = local_map(&indices, d * d);
        let matrix = gen.restricted_matrix(&indices, &local);
        let diag_local = seeds.iter().map(|&s| local[s]).collect();
        Ok(Self {
            gen,
            indices,
            matrix,
            diag_local,
        })
    }

    fn dim(&self) -> usize {
        self.gen.dim()
    }

    /// Solves L x = 0 with Σ x_ii = 1 imposed in place of the diagonal row `k`.
    fn solve_replacing(&self, k: usize) -> Result<Vec<C64>> {
        let row = self.diag_local[k];
        let n = self.indices.len();
        let one = C64::new(1.0, 0.0);
        let triplets = self
            .matrix
            .iter()
            .filter(|&(r, _, _)| r != row)
            .chain(self.diag_local.iter().map(|&c| (row, c, one)));
        let m = SparseMatrix::from_triplets(n, n, triplets);
        let lu = SparseLu::new(&m)?;
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        rhs[row] = one;
        let mut x = lu.solve(&rhs);
        // one step of iterative refinement
        let mut r = vec![C64::new(0.0, 0.0); n];
        m.matvec(&x, &mut r);
        r.iter_mut().zip(&rhs).for_each(|(ri, bi)| *ri = bi - *ri);
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        Ok(x)
    }

    fn residual(&self, x: &[C64]) -> f64 {
        let mut r = vec![C64::new(0.0, 0.0); x.len()];
        self.matrix.matvec(x, &mut r);
        norm(&r) / (self.matrix.frobenius_norm() * norm(x)).max(f64::MIN_POSITIVE)
    }

    fn trace(&self, x: &[C64]) -> C64 {
        self.diag_local.iter().map(|&k| x[k]).sum()
    }

    /// Inverse iteration with a small negative shift; the conserved
    /// components of `x0` survive, all decaying ones are suppressed.
    fn inverse_iteration(&self, x0: Vec<C64>) -> Result<Vec<C64>> {
        let n = self.indices.len();
        let eps = 1e-9 * self.matrix.frobenius_norm().max(1.0);
        let shifted = self.matrix.add(&SparseMatrix::identity(n).scale(C64::new(eps, 0.0)));
        let lu = SparseLu::new(&shifted)?;
        let mut x = x0;
        for _ in 0..6 {
            x = lu.solve(&x);
            let t = self.trace(&x);
            if !(t.norm() > 0.0 && t.norm().is_finite()) {
                return Err(Error::Solver("inverse iteration lost the trace".into()));
            }
            x.iter_mut().for_each(|z| *z /= t);
        }
        Ok(x)
    }

    fn seed(&self, weights: impl Fn(usize) -> f64) -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); self.indices.len()];
        let total: f64 = (0..self.dim()).map(&weights).sum();
        for i in 0..self.dim() {
            x[self.diag_local[i]] = C64::new(weights(i) / total, 0.0);
        }
        x
    }

    fn to_dense(&self, x: &[C64]) -> Vec<C64> {
        let d = self.dim();
        let mut rho = vec![C64::new(0.0, 0.0); d * d];
        for (k, &g) in self.indices.iter().enumerate() {
            rho[g] = x[k];
        }
        rho
    }
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    d / norm(a).max(f64::MIN_POSITIVE)
}

fn all_finite(x: &[C64]) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Unique steady state ρ with L(ρ) = 0 and Tr ρ = 1.
pub fn steady_state(model: &ModelSpec) -> Result<DensityMatrix> {
    Ok(steady_state_detailed(model)?.rho)
}

pub fn steady_state_detailed(model: &ModelSpec) -> Result<SteadySolution> {
    let block = Block::new(model)?;
    let d = block.dim();
    let direct = (|| -> Result<Option<Vec<C64>>> {
        let x1 = block.solve_replacing(0)?;
        let x2 = block.solve_replacing(d - 1)?;
        if all_finite(&x1) && all_finite(&x2) && rel_diff(&x1, &x2) < 1e-7 && block.residual(&x1) <= RESIDUAL_TOL {
            Ok(Some(x1))
        } else {
            Ok(None)
        }
    })();

    let (x, method) = match direct {
        Ok(Some(x)) => (x, SolveMethod::DirectLu),
        _ => {
            let last = d - 1;
            let candidates = [
                block.inverse_iteration(block.seed(|_| 1.0))?,
                block.inverse_iteration(block.seed(|i| if i == 0 { 1.0 } else { 0.0 }))?,
                block.inverse_iteration(block.seed(|i| if i == last { 1.0 } else { 0.0 }))?,
            ];
            if candidates[1..].iter().any(|c| rel_diff(&candidates[0], c) > 1e-6) {
                return Err(degenerate(model, &block, &candidates));
            }
            let x = candidates.into_iter().next().unwrap();
            if block.residual(&x) > 1e3 * RESIDUAL_TOL {
                return Err(Error::Solver(format!(
                    "steady-state residual {:.3e} after inverse iteration",
                    block.residual(&x)
                )));
            }
            (x, SolveMethod::InverseIteration)
        }
    };
    let residual = block.residual(&x);
    let (rho, clipped_mass) = repair_positivity(d, block.to_dense(&x))?;
    Ok(SteadySolution {
        rho: DensityMatrix::from_dense(model.space(), rho)?,
        residual,
        clipped_mass,
        method,
        unknowns: block.indices.len(),
    })
}

fn degenerate(model: &ModelSpec, block: &Block, candidates: &[Vec<C64>]) -> Error {
    let space = model.space();
    let atom = model.atom_index();
    let levels = model.level_labels();
    let pops = |x: &[C64]| {
        let mut p = vec![0.0; levels.len()];
        for (i, &k) in block.diag_local.iter().enumerate() {
            p[space.split(i)[atom]] += x[k].re;
        }
        p
    };
    let reference = pops(&candidates[0]);
    let mut differing = Vec::new();
    for c in &candidates[1..] {
        for (k, v) in pops(c).iter().enumerate() {
            if (v - reference[k]).abs() > 1e-6 && !differing.contains(&levels[k]) {
                differing.push(levels[k].clone());
            }
        }
    }
    Error::DegenerateSteadyState { levels: differing }
}

/// Hermitizes, then clips small negative eigenvalues block by block.
fn repair_positivity(d: usize, mut rho: Vec<C64>) -> Result<(Vec<C64>, f64)> {
    for i in 0..d {
        for j in i..d {
            let h = 0.5 * (rho[i * d + j] + rho[j * d + i].conj());
            rho[i * d + j] = h;
            rho[j * d + i] = h.conj();
        }
    }
    let mut clipped = 0.0;
    for comp in components(d, &rho) {
        let n = comp.len();
        let sub: Vec<C64> = comp
            .iter()
            .flat_map(|&i| comp.iter().map(move |&j| (i, j)))
            .map(|(i, j)| rho[i * d + j])
            .collect();
        let (vals, vecs) = hermitian_eigen(n, &sub)?;
        if vals[0] >= 0.0 {
            continue;
        }
        if vals[0] < -NEG_TOL {
            return Err(Error::Positivity(-vals[0]));
        }
        clipped += vals.iter().filter(|&&v| v < 0.0).map(|v| -v).sum::<f64>();
        for (a, &i) in comp.iter().enumerate() {
            for (b, &j) in comp.iter().enumerate() {
                rho[i * d + j] = (0..n)
                    .filter(|&k| vals[k] > 0.0)
                    .map(|k| vecs[a * n + k] * vals[k] * vecs[b * n + k].conj())
                    .sum();
            }
        }
    }
    if clipped > CLIP_MASS_TOL {
        return Err(Error::Positivity(clipped));
    }
    let tr: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    rho.iter_mut().for_each(|z| *z /= tr);
    Ok((rho, clipped))
}

/// Connected components of the support graph of a Hermitian matrix.
fn components(d: usize, rho: &[C64]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..d {
        for j in (i + 1)..d {
            if rho[i * d + j] != C64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..d {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Rates needed to turn expectation values into R and β43.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FluxRates {
    pub kappa: f64,
    pub gamma43: f64,
    pub beta_43: f64,
}

impl FluxRates {
    pub fn from_params(p: &FourStateParams) -> Result<Self> {
        Ok(Self {
            kappa: p.kappa,
            gamma43: p.gamma43(),
            beta_43: beta_43(p)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyObservables {
    /// Mean photon number per cavity mode, in mode order.
    pub n_modes: Vec<f64>,
    /// Mode average (n̄_a + n̄_b)/2; equals n̄_a for one mode.
    pub n_bar: f64,
    pub populations: BTreeMap<String, f64>,
    /// `None` when the cavity is empty.
    pub mandel_q: Option<f64>,
    pub g2_0: Option<f64>,
    pub ratio_r: Option<f64>,
    pub beta_43: f64,
}

/// Photon-number distribution of the summed cavity modes.
pub fn photon_distribution(rho: &DensityMatrix, model: &ModelSpec) -> Vec<f64> {
    let space = model.space();
    let max: usize = model.modes().iter().map(|&m| space.factor(m).dim() - 1).sum();
    let mut p = vec![0.0; max + 1];
    for (k, pop) in rho.populations().into_iter().enumerate() {
        let parts = space.split(k);
        let n: usize = model.modes().iter().map(|&m| parts[m]).sum();
        p[n] += pop;
    }
    p
}

pub fn observables(rho: &DensityMatrix, model: &ModelSpec, rates: &FluxRates) -> Result<SteadyObservables> {
    let mut n_modes = Vec::new();
    for name in model.mode_names() {
        n_modes.push(rho.expect(model.observable(&format!("n_{name}"))?)?.re);
    }
    let n_bar = n_modes.iter().sum::<f64>() / n_modes.len().max(1) as f64;
    let mut populations = BTreeMap::new();
    let pops = rho.factor_populations(model.atom_index());
    for (label, p) in model.level_labels().into_iter().zip(pops) {
        populations.insert(label, p);
    }

    let dist = photon_distribution(rho, model);
    let m1: f64 = dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let m2: f64 = dist.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum();
    let fact2: f64 = dist.iter().enumerate().map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p).sum();
    let (mandel_q, g2_0) = if m1 > 0.0 {
        (Some((m2 - m1 * m1) / m1 - 1.0), Some(fact2 / (m1 * m1)))
    } else {
        (None, None)
    };
    let ratio_r = populations
        .get("e3")
        .filter(|&&s| s > 0.0)
        .map(|&s| rates.kappa * n_bar / (rates.gamma43 * s));
    Ok(SteadyObservables {
        n_modes,
        n_bar,
        populations,
        mandel_q,
        g2_0,
        ratio_r,
        beta_43: rates.beta_43,
    })
}

/// Controls of the adaptive Fock truncation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Truncation {
    /// Start value; `None` picks max(15, ⌈3·n0f + 10⌉).
    pub start: Option<usize>,
    /// Largest top-state population tolerated before growing.
    pub tail_tol: f64,
    /// Relative change of n̄, Q and g²(0) accepted when adding 5 states.
    pub rel_tol: f64,
    pub max: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            start: None,
            tail_tol: 1e-10,
            rel_tol: 1e-3,
            max: 600,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveSolution {
    pub solution: SteadySolution,
    pub observables: SteadyObservables,
    pub truncation: usize,
    pub model: ModelSpec,
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol * x.abs().max(y.abs()) || (x - y).abs() < 1e-13,
        (None, None) => true,
        _ => false,
    }
}

/// Solves the model built by `build` from `p`, growing the Fock space until
/// the top state is empty and five extra states change nothing.
pub fn solve_adaptive<F>(p: &FourStateParams, build: F, cfg: &Truncation) -> Result<AdaptiveSolution>
where
    F: Fn(&FourStateParams) -> Result<ModelSpec>,
{
    let rates = FluxRates::from_params(p)?;
    let n0f = critical_numbers(p)?.n0;
    let mut n = cfg.start.unwrap_or_else(|| 15.max((3.0 * n0f + 10.0).ceil() as usize));
    let solve = |n: usize| -> Result<AdaptiveSolution> {
        let q = p.clone().with_truncation(n);
        let model = build(&q)?;
        let solution = steady_state_detailed(&model)?;
        let observables = observables(&solution.rho, &model, &rates)?;
        Ok(AdaptiveSolution {
            solution,
            observables,
            truncation: n,
            model,
        })
    };
    let mut current = solve(n)?;
    loop {
        let tail = *photon_distribution(&current.solution.rho, &current.model).last().unwrap();
        if tail <= cfg.tail_tol || n >= cfg.max {
            break;
        }
        n = ((n as f64) * 1.5).ceil() as usize;
        n = n.min(cfg.max);
        current = solve(n)?;
    }
    loop {
        if n + 5 > cfg.max {
            return Ok(current);
        }
        let next = solve(n + 5)?;
        let a = &current.observables;
        let b = &next.observables;
        if close(Some(a.n_bar), Some(b.n_bar), cfg.rel_tol)
            && close(a.mandel_q, b.mandel_q, cfg.rel_tol)
            && close(a.g2_0, b.g2_0, cfg.rel_tol)
        {
            return Ok(next);
        }
        n += 5;
        current = next;
    }
}

/// One row of an intensity scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanPoint {
    pub i3: f64,
    pub observables: SteadyObservables,
    pub truncation: usize,
    /// n̄ / n0 of the scanned parameters.
    pub n_over_n0f: f64,
}

/// Steady states over a grid of I3 at fixed I4, solved in parallel.
pub fn q_scan<F>(p: &FourStateParams, i3_grid: &[f64], i4: f64, build: F, cfg: &Truncation) -> Vec<Result<ScanPoint>>
where
    F: Fn(&FourStateParams) -> Result<ModelSpec> + Sync,
{
    i3_grid
        .par_iter()
        .map(|&i3| {
            let q = p.clone().with_intensities(i3, i4);
            let n0f = critical_numbers(&q)?.n0;
            let sol = solve_adaptive(&q, &build, cfg)?;
            Ok(ScanPoint {
                i3,
                n_over_n0f: sol.observables.n_bar / n0f,
                observables: sol.observables,
                truncation: sol.truncation,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourstate::{build_four_state, FourStateParams};

    #[test]
    fn pumping_into_uncoupled_ground_state() {
        let mut p = FourStateParams::cs_defaults().with_intensities(0.0, 3.0);
        p.fock_truncation = 3;
        let m = build_four_state(&p).unwrap();
        let rho = steady_state(&m).unwrap();
        let s = m.space();
        assert!((rho.get(s.index(&[0, 0]), s.index(&[0, 0])).re - 1.0).abs() < 1e-10);
        let obs = observables(&rho, &m, &FluxRates::from_params(&p).unwrap()).unwrap();
        assert!(obs.n_bar.abs() < 1e-12);
        assert_eq!(obs.g2_0, None);
    }

    #[test]
    fn drives_off_is_degenerate() {
        let p = FourStateParams::cs_defaults().with_truncation(2);
        let m = build_four_state(&p).unwrap();
        match steady_state(&m) {
            Err(Error::DegenerateSteadyState { levels }) => {
                assert!(levels.contains(&"g3".to_string()) && levels.contains(&"g4".to_string()), "{levels:?}");
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn lasing_point_is_physical() {
        let p = FourStateParams::cs_defaults().with_intensities(3.0, 3.0).with_truncation(12);
        let m = build_four_state(&p).unwrap();
        let sol = steady_state_detailed(&m).unwrap();
        assert_eq!(sol.method, SolveMethod::DirectLu);
        assert!(sol.residual < 1e-10);
        assert!((sol.rho.trace().re - 1.0).abs() < 1e-12);
        let obs = observables(&sol.rho, &m, &FluxRates::from_params(&p).unwrap()).unwrap();
        let q = obs.mandel_q.unwrap();
        let g2 = obs.g2_0.unwrap();
        assert!((q - obs.n_bar * (g2 - 1.0)).abs() < 1e-8);
        let total: f64 = obs.populations.values().sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}
